#ifndef ADVT_EVAL_HPP
#define ADVT_EVAL_HPP

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "advt/crafting.hpp"
#include "advt/dataset.hpp"
#include "advt/models.hpp"
#include "advt/oracle.hpp"
#include "advt/substitute.hpp"

namespace advt {

enum class RateMode {
  kMisclassification,  // target(x*) != true label
  kPredictionChange,   // target(x) != target(x*)
};

// Qualifying records over all records. Throws ContractError on an empty batch
// or a dimension mismatch.
double transfer_rate(const CraftBatch& batch, const Model& target, RateMode mode);

struct EpsilonConfig {
  double fgsm = 0.25;
  double svm = 5.0;

  static EpsilonConfig cross_defaults() { return {0.25, 5.0}; }
  static EpsilonConfig intra_defaults() { return {0.3, 1.5}; }
  double for_method(Method method) const;
};

struct TransferRow {
  std::string source;
  Method method = Method::kFgsm;
  double epsilon = 0.0;
  double mean_l1_fraction = 0.0;
  std::size_t crafted = 0;  // records the crafting algorithm actually moved
};

struct TransferReport {
  std::string kind;  // "intra" or "cross"
  std::uint64_t seed = 0;
  std::size_t samples = 0;
  std::vector<TransferRow> rows;
  std::vector<std::string> targets;
  std::vector<std::vector<double>> misclassification;  // rows x targets
  std::vector<std::vector<double>> prediction_change;

  std::vector<double> column_means() const;
};

// Five models of one family, one per disjoint training part; cell (i, j) is
// the misclassification rate on model j of samples crafted on model i.
TransferReport intra_matrix(const std::vector<std::shared_ptr<const Model>>& models,
                            const Dataset& test,
                            EpsilonConfig epsilon = EpsilonConfig::intra_defaults());

// Models in technique order net, logreg, svm, tree, knn. Columns are the same
// five plus their ensemble; the ensemble has no row.
TransferReport cross_matrix(const std::vector<std::shared_ptr<const Model>>& models,
                            const Dataset& test,
                            EpsilonConfig epsilon = EpsilonConfig::cross_defaults());

inline constexpr Family kCrossOrder[] = {Family::kNet, Family::kLogReg, Family::kSvm,
                                         Family::kTree, Family::kKnn};

// Helpers shared by the CLI, the acceptance suite and the bindings.
std::vector<std::shared_ptr<const Model>> train_intra_models(Family family, const Dataset& train,
                                                             std::size_t parts,
                                                             std::size_t part_size,
                                                             std::uint64_t seed);
std::vector<std::shared_ptr<const Model>> train_cross_models(const Dataset& train,
                                                             std::uint64_t seed);

struct AttackReport {
  SubstituteConfig config;
  double epsilon = 0.0;
  std::size_t initial_size = 0;
  std::size_t probe_size = 0;
  std::uint64_t substitute_queries = 0;
  bool budget_exhausted = false;
  std::vector<IterationMetrics> iterations;
  double oracle_baseline_error = 0.0;      // oracle label != true label on clean probes
  double oracle_misclassification = 0.0;   // same on the crafted probes
  double substitute_misclassification = 0.0;
  double mean_l1_fraction = 0.0;
};

// Trains a substitute against `attack_oracle` from the `initial` inputs, then
// crafts on every probe (FGSM, or the SVM attack for SVM substitutes) and asks
// `eval_oracle` to label the clean and crafted probes. The two handles may
// point at the same backend; keeping them apart keeps the attack's own query
// count clean. Budget exhaustion during training still crafts with the
// substitute reached so far and flags the report.
AttackReport blackbox_attack(Oracle& attack_oracle, Oracle& eval_oracle, const Features& initial,
                             const Dataset& probe, const SubstituteConfig& config,
                             double epsilon);

// Report documents: fixed key order, rates and other reals with 6 decimals.
nlohmann::ordered_json to_report(const TransferReport& report);
nlohmann::ordered_json to_report(const AttackReport& report);
nlohmann::ordered_json to_report(const SubstituteState& state, const SubstituteConfig& config);
TransferReport transfer_report_from(const nlohmann::json& doc);
AttackReport attack_report_from(const nlohmann::json& doc);

std::string format_report(const nlohmann::ordered_json& doc);
void emit_report(const nlohmann::ordered_json& doc, const std::filesystem::path& path);
nlohmann::json load_report(const std::filesystem::path& path);

}  // namespace advt

#endif  // ADVT_EVAL_HPP
