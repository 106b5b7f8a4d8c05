#ifndef ADVT_SUBSTITUTE_HPP
#define ADVT_SUBSTITUTE_HPP

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "advt/dataset.hpp"
#include "advt/models.hpp"
#include "advt/oracle.hpp"

namespace advt {

struct SubstituteConfig {
  Family family = Family::kLogReg;  // net, logreg or svm
  double lambda = 0.1;
  int tau = 3;
  int sigma = 3;
  int kappa = 400;
  int rho_max = 10;
  bool periodic_step = false;
  bool reservoir = false;
  // Drop augmented points identical to a point already in the set (or to an
  // earlier new point) before asking the oracle. Breaks the query-count law.
  bool dedup = false;
  int max_in_flight = 1;
  std::uint64_t seed = 0;
  std::optional<Hyperparams> hyperparams;  // family defaults when empty

  // Throws ContractError on out-of-range values.
  void validate() const;
};

struct IterationMetrics {
  int rho = 0;
  std::size_t set_size = 0;
  std::uint64_t queries = 0;  // oracle labels requested so far by this run
  double agreement = 0.0;     // on the probe set
  std::size_t duplicates_dropped = 0;
  std::size_t skipped = 0;  // SVM points with a zero-norm hyperplane
};

struct SubstituteState {
  Dataset set;  // S_rho with oracle labels
  int rho = 0;
  std::shared_ptr<const Model> model;  // trained on `set`
  std::vector<IterationMetrics> history;
  std::uint64_t queries = 0;
  bool budget_exhausted = false;
};

// lambda * (-1)^floor(rho / tau)
double step_size(double lambda, int tau, int rho);

// Labels the oracle would need for a run that ends with a substitute trained
// on S_rho: n * 2^rho, or n * 2^sigma + kappa * (rho - sigma) with the
// reservoir. A reservoir step with kappa above the current set size falls
// back to a full step, and the count follows suit.
std::uint64_t query_count(std::uint64_t n, int sigma, std::uint64_t kappa, int rho,
                          bool reservoir);

// Returns a uniform integer in [0, hi].
using IndexRng = std::function<std::size_t(std::size_t hi)>;

// Reservoir selection over an array of n items. Slot s of the result holds the
// index of the item whose augmentation ends up at position n + s. Slots start
// as items 0..kappa-1; item i >= kappa replaces slot r = rng(i) when r < kappa.
std::vector<std::size_t> reservoir_select(std::size_t n, std::size_t kappa, const IndexRng& rng);

// x + lambda_rho * sgn(J_f[y]) for every row, clipped to [0, 1]. y is the
// stored oracle label of the row.
Features jacobian_points(const Model& substitute, const Dataset& set, double lambda_rho);

// x - lambda * w[y] / ||w[y]|| for every row, clipped. Rows whose hyperplane
// has zero norm are skipped and counted in `skipped`.
Features svm_points(const LinearSvm& substitute, const Dataset& set, double lambda,
                    std::size_t* skipped = nullptr);

// The three augmentation rules. Each returns S_rho followed by the new,
// oracle-labeled points; the oracle is asked exactly once per new point.
Dataset jacobian_augment(const Model& substitute, const Dataset& set, Oracle& oracle,
                         double lambda_rho);
// Falls back to jacobian_augment when kappa > |set|.
Dataset reservoir_augment(const Model& substitute, const Dataset& set, Oracle& oracle,
                          double lambda_rho, std::size_t kappa, const IndexRng& rng);
Dataset svm_augment(const Model& substitute, const Dataset& set, Oracle& oracle, double lambda,
                    std::size_t* skipped = nullptr);

// Runs iterations rho = 0 .. rho_max - 1 (train, measure, augment) and then
// trains the final substitute on S_rho_max, so the oracle sees exactly
// query_count(n, sigma, kappa, rho_max, reservoir) queries. `probe_labels`
// are the oracle's labels for `probe`, obtained outside this run's budget.
// When the oracle runs out of budget the state reached so far is returned
// with budget_exhausted set.
SubstituteState train_substitute(Oracle& oracle, const Features& initial, const Features& probe,
                                 std::span<const int> probe_labels, const SubstituteConfig& config);

// Share of probe rows where the model's label equals the reference label.
double agreement(const Model& model, const Features& probe, std::span<const int> labels);
// Same, asking the oracle for the reference labels (counted queries).
double agreement(const Model& model, Oracle& oracle, const Features& probe);

}  // namespace advt

#endif  // ADVT_SUBSTITUTE_HPP
