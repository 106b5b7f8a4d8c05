#include <doctest.h>

#include <fstream>
#include <sstream>

#include "advt/eval.hpp"
#include "advt/oracle.hpp"
#include "support.hpp"

using namespace advt;
using advt::testing::TempDir;

namespace {

struct Shared {
  TrainTest tt = advt::testing::small_split(1500, 200);
  std::vector<std::shared_ptr<const Model>> cross = train_cross_models(tt.train, 3);
};

const Shared& shared() {
  static const Shared s;
  return s;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("zero perturbation never changes a prediction") {
  const auto& s = shared();
  const CraftBatch b = craft_batch(*s.cross[1], s.tt.test, Method::kFgsm, 0.0);
  for (const auto& m : s.cross) CHECK(transfer_rate(b, *m, RateMode::kPredictionChange) == 0.0);
  const double err = 1.0 - accuracy(*s.cross[0], s.tt.test);
  CHECK(transfer_rate(b, *s.cross[0], RateMode::kMisclassification) == doctest::Approx(err));
}

TEST_CASE("transfer rates recount by hand") {
  const auto& s = shared();
  const CraftBatch b = craft_batch(*s.cross[0], s.tt.test, Method::kFgsm, 0.25);
  for (const auto& target : s.cross) {
    std::size_t mis = 0, changed = 0;
    for (const auto& r : b.records) {
      const int adv = predict(*target, r.x_adv);
      mis += adv != r.true_label ? 1 : 0;
      changed += adv != predict(*target, r.x) ? 1 : 0;
    }
    const double n = static_cast<double>(b.records.size());
    CHECK(transfer_rate(b, *target, RateMode::kMisclassification) == static_cast<double>(mis) / n);
    CHECK(transfer_rate(b, *target, RateMode::kPredictionChange) == static_cast<double>(changed) / n);
  }
  CraftBatch empty;
  CHECK_THROWS_AS(transfer_rate(empty, *s.cross[0], RateMode::kMisclassification), ContractError);
}

TEST_CASE("both rate modes agree on a target that is always right on clean inputs") {
  const auto& s = shared();
  const Model perfect = KnnModel(s.tt.test.x, s.tt.test.y, 10, 1);
  CHECK(accuracy(perfect, s.tt.test) == 1.0);
  const CraftBatch b = craft_batch(*s.cross[1], s.tt.test, Method::kFgsm, 0.25);
  CHECK(transfer_rate(b, perfect, RateMode::kMisclassification) ==
        transfer_rate(b, perfect, RateMode::kPredictionChange));
}

TEST_CASE("cross matrix shape and ensemble column") {
  const auto& s = shared();
  const TransferReport r = cross_matrix(s.cross, s.tt.test);
  CHECK(r.kind == "cross");
  CHECK(r.targets == std::vector<std::string>{"net", "logreg", "svm", "tree", "knn", "ensemble"});
  REQUIRE(r.rows.size() == 5);
  CHECK(r.rows[2].method == Method::kSvm);
  CHECK(r.rows[2].epsilon == 5.0);
  CHECK(r.rows[3].method == Method::kTree);
  CHECK(r.rows[0].epsilon == 0.25);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(r.misclassification[i].size() == 6);
    CHECK(r.prediction_change[i].size() == 6);
    for (double v : r.misclassification[i]) CHECK((v >= 0.0 && v <= 1.0));
  }

  // Column 6 recomputed from the five expert votes.
  const Method m = default_method(Family::kLogReg);
  const CraftBatch b = craft_batch(*s.cross[1], s.tt.test, m, 0.25);
  std::size_t mis = 0;
  for (const auto& rec : b.records) {
    std::vector<int> votes;
    for (const auto& e : s.cross) votes.push_back(predict(*e, rec.x_adv));
    mis += Ensemble::vote(votes, 10) != rec.true_label ? 1 : 0;
  }
  CHECK(r.misclassification[1][5] == static_cast<double>(mis) / static_cast<double>(b.records.size()));

  const auto means = r.column_means();
  double col0 = 0.0;
  for (const auto& row : r.misclassification) col0 += row[0];
  CHECK(means[0] == doctest::Approx(col0 / 5.0));

  auto shuffled = s.cross;
  std::swap(shuffled[0], shuffled[1]);
  CHECK_THROWS_AS(cross_matrix(shuffled, s.tt.test), ContractError);
  shuffled.pop_back();
  CHECK_THROWS_AS(cross_matrix(shuffled, s.tt.test), ContractError);
}

TEST_CASE("intra matrix with zero epsilon changes nothing") {
  const auto& s = shared();
  const auto models = train_intra_models(Family::kLogReg, s.tt.train, 3, 400, 9);
  const TransferReport r = intra_matrix(models, s.tt.test, {0.0, 0.0});
  CHECK(r.targets == std::vector<std::string>{"logreg-A", "logreg-B", "logreg-C"});
  for (const auto& row : r.prediction_change) {
    for (double v : row) CHECK(v == 0.0);
  }
  const std::vector<std::shared_ptr<const Model>> mixed{models[0], s.cross[0]};
  CHECK_THROWS_AS(intra_matrix(mixed, s.tt.test), ContractError);
}

TEST_CASE("rates print with six decimals") {
  nlohmann::ordered_json doc;
  doc["rate"] = 0.96185;
  doc["count"] = 3;
  doc["row"] = {0.5, 1.0 / 3.0};
  CHECK(format_report(doc) == "{\n  \"rate\": 0.961850,\n  \"count\": 3,\n  \"row\": [0.500000, 0.333333]\n}\n");
}

TEST_CASE("transfer reports round trip byte for byte and are deterministic") {
  const auto& s = shared();
  TempDir dir("report");
  TransferReport r = cross_matrix(s.cross, s.tt.test);
  r.seed = 3;
  emit_report(to_report(r), dir / "a.json");
  const TransferReport back = transfer_report_from(load_report(dir / "a.json"));
  CHECK(back.rows.size() == 5);
  CHECK(back.misclassification[2][4] == doctest::Approx(r.misclassification[2][4]).epsilon(1e-6));
  emit_report(to_report(back), dir / "b.json");
  CHECK(slurp(dir / "a.json") == slurp(dir / "b.json"));

  TransferReport again = cross_matrix(train_cross_models(s.tt.train, 3), s.tt.test);
  again.seed = 3;
  emit_report(to_report(again), dir / "c.json");
  CHECK(slurp(dir / "a.json") == slurp(dir / "c.json"));

  const std::string text = slurp(dir / "a.json");
  CHECK(text.rfind("{\n  \"format\": \"advt-report\",\n  \"version\": 1,\n  \"kind\": \"cross\"", 0) == 0);
}

TEST_CASE("report IO errors") {
  TempDir dir("report-bad");
  nlohmann::ordered_json doc{{"a", 1}};
  CHECK_THROWS_AS(emit_report(doc, dir / "missing-dir" / "r.json"), IoError);
  CHECK_THROWS_AS(load_report(dir / "nothing.json"), IoError);
  std::ofstream(dir / "bad.json") << "{";
  CHECK_THROWS_AS(load_report(dir / "bad.json"), FormatError);
  CHECK_THROWS_AS(transfer_report_from(nlohmann::json{{"format", "x"}}), FormatError);
  CHECK_THROWS_AS(attack_report_from(nlohmann::json{{"format", "advt-report"}, {"version", 1}, {"kind", "cross"}}),
                  FormatError);
}

TEST_CASE("black-box attack accounts for queries and round trips its report") {
  const auto& s = shared();
  const auto target = s.cross[1];
  LocalOracle attack(target), eval(target);
  SubstituteConfig c;
  c.family = Family::kLogReg;
  c.rho_max = 3;
  c.seed = 4;
  Dataset probe = s.tt.test.slice(50, 200);
  const AttackReport r = blackbox_attack(attack, eval, s.tt.test.x.topRows(50), probe, c, 0.3);
  CHECK(r.substitute_queries == 400);
  CHECK(attack.queries() == 400);
  CHECK(eval.queries() == 300);
  CHECK(r.iterations.size() == 4);
  CHECK(r.oracle_baseline_error == doctest::Approx(1.0 - accuracy(*target, probe)));
  CHECK(r.oracle_misclassification > r.oracle_baseline_error);

  TempDir dir("attack");
  emit_report(to_report(r), dir / "a.json");
  emit_report(to_report(attack_report_from(load_report(dir / "a.json"))), dir / "b.json");
  CHECK(slurp(dir / "a.json") == slurp(dir / "b.json"));

  LocalOracle starved(target, 10), eval2(target);
  CHECK_THROWS_AS(blackbox_attack(starved, eval2, s.tt.test.x.topRows(50), probe, c, 0.3),
                  BudgetExhausted);
}
