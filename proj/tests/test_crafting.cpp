#include <doctest.h>

#include <functional>
#include <limits>
#include <random>

#include "advt/crafting.hpp"
#include "support.hpp"

using namespace advt;
using advt::testing::random_point;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double e : v) out(i++) = e;
  return out;
}

DecisionTree hand_tree() {
  // x0 <= 0.5 ? (x1 <= 0.3 ? 0 : 1) : 2
  std::vector<TreeNode> nodes(5);
  nodes[0] = {0, 0.5, 1, 2, -1, -1};
  nodes[1] = {1, 0.3, 3, 4, -1, -1};
  nodes[2].label = 2;
  nodes[3].label = 0;
  nodes[4].label = 1;
  return DecisionTree(2, 3, nodes);
}

// Thresholds fall slightly outside [0, 1] too, so some leaves are unreachable.
DecisionTree random_tree(std::mt19937_64& rng, int dim, int classes, int max_depth) {
  std::uniform_real_distribution<double> thr(-0.1, 1.1);
  std::vector<TreeNode> nodes;
  std::function<int(int)> grow = [&](int depth) {
    const int id = static_cast<int>(nodes.size());
    nodes.emplace_back();
    if (depth == max_depth || (depth > 0 && rng() % 4 == 0)) {
      nodes[static_cast<std::size_t>(id)].label = static_cast<int>(rng() % static_cast<unsigned>(classes));
      return id;
    }
    nodes[static_cast<std::size_t>(id)].feature = static_cast<int>(rng() % static_cast<unsigned>(dim));
    nodes[static_cast<std::size_t>(id)].threshold = thr(rng);
    const int l = grow(depth + 1);
    const int r = grow(depth + 1);
    nodes[static_cast<std::size_t>(id)].left = l;
    nodes[static_cast<std::size_t>(id)].right = r;
    return id;
  };
  grow(0);
  return DecisionTree(dim, classes, nodes);
}

// A leaf is reachable iff its path box (lo, hi] meets [0, 1] in every feature.
bool leaf_feasible(const DecisionTree& t, int leaf) {
  std::vector<double> lo(static_cast<std::size_t>(t.dim()), -std::numeric_limits<double>::infinity());
  std::vector<double> hi(static_cast<std::size_t>(t.dim()), std::numeric_limits<double>::infinity());
  for (int child = leaf, p = t.node(leaf).parent; p >= 0; child = p, p = t.node(p).parent) {
    const TreeNode& n = t.node(p);
    auto f = static_cast<std::size_t>(n.feature);
    if (n.left == child) hi[f] = std::min(hi[f], n.threshold);
    else lo[f] = std::max(lo[f], n.threshold);
  }
  for (std::size_t f = 0; f < lo.size(); ++f) {
    if (!(lo[f] < hi[f] && hi[f] >= 0.0 && lo[f] < 1.0)) return false;
  }
  return true;
}

bool other_class_reachable(const DecisionTree& t, int legit) {
  for (int i = 0; i < static_cast<int>(t.nodes().size()); ++i) {
    if (t.node(i).is_leaf() && t.node(i).label != legit && leaf_feasible(t, i)) return true;
  }
  return false;
}

}  // namespace

TEST_CASE("FGSM on a hand logreg model") {
  Matrix w(2, 2);
  w << 1, -2, 0, 0;
  const Model m = SoftmaxRegression(w, Vector::Zero(2));
  const AdversarialSample a = fgsm(m, vec({0.5, 0.5}), 0, 0.3);
  CHECK(a.x_adv(0) == doctest::Approx(0.2));
  CHECK(a.x_adv(1) == doctest::Approx(0.8));
  CHECK(a.perturbation.linf() == doctest::Approx(0.3));
  CHECK(a.perturbation.l1_fraction() == doctest::Approx(0.3));
}

TEST_CASE("FGSM leaves coordinates with zero gradient untouched and clips") {
  Matrix w(2, 3);
  w << 1, 0, -1, 0, 0, 0;
  const Model m = SoftmaxRegression(w, Vector::Zero(2));
  const AdversarialSample a = fgsm(m, vec({0.1, 0.4, 0.95}), 0, 0.3);
  CHECK(a.x_adv(0) == 0.0);
  CHECK(a.x_adv(1) == 0.4);
  CHECK(a.x_adv(2) == 1.0);
  CHECK(a.perturbation.delta(0) == doctest::Approx(-0.1));
  CHECK(a.perturbation.delta(2) == doctest::Approx(0.05));

  const Model flat = SoftmaxRegression(Matrix::Zero(2, 3), Vector::Zero(2));
  const AdversarialSample z = fgsm(flat, vec({0.2, 0.3, 0.4}), 1, 0.5);
  CHECK(z.x_adv == vec({0.2, 0.3, 0.4}));
  CHECK(z.perturbation.l1_fraction() == 0.0);
}

TEST_CASE("FGSM output stays in the unit box and within epsilon") {
  const TrainTest tt = advt::testing::small_split(600, 100);
  for (Family f : {Family::kNet, Family::kLogReg, Family::kKnn}) {
    const Model m = train(f, tt.train, 1);
    const CraftBatch b = craft_batch(m, tt.test, Method::kFgsm, 0.3);
    REQUIRE(b.records.size() == tt.test.size());
    for (const auto& r : b.records) {
      CHECK(r.x_adv.minCoeff() >= 0.0);
      CHECK(r.x_adv.maxCoeff() <= 1.0);
      CHECK(r.perturbation.linf() <= 0.3 + 1e-12);
      CHECK((r.x_adv - r.x - r.perturbation.delta).cwiseAbs().maxCoeff() == 0.0);
    }
  }
}

TEST_CASE("FGSM without a label uses the model's own prediction") {
  const TrainTest tt = advt::testing::small_split(600, 20);
  const Model m = train(Family::kLogReg, tt.train, 1);
  const Vector x = tt.test.x.row(0).transpose();
  CHECK(fgsm(m, x, std::nullopt, 0.2).x_adv == fgsm(m, x, predict(m, x), 0.2).x_adv);
}

TEST_CASE("SVM attack moves against the predicted hyperplane") {
  Matrix w(2, 2);
  w << 2, 0, 0, 1;
  const Model m = LinearSvm(w, Vector::Zero(2));
  const AdversarialSample a = svm_attack(m, vec({0.5, 0.5}), 0.1);
  CHECK(a.x_adv(0) == doctest::Approx(0.4));
  CHECK(a.x_adv(1) == doctest::Approx(0.5));

  Matrix zero(2, 2);
  zero << 0, 0, 0, 1;
  Vector b(2);
  b << 1.0, 0.0;
  CHECK_THROWS_AS(svm_attack(LinearSvm(zero, b), vec({0.5, 0.1}), 0.1), DegenerateModelError);
  CHECK_THROWS_AS(svm_attack(SoftmaxRegression(w, Vector::Zero(2)), vec({0.5, 0.5}), 0.1),
                  UnsupportedFamilyError);
}

TEST_CASE("tree attack on a hand tree") {
  const DecisionTree t = hand_tree();
  const AdversarialSample a = dt_attack(t, vec({0.2, 0.1}), 0);
  CHECK(a.x_adv(0) == 0.2);
  CHECK(a.x_adv(1) == doctest::Approx(0.31));
  CHECK(t.predict(a.x_adv) == 1);

  // From class 2 the only sibling is node 1; its shallowest leaf is class 0.
  const AdversarialSample b = dt_attack(t, vec({0.8, 0.9}), 2);
  CHECK(t.predict(b.x_adv) == 0);
  CHECK(b.x_adv(0) == doctest::Approx(0.49));
  CHECK(b.x_adv(1) == doctest::Approx(0.29));

  CHECK_THROWS_AS(dt_attack(t, vec({0.2, 0.1}), 1), ContractError);
}

TEST_CASE("tree attack fails cleanly when every reachable leaf shares the class") {
  std::vector<TreeNode> nodes(3);
  nodes[0] = {0, 0.5, 1, 2, -1, -1};
  nodes[1].label = 1;
  nodes[2].label = 1;
  CHECK_THROWS_AS(dt_attack(DecisionTree(1, 2, nodes), vec({0.3}), 1), NoAdversarialError);

  // The other-class leaf needs x0 > 1.2, outside the box.
  nodes[0].threshold = 1.2;
  nodes[2].label = 0;
  CHECK_THROWS_AS(dt_attack(DecisionTree(1, 2, nodes), vec({0.3}), 1), NoAdversarialError);
}

TEST_CASE("tree attack is sound and complete on random trees") {
  std::mt19937_64 rng(42);
  int crafted = 0, refused = 0;
  for (int t = 0; t < 30; ++t) {
    const DecisionTree tree = random_tree(rng, 3, 3, 1 + t % 5);
    for (int s = 0; s < 60; ++s) {
      const Vector x = random_point(3, rng);
      const int legit = tree.predict(x);
      const bool reachable = other_class_reachable(tree, legit);
      try {
        const AdversarialSample a = dt_attack(tree, x, legit);
        CHECK(reachable);
        CHECK(tree.predict(a.x_adv) != legit);
        CHECK(a.x_adv.minCoeff() >= 0.0);
        CHECK(a.x_adv.maxCoeff() <= 1.0);
        ++crafted;
      } catch (const NoAdversarialError&) {
        CHECK_FALSE(reachable);
        ++refused;
      }
    }
  }
  CHECK(crafted > 0);
  CHECK(refused > 0);
}

TEST_CASE("craft_batch pairs methods with families") {
  const TrainTest tt = advt::testing::small_split(600, 50);
  const Model svm = train(Family::kSvm, tt.train, 1);
  const Model tree = train(Family::kTree, tt.train, 1);
  CHECK_THROWS_AS(craft_batch(svm, tt.test, Method::kFgsm, 0.3), UnsupportedFamilyError);
  CHECK_THROWS_AS(craft_batch(tree, tt.test, Method::kSvm, 0.3), UnsupportedFamilyError);
  CHECK_THROWS_AS(default_method(Family::kEnsemble), UnsupportedFamilyError);
  CHECK(default_method(Family::kKnn) == Method::kFgsm);
  CHECK(parse_method("svm") == Method::kSvm);
  CHECK_THROWS_AS(parse_method("pgd"), ContractError);

  const CraftBatch b = craft_batch(tree, tt.test, Method::kTree, 0.0);
  for (const auto& r : b.records) {
    CHECK(r.source_pred == predict(tree, r.x));
    if (r.crafted) CHECK(r.adv_pred != r.source_pred);
  }
}

TEST_CASE("white-box attacks fool their own source model") {
  const TrainTest tt = advt::testing::small_split(2000, 300);
  const Model lr = train(Family::kLogReg, tt.train, 1);
  CHECK(craft_batch(lr, tt.test, Method::kFgsm, 0.3).source_misclassification_rate() > 0.8);
  const Model svm = train(Family::kSvm, tt.train, 1);
  CHECK(craft_batch(svm, tt.test, Method::kSvm, 1.5).source_misclassification_rate() > 0.8);
  const Model tree = train(Family::kTree, tt.train, 1);
  CHECK(craft_batch(tree, tt.test, Method::kTree, 0.0).source_misclassification_rate() > 0.8);
}
