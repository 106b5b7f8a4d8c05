#include "advt/crafting.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <map>

namespace advt {

namespace {

AdversarialSample finish(const VectorRef& x, Vector x_adv, double epsilon) {
  clip_unit(x_adv);
  Perturbation p{x_adv - x, epsilon};
  return {std::move(x_adv), std::move(p)};
}

struct Interval {
  double lo = -std::numeric_limits<double>::infinity();  // exclusive
  double hi = std::numeric_limits<double>::infinity();   // inclusive
};

// Some v in (lo, hi] ∩ [0, 1], preferring x itself, then a point `gap` inside
// the violated bound, then the middle of the feasible range.
std::optional<double> pick_value(const Interval& iv, double x, double gap) {
  const double top = std::min(iv.hi, 1.0);
  if (iv.lo >= 1.0 || top < 0.0 || (iv.lo >= 0.0 && top <= iv.lo)) return std::nullopt;
  if (x > iv.lo && x <= iv.hi) return x;
  const double bottom = std::max(iv.lo, 0.0);
  auto middle = [&]() {
    const double m = 0.5 * (bottom + top);
    return m > iv.lo ? m : top;
  };
  if (x > iv.hi) {
    const double v = iv.hi - gap;
    return (v > iv.lo && v >= 0.0) ? v : middle();
  }
  const double v = iv.lo + gap;
  return v <= top ? v : middle();
}

// Constraints of the full root-to-leaf path, intersected per feature.
std::map<int, Interval> path_box(const DecisionTree& tree, int leaf) {
  std::map<int, Interval> box;
  int child = leaf;
  int parent = tree.node(leaf).parent;
  while (parent >= 0) {
    const TreeNode& n = tree.node(parent);
    Interval& iv = box[n.feature];
    if (n.left == child) {
      iv.hi = std::min(iv.hi, n.threshold);
    } else {
      iv.lo = std::max(iv.lo, n.threshold);
    }
    child = parent;
    parent = n.parent;
  }
  return box;
}

std::optional<Vector> steer_to_leaf(const DecisionTree& tree, int leaf, const VectorRef& x,
                                    double gap) {
  Vector out = x;
  for (const auto& [feature, iv] : path_box(tree, leaf)) {
    const auto v = pick_value(iv, x(feature), gap);
    if (!v) return std::nullopt;
    out(feature) = *v;
  }
  return out;
}

// Leaves under `root`, shallowest first, left before right.
std::vector<int> leaves_breadth_first(const DecisionTree& tree, int root) {
  std::vector<int> leaves;
  std::deque<int> queue{root};
  while (!queue.empty()) {
    const int id = queue.front();
    queue.pop_front();
    const TreeNode& n = tree.node(id);
    if (n.is_leaf()) {
      leaves.push_back(id);
    } else {
      queue.push_back(n.left);
      queue.push_back(n.right);
    }
  }
  return leaves;
}

}  // namespace

double Perturbation::l1_fraction() const {
  return delta.size() == 0 ? 0.0 : delta.lpNorm<1>() / static_cast<double>(delta.size());
}

double Perturbation::linf() const {
  return delta.size() == 0 ? 0.0 : delta.lpNorm<Eigen::Infinity>();
}

AdversarialSample fgsm(const Model& model, const VectorRef& x, std::optional<int> y,
                       double epsilon) {
  if (epsilon < 0.0) throw ContractError("epsilon must be non-negative");
  if (!model.differentiable()) {
    throw UnsupportedFamilyError("FGSM needs a differentiable model, got " +
                                 std::string(family_name(model.family())));
  }
  const int label = y ? *y : predict(model, x);
  const Vector grad = input_gradient(model, x, label);
  const Vector sign = grad.unaryExpr([](double g) { return g > 0.0 ? 1.0 : (g < 0.0 ? -1.0 : 0.0); });
  return finish(x, x + epsilon * sign, epsilon);
}

AdversarialSample svm_attack(const Model& model, const VectorRef& x, double epsilon) {
  if (epsilon < 0.0) throw ContractError("epsilon must be non-negative");
  const auto& svm = model.as<LinearSvm>();
  const int k = predict(model, x);
  const Vector w = svm.weights().row(k).transpose();
  const double norm = w.norm();
  if (norm == 0.0) throw DegenerateModelError("zero-norm hyperplane for class " + std::to_string(k));
  return finish(x, x - epsilon * w / norm, epsilon);
}

AdversarialSample dt_attack(const DecisionTree& tree, const VectorRef& x, int legitimate_class,
                            double gap) {
  const int legit_leaf = tree.leaf_for(x);
  if (tree.node(legit_leaf).label != legitimate_class) {
    throw ContractError("the tree does not assign the legitimate class to x");
  }
  int ancestor = legit_leaf;
  while (tree.node(ancestor).parent >= 0) {
    const int parent = tree.node(ancestor).parent;
    const TreeNode& p = tree.node(parent);
    const int sibling = p.left == ancestor ? p.right : p.left;
    for (int leaf : leaves_breadth_first(tree, sibling)) {
      if (tree.node(leaf).label == legitimate_class) continue;
      auto x_adv = steer_to_leaf(tree, leaf, x, gap);
      if (x_adv && tree.predict(*x_adv) != legitimate_class) {
        return finish(x, std::move(*x_adv), gap);
      }
    }
    ancestor = parent;
  }
  throw NoAdversarialError("no reachable leaf of another class");
}

std::string_view method_name(Method method) {
  switch (method) {
    case Method::kFgsm: return "fgsm";
    case Method::kSvm: return "svm";
    case Method::kTree: return "tree";
  }
  return "unknown";
}

Method parse_method(std::string_view name) {
  for (Method m : {Method::kFgsm, Method::kSvm, Method::kTree}) {
    if (method_name(m) == name) return m;
  }
  throw ContractError("unknown crafting method '" + std::string(name) + "'");
}

Method default_method(Family family) {
  switch (family) {
    case Family::kSvm: return Method::kSvm;
    case Family::kTree: return Method::kTree;
    case Family::kNet:
    case Family::kLogReg:
    case Family::kKnn: return Method::kFgsm;
    case Family::kEnsemble: break;
  }
  throw UnsupportedFamilyError("no crafting algorithm targets an ensemble");
}

double CraftBatch::mean_l1_fraction() const {
  if (records.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& r : records) sum += r.perturbation.l1_fraction();
  return sum / static_cast<double>(records.size());
}

double CraftBatch::source_misclassification_rate() const {
  if (records.empty()) return 0.0;
  std::size_t wrong = 0;
  for (const auto& r : records) wrong += r.adv_pred != r.true_label ? 1 : 0;
  return static_cast<double>(wrong) / static_cast<double>(records.size());
}

CraftBatch craft_batch(const Model& model, const Dataset& data, Method method, double epsilon) {
  const bool compatible =
      (method == Method::kFgsm && model.differentiable()) ||
      (method == Method::kSvm && model.family() == Family::kSvm) ||
      (method == Method::kTree && model.family() == Family::kTree);
  if (!compatible) {
    throw UnsupportedFamilyError("method " + std::string(method_name(method)) +
                                 " cannot target a " + std::string(family_name(model.family())));
  }
  if (!data.empty() && data.dim() != model.dim()) {
    throw ContractError("dataset dimension does not match the model");
  }

  CraftBatch batch;
  batch.source_family = model.family();
  batch.method = method;
  batch.epsilon = epsilon;
  batch.records.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    CraftRecord rec;
    rec.index = i;
    rec.x = data.x.row(static_cast<Eigen::Index>(i)).transpose();
    rec.true_label = data.y[i];
    rec.source_pred = predict(model, rec.x);
    AdversarialSample adv;
    switch (method) {
      case Method::kFgsm: adv = fgsm(model, rec.x, rec.true_label, epsilon); break;
      case Method::kSvm: adv = svm_attack(model, rec.x, epsilon); break;
      case Method::kTree:
        try {
          adv = dt_attack(model.as<DecisionTree>(), rec.x, rec.source_pred);
        } catch (const NoAdversarialError&) {
          adv = {rec.x, Perturbation{Vector::Zero(rec.x.size()), 0.0}};
          rec.crafted = false;
        }
        break;
    }
    rec.x_adv = std::move(adv.x_adv);
    rec.perturbation = std::move(adv.perturbation);
    rec.adv_pred = predict(model, rec.x_adv);
    batch.records.push_back(std::move(rec));
  }
  return batch;
}

}  // namespace advt
