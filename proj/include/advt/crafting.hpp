#ifndef ADVT_CRAFTING_HPP
#define ADVT_CRAFTING_HPP

#include <optional>
#include <string_view>
#include <vector>

#include "advt/dataset.hpp"
#include "advt/models.hpp"

namespace advt {

// delta is the clipped perturbation x* - x; the norms are always derived from it.
struct Perturbation {
  Vector delta;
  double epsilon = 0.0;

  // ||delta||_1 / d
  double l1_fraction() const;
  double linf() const;
};

struct AdversarialSample {
  Vector x_adv;
  Perturbation perturbation;
};

// x* = clip(x + eps * sgn(grad_x c(f, x, y))). Without a label the model's own
// prediction is used in the cost. sgn(0) = 0.
AdversarialSample fgsm(const Model& model, const VectorRef& x, std::optional<int> y,
                       double epsilon);

// x* = clip(x - eps * w[k] / ||w[k]||) with k the SVM's predicted class.
AdversarialSample svm_attack(const Model& model, const VectorRef& x, double epsilon);

// Decision-tree evasion. Walks up from the leaf reached by x; at each ancestor
// it scans the other subtree (shallowest leaf first, left before right) for a
// leaf of another class whose path constraints can be met inside [0, 1]^d,
// then moves only the path features x currently violates to threshold +/- gap
// (or the middle of the feasible interval when the gap does not fit).
// Throws NoAdversarialError when no other-class leaf is reachable.
AdversarialSample dt_attack(const DecisionTree& tree, const VectorRef& x, int legitimate_class,
                            double gap = 0.01);

enum class Method { kFgsm, kSvm, kTree };

std::string_view method_name(Method method);
Method parse_method(std::string_view name);
// fgsm for net/logreg/knn, svm for svm, tree for tree.
Method default_method(Family family);

struct CraftRecord {
  std::size_t index = 0;
  Vector x;
  Vector x_adv;
  Perturbation perturbation;
  int true_label = 0;
  int source_pred = 0;
  int adv_pred = 0;
  bool crafted = true;  // false when the tree attack found no reachable leaf
};

struct CraftBatch {
  Family source_family = Family::kLogReg;
  Method method = Method::kFgsm;
  double epsilon = 0.0;
  std::vector<CraftRecord> records;

  double mean_l1_fraction() const;
  // Share of x* the source model assigns a label other than the true one.
  double source_misclassification_rate() const;
};

// One record per input, in input order. FGSM uses the true labels; the tree
// attack takes the tree's own prediction as the legitimate class.
CraftBatch craft_batch(const Model& model, const Dataset& data, Method method, double epsilon);

}  // namespace advt

#endif  // ADVT_CRAFTING_HPP
