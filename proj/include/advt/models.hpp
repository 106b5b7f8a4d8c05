#ifndef ADVT_MODELS_HPP
#define ADVT_MODELS_HPP

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "advt/dataset.hpp"
#include "advt/error.hpp"

namespace advt {

enum class Family { kNet, kLogReg, kSvm, kTree, kKnn, kEnsemble };

std::string_view family_name(Family family);
Family parse_family(std::string_view name);

// Index of the largest entry; ties go to the lowest index.
int argmax(const VectorRef& scores);

struct Hyperparams {
  // Mini-batch SGD with momentum (net, logreg, svm).
  int epochs = 15;
  int batch_size = 32;
  double learning_rate = 1e-2;
  double momentum = 0.9;
  // Learning rate and momentum are both multiplied by decay_factor once
  // `decay_after_epochs` epochs have run (0 disables the decay).
  int decay_after_epochs = 10;
  double decay_factor = 0.5;
  double l2 = 0.0;
  double dropout = 0.0;  // hidden-unit drop rate, net only
  std::vector<int> hidden{128, 64};
  // CART.
  int max_depth = 15;
  int min_leaf = 5;
  // Nearest neighbours.
  int k = 1;
};

Hyperparams default_hyperparams(Family family);

class NeuralNet {
 public:
  struct Layer {
    Matrix w;  // out x in
    Vector b;
  };

  NeuralNet() = default;
  explicit NeuralNet(std::vector<Layer> layers);

  int dim() const { return static_cast<int>(layers_.front().w.cols()); }
  int num_classes() const { return static_cast<int>(layers_.back().w.rows()); }
  const std::vector<Layer>& layers() const { return layers_; }

  Vector logits(const VectorRef& x) const;
  Vector scores(const VectorRef& x) const;
  Matrix scores_batch(const Features& x) const;  // N x n
  Vector cost_gradient(const VectorRef& x, int y) const;
  Matrix jacobian(const VectorRef& x) const;

  static NeuralNet train(const Dataset& data, const Hyperparams& hp, std::uint64_t seed);

 private:
  std::vector<Layer> layers_;
};

// Multinomial logistic regression: softmax(W x + b).
class SoftmaxRegression {
 public:
  SoftmaxRegression() = default;
  SoftmaxRegression(Matrix w, Vector b);

  int dim() const { return static_cast<int>(w_.cols()); }
  int num_classes() const { return static_cast<int>(w_.rows()); }
  const Matrix& weights() const { return w_; }
  const Vector& bias() const { return b_; }

  Vector scores(const VectorRef& x) const;
  Matrix scores_batch(const Features& x) const;
  Vector cost_gradient(const VectorRef& x, int y) const;
  // Closed form: J[i, :] = p_i * (w_i - sum_l p_l w_l).
  Matrix jacobian(const VectorRef& x) const;

  static SoftmaxRegression train(const Dataset& data, const Hyperparams& hp,
                                 std::uint64_t seed);

 private:
  Matrix w_;
  Vector b_;
};

// One-vs-rest linear SVM; row k of weights() is w[k].
class LinearSvm {
 public:
  LinearSvm() = default;
  LinearSvm(Matrix w, Vector b);

  int dim() const { return static_cast<int>(w_.cols()); }
  int num_classes() const { return static_cast<int>(w_.rows()); }
  const Matrix& weights() const { return w_; }
  const Vector& bias() const { return b_; }

  Vector margins(const VectorRef& x) const;
  Matrix margins_batch(const Features& x) const;

  static LinearSvm train(const Dataset& data, const Hyperparams& hp, std::uint64_t seed);

 private:
  Matrix w_;
  Vector b_;
};

// Internal nodes route x to `left` when x[feature] <= threshold.
struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  int parent = -1;
  int label = -1;  // leaves only

  bool is_leaf() const { return left < 0; }
};

class DecisionTree {
 public:
  DecisionTree() = default;
  // Node 0 is the root. Throws ContractError on malformed structure.
  DecisionTree(int dim, int num_classes, std::vector<TreeNode> nodes);

  int dim() const { return dim_; }
  int num_classes() const { return num_classes_; }
  const std::vector<TreeNode>& nodes() const { return nodes_; }
  const TreeNode& node(int i) const { return nodes_[static_cast<std::size_t>(i)]; }
  int depth() const;

  int leaf_for(const VectorRef& x) const;
  int predict(const VectorRef& x) const { return node(leaf_for(x)).label; }

  static DecisionTree train(const Dataset& data, const Hyperparams& hp);

 private:
  int dim_ = 0;
  int num_classes_ = 0;
  std::vector<TreeNode> nodes_;
};

// Predictions use hard k-NN; class scores and gradients use the soft-min
// variant: softmax(-||z - x||^2 over stored z) . Y.
class KnnModel {
 public:
  KnnModel() = default;
  KnnModel(Features x, std::vector<int> labels, int num_classes, int k = 1);

  int dim() const { return static_cast<int>(x_.cols()); }
  int num_classes() const { return num_classes_; }
  int k() const { return k_; }
  const Features& points() const { return x_; }
  const std::vector<int>& labels() const { return labels_; }

  int predict(const VectorRef& x) const;
  std::vector<int> predict_batch(const Features& x) const;
  Vector smoothed_scores(const VectorRef& x) const;
  Vector cost_gradient(const VectorRef& x, int y) const;
  Matrix jacobian(const VectorRef& x) const;

 private:
  Vector squared_distances(const VectorRef& x) const;

  Features x_;
  std::vector<int> labels_;
  int num_classes_ = 0;
  int k_ = 1;
};

class Model;

// Majority vote over experts; ties (including full disagreement) go to the
// lowest class index.
class Ensemble {
 public:
  Ensemble() = default;
  explicit Ensemble(std::vector<std::shared_ptr<const Model>> experts);

  int dim() const;
  int num_classes() const;
  const std::vector<std::shared_ptr<const Model>>& experts() const { return experts_; }

  Vector votes(const VectorRef& x) const;
  static int vote(std::span<const int> expert_labels, int num_classes);

 private:
  std::vector<std::shared_ptr<const Model>> experts_;
};

class Model {
 public:
  using Variant =
      std::variant<NeuralNet, SoftmaxRegression, LinearSvm, DecisionTree, KnnModel, Ensemble>;

  template <typename T>
    requires(!std::is_same_v<std::remove_cvref_t<T>, Model> &&
             std::is_constructible_v<Variant, T &&>)
  Model(T&& m) : v_(std::forward<T>(m)) {}  // NOLINT(google-explicit-constructor)

  Family family() const;
  int dim() const;
  int num_classes() const;
  bool differentiable() const;

  const Variant& variant() const { return v_; }
  template <typename T>
  const T& as() const;

 private:
  Variant v_;
};

template <typename T>
const T& Model::as() const {
  if (const T* p = std::get_if<T>(&v_)) return *p;
  throw UnsupportedFamilyError("model is a " + std::string(family_name(family())));
}

Model train(Family family, const Dataset& data, const Hyperparams& hp, std::uint64_t seed);
Model train(Family family, const Dataset& data, std::uint64_t seed);
Model make_ensemble(std::vector<std::shared_ptr<const Model>> experts);

int predict(const Model& model, const VectorRef& x);
std::vector<int> predict_batch(const Model& model, const Features& x);
double accuracy(const Model& model, const Dataset& data);

// Probability vectors for net/logreg/kNN (smoothed), raw margins for the SVM,
// a one-hot leaf for the tree and vote fractions for the ensemble.
Vector class_scores(const Model& model, const VectorRef& x);

// Gradient of the cross-entropy cost -log f_y(x) with respect to x.
Vector input_gradient(const Model& model, const VectorRef& x, int y);

// N x d, row i = d f_i / d x.
Matrix jacobian(const Model& model, const VectorRef& x);

nlohmann::json to_json(const Model& model);
Model model_from_json(const nlohmann::json& j);
void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

}  // namespace advt

#endif  // ADVT_MODELS_HPP
