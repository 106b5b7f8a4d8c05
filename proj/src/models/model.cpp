#include <algorithm>

#include "advt/models.hpp"

namespace advt {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void check_dim(const Model& model, const VectorRef& x) {
  if (x.size() != model.dim()) {
    throw ContractError("input has dimension " + std::to_string(x.size()) + ", model expects " +
                        std::to_string(model.dim()));
  }
}

}  // namespace

std::string_view family_name(Family family) {
  switch (family) {
    case Family::kNet: return "net";
    case Family::kLogReg: return "logreg";
    case Family::kSvm: return "svm";
    case Family::kTree: return "tree";
    case Family::kKnn: return "knn";
    case Family::kEnsemble: return "ensemble";
  }
  return "unknown";
}

Family parse_family(std::string_view name) {
  for (Family f : {Family::kNet, Family::kLogReg, Family::kSvm, Family::kTree, Family::kKnn,
                   Family::kEnsemble}) {
    if (family_name(f) == name) return f;
  }
  throw ContractError("unknown model family '" + std::string(name) + "'");
}

int argmax(const VectorRef& scores) {
  if (scores.size() == 0) throw ContractError("argmax of an empty vector");
  int best = 0;
  for (int i = 1; i < scores.size(); ++i) {
    if (scores(i) > scores(best)) best = i;
  }
  return best;
}

Hyperparams default_hyperparams(Family family) {
  Hyperparams hp;
  switch (family) {
    case Family::kNet:
      hp.epochs = 10;
      hp.decay_after_epochs = 5;
      break;
    case Family::kLogReg:
      hp.epochs = 15;
      hp.decay_after_epochs = 10;
      break;
    case Family::kSvm:
      hp.epochs = 15;
      hp.decay_after_epochs = 10;
      hp.l2 = 1e-3;
      break;
    default:
      break;
  }
  return hp;
}

Ensemble::Ensemble(std::vector<std::shared_ptr<const Model>> experts)
    : experts_(std::move(experts)) {
  if (experts_.empty()) throw ContractError("ensemble needs at least one expert");
  for (const auto& e : experts_) {
    if (!e) throw ContractError("null ensemble expert");
    if (e->dim() != experts_.front()->dim() ||
        e->num_classes() != experts_.front()->num_classes()) {
      throw ContractError("ensemble experts disagree on dimension or class count");
    }
  }
}

int Ensemble::dim() const { return experts_.front()->dim(); }
int Ensemble::num_classes() const { return experts_.front()->num_classes(); }

Vector Ensemble::votes(const VectorRef& x) const {
  Vector v = Vector::Zero(num_classes());
  for (const auto& e : experts_) v(predict(*e, x)) += 1.0;
  return v / static_cast<double>(experts_.size());
}

int Ensemble::vote(std::span<const int> expert_labels, int num_classes) {
  Vector v = Vector::Zero(num_classes);
  for (int label : expert_labels) v(label) += 1.0;
  return argmax(v);
}

Family Model::family() const {
  return std::visit(Overloaded{[](const NeuralNet&) { return Family::kNet; },
                               [](const SoftmaxRegression&) { return Family::kLogReg; },
                               [](const LinearSvm&) { return Family::kSvm; },
                               [](const DecisionTree&) { return Family::kTree; },
                               [](const KnnModel&) { return Family::kKnn; },
                               [](const Ensemble&) { return Family::kEnsemble; }},
                    v_);
}

int Model::dim() const {
  return std::visit([](const auto& m) { return m.dim(); }, v_);
}

int Model::num_classes() const {
  return std::visit([](const auto& m) { return m.num_classes(); }, v_);
}

bool Model::differentiable() const {
  const Family f = family();
  return f == Family::kNet || f == Family::kLogReg || f == Family::kKnn;
}

Model train(Family family, const Dataset& data, const Hyperparams& hp, std::uint64_t seed) {
  switch (family) {
    case Family::kNet: return NeuralNet::train(data, hp, seed);
    case Family::kLogReg: return SoftmaxRegression::train(data, hp, seed);
    case Family::kSvm: return LinearSvm::train(data, hp, seed);
    case Family::kTree: return DecisionTree::train(data, hp);
    case Family::kKnn:
      validate(data);
      return KnnModel(data.x, data.y, data.num_classes, hp.k);
    case Family::kEnsemble: break;
  }
  throw UnsupportedFamilyError("ensembles are assembled from trained experts, not trained");
}

Model train(Family family, const Dataset& data, std::uint64_t seed) {
  return train(family, data, default_hyperparams(family), seed);
}

Model make_ensemble(std::vector<std::shared_ptr<const Model>> experts) {
  return Ensemble(std::move(experts));
}

int predict(const Model& model, const VectorRef& x) {
  check_dim(model, x);
  return std::visit(
      Overloaded{[&](const NeuralNet& m) { return argmax(m.logits(x)); },
                 [&](const SoftmaxRegression& m) { return argmax(m.scores(x)); },
                 [&](const LinearSvm& m) { return argmax(m.margins(x)); },
                 [&](const DecisionTree& m) { return m.predict(x); },
                 [&](const KnnModel& m) { return m.predict(x); },
                 [&](const Ensemble& m) { return argmax(m.votes(x)); }},
      model.variant());
}

std::vector<int> predict_batch(const Model& model, const Features& x) {
  if (x.rows() > 0 && x.cols() != model.dim()) {
    throw ContractError("batch dimension does not match the model");
  }
  // Row by row so that batch and single predictions agree bit for bit.
  std::vector<int> out(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    out[static_cast<std::size_t>(i)] = predict(model, x.row(i).transpose());
  }
  return out;
}

double accuracy(const Model& model, const Dataset& data) {
  if (data.empty()) throw ContractError("accuracy of an empty dataset");
  const auto pred = predict_batch(model, data.x);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == data.y[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

Vector class_scores(const Model& model, const VectorRef& x) {
  check_dim(model, x);
  return std::visit(Overloaded{[&](const NeuralNet& m) { return m.scores(x); },
                               [&](const SoftmaxRegression& m) { return m.scores(x); },
                               [&](const LinearSvm& m) { return m.margins(x); },
                               [&](const DecisionTree& m) {
                                 Vector v = Vector::Zero(m.num_classes());
                                 v(m.predict(x)) = 1.0;
                                 return v;
                               },
                               [&](const KnnModel& m) { return m.smoothed_scores(x); },
                               [&](const Ensemble& m) { return m.votes(x); }},
                    model.variant());
}

Vector input_gradient(const Model& model, const VectorRef& x, int y) {
  check_dim(model, x);
  if (y < 0 || y >= model.num_classes()) throw ContractError("label out of range");
  switch (model.family()) {
    case Family::kNet: return model.as<NeuralNet>().cost_gradient(x, y);
    case Family::kLogReg: return model.as<SoftmaxRegression>().cost_gradient(x, y);
    case Family::kKnn: return model.as<KnnModel>().cost_gradient(x, y);
    default: break;
  }
  throw UnsupportedFamilyError("no input gradient for family " +
                               std::string(family_name(model.family())));
}

Matrix jacobian(const Model& model, const VectorRef& x) {
  check_dim(model, x);
  switch (model.family()) {
    case Family::kNet: return model.as<NeuralNet>().jacobian(x);
    case Family::kLogReg: return model.as<SoftmaxRegression>().jacobian(x);
    case Family::kKnn: return model.as<KnnModel>().jacobian(x);
    default: break;
  }
  throw UnsupportedFamilyError("no Jacobian for family " +
                               std::string(family_name(model.family())));
}

}  // namespace advt
