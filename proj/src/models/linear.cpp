#include <random>

#include "advt/models.hpp"
#include "sgd.hpp"

namespace advt {

SoftmaxRegression::SoftmaxRegression(Matrix w, Vector b) : w_(std::move(w)), b_(std::move(b)) {
  if (b_.size() != w_.rows()) throw ContractError("logreg bias length != class count");
}

Vector SoftmaxRegression::scores(const VectorRef& x) const {
  return detail::softmax(w_ * x + b_);
}

Matrix SoftmaxRegression::scores_batch(const Features& x) const {
  Matrix z = (x * w_.transpose()).rowwise() + b_.transpose();
  detail::softmax_rows(z);
  return z.transpose();
}

Vector SoftmaxRegression::cost_gradient(const VectorRef& x, int y) const {
  Vector p = scores(x);
  p(y) -= 1.0;
  return w_.transpose() * p;
}

Matrix SoftmaxRegression::jacobian(const VectorRef& x) const {
  const Vector p = scores(x);
  const Vector mean_w = w_.transpose() * p;  // sum_l p_l w_l
  return p.asDiagonal() * (w_.rowwise() - mean_w.transpose());
}

SoftmaxRegression SoftmaxRegression::train(const Dataset& data, const Hyperparams& hp,
                                           std::uint64_t seed) {
  detail::check_trainable(data, hp, "logreg");
  std::mt19937_64 rng(seed);
  Matrix w = Matrix::Zero(data.num_classes, data.dim());
  Vector b = Vector::Zero(data.num_classes);
  Matrix vel_w = Matrix::Zero(w.rows(), w.cols());
  Vector vel_b = Vector::Zero(b.size());

  for (int epoch = 0; epoch < hp.epochs; ++epoch) {
    const auto sched = detail::schedule_for_epoch(hp, epoch);
    detail::for_each_batch(data.size(), hp.batch_size, rng, [&](std::span<const std::size_t> idx) {
      const Features xb = detail::gather_rows(data.x, idx);
      Matrix p = (xb * w.transpose()).rowwise() + b.transpose();
      detail::softmax_rows(p);
      const Matrix delta = (p - detail::one_hot_rows(data.y, idx, data.num_classes)) /
                           static_cast<double>(idx.size());
      Matrix grad_w = delta.transpose() * xb;
      if (hp.l2 > 0.0) grad_w += hp.l2 * w;
      vel_w = sched.momentum * vel_w - sched.learning_rate * grad_w;
      vel_b = sched.momentum * vel_b - sched.learning_rate * delta.colwise().sum().transpose();
      w += vel_w;
      b += vel_b;
    });
  }
  if (!w.allFinite() || !b.allFinite()) throw TrainingError("logreg: training diverged");
  return {std::move(w), std::move(b)};
}

LinearSvm::LinearSvm(Matrix w, Vector b) : w_(std::move(w)), b_(std::move(b)) {
  if (b_.size() != w_.rows()) throw ContractError("svm bias length != class count");
}

Vector LinearSvm::margins(const VectorRef& x) const { return w_ * x + b_; }

Matrix LinearSvm::margins_batch(const Features& x) const {
  return ((x * w_.transpose()).rowwise() + b_.transpose()).transpose();
}

LinearSvm LinearSvm::train(const Dataset& data, const Hyperparams& hp, std::uint64_t seed) {
  detail::check_trainable(data, hp, "svm");
  std::mt19937_64 rng(seed);
  const int classes = data.num_classes;
  Matrix w = Matrix::Zero(classes, data.dim());
  Vector b = Vector::Zero(classes);
  Matrix vel_w = Matrix::Zero(w.rows(), w.cols());
  Vector vel_b = Vector::Zero(b.size());

  // Sub-gradient descent on l2/2 ||w_k||^2 + mean hinge(1 - t * (w_k.x + b_k)),
  // t = +1 for class k and -1 otherwise, all k at once.
  for (int epoch = 0; epoch < hp.epochs; ++epoch) {
    const auto sched = detail::schedule_for_epoch(hp, epoch);
    detail::for_each_batch(data.size(), hp.batch_size, rng, [&](std::span<const std::size_t> idx) {
      const Features xb = detail::gather_rows(data.x, idx);
      const Matrix targets =
          2.0 * detail::one_hot_rows(data.y, idx, classes).array() - 1.0;  // B x N
      const Matrix margins = (xb * w.transpose()).rowwise() + b.transpose();
      const Matrix active = ((targets.array() * margins.array()) < 1.0).cast<double>();
      const Matrix coeff = -(targets.array() * active.array()) / static_cast<double>(idx.size());
      const Matrix grad_w = coeff.transpose() * xb + hp.l2 * w;
      const Vector grad_b = coeff.colwise().sum().transpose();
      vel_w = sched.momentum * vel_w - sched.learning_rate * grad_w;
      vel_b = sched.momentum * vel_b - sched.learning_rate * grad_b;
      w += vel_w;
      b += vel_b;
    });
  }
  if (!w.allFinite() || !b.allFinite()) throw TrainingError("svm: training diverged");
  for (Eigen::Index k = 0; k < w.rows(); ++k) {
    if (w.row(k).norm() == 0.0) throw TrainingError("svm: zero hyperplane for class " + std::to_string(k));
  }
  return {std::move(w), std::move(b)};
}

}  // namespace advt
