#include <algorithm>
#include <cmath>
#include <numeric>

#include "advt/models.hpp"

namespace advt {

KnnModel::KnnModel(Features x, std::vector<int> labels, int num_classes, int k)
    : x_(std::move(x)), labels_(std::move(labels)), num_classes_(num_classes), k_(k) {
  if (static_cast<std::size_t>(x_.rows()) != labels_.size()) {
    throw ContractError("kNN memory: point and label counts differ");
  }
  if (labels_.empty()) throw TrainingError("kNN memory is empty");
  if (k_ < 1) throw ContractError("k must be positive");
  for (int y : labels_) {
    if (y < 0 || y >= num_classes_) throw ContractError("kNN label out of range");
  }
}

Vector KnnModel::squared_distances(const VectorRef& x) const {
  if (x.size() != x_.cols()) throw ContractError("input dimension does not match kNN memory");
  return (x_.rowwise() - x.transpose()).rowwise().squaredNorm();
}

int KnnModel::predict(const VectorRef& x) const {
  const Vector d = squared_distances(x);
  const auto n = static_cast<std::size_t>(d.size());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t k = std::min(n, static_cast<std::size_t>(k_));
  // Equal distances resolve toward the lower class index.
  auto closer = [&](std::size_t a, std::size_t b) {
    const double da = d(static_cast<Eigen::Index>(a));
    const double db = d(static_cast<Eigen::Index>(b));
    if (da != db) return da < db;
    return labels_[a] < labels_[b];
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), closer);
  if (k == 1) return labels_[order.front()];
  Vector votes = Vector::Zero(num_classes_);
  for (std::size_t i = 0; i < k; ++i) votes(labels_[order[i]]) += 1.0;
  return argmax(votes);
}

std::vector<int> KnnModel::predict_batch(const Features& x) const {
  std::vector<int> out(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    out[static_cast<std::size_t>(i)] = predict(x.row(i).transpose());
  }
  return out;
}

namespace {

// softmax(-d) weights; shifted by the minimum distance for stability.
Vector softmin_weights(const Vector& d) {
  const Vector e = (-(d.array() - d.minCoeff())).exp();
  return e / e.sum();
}

}  // namespace

Vector KnnModel::smoothed_scores(const VectorRef& x) const {
  const Vector a = softmin_weights(squared_distances(x));
  Vector f = Vector::Zero(num_classes_);
  for (Eigen::Index i = 0; i < a.size(); ++i) f(labels_[static_cast<std::size_t>(i)]) += a(i);
  return f;
}

Vector KnnModel::cost_gradient(const VectorRef& x, int y) const {
  // -d/dx log f_y = 2 (zbar - zbar_y), where zbar is the soft-min weighted
  // mean of all stored points and zbar_y the same mean restricted to class y.
  const Vector d = squared_distances(x);
  const Vector a = softmin_weights(d);
  double min_y = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    if (labels_[static_cast<std::size_t>(i)] == y) min_y = std::min(min_y, d(i));
  }
  if (!std::isfinite(min_y)) {
    throw DegenerateModelError("no stored point of class " + std::to_string(y));
  }
  Vector a_y = Vector::Zero(d.size());
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    if (labels_[static_cast<std::size_t>(i)] == y) a_y(i) = std::exp(-(d(i) - min_y));
  }
  a_y /= a_y.sum();
  const Vector zbar = x_.transpose() * a;
  const Vector zbar_y = x_.transpose() * a_y;
  return 2.0 * (zbar - zbar_y);
}

Matrix KnnModel::jacobian(const VectorRef& x) const {
  // d f_i / dx = 2 (sum_{z in class i} a_z z - f_i zbar).
  const Vector a = softmin_weights(squared_distances(x));
  const Vector zbar = x_.transpose() * a;
  Matrix weighted = Matrix::Zero(num_classes_, x_.rows());
  Vector f = Vector::Zero(num_classes_);
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const int c = labels_[static_cast<std::size_t>(i)];
    weighted(c, i) = a(i);
    f(c) += a(i);
  }
  return 2.0 * (weighted * x_ - f * zbar.transpose());
}

}  // namespace advt
