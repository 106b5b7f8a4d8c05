#ifndef ADVT_SRC_MODELS_SGD_HPP
#define ADVT_SRC_MODELS_SGD_HPP

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "advt/dataset.hpp"
#include "advt/error.hpp"
#include "advt/models.hpp"

namespace advt::detail {

// Learning rate / momentum for a given epoch under the step-decay schedule.
struct SgdSchedule {
  double learning_rate;
  double momentum;
};

inline SgdSchedule schedule_for_epoch(const Hyperparams& hp, int epoch) {
  if (hp.decay_after_epochs > 0 && epoch >= hp.decay_after_epochs) {
    return {hp.learning_rate * hp.decay_factor, hp.momentum * hp.decay_factor};
  }
  return {hp.learning_rate, hp.momentum};
}

inline void check_trainable(const Dataset& data, const Hyperparams& hp, const char* who) {
  if (data.empty()) throw TrainingError(std::string(who) + ": empty training set");
  if (hp.epochs < 1 || hp.batch_size < 1 || hp.learning_rate <= 0.0) {
    throw TrainingError(std::string(who) + ": invalid hyperparameters");
  }
  validate(data);
  const int first = data.y.front();
  if (std::all_of(data.y.begin(), data.y.end(), [&](int y) { return y == first; })) {
    throw TrainingError(std::string(who) + ": training set holds a single class");
  }
}

// Visits shuffled mini-batches; fn(batch_indices) is called once per batch.
template <typename Fn>
void for_each_batch(std::size_t n, int batch_size, std::mt19937_64& rng, Fn&& fn) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(n, start + static_cast<std::size_t>(batch_size));
    fn(std::span<const std::size_t>(order.data() + start, end - start));
  }
}

inline Features gather_rows(const Features& x, std::span<const std::size_t> idx) {
  Features out(static_cast<Eigen::Index>(idx.size()), x.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    out.row(static_cast<Eigen::Index>(r)) = x.row(static_cast<Eigen::Index>(idx[r]));
  }
  return out;
}

inline Matrix one_hot_rows(const std::vector<int>& y, std::span<const std::size_t> idx,
                           int num_classes) {
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(idx.size()), num_classes);
  for (std::size_t r = 0; r < idx.size(); ++r) out(static_cast<Eigen::Index>(r), y[idx[r]]) = 1.0;
  return out;
}

// Row-wise softmax, numerically stabilized.
inline void softmax_rows(Matrix& z) {
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const double m = z.row(r).maxCoeff();
    z.row(r) = (z.row(r).array() - m).exp();
    z.row(r) /= z.row(r).sum();
  }
}

inline Vector softmax(const Vector& z) {
  const Vector e = (z.array() - z.maxCoeff()).exp();
  return e / e.sum();
}

}  // namespace advt::detail

#endif  // ADVT_SRC_MODELS_SGD_HPP
