#include <cmath>
#include <random>

#include "advt/models.hpp"
#include "sgd.hpp"

namespace advt {

NeuralNet::NeuralNet(std::vector<Layer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw ContractError("network needs at least one layer");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    if (layers_[l].b.size() != layers_[l].w.rows()) {
      throw ContractError("layer bias length does not match its output width");
    }
    if (l > 0 && layers_[l].w.cols() != layers_[l - 1].w.rows()) {
      throw ContractError("layer widths do not chain");
    }
  }
}

Vector NeuralNet::logits(const VectorRef& x) const {
  Vector h = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Vector z = layers_[l].w * h + layers_[l].b;
    h = (l + 1 < layers_.size()) ? Vector(z.cwiseMax(0.0)) : z;
  }
  return h;
}

Vector NeuralNet::scores(const VectorRef& x) const { return detail::softmax(logits(x)); }

Matrix NeuralNet::scores_batch(const Features& x) const {
  Matrix h = x;  // n x d
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Matrix z = (h * layers_[l].w.transpose()).rowwise() + layers_[l].b.transpose();
    h = (l + 1 < layers_.size()) ? Matrix(z.cwiseMax(0.0)) : z;
  }
  detail::softmax_rows(h);
  return h.transpose();
}

Vector NeuralNet::cost_gradient(const VectorRef& x, int y) const {
  // Forward pass keeping pre-activations, then backprop of (p - e_y).
  std::vector<Vector> pre;
  pre.reserve(layers_.size());
  Vector h = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    pre.push_back(layers_[l].w * h + layers_[l].b);
    h = (l + 1 < layers_.size()) ? Vector(pre.back().cwiseMax(0.0)) : pre.back();
  }
  Vector delta = detail::softmax(h);
  delta(y) -= 1.0;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    Vector up = layers_[l].w.transpose() * delta;
    if (l == 0) return up;
    delta = up.array() * (pre[l - 1].array() > 0.0).cast<double>();
  }
  return delta;  // unreachable
}

Matrix NeuralNet::jacobian(const VectorRef& x) const {
  // d logits / d x accumulated layer by layer, then the softmax Jacobian.
  Matrix dz_dx;
  Vector h = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Vector z = layers_[l].w * h + layers_[l].b;
    dz_dx = (l == 0) ? layers_[l].w : Matrix(layers_[l].w * dz_dx);
    if (l + 1 < layers_.size()) {
      const Vector mask = (z.array() > 0.0).cast<double>();
      dz_dx = mask.asDiagonal() * dz_dx;
      h = z.cwiseMax(0.0);
    } else {
      h = z;
    }
  }
  const Vector p = detail::softmax(h);
  const Matrix softmax_jac = Matrix(p.asDiagonal()) - p * p.transpose();
  return softmax_jac * dz_dx;
}

NeuralNet NeuralNet::train(const Dataset& data, const Hyperparams& hp, std::uint64_t seed) {
  detail::check_trainable(data, hp, "net");
  std::mt19937_64 rng(seed);

  std::vector<int> widths{data.dim()};
  widths.insert(widths.end(), hp.hidden.begin(), hp.hidden.end());
  widths.push_back(data.num_classes);

  std::vector<Layer> layers;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    std::normal_distribution<double> init(0.0, std::sqrt(2.0 / widths[l]));
    Layer layer{Matrix(widths[l + 1], widths[l]), Vector::Zero(widths[l + 1])};
    for (Eigen::Index i = 0; i < layer.w.size(); ++i) layer.w.data()[i] = init(rng);
    layers.push_back(std::move(layer));
  }

  const std::size_t depth = layers.size();
  std::vector<Matrix> vel_w;
  std::vector<Vector> vel_b;
  for (const auto& layer : layers) {
    vel_w.push_back(Matrix::Zero(layer.w.rows(), layer.w.cols()));
    vel_b.push_back(Vector::Zero(layer.b.size()));
  }

  std::uniform_real_distribution<double> keep(0.0, 1.0);
  const double keep_scale = hp.dropout > 0.0 ? 1.0 / (1.0 - hp.dropout) : 1.0;
  std::vector<Matrix> acts(depth + 1);
  std::vector<Matrix> pre(depth);
  for (int epoch = 0; epoch < hp.epochs; ++epoch) {
    const auto sched = detail::schedule_for_epoch(hp, epoch);
    detail::for_each_batch(data.size(), hp.batch_size, rng, [&](std::span<const std::size_t> idx) {
      const double inv_b = 1.0 / static_cast<double>(idx.size());
      acts[0] = detail::gather_rows(data.x, idx);
      for (std::size_t l = 0; l < depth; ++l) {
        pre[l] = (acts[l] * layers[l].w.transpose()).rowwise() + layers[l].b.transpose();
        acts[l + 1] = (l + 1 < depth) ? Matrix(pre[l].cwiseMax(0.0)) : pre[l];
        if (l + 1 < depth && hp.dropout > 0.0) {
          // Inverted dropout: the mask is folded into pre so backprop sees it too.
          for (Eigen::Index i = 0; i < acts[l + 1].size(); ++i) {
            if (keep(rng) < hp.dropout) {
              acts[l + 1].data()[i] = 0.0;
              pre[l].data()[i] = 0.0;
            } else {
              acts[l + 1].data()[i] *= keep_scale;
            }
          }
        }
      }
      detail::softmax_rows(acts[depth]);
      Matrix delta = (acts[depth] - detail::one_hot_rows(data.y, idx, data.num_classes)) * inv_b;
      for (std::size_t l = depth; l-- > 0;) {
        Matrix grad_w = delta.transpose() * acts[l];
        if (hp.l2 > 0.0) grad_w += hp.l2 * layers[l].w;
        const Vector grad_b = delta.colwise().sum().transpose();
        if (l > 0) {
          delta = (delta * layers[l].w).array() * (pre[l - 1].array() > 0.0).cast<double>() * keep_scale;
        }
        vel_w[l] = sched.momentum * vel_w[l] - sched.learning_rate * grad_w;
        vel_b[l] = sched.momentum * vel_b[l] - sched.learning_rate * grad_b;
        layers[l].w += vel_w[l];
        layers[l].b += vel_b[l];
      }
    });
  }

  for (const auto& layer : layers) {
    if (!layer.w.allFinite() || !layer.b.allFinite()) {
      throw TrainingError("net: training diverged");
    }
  }
  return NeuralNet(std::move(layers));
}

}  // namespace advt
