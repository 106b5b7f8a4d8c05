#include "advt/substitute.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

namespace advt {

namespace {

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

Dataset append(const Dataset& set, const Features& points, std::vector<int> labels) {
  Dataset out;
  out.num_classes = set.num_classes;
  out.x.resize(set.x.rows() + points.rows(), set.x.cols());
  if (set.x.rows() > 0) out.x.topRows(set.x.rows()) = set.x;
  if (points.rows() > 0) out.x.bottomRows(points.rows()) = points;
  out.y = set.y;
  out.y.insert(out.y.end(), labels.begin(), labels.end());
  for (int y : labels) out.num_classes = std::max(out.num_classes, y + 1);
  return out;
}

Dataset label_and_append(const Dataset& set, const Features& points, Oracle& oracle,
                         int max_in_flight = 1) {
  return append(set, points, oracle.query_batch(points, max_in_flight));
}

Features gather(const Features& x, std::span<const std::size_t> rows) {
  Features out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(rows[i]));
  }
  return out;
}

// Removes rows equal to a row of `existing` or to an earlier kept row.
Features drop_duplicates(const Features& existing, const Features& points, std::size_t* dropped) {
  auto key = [](const auto& row) { return std::vector<double>(row.begin(), row.end()); };
  std::set<std::vector<double>> seen;
  for (Eigen::Index i = 0; i < existing.rows(); ++i) seen.insert(key(existing.row(i)));
  std::vector<std::size_t> keep;
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    if (seen.insert(key(points.row(i))).second) keep.push_back(static_cast<std::size_t>(i));
  }
  *dropped = static_cast<std::size_t>(points.rows()) - keep.size();
  return gather(points, keep);
}

}  // namespace

void SubstituteConfig::validate() const {
  if (family != Family::kNet && family != Family::kLogReg && family != Family::kSvm) {
    throw UnsupportedFamilyError("substitutes are net, logreg or svm, got " +
                                 std::string(family_name(family)));
  }
  if (!(lambda > 0.0)) throw ContractError("lambda must be positive");
  if (tau < 1) throw ContractError("tau must be at least 1");
  if (sigma < 0) throw ContractError("sigma must be non-negative");
  if (kappa < 1) throw ContractError("kappa must be at least 1");
  if (rho_max < 1) throw ContractError("rho_max must be at least 1");
  if (max_in_flight < 1) throw ContractError("max_in_flight must be at least 1");
}

double step_size(double lambda, int tau, int rho) {
  if (tau < 1) throw ContractError("tau must be at least 1");
  return (rho / tau) % 2 == 0 ? lambda : -lambda;
}

std::uint64_t query_count(std::uint64_t n, int sigma, std::uint64_t kappa, int rho,
                          bool reservoir) {
  std::uint64_t size = n;
  for (int r = 0; r < rho; ++r) {
    size += (reservoir && r >= sigma && kappa <= size) ? kappa : size;
  }
  return size;
}

std::vector<std::size_t> reservoir_select(std::size_t n, std::size_t kappa, const IndexRng& rng) {
  if (kappa > n) throw ContractError("reservoir larger than the input array");
  std::vector<std::size_t> slots(kappa);
  for (std::size_t i = 0; i < kappa; ++i) slots[i] = i;
  for (std::size_t i = kappa; i < n; ++i) {
    const std::size_t r = rng(i);
    if (r > i) throw ContractError("reservoir rng returned an index out of range");
    if (r < kappa) slots[r] = i;
  }
  return slots;
}

Features jacobian_points(const Model& substitute, const Dataset& set, double lambda_rho) {
  Features out(set.x.rows(), set.x.cols());
  for (Eigen::Index i = 0; i < set.x.rows(); ++i) {
    const Vector x = set.x.row(i).transpose();
    const int y = set.y[static_cast<std::size_t>(i)];
    if (y < 0 || y >= substitute.num_classes()) {
      throw ContractError("oracle label outside the substitute's classes");
    }
    const Matrix jac = jacobian(substitute, x);
    Vector moved = x + lambda_rho * jac.row(y).transpose().unaryExpr(&sign);
    clip_unit(moved);
    out.row(i) = moved.transpose();
  }
  return out;
}

Features svm_points(const LinearSvm& substitute, const Dataset& set, double lambda,
                    std::size_t* skipped) {
  std::vector<std::size_t> kept;
  Features moved(set.x.rows(), set.x.cols());
  std::size_t zero = 0;
  for (Eigen::Index i = 0; i < set.x.rows(); ++i) {
    const int y = set.y[static_cast<std::size_t>(i)];
    if (y < 0 || y >= substitute.weights().rows()) {
      throw ContractError("oracle label outside the substitute's classes");
    }
    const Vector w = substitute.weights().row(y).transpose();
    const double norm = w.norm();
    if (norm == 0.0) {
      ++zero;
      continue;
    }
    Vector x = set.x.row(i).transpose() - lambda * w / norm;
    clip_unit(x);
    moved.row(static_cast<Eigen::Index>(kept.size())) = x.transpose();
    kept.push_back(static_cast<std::size_t>(i));
  }
  if (skipped) *skipped = zero;
  return moved.topRows(static_cast<Eigen::Index>(kept.size()));
}

Dataset jacobian_augment(const Model& substitute, const Dataset& set, Oracle& oracle,
                         double lambda_rho) {
  return label_and_append(set, jacobian_points(substitute, set, lambda_rho), oracle);
}

Dataset reservoir_augment(const Model& substitute, const Dataset& set, Oracle& oracle,
                          double lambda_rho, std::size_t kappa, const IndexRng& rng) {
  if (kappa > set.size()) return jacobian_augment(substitute, set, oracle, lambda_rho);
  const auto slots = reservoir_select(set.size(), kappa, rng);
  return label_and_append(set, jacobian_points(substitute, set.subset(slots), lambda_rho), oracle);
}

Dataset svm_augment(const Model& substitute, const Dataset& set, Oracle& oracle, double lambda,
                    std::size_t* skipped) {
  return label_and_append(set, svm_points(substitute.as<LinearSvm>(), set, lambda, skipped), oracle);
}

SubstituteState train_substitute(Oracle& oracle, const Features& initial, const Features& probe,
                                 std::span<const int> probe_labels,
                                 const SubstituteConfig& config) {
  config.validate();
  if (initial.rows() == 0) throw ContractError("initial substitute set is empty");
  if (static_cast<std::size_t>(probe.rows()) != probe_labels.size()) {
    throw ContractError("probe labels do not match the probe set");
  }
  const Hyperparams hp = config.hyperparams.value_or(default_hyperparams(config.family));
  const std::uint64_t start_queries = oracle.queries();

  SubstituteState state;
  state.set.num_classes = 0;
  state.set.x.resize(0, initial.cols());
  try {
    state.set = label_and_append(state.set, initial, oracle, config.max_in_flight);
  } catch (const BudgetExhausted&) {
    state.budget_exhausted = true;
    state.queries = oracle.queries() - start_queries;
    return state;
  }

  auto fit = [&](int rho) {
    Dataset data = state.set;
    // The oracle may never have answered with the top classes yet; the
    // substitute still needs an output for every class it might be asked about.
    for (int y : probe_labels) data.num_classes = std::max(data.num_classes, y + 1);
    state.set.num_classes = data.num_classes;
    state.model = std::make_shared<const Model>(
        train(config.family, data, hp, derive_seed(config.seed, static_cast<std::uint64_t>(rho))));
    state.rho = rho;
    IterationMetrics m;
    m.rho = rho;
    m.set_size = state.set.size();
    m.queries = oracle.queries() - start_queries;
    m.agreement = probe.rows() > 0 ? agreement(*state.model, probe, probe_labels) : 0.0;
    state.history.push_back(m);
  };

  for (int rho = 0; rho < config.rho_max; ++rho) {
    fit(rho);
    const double lambda_rho =
        config.periodic_step ? step_size(config.lambda, config.tau, rho) : config.lambda;
    IterationMetrics& m = state.history.back();

    Features points;
    if (config.family == Family::kSvm) {
      points = svm_points(state.model->as<LinearSvm>(), state.set, lambda_rho, &m.skipped);
    } else if (config.reservoir && rho >= config.sigma &&
               static_cast<std::size_t>(config.kappa) <= state.set.size()) {
      std::mt19937_64 rng(derive_seed(config.seed ^ 0x5eed5eedULL, static_cast<std::uint64_t>(rho)));
      const auto slots = reservoir_select(state.set.size(), static_cast<std::size_t>(config.kappa),
                                          [&rng](std::size_t hi) {
                                            return std::uniform_int_distribution<std::size_t>(0, hi)(rng);
                                          });
      points = jacobian_points(*state.model, state.set.subset(slots), lambda_rho);
    } else {
      points = jacobian_points(*state.model, state.set, lambda_rho);
    }
    if (config.dedup) points = drop_duplicates(state.set.x, points, &m.duplicates_dropped);

    try {
      state.set = label_and_append(state.set, points, oracle, config.max_in_flight);
    } catch (const BudgetExhausted&) {
      state.budget_exhausted = true;
      state.queries = oracle.queries() - start_queries;
      return state;
    }
  }
  fit(config.rho_max);
  state.queries = oracle.queries() - start_queries;
  return state;
}

double agreement(const Model& model, const Features& probe, std::span<const int> labels) {
  if (probe.rows() == 0) throw ContractError("agreement needs a non-empty probe set");
  if (static_cast<std::size_t>(probe.rows()) != labels.size()) {
    throw ContractError("probe labels do not match the probe set");
  }
  const auto predicted = predict_batch(model, probe);
  std::size_t same = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) same += predicted[i] == labels[i] ? 1 : 0;
  return static_cast<double>(same) / static_cast<double>(labels.size());
}

double agreement(const Model& model, Oracle& oracle, const Features& probe) {
  if (probe.rows() == 0) throw ContractError("agreement needs a non-empty probe set");
  const auto labels = oracle.query_batch(probe);
  return agreement(model, probe, labels);
}

}  // namespace advt
