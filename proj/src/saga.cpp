#include "sldd/saga.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <tuple>

#include "sldd/error.hpp"

namespace sldd {

namespace {

void softmax_inplace(Eigen::Ref<Vector> z) {
  const double m = z.maxCoeff();
  double sum = 0.0;
  for (Eigen::Index c = 0; c < z.size(); ++c) {
    z[c] = std::exp(z[c] - m);
    sum += z[c];
  }
  z /= sum;
}

double mean_cross_entropy(const Matrix& w, const Vector& b, const Matrix& x, const LabelVector& labels) {
  const Eigen::Index n = x.rows();
  double total = 0.0;
  Vector z(w.rows());
  for (Eigen::Index i = 0; i < n; ++i) {
    z.noalias() = w * x.row(i).transpose();
    z += b;
    const double m = z.maxCoeff();
    double sum = 0.0;
    for (Eigen::Index c = 0; c < z.size(); ++c) sum += std::exp(z[c] - m);
    total += m + std::log(sum) - z[labels[static_cast<std::size_t>(i)]];
  }
  return total / static_cast<double>(n);
}

void check_shapes(const Matrix& w, const Vector& b, const Matrix& x, const LabelVector& labels) {
  if (x.cols() != w.cols()) throw ConfigError("feature count does not match model width");
  if (static_cast<std::size_t>(x.rows()) != labels.size()) throw ConfigError("label count does not match rows");
  if (b.size() != w.rows() || w.rows() != labels.num_classes) throw ConfigError("class count mismatch");
  if (x.rows() == 0) throw ConfigError("empty training set");
}

}  // namespace

void SolverConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
  if (lambda_schedule.explicit_values.empty()) {
    if (!(lambda_schedule.eps_ratio > 0.0 && lambda_schedule.eps_ratio < 1.0)) {
      throw ConfigError("eps_ratio must lie in (0, 1)");
    }
    if (lambda_schedule.k_steps < 1) throw ConfigError("k_steps must be >= 1");
  }
  if (!(lambda_schedule.scale > 0.0)) throw ConfigError("lambda scale must be positive");
  if (learning_rate && !(*learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (lookbehind < 1) throw ConfigError("lookbehind must be >= 1");
  if (!(zero_clip_tol >= 0.0)) throw ConfigError("zero_clip_tol must be nonnegative");
  if (!(tol >= 0.0)) throw ConfigError("tol must be nonnegative");
}

double elastic_objective(const Matrix& w, const Vector& b, const Matrix& x, const LabelVector& labels, double lambda,
                         double alpha, PenaltyKind penalty) {
  check_shapes(w, b, x, labels);
  double sparse_term = 0.0;
  if (penalty == PenaltyKind::kElementwise) {
    sparse_term = w.cwiseAbs().sum();
  } else {
    for (Eigen::Index l = 0; l < w.cols(); ++l) sparse_term += w.col(l).norm();
  }
  const double ridge = 0.5 * w.squaredNorm();
  return mean_cross_entropy(w, b, x, labels) + lambda * ((1.0 - alpha) * ridge + alpha * sparse_term);
}

double elastic_objective(const SparseLinearModel& model, const FeatureMatrix& feats, const LabelVector& labels,
                         double lambda, double alpha, PenaltyKind penalty) {
  return elastic_objective(model.dense(), model.bias(), feats.values(), labels, lambda, alpha, penalty);
}

std::pair<Matrix, Vector> cross_entropy_gradient(const Matrix& w, const Vector& b, const Matrix& x,
                                                 const LabelVector& labels) {
  check_shapes(w, b, x, labels);
  Matrix gw = Matrix::Zero(w.rows(), w.cols());
  Vector gb = Vector::Zero(w.rows());
  Vector z(w.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    z.noalias() = w * x.row(i).transpose();
    z += b;
    softmax_inplace(z);
    z[labels[static_cast<std::size_t>(i)]] -= 1.0;
    gw.noalias() += z * x.row(i);
    gb += z;
  }
  const double inv = 1.0 / static_cast<double>(x.rows());
  return {gw * inv, gb * inv};
}

Vector intercept_only_bias(const LabelVector& labels) {
  Vector counts = Vector::Zero(labels.num_classes);
  for (int y : labels.labels) counts[y] += 1.0;
  const double n = static_cast<double>(labels.size());
  Vector b(labels.num_classes);
  for (Eigen::Index c = 0; c < b.size(); ++c) {
    // Absent classes get half an observation so the bias stays finite.
    b[c] = std::log(std::max(counts[c], 0.5) / n);
  }
  return b;
}

double lambda_max(const FeatureMatrix& feats, const LabelVector& labels, double alpha, bool grouped) {
  if (!(alpha > 0.0)) throw ConfigError("lambda_max requires alpha > 0");
  const Matrix w0 = Matrix::Zero(labels.num_classes, feats.cols());
  const auto [gw, gb] = cross_entropy_gradient(w0, intercept_only_bias(labels), feats.values(), labels);
  double top = 0.0;
  if (grouped) {
    for (Eigen::Index l = 0; l < gw.cols(); ++l) top = std::max(top, gw.col(l).norm());
  } else {
    top = gw.cwiseAbs().maxCoeff();
  }
  return top / alpha;
}

std::vector<double> lambda_grid(double lmax, const LambdaSchedule& schedule) {
  std::vector<double> out;
  if (!schedule.explicit_values.empty()) {
    for (double v : schedule.explicit_values) out.push_back(v * schedule.scale);
  } else if (schedule.k_steps == 1) {
    out.push_back(lmax * schedule.scale);
  } else {
    const double log_ratio = std::log(schedule.eps_ratio);
    for (int k = 0; k < schedule.k_steps; ++k) {
      const double t = static_cast<double>(k) / (schedule.k_steps - 1);
      out.push_back(schedule.scale * lmax * std::exp(t * log_ratio));
    }
  }
  for (std::size_t k = 1; k < out.size(); ++k) {
    if (!(out[k] < out[k - 1])) throw ConfigError("lambda schedule must be strictly decreasing");
  }
  return out;
}

double default_learning_rate(const Matrix& x, int batch_size) {
  // Softmax cross-entropy has logit curvature at most 1/2, so example i is
  // (|x_i|^2 + 1)/2 smooth once the bias input is appended.
  const Eigen::Index n = x.rows();
  double l_max = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) l_max = std::max(l_max, 0.5 * (x.row(i).squaredNorm() + 1.0));
  // Full-objective smoothness from the top eigenvalue of the augmented Gram matrix.
  Vector v = Vector::Ones(x.cols() + 1) / std::sqrt(static_cast<double>(x.cols() + 1));
  double eig = 0.0;
  for (int it = 0; it < 100; ++it) {
    Vector xv = x * v.head(x.cols());
    xv.array() += v[x.cols()];
    Vector next(x.cols() + 1);
    next.head(x.cols()) = x.transpose() * xv;
    next[x.cols()] = xv.sum();
    next /= static_cast<double>(n);
    eig = next.norm();
    if (!(eig > 0.0)) break;
    v = next / eig;
  }
  const double l_full = 0.5 * eig;
  const double b = std::min<double>(batch_size, static_cast<double>(n));
  double l_batch = l_max;
  if (n > 1) {
    const double nn = static_cast<double>(n);
    l_batch = nn * (b - 1.0) / (b * (nn - 1.0)) * l_full + (nn - b) / (b * (nn - 1.0)) * l_max;
  }
  return 1.0 / (4.0 * std::max(l_batch, 1e-12));
}

double SagaState::consistency_error(const Matrix& x) const {
  const double inv = 1.0 / static_cast<double>(x.rows());
  const Matrix g = stored_residuals.transpose() * x * inv;
  const Vector g0 = stored_residuals.colwise().sum().transpose() * inv;
  return std::max((g - grad_avg).cwiseAbs().maxCoeff(), (g0 - grad0_avg).cwiseAbs().maxCoeff());
}

SagaSolver::SagaSolver(const Matrix& x, const LabelVector& labels, double lambda, const SolverConfig& config,
                       ProxSpec prox, const SparseLinearModel* warm_start)
    : x_(x), labels_(labels), lambda_(lambda), config_(config), prox_(std::move(prox)), rng_(config.seed) {
  config_.validate();
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be nonnegative");
  const int c = labels.num_classes;
  if (warm_start) {
    weights_ = warm_start->dense();
    bias_ = warm_start->bias();
  } else {
    weights_ = Matrix::Zero(c, x.cols());
    bias_ = intercept_only_bias(labels);
  }
  check_shapes(weights_, bias_, x_, labels_);
  gamma_ = config_.learning_rate.value_or(default_learning_rate(x_, config_.batch_size));

  const Eigen::Index n = x_.rows();
  state_.stored_residuals.resize(n, c);
  for (Eigen::Index i = 0; i < n; ++i) {
    Vector r(c);
    residual(i, r);
    state_.stored_residuals.row(i) = r.transpose();
  }
  const double inv = 1.0 / static_cast<double>(n);
  state_.grad_avg = state_.stored_residuals.transpose() * x_ * inv;
  state_.grad0_avg = state_.stored_residuals.colwise().sum().transpose() * inv;

  order_.resize(static_cast<std::size_t>(n));
  std::iota(order_.begin(), order_.end(), 0);
}

void SagaSolver::residual(Eigen::Index i, Eigen::Ref<Vector> out) const {
  out.noalias() = weights_ * x_.row(i).transpose();
  out += bias_;
  softmax_inplace(out);
  out[labels_[static_cast<std::size_t>(i)]] -= 1.0;
}

void SagaSolver::step(std::span<const int> batch) {
  const Eigen::Index c = weights_.rows();
  const auto b = static_cast<double>(batch.size());
  Matrix fresh(static_cast<Eigen::Index>(batch.size()), c);
  Matrix d = Matrix::Zero(c, weights_.cols());
  Vector d0 = Vector::Zero(c);
  Vector r(c);
  for (std::size_t k = 0; k < batch.size(); ++k) {
    const int i = batch[k];
    residual(i, r);
    fresh.row(static_cast<Eigen::Index>(k)) = r.transpose();
    const Vector delta = r - state_.stored_residuals.row(i).transpose();
    d.noalias() += delta * x_.row(i);
    d0 += delta;
  }
  d /= b;
  d0 /= b;

  weights_ -= gamma_ * (d + state_.grad_avg);
  bias_ -= gamma_ * (d0 + state_.grad0_avg);
  prox_.apply(weights_, gamma_ * lambda_ * config_.alpha, gamma_ * lambda_ * (1.0 - config_.alpha));

  const double share = b / static_cast<double>(x_.rows());
  state_.grad_avg += share * d;
  state_.grad0_avg += share * d0;
  for (std::size_t k = 0; k < batch.size(); ++k) {
    state_.stored_residuals.row(batch[k]) = fresh.row(static_cast<Eigen::Index>(k));
  }
}

double SagaSolver::objective() const {
  return elastic_objective(weights_, bias_, x_, labels_, lambda_, config_.alpha,
                           prox_.grouped() ? PenaltyKind::kGroup : PenaltyKind::kElementwise);
}

double SagaSolver::run_epoch() {
  std::shuffle(order_.begin(), order_.end(), rng_);
  const std::size_t bs = static_cast<std::size_t>(config_.batch_size);
  for (std::size_t start = 0; start < order_.size(); start += bs) {
    const std::size_t len = std::min(bs, order_.size() - start);
    step(std::span<const int>(order_.data() + start, len));
  }
  return objective();
}

SagaResult SagaSolver::run() {
  SagaResult result;
  result.initial_objective = objective();
  if (!std::isfinite(result.initial_objective)) {
    throw DivergenceError("saga: non-finite objective at initialization", result.initial_objective, 0);
  }
  double best = result.initial_objective;
  Matrix best_w = weights_;
  Vector best_b = bias_;
  int since_best = 0;
  int epoch = 0;
  while (epoch < config_.max_epochs) {
    ++epoch;
    const double obj = run_epoch();
    if (!std::isfinite(obj)) {
      std::ostringstream os;
      os << "saga: objective became non-finite at epoch " << epoch << " (lambda " << lambda_ << ")";
      throw DivergenceError(os.str(), best, epoch);
    }
    result.epoch_objectives.push_back(obj);
    if (obj < best - config_.tol * std::max(1.0, std::abs(best))) {
      since_best = 0;
    } else {
      ++since_best;
    }
    if (obj < best) {
      best = obj;
      best_w = weights_;
      best_b = bias_;
    }
    if (since_best >= config_.lookbehind) break;
  }
  for (Eigen::Index r = 0; r < best_w.rows(); ++r) {
    for (Eigen::Index col = 0; col < best_w.cols(); ++col) {
      if (std::abs(best_w(r, col)) < config_.zero_clip_tol) best_w(r, col) = 0.0;
    }
  }
  result.epochs = epoch;
  result.model = SparseLinearModel(std::move(best_w), std::move(best_b),
                                   ModelMeta{lambda_, config_.alpha, config_.seed, "saga"});
  result.objective = elastic_objective(result.model.dense(), result.model.bias(), x_, labels_, lambda_, config_.alpha,
                                       prox_.grouped() ? PenaltyKind::kGroup : PenaltyKind::kElementwise);
  return result;
}

SparseLinearModel saga_fit(const FeatureMatrix& feats, const LabelVector& labels, double lambda, double alpha,
                           const SolverConfig& config, const SparseLinearModel* warm_start, const ProxSpec& prox) {
  SolverConfig cfg = config;
  cfg.alpha = alpha;
  SagaSolver solver(feats.values(), labels, lambda, cfg, prox, warm_start);
  return solver.run().model;
}

RegularizationPath fit_path(const FeatureMatrix& feats, const LabelVector& labels, const SolverConfig& config,
                            const ProxSpec& prox, const std::function<bool(const PathEntry&)>& stop) {
  config.validate();
  RegularizationPath path;
  path.config = config;
  const double lmax = lambda_max(feats, labels, config.alpha, prox.grouped());
  const std::vector<double> grid = lambda_grid(lmax, config.lambda_schedule);
  std::optional<SparseLinearModel> warm;
  for (double lambda : grid) {
    SagaResult fit;
    try {
      SagaSolver solver(feats.values(), labels, lambda, config, prox, warm ? &*warm : nullptr);
      fit = solver.run();
    } catch (const DivergenceError& e) {
      std::ostringstream os;
      os << "fit_path: solver diverged at lambda " << lambda << ": " << e.what();
      throw DivergenceError(os.str(), e.last_objective(), e.iteration());
    }
    PathEntry entry;
    entry.lambda = lambda;
    entry.model = fit.model.with_meta(ModelMeta{lambda, config.alpha, config.seed, "path"});
    entry.objective = fit.objective;
    entry.train_accuracy = accuracy(predict(entry.model, feats), labels);
    entry.sparsity = sparsity_metrics(entry.model);
    warm = entry.model;
    path.entries.push_back(std::move(entry));
    if (stop && stop(path.entries.back())) break;
  }
  return path;
}

SparseLinearModel clip_to_budget(const SparseLinearModel& model, double budget_final) {
  const auto limit = static_cast<std::size_t>(std::floor(budget_final * model.num_classes() + 1e-9));
  if (model.nnz() <= limit) return model;
  std::vector<WeightEntry> order = model.entries();
  std::stable_sort(order.begin(), order.end(), [](const WeightEntry& a, const WeightEntry& b) {
    const double ma = std::abs(a.value), mb = std::abs(b.value);
    if (ma != mb) return ma < mb;
    return std::tie(a.cls, a.feature) < std::tie(b.cls, b.feature);
  });
  Matrix w = model.dense();
  const std::size_t drop = model.nnz() - limit;
  for (std::size_t k = 0; k < drop; ++k) w(order[k].cls, order[k].feature) = 0.0;
  return SparseLinearModel(std::move(w), model.bias(), model.meta());
}

SparseLinearModel sparsify(const RegularizationPath& path, double budget_select, double budget_final) {
  if (path.entries.empty()) throw ConfigError("sparsify: empty path");
  const PathEntry* chosen = nullptr;
  double smallest = std::numeric_limits<double>::infinity();
  for (const auto& e : path.entries) {
    smallest = std::min(smallest, e.sparsity.n_per_class);
    if (e.sparsity.n_per_class <= budget_select &&
        (!chosen || e.sparsity.n_per_class >= chosen->sparsity.n_per_class)) {
      chosen = &e;
    }
  }
  if (!chosen) {
    std::ostringstream os;
    os << "sparsify: no path entry has n_per_class <= " << budget_select << " (smallest available " << smallest
       << ")";
    throw NumericError(os.str());
  }
  ModelMeta meta = chosen->model.meta();
  meta.lambda = chosen->lambda;
  meta.stage = "sparsified";
  return clip_to_budget(chosen->model, budget_final).with_meta(meta);
}

}  // namespace sldd
