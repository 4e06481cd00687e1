#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "sldd/prox.hpp"
#include "sldd/tensor.hpp"

namespace sldd {

struct LambdaSchedule {
  int k_steps = 50;
  double eps_ratio = 1e-4;
  // Multiplies every generated lambda (feature selection runs at 0.1).
  double scale = 1.0;
  // When nonempty, used verbatim instead of the geometric grid.
  std::vector<double> explicit_values;
};

struct SolverConfig {
  double alpha = 0.99;
  LambdaSchedule lambda_schedule;
  // Defaults to default_learning_rate(x, batch_size).
  std::optional<double> learning_rate;
  int batch_size = 4;
  int max_epochs = 2000;
  int lookbehind = 5;
  // Relative objective decrease that counts as an improvement.
  double tol = 1e-9;
  double zero_clip_tol = 1e-8;
  std::uint64_t seed = 0;

  void validate() const;
};

enum class PenaltyKind { kElementwise, kGroup };

// Mean cross-entropy plus lambda [(1 - alpha)/2 |W|_F^2 + alpha |W|_{1,1}].
// With kGroup the l1 term is the sum of column norms. The bias is unpenalized.
double elastic_objective(const SparseLinearModel& model, const FeatureMatrix& feats, const LabelVector& labels,
                         double lambda, double alpha, PenaltyKind penalty = PenaltyKind::kElementwise);
double elastic_objective(const Matrix& weights, const Vector& bias, const Matrix& x, const LabelVector& labels,
                         double lambda, double alpha, PenaltyKind penalty = PenaltyKind::kElementwise);

// Gradient of the mean cross-entropy at (W, b): returns {dW, db}.
std::pair<Matrix, Vector> cross_entropy_gradient(const Matrix& weights, const Vector& bias, const Matrix& x,
                                                 const LabelVector& labels);

// Intercept-only maximum-likelihood bias: log class frequencies.
Vector intercept_only_bias(const LabelVector& labels);

// Smallest lambda at which W = 0 (with the intercept-only bias) is a fixed
// point of the proximal step.
double lambda_max(const FeatureMatrix& feats, const LabelVector& labels, double alpha, bool grouped);

std::vector<double> lambda_grid(double lambda_max_value, const LambdaSchedule& schedule);

// Step size 1/(4 L(b)) for minibatch SAGA, where L(b) interpolates between the
// full-objective and worst per-example smoothness constants.
double default_learning_rate(const Matrix& x, int batch_size);

// Per-example logit residual table with running averages of the stored
// gradient contributions r_i x_i^T.
struct SagaState {
  Matrix stored_residuals;  // N x C
  Matrix grad_avg;          // C x F
  Vector grad0_avg;         // C

  // Max abs difference between grad_avg/grad0_avg and a fresh recomputation
  // from the stored residuals.
  double consistency_error(const Matrix& x) const;
};

struct SagaResult {
  SparseLinearModel model;
  double objective = 0.0;
  double initial_objective = 0.0;
  int epochs = 0;
  std::vector<double> epoch_objectives;
};

// Minibatch SAGA for multinomial logistic regression with an elastic-net or
// group proximal step. Holds references to the training data.
class SagaSolver {
 public:
  SagaSolver(const Matrix& x, const LabelVector& labels, double lambda, const SolverConfig& config, ProxSpec prox,
             const SparseLinearModel* warm_start = nullptr);

  // One variance-reduced update on the given example indices.
  void step(std::span<const int> batch);
  // One shuffled pass; returns the objective at the end of the pass.
  double run_epoch();
  // Epochs until the lookbehind or max_epochs criterion fires; returns the
  // best epoch's model after clipping.
  SagaResult run();

  double objective() const;
  double learning_rate() const { return gamma_; }
  const Matrix& weights() const { return weights_; }
  const Vector& bias() const { return bias_; }
  const SagaState& state() const { return state_; }

 private:
  void residual(Eigen::Index i, Eigen::Ref<Vector> out) const;

  const Matrix& x_;
  const LabelVector& labels_;
  double lambda_;
  SolverConfig config_;
  ProxSpec prox_;
  double gamma_;
  Matrix weights_;
  Vector bias_;
  SagaState state_;
  std::vector<int> order_;
  std::mt19937_64 rng_;
};

SparseLinearModel saga_fit(const FeatureMatrix& feats, const LabelVector& labels, double lambda, double alpha,
                           const SolverConfig& config, const SparseLinearModel* warm_start = nullptr,
                           const ProxSpec& prox = ProxSpec::elementwise());

struct PathEntry {
  double lambda = 0.0;
  SparseLinearModel model;
  double objective = 0.0;
  double train_accuracy = 0.0;
  SparsityMetrics sparsity;
};

struct RegularizationPath {
  SolverConfig config;
  std::vector<PathEntry> entries;
};

// Warm-started path over the lambda grid. `stop` is consulted after every
// entry; returning true ends the path early.
RegularizationPath fit_path(const FeatureMatrix& feats, const LabelVector& labels, const SolverConfig& config,
                            const ProxSpec& prox = ProxSpec::elementwise(),
                            const std::function<bool(const PathEntry&)>& stop = {});

// Picks the densest path entry with n_per_class <= budget_select, then zeroes
// the smallest-magnitude nonzeros until n_per_class <= budget_final.
SparseLinearModel sparsify(const RegularizationPath& path, double budget_select = 10.0, double budget_final = 5.0);
// The magnitude-clipping half of sparsify on a single model.
SparseLinearModel clip_to_budget(const SparseLinearModel& model, double budget_final);

}  // namespace sldd
