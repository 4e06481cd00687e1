#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace sldd {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

// Per-column statistics recorded by standardize(). Columns whose raw
// standard deviation is below kConstantStdTol are flagged constant and map to 0.
struct NormStats {
  std::vector<double> mean;
  std::vector<double> stddev;
  std::vector<bool> constant;

  static constexpr double kConstantStdTol = 1e-12;

  std::size_t size() const { return mean.size(); }
  NormStats subset(std::span<const int> columns) const;
};

// N x F pooled feature activations, one row per example.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;
  explicit FeatureMatrix(Matrix values);
  FeatureMatrix(Matrix values, NormStats stats);

  const Matrix& values() const { return values_; }
  Eigen::Index rows() const { return values_.rows(); }
  Eigen::Index cols() const { return values_.cols(); }
  bool normalized() const { return stats_.has_value(); }
  const std::optional<NormStats>& norm_stats() const { return stats_; }

  FeatureMatrix select_columns(std::span<const int> columns) const;
  FeatureMatrix select_rows(std::span<const int> rows) const;

 private:
  Matrix values_;
  std::optional<NormStats> stats_;
};

// N x F x H x W spatial feature maps stored contiguously in (n, l, i, j) order.
class FeatureMapBatch {
 public:
  FeatureMapBatch() = default;
  FeatureMapBatch(int n, int f, int h, int w);
  FeatureMapBatch(int n, int f, int h, int w, std::vector<double> values);

  int size() const { return n_; }
  int features() const { return f_; }
  int height() const { return h_; }
  int width() const { return w_; }
  int map_size() const { return h_ * w_; }

  double& at(int n, int l, int i, int j) { return data_[index(n, l, i, j)]; }
  double at(int n, int l, int i, int j) const { return data_[index(n, l, i, j)]; }

  // All F maps of example n as a contiguous F*H*W span.
  std::span<double> example(int n) { return {data_.data() + offset(n), stride()}; }
  std::span<const double> example(int n) const { return {data_.data() + offset(n), stride()}; }
  std::span<const double> map(int n, int l) const {
    return {data_.data() + offset(n) + static_cast<std::size_t>(l) * map_size(),
            static_cast<std::size_t>(map_size())};
  }

  const std::vector<double>& data() const { return data_; }
  FeatureMapBatch select_examples(std::span<const int> rows) const;

 private:
  std::size_t stride() const { return static_cast<std::size_t>(f_) * h_ * w_; }
  std::size_t offset(int n) const { return static_cast<std::size_t>(n) * stride(); }
  std::size_t index(int n, int l, int i, int j) const {
    return offset(n) + (static_cast<std::size_t>(l) * h_ + i) * w_ + j;
  }

  int n_ = 0, f_ = 0, h_ = 0, w_ = 0;
  std::vector<double> data_;
};

struct LabelVector {
  std::vector<int> labels;
  int num_classes = 0;

  LabelVector() = default;
  LabelVector(std::vector<int> labels, int num_classes);

  std::size_t size() const { return labels.size(); }
  int operator[](std::size_t i) const { return labels[i]; }
  LabelVector select(std::span<const int> rows) const;
};

struct ModelMeta {
  double lambda = 0.0;
  double alpha = 0.0;
  std::uint64_t seed = 0;
  std::string stage;
};

struct WeightEntry {
  int cls;
  int feature;
  double value;
};

// Linear decision layer o = W f + b. The triplet list is exactly the set of
// nonzero entries of the dense view, sorted by (class, feature).
class SparseLinearModel {
 public:
  SparseLinearModel() = default;
  SparseLinearModel(Matrix weights, Vector bias, ModelMeta meta = {});

  static SparseLinearModel zeros(int num_classes, int num_features, ModelMeta meta = {});

  int num_classes() const { return static_cast<int>(weights_.rows()); }
  int num_features() const { return static_cast<int>(weights_.cols()); }
  const Matrix& dense() const { return weights_; }
  const Vector& bias() const { return bias_; }
  const std::vector<WeightEntry>& entries() const { return support_; }
  std::size_t nnz() const { return support_.size(); }
  const ModelMeta& meta() const { return meta_; }

  std::vector<std::pair<int, int>> support() const;
  // Sorted feature columns carrying at least one nonzero weight.
  std::vector<int> used_features() const;

  SparseLinearModel with_meta(ModelMeta meta) const;

 private:
  Matrix weights_;
  Vector bias_;
  std::vector<WeightEntry> support_;
  ModelMeta meta_;
};

struct Logits {
  Matrix values;

  // Predicted class per row. Ties resolve to the lowest class index.
  std::vector<int> argmax() const;
};

struct SparsityMetrics {
  std::size_t n_w = 0;
  double n_per_class = 0.0;
  std::size_t total_features_used = 0;
};

// Column standardization with population std. Throws NumericError on
// non-finite input and ConfigError if the matrix is already normalized.
FeatureMatrix standardize(const FeatureMatrix& raw);
// Applies stored statistics to new raw data (e.g. the test split).
FeatureMatrix apply_norm_stats(const FeatureMatrix& raw, const NormStats& stats);

FeatureMatrix pool_maps(const FeatureMapBatch& maps);

Logits predict(const SparseLinearModel& model, const FeatureMatrix& feats);
Logits predict(const SparseLinearModel& model, const Matrix& feats);

SparsityMetrics sparsity_metrics(const SparseLinearModel& model);

double accuracy(const Logits& logits, const LabelVector& labels);

// Folds standardization into the head: returns W', b' acting on raw features
// such that W' f + b' == W (f - mu)/sigma + b. Constant columns get weight 0.
SparseLinearModel fold_normalization(const SparseLinearModel& model, const NormStats& stats);

// Embeds a model over a column subset into the full feature space.
SparseLinearModel expand_columns(const SparseLinearModel& model, std::span<const int> columns,
                                 int num_features);

}  // namespace sldd
