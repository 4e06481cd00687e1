#include "sldd/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "sldd/error.hpp"

namespace sldd {

namespace {

void require_finite(const Matrix& m, const char* what) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (!std::isfinite(m(r, c))) {
        std::ostringstream os;
        os << what << ": non-finite value at (" << r << ", " << c << ")";
        throw NumericError(os.str());
      }
    }
  }
}

}  // namespace

NormStats NormStats::subset(std::span<const int> columns) const {
  NormStats out;
  for (int c : columns) {
    out.mean.push_back(mean.at(c));
    out.stddev.push_back(stddev.at(c));
    out.constant.push_back(constant.at(c));
  }
  return out;
}

FeatureMatrix::FeatureMatrix(Matrix values) : values_(std::move(values)) {
  require_finite(values_, "FeatureMatrix");
}

FeatureMatrix::FeatureMatrix(Matrix values, NormStats stats)
    : values_(std::move(values)), stats_(std::move(stats)) {
  require_finite(values_, "FeatureMatrix");
  if (stats_->size() != static_cast<std::size_t>(values_.cols())) {
    throw ConfigError("FeatureMatrix: norm_stats size does not match column count");
  }
}

FeatureMatrix FeatureMatrix::select_columns(std::span<const int> columns) const {
  Matrix out(rows(), static_cast<Eigen::Index>(columns.size()));
  for (std::size_t k = 0; k < columns.size(); ++k) {
    if (columns[k] < 0 || columns[k] >= cols()) throw ConfigError("select_columns: index out of range");
    out.col(static_cast<Eigen::Index>(k)) = values_.col(columns[k]);
  }
  if (stats_) return FeatureMatrix(std::move(out), stats_->subset(columns));
  return FeatureMatrix(std::move(out));
}

FeatureMatrix FeatureMatrix::select_rows(std::span<const int> rows_idx) const {
  Matrix out(static_cast<Eigen::Index>(rows_idx.size()), cols());
  for (std::size_t k = 0; k < rows_idx.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = values_.row(rows_idx[k]);
  if (stats_) return FeatureMatrix(std::move(out), *stats_);
  return FeatureMatrix(std::move(out));
}

FeatureMapBatch::FeatureMapBatch(int n, int f, int h, int w)
    : FeatureMapBatch(n, f, h, w, std::vector<double>(static_cast<std::size_t>(n) * f * h * w, 0.0)) {}

FeatureMapBatch::FeatureMapBatch(int n, int f, int h, int w, std::vector<double> values)
    : n_(n), f_(f), h_(h), w_(w), data_(std::move(values)) {
  if (n < 0 || f < 0 || h < 1 || w < 1) throw ConfigError("FeatureMapBatch: spatial dims must be >= 1");
  if (data_.size() != static_cast<std::size_t>(n) * f * h * w) {
    throw ConfigError("FeatureMapBatch: value count does not match dimensions");
  }
  for (std::size_t k = 0; k < data_.size(); ++k) {
    if (!std::isfinite(data_[k])) {
      throw NumericError("FeatureMapBatch: non-finite value at flat index " + std::to_string(k));
    }
  }
}

FeatureMapBatch FeatureMapBatch::select_examples(std::span<const int> rows) const {
  std::vector<double> out;
  out.reserve(rows.size() * stride());
  for (int r : rows) {
    auto ex = example(r);
    out.insert(out.end(), ex.begin(), ex.end());
  }
  return FeatureMapBatch(static_cast<int>(rows.size()), f_, h_, w_, std::move(out));
}

LabelVector::LabelVector(std::vector<int> labels_in, int classes)
    : labels(std::move(labels_in)), num_classes(classes) {
  if (num_classes < 2) throw ConfigError("LabelVector: need at least 2 classes");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) {
      throw ConfigError("LabelVector: label out of range at index " + std::to_string(i));
    }
  }
}

LabelVector LabelVector::select(std::span<const int> rows) const {
  std::vector<int> out;
  out.reserve(rows.size());
  for (int r : rows) out.push_back(labels.at(r));
  return LabelVector(std::move(out), num_classes);
}

SparseLinearModel::SparseLinearModel(Matrix weights, Vector bias, ModelMeta meta)
    : weights_(std::move(weights)), bias_(std::move(bias)), meta_(std::move(meta)) {
  if (bias_.size() != weights_.rows()) throw ConfigError("SparseLinearModel: bias length != number of classes");
  require_finite(weights_, "SparseLinearModel weights");
  for (Eigen::Index c = 0; c < bias_.size(); ++c) {
    if (!std::isfinite(bias_[c])) throw NumericError("SparseLinearModel: non-finite bias");
  }
  for (int c = 0; c < num_classes(); ++c) {
    for (int l = 0; l < num_features(); ++l) {
      if (weights_(c, l) != 0.0) support_.push_back({c, l, weights_(c, l)});
    }
  }
}

SparseLinearModel SparseLinearModel::zeros(int num_classes, int num_features, ModelMeta meta) {
  return SparseLinearModel(Matrix::Zero(num_classes, num_features), Vector::Zero(num_classes), std::move(meta));
}

std::vector<std::pair<int, int>> SparseLinearModel::support() const {
  std::vector<std::pair<int, int>> out;
  out.reserve(support_.size());
  for (const auto& e : support_) out.emplace_back(e.cls, e.feature);
  return out;
}

std::vector<int> SparseLinearModel::used_features() const {
  std::vector<int> out;
  for (const auto& e : support_) out.push_back(e.feature);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

SparseLinearModel SparseLinearModel::with_meta(ModelMeta meta) const {
  SparseLinearModel copy = *this;
  copy.meta_ = std::move(meta);
  return copy;
}

std::vector<int> Logits::argmax() const {
  std::vector<int> out(static_cast<std::size_t>(values.rows()), 0);
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    int best = 0;
    for (Eigen::Index c = 1; c < values.cols(); ++c) {
      if (values(r, c) > values(r, best)) best = static_cast<int>(c);
    }
    out[static_cast<std::size_t>(r)] = best;
  }
  return out;
}

FeatureMatrix standardize(const FeatureMatrix& raw) {
  if (raw.normalized()) throw ConfigError("standardize: input is already normalized");
  const Matrix& x = raw.values();
  const Eigen::Index n = x.rows(), f = x.cols();
  if (n == 0) throw ConfigError("standardize: empty matrix");
  NormStats stats;
  stats.mean.resize(static_cast<std::size_t>(f));
  stats.stddev.resize(static_cast<std::size_t>(f));
  stats.constant.resize(static_cast<std::size_t>(f));
  for (Eigen::Index c = 0; c < f; ++c) {
    double mean = 0.0;
    for (Eigen::Index r = 0; r < n; ++r) mean += x(r, c);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (Eigen::Index r = 0; r < n; ++r) var += (x(r, c) - mean) * (x(r, c) - mean);
    var /= static_cast<double>(n);
    const auto k = static_cast<std::size_t>(c);
    stats.mean[k] = mean;
    stats.stddev[k] = std::sqrt(var);
    stats.constant[k] = stats.stddev[k] < NormStats::kConstantStdTol;
  }
  return apply_norm_stats(raw, stats);
}

FeatureMatrix apply_norm_stats(const FeatureMatrix& raw, const NormStats& stats) {
  const Matrix& x = raw.values();
  if (stats.size() != static_cast<std::size_t>(x.cols())) throw ConfigError("apply_norm_stats: dimension mismatch");
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const auto k = static_cast<std::size_t>(c);
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      out(r, c) = stats.constant[k] ? 0.0 : (x(r, c) - stats.mean[k]) / stats.stddev[k];
    }
  }
  return FeatureMatrix(std::move(out), stats);
}

FeatureMatrix pool_maps(const FeatureMapBatch& maps) {
  Matrix out(maps.size(), maps.features());
  const double inv = 1.0 / maps.map_size();
  for (int n = 0; n < maps.size(); ++n) {
    for (int l = 0; l < maps.features(); ++l) {
      double sum = 0.0;
      for (double v : maps.map(n, l)) sum += v;
      out(n, l) = sum * inv;
    }
  }
  return FeatureMatrix(std::move(out));
}

Logits predict(const SparseLinearModel& model, const Matrix& x) {
  if (x.cols() != model.num_features()) {
    throw ConfigError("predict: feature count " + std::to_string(x.cols()) + " != model features " +
                      std::to_string(model.num_features()));
  }
  Logits out{Matrix(x.rows(), model.num_classes())};
  for (Eigen::Index r = 0; r < x.rows(); ++r) out.values.row(r) = model.bias().transpose();
  for (const auto& e : model.entries()) {
    for (Eigen::Index r = 0; r < x.rows(); ++r) out.values(r, e.cls) += e.value * x(r, e.feature);
  }
  return out;
}

Logits predict(const SparseLinearModel& model, const FeatureMatrix& feats) {
  return predict(model, feats.values());
}

SparsityMetrics sparsity_metrics(const SparseLinearModel& model) {
  SparsityMetrics m;
  m.n_w = model.nnz();
  m.n_per_class = model.num_classes() > 0 ? static_cast<double>(m.n_w) / model.num_classes() : 0.0;
  m.total_features_used = model.used_features().size();
  return m;
}

double accuracy(const Logits& logits, const LabelVector& labels) {
  if (static_cast<std::size_t>(logits.values.rows()) != labels.size()) throw ConfigError("accuracy: size mismatch");
  if (labels.size() == 0) return 0.0;
  const auto pred = logits.argmax();
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

SparseLinearModel fold_normalization(const SparseLinearModel& model, const NormStats& stats) {
  if (stats.size() != static_cast<std::size_t>(model.num_features())) {
    throw ConfigError("fold_normalization: dimension mismatch");
  }
  Matrix w = Matrix::Zero(model.num_classes(), model.num_features());
  Vector b = model.bias();
  for (const auto& e : model.entries()) {
    const auto k = static_cast<std::size_t>(e.feature);
    if (stats.constant[k]) continue;
    const double scaled = e.value / stats.stddev[k];
    w(e.cls, e.feature) = scaled;
    b[e.cls] -= scaled * stats.mean[k];
  }
  return SparseLinearModel(std::move(w), std::move(b), model.meta());
}

SparseLinearModel expand_columns(const SparseLinearModel& model, std::span<const int> columns, int num_features) {
  if (columns.size() != static_cast<std::size_t>(model.num_features())) {
    throw ConfigError("expand_columns: column list does not match model width");
  }
  Matrix w = Matrix::Zero(model.num_classes(), num_features);
  for (const auto& e : model.entries()) w(e.cls, columns[static_cast<std::size_t>(e.feature)]) = e.value;
  return SparseLinearModel(std::move(w), model.bias(), model.meta());
}

}  // namespace sldd
