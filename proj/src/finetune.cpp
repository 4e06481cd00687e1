#include "sldd/finetune.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "sldd/diversity.hpp"
#include "sldd/error.hpp"

namespace sldd {

namespace {

using MapMatrix = Eigen::Map<const Matrix>;

double log_softmax_residual(Eigen::Ref<Vector> z, int label) {
  const double m = z.maxCoeff();
  double sum = 0.0;
  for (Eigen::Index c = 0; c < z.size(); ++c) sum += std::exp(z[c] - m);
  const double loss = m + std::log(sum) - z[label];
  for (Eigen::Index c = 0; c < z.size(); ++c) z[c] = std::exp(z[c] - m) / sum;
  z[label] -= 1.0;
  return loss;
}

int argmax(const Vector& v) {
  int best = 0;
  for (Eigen::Index c = 1; c < v.size(); ++c) {
    if (v[c] > v[best]) best = static_cast<int>(c);
  }
  return best;
}

bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace

CrossEntropyGrad cross_entropy_grad(const Logits& logits, const LabelVector& labels) {
  const Eigen::Index n = logits.values.rows();
  if (static_cast<std::size_t>(n) != labels.size()) throw ConfigError("cross_entropy_grad: size mismatch");
  CrossEntropyGrad out;
  out.d_logits = logits.values;
  if (n == 0) return out;
  Vector z(logits.values.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    z = logits.values.row(i).transpose();
    out.loss += log_softmax_residual(z, labels[static_cast<std::size_t>(i)]);
    out.d_logits.row(i) = z.transpose() / static_cast<double>(n);
  }
  out.loss /= static_cast<double>(n);
  return out;
}

ToyExtractor::ToyExtractor(Matrix mixing, Vector offset, bool trainable)
    : mixing_(std::move(mixing)), offset_(std::move(offset)), trainable_(trainable) {
  if (offset_.size() != mixing_.rows()) throw ConfigError("ToyExtractor: offset length != output channels");
  if (!mixing_.allFinite() || !offset_.allFinite()) throw NumericError("ToyExtractor: non-finite parameters");
}

ToyExtractor ToyExtractor::identity(int channels) {
  return ToyExtractor(Matrix::Identity(channels, channels), Vector::Zero(channels));
}

Matrix ToyExtractor::apply_example(std::span<const double> input, int map_size) const {
  if (input.size() != static_cast<std::size_t>(in_channels()) * map_size) {
    throw ConfigError("ToyExtractor: input size mismatch");
  }
  MapMatrix in(input.data(), in_channels(), map_size);
  Matrix out = mixing_ * in;
  out.colwise() += offset_;
  return out;
}

FeatureMapBatch ToyExtractor::apply(const FeatureMapBatch& inputs) const {
  if (inputs.features() != in_channels()) throw ConfigError("ToyExtractor: input channel mismatch");
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(inputs.size()) * out_channels() * inputs.map_size());
  for (int n = 0; n < inputs.size(); ++n) {
    const Matrix m = apply_example(inputs.example(n), inputs.map_size());
    data.insert(data.end(), m.data(), m.data() + m.size());
  }
  return FeatureMapBatch(inputs.size(), out_channels(), inputs.height(), inputs.width(), std::move(data));
}

void FinetuneConfig::validate() const {
  if (!(beta >= 0.0)) throw ConfigError("finetune: beta must be nonnegative");
  if (epochs < 0) throw ConfigError("finetune: epochs must be nonnegative");
  if (!(lr >= 0.0) || !(extractor_lr >= 0.0)) throw ConfigError("finetune: learning rates must be nonnegative");
  if (lr_decay.every < 1 || !(lr_decay.factor > 0.0 && lr_decay.factor <= 1.0)) {
    throw ConfigError("finetune: lr decay needs every >= 1 and factor in (0, 1]");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("finetune: momentum must lie in [0, 1)");
  if (!(feature_dropout >= 0.0 && feature_dropout < 1.0)) throw ConfigError("finetune: dropout must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("finetune: weight decay must be nonnegative");
  if (batch_size < 1) throw ConfigError("finetune: batch_size must be >= 1");
}

int TrainingData::size() const {
  if (features) return static_cast<int>(features->rows());
  if (maps) return maps->size();
  return 0;
}

FinalLossGrad final_loss_grad(const TrainingData& data, std::span<const int> batch, const LabelVector& labels,
                              const Matrix& weights, const Vector& bias, const ToyExtractor* extractor, double beta,
                              const Matrix* keep_scale) {
  const Eigen::Index c_count = weights.rows(), f = weights.cols();
  if (data.features && beta > 0.0) throw ConfigError("final_loss_grad: the diversity term needs spatial maps");
  if (data.features && extractor) throw ConfigError("final_loss_grad: an extractor needs map inputs");
  FinalLossGrad out;
  out.d_weights = Matrix::Zero(c_count, f);
  out.d_bias = Vector::Zero(c_count);
  if (extractor) {
    out.d_mixing = Matrix::Zero(extractor->out_channels(), extractor->in_channels());
    out.d_offset = Vector::Zero(extractor->out_channels());
  }
  if (batch.empty()) return out;
  const double inv_b = 1.0 / static_cast<double>(batch.size());

  const int hw = data.maps ? data.maps->map_size() : 1;
  Matrix maps;      // F x HW
  Matrix d_maps;    // F x HW
  Vector pooled(f), dropped(f), z(c_count);
  for (std::size_t k = 0; k < batch.size(); ++k) {
    const int n = batch[k];
    const int label = labels[static_cast<std::size_t>(n)];
    if (data.features) {
      pooled = data.features->values().row(n).transpose();
    } else {
      const auto input = data.maps->example(n);
      if (extractor) {
        maps = extractor->apply_example(input, hw);
      } else {
        maps = MapMatrix(input.data(), data.maps->features(), hw);
      }
      if (maps.rows() != f) throw ConfigError("final_loss_grad: map channels != model features");
      pooled = maps.rowwise().mean();
    }
    dropped = pooled;
    if (keep_scale) dropped.array() *= keep_scale->row(static_cast<Eigen::Index>(k)).transpose().array();

    z.noalias() = weights * dropped;
    z += bias;
    out.ce += log_softmax_residual(z, label) * inv_b;
    out.d_weights.noalias() += (z * inv_b) * dropped.transpose();
    out.d_bias += z * inv_b;

    if (data.features) continue;
    Vector d_pooled = weights.transpose() * z * inv_b;
    if (keep_scale) d_pooled.array() *= keep_scale->row(static_cast<Eigen::Index>(k)).transpose().array();
    d_maps = (d_pooled / hw).replicate(1, hw);
    if (beta > 0.0) {
      Vector clean = weights * pooled + bias;
      const std::span<const double> maps_span(maps.data(), static_cast<std::size_t>(maps.size()));
      const std::span<double> d_span(d_maps.data(), static_cast<std::size_t>(d_maps.size()));
      out.l_div += inv_b * diversity_example(maps_span, static_cast<int>(f), data.maps->height(),
                                             data.maps->width(), weights, argmax(clean), beta * inv_b, d_span,
                                             &out.d_weights);
    }
    if (extractor) {
      MapMatrix in(data.maps->example(n).data(), extractor->in_channels(), hw);
      out.d_mixing.noalias() += d_maps * in.transpose();
      out.d_offset += d_maps.rowwise().sum();
    }
  }
  out.loss = out.ce + beta * out.l_div;
  return out;
}

namespace {

CurveRow evaluate(const TrainingData& data, const LabelVector& labels, const Matrix& w, const Vector& b,
                  const ToyExtractor* extractor, double beta, int epoch) {
  std::vector<int> all(static_cast<std::size_t>(data.size()));
  std::iota(all.begin(), all.end(), 0);
  // The diversity value is reported even when beta == 0.
  const double report_beta = data.maps ? 1.0 : 0.0;
  const FinalLossGrad g = final_loss_grad(data, all, labels, w, b, extractor, report_beta);
  CurveRow row;
  row.epoch = epoch;
  row.ce = g.ce;
  row.l_div = g.l_div;
  row.objective = g.ce + beta * g.l_div;

  Matrix pooled;
  if (data.features) {
    pooled = data.features->values();
  } else {
    const FeatureMapBatch maps = extractor ? extractor->apply(*data.maps) : *data.maps;
    pooled = pool_maps(maps).values();
  }
  row.accuracy = accuracy(predict(SparseLinearModel(w, b), pooled), labels);
  return row;
}

}  // namespace

FinetuneResult finetune(const TrainingData& data, const LabelVector& labels, const SparseLinearModel& model,
                        const FinetuneConfig& config, const ToyExtractor* extractor) {
  config.validate();
  if (!data.features && !data.maps) throw ConfigError("finetune: no training data");
  if (config.beta > 0.0 && !data.maps) throw ConfigError("finetune: beta > 0 requires feature maps");
  if (config.freeze_support && model.nnz() == 0) throw ConfigError("finetune: freeze_support needs a nonempty support");
  if (static_cast<std::size_t>(data.size()) != labels.size()) throw ConfigError("finetune: label count mismatch");

  Matrix w = model.dense();
  Vector b = model.bias();
  Matrix mask = (w.array() != 0.0).cast<double>().matrix();
  std::optional<ToyExtractor> ext;
  if (extractor) ext = *extractor;
  const bool train_extractor = ext && ext->trainable();

  Matrix v_w = Matrix::Zero(w.rows(), w.cols());
  Vector v_b = Vector::Zero(b.size());
  Matrix v_a;
  Vector v_c;
  if (ext) {
    v_a = Matrix::Zero(ext->mixing().rows(), ext->mixing().cols());
    v_c = Vector::Zero(ext->offset().size());
  }

  FinetuneResult result;
  const ToyExtractor* ext_ptr = ext ? &*ext : nullptr;
  result.curve.push_back(evaluate(data, labels, w, b, ext_ptr, config.beta, 0));

  std::mt19937_64 rng(config.seed);
  std::bernoulli_distribution keep(1.0 - config.feature_dropout);
  const double keep_value = 1.0 / (1.0 - config.feature_dropout);
  std::vector<int> order(static_cast<std::size_t>(data.size()));
  std::iota(order.begin(), order.end(), 0);
  const auto bs = static_cast<std::size_t>(config.batch_size);

  long step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double decay = std::pow(config.lr_decay.factor, epoch / config.lr_decay.every);
    const double lr_head = config.lr * decay;
    const double lr_ext = config.extractor_lr * decay;
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += bs, ++step) {
      const std::size_t len = std::min(bs, order.size() - start);
      const std::span<const int> batch(order.data() + start, len);
      Matrix keep_scale;
      if (config.feature_dropout > 0.0) {
        keep_scale.resize(static_cast<Eigen::Index>(len), w.cols());
        for (Eigen::Index r = 0; r < keep_scale.rows(); ++r) {
          for (Eigen::Index c = 0; c < keep_scale.cols(); ++c) keep_scale(r, c) = keep(rng) ? keep_value : 0.0;
        }
      }
      FinalLossGrad g = final_loss_grad(data, batch, labels, w, b, ext_ptr, config.beta,
                                        config.feature_dropout > 0.0 ? &keep_scale : nullptr);
      if (!std::isfinite(g.loss)) {
        std::ostringstream os;
        os << "finetune: non-finite loss at epoch " << epoch + 1 << ", step " << step;
        throw NumericError(os.str());
      }
      g.d_weights += config.weight_decay * w;
      if (config.freeze_support) g.d_weights.array() *= mask.array();
      v_w = config.momentum * v_w + g.d_weights;
      v_b = config.momentum * v_b + g.d_bias;
      w -= lr_head * v_w;
      b -= lr_head * v_b;
      if (train_extractor) {
        g.d_mixing += config.weight_decay * ext->mixing();
        v_a = config.momentum * v_a + g.d_mixing;
        v_c = config.momentum * v_c + g.d_offset;
        ext->mutable_mixing() -= lr_ext * v_a;
        ext->mutable_offset() -= lr_ext * v_c;
      }
    }
    if (!all_finite(w) || !b.allFinite()) {
      throw NumericError("finetune: non-finite weights after epoch " + std::to_string(epoch + 1));
    }
    result.curve.push_back(evaluate(data, labels, w, b, ext_ptr, config.beta, epoch + 1));
  }

  ModelMeta meta = model.meta();
  meta.stage = config.freeze_support ? "finetuned" : "dense";
  meta.seed = config.seed;
  result.model = SparseLinearModel(std::move(w), std::move(b), meta);
  if (ext) result.extractor = ToyExtractor(ext->mixing(), ext->offset(), ext->trainable());
  return result;
}

}  // namespace sldd
