#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "sldd/tensor.hpp"

namespace sldd {

struct CrossEntropyGrad {
  double loss = 0.0;
  Matrix d_logits;  // (softmax - onehot) / N
};

CrossEntropyGrad cross_entropy_grad(const Logits& logits, const LabelVector& labels);

// Desk-scale feature extractor: a 1x1 channel-mixing layer mapping input
// maps (D x H x W) to feature maps (F x H x W) with a per-channel offset.
class ToyExtractor {
 public:
  ToyExtractor() = default;
  ToyExtractor(Matrix mixing, Vector offset, bool trainable = true);

  static ToyExtractor identity(int channels);

  int in_channels() const { return static_cast<int>(mixing_.cols()); }
  int out_channels() const { return static_cast<int>(mixing_.rows()); }
  const Matrix& mixing() const { return mixing_; }
  const Vector& offset() const { return offset_; }
  bool trainable() const { return trainable_; }

  Matrix& mutable_mixing() { return mixing_; }
  Vector& mutable_offset() { return offset_; }

  FeatureMapBatch apply(const FeatureMapBatch& inputs) const;
  // Maps of one example as an F x (H*W) matrix.
  Matrix apply_example(std::span<const double> input, int map_size) const;

 private:
  Matrix mixing_;
  Vector offset_;
  bool trainable_ = true;
};

struct LrDecay {
  int every = 10;
  double factor = 0.4;  // retained fraction
};

struct FinetuneConfig {
  double beta = 0.196;
  int epochs = 40;
  double lr = 1e-2;            // head
  double extractor_lr = 5e-3;  // toy extractor
  LrDecay lr_decay;
  double momentum = 0.95;
  double feature_dropout = 0.1;
  double weight_decay = 5e-4;  // head weights and extractor mixing, never biases
  int batch_size = 16;
  std::uint64_t seed = 0;
  bool freeze_support = true;

  void validate() const;
};

struct CurveRow {
  int epoch = 0;
  double ce = 0.0;
  double l_div = 0.0;
  double objective = 0.0;
  double accuracy = 0.0;
};

// Training inputs: pooled features, fixed maps, or extractor inputs.
struct TrainingData {
  std::optional<FeatureMatrix> features;
  std::optional<FeatureMapBatch> maps;

  static TrainingData from_features(FeatureMatrix f) { return {std::move(f), std::nullopt}; }
  static TrainingData from_maps(FeatureMapBatch m) { return {std::nullopt, std::move(m)}; }
  int size() const;
};

struct FinalLossGrad {
  double loss = 0.0;
  double ce = 0.0;
  double l_div = 0.0;
  Matrix d_weights;
  Vector d_bias;
  Matrix d_mixing;  // empty without extractor
  Vector d_offset;
};

// L_CE + beta L_div on the given examples and its gradient. `keep_scale`
// (batch x F, optional) multiplies pooled features on the cross-entropy path
// only; the diversity path always sees the undropped maps.
FinalLossGrad final_loss_grad(const TrainingData& data, std::span<const int> batch, const LabelVector& labels,
                              const Matrix& weights, const Vector& bias, const ToyExtractor* extractor, double beta,
                              const Matrix* keep_scale = nullptr);

struct FinetuneResult {
  SparseLinearModel model;
  std::optional<ToyExtractor> extractor;
  std::vector<CurveRow> curve;  // row 0 is the starting point
};

// Momentum SGD on L_CE + beta L_div. With freeze_support the gradient of
// every weight outside the model's support is zeroed each step.
FinetuneResult finetune(const TrainingData& data, const LabelVector& labels, const SparseLinearModel& model,
                        const FinetuneConfig& config, const ToyExtractor* extractor = nullptr);

}  // namespace sldd
