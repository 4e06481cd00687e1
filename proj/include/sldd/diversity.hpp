#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sldd/tensor.hpp"

namespace sldd {

// Softmax-normalized maps of one example, each scaled by its pooled
// activation relative to the largest pooled activation and by the relative
// weight magnitude for the predicted class.
struct ScaledMapStack {
  int features = 0;
  int height = 0;
  int width = 0;
  std::vector<double> values;        // F*H*W scaled entries
  std::vector<double> softmax;       // F*H*W plain spatial softmax
  std::vector<double> softmax_sums;  // per feature, 1 up to rounding
  std::vector<double> pooled_ratio;  // f_l / max f
  std::vector<double> weight_ratio;  // |w_cl| / |w_c|_2
  int predicted_class = 0;
  bool class_tie = false;  // several classes share the maximum logit

  double at(int l, int i, int j) const { return values[(static_cast<std::size_t>(l) * height + i) * width + j]; }
};

// `maps_n` holds the F*H*W maps of one example; `logits_n` the model output
// on its pooled features.
ScaledMapStack scaled_maps(std::span<const double> maps_n, int height, int width, const SparseLinearModel& model,
                           std::span<const double> logits_n);
ScaledMapStack scaled_maps(const FeatureMapBatch& maps, int n, const SparseLinearModel& model);

struct DiversityLossValue {
  double mean = 0.0;
  std::vector<double> per_example;
};

// Negative sum over cells of the cross-channel max of the scaled maps,
// averaged over the batch.
DiversityLossValue diversity_loss(const FeatureMapBatch& maps, const SparseLinearModel& model);

struct DiversityGradient {
  double loss = 0.0;
  std::vector<double> d_maps;  // same layout as FeatureMapBatch::data()
  Matrix d_weights;            // C x F; only predicted-class rows are touched
};

// Analytic gradient of diversity_loss. The predicted class is held fixed and
// every max routes its gradient to the attaining element. With `strict`,
// exact ties in the channel max, the pooled max or the class argmax throw a
// NumericError naming the tied indices.
DiversityGradient diversity_loss_grad(const FeatureMapBatch& maps, const SparseLinearModel& model,
                                      bool strict = false);

// Per-example building block shared with the trainer. Adds `scale` times the
// gradient into d_maps_n (F*H*W) and d_weights and returns the example loss.
double diversity_example(std::span<const double> maps_n, int features, int height, int width,
                         const Matrix& weights, int predicted_class, double scale, std::span<double> d_maps_n,
                         Matrix* d_weights, bool strict = false);

struct DiversityReport {
  int k = 5;
  std::vector<double> per_example;
  std::vector<int> classes;         // class used per example
  std::vector<bool> included;       // class has >= k nonzero weights
  std::optional<double> aggregate;  // mean over included examples
  std::optional<double> class_mean;  // mean over classes of per-class means
  std::string population;
};

// loc_k over the k maps weighted highest for each example's class, using the
// plain spatial softmax. `classes` is usually the predicted class per example.
DiversityReport loc_k(const FeatureMapBatch& maps, const SparseLinearModel& model, std::span<const int> classes,
                      int k = 5);
// Same, with classes predicted from the pooled maps.
DiversityReport loc_k(const FeatureMapBatch& maps, const SparseLinearModel& model, int k = 5);

// Spatial softmax of a single H*W map.
std::vector<double> spatial_softmax(std::span<const double> map);

}  // namespace sldd
