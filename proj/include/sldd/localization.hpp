#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sldd/finetune.hpp"
#include "sldd/tensor.hpp"

namespace sldd {

// Maps one input grid (a single-example FeatureMapBatch holding
// channels x H x W) to its pooled feature vector. Must be deterministic.
using ExtractorFn = std::function<std::vector<double>(const FeatureMapBatch& input)>;

struct PatchSchedule {
  std::vector<int> sizes{28, 56, 64, 112, 224};
  // Gaussian std per size; empty means p / 4.
  std::vector<double> blur_sigma;

  double sigma_for(std::size_t k) const;
  // Sizes clipped to the shorter input edge, sorted ascending, duplicates dropped.
  PatchSchedule resolved(int height, int width) const;
};

struct LocalizationMap {
  int rows = 0;
  int cols = 0;
  int cell = 0;  // edge length in pixels of the finest grid cell
  std::vector<double> values;
  std::vector<int> sizes;
  // Per-size maps on their own grids, after max-normalization.
  std::vector<std::vector<double>> per_size;
  std::vector<std::pair<int, int>> per_size_dims;
};

// Separable Gaussian blur truncated at 2 sigma with reflective padding.
FeatureMapBatch gaussian_blur(const FeatureMapBatch& input, double sigma);

// Drop in `feature_index` when each p x p patch is blurred, rectified,
// normalized per size and summed over sizes on the finest grid.
LocalizationMap localize_feature(const ExtractorFn& extractor, const FeatureMapBatch& input, int feature_index,
                                 const PatchSchedule& schedule = {});

// Pooled output of a toy extractor as an ExtractorFn.
ExtractorFn toy_extractor_fn(ToyExtractor extractor);

// Runs an external program per call: the input grid is written to its stdin
// as FMP1 and a 1 x F FMX1 matrix is read from its stdout.
ExtractorFn subprocess_extractor(std::vector<std::string> argv);

}  // namespace sldd
