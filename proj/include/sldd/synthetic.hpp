#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "sldd/alignment.hpp"
#include "sldd/tensor.hpp"

namespace sldd {

// Desk-scale stand-in for a fine-grained image dataset: each class owns
// `signal_per_class` feature channels that carry a Gaussian bump at a
// class/feature specific location; everything else is noise.
struct SyntheticSpec {
  int num_classes = 5;
  int num_features = 50;
  int signal_per_class = 3;
  int height = 7;
  int width = 7;
  int n_train = 500;
  int n_test = 500;
  double amplitude_mean = 2.0;
  double amplitude_std = 0.25;
  double noise_std = 0.25;
  double bump_sigma = 1.0;  // in cells
  bool attribute_coupling = true;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SyntheticData {
  FeatureMapBatch train_maps;
  FeatureMapBatch test_maps;
  LabelVector train_labels;
  LabelVector test_labels;
  // Planted (class, feature) pairs, sorted.
  std::vector<std::pair<int, int>> true_support;
  // Sorted distinct signal features.
  std::vector<int> signal_features;
  // Bump centre (row, col) for every planted pair, same order as true_support.
  std::vector<std::pair<int, int>> bump_centres;
  // One attribute per signal feature, on the training split.
  AttributeTable train_attributes;
};

SyntheticData generate_synthetic(const SyntheticSpec& spec);

}  // namespace sldd
