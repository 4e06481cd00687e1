#pragma once

#include "sldd/synthetic.hpp"
#include "sldd/tensor.hpp"

namespace fixture {

struct Pooled {
  sldd::FeatureMatrix features;  // standardized
  sldd::LabelVector labels;
  sldd::SyntheticData data;
};

// Standardized pooled training features of a synthetic instance.
inline Pooled pooled_instance(std::uint64_t seed, int n = 200, int f = 20, int classes = 5) {
  sldd::SyntheticSpec spec;
  spec.num_classes = classes;
  spec.num_features = f;
  spec.n_train = n;
  spec.n_test = n;
  spec.seed = seed;
  sldd::SyntheticData d = sldd::generate_synthetic(spec);
  sldd::FeatureMatrix z = sldd::standardize(sldd::pool_maps(d.train_maps));
  sldd::LabelVector y = d.train_labels;
  return {std::move(z), std::move(y), std::move(d)};
}

}  // namespace fixture
