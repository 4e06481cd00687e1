#include "sldd/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <string>

#include "sldd/error.hpp"

namespace sldd {

void SyntheticSpec::validate() const {
  if (num_classes < 2) throw ConfigError("synthetic: num_classes must be >= 2");
  if (num_features < 1 || signal_per_class < 1 || signal_per_class > num_features) {
    throw ConfigError("synthetic: need 1 <= signal_per_class <= num_features");
  }
  if (height < 1 || width < 1) throw ConfigError("synthetic: map dims must be >= 1");
  if (n_train < 1 || n_test < 0) throw ConfigError("synthetic: bad split sizes");
  if (!(amplitude_mean > 0.0) || !(amplitude_std >= 0.0) || !(noise_std >= 0.0) || !(bump_sigma > 0.0)) {
    throw ConfigError("synthetic: amplitudes and widths must be positive");
  }
}

namespace {

struct Plant {
  int feature;
  int row;
  int col;
};

void fill_split(const SyntheticSpec& spec, const std::vector<std::vector<Plant>>& plants, int count,
                std::mt19937_64& rng, FeatureMapBatch& maps, std::vector<int>& labels) {
  std::normal_distribution<double> noise(0.0, spec.noise_std);
  std::normal_distribution<double> amp(spec.amplitude_mean, spec.amplitude_std);
  maps = FeatureMapBatch(count, spec.num_features, spec.height, spec.width);
  labels.resize(static_cast<std::size_t>(count));
  const double inv2s2 = 1.0 / (2.0 * spec.bump_sigma * spec.bump_sigma);
  for (int n = 0; n < count; ++n) {
    const int c = n % spec.num_classes;
    labels[static_cast<std::size_t>(n)] = c;
    for (int l = 0; l < spec.num_features; ++l) {
      for (int i = 0; i < spec.height; ++i) {
        for (int j = 0; j < spec.width; ++j) maps.at(n, l, i, j) = noise(rng);
      }
    }
    for (const Plant& p : plants[static_cast<std::size_t>(c)]) {
      double a = amp(rng);
      while (!(a > 0.0)) a = amp(rng);
      for (int i = 0; i < spec.height; ++i) {
        for (int j = 0; j < spec.width; ++j) {
          const double d2 = static_cast<double>((i - p.row) * (i - p.row) + (j - p.col) * (j - p.col));
          maps.at(n, p.feature, i, j) += a * std::exp(-d2 * inv2s2);
        }
      }
    }
  }
}

}  // namespace

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);

  std::vector<int> perm(static_cast<std::size_t>(spec.num_features));
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::uniform_int_distribution<int> row_dist(0, spec.height - 1), col_dist(0, spec.width - 1);

  std::vector<std::vector<Plant>> plants(static_cast<std::size_t>(spec.num_classes));
  SyntheticData out;
  std::map<std::pair<int, int>, std::pair<int, int>> centres;
  for (int c = 0; c < spec.num_classes; ++c) {
    for (int k = 0; k < spec.signal_per_class; ++k) {
      const int feature = perm[static_cast<std::size_t>((c * spec.signal_per_class + k) % spec.num_features)];
      Plant p{feature, row_dist(rng), col_dist(rng)};
      plants[static_cast<std::size_t>(c)].push_back(p);
      centres[{c, feature}] = {p.row, p.col};
    }
  }
  for (const auto& [key, centre] : centres) {
    out.true_support.push_back(key);
    out.bump_centres.push_back(centre);
    out.signal_features.push_back(key.second);
  }
  std::sort(out.signal_features.begin(), out.signal_features.end());
  out.signal_features.erase(std::unique(out.signal_features.begin(), out.signal_features.end()),
                            out.signal_features.end());

  std::vector<int> train_labels, test_labels;
  fill_split(spec, plants, spec.n_train, rng, out.train_maps, train_labels);
  fill_split(spec, plants, spec.n_test, rng, out.test_maps, test_labels);
  out.train_labels = LabelVector(std::move(train_labels), spec.num_classes);
  out.test_labels = LabelVector(std::move(test_labels), spec.num_classes);

  std::vector<std::string> names;
  for (int f : out.signal_features) names.push_back("has_feature_" + std::to_string(f));
  out.train_attributes = AttributeTable(spec.n_train, names);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int n = 0; n < spec.n_train; ++n) {
    const int c = out.train_labels[static_cast<std::size_t>(n)];
    for (std::size_t a = 0; a < out.signal_features.size(); ++a) {
      const double u = unit(rng);
      Certainty cert;
      if (spec.attribute_coupling) {
        const bool present = centres.count({c, out.signal_features[a]}) > 0;
        // A small share of annotators are unsure; those rows drop out of both sets.
        cert = u < 0.05 ? Certainty::kGuessing : (present ? Certainty::kDefinitely : Certainty::kAbsent);
      } else {
        cert = static_cast<Certainty>(static_cast<int>(u * 4.0) % 4);
      }
      out.train_attributes.set(n, static_cast<int>(a), cert);
    }
  }
  return out;
}

}  // namespace sldd
