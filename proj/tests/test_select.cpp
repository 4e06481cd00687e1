#include <algorithm>

#include "doctest.h"
#include "fixtures.hpp"
#include "sldd/error.hpp"
#include "sldd/feature_select.hpp"

using namespace sldd;

TEST_CASE("selection adds exactly one new feature per restart") {
  const auto inst = fixture::pooled_instance(3, 200, 20);
  const SelectionState s = select_features(inst.features, inst.labels, 8);
  REQUIRE(s.selected.size() == 8);
  REQUIRE(s.history.size() == 8);
  std::vector<int> seen;
  for (std::size_t r = 0; r < s.history.size(); ++r) {
    CHECK(s.history[r].restart_index == static_cast<int>(r));
    CHECK(s.history[r].added_feature == s.selected[r]);
    CHECK(std::find(seen.begin(), seen.end(), s.selected[r]) == seen.end());
    CHECK(s.history[r].column_norm > 0.0);
    seen.push_back(s.selected[r]);
  }
}

TEST_CASE("selection prefers planted features") {
  const auto inst = fixture::pooled_instance(4, 300, 30);
  const SelectionState s = select_features(inst.features, inst.labels, 10);
  const auto& signal = inst.data.signal_features;
  int hits = 0;
  for (int l : s.selected) hits += std::binary_search(signal.begin(), signal.end(), l);
  CHECK(hits >= 9);
}

TEST_CASE("the selection configuration uses alpha 0.8 and a tenth of the grid") {
  const SolverConfig c = selection_solver_config();
  CHECK(c.alpha == 0.8);
  CHECK(c.lambda_schedule.scale == doctest::Approx(0.1));
}

TEST_CASE("a feature-free problem cannot add features") {
  Matrix x = Matrix::Zero(20, 3);
  x.col(0).setOnes();
  std::vector<int> y(20);
  for (int i = 0; i < 20; ++i) y[i] = i % 2;
  const FeatureMatrix feats(x);
  const LabelVector labels(y, 2);
  SolverConfig cfg = selection_solver_config();
  cfg.lambda_schedule.explicit_values = {1.0, 0.5};
  CHECK_THROWS_AS(select_features(feats, labels, 1, cfg), NumericError);
  CHECK(select_features(feats, labels, 1, cfg, true).selected.empty());
  CHECK_THROWS_AS(select_features(feats, labels, 4, cfg), ConfigError);
}
