#include <random>

#include "doctest.h"
#include "sldd/alignment.hpp"
#include "sldd/error.hpp"
#include "sldd/synthetic.hpp"

using namespace sldd;

namespace {

AttributeTable table_from(const std::vector<int>& codes) {
  AttributeTable t(static_cast<int>(codes.size()), {"a"});
  for (std::size_t n = 0; n < codes.size(); ++n) t.set(static_cast<int>(n), 0, certainty_from_code(codes[n]));
  return t;
}

}  // namespace

TEST_CASE("an indicator feature is perfectly aligned") {
  Matrix x(4, 2);
  x << 1, 0, 1, 0, 0, 1, 0, 1;
  const AlignmentScores s = alignment_scores(FeatureMatrix(x), table_from({3, 2, 0, 0}));
  CHECK(s.scores(0, 0) == doctest::Approx(1.0));
  CHECK(s.scores(0, 1) == doctest::Approx(-1.0));
  CHECK(s.attribute_valid[0]);
}

TEST_CASE("guessing annotations belong to neither group") {
  Matrix x(4, 1);
  x << 2, 0, 10, 1;
  const AlignmentScores s = alignment_scores(FeatureMatrix(x), table_from({3, 0, 1, 0}));
  // (2 - 0.5) / (10 - 0)
  CHECK(s.scores(0, 0) == doctest::Approx(0.15));
}

TEST_CASE("scores stay within [-1, 1] and flip with the polarity") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_int_distribution<int> code(0, 3);
  for (int t = 0; t < 200; ++t) {
    const int n = 12, f = 3, a = 2;
    Matrix x(n, f);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = g(rng);
    AttributeTable table(n, {"p", "q"});
    for (int e = 0; e < n; ++e) {
      for (int k = 0; k < a; ++k) table.set(e, k, certainty_from_code(code(rng)));
    }
    const AlignmentScores s = alignment_scores(FeatureMatrix(x), table);
    const AlignmentScores r = alignment_scores(FeatureMatrix(x), table.swapped_polarity());
    for (int k = 0; k < a; ++k) {
      if (!s.attribute_valid[k]) continue;
      for (int l = 0; l < f; ++l) {
        CHECK(s.scores(k, l) >= -1.0);
        CHECK(s.scores(k, l) <= 1.0);
        CHECK(r.scores(k, l) == doctest::Approx(-s.scores(k, l)));
      }
    }
  }
}

TEST_CASE("constant features and one-sided attributes are flagged") {
  Matrix x(3, 2);
  x << 1, 4, 1, 5, 1, 6;
  const AlignmentScores s = alignment_scores(FeatureMatrix(x), table_from({3, 3, 0}));
  CHECK(s.constant_feature[0]);
  CHECK(s.scores(0, 0) == 0.0);
  const AlignmentScores one_sided = alignment_scores(FeatureMatrix(x), table_from({3, 3, 1}));
  CHECK_FALSE(one_sided.attribute_valid[0]);
  CHECK(alignment_report(one_sided, 0.0).empty());
}

TEST_CASE("the report lists scores above the threshold in descending order") {
  AlignmentScores s;
  s.scores = Matrix(2, 3);
  s.scores << 0.1, 0.5, 0.3,  //
      0.5, -0.2, 0.9;
  s.attribute_valid = {true, true};
  s.constant_feature = {false, false, false};
  const auto rows = alignment_report(s, 0.2);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].score == 0.9);
  CHECK(rows[1].attribute == 0);  // ties: lower attribute first
  CHECK(rows[1].feature == 1);
  CHECK(rows[2].attribute == 1);
  CHECK(rows[3].score == 0.3);
  CHECK(alignment_report(s, 0.0).size() == 6);
}

TEST_CASE("coupled synthetic attributes align with their signal features") {
  SyntheticSpec spec;
  spec.seed = 7;
  const SyntheticData d = generate_synthetic(spec);
  const AlignmentScores s = alignment_scores(pool_maps(d.train_maps), d.train_attributes);
  REQUIRE(s.scores.rows() == static_cast<Eigen::Index>(d.signal_features.size()));
  for (std::size_t a = 0; a < d.signal_features.size(); ++a) {
    CHECK(s.scores(static_cast<Eigen::Index>(a), d.signal_features[a]) > 0.4);
  }
}

TEST_CASE("certainty codes outside 0..3 are rejected") {
  CHECK_THROWS_AS(certainty_from_code(4), ConfigError);
  CHECK(certainty_from_code(2) == Certainty::kProbably);
}
