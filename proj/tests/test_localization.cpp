#include <algorithm>
#include <cmath>
#include <limits>

#include "doctest.h"
#include "sldd/error.hpp"
#include "sldd/localization.hpp"

using namespace sldd;

namespace {

// Mean of channel 0 over a 2 x 2 region with top-left corner (r, c).
ExtractorFn region_extractor(int r, int c) {
  return [r, c](const FeatureMapBatch& in) {
    double s = 0.0;
    for (int i = r; i < r + 2; ++i) {
      for (int j = c; j < c + 2; ++j) s += in.at(0, 0, i, j);
    }
    return std::vector<double>{s / 4.0, 1.0};
  };
}

FeatureMapBatch bright_region(int size, int r, int c) {
  FeatureMapBatch in(1, 2, size, size);
  for (int i = r; i < r + 2; ++i) {
    for (int j = c; j < c + 2; ++j) in.at(0, 0, i, j) = 1.0;
  }
  return in;
}

PatchSchedule small_schedule() {
  PatchSchedule s;
  s.sizes = {4, 8};
  return s;
}

std::pair<int, int> argmax_cell(const std::vector<double>& v, int cols) {
  const auto it = std::max_element(v.begin(), v.end());
  const int idx = static_cast<int>(it - v.begin());
  return {idx / cols, idx % cols};
}

}  // namespace

TEST_CASE("blur preserves constant images and smooths impulses") {
  FeatureMapBatch flat(1, 1, 9, 9);
  for (int i = 0; i < 9; ++i) {
    for (int j = 0; j < 9; ++j) flat.at(0, 0, i, j) = 2.5;
  }
  const FeatureMapBatch b = gaussian_blur(flat, 1.0);
  for (double v : b.data()) CHECK(v == doctest::Approx(2.5));

  FeatureMapBatch impulse(1, 1, 9, 9);
  impulse.at(0, 0, 4, 4) = 1.0;
  const FeatureMapBatch s = gaussian_blur(impulse, 1.0);
  CHECK(s.at(0, 0, 4, 4) < 1.0);
  CHECK(s.at(0, 0, 4, 5) > 0.0);
  CHECK(s.at(0, 0, 4, 5) == doctest::Approx(s.at(0, 0, 5, 4)));
  CHECK(s.at(0, 0, 0, 0) == 0.0);  // beyond the 2 sigma support
}

TEST_CASE("the response sits at the patches covering the sensitive region") {
  const FeatureMapBatch in = bright_region(32, 8, 8);
  const LocalizationMap m = localize_feature(region_extractor(8, 8), in, 0, small_schedule());
  CHECK(m.rows == 8);
  CHECK(m.cols == 8);
  for (int r = 0; r < m.rows; ++r) {
    for (int c = 0; c < m.cols; ++c) {
      const double v = m.values[static_cast<std::size_t>(r) * m.cols + c];
      CHECK(v >= 0.0);
      // Fine cell (2, 2) lies in the coarse cell (1, 1), which covers fine cells 2..3.
      const bool fine = r == 2 && c == 2;
      const bool coarse = (r == 2 || r == 3) && (c == 2 || c == 3);
      CHECK(v == doctest::Approx((fine ? 1.0 : 0.0) + (coarse ? 1.0 : 0.0)));
    }
  }
}

TEST_CASE("per-size maps are nonnegative and max-normalized") {
  FeatureMapBatch in(1, 2, 24, 24);
  for (int i = 0; i < 24; ++i) {
    for (int j = 0; j < 24; ++j) in.at(0, 0, i, j) = std::sin(0.7 * i) * std::cos(0.3 * j) + 0.1 * i;
  }
  const ExtractorFn fn = [](const FeatureMapBatch& x) {
    double s = 0.0;
    for (int i = 3; i < 20; ++i) {
      for (int j = 5; j < 9; ++j) s += x.at(0, 0, i, j) * x.at(0, 0, i, j);
    }
    return std::vector<double>{s};
  };
  PatchSchedule sched;
  sched.sizes = {4, 8, 12, 100};
  const LocalizationMap m = localize_feature(fn, in, 0, sched);
  CHECK(m.sizes == std::vector<int>{4, 8, 12, 24});
  for (const auto& per : m.per_size) {
    const double top = *std::max_element(per.begin(), per.end());
    CHECK((top == doctest::Approx(1.0) || top == 0.0));
    for (double v : per) CHECK(v >= 0.0);
  }
}

TEST_CASE("shifting the region by one patch moves the response by one cell") {
  const int p = 4;
  const LocalizationMap a = localize_feature(region_extractor(8, 8), bright_region(32, 8, 8), 0, small_schedule());
  const LocalizationMap b =
      localize_feature(region_extractor(8 + p, 8), bright_region(32, 8 + p, 8), 0, small_schedule());
  const int cols = a.per_size_dims[0].second;
  const auto ca = argmax_cell(a.per_size[0], cols);
  const auto cb = argmax_cell(b.per_size[0], cols);
  CHECK(cb.first == ca.first + 1);
  CHECK(cb.second == ca.second);
}

TEST_CASE("a blur-insensitive extractor gives an all-zero map") {
  const ExtractorFn constant = [](const FeatureMapBatch&) { return std::vector<double>{3.0}; };
  const LocalizationMap m = localize_feature(constant, bright_region(16, 2, 2), 0, small_schedule());
  for (double v : m.values) CHECK(v == 0.0);
}

TEST_CASE("non-finite extractor output aborts with its location") {
  const ExtractorFn bad = [](const FeatureMapBatch& x) {
    return std::vector<double>{x.at(0, 0, 0, 0) == 0.0 ? 1.0 : std::numeric_limits<double>::quiet_NaN()};
  };
  FeatureMapBatch in(1, 1, 8, 8);
  in.at(0, 0, 0, 0) = 0.0;
  for (int i = 0; i < 8; ++i) in.at(0, 0, i, 1) = 5.0;
  PatchSchedule s;
  s.sizes = {4};
  CHECK_THROWS_AS(localize_feature(bad, in, 0, s), NumericError);
  CHECK_THROWS_AS(localize_feature(bad, in, 3, s), ConfigError);
}

TEST_CASE("a subprocess extractor agrees with the in-process one") {
  const FeatureMapBatch in = bright_region(16, 4, 4);
  const ExtractorFn local = toy_extractor_fn(ToyExtractor::identity(2));
  const ExtractorFn remote = subprocess_extractor({SLDD_HELPER_EXTRACTOR});
  CHECK(local(in) == remote(in));
  PatchSchedule s;
  s.sizes = {4, 8};
  const LocalizationMap a = localize_feature(local, in, 0, s);
  const LocalizationMap b = localize_feature(remote, in, 0, s);
  CHECK(a.values == b.values);
  CHECK_THROWS_AS(subprocess_extractor({"/nonexistent/extractor"})(in), IoError);
}
