#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "sldd/prox.hpp"

using namespace sldd;

TEST_CASE("prox_elementwise worked values") {
  CHECK(prox_elementwise(3.0, 1.0, 0.0) == doctest::Approx(2.0));
  CHECK(prox_elementwise(-3.0, 1.0, 1.0) == doctest::Approx(-1.0));
  CHECK(prox_elementwise(0.5, 1.0, 0.0) == 0.0);
  CHECK(prox_elementwise(-1.0, 1.0, 0.3) == 0.0);
  CHECK(prox_elementwise(2.0, 0.0, 1.0) == doctest::Approx(1.0));
}

TEST_CASE("prox_elementwise matches a grid minimizer") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> beta(-3.0, 3.0), lam(0.0, 1.5);
  double worst = 0.0;
  for (int t = 0; t < 200; ++t) {
    const double b = beta(rng), l1 = lam(rng), l2 = lam(rng);
    const auto f = [&](double z) { return 0.5 * (z - b) * (z - b) + l1 * std::abs(z) + 0.5 * l2 * z * z; };
    const double z_ref = oracle::grid_minimize(f, -4.0, 4.0, 1e-5);
    worst = std::max(worst, std::abs(prox_elementwise(b, l1, l2) - z_ref));
  }
  CHECK(worst <= 1e-5);
}

TEST_CASE("prox_elementwise_inplace applies the scalar map to every entry") {
  std::mt19937_64 rng(5);
  Matrix w = oracle::random_matrix(rng, 4, 7);
  const Matrix before = w;
  prox_elementwise_inplace(w, 0.4, 0.2);
  for (Eigen::Index i = 0; i < w.size(); ++i) CHECK(w.data()[i] == prox_elementwise(before.data()[i], 0.4, 0.2));
}

TEST_CASE("prox_group shrinks columns along their direction") {
  Matrix w(2, 2);
  w << 3.0, 0.1, 4.0, 0.1;  // column norms 5 and ~0.14
  const Matrix z = prox_group(w, 1.0, 0.0);
  CHECK(z(0, 0) == doctest::Approx(3.0 * 4.0 / 5.0));
  CHECK(z(1, 0) == doctest::Approx(4.0 * 4.0 / 5.0));
  CHECK(z.col(1).norm() == 0.0);

  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> lam(0.0, 1.5);
  for (int t = 0; t < 100; ++t) {
    const Matrix v = oracle::random_matrix(rng, 5, 1);
    const double l1 = lam(rng), l2 = lam(rng);
    const Matrix g = prox_group(v, l1, l2);
    const auto obj = [&](const Matrix& c) {
      return 0.5 * (c - v).squaredNorm() + l1 * c.norm() + 0.5 * l2 * c.squaredNorm();
    };
    // Random perturbations never improve the objective.
    for (int k = 0; k < 20; ++k) {
      const Matrix p = g + oracle::random_matrix(rng, 5, 1, 1e-3);
      CHECK(obj(p) >= obj(g) - 1e-12);
    }
  }
}

TEST_CASE("gated prox keeps selected columns and the largest candidate") {
  Matrix w(2, 4);
  w << 1.0, 2.0, 0.5, 3.0,  //
      1.0, 2.0, 0.5, 3.0;
  const std::vector<int> selected{0};
  const Matrix z = prox_group_gated(w, 0.1, 0.0, selected);
  CHECK(z.col(0).norm() > 0.0);
  CHECK(z.col(3).norm() > 0.0);
  CHECK(z.col(1).norm() == 0.0);
  CHECK(z.col(2).norm() == 0.0);
}

TEST_CASE("gated prox ties go to the lowest column") {
  Matrix w(1, 3);
  w << 2.0, 2.0, 2.0;
  const std::vector<int> none;
  const Matrix z = prox_group_gated(w, 0.5, 0.0, none);
  CHECK(z(0, 0) == doctest::Approx(1.5));
  CHECK(z(0, 1) == 0.0);
  CHECK(z(0, 2) == 0.0);
}

TEST_CASE("gated prox admits no candidate when shrinkage kills every unselected column") {
  Matrix w(1, 3);
  w << 5.0, 0.2, 0.1;
  const std::vector<int> selected{0};
  const Matrix z = prox_group_gated(w, 0.5, 0.0, selected);
  CHECK(z(0, 0) == doctest::Approx(4.5));
  CHECK(z(0, 1) == 0.0);
  CHECK(z(0, 2) == 0.0);
}
