#include "sldd/prox.hpp"

#include <cmath>

#include "sldd/error.hpp"

namespace sldd {

namespace {

void shrink_column(Matrix& w, Eigen::Index l, double norm, double lambda1, double lambda2) {
  if (norm > lambda1) {
    w.col(l) *= (norm - lambda1) / ((1.0 + lambda2) * norm);
  } else {
    w.col(l).setZero();
  }
}

}  // namespace

void prox_elementwise_inplace(Matrix& weights, double lambda1, double lambda2) {
  for (Eigen::Index r = 0; r < weights.rows(); ++r) {
    for (Eigen::Index c = 0; c < weights.cols(); ++c) {
      weights(r, c) = prox_elementwise(weights(r, c), lambda1, lambda2);
    }
  }
}

Matrix prox_group(const Matrix& weights, double lambda1, double lambda2) {
  Matrix out = weights;
  for (Eigen::Index l = 0; l < out.cols(); ++l) shrink_column(out, l, out.col(l).norm(), lambda1, lambda2);
  return out;
}

Matrix prox_group_gated(const Matrix& weights, double lambda1, double lambda2, std::span<const int> selected) {
  const Eigen::Index f = weights.cols();
  std::vector<bool> is_selected(static_cast<std::size_t>(f), false);
  for (int s : selected) {
    if (s < 0 || s >= f) throw ConfigError("prox_group_gated: selected index out of range");
    is_selected[static_cast<std::size_t>(s)] = true;
  }
  std::vector<double> norms(static_cast<std::size_t>(f));
  Eigen::Index candidate = -1;
  for (Eigen::Index l = 0; l < f; ++l) {
    norms[static_cast<std::size_t>(l)] = weights.col(l).norm();
    if (!is_selected[static_cast<std::size_t>(l)] &&
        (candidate < 0 || norms[static_cast<std::size_t>(l)] > norms[static_cast<std::size_t>(candidate)])) {
      candidate = l;
    }
  }
  Matrix out = weights;
  for (Eigen::Index l = 0; l < f; ++l) {
    if (is_selected[static_cast<std::size_t>(l)] || l == candidate) {
      shrink_column(out, l, norms[static_cast<std::size_t>(l)], lambda1, lambda2);
    } else {
      out.col(l).setZero();
    }
  }
  return out;
}

void ProxSpec::apply(Matrix& weights, double lambda1, double lambda2) const {
  switch (kind) {
    case ProxKind::kElementwise:
      prox_elementwise_inplace(weights, lambda1, lambda2);
      return;
    case ProxKind::kGroup:
      weights = prox_group(weights, lambda1, lambda2);
      return;
    case ProxKind::kGated:
      weights = prox_group_gated(weights, lambda1, lambda2, selected);
      return;
  }
}

}  // namespace sldd
