#pragma once

#include <span>
#include <vector>

#include "sldd/tensor.hpp"

namespace sldd {

// Elastic-net soft threshold: argmin_z 1/2 (z - beta)^2 + l1 |z| + l2/2 z^2.
inline double prox_elementwise(double beta, double lambda1, double lambda2) {
  if (beta > lambda1) return (beta - lambda1) / (1.0 + lambda2);
  if (beta < -lambda1) return (beta + lambda1) / (1.0 + lambda2);
  return 0.0;
}

void prox_elementwise_inplace(Matrix& weights, double lambda1, double lambda2);

// Column-wise group shrinkage. Each column w_l (all class weights of one
// feature) is scaled by (|w_l| - l1) / ((1 + l2) |w_l|) or zeroed.
Matrix prox_group(const Matrix& weights, double lambda1, double lambda2);

// Group shrinkage that additionally keeps only columns in `selected` plus the
// single unselected column of maximum norm (lowest index on ties).
Matrix prox_group_gated(const Matrix& weights, double lambda1, double lambda2, std::span<const int> selected);

enum class ProxKind { kElementwise, kGroup, kGated };

struct ProxSpec {
  ProxKind kind = ProxKind::kElementwise;
  std::vector<int> selected;  // only used by kGated

  static ProxSpec elementwise() { return {}; }
  static ProxSpec group() { return {ProxKind::kGroup, {}}; }
  static ProxSpec gated(std::vector<int> selected) { return {ProxKind::kGated, std::move(selected)}; }

  void apply(Matrix& weights, double lambda1, double lambda2) const;
  bool grouped() const { return kind != ProxKind::kElementwise; }
};

}  // namespace sldd
