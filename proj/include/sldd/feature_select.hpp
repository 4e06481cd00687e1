#pragma once

#include <vector>

#include "sldd/saga.hpp"

namespace sldd {

struct SelectionRecord {
  int restart_index = 0;
  int added_feature = -1;
  double lambda_at_entry = 0.0;
  double column_norm = 0.0;
};

struct SelectionState {
  std::vector<int> selected;  // in order of entry
  std::vector<SelectionRecord> history;
};

// Solver settings used for selection: alpha 0.8 and the lambda grid scaled by 0.1.
SolverConfig selection_solver_config(SolverConfig base = {});

// Greedy restart loop: each restart fits a gated group-lasso path from zero
// and stops at the first solution that uses a feature outside `selected`.
// Throws NumericError if a restart exhausts the path without a new feature,
// unless `allow_partial` is set, in which case the features found so far are
// returned.
SelectionState select_features(const FeatureMatrix& feats, const LabelVector& labels, int n_target,
                               const SolverConfig& config = selection_solver_config(), bool allow_partial = false);

}  // namespace sldd
