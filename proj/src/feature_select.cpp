#include "sldd/feature_select.hpp"

#include <algorithm>
#include <sstream>

#include "sldd/error.hpp"

namespace sldd {

SolverConfig selection_solver_config(SolverConfig base) {
  base.alpha = 0.8;
  base.lambda_schedule.scale = 0.1;
  return base;
}

SelectionState select_features(const FeatureMatrix& feats, const LabelVector& labels, int n_target,
                               const SolverConfig& config, bool allow_partial) {
  if (n_target < 1 || n_target > feats.cols()) {
    throw ConfigError("select_features: n_target must lie in [1, " + std::to_string(feats.cols()) + "]");
  }
  SelectionState state;
  std::vector<bool> taken(static_cast<std::size_t>(feats.cols()), false);
  for (int restart = 0; static_cast<int>(state.selected.size()) < n_target; ++restart) {
    SelectionRecord record;
    record.restart_index = restart;
    const auto stop = [&](const PathEntry& entry) {
      const Matrix& w = entry.model.dense();
      for (Eigen::Index l = 0; l < w.cols(); ++l) {
        if (taken[static_cast<std::size_t>(l)]) continue;
        const double norm = w.col(l).norm();
        if (norm > 0.0 && norm > record.column_norm) {
          record.added_feature = static_cast<int>(l);
          record.column_norm = norm;
          record.lambda_at_entry = entry.lambda;
        }
      }
      return record.added_feature >= 0;
    };
    fit_path(feats, labels, config, ProxSpec::gated(state.selected), stop);
    if (record.added_feature < 0) {
      if (allow_partial) break;
      std::ostringstream os;
      os << "select_features: restart " << restart << " exhausted the path without a new feature ("
         << state.selected.size() << " of " << n_target << " selected)";
      throw NumericError(os.str());
    }
    taken[static_cast<std::size_t>(record.added_feature)] = true;
    state.selected.push_back(record.added_feature);
    state.history.push_back(record);
  }
  return state;
}

}  // namespace sldd
