#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

namespace sldd {

struct Aggregate {
  double mean = 0.0;
  double stddev = 0.0;  // sample std, 0 for a single value
  std::size_t count = 0;
};

Aggregate aggregate(const std::vector<double>& values);

// Mean and std of every per-seed metric over the successful seeds of a
// summary "seeds" array: {metric: {mean, std, count}}.
nlohmann::json aggregate_seeds(const nlohmann::json& seeds);

struct ReportFiles {
  std::vector<std::filesystem::path> written;
};

// Reads output_dir/summary.json and writes per_seed.csv, aggregate.csv,
// report.json and the two tradeoff plots as SVG.
ReportFiles write_report(const std::filesystem::path& bundle_dir);

// Minimal line plot: one polyline with markers and labelled axes.
std::string svg_line_plot(const std::vector<double>& xs, const std::vector<double>& ys,
                          const std::vector<double>& errs, const std::string& title, const std::string& x_label,
                          const std::string& y_label);

}  // namespace sldd
