#include "sldd/report.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>

#include "sldd/error.hpp"
#include "sldd/io.hpp"

namespace sldd {

using nlohmann::json;
namespace fs = std::filesystem;

Aggregate aggregate(const std::vector<double>& values) {
  Aggregate a;
  a.count = values.size();
  if (values.empty()) return a;
  double sum = 0.0;
  for (double v : values) sum += v;
  a.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - a.mean) * (v - a.mean);
    a.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return a;
}

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += ch;
    }
  }
  return out;
}

// Metric name -> JSON pointer inside one seed record.
const std::vector<std::pair<std::string, std::string>>& metric_columns() {
  static const std::vector<std::pair<std::string, std::string>> cols{
      {"dense_test_accuracy", "/dense/test_accuracy"},
      {"sparse_test_accuracy", "/sparse/test_accuracy"},
      {"final_test_accuracy", "/final/test_accuracy"},
      {"dense_loc_k", "/dense/loc_k"},
      {"sparse_loc_k", "/sparse/loc_k"},
      {"final_loc_k", "/final/loc_k"},
      {"final_n_w", "/final/n_w"},
      {"final_n_per_class", "/final/n_per_class"},
      {"final_features_used", "/final/features_used"},
      {"planted_recovery", "/planted_recovery"},
      {"alignment_hits", "/alignment_hits"},
      {"alignment_max", "/alignment_max"},
  };
  return cols;
}

std::optional<double> number_at(const json& j, const std::string& pointer) {
  const json::json_pointer p(pointer);
  if (!j.contains(p)) return std::nullopt;
  const json& v = j.at(p);
  if (!v.is_number()) return std::nullopt;
  return v.get<double>();
}

struct SweepSeries {
  std::vector<double> xs, mean, err;
  json doc = json::array();
};

SweepSeries sweep_series(const json& seeds, const std::string& key) {
  std::map<double, std::vector<double>> sparse, final;
  for (const auto& s : seeds) {
    if (!s.value("ok", false) || !s.contains(key)) continue;
    for (const auto& p : s.at(key)) {
      sparse[p.at("x").get<double>()].push_back(p.at("sparse_accuracy").get<double>());
      final[p.at("x").get<double>()].push_back(p.at("final_accuracy").get<double>());
    }
  }
  SweepSeries out;
  for (const auto& [x, values] : final) {
    const Aggregate a = aggregate(values);
    const Aggregate b = aggregate(sparse[x]);
    out.xs.push_back(x);
    out.mean.push_back(a.mean);
    out.err.push_back(a.stddev);
    out.doc.push_back(json{{"x", x},
                           {"final_accuracy_mean", a.mean},
                           {"final_accuracy_std", a.stddev},
                           {"sparse_accuracy_mean", b.mean},
                           {"sparse_accuracy_std", b.stddev},
                           {"count", a.count}});
  }
  return out;
}

}  // namespace

json aggregate_seeds(const json& seeds) {
  json out = json::object();
  for (const auto& [name, ptr] : metric_columns()) {
    std::vector<double> values;
    for (const auto& s : seeds) {
      if (!s.value("ok", false)) continue;
      if (const auto v = number_at(s, ptr)) values.push_back(*v);
    }
    const Aggregate a = aggregate(values);
    out[name] = json{{"mean", a.mean}, {"std", a.stddev}, {"count", a.count}};
  }
  return out;
}

std::string svg_line_plot(const std::vector<double>& xs, const std::vector<double>& ys,
                          const std::vector<double>& errs, const std::string& title, const std::string& x_label,
                          const std::string& y_label) {
  const double width = 480, height = 320, left = 60, right = 20, top = 40, bottom = 50;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << escape_xml(title)
     << "</text>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << height - bottom << "\" x2=\"" << width - right << "\" y2=\""
     << height - bottom << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << height - bottom
     << "\" stroke=\"black\"/>\n";
  os << "<text x=\"" << width / 2 << "\" y=\"" << height - 12 << "\" text-anchor=\"middle\" font-size=\"12\">"
     << escape_xml(x_label) << "</text>\n";
  os << "<text x=\"16\" y=\"" << height / 2 << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 "
     << height / 2 << ")\">" << escape_xml(y_label) << "</text>\n";
  if (xs.empty()) {
    os << "<text x=\"" << width / 2 << "\" y=\"" << height / 2 << "\" text-anchor=\"middle\" font-size=\"12\">"
       << "no data</text>\n</svg>\n";
    return os.str();
  }
  double x0 = *std::min_element(xs.begin(), xs.end()), x1 = *std::max_element(xs.begin(), xs.end());
  double y0 = 1e300, y1 = -1e300;
  for (std::size_t i = 0; i < ys.size(); ++i) {
    const double e = i < errs.size() ? errs[i] : 0.0;
    y0 = std::min(y0, ys[i] - e);
    y1 = std::max(y1, ys[i] + e);
  }
  if (x1 == x0) x1 = x0 + 1.0;
  if (y1 - y0 < 1e-9) {
    y0 -= 0.5;
    y1 += 0.5;
  }
  const auto sx = [&](double x) { return left + (x - x0) / (x1 - x0) * (width - left - right); };
  const auto sy = [&](double y) { return height - bottom - (y - y0) / (y1 - y0) * (height - top - bottom); };
  for (int t = 0; t <= 4; ++t) {
    const double yv = y0 + (y1 - y0) * t / 4.0;
    os << "<text x=\"" << left - 6 << "\" y=\"" << sy(yv) + 4 << "\" text-anchor=\"end\" font-size=\"10\">"
       << std::setprecision(3) << yv << "</text>\n";
  }
  for (double x : xs) {
    os << "<text x=\"" << sx(x) << "\" y=\"" << height - bottom + 14 << "\" text-anchor=\"middle\" font-size=\"10\">"
       << std::setprecision(4) << x << "</text>\n";
  }
  os << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"";
  for (std::size_t i = 0; i < xs.size(); ++i) os << sx(xs[i]) << "," << sy(ys[i]) << " ";
  os << "\"/>\n";
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double e = i < errs.size() ? errs[i] : 0.0;
    if (e > 0) {
      os << "<line x1=\"" << sx(xs[i]) << "\" y1=\"" << sy(ys[i] - e) << "\" x2=\"" << sx(xs[i]) << "\" y2=\""
         << sy(ys[i] + e) << "\" stroke=\"steelblue\"/>\n";
    }
    os << "<circle cx=\"" << sx(xs[i]) << "\" cy=\"" << sy(ys[i]) << "\" r=\"3\" fill=\"steelblue\"/>\n";
  }
  os << "</svg>\n";
  return os.str();
}

ReportFiles write_report(const fs::path& bundle_dir) {
  const fs::path summary_path = bundle_dir / "summary.json";
  if (!fs::exists(summary_path)) throw IoError("report: missing " + summary_path.string());
  const json summary = io::load_json(summary_path);
  if (!summary.contains("seeds") || !summary.at("seeds").is_array()) {
    throw IoError("report: summary.json has no seeds array");
  }
  const json& seeds = summary.at("seeds");
  ReportFiles files;

  std::ostringstream per_seed;
  per_seed << "seed,ok";
  for (const auto& [name, ptr] : metric_columns()) per_seed << "," << name;
  per_seed << "\n";
  std::size_t failed = 0;
  for (const auto& s : seeds) {
    const bool ok = s.value("ok", false);
    failed += !ok;
    per_seed << s.at("seed").get<std::uint64_t>() << "," << (ok ? 1 : 0);
    for (const auto& [name, ptr] : metric_columns()) {
      const auto v = ok ? number_at(s, ptr) : std::nullopt;
      per_seed << ",";
      if (v) {
        per_seed << fmt(*v);
      }
    }
    per_seed << "\n";
  }
  io::save_text(bundle_dir / "per_seed.csv", per_seed.str());
  files.written.push_back(bundle_dir / "per_seed.csv");

  std::ostringstream agg;
  agg << "metric,mean,std,count\n";
  json metrics = aggregate_seeds(seeds);
  for (const auto& [name, ptr] : metric_columns()) {
    const json& a = metrics.at(name);
    agg << name << "," << fmt(a.at("mean").get<double>()) << "," << fmt(a.at("std").get<double>()) << ","
        << a.at("count").get<std::size_t>() << "\n";
  }
  io::save_text(bundle_dir / "aggregate.csv", agg.str());
  files.written.push_back(bundle_dir / "aggregate.csv");

  const SweepSeries by_target = sweep_series(seeds, "sweep_n_target");
  const SweepSeries by_budget = sweep_series(seeds, "sweep_n_per_class");
  json report{{"seeds", seeds.size()},
              {"failed_seeds", failed},
              {"metrics", metrics},
              {"sweep_n_target", by_target.doc},
              {"sweep_n_per_class", by_budget.doc}};
  // Share of dense accuracy retained by the final model.
  if (metrics["dense_test_accuracy"]["mean"].get<double>() > 0.0) {
    report["final_over_dense"] =
        metrics["final_test_accuracy"]["mean"].get<double>() / metrics["dense_test_accuracy"]["mean"].get<double>();
  }
  io::save_json(bundle_dir / "report.json", report);
  files.written.push_back(bundle_dir / "report.json");

  io::save_text(bundle_dir / "tradeoff_n_target.svg",
                svg_line_plot(by_target.xs, by_target.mean, by_target.err, "Accuracy vs selected features",
                              "n_target", "test accuracy"));
  io::save_text(bundle_dir / "tradeoff_n_per_class.svg",
                svg_line_plot(by_budget.xs, by_budget.mean, by_budget.err, "Accuracy vs features per class",
                              "n_per_class", "test accuracy"));
  files.written.push_back(bundle_dir / "tradeoff_n_target.svg");
  files.written.push_back(bundle_dir / "tradeoff_n_per_class.svg");
  return files;
}

}  // namespace sldd
