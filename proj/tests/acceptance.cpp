// Acceptance checks: one PASS/FAIL line per criterion. Exit status is nonzero
// when any criterion fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <random>
#include <sstream>
#include <string>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "sldd/alignment.hpp"
#include "sldd/diversity.hpp"
#include "sldd/feature_select.hpp"
#include "sldd/finetune.hpp"
#include "sldd/io.hpp"
#include "sldd/localization.hpp"
#include "sldd/pipeline.hpp"
#include "sldd/prox.hpp"
#include "sldd/saga.hpp"
#include "sldd/synthetic.hpp"

using namespace sldd;
namespace fs = std::filesystem;

namespace tol {
constexpr double kProxGrid = 1e-5;
constexpr double kProxRuntime = 10.0;
constexpr double kOracleGap = 1e-4;
constexpr double kOracleRuntime = 30.0;
constexpr double kPathMonotone = 0.95;
constexpr double kGradRel = 1e-4;
constexpr double kGradStep = 1e-6;
constexpr double kGradRuntime = 60.0;
constexpr double kBound = 1e-12;
constexpr double kRecovery = 0.9;
constexpr double kAccuracyShare = 0.95;
constexpr double kPipelineRuntime = 300.0;
constexpr double kAccuracyDrop = 0.005;
}  // namespace tol

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void report(int id, const std::string& name, const std::function<Outcome()>& check) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  if (!o.pass) ++failures;
  std::printf("%s criterion %d: %s (%s; %.1f s)\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), o.detail.c_str(),
              seconds_since(t0));
  std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

double rel_error(const double* a, const double* b, std::size_t n) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), 1e-12});
}

FeatureMapBatch random_maps(std::mt19937_64& rng, int n, int f, int h, int w, double mean, double sd) {
  std::normal_distribution<double> g(mean, sd);
  std::vector<double> data(static_cast<std::size_t>(n) * f * h * w);
  for (auto& v : data) v = g(rng);
  return FeatureMapBatch(n, f, h, w, std::move(data));
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path run_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("sldd_acceptance_" + name);
  fs::remove_all(p);
  return p;
}

PipelineConfig standard_pipeline(const std::string& name) {
  PipelineConfig c = PipelineConfig::defaults();
  c.output_dir = run_dir(name);
  return c;
}

double mean_of(const std::vector<SeedResult>& seeds, const std::function<double(const SeedResult&)>& get) {
  double s = 0.0;
  for (const auto& r : seeds) s += get(r);
  return s / static_cast<double>(seeds.size());
}

bool all_ok(const PipelineSummary& s) {
  return std::all_of(s.seeds.begin(), s.seeds.end(), [](const SeedResult& r) { return r.ok; });
}

// ---------------------------------------------------------------------------

Outcome prox_grid() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> beta(-3.0, 3.0), lam(0.0, 1.5);
  double worst_e = 0.0, worst_g = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const double b = beta(rng), l1 = lam(rng), l2 = lam(rng);
    const auto fe = [&](double z) { return 0.5 * (z - b) * (z - b) + l1 * std::abs(z) + 0.5 * l2 * z * z; };
    worst_e = std::max(worst_e, std::abs(prox_elementwise(b, l1, l2) - oracle::grid_minimize(fe, -4.0, 4.0, 1e-5)));

    // The group minimizer lies on the ray through v; search its length.
    const Matrix v = oracle::random_matrix(rng, 5, 1);
    const double r = v.norm();
    const auto fg = [&](double s) { return 0.5 * (s - r) * (s - r) + l1 * s + 0.5 * l2 * s * s; };
    const double s_ref = oracle::grid_minimize(fg, 0.0, r + 1.0, 1e-5);
    const Matrix z = prox_group(v, l1, l2);
    worst_g = std::max(worst_g, (z - v * (s_ref / r)).cwiseAbs().maxCoeff());
  }
  const double secs = seconds_since(t0);
  return {worst_e <= tol::kProxGrid && worst_g <= tol::kProxGrid && secs < tol::kProxRuntime,
          fmt("max error elementwise %.2e, group %.2e over 1000 triples", worst_e, worst_g)};
}

Outcome solver_oracle() {
  const auto t0 = Clock::now();
  const auto inst = fixture::pooled_instance(202, 200, 20, 5);
  const Matrix& x = inst.features.values();
  const double lmax = lambda_max(inst.features, inst.labels, 0.99, false);
  double worst_gap = 0.0;
  int support_mismatch = 0;
  for (double frac : {0.5, 0.1, 0.02}) {
    const double lambda = frac * lmax;
    const SparseLinearModel m = saga_fit(inst.features, inst.labels, lambda, 0.99, SolverConfig{});
    const auto ref = oracle::proximal_gradient(x, inst.labels.labels, 5, lambda, 0.99);
    const double obj = oracle::elastic(m.dense(), m.bias(), x, inst.labels.labels, lambda, 0.99);
    worst_gap = std::max(worst_gap, std::abs(obj - ref.objective));
    for (Eigen::Index i = 0; i < ref.w.size(); ++i) {
      support_mismatch += (ref.w.data()[i] != 0.0) != (m.dense().data()[i] != 0.0);
    }
  }
  const double secs = seconds_since(t0);
  return {worst_gap <= tol::kOracleGap && support_mismatch == 0 && secs < tol::kOracleRuntime,
          fmt("max objective gap %.2e, %g support mismatches at 3 lambdas", worst_gap, support_mismatch)};
}

RegularizationPath standard_path() {
  SyntheticSpec spec;
  const SyntheticData d = generate_synthetic(spec);
  return fit_path(standardize(pool_maps(d.train_maps)), d.train_labels, SolverConfig{});
}

Outcome path_sanity(const RegularizationPath& path) {
  const bool zero_first = !path.entries.empty() && path.entries.front().model.nnz() == 0;
  int decreasing = 0, monotone = 0;
  const int pairs = static_cast<int>(path.entries.size()) - 1;
  for (int k = 1; k <= pairs; ++k) {
    decreasing += path.entries[k].lambda < path.entries[k - 1].lambda;
    monotone += path.entries[k].model.nnz() >= path.entries[k - 1].model.nnz();
  }
  const double share = pairs > 0 ? static_cast<double>(monotone) / pairs : 0.0;
  return {zero_first && decreasing == pairs && pairs > 0 && share >= tol::kPathMonotone,
          fmt("zero at lambda_max %g, strictly decreasing %g, nnz non-decreasing on %.3f of pairs", zero_first,
              decreasing == pairs, share)};
}

Outcome gradient_checks() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(404);
  const double h = tol::kGradStep;
  double worst_div = 0.0, worst_final = 0.0;
  for (int t = 0; t < 100; ++t) {
    const FeatureMapBatch maps = random_maps(rng, 2, 4, 3, 3, 0.5, 1.0);
    const SparseLinearModel model(oracle::random_matrix(rng, 3, 4), oracle::random_matrix(rng, 3, 1, 0.1));
    const DiversityGradient g = diversity_loss_grad(maps, model, true);
    std::vector<double> fd(maps.data().size());
    for (std::size_t i = 0; i < fd.size(); ++i) {
      auto p = maps.data(), m = maps.data();
      p[i] += h;
      m[i] -= h;
      fd[i] = (diversity_loss_grad(FeatureMapBatch(2, 4, 3, 3, p), model).loss -
               diversity_loss_grad(FeatureMapBatch(2, 4, 3, 3, m), model).loss) /
              (2 * h);
    }
    worst_div = std::max(worst_div, rel_error(g.d_maps.data(), fd.data(), fd.size()));
    Matrix fw(3, 4);
    for (Eigen::Index i = 0; i < fw.size(); ++i) {
      Matrix wp = model.dense(), wm = model.dense();
      wp.data()[i] += h;
      wm.data()[i] -= h;
      fw.data()[i] = (diversity_loss_grad(maps, SparseLinearModel(wp, model.bias())).loss -
                      diversity_loss_grad(maps, SparseLinearModel(wm, model.bias())).loss) /
                     (2 * h);
    }
    worst_div = std::max(worst_div, rel_error(g.d_weights.data(), fw.data(), static_cast<std::size_t>(fw.size())));

    // Assembled objective: cross entropy plus beta * L_div through the extractor.
    const TrainingData td = TrainingData::from_maps(random_maps(rng, 3, 3, 3, 3, 0.3, 1.0));
    const LabelVector y({0, 1, 0}, 2);
    const Matrix w = oracle::random_matrix(rng, 2, 4);
    const Vector b = oracle::random_matrix(rng, 2, 1, 0.1);
    const ToyExtractor ex(oracle::random_matrix(rng, 4, 3, 0.7), oracle::random_matrix(rng, 4, 1, 0.2));
    const std::vector<int> batch{0, 1, 2};
    const double beta = 0.196;
    const FinalLossGrad an = final_loss_grad(td, batch, y, w, b, &ex, beta);
    const auto loss = [&](const Matrix& w2, const Vector& b2, const ToyExtractor& e2) {
      return final_loss_grad(td, batch, y, w2, b2, &e2, beta).loss;
    };
    std::vector<double> num, ana;
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      Matrix p = w, m = w;
      p.data()[i] += h;
      m.data()[i] -= h;
      num.push_back((loss(p, b, ex) - loss(m, b, ex)) / (2 * h));
      ana.push_back(an.d_weights.data()[i]);
    }
    for (Eigen::Index i = 0; i < b.size(); ++i) {
      Vector p = b, m = b;
      p[i] += h;
      m[i] -= h;
      num.push_back((loss(w, p, ex) - loss(w, m, ex)) / (2 * h));
      ana.push_back(an.d_bias[i]);
    }
    for (Eigen::Index i = 0; i < ex.mixing().size(); ++i) {
      ToyExtractor p = ex, m = ex;
      p.mutable_mixing().data()[i] += h;
      m.mutable_mixing().data()[i] -= h;
      num.push_back((loss(w, b, p) - loss(w, b, m)) / (2 * h));
      ana.push_back(an.d_mixing.data()[i]);
    }
    for (Eigen::Index i = 0; i < ex.offset().size(); ++i) {
      ToyExtractor p = ex, m = ex;
      p.mutable_offset()[i] += h;
      m.mutable_offset()[i] -= h;
      num.push_back((loss(w, b, p) - loss(w, b, m)) / (2 * h));
      ana.push_back(an.d_offset[i]);
    }
    worst_final = std::max(worst_final, rel_error(ana.data(), num.data(), num.size()));
  }
  const double secs = seconds_since(t0);
  return {worst_div <= tol::kGradRel && worst_final <= tol::kGradRel && secs < tol::kGradRuntime,
          fmt("max relative error L_div %.2e, L_final %.2e over 100 points", worst_div, worst_final)};
}

Outcome metric_bounds() {
  std::mt19937_64 rng(505);
  int loc_violations = 0, c_violations = 0;
  const int k = 5;
  for (int t = 0; t < 1000; ++t) {
    const FeatureMapBatch maps = random_maps(rng, 3, 6, 4, 4, 0.5, 2.0);
    const SparseLinearModel model(oracle::random_matrix(rng, 3, 6), Vector::Zero(3));
    for (double v : loc_k(maps, model, k).per_example) {
      loc_violations += v < 1.0 / k - tol::kBound || v > 1.0 + tol::kBound;
    }
  }
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_int_distribution<int> code(0, 3);
  for (int t = 0; t < 1000; ++t) {
    Matrix x(16, 4);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = g(rng);
    AttributeTable table(16, {"a", "b", "c"});
    for (int e = 0; e < 16; ++e) {
      for (int a = 0; a < 3; ++a) table.set(e, a, certainty_from_code(code(rng)));
    }
    const AlignmentScores s = alignment_scores(FeatureMatrix(x), table);
    for (int a = 0; a < 3; ++a) {
      if (!s.attribute_valid[a]) continue;
      for (int l = 0; l < 4; ++l) c_violations += s.scores(a, l) < -1.0 || s.scores(a, l) > 1.0;
    }
  }

  // Extremal cases: identical maps give 1/k, disjoint saturated peaks give 1.
  const int h = 4, w = 4;
  const SparseLinearModel ones(Matrix::Ones(2, k), Vector::Zero(2));
  const std::vector<int> cls{0};
  std::vector<double> same, disjoint(static_cast<std::size_t>(k) * h * w, 0.0);
  for (int l = 0; l < k; ++l) {
    for (int c = 0; c < h * w; ++c) same.push_back(c == 5 ? 3.0 : 0.0);
    disjoint[static_cast<std::size_t>(l) * h * w + l] = 800.0;
  }
  const double low = loc_k(FeatureMapBatch(1, k, h, w, same), ones, cls, k).per_example[0];
  const double high = loc_k(FeatureMapBatch(1, k, h, w, disjoint), ones, cls, k).per_example[0];
  const bool attained = std::abs(low - 1.0 / k) <= tol::kBound && std::abs(high - 1.0) <= tol::kBound;
  return {loc_violations == 0 && c_violations == 0 && attained,
          fmt("%g loc_k and %g C_aj violations; extremal loc_5 %.12f", loc_violations, c_violations, low) +
              fmt(" and %.12f", high)};
}

Outcome selection_behavior() {
  std::vector<std::future<std::pair<double, bool>>> runs;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    runs.push_back(std::async(std::launch::async, [seed] {
      SyntheticSpec spec;
      spec.seed = seed;
      const SyntheticData d = generate_synthetic(spec);
      const SelectionState s = select_features(standardize(pool_maps(d.train_maps)), d.train_labels, 20);
      bool one_per_restart = s.selected.size() == 20 && s.history.size() == 20;
      std::vector<int> seen;
      for (std::size_t r = 0; r < s.history.size() && one_per_restart; ++r) {
        one_per_restart = s.history[r].restart_index == static_cast<int>(r) &&
                          s.history[r].added_feature == s.selected[r] &&
                          std::find(seen.begin(), seen.end(), s.selected[r]) == seen.end();
        seen.push_back(s.selected[r]);
      }
      int hits = 0;
      for (int l : d.signal_features) hits += std::find(s.selected.begin(), s.selected.end(), l) != s.selected.end();
      return std::pair{static_cast<double>(hits) / static_cast<double>(d.signal_features.size()), one_per_restart};
    }));
  }
  double total = 0.0, worst = 1.0;
  bool restarts = true;
  for (auto& r : runs) {
    const auto [share, ok] = r.get();
    total += share;
    worst = std::min(worst, share);
    restarts = restarts && ok;
  }
  const double mean = total / 5.0;
  return {restarts && mean >= tol::kRecovery,
          fmt("one feature per restart %g; planted recovery mean %.3f, min %.3f over 5 seeds", restarts, mean, worst)};
}

Outcome pipeline_accuracy(const PipelineSummary& s, double secs) {
  if (!all_ok(s)) return {false, "a seed failed"};
  const double dense = mean_of(s.seeds, [](const SeedResult& r) { return r.dense.test_accuracy; });
  const double final_acc = mean_of(s.seeds, [](const SeedResult& r) { return r.final.test_accuracy; });
  double worst_npc = 0.0;
  for (const auto& r : s.seeds) worst_npc = std::max(worst_npc, r.final.n_per_class);
  const double share = dense > 0.0 ? final_acc / dense : 0.0;
  return {share >= tol::kAccuracyShare && worst_npc <= 5.0 && secs < tol::kPipelineRuntime,
          fmt("final/dense test accuracy %.4f (dense %.4f), max n_per_class %.2f", share, dense, worst_npc)};
}

Outcome diversity_direction(const PipelineSummary& on, const PipelineSummary& off) {
  if (!all_ok(on) || !all_ok(off)) return {false, "a seed failed"};
  for (const auto* s : {&on, &off}) {
    for (const auto& r : s->seeds) {
      if (!r.final.loc_k) return {false, "loc_5 undefined for a seed"};
    }
  }
  const double loc_on = mean_of(on.seeds, [](const SeedResult& r) { return *r.final.loc_k; });
  const double loc_off = mean_of(off.seeds, [](const SeedResult& r) { return *r.final.loc_k; });
  const double acc_on = mean_of(on.seeds, [](const SeedResult& r) { return r.sparse.test_accuracy; });
  const double acc_off = mean_of(off.seeds, [](const SeedResult& r) { return r.sparse.test_accuracy; });
  return {loc_on > loc_off && acc_on >= acc_off - tol::kAccuracyDrop,
          fmt("mean loc_5 %.4f vs %.4f; sparse accuracy %.4f", loc_on, loc_off, acc_on) + fmt(" vs %.4f", acc_off)};
}

// Sort oracle for one path: the densest entry with n_per_class <= 10, then the
// 5 * C largest magnitudes, ties removing the lower (class, feature) index.
struct ClipCheck {
  bool ok = false;
  double n_per_class = 0.0;
  std::size_t removed = 0;
};

ClipCheck check_sparsify(const RegularizationPath& path) {
  const PathEntry* chosen = nullptr;
  for (const auto& e : path.entries) {
    const double npc = static_cast<double>(e.model.nnz()) / e.model.num_classes();
    if (npc <= 10.0 && (!chosen || npc >= static_cast<double>(chosen->model.nnz()) / chosen->model.num_classes())) {
      chosen = &e;
    }
  }
  if (!chosen) return {};
  const SparseLinearModel out = sparsify(path, 10.0, 5.0);
  const Matrix& src = chosen->model.dense();
  const std::size_t keep = static_cast<std::size_t>(5 * src.rows());
  std::vector<std::tuple<double, Eigen::Index, Eigen::Index>> nz;
  for (Eigen::Index c = 0; c < src.rows(); ++c) {
    for (Eigen::Index l = 0; l < src.cols(); ++l) {
      if (src(c, l) != 0.0) nz.emplace_back(std::abs(src(c, l)), c, l);
    }
  }
  std::sort(nz.begin(), nz.end(), std::greater<>());
  Matrix expect = Matrix::Zero(src.rows(), src.cols());
  for (std::size_t k = 0; k < std::min(keep, nz.size()); ++k) {
    const auto [mag, c, l] = nz[k];
    expect(c, l) = src(c, l);
  }
  const double npc = static_cast<double>(out.nnz()) / out.num_classes();
  return {npc <= 5.0 && out.dense() == expect, npc, nz.size() - std::min(keep, nz.size())};
}

Outcome sparsify_contract(const std::vector<RegularizationPath>& paths) {
  int failed = 0;
  double worst_npc = 0.0;
  std::size_t removed = 0;
  for (const auto& p : paths) {
    const ClipCheck c = check_sparsify(p);
    failed += !c.ok;
    worst_npc = std::max(worst_npc, c.n_per_class);
    removed += c.removed;
  }
  return {failed == 0 && removed > 0 && !paths.empty(),
          fmt("%g of %g paths disagree with the sort oracle; %g entries clipped", failed,
              static_cast<double>(paths.size()), static_cast<double>(removed)) +
              fmt(", max n_per_class %.2f", worst_npc)};
}

Outcome determinism() {
  PipelineConfig a = standard_pipeline("det_a");
  a.seeds = {3};
  PipelineConfig b = a;
  b.output_dir = run_dir("det_b");
  b.threads = 2;
  run_pipeline(a);
  run_pipeline(b);
  const std::string sa = slurp(a.output_dir / "summary.json"), sb = slurp(b.output_dir / "summary.json");
  return {!sa.empty() && sa == sb, fmt("summary.json %g bytes, identical %g", static_cast<double>(sa.size()), sa == sb)};
}

// Mean of channel 0 over a 2 x 2 region: blurring changes it only when the
// patch covers the region.
ExtractorFn region_extractor(int r, int c) {
  return [r, c](const FeatureMapBatch& in) {
    double s = 0.0;
    for (int i = r; i < r + 2; ++i) {
      for (int j = c; j < c + 2; ++j) s += in.at(0, 0, i, j);
    }
    return std::vector<double>{s / 4.0};
  };
}

FeatureMapBatch bright_region(int size, int r, int c) {
  FeatureMapBatch in(1, 1, size, size);
  for (int i = r; i < r + 2; ++i) {
    for (int j = c; j < c + 2; ++j) in.at(0, 0, i, j) = 1.0;
  }
  return in;
}

Outcome localization_properties() {
  std::mt19937_64 rng(1111);
  int negative = 0, unnormalized = 0, translation_failures = 0, checks = 0;
  PatchSchedule sched;
  sched.sizes = {2, 4, 8};
  // Toy extractor on synthetic-style random inputs.
  for (int t = 0; t < 20; ++t) {
    const FeatureMapBatch in = random_maps(rng, 1, 3, 16, 16, 0.5, 1.0);
    const ExtractorFn fn = toy_extractor_fn(ToyExtractor(oracle::random_matrix(rng, 4, 3), Vector::Zero(4)));
    const LocalizationMap m = localize_feature(fn, in, t % 4, sched);
    for (double v : m.values) negative += v < 0.0;
    for (const auto& per : m.per_size) {
      for (double v : per) negative += v < 0.0;
      const double top = *std::max_element(per.begin(), per.end());
      unnormalized += !(std::abs(top - 1.0) <= tol::kBound || top == 0.0);
    }
  }
  // Moving the sensitive region by one patch moves the peak by one cell.
  PatchSchedule coarse;
  coarse.sizes = {4, 8};
  for (int r = 0; r + 4 + 2 <= 32; r += 4) {
    for (int c = 0; c + 2 <= 32; c += 12) {
      const LocalizationMap a = localize_feature(region_extractor(r, c), bright_region(32, r, c), 0, coarse);
      const LocalizationMap b = localize_feature(region_extractor(r + 4, c), bright_region(32, r + 4, c), 0, coarse);
      const int cols = a.per_size_dims[0].second;
      const auto peak = [cols](const std::vector<double>& v) {
        const int i = static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
        return std::pair{i / cols, i % cols};
      };
      const auto pa = peak(a.per_size[0]), pb = peak(b.per_size[0]);
      ++checks;
      translation_failures += !(pb.first == pa.first + 1 && pb.second == pa.second && pa.first == r / 4);
    }
  }
  return {negative == 0 && unnormalized == 0 && translation_failures == 0,
          fmt("%g negative cells, %g unnormalized size maps, %g translation failures", negative, unnormalized,
              translation_failures) +
              fmt(" of %g shifts", checks)};
}

}  // namespace

int main() {
  report(1, "prox operators match grid minimizers", prox_grid);
  report(2, "saga matches the full-batch proximal gradient oracle", solver_oracle);
  const RegularizationPath path = standard_path();
  report(3, "regularization path sanity", [&] { return path_sanity(path); });
  report(4, "gradients match central differences", gradient_checks);
  report(5, "loc_k and C_aj bounds", metric_bounds);
  report(6, "feature selection adds one feature per restart and recovers planted ones", selection_behavior);

  PipelineSummary with_beta, without_beta;
  double secs_with = 0.0;
  report(7, "final model keeps dense accuracy", [&] {
    const auto t0 = Clock::now();
    with_beta = run_pipeline(standard_pipeline("beta_on"));
    secs_with = seconds_since(t0);
    return pipeline_accuracy(with_beta, secs_with);
  });
  report(8, "diversity loss raises loc_5 without costing accuracy", [&] {
    PipelineConfig c = standard_pipeline("beta_off");
    c.beta = 0.0;
    without_beta = run_pipeline(c);
    return diversity_direction(with_beta, without_beta);
  });
  report(9, "sparsify removes exactly the smallest magnitudes", [&] {
    // The standard path plus the selected-feature paths of the pipeline run.
    std::vector<RegularizationPath> paths{path};
    for (const auto& r : with_beta.seeds) {
      const fs::path p = with_beta.config.output_dir / ("seed_" + std::to_string(r.seed)) / "path.json";
      paths.push_back(io::path_from_json(io::load_json(p)));
    }
    return sparsify_contract(paths);
  });
  report(10, "pipeline summaries are byte-identical", determinism);
  report(11, "localization map properties", localization_properties);
  std::printf("%d of 11 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
