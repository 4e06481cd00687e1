#include "sldd/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "sldd/diversity.hpp"
#include "sldd/error.hpp"
#include "sldd/io.hpp"
#include "sldd/report.hpp"

namespace sldd {

using nlohmann::json;
namespace fs = std::filesystem;

PipelineConfig PipelineConfig::defaults() {
  PipelineConfig c;
  c.dense.epochs = 30;
  c.dense.lr = 0.05;
  c.dense.extractor_lr = 0.01;
  c.dense.momentum = 0.9;
  c.dense.feature_dropout = 0.2;
  c.dense.freeze_support = false;

  c.finetune.epochs = 20;
  c.finetune.lr = 0.01;
  c.finetune.extractor_lr = 0.002;
  c.finetune.momentum = 0.95;
  c.finetune.feature_dropout = 0.1;
  c.finetune.freeze_support = true;
  return c;
}

void PipelineConfig::validate() const {
  if (!inputs) data.validate();
  if (seeds.empty()) throw ConfigError("pipeline: seeds must not be empty");
  {
    std::set<std::uint64_t> unique(seeds.begin(), seeds.end());
    if (unique.size() != seeds.size()) throw ConfigError("pipeline: duplicate seeds");
  }
  FinetuneConfig d = dense, f = finetune;
  d.beta = f.beta = beta;
  d.validate();
  f.validate();
  selection_solver.validate();
  path_solver.validate();
  if (!(beta >= 0.0)) throw ConfigError("pipeline: beta must be >= 0");
  if (n_target < 1) throw ConfigError("pipeline: n_target must be >= 1");
  if (!inputs && n_target > data.num_features) throw ConfigError("pipeline: n_target exceeds num_features");
  if (!(budget_final > 0.0) || !(budget_select >= budget_final)) {
    throw ConfigError("pipeline: need 0 < budget_final <= budget_select");
  }
  if (!(extractor_init_noise >= 0.0)) throw ConfigError("pipeline: extractor_init_noise must be >= 0");
  if (loc_k < 1) throw ConfigError("pipeline: loc_k must be >= 1");
  if (alignment_features != "finetuned" && alignment_features != "dense") {
    throw ConfigError("pipeline: alignment_features must be 'finetuned' or 'dense'");
  }
  for (int v : sweep_n_target) {
    if (v < 1 || (!inputs && v > data.num_features)) throw ConfigError("pipeline: sweep n_target out of range");
  }
  for (double v : sweep_n_per_class) {
    if (!(v > 0.0)) throw ConfigError("pipeline: sweep n_per_class must be > 0");
  }
  if (threads < 0) throw ConfigError("pipeline: threads must be >= 0");
}

namespace {

json synthetic_json(const SyntheticSpec& s) {
  return json{{"num_classes", s.num_classes},
              {"num_features", s.num_features},
              {"signal_per_class", s.signal_per_class},
              {"height", s.height},
              {"width", s.width},
              {"n_train", s.n_train},
              {"n_test", s.n_test},
              {"amplitude_mean", s.amplitude_mean},
              {"amplitude_std", s.amplitude_std},
              {"noise_std", s.noise_std},
              {"bump_sigma", s.bump_sigma},
              {"attribute_coupling", s.attribute_coupling},
              {"seed", s.seed}};
}

template <typename T>
void read_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

SyntheticSpec synthetic_from_json(const json& j, SyntheticSpec s) {
  read_if(j, "num_classes", s.num_classes);
  read_if(j, "num_features", s.num_features);
  read_if(j, "signal_per_class", s.signal_per_class);
  read_if(j, "height", s.height);
  read_if(j, "width", s.width);
  read_if(j, "n_train", s.n_train);
  read_if(j, "n_test", s.n_test);
  read_if(j, "amplitude_mean", s.amplitude_mean);
  read_if(j, "amplitude_std", s.amplitude_std);
  read_if(j, "noise_std", s.noise_std);
  read_if(j, "bump_sigma", s.bump_sigma);
  read_if(j, "attribute_coupling", s.attribute_coupling);
  read_if(j, "seed", s.seed);
  return s;
}

json stage_json(const FinetuneConfig& c) {
  json j = io::to_json(c);
  j.erase("beta");
  return j;
}

// Rejects keys of `j` that do not occur in `tmpl`, recursing into objects.
void check_keys(const json& j, const json& tmpl, const std::string& where) {
  if (!j.is_object()) throw ConfigError("pipeline config: " + (where.empty() ? "root" : where) + " must be an object");
  for (const auto& [key, value] : j.items()) {
    const std::string path = where.empty() ? key : where + "." + key;
    if (!tmpl.contains(key)) throw ConfigError("pipeline config: unknown key '" + path + "'");
    if (tmpl.at(key).is_object() && !value.is_null()) check_keys(value, tmpl.at(key), path);
  }
}

json config_template() {
  PipelineConfig d = PipelineConfig::defaults();
  d.inputs = PipelineInputs{};
  d.selection_solver.lambda_schedule.explicit_values = {1.0};
  d.selection_solver.learning_rate = 1.0;
  d.path_solver.lambda_schedule.explicit_values = {1.0};
  d.path_solver.learning_rate = 1.0;
  return to_json(d);
}

}  // namespace

json to_json(const PipelineConfig& c) {
  json j;
  j["data"] = synthetic_json(c.data);
  if (c.inputs) {
    j["inputs"] = json{{"train_maps", c.inputs->train_maps.string()},
                       {"train_labels", c.inputs->train_labels.string()},
                       {"test_maps", c.inputs->test_maps.string()},
                       {"test_labels", c.inputs->test_labels.string()},
                       {"attributes", c.inputs->attributes.string()}};
  }
  j["save_data"] = c.save_data;
  j["vary_data_with_seed"] = c.vary_data_with_seed;
  j["seeds"] = c.seeds;
  j["feature_selection"] = c.feature_selection;
  j["finetune_stage"] = c.finetune_stage;
  j["beta"] = c.beta;
  j["dense"] = stage_json(c.dense);
  j["extractor_init_noise"] = c.extractor_init_noise;
  j["finetune"] = stage_json(c.finetune);
  j["selection_solver"] = io::to_json(c.selection_solver);
  j["path_solver"] = io::to_json(c.path_solver);
  j["n_target"] = c.n_target;
  j["budget_select"] = c.budget_select;
  j["budget_final"] = c.budget_final;
  j["loc_k"] = c.loc_k;
  j["alignment_threshold"] = c.alignment_threshold;
  j["alignment_features"] = c.alignment_features;
  j["sweep"] = json{{"n_target", c.sweep_n_target}, {"n_per_class", c.sweep_n_per_class}};
  j["output_dir"] = c.output_dir.string();
  j["threads"] = c.threads;
  return j;
}

PipelineConfig pipeline_config_from_json(const json& j) {
  check_keys(j, config_template(), "");
  PipelineConfig c = PipelineConfig::defaults();
  try {
    if (j.contains("data")) c.data = synthetic_from_json(j.at("data"), c.data);
    if (j.contains("inputs") && !j.at("inputs").is_null()) {
      const json& in = j.at("inputs");
      PipelineInputs p;
      p.train_maps = in.at("train_maps").get<std::string>();
      p.train_labels = in.at("train_labels").get<std::string>();
      p.test_maps = in.at("test_maps").get<std::string>();
      p.test_labels = in.at("test_labels").get<std::string>();
      p.attributes = in.value("attributes", std::string());
      c.inputs = p;
    }
    read_if(j, "save_data", c.save_data);
    read_if(j, "vary_data_with_seed", c.vary_data_with_seed);
    read_if(j, "seeds", c.seeds);
    read_if(j, "feature_selection", c.feature_selection);
    read_if(j, "finetune_stage", c.finetune_stage);
    read_if(j, "beta", c.beta);
    read_if(j, "extractor_init_noise", c.extractor_init_noise);
    if (j.contains("dense")) c.dense = io::finetune_config_from_json(j.at("dense"), c.dense);
    if (j.contains("finetune")) c.finetune = io::finetune_config_from_json(j.at("finetune"), c.finetune);
    if (j.contains("selection_solver")) {
      c.selection_solver = io::solver_config_from_json(j.at("selection_solver"), c.selection_solver);
    }
    if (j.contains("path_solver")) c.path_solver = io::solver_config_from_json(j.at("path_solver"), c.path_solver);
    read_if(j, "n_target", c.n_target);
    read_if(j, "budget_select", c.budget_select);
    read_if(j, "budget_final", c.budget_final);
    read_if(j, "loc_k", c.loc_k);
    read_if(j, "alignment_threshold", c.alignment_threshold);
    read_if(j, "alignment_features", c.alignment_features);
    if (j.contains("sweep")) {
      read_if(j.at("sweep"), "n_target", c.sweep_n_target);
      read_if(j.at("sweep"), "n_per_class", c.sweep_n_per_class);
    }
    if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
    read_if(j, "threads", c.threads);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("pipeline config: ") + e.what());
  }
  c.dense.beta = c.finetune.beta = c.beta;
  c.validate();
  return c;
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like key.path=value: " + assignment);
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;
  }
  json* node = &doc;
  std::stringstream parts(key);
  std::string part;
  std::vector<std::string> names;
  while (std::getline(parts, part, '.')) {
    if (part.empty()) throw ConfigError("override has an empty key segment: " + assignment);
    names.push_back(part);
  }
  for (std::size_t i = 0; i + 1 < names.size(); ++i) {
    json& next = (*node)[names[i]];
    if (next.is_null()) next = json::object();
    if (!next.is_object()) throw ConfigError("override path crosses a non-object: " + key);
    node = &next;
  }
  (*node)[names.back()] = std::move(value);
}

namespace {

json metrics_json(const StageMetrics& m) {
  json j{{"test_accuracy", m.test_accuracy},
         {"train_accuracy", m.train_accuracy},
         {"n_w", m.n_w},
         {"n_per_class", m.n_per_class},
         {"features_used", m.features_used}};
  j["loc_k"] = m.loc_k ? json(*m.loc_k) : json(nullptr);
  j["loc_k_class_mean"] = m.loc_k_class_mean ? json(*m.loc_k_class_mean) : json(nullptr);
  return j;
}

json sweep_json(const std::vector<SweepPoint>& points) {
  json arr = json::array();
  for (const auto& p : points) {
    arr.push_back(json{{"x", p.x},
                       {"sparse_accuracy", p.sparse_accuracy},
                       {"final_accuracy", p.final_accuracy},
                       {"n_per_class", p.n_per_class}});
  }
  return arr;
}

json seed_json(const SeedResult& r) {
  json j{{"seed", r.seed}, {"ok", r.ok}};
  if (!r.ok) {
    j["error"] = r.error;
    j["error_code"] = r.error_code;
    return j;
  }
  j["dense"] = metrics_json(r.dense);
  j["sparse"] = metrics_json(r.sparse);
  j["final"] = metrics_json(r.final);
  j["selected"] = r.selected;
  j["planted_recovery"] = r.planted_recovery;
  j["alignment_hits"] = r.alignment_hits;
  j["alignment_max"] = r.alignment_max;
  j["sweep_n_target"] = sweep_json(r.sweep_n_target);
  j["sweep_n_per_class"] = sweep_json(r.sweep_n_per_class);
  return j;
}

struct Dataset {
  FeatureMapBatch train_maps, test_maps;
  LabelVector train_labels, test_labels;
  std::optional<AttributeTable> attributes;
  std::vector<int> signal_features;  // empty for file inputs
};

Dataset load_dataset(const PipelineConfig& config, std::uint64_t seed, const fs::path& dir) {
  if (config.inputs) {
    const auto& in = *config.inputs;
    Dataset d{io::load_maps(in.train_maps), io::load_maps(in.test_maps),
              io::labels_from_json(io::load_json(in.train_labels)),
              io::labels_from_json(io::load_json(in.test_labels)), std::nullopt, {}};
    if (static_cast<std::size_t>(d.train_maps.size()) != d.train_labels.size() ||
        static_cast<std::size_t>(d.test_maps.size()) != d.test_labels.size()) {
      throw ConfigError("pipeline inputs: map and label counts differ");
    }
    if (d.train_labels.num_classes != d.test_labels.num_classes) {
      throw ConfigError("pipeline inputs: train and test class counts differ");
    }
    if (!in.attributes.empty()) d.attributes = io::load_attribute_csv(in.attributes, d.train_maps.size());
    return d;
  }
  SyntheticSpec spec = config.data;
  if (config.vary_data_with_seed) spec.seed += seed;
  SyntheticData s = generate_synthetic(spec);
  if (config.save_data) {
    io::save_maps(dir / "train_maps.fmp", s.train_maps);
    io::save_maps(dir / "test_maps.fmp", s.test_maps);
    io::save_json(dir / "train_labels.json", io::to_json(s.train_labels));
    io::save_json(dir / "test_labels.json", io::to_json(s.test_labels));
    io::save_text(dir / "train_attributes.csv", io::attribute_csv(s.train_attributes));
  }
  json truth{{"signal_features", s.signal_features}, {"true_support", json::array()}};
  for (std::size_t i = 0; i < s.true_support.size(); ++i) {
    truth["true_support"].push_back(json{{"class", s.true_support[i].first},
                                         {"feature", s.true_support[i].second},
                                         {"centre", {s.bump_centres[i].first, s.bump_centres[i].second}}});
  }
  io::save_json(dir / "truth.json", truth);
  return Dataset{std::move(s.train_maps), std::move(s.test_maps), std::move(s.train_labels),
                 std::move(s.test_labels), std::move(s.train_attributes), std::move(s.signal_features)};
}

StageMetrics evaluate(const SparseLinearModel& model, const ToyExtractor& extractor, const Dataset& d, int k) {
  StageMetrics m;
  const FeatureMapBatch test_maps = extractor.apply(d.test_maps);
  m.test_accuracy = accuracy(predict(model, pool_maps(test_maps)), d.test_labels);
  m.train_accuracy = accuracy(predict(model, pool_maps(extractor.apply(d.train_maps))), d.train_labels);
  const SparsityMetrics s = sparsity_metrics(model);
  m.n_w = s.n_w;
  m.n_per_class = s.n_per_class;
  m.features_used = s.total_features_used;
  if (k <= model.num_features()) {
    const DiversityReport r = loc_k(test_maps, model, k);
    m.loc_k = r.aggregate;
    m.loc_k_class_mean = r.class_mean;
  }
  return m;
}

}  // namespace

std::pair<SparseLinearModel, ToyExtractor> dense_init(int classes, int channels, double extractor_noise,
                                                      std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x5eed0de5eULL);
  std::normal_distribution<double> noise(0.0, 0.01);
  std::normal_distribution<double> mix_noise(0.0, extractor_noise);
  Matrix w(classes, channels);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = noise(rng);
  ToyExtractor ex = ToyExtractor::identity(channels);
  Matrix& mix = ex.mutable_mixing();
  for (Eigen::Index i = 0; i < mix.size(); ++i) mix.data()[i] += mix_noise(rng);
  return {SparseLinearModel(std::move(w), Vector::Zero(classes), ModelMeta{0.0, 0.0, seed, "init"}), std::move(ex)};
}

namespace {

SolverConfig seeded(SolverConfig c, std::uint64_t seed) {
  c.seed += seed;
  return c;
}

FinetuneConfig seeded(FinetuneConfig c, double beta, std::uint64_t seed) {
  c.beta = beta;
  c.seed += seed;
  return c;
}

struct SparseStage {
  RegularizationPath path;
  SparseLinearModel standardized;
  SparseLinearModel raw;
};

// Path over `columns` of the standardized features, expanded back to all
// columns, followed by sparsify and folding of the normalization.
SparseStage fit_sparse(const PipelineConfig& config, const FeatureMatrix& train_std, const LabelVector& labels,
                       const std::vector<int>& columns, double budget_select, double budget_final,
                       std::uint64_t seed) {
  const double limit = std::max(budget_select, budget_final);
  const auto stop = [limit](const PathEntry& e) { return e.sparsity.n_per_class > limit; };
  SparseStage out;
  out.path = fit_path(train_std.select_columns(columns), labels, seeded(config.path_solver, seed),
                      ProxSpec::elementwise(), stop);
  const int f = static_cast<int>(train_std.cols());
  for (auto& e : out.path.entries) e.model = expand_columns(e.model, columns, f);
  out.standardized = sparsify(out.path, budget_select, budget_final);
  out.raw = fold_normalization(out.standardized, *train_std.norm_stats()).with_meta(out.standardized.meta());
  return out;
}

int error_code_of(const std::exception_ptr& ep, std::string& message) {
  try {
    std::rethrow_exception(ep);
  } catch (const ConfigError& e) {
    message = e.what();
    return 2;
  } catch (const NumericError& e) {
    message = e.what();
    return 3;
  } catch (const IoError& e) {
    message = e.what();
    return 4;
  } catch (const std::exception& e) {
    message = e.what();
    return 1;
  }
}

}  // namespace

SeedResult run_seed(const PipelineConfig& config, std::uint64_t seed, const fs::path& dir) {
  fs::create_directories(dir);
  const bool verbose = std::getenv("SLDD_VERBOSE") != nullptr;
  auto t_stage = std::chrono::steady_clock::now();
  const auto log_stage = [&](const char* name) {
    const auto now = std::chrono::steady_clock::now();
    if (verbose) {
      static std::mutex m;
      std::lock_guard<std::mutex> lock(m);
      std::fprintf(stderr, "[seed %llu] %s %.2fs\n", static_cast<unsigned long long>(seed), name,
                   std::chrono::duration<double>(now - t_stage).count());
    }
    t_stage = now;
  };
  SeedResult result;
  result.seed = seed;
  const Dataset d = load_dataset(config, seed, dir);
  const int classes = d.train_labels.num_classes;
  const int channels = d.train_maps.features();
  if (config.n_target > channels) throw ConfigError("pipeline: n_target exceeds the number of features");

  // Dense stage.
  auto [init_model, init_extractor] = dense_init(classes, channels, config.extractor_init_noise, config.dense.seed + seed);
  const FinetuneConfig dense_cfg = seeded(config.dense, config.beta, seed);
  FinetuneResult dense =
      finetune(TrainingData::from_maps(d.train_maps), d.train_labels, init_model, dense_cfg, &init_extractor);
  const SparseLinearModel dense_model = dense.model.with_meta(ModelMeta{0.0, 0.0, seed, "dense"});
  const ToyExtractor dense_extractor = *dense.extractor;
  io::save_json(dir / "dense_model.json", io::to_json(dense_model));
  io::save_json(dir / "dense_extractor.json", io::to_json(dense_extractor));
  io::save_text(dir / "dense_curve.csv", io::curves_csv(dense.curve));
  result.dense = evaluate(dense_model, dense_extractor, d, config.loc_k);

  log_stage("dense");
  // Features of the trained extractor, standardized.
  const FeatureMatrix train_std = standardize(pool_maps(dense_extractor.apply(d.train_maps)));
  io::save_feature_matrix(dir / "train_features.fmx", train_std);

  // Selection.
  std::vector<int> columns;
  int n_select = config.n_target;
  for (int v : config.sweep_n_target) n_select = std::max(n_select, v);
  SelectionState selection;
  if (config.feature_selection) {
    const bool partial = n_select > config.n_target;
    selection = select_features(train_std, d.train_labels, n_select, seeded(config.selection_solver, seed), partial);
    if (static_cast<int>(selection.selected.size()) < config.n_target) {
      throw NumericError("select_features: fewer than n_target features entered the path");
    }
    columns.assign(selection.selected.begin(), selection.selected.begin() + config.n_target);
    io::save_json(dir / "selection.json", io::to_json(selection));
  } else {
    for (int l = 0; l < channels; ++l) columns.push_back(l);
  }
  result.selected = columns;
  if (!d.signal_features.empty()) {
    std::size_t hits = 0;
    for (int l : columns) hits += std::binary_search(d.signal_features.begin(), d.signal_features.end(), l);
    result.planted_recovery = static_cast<double>(hits) / static_cast<double>(d.signal_features.size());
  }

  log_stage("selection");
  // Path and sparsify. The path runs far enough for the n_per_class sweep.
  double budget_limit = config.budget_select;
  for (double b : config.sweep_n_per_class) budget_limit = std::max(budget_limit, b);
  SparseStage sparse = fit_sparse(config, train_std, d.train_labels, columns, budget_limit, config.budget_final, seed);
  if (budget_limit > config.budget_select) {
    sparse.standardized = sparsify(sparse.path, config.budget_select, config.budget_final);
    sparse.raw = fold_normalization(sparse.standardized, *train_std.norm_stats()).with_meta(sparse.standardized.meta());
  }
  io::save_json(dir / "path.json", io::to_json(sparse.path));
  io::save_json(dir / "sparse_model.json", io::to_json(sparse.standardized));
  io::save_json(dir / "sparse_model_raw.json", io::to_json(sparse.raw));
  result.sparse = evaluate(sparse.raw, dense_extractor, d, config.loc_k);

  log_stage("path");
  // Finetune with the support frozen.
  const FinetuneConfig ft_cfg = seeded(config.finetune, config.beta, seed);
  const auto run_finetune = [&](const SparseLinearModel& start) {
    return finetune(TrainingData::from_maps(d.train_maps), d.train_labels, start, ft_cfg, &dense_extractor);
  };
  SparseLinearModel final_model = sparse.raw;
  ToyExtractor final_extractor = dense_extractor;
  if (config.finetune_stage) {
    FinetuneResult ft = run_finetune(sparse.raw);
    final_model = ft.model;
    final_extractor = *ft.extractor;
    io::save_json(dir / "finetuned_model.json", io::to_json(final_model));
    io::save_json(dir / "finetuned_extractor.json", io::to_json(final_extractor));
    io::save_text(dir / "finetune_curve.csv", io::curves_csv(ft.curve));
  }
  result.final = evaluate(final_model, final_extractor, d, config.loc_k);
  if (final_model.num_features() >= config.loc_k) {
    const DiversityReport r = loc_k(final_extractor.apply(d.test_maps), final_model, config.loc_k);
    io::save_json(dir / "loc_final.json", io::to_json(r));
  }

  log_stage("finetune");
  // Alignment of the features the final model uses.
  if (d.attributes) {
    const ToyExtractor& ex = config.alignment_features == "dense" ? dense_extractor : final_extractor;
    const AlignmentScores scores = alignment_scores(pool_maps(ex.apply(d.train_maps)), *d.attributes);
    const std::vector<int> used = final_model.used_features();
    std::vector<AlignmentRow> rows;
    for (const auto& row : alignment_report(scores, config.alignment_threshold)) {
      if (std::binary_search(used.begin(), used.end(), row.feature)) rows.push_back(row);
    }
    result.alignment_hits = rows.size();
    result.alignment_max = rows.empty() ? 0.0 : rows.front().score;
    io::save_json(dir / "alignment.json", io::to_json(rows, &*d.attributes));
    io::save_text(dir / "alignment.csv", io::alignment_csv(rows, &*d.attributes));
  }

  log_stage("alignment");
  // Sweeps.
  const auto sweep_point = [&](double x, const SparseLinearModel& raw) {
    SweepPoint p;
    p.x = x;
    p.sparse_accuracy = accuracy(predict(raw, pool_maps(dense_extractor.apply(d.test_maps))), d.test_labels);
    p.n_per_class = sparsity_metrics(raw).n_per_class;
    p.final_accuracy = p.sparse_accuracy;
    if (config.finetune_stage) {
      const FinetuneResult ft = run_finetune(raw);
      p.final_accuracy =
          accuracy(predict(ft.model, pool_maps(ft.extractor->apply(d.test_maps))), d.test_labels);
    }
    return p;
  };
  for (int v : config.sweep_n_target) {
    if (!config.feature_selection || v > static_cast<int>(selection.selected.size())) continue;
    const std::vector<int> cols(selection.selected.begin(), selection.selected.begin() + v);
    const SparseStage s =
        fit_sparse(config, train_std, d.train_labels, cols, config.budget_select, config.budget_final, seed);
    result.sweep_n_target.push_back(sweep_point(v, s.raw));
  }
  for (double b : config.sweep_n_per_class) {
    const SparseLinearModel standardized = sparsify(sparse.path, std::max(config.budget_select, b), b);
    result.sweep_n_per_class.push_back(sweep_point(b, fold_normalization(standardized, *train_std.norm_stats())));
  }

  log_stage("sweeps");
  result.ok = true;
  io::save_json(dir / "metrics.json", seed_json(result));
  return result;
}

json PipelineSummary::to_json() const {
  json cfg = sldd::to_json(config);
  // Execution details that do not influence results.
  cfg.erase("output_dir");
  cfg.erase("threads");
  json runs = json::array();
  for (const auto& r : seeds) runs.push_back(seed_json(r));
  return json{{"config", cfg}, {"seeds", runs}, {"aggregate", aggregate_seeds(runs)}};
}

namespace {

int resolve_threads(const PipelineConfig& config) {
  int n = config.threads;
  if (n == 0) {
    if (const char* env = std::getenv("SLDD_THREADS")) {
      try {
        n = std::stoi(env);
      } catch (const std::exception&) {
        throw ConfigError(std::string("SLDD_THREADS is not an integer: ") + env);
      }
      if (n < 1) throw ConfigError("SLDD_THREADS must be >= 1");
    } else {
      n = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    }
  }
  return std::min<int>(n, static_cast<int>(config.seeds.size()));
}

}  // namespace

PipelineSummary run_pipeline(const PipelineConfig& config) {
  config.validate();
  fs::create_directories(config.output_dir);
  PipelineSummary summary;
  summary.config = config;
  summary.seeds.resize(config.seeds.size());
  std::vector<double> seconds(config.seeds.size(), 0.0);

  const auto start = std::chrono::steady_clock::now();
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < config.seeds.size(); i = next++) {
      const std::uint64_t s = config.seeds[i];
      const auto t0 = std::chrono::steady_clock::now();
      try {
        summary.seeds[i] = run_seed(config, s, config.output_dir / ("seed_" + std::to_string(s)));
      } catch (...) {
        SeedResult failed;
        failed.seed = s;
        failed.error_code = error_code_of(std::current_exception(), failed.error);
        summary.seeds[i] = std::move(failed);
      }
      seconds[i] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
  };
  const int threads = resolve_threads(config);
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  const double total = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  io::save_json(config.output_dir / "config.json", to_json(config));
  io::save_json(config.output_dir / "summary.json", summary.to_json());
  json info{{"threads", threads}, {"total_seconds", total}, {"seed_seconds", json::array()}};
  for (std::size_t i = 0; i < seconds.size(); ++i) {
    info["seed_seconds"].push_back(json{{"seed", config.seeds[i]}, {"seconds", seconds[i]}});
  }
  io::save_json(config.output_dir / "run_info.json", info);
  return summary;
}

}  // namespace sldd
