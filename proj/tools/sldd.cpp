// Command line front end: one subcommand per pipeline stage plus the full
// multi-seed pipeline and report generation.
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sldd/diversity.hpp"
#include "sldd/error.hpp"
#include "sldd/feature_select.hpp"
#include "sldd/finetune.hpp"
#include "sldd/io.hpp"
#include "sldd/localization.hpp"
#include "sldd/pipeline.hpp"
#include "sldd/report.hpp"
#include "sldd/saga.hpp"
#include "sldd/synthetic.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sldd;

namespace {

struct ConfigArgs {
  std::string file;
  std::vector<std::string> overrides;

  void add_to(CLI::App* app) {
    app->add_option("-c,--config", file, "pipeline config JSON");
    app->add_option("--set", overrides, "override key.path=value (repeatable)");
  }

  PipelineConfig load() const {
    json doc = file.empty() ? json::object() : io::load_json(file);
    for (const auto& o : overrides) apply_override(doc, o);
    return pipeline_config_from_json(doc);
  }
};

void print_json(const json& j) { std::cout << j.dump(2) << "\n"; }

int cmd_gen(const ConfigArgs& cfg_args, const std::string& out, std::uint64_t seed) {
  PipelineConfig cfg = cfg_args.load();
  SyntheticSpec spec = cfg.data;
  spec.seed += seed;
  const SyntheticData d = generate_synthetic(spec);
  const fs::path dir(out);
  fs::create_directories(dir);
  io::save_maps(dir / "train_maps.fmp", d.train_maps);
  io::save_maps(dir / "test_maps.fmp", d.test_maps);
  io::save_json(dir / "train_labels.json", io::to_json(d.train_labels));
  io::save_json(dir / "test_labels.json", io::to_json(d.test_labels));
  io::save_text(dir / "train_attributes.csv", io::attribute_csv(d.train_attributes));
  json truth{{"signal_features", d.signal_features}, {"true_support", json::array()}};
  for (std::size_t i = 0; i < d.true_support.size(); ++i) {
    truth["true_support"].push_back(json{{"class", d.true_support[i].first},
                                         {"feature", d.true_support[i].second},
                                         {"centre", {d.bump_centres[i].first, d.bump_centres[i].second}}});
  }
  io::save_json(dir / "truth.json", truth);
  std::cout << "wrote synthetic data to " << dir << "\n";
  return 0;
}

int cmd_train_dense(const ConfigArgs& cfg_args, const std::string& maps_path, const std::string& labels_path,
                    const std::string& out, std::uint64_t seed) {
  const PipelineConfig cfg = cfg_args.load();
  const FeatureMapBatch maps = io::load_maps(maps_path);
  const LabelVector labels = io::labels_from_json(io::load_json(labels_path));
  if (static_cast<std::size_t>(maps.size()) != labels.size()) throw ConfigError("train-dense: map/label count mismatch");
  const int c = labels.num_classes, f = maps.features();

  auto [init, ex] = dense_init(c, f, cfg.extractor_init_noise, cfg.dense.seed + seed);
  FinetuneConfig ft = cfg.dense;
  ft.beta = cfg.beta;
  ft.seed += seed;
  ft.freeze_support = false;
  const FinetuneResult r = finetune(TrainingData::from_maps(maps), labels, init, ft, &ex);

  const fs::path dir(out);
  fs::create_directories(dir);
  io::save_json(dir / "dense_model.json", io::to_json(r.model.with_meta(ModelMeta{0, 0, seed, "dense"})));
  io::save_json(dir / "dense_extractor.json", io::to_json(*r.extractor));
  io::save_text(dir / "dense_curve.csv", io::curves_csv(r.curve));
  io::save_feature_matrix(dir / "train_features.fmx", standardize(pool_maps(r.extractor->apply(maps))));
  std::cout << "final train accuracy " << r.curve.back().accuracy << "\n";
  return 0;
}

int cmd_select(const ConfigArgs& cfg_args, const std::string& feats_path, const std::string& labels_path,
               std::optional<int> n_target, const std::string& out) {
  const PipelineConfig cfg = cfg_args.load();
  const FeatureMatrix feats = io::load_feature_matrix(feats_path);
  const LabelVector labels = io::labels_from_json(io::load_json(labels_path));
  const SelectionState s = select_features(feats, labels, n_target.value_or(cfg.n_target), cfg.selection_solver);
  io::save_json(out, io::to_json(s));
  print_json(io::to_json(s)["selected"]);
  return 0;
}

int cmd_path(const ConfigArgs& cfg_args, const std::string& feats_path, const std::string& labels_path,
             const std::string& selection_path, bool full_path, const std::string& out) {
  const PipelineConfig cfg = cfg_args.load();
  const FeatureMatrix feats = io::load_feature_matrix(feats_path);
  const LabelVector labels = io::labels_from_json(io::load_json(labels_path));
  std::vector<int> columns;
  if (!selection_path.empty()) {
    const SelectionState s = io::selection_from_json(io::load_json(selection_path));
    const int n = std::min<int>(cfg.n_target, static_cast<int>(s.selected.size()));
    columns.assign(s.selected.begin(), s.selected.begin() + n);
  } else {
    for (int l = 0; l < feats.cols(); ++l) columns.push_back(l);
  }
  std::function<bool(const PathEntry&)> stop;
  if (!full_path) {
    stop = [limit = cfg.budget_select](const PathEntry& e) { return e.sparsity.n_per_class > limit; };
  }
  RegularizationPath path = fit_path(feats.select_columns(columns), labels, cfg.path_solver, ProxSpec::elementwise(), stop);
  for (auto& e : path.entries) e.model = expand_columns(e.model, columns, static_cast<int>(feats.cols()));
  io::save_json(out, io::to_json(path));
  std::cout << path.entries.size() << " path entries\n";
  return 0;
}

int cmd_sparsify(const ConfigArgs& cfg_args, const std::string& path_file, std::optional<double> b_select,
                 std::optional<double> b_final, const std::string& feats_path, const std::string& out,
                 const std::string& out_raw) {
  const PipelineConfig cfg = cfg_args.load();
  const RegularizationPath path = io::path_from_json(io::load_json(path_file));
  const SparseLinearModel m =
      sparsify(path, b_select.value_or(cfg.budget_select), b_final.value_or(cfg.budget_final));
  io::save_json(out, io::to_json(m));
  if (!out_raw.empty()) {
    if (feats_path.empty()) throw ConfigError("sparsify: --out-raw needs --features for the normalization stats");
    const FeatureMatrix feats = io::load_feature_matrix(feats_path);
    if (!feats.norm_stats()) throw ConfigError("sparsify: features carry no normalization stats");
    io::save_json(out_raw, io::to_json(fold_normalization(m, *feats.norm_stats()).with_meta(m.meta())));
  }
  const SparsityMetrics s = sparsity_metrics(m);
  std::cout << "n_w " << s.n_w << " n_per_class " << s.n_per_class << " features " << s.total_features_used << "\n";
  return 0;
}

int cmd_finetune(const ConfigArgs& cfg_args, const std::string& model_path, const std::string& maps_path,
                 const std::string& labels_path, const std::string& extractor_path, const std::string& out,
                 std::uint64_t seed) {
  const PipelineConfig cfg = cfg_args.load();
  const SparseLinearModel model = io::model_from_json(io::load_json(model_path));
  const FeatureMapBatch maps = io::load_maps(maps_path);
  const LabelVector labels = io::labels_from_json(io::load_json(labels_path));
  FinetuneConfig ft = cfg.finetune;
  ft.beta = cfg.beta;
  ft.seed += seed;
  std::optional<ToyExtractor> ex;
  if (!extractor_path.empty()) ex = io::extractor_from_json(io::load_json(extractor_path));
  const FinetuneResult r = finetune(TrainingData::from_maps(maps), labels, model, ft, ex ? &*ex : nullptr);
  const fs::path dir(out);
  fs::create_directories(dir);
  io::save_json(dir / "finetuned_model.json", io::to_json(r.model));
  if (r.extractor) io::save_json(dir / "finetuned_extractor.json", io::to_json(*r.extractor));
  io::save_text(dir / "finetune_curve.csv", io::curves_csv(r.curve));
  std::cout << "final train accuracy " << r.curve.back().accuracy << "\n";
  return 0;
}

int cmd_metrics(const std::string& model_path, const std::string& maps_path, const std::string& labels_path,
                const std::string& extractor_path, int k, const std::string& attributes_path, double threshold,
                const std::string& out) {
  const SparseLinearModel model = io::model_from_json(io::load_json(model_path));
  FeatureMapBatch maps = io::load_maps(maps_path);
  const LabelVector labels = io::labels_from_json(io::load_json(labels_path));
  if (!extractor_path.empty()) maps = io::extractor_from_json(io::load_json(extractor_path)).apply(maps);
  const FeatureMatrix pooled = pool_maps(maps);
  const SparsityMetrics s = sparsity_metrics(model);
  json j{{"accuracy", accuracy(predict(model, pooled), labels)},
         {"n_w", s.n_w},
         {"n_per_class", s.n_per_class},
         {"total_features_used", s.total_features_used}};
  const DiversityReport r = loc_k(maps, model, k);
  j["loc_k"] = io::to_json(r);
  if (!attributes_path.empty()) {
    const AttributeTable table = io::load_attribute_csv(attributes_path, maps.size());
    j["alignment"] = io::to_json(alignment_report(alignment_scores(pooled, table), threshold), &table);
  }
  if (!out.empty()) io::save_json(out, j);
  std::cout << "accuracy " << j["accuracy"] << " n_per_class " << s.n_per_class << " loc_" << k << " "
            << (r.aggregate ? std::to_string(*r.aggregate) : std::string("n/a")) << "\n";
  return 0;
}

int cmd_localize(const std::string& input_path, int index, int feature, const std::string& extractor_path,
                 const std::vector<std::string>& command, const std::vector<int>& sizes, const std::string& out) {
  const FeatureMapBatch all = io::load_maps(input_path);
  if (index < 0 || index >= all.size()) throw ConfigError("localize: --index out of range");
  const std::vector<int> one{index};
  const FeatureMapBatch input = all.select_examples(one);
  ExtractorFn fn;
  if (!command.empty()) {
    fn = subprocess_extractor(command);
  } else if (!extractor_path.empty()) {
    fn = toy_extractor_fn(io::extractor_from_json(io::load_json(extractor_path)));
  } else {
    fn = toy_extractor_fn(ToyExtractor::identity(input.features()));
  }
  PatchSchedule schedule;
  if (!sizes.empty()) schedule.sizes = sizes;
  const LocalizationMap m = localize_feature(fn, input, feature, schedule);
  const fs::path prefix(out);
  if (prefix.has_parent_path()) fs::create_directories(prefix.parent_path());
  FeatureMapBatch grid(1, 1, m.rows, m.cols, m.values);
  io::save_maps(prefix.string() + ".fmp", grid);
  io::save_text(prefix.string() + ".pgm", io::pgm(m.values, m.rows, m.cols));
  json j{{"rows", m.rows}, {"cols", m.cols}, {"cell", m.cell}, {"sizes", m.sizes}, {"values", m.values}};
  io::save_json(prefix.string() + ".json", j);
  std::cout << "localization grid " << m.rows << "x" << m.cols << " over sizes " << json(m.sizes).dump() << "\n";
  return 0;
}

int cmd_pipeline(const ConfigArgs& cfg_args, const std::string& out) {
  PipelineConfig cfg = cfg_args.load();
  if (!out.empty()) cfg.output_dir = out;
  const PipelineSummary s = run_pipeline(cfg);
  int code = 0;
  for (const auto& r : s.seeds) {
    if (r.ok) {
      std::cout << "seed " << r.seed << ": dense " << r.dense.test_accuracy << " sparse " << r.sparse.test_accuracy
                << " final " << r.final.test_accuracy << " n_pc " << r.final.n_per_class << "\n";
    } else {
      std::cout << "seed " << r.seed << " failed: " << r.error << "\n";
      if (code == 0) code = r.error_code;
    }
  }
  std::cout << "summary written to " << (cfg.output_dir / "summary.json") << "\n";
  return code;
}

int cmd_report(const std::string& bundle) {
  const ReportFiles files = write_report(bundle);
  for (const auto& f : files.written) std::cout << f.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse low-dimensional decision layers on desk-scale feature maps"};
  app.require_subcommand(1);

  ConfigArgs cfg;
  std::string out, maps, labels, feats, selection, model, extractor, path_file, attributes;
  std::uint64_t seed = 0;
  std::optional<int> n_target;
  std::optional<double> b_select, b_final;
  std::string out_raw;
  bool full_path = false;
  int k = 5, index = 0, feature = 0;
  double threshold = 0.2;
  std::vector<std::string> command;
  std::vector<int> sizes;
  std::function<int()> action;

  auto* gen = app.add_subcommand("gen", "generate a synthetic dataset");
  cfg.add_to(gen);
  gen->add_option("-o,--out", out, "output directory")->required();
  gen->add_option("--seed", seed, "added to data.seed");
  gen->callback([&] { action = [&] { return cmd_gen(cfg, out, seed); }; });

  auto* dense = app.add_subcommand("train-dense", "train extractor and dense head with the diversity loss");
  cfg.add_to(dense);
  dense->add_option("--maps", maps, "training maps (FMP1)")->required();
  dense->add_option("--labels", labels, "training labels JSON")->required();
  dense->add_option("-o,--out", out, "output directory")->required();
  dense->add_option("--seed", seed, "run seed");
  dense->callback([&] { action = [&] { return cmd_train_dense(cfg, maps, labels, out, seed); }; });

  auto* sel = app.add_subcommand("select", "greedy feature selection");
  cfg.add_to(sel);
  sel->add_option("--features", feats, "standardized features (FMX1 or CSV)")->required();
  sel->add_option("--labels", labels, "labels JSON")->required();
  sel->add_option("-n,--n-target", n_target, "number of features");
  sel->add_option("-o,--out", out, "selection JSON")->required();
  sel->callback([&] { action = [&] { return cmd_select(cfg, feats, labels, n_target, out); }; });

  auto* path = app.add_subcommand("path", "fit the elastic-net regularization path");
  cfg.add_to(path);
  path->add_option("--features", feats, "standardized features")->required();
  path->add_option("--labels", labels, "labels JSON")->required();
  path->add_option("--selection", selection, "selection JSON restricting the columns");
  path->add_flag("--full", full_path, "do not stop once n_per_class exceeds budget_select");
  path->add_option("-o,--out", out, "path JSON")->required();
  path->callback([&] { action = [&] { return cmd_path(cfg, feats, labels, selection, full_path, out); }; });

  auto* sp = app.add_subcommand("sparsify", "choose a path entry and clip it to the final budget");
  cfg.add_to(sp);
  sp->add_option("--path", path_file, "path JSON")->required();
  sp->add_option("--budget-select", b_select);
  sp->add_option("--budget-final", b_final);
  sp->add_option("--features", feats, "features whose sidecar holds the normalization stats");
  sp->add_option("-o,--out", out, "model JSON in standardized space")->required();
  sp->add_option("--out-raw", out_raw, "model JSON with the normalization folded in");
  sp->callback([&] { action = [&] { return cmd_sparsify(cfg, path_file, b_select, b_final, feats, out, out_raw); }; });

  auto* ft = app.add_subcommand("finetune", "finetune a sparse model with its support frozen");
  cfg.add_to(ft);
  ft->add_option("--model", model, "starting model JSON (raw feature space)")->required();
  ft->add_option("--maps", maps, "training inputs (FMP1)")->required();
  ft->add_option("--labels", labels, "training labels JSON")->required();
  ft->add_option("--extractor", extractor, "extractor JSON; without it the maps are used as features");
  ft->add_option("-o,--out", out, "output directory")->required();
  ft->add_option("--seed", seed, "run seed");
  ft->callback([&] { action = [&] { return cmd_finetune(cfg, model, maps, labels, extractor, out, seed); }; });

  auto* met = app.add_subcommand("metrics", "accuracy, sparsity, loc_k and alignment of a model");
  met->add_option("--model", model, "model JSON")->required();
  met->add_option("--maps", maps, "maps or extractor inputs (FMP1)")->required();
  met->add_option("--labels", labels, "labels JSON")->required();
  met->add_option("--extractor", extractor, "extractor JSON");
  met->add_option("-k", k, "loc_k size");
  met->add_option("--attributes", attributes, "attribute CSV for alignment");
  met->add_option("--threshold", threshold, "alignment report threshold");
  met->add_option("-o,--out", out, "metrics JSON");
  met->callback([&] {
    action = [&] { return cmd_metrics(model, maps, labels, extractor, k, attributes, threshold, out); };
  });

  auto* loc = app.add_subcommand("localize", "blur-based localization map of one feature");
  loc->add_option("--input", maps, "input grids (FMP1)")->required();
  loc->add_option("--index", index, "example index");
  loc->add_option("--feature", feature, "feature index")->required();
  loc->add_option("--extractor", extractor, "toy extractor JSON");
  loc->add_option("--command", command, "external extractor program and arguments")->expected(-1);
  loc->add_option("--sizes", sizes, "patch sizes")->expected(-1);
  loc->add_option("-o,--out", out, "output prefix (.fmp, .pgm, .json)")->required();
  loc->callback([&] { action = [&] { return cmd_localize(maps, index, feature, extractor, command, sizes, out); }; });

  auto* pipe = app.add_subcommand("pipeline", "run every stage for every seed");
  cfg.add_to(pipe);
  pipe->add_option("-o,--out", out, "output directory (overrides output_dir)");
  pipe->callback([&] { action = [&] { return cmd_pipeline(cfg, out); }; });

  auto* rep = app.add_subcommand("report", "tables and plots from a pipeline bundle");
  rep->add_option("bundle", out, "pipeline output directory")->required();
  rep->callback([&] { action = [&] { return cmd_report(out); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  try {
    return action();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const IoError& e) {
    std::cerr << "i/o failure: " << e.what() << "\n";
    return 4;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "i/o failure: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
