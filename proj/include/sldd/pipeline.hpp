#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "sldd/feature_select.hpp"
#include "sldd/finetune.hpp"
#include "sldd/saga.hpp"
#include "sldd/synthetic.hpp"

namespace sldd {

// Optional on-disk dataset used instead of the synthetic generator.
struct PipelineInputs {
  std::filesystem::path train_maps, train_labels, test_maps, test_labels;
  std::filesystem::path attributes;  // optional attribute CSV for the training split
};

struct PipelineConfig {
  SyntheticSpec data;
  std::optional<PipelineInputs> inputs;
  bool save_data = false;  // write the generated maps and labels per seed
  // Each run regenerates the dataset with data.seed + run seed.
  bool vary_data_with_seed = true;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};

  bool feature_selection = true;
  bool finetune_stage = true;

  double beta = 0.196;  // diversity weight for the dense and finetune stages
  FinetuneConfig dense;
  // Dense-stage start: head ~ N(0, 0.01^2), extractor = identity + N(0, s^2).
  double extractor_init_noise = 0.2;
  FinetuneConfig finetune;
  SolverConfig selection_solver = selection_solver_config();
  SolverConfig path_solver;

  int n_target = 20;
  double budget_select = 10.0;
  double budget_final = 5.0;
  int loc_k = 5;
  double alignment_threshold = 0.2;
  std::string alignment_features = "finetuned";  // or "dense"

  std::vector<int> sweep_n_target;
  std::vector<double> sweep_n_per_class;

  std::filesystem::path output_dir = "sldd_run";
  int threads = 0;  // 0: SLDD_THREADS or hardware concurrency

  static PipelineConfig defaults();
  void validate() const;
};

nlohmann::json to_json(const PipelineConfig& config);
// Missing keys keep their defaults; unknown keys are rejected.
PipelineConfig pipeline_config_from_json(const nlohmann::json& j);
// Applies a dotted-path override such as "finetune.epochs=10"; the value is
// parsed as JSON and falls back to a plain string.
void apply_override(nlohmann::json& doc, const std::string& assignment);

struct StageMetrics {
  double test_accuracy = 0.0;
  double train_accuracy = 0.0;
  std::size_t n_w = 0;
  double n_per_class = 0.0;
  std::size_t features_used = 0;
  std::optional<double> loc_k;
  std::optional<double> loc_k_class_mean;
};

struct SweepPoint {
  double x = 0.0;
  double sparse_accuracy = 0.0;
  double final_accuracy = 0.0;
  double n_per_class = 0.0;
};

struct SeedResult {
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  int error_code = 0;
  StageMetrics dense, sparse, final;
  std::vector<int> selected;
  double planted_recovery = 0.0;  // share of planted features in the selection
  std::size_t alignment_hits = 0;  // C above threshold
  double alignment_max = 0.0;
  std::vector<SweepPoint> sweep_n_target;
  std::vector<SweepPoint> sweep_n_per_class;
};

struct PipelineSummary {
  PipelineConfig config;
  std::vector<SeedResult> seeds;
  nlohmann::json to_json() const;
};

// Runs dense training, feature selection, path fitting with sparsification
// and finetuning for every seed, writing each stage's artifacts under
// output_dir/seed_<s>/ and the deterministic summary to output_dir/summary.json.
PipelineSummary run_pipeline(const PipelineConfig& config);

// Dense-stage starting point for `classes` x `channels`.
std::pair<SparseLinearModel, ToyExtractor> dense_init(int classes, int channels, double extractor_noise,
                                                      std::uint64_t seed);

SeedResult run_seed(const PipelineConfig& config, std::uint64_t seed, const std::filesystem::path& dir);

}  // namespace sldd
