#pragma once

#include <filesystem>

#include "sldd/pipeline.hpp"

namespace fixture {

// A pipeline small enough to run in a couple of seconds.
inline sldd::PipelineConfig tiny_pipeline(const std::filesystem::path& out) {
  sldd::PipelineConfig c = sldd::PipelineConfig::defaults();
  c.data.num_classes = 3;
  c.data.num_features = 12;
  c.data.signal_per_class = 2;
  c.data.height = c.data.width = 5;
  c.data.n_train = 90;
  c.data.n_test = 60;
  c.seeds = {0};
  c.dense.epochs = 4;
  c.finetune.epochs = 3;
  c.n_target = 8;
  c.loc_k = 2;
  c.budget_select = 4.0;
  c.budget_final = 3.0;
  c.path_solver.lambda_schedule.k_steps = 20;
  c.output_dir = out;
  c.threads = 1;
  return c;
}

}  // namespace fixture
