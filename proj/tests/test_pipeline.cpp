#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "doctest.h"
#include "sldd/error.hpp"
#include "sldd/io.hpp"
#include "sldd/pipeline.hpp"
#include "sldd/report.hpp"
#include "tiny_config.hpp"

using namespace sldd;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("sldd_pipe_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(SLDD_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("pipeline configs round-trip through JSON") {
  PipelineConfig c = PipelineConfig::defaults();
  c.beta = 0.3;
  c.seeds = {4, 9};
  c.finetune.epochs = 7;
  c.sweep_n_target = {5, 10};
  const PipelineConfig back = pipeline_config_from_json(to_json(c));
  CHECK(to_json(back) == to_json(c));
  CHECK(back.finetune.epochs == 7);
  CHECK(back.seeds == std::vector<std::uint64_t>{4, 9});
}

TEST_CASE("unknown keys and bad values are configuration errors") {
  nlohmann::json j = to_json(PipelineConfig::defaults());
  j["finetune"]["epochz"] = 3;
  CHECK_THROWS_AS(pipeline_config_from_json(j), ConfigError);
  j = to_json(PipelineConfig::defaults());
  j["budget_final"] = 20.0;
  CHECK_THROWS_AS(pipeline_config_from_json(j).validate(), ConfigError);
}

TEST_CASE("dotted overrides parse JSON values") {
  nlohmann::json j = to_json(PipelineConfig::defaults());
  apply_override(j, "finetune.epochs=11");
  apply_override(j, "alignment_features=dense");
  apply_override(j, "seeds=[1,2]");
  const PipelineConfig c = pipeline_config_from_json(j);
  CHECK(c.finetune.epochs == 11);
  CHECK(c.alignment_features == "dense");
  CHECK(c.seeds.size() == 2);
  CHECK_THROWS_AS(apply_override(j, "no_equals_sign"), ConfigError);
}

TEST_CASE("a tiny pipeline run is deterministic and writes every artifact") {
  const fs::path a = scratch_dir("a"), b = scratch_dir("b");
  const PipelineSummary s = run_pipeline(fixture::tiny_pipeline(a));
  PipelineConfig other = fixture::tiny_pipeline(b);
  other.threads = 2;
  run_pipeline(other);
  REQUIRE(s.seeds.size() == 1);
  REQUIRE(s.seeds[0].ok);
  CHECK(s.seeds[0].selected.size() == 8);
  CHECK(s.seeds[0].final.n_per_class <= 3.0);
  CHECK(s.seeds[0].sparse.test_accuracy > 1.0 / 3.0);
  CHECK(slurp(a / "summary.json") == slurp(b / "summary.json"));
  for (const char* f : {"dense_model.json", "dense_extractor.json", "selection.json", "path.json",
                        "sparse_model.json", "finetuned_model.json", "loc_final.json", "alignment.csv",
                        "metrics.json", "train_features.fmx"}) {
    CHECK_MESSAGE(fs::exists(a / "seed_0" / f), f);
  }

  const ReportFiles r = write_report(a);
  CHECK(r.written.size() == 5);
  const nlohmann::json rep = io::load_json(a / "report.json");
  CHECK(rep["metrics"]["final_test_accuracy"]["std"] == 0.0);
  CHECK(slurp(a / "tradeoff_n_target.svg").find("<svg") != std::string::npos);
}

TEST_CASE("aggregation uses the sample standard deviation") {
  const Aggregate a = aggregate({1.0, 2.0, 3.0});
  CHECK(a.mean == 2.0);
  CHECK(a.stddev == doctest::Approx(1.0));
  CHECK(aggregate({5.0}).stddev == 0.0);
}

TEST_CASE("the command line maps failures to exit codes") {
  const fs::path dir = scratch_dir("cli");
  fs::create_directories(dir);
  CHECK(run_cli("--help") == 0);
  CHECK(run_cli("no-such-command") == 2);
  CHECK(run_cli("pipeline --set beta=-1 -o " + dir.string()) == 2);
  CHECK(run_cli("report " + (dir / "missing").string()) == 4);
  CHECK(run_cli("gen --set data.n_train=40 --set data.n_test=20 -o " + (dir / "data").string()) == 0);
  CHECK(fs::exists(dir / "data" / "train_maps.fmp"));
  CHECK(run_cli("select --features " + (dir / "data" / "train_maps.fmp").string() + " --labels /nonexistent -o " +
                (dir / "s.json").string()) == 4);
}
