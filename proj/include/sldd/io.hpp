#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "sldd/alignment.hpp"
#include "sldd/diversity.hpp"
#include "sldd/feature_select.hpp"
#include "sldd/finetune.hpp"
#include "sldd/saga.hpp"
#include "sldd/tensor.hpp"

namespace sldd::io {

using json = nlohmann::json;
namespace fs = std::filesystem;

// FMX1: magic "FMX1", u32 N, u32 F, then N*F little-endian f64 row-major.
void write_fmx(std::ostream& out, const Matrix& values);
Matrix read_fmx(std::istream& in);
// FMP1: magic "FMP1", u32 N, F, H, W, then f64 values in (n, l, i, j) order.
void write_fmp(std::ostream& out, const FeatureMapBatch& maps);
FeatureMapBatch read_fmp(std::istream& in);

// Path of the JSON sidecar that carries norm_stats for a matrix file.
fs::path sidecar_path(const fs::path& matrix_path);

void save_feature_matrix(const fs::path& path, const FeatureMatrix& feats);
// Loads FMX1 (plus sidecar when present) or CSV with a header row (by extension).
FeatureMatrix load_feature_matrix(const fs::path& path);
FeatureMatrix read_csv_matrix(std::istream& in);

void save_maps(const fs::path& path, const FeatureMapBatch& maps);
FeatureMapBatch load_maps(const fs::path& path);

json load_json(const fs::path& path);
void save_json(const fs::path& path, const json& doc);
void save_text(const fs::path& path, const std::string& text);

json to_json(const NormStats& stats);
NormStats norm_stats_from_json(const json& j);

json to_json(const LabelVector& labels);
LabelVector labels_from_json(const json& j);

json to_json(const SparseLinearModel& model);
SparseLinearModel model_from_json(const json& j);

json to_json(const SolverConfig& config);
SolverConfig solver_config_from_json(const json& j, SolverConfig defaults = {});

json to_json(const RegularizationPath& path);
RegularizationPath path_from_json(const json& j);

json to_json(const SelectionState& state);
SelectionState selection_from_json(const json& j);

json to_json(const ToyExtractor& extractor);
ToyExtractor extractor_from_json(const json& j);

json to_json(const FinetuneConfig& config);
FinetuneConfig finetune_config_from_json(const json& j, FinetuneConfig defaults = {});

json to_json(const DiversityReport& report);
std::string diversity_csv(const DiversityReport& report);

std::string curves_csv(const std::vector<CurveRow>& rows);

// CSV rows: example_id, attribute_id, certainty (0..3), with a header line.
AttributeTable read_attribute_csv(std::istream& in, int num_examples);
AttributeTable load_attribute_csv(const fs::path& path, int num_examples);
std::string attribute_csv(const AttributeTable& table);

json to_json(const std::vector<AlignmentRow>& rows, const AttributeTable* table = nullptr);
std::string alignment_csv(const std::vector<AlignmentRow>& rows, const AttributeTable* table = nullptr);

// 8-bit binary PGM scaled so that the maximum value maps to 255.
std::string pgm(const std::vector<double>& values, int rows, int cols);

}  // namespace sldd::io
