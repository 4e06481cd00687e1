#include "sldd/io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "sldd/error.hpp"

namespace sldd::io {

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int k = 0; k < 4; ++k) b[k] = static_cast<unsigned char>((v >> (8 * k)) & 0xffu);
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_f64(std::ostream& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  unsigned char b[8];
  for (int k = 0; k < 8; ++k) b[k] = static_cast<unsigned char>((bits >> (8 * k)) & 0xffu);
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw IoError("truncated header");
  std::uint32_t v = 0;
  for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(b[k]) << (8 * k);
  return v;
}

double get_f64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw IoError("truncated payload");
  std::uint64_t bits = 0;
  for (int k = 0; k < 8; ++k) bits |= static_cast<std::uint64_t>(b[k]) << (8 * k);
  return std::bit_cast<double>(bits);
}

void expect_magic(std::istream& in, const char* magic) {
  char m[4];
  if (!in.read(m, 4) || std::memcmp(m, magic, 4) != 0) throw IoError(std::string("bad magic, expected ") + magic);
}

std::ifstream open_in(const fs::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::out) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, mode | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    std::size_t s = 0;
    while (s < cell.size() && cell[s] == ' ') ++s;
    out.push_back(cell.substr(s));
  }
  return out;
}

double parse_double(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) throw IoError("not a number: '" + s + "'");
  return v;
}

}  // namespace

void write_fmx(std::ostream& out, const Matrix& values) {
  out.write("FMX1", 4);
  put_u32(out, static_cast<std::uint32_t>(values.rows()));
  put_u32(out, static_cast<std::uint32_t>(values.cols()));
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    for (Eigen::Index c = 0; c < values.cols(); ++c) put_f64(out, values(r, c));
  }
  if (!out) throw IoError("write_fmx: stream failure");
}

Matrix read_fmx(std::istream& in) {
  expect_magic(in, "FMX1");
  const std::uint32_t n = get_u32(in), f = get_u32(in);
  Matrix m(n, f);
  for (std::uint32_t r = 0; r < n; ++r) {
    for (std::uint32_t c = 0; c < f; ++c) m(r, c) = get_f64(in);
  }
  return m;
}

void write_fmp(std::ostream& out, const FeatureMapBatch& maps) {
  out.write("FMP1", 4);
  put_u32(out, static_cast<std::uint32_t>(maps.size()));
  put_u32(out, static_cast<std::uint32_t>(maps.features()));
  put_u32(out, static_cast<std::uint32_t>(maps.height()));
  put_u32(out, static_cast<std::uint32_t>(maps.width()));
  for (double v : maps.data()) put_f64(out, v);
  if (!out) throw IoError("write_fmp: stream failure");
}

FeatureMapBatch read_fmp(std::istream& in) {
  expect_magic(in, "FMP1");
  const std::uint32_t n = get_u32(in), f = get_u32(in), h = get_u32(in), w = get_u32(in);
  std::vector<double> data(static_cast<std::size_t>(n) * f * h * w);
  for (double& v : data) v = get_f64(in);
  return FeatureMapBatch(static_cast<int>(n), static_cast<int>(f), static_cast<int>(h), static_cast<int>(w),
                         std::move(data));
}

fs::path sidecar_path(const fs::path& matrix_path) { return fs::path(matrix_path.string() + ".meta.json"); }

void save_feature_matrix(const fs::path& path, const FeatureMatrix& feats) {
  {
    auto out = open_out(path, std::ios::binary);
    write_fmx(out, feats.values());
  }
  const fs::path meta = sidecar_path(path);
  if (feats.normalized()) {
    save_json(meta, json{{"normalized", true}, {"norm_stats", to_json(*feats.norm_stats())}});
  } else if (fs::exists(meta)) {
    fs::remove(meta);
  }
}

FeatureMatrix read_csv_matrix(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw IoError("csv: missing header row");
  const std::size_t width = split_csv_line(line).size();
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    auto cells = split_csv_line(line);
    if (cells.size() != width) throw IoError("csv: ragged row " + std::to_string(rows.size() + 1));
    std::vector<double> row;
    for (const auto& c : cells) row.push_back(parse_double(c));
    rows.push_back(std::move(row));
  }
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    }
  }
  return FeatureMatrix(std::move(m));
}

FeatureMatrix load_feature_matrix(const fs::path& path) {
  if (path.extension() == ".csv") {
    auto in = open_in(path);
    return read_csv_matrix(in);
  }
  Matrix values;
  {
    auto in = open_in(path, std::ios::binary);
    values = read_fmx(in);
  }
  const fs::path meta = sidecar_path(path);
  if (fs::exists(meta)) {
    const json j = load_json(meta);
    if (get_or<bool>(j, "normalized", false)) {
      return FeatureMatrix(std::move(values), norm_stats_from_json(j.at("norm_stats")));
    }
  }
  return FeatureMatrix(std::move(values));
}

void save_maps(const fs::path& path, const FeatureMapBatch& maps) {
  auto out = open_out(path, std::ios::binary);
  write_fmp(out, maps);
}

FeatureMapBatch load_maps(const fs::path& path) {
  auto in = open_in(path, std::ios::binary);
  return read_fmp(in);
}

json load_json(const fs::path& path) {
  auto in = open_in(path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw IoError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void save_json(const fs::path& path, const json& doc) { save_text(path, doc.dump(2) + "\n"); }

void save_text(const fs::path& path, const std::string& text) {
  auto out = open_out(path, std::ios::binary);
  out << text;
  if (!out) throw IoError("write failure on " + path.string());
}

json to_json(const NormStats& stats) {
  return json{{"mean", stats.mean}, {"std", stats.stddev}, {"constant", stats.constant}};
}

NormStats norm_stats_from_json(const json& j) {
  NormStats s;
  s.mean = j.at("mean").get<std::vector<double>>();
  s.stddev = j.at("std").get<std::vector<double>>();
  s.constant = j.at("constant").get<std::vector<bool>>();
  if (s.stddev.size() != s.mean.size() || s.constant.size() != s.mean.size()) {
    throw IoError("norm_stats: inconsistent lengths");
  }
  return s;
}

json to_json(const LabelVector& labels) {
  return json{{"num_classes", labels.num_classes}, {"labels", labels.labels}};
}

LabelVector labels_from_json(const json& j) {
  return LabelVector(j.at("labels").get<std::vector<int>>(), j.at("num_classes").get<int>());
}

json to_json(const SparseLinearModel& model) {
  json weights = json::array();
  for (const auto& e : model.entries()) weights.push_back(json::array({e.cls, e.feature, e.value}));
  const auto m = sparsity_metrics(model);
  return json{{"num_classes", model.num_classes()},
              {"num_features", model.num_features()},
              {"lambda", model.meta().lambda},
              {"alpha", model.meta().alpha},
              {"seed", model.meta().seed},
              {"stage", model.meta().stage},
              {"n_w", m.n_w},
              {"n_per_class", m.n_per_class},
              {"weights", weights},
              {"bias", std::vector<double>(model.bias().data(), model.bias().data() + model.bias().size())}};
}

SparseLinearModel model_from_json(const json& j) {
  try {
    const int c = j.at("num_classes").get<int>(), f = j.at("num_features").get<int>();
    Matrix w = Matrix::Zero(c, f);
    for (const auto& t : j.at("weights")) {
      const int cls = t.at(0).get<int>(), feat = t.at(1).get<int>();
      if (cls < 0 || cls >= c || feat < 0 || feat >= f) throw IoError("model: weight index out of range");
      w(cls, feat) = t.at(2).get<double>();
    }
    const auto bias = j.at("bias").get<std::vector<double>>();
    if (bias.size() != static_cast<std::size_t>(c)) throw IoError("model: bias length mismatch");
    ModelMeta meta{get_or<double>(j, "lambda", 0.0), get_or<double>(j, "alpha", 0.0),
                   get_or<std::uint64_t>(j, "seed", 0), get_or<std::string>(j, "stage", "")};
    return SparseLinearModel(std::move(w), Eigen::Map<const Vector>(bias.data(), c), std::move(meta));
  } catch (const json::exception& e) {
    throw IoError(std::string("model: ") + e.what());
  }
}

json to_json(const SolverConfig& c) {
  json j{{"alpha", c.alpha},
         {"k_steps", c.lambda_schedule.k_steps},
         {"eps_ratio", c.lambda_schedule.eps_ratio},
         {"lambda_scale", c.lambda_schedule.scale},
         {"batch_size", c.batch_size},
         {"max_epochs", c.max_epochs},
         {"lookbehind", c.lookbehind},
         {"tol", c.tol},
         {"zero_clip_tol", c.zero_clip_tol},
         {"seed", c.seed}};
  if (!c.lambda_schedule.explicit_values.empty()) j["lambdas"] = c.lambda_schedule.explicit_values;
  if (c.learning_rate) j["learning_rate"] = *c.learning_rate;
  return j;
}

SolverConfig solver_config_from_json(const json& j, SolverConfig d) {
  try {
    d.alpha = get_or(j, "alpha", d.alpha);
    d.lambda_schedule.k_steps = get_or(j, "k_steps", d.lambda_schedule.k_steps);
    d.lambda_schedule.eps_ratio = get_or(j, "eps_ratio", d.lambda_schedule.eps_ratio);
    d.lambda_schedule.scale = get_or(j, "lambda_scale", d.lambda_schedule.scale);
    if (j.contains("lambdas")) d.lambda_schedule.explicit_values = j.at("lambdas").get<std::vector<double>>();
    if (j.contains("learning_rate") && !j.at("learning_rate").is_null()) {
      d.learning_rate = j.at("learning_rate").get<double>();
    }
    d.batch_size = get_or(j, "batch_size", d.batch_size);
    d.max_epochs = get_or(j, "max_epochs", d.max_epochs);
    d.lookbehind = get_or(j, "lookbehind", d.lookbehind);
    d.tol = get_or(j, "tol", d.tol);
    d.zero_clip_tol = get_or(j, "zero_clip_tol", d.zero_clip_tol);
    d.seed = get_or(j, "seed", d.seed);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("solver config: ") + e.what());
  }
  d.validate();
  return d;
}

json to_json(const RegularizationPath& path) {
  json entries = json::array();
  for (const auto& e : path.entries) {
    json m = to_json(e.model);
    m["lambda"] = e.lambda;
    m["objective"] = e.objective;
    m["train_accuracy"] = e.train_accuracy;
    m["total_features_used"] = e.sparsity.total_features_used;
    entries.push_back(std::move(m));
  }
  return json{{"config", to_json(path.config)}, {"entries", entries}};
}

RegularizationPath path_from_json(const json& j) {
  RegularizationPath path;
  try {
    path.config = solver_config_from_json(j.at("config"));
    for (const auto& e : j.at("entries")) {
      PathEntry entry;
      entry.model = model_from_json(e);
      entry.lambda = e.at("lambda").get<double>();
      entry.objective = get_or<double>(e, "objective", 0.0);
      entry.train_accuracy = get_or<double>(e, "train_accuracy", 0.0);
      entry.sparsity = sparsity_metrics(entry.model);
      path.entries.push_back(std::move(entry));
    }
  } catch (const json::exception& e) {
    throw IoError(std::string("path: ") + e.what());
  }
  return path;
}

json to_json(const SelectionState& state) {
  json history = json::array();
  for (const auto& r : state.history) {
    history.push_back(json{{"restart_index", r.restart_index},
                           {"added_feature", r.added_feature},
                           {"lambda_at_entry", r.lambda_at_entry},
                           {"column_norm", r.column_norm}});
  }
  return json{{"selected", state.selected}, {"history", history}};
}

SelectionState selection_from_json(const json& j) {
  SelectionState s;
  try {
    s.selected = j.at("selected").get<std::vector<int>>();
    for (const auto& h : j.at("history")) {
      s.history.push_back({h.at("restart_index").get<int>(), h.at("added_feature").get<int>(),
                           h.at("lambda_at_entry").get<double>(), h.at("column_norm").get<double>()});
    }
  } catch (const json::exception& e) {
    throw IoError(std::string("selection: ") + e.what());
  }
  return s;
}

json to_json(const ToyExtractor& e) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < e.mixing().rows(); ++r) {
    rows.push_back(std::vector<double>(e.mixing().row(r).data(), e.mixing().row(r).data() + e.mixing().cols()));
  }
  return json{{"in_channels", e.in_channels()},
              {"out_channels", e.out_channels()},
              {"trainable", e.trainable()},
              {"mixing", rows},
              {"offset", std::vector<double>(e.offset().data(), e.offset().data() + e.offset().size())}};
}

ToyExtractor extractor_from_json(const json& j) {
  try {
    const int in = j.at("in_channels").get<int>(), out = j.at("out_channels").get<int>();
    Matrix m(out, in);
    const auto& rows = j.at("mixing");
    if (rows.size() != static_cast<std::size_t>(out)) throw IoError("extractor: row count mismatch");
    for (int r = 0; r < out; ++r) {
      const auto row = rows.at(static_cast<std::size_t>(r)).get<std::vector<double>>();
      if (row.size() != static_cast<std::size_t>(in)) throw IoError("extractor: column count mismatch");
      for (int c = 0; c < in; ++c) m(r, c) = row[static_cast<std::size_t>(c)];
    }
    const auto offset = j.at("offset").get<std::vector<double>>();
    if (offset.size() != static_cast<std::size_t>(out)) throw IoError("extractor: offset length mismatch");
    return ToyExtractor(std::move(m), Eigen::Map<const Vector>(offset.data(), out), get_or(j, "trainable", true));
  } catch (const json::exception& e) {
    throw IoError(std::string("extractor: ") + e.what());
  }
}

json to_json(const FinetuneConfig& c) {
  return json{{"beta", c.beta},
              {"epochs", c.epochs},
              {"lr", c.lr},
              {"extractor_lr", c.extractor_lr},
              {"lr_decay_every", c.lr_decay.every},
              {"lr_decay_factor", c.lr_decay.factor},
              {"momentum", c.momentum},
              {"feature_dropout", c.feature_dropout},
              {"weight_decay", c.weight_decay},
              {"batch_size", c.batch_size},
              {"seed", c.seed},
              {"freeze_support", c.freeze_support}};
}

FinetuneConfig finetune_config_from_json(const json& j, FinetuneConfig d) {
  try {
    d.beta = get_or(j, "beta", d.beta);
    d.epochs = get_or(j, "epochs", d.epochs);
    d.lr = get_or(j, "lr", d.lr);
    d.extractor_lr = get_or(j, "extractor_lr", d.extractor_lr);
    d.lr_decay.every = get_or(j, "lr_decay_every", d.lr_decay.every);
    d.lr_decay.factor = get_or(j, "lr_decay_factor", d.lr_decay.factor);
    d.momentum = get_or(j, "momentum", d.momentum);
    d.feature_dropout = get_or(j, "feature_dropout", d.feature_dropout);
    d.weight_decay = get_or(j, "weight_decay", d.weight_decay);
    d.batch_size = get_or(j, "batch_size", d.batch_size);
    d.seed = get_or(j, "seed", d.seed);
    d.freeze_support = get_or(j, "freeze_support", d.freeze_support);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("finetune config: ") + e.what());
  }
  d.validate();
  return d;
}

json to_json(const DiversityReport& r) {
  json j{{"k", r.k},
         {"population", r.population},
         {"per_example", r.per_example},
         {"classes", r.classes},
         {"included", r.included}};
  j["aggregate"] = r.aggregate ? json(*r.aggregate) : json(nullptr);
  j["class_mean"] = r.class_mean ? json(*r.class_mean) : json(nullptr);
  return j;
}

std::string diversity_csv(const DiversityReport& r) {
  std::ostringstream os;
  os.precision(17);
  os << "example,class,included,loc_" << r.k << "\n";
  for (std::size_t i = 0; i < r.per_example.size(); ++i) {
    os << i << ',' << r.classes[i] << ',' << (r.included[i] ? 1 : 0) << ',' << r.per_example[i] << "\n";
  }
  return os.str();
}

std::string curves_csv(const std::vector<CurveRow>& rows) {
  std::ostringstream os;
  os.precision(17);
  os << "epoch,ce,l_div,objective,accuracy\n";
  for (const auto& r : rows) os << r.epoch << ',' << r.ce << ',' << r.l_div << ',' << r.objective << ',' << r.accuracy << "\n";
  return os.str();
}

AttributeTable read_attribute_csv(std::istream& in, int num_examples) {
  std::string line;
  if (!std::getline(in, line)) throw IoError("attributes: missing header row");
  struct Row {
    int example, attribute, certainty;
  };
  std::vector<Row> rows;
  int max_attr = -1;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 3) throw IoError("attributes: expected 3 columns, got " + std::to_string(cells.size()));
    Row r{static_cast<int>(parse_double(cells[0])), static_cast<int>(parse_double(cells[1])),
          static_cast<int>(parse_double(cells[2]))};
    if (r.example < 0 || r.example >= num_examples) throw IoError("attributes: example id out of range");
    if (r.attribute < 0) throw IoError("attributes: negative attribute id");
    max_attr = std::max(max_attr, r.attribute);
    rows.push_back(r);
  }
  std::vector<std::string> names;
  for (int a = 0; a <= max_attr; ++a) names.push_back("attribute_" + std::to_string(a));
  AttributeTable table(num_examples, names);
  std::vector<int> seen(static_cast<std::size_t>(num_examples) * names.size(), 0);
  for (const auto& r : rows) {
    table.set(r.example, r.attribute, certainty_from_code(r.certainty));
    ++seen[static_cast<std::size_t>(r.example) * names.size() + static_cast<std::size_t>(r.attribute)];
  }
  for (std::size_t k = 0; k < seen.size(); ++k) {
    if (seen[k] != 1) {
      throw IoError("attributes: example " + std::to_string(k / names.size()) + " does not cover attribute " +
                    std::to_string(k % names.size()) + " exactly once");
    }
  }
  return table;
}

AttributeTable load_attribute_csv(const fs::path& path, int num_examples) {
  auto in = open_in(path);
  return read_attribute_csv(in, num_examples);
}

std::string attribute_csv(const AttributeTable& table) {
  std::ostringstream os;
  os << "example_id,attribute_id,certainty\n";
  for (int i = 0; i < table.num_examples(); ++i) {
    for (int a = 0; a < table.num_attributes(); ++a) os << i << ',' << a << ',' << static_cast<int>(table.get(i, a)) << "\n";
  }
  return os.str();
}

json to_json(const std::vector<AlignmentRow>& rows, const AttributeTable* table) {
  json out = json::array();
  for (const auto& r : rows) {
    json e{{"attribute", r.attribute}, {"feature", r.feature}, {"score", r.score}};
    if (table) e["attribute_name"] = table->names().at(static_cast<std::size_t>(r.attribute));
    out.push_back(std::move(e));
  }
  return out;
}

std::string alignment_csv(const std::vector<AlignmentRow>& rows, const AttributeTable* table) {
  std::ostringstream os;
  os.precision(17);
  os << "attribute,attribute_name,feature,score\n";
  for (const auto& r : rows) {
    os << r.attribute << ',' << (table ? table->names().at(static_cast<std::size_t>(r.attribute)) : "") << ','
       << r.feature << ',' << r.score << "\n";
  }
  return os.str();
}

std::string pgm(const std::vector<double>& values, int rows, int cols) {
  if (values.size() != static_cast<std::size_t>(rows) * cols) throw ConfigError("pgm: size mismatch");
  double top = 0.0;
  for (double v : values) top = std::max(top, v);
  std::ostringstream os;
  os << "P5\n" << cols << ' ' << rows << "\n255\n";
  for (double v : values) {
    const double scaled = top > 0.0 ? std::clamp(v / top, 0.0, 1.0) * 255.0 : 0.0;
    os.put(static_cast<char>(static_cast<unsigned char>(std::lround(scaled))));
  }
  return os.str();
}

}  // namespace sldd::io
