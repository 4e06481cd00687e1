#include "sldd/diversity.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "sldd/error.hpp"

namespace sldd {

namespace {

void softmax_into(std::span<const double> map, std::span<double> out) {
  double m = map[0];
  for (double v : map) m = std::max(m, v);
  double sum = 0.0;
  for (std::size_t k = 0; k < map.size(); ++k) {
    out[k] = std::exp(map[k] - m);
    sum += out[k];
  }
  for (double& v : out) v /= sum;
}

int argmax_with_tie(std::span<const double> v, bool* tie) {
  int best = 0;
  for (std::size_t k = 1; k < v.size(); ++k) {
    if (v[k] > v[static_cast<std::size_t>(best)]) best = static_cast<int>(k);
  }
  if (tie) {
    *tie = false;
    for (std::size_t k = 0; k < v.size(); ++k) {
      if (static_cast<int>(k) != best && v[k] == v[static_cast<std::size_t>(best)]) *tie = true;
    }
  }
  return best;
}

[[noreturn]] void throw_tie(const std::string& what, const std::vector<int>& idx) {
  std::ostringstream os;
  os << "diversity: tie in " << what << " at indices";
  for (int i : idx) os << ' ' << i;
  throw NumericError(os.str());
}

}  // namespace

std::vector<double> spatial_softmax(std::span<const double> map) {
  std::vector<double> out(map.size());
  softmax_into(map, out);
  return out;
}

ScaledMapStack scaled_maps(std::span<const double> maps_n, int height, int width, const SparseLinearModel& model,
                           std::span<const double> logits_n) {
  const int f = model.num_features();
  const std::size_t hw = static_cast<std::size_t>(height) * width;
  if (maps_n.size() != hw * f) throw ConfigError("scaled_maps: map stack does not match model features");
  if (logits_n.size() != static_cast<std::size_t>(model.num_classes())) {
    throw ConfigError("scaled_maps: logits length mismatch");
  }
  ScaledMapStack out;
  out.features = f;
  out.height = height;
  out.width = width;
  out.predicted_class = argmax_with_tie(logits_n, &out.class_tie);
  out.values.resize(maps_n.size());
  out.softmax.resize(maps_n.size());
  out.softmax_sums.resize(static_cast<std::size_t>(f));
  out.pooled_ratio.resize(static_cast<std::size_t>(f));
  out.weight_ratio.resize(static_cast<std::size_t>(f));

  std::vector<double> pooled(static_cast<std::size_t>(f));
  for (int l = 0; l < f; ++l) {
    auto m = maps_n.subspan(l * hw, hw);
    pooled[static_cast<std::size_t>(l)] = std::accumulate(m.begin(), m.end(), 0.0) / static_cast<double>(hw);
  }
  const double fmax = *std::max_element(pooled.begin(), pooled.end());
  const Matrix& w = model.dense();
  const double wnorm = w.row(out.predicted_class).norm();
  for (int l = 0; l < f; ++l) {
    const auto k = static_cast<std::size_t>(l);
    auto s = std::span<double>(out.softmax).subspan(l * hw, hw);
    softmax_into(maps_n.subspan(l * hw, hw), s);
    out.softmax_sums[k] = std::accumulate(s.begin(), s.end(), 0.0);
    out.pooled_ratio[k] = fmax != 0.0 ? pooled[k] / fmax : 0.0;
    out.weight_ratio[k] = wnorm > 0.0 ? std::abs(w(out.predicted_class, l)) / wnorm : 0.0;
    const double scale = out.pooled_ratio[k] * out.weight_ratio[k];
    for (std::size_t c = 0; c < hw; ++c) out.values[l * hw + c] = s[c] * scale;
  }
  return out;
}

ScaledMapStack scaled_maps(const FeatureMapBatch& maps, int n, const SparseLinearModel& model) {
  const FeatureMatrix pooled = pool_maps(maps.select_examples(std::vector<int>{n}));
  const Logits logits = predict(model, pooled);
  std::vector<double> row(logits.values.row(0).data(), logits.values.row(0).data() + logits.values.cols());
  return scaled_maps(maps.example(n), maps.height(), maps.width(), model, row);
}

double diversity_example(std::span<const double> maps_n, int f, int height, int width, const Matrix& weights,
                         int cls, double scale, std::span<double> d_maps_n, Matrix* d_weights, bool strict) {
  const std::size_t hw = static_cast<std::size_t>(height) * width;
  const double wnorm = weights.row(cls).norm();
  if (!(wnorm > 0.0)) return 0.0;

  std::vector<double> pooled(static_cast<std::size_t>(f));
  for (int l = 0; l < f; ++l) {
    auto m = maps_n.subspan(l * hw, hw);
    pooled[static_cast<std::size_t>(l)] = std::accumulate(m.begin(), m.end(), 0.0) / static_cast<double>(hw);
  }
  bool pooled_tie = false;
  const int top = argmax_with_tie(pooled, &pooled_tie);
  const double fmax = pooled[static_cast<std::size_t>(top)];

  std::vector<double> soft(maps_n.size());
  std::vector<double> rho(static_cast<std::size_t>(f)), omega(static_cast<std::size_t>(f));
  for (int l = 0; l < f; ++l) {
    const auto k = static_cast<std::size_t>(l);
    softmax_into(maps_n.subspan(l * hw, hw), std::span<double>(soft).subspan(l * hw, hw));
    rho[k] = fmax != 0.0 ? pooled[k] / fmax : 0.0;
    omega[k] = std::abs(weights(cls, l)) / wnorm;
  }

  // Cross-channel max per cell.
  std::vector<int> winner(hw, 0);
  double loss = 0.0;
  for (std::size_t c = 0; c < hw; ++c) {
    int best = 0;
    double best_v = soft[c] * rho[0] * omega[0];
    for (int l = 1; l < f; ++l) {
      const double v = soft[l * hw + c] * rho[static_cast<std::size_t>(l)] * omega[static_cast<std::size_t>(l)];
      if (v > best_v) {
        best = l;
        best_v = v;
      }
    }
    if (strict && best_v != 0.0) {
      std::vector<int> tied;
      for (int l = 0; l < f; ++l) {
        if (soft[l * hw + c] * rho[static_cast<std::size_t>(l)] * omega[static_cast<std::size_t>(l)] == best_v) {
          tied.push_back(l);
        }
      }
      if (tied.size() > 1) throw_tie("channel max at cell " + std::to_string(c) + ", channels", tied);
    }
    winner[c] = best;
    loss -= best_v;
  }
  if (strict && pooled_tie && fmax != 0.0) {
    std::vector<int> tied;
    for (int l = 0; l < f; ++l) {
      if (pooled[static_cast<std::size_t>(l)] == fmax) tied.push_back(l);
    }
    throw_tie("pooled max, features", tied);
  }
  if (scale == 0.0 || (d_maps_n.empty() && !d_weights)) return loss;

  // Backward pass.
  std::vector<double> g_soft(maps_n.size(), 0.0), mass(static_cast<std::size_t>(f), 0.0);
  for (std::size_t c = 0; c < hw; ++c) {
    const auto l = static_cast<std::size_t>(winner[c]);
    g_soft[l * hw + c] = -rho[l] * omega[l];
    mass[l] += soft[l * hw + c];
  }
  std::vector<double> g_rho(static_cast<std::size_t>(f)), g_omega(static_cast<std::size_t>(f));
  for (std::size_t l = 0; l < static_cast<std::size_t>(f); ++l) {
    g_rho[l] = -omega[l] * mass[l];
    g_omega[l] = -rho[l] * mass[l];
  }
  if (!d_maps_n.empty()) {
    std::vector<double> g_pooled(static_cast<std::size_t>(f), 0.0);
    if (fmax != 0.0) {
      double g_fmax = 0.0;
      for (std::size_t l = 0; l < static_cast<std::size_t>(f); ++l) {
        g_pooled[l] += g_rho[l] / fmax;
        g_fmax -= g_rho[l] * pooled[l] / (fmax * fmax);
      }
      g_pooled[static_cast<std::size_t>(top)] += g_fmax;
    }
    for (int l = 0; l < f; ++l) {
      const std::size_t off = static_cast<std::size_t>(l) * hw;
      double dot = 0.0;
      for (std::size_t c = 0; c < hw; ++c) dot += g_soft[off + c] * soft[off + c];
      const double via_pool = g_pooled[static_cast<std::size_t>(l)] / static_cast<double>(hw);
      for (std::size_t c = 0; c < hw; ++c) {
        d_maps_n[off + c] += scale * (soft[off + c] * (g_soft[off + c] - dot) + via_pool);
      }
    }
  }
  if (d_weights) {
    double weighted = 0.0;
    for (int l = 0; l < f; ++l) weighted += g_omega[static_cast<std::size_t>(l)] * std::abs(weights(cls, l));
    const double inv3 = 1.0 / (wnorm * wnorm * wnorm);
    for (int l = 0; l < f; ++l) {
      const double w = weights(cls, l);
      const double sign = w > 0.0 ? 1.0 : (w < 0.0 ? -1.0 : 0.0);
      (*d_weights)(cls, l) += scale * (g_omega[static_cast<std::size_t>(l)] * sign / wnorm - weighted * w * inv3);
    }
  }
  return loss;
}

DiversityLossValue diversity_loss(const FeatureMapBatch& maps, const SparseLinearModel& model) {
  if (maps.features() != model.num_features()) throw ConfigError("diversity_loss: feature count mismatch");
  const Logits logits = predict(model, pool_maps(maps));
  const auto cls = logits.argmax();
  DiversityLossValue out;
  double total = 0.0;
  for (int n = 0; n < maps.size(); ++n) {
    const double l = diversity_example(maps.example(n), maps.features(), maps.height(), maps.width(), model.dense(),
                                       cls[static_cast<std::size_t>(n)], 0.0, {}, nullptr);
    out.per_example.push_back(l);
    total += l;
  }
  out.mean = maps.size() > 0 ? total / maps.size() : 0.0;
  return out;
}

DiversityGradient diversity_loss_grad(const FeatureMapBatch& maps, const SparseLinearModel& model, bool strict) {
  if (maps.features() != model.num_features()) throw ConfigError("diversity_loss_grad: feature count mismatch");
  const Logits logits = predict(model, pool_maps(maps));
  DiversityGradient out;
  out.d_maps.assign(maps.data().size(), 0.0);
  out.d_weights = Matrix::Zero(model.num_classes(), model.num_features());
  if (maps.size() == 0) return out;
  const double scale = 1.0 / maps.size();
  const std::size_t stride = static_cast<std::size_t>(maps.features()) * maps.map_size();
  for (int n = 0; n < maps.size(); ++n) {
    const auto row = logits.values.row(n);
    bool tie = false;
    const int cls = argmax_with_tie(std::span<const double>(row.data(), static_cast<std::size_t>(row.size())), &tie);
    if (strict && tie) {
      std::vector<int> tied;
      for (Eigen::Index c = 0; c < row.size(); ++c) {
        if (row[c] == row[cls]) tied.push_back(static_cast<int>(c));
      }
      throw_tie("class argmax of example " + std::to_string(n) + ", classes", tied);
    }
    out.loss += scale * diversity_example(maps.example(n), maps.features(), maps.height(), maps.width(),
                                          model.dense(), cls, scale,
                                          std::span<double>(out.d_maps).subspan(n * stride, stride), &out.d_weights,
                                          strict);
  }
  return out;
}

DiversityReport loc_k(const FeatureMapBatch& maps, const SparseLinearModel& model, std::span<const int> classes,
                      int k) {
  if (k < 1) throw ConfigError("loc_k: k must be >= 1");
  if (k > maps.features()) throw ConfigError("loc_k: k exceeds the number of features");
  if (maps.features() != model.num_features()) throw ConfigError("loc_k: feature count mismatch");
  if (classes.size() != static_cast<std::size_t>(maps.size())) throw ConfigError("loc_k: class list length mismatch");

  DiversityReport out;
  out.k = k;
  out.population = "examples whose class has at least " + std::to_string(k) + " nonzero weights";
  const Matrix& w = model.dense();
  const std::size_t hw = static_cast<std::size_t>(maps.map_size());

  std::vector<std::vector<int>> top(static_cast<std::size_t>(model.num_classes()));
  std::vector<bool> class_ok(static_cast<std::size_t>(model.num_classes()));
  for (int c = 0; c < model.num_classes(); ++c) {
    std::vector<int> idx(static_cast<std::size_t>(model.num_features()));
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return std::abs(w(c, a)) > std::abs(w(c, b)); });
    idx.resize(static_cast<std::size_t>(k));
    top[static_cast<std::size_t>(c)] = std::move(idx);
    class_ok[static_cast<std::size_t>(c)] = (w.row(c).array() != 0.0).count() >= k;
  }

  std::vector<double> class_sum(static_cast<std::size_t>(model.num_classes()), 0.0);
  std::vector<int> class_count(static_cast<std::size_t>(model.num_classes()), 0);
  double sum = 0.0;
  int count = 0;
  std::vector<double> best(hw);
  for (int n = 0; n < maps.size(); ++n) {
    const int c = classes[static_cast<std::size_t>(n)];
    if (c < 0 || c >= model.num_classes()) throw ConfigError("loc_k: class index out of range");
    std::fill(best.begin(), best.end(), 0.0);
    for (int l : top[static_cast<std::size_t>(c)]) {
      const auto s = spatial_softmax(maps.map(n, l));
      for (std::size_t q = 0; q < hw; ++q) best[q] = std::max(best[q], s[q]);
    }
    const double value = std::accumulate(best.begin(), best.end(), 0.0) / k;
    out.per_example.push_back(value);
    out.classes.push_back(c);
    const bool ok = class_ok[static_cast<std::size_t>(c)];
    out.included.push_back(ok);
    if (ok) {
      sum += value;
      ++count;
      class_sum[static_cast<std::size_t>(c)] += value;
      ++class_count[static_cast<std::size_t>(c)];
    }
  }
  if (count > 0) {
    out.aggregate = sum / count;
    double means = 0.0;
    int used = 0;
    for (std::size_t c = 0; c < class_sum.size(); ++c) {
      if (class_count[c] > 0) {
        means += class_sum[c] / class_count[c];
        ++used;
      }
    }
    out.class_mean = means / used;
  }
  return out;
}

DiversityReport loc_k(const FeatureMapBatch& maps, const SparseLinearModel& model, int k) {
  const auto classes = predict(model, pool_maps(maps)).argmax();
  return loc_k(maps, model, classes, k);
}

}  // namespace sldd
