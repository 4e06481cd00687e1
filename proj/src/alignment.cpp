#include "sldd/alignment.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

#include "sldd/error.hpp"

namespace sldd {

Certainty certainty_from_code(int code) {
  if (code < 0 || code > 3) throw ConfigError("certainty code must be in 0..3, got " + std::to_string(code));
  return static_cast<Certainty>(code);
}

AttributeTable::AttributeTable(int num_examples, std::vector<std::string> attribute_names)
    : num_examples_(num_examples),
      names_(std::move(attribute_names)),
      cells_(static_cast<std::size_t>(num_examples) * names_.size(), Certainty::kAbsent) {
  if (num_examples < 0) throw ConfigError("AttributeTable: negative example count");
}

Certainty AttributeTable::get(int example, int attribute) const {
  return cells_.at(static_cast<std::size_t>(example) * names_.size() + static_cast<std::size_t>(attribute));
}

void AttributeTable::set(int example, int attribute, Certainty c) {
  if (example < 0 || example >= num_examples_ || attribute < 0 || attribute >= num_attributes()) {
    throw ConfigError("AttributeTable: index out of range");
  }
  cells_[static_cast<std::size_t>(example) * names_.size() + static_cast<std::size_t>(attribute)] = c;
}

AttributeTable AttributeTable::swapped_polarity() const {
  AttributeTable out = *this;
  for (auto& c : out.cells_) {
    if (c == Certainty::kAbsent) {
      c = Certainty::kDefinitely;
    } else if (c != Certainty::kGuessing) {
      c = Certainty::kAbsent;
    }
  }
  return out;
}

AlignmentScores alignment_scores(const FeatureMatrix& feats, const AttributeTable& table) {
  const Matrix& z = feats.values();
  if (z.rows() != table.num_examples()) throw ConfigError("alignment_scores: example count mismatch");
  const Eigen::Index f = z.cols();
  const int a_count = table.num_attributes();
  AlignmentScores out;
  out.scores = Matrix::Zero(a_count, f);
  out.attribute_valid.assign(static_cast<std::size_t>(a_count), true);
  out.constant_feature.assign(static_cast<std::size_t>(f), false);

  Vector range(f);
  for (Eigen::Index j = 0; j < f; ++j) {
    range[j] = z.rows() > 0 ? z.col(j).maxCoeff() - z.col(j).minCoeff() : 0.0;
    out.constant_feature[static_cast<std::size_t>(j)] = !(range[j] > 0.0);
  }

  for (int a = 0; a < a_count; ++a) {
    Vector pos_sum = Vector::Zero(f), neg_sum = Vector::Zero(f);
    int n_pos = 0, n_neg = 0;
    for (int i = 0; i < table.num_examples(); ++i) {
      const Certainty c = table.get(i, a);
      if (c == Certainty::kProbably || c == Certainty::kDefinitely) {
        pos_sum += z.row(i).transpose();
        ++n_pos;
      } else if (c == Certainty::kAbsent) {
        neg_sum += z.row(i).transpose();
        ++n_neg;
      }
    }
    if (n_pos == 0 || n_neg == 0) {
      out.attribute_valid[static_cast<std::size_t>(a)] = false;
      continue;
    }
    for (Eigen::Index j = 0; j < f; ++j) {
      if (out.constant_feature[static_cast<std::size_t>(j)]) continue;
      const double delta = pos_sum[j] / n_pos - neg_sum[j] / n_neg;
      out.scores(a, j) = delta / range[j];
    }
  }
  return out;
}

std::vector<AlignmentRow> alignment_report(const AlignmentScores& scores, double threshold) {
  std::vector<AlignmentRow> rows;
  for (Eigen::Index a = 0; a < scores.scores.rows(); ++a) {
    if (!scores.attribute_valid[static_cast<std::size_t>(a)]) continue;
    for (Eigen::Index j = 0; j < scores.scores.cols(); ++j) {
      const double c = scores.scores(a, j);
      if (std::isfinite(c) && (threshold <= 0.0 || c > threshold)) {
        rows.push_back({static_cast<int>(a), static_cast<int>(j), c});
      }
    }
  }
  std::sort(rows.begin(), rows.end(), [](const AlignmentRow& x, const AlignmentRow& y) {
    if (x.score != y.score) return x.score > y.score;
    return std::tie(x.attribute, x.feature) < std::tie(y.attribute, y.feature);
  });
  return rows;
}

}  // namespace sldd
