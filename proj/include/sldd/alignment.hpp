#pragma once

#include <string>
#include <vector>

#include "sldd/tensor.hpp"

namespace sldd {

// Annotation certainty, coded as in CUB: 0 absent, 1 guessing, 2 probably, 3 definitely.
enum class Certainty : int { kAbsent = 0, kGuessing = 1, kProbably = 2, kDefinitely = 3 };

Certainty certainty_from_code(int code);

class AttributeTable {
 public:
  AttributeTable() = default;
  AttributeTable(int num_examples, std::vector<std::string> attribute_names);

  int num_examples() const { return num_examples_; }
  int num_attributes() const { return static_cast<int>(names_.size()); }
  const std::vector<std::string>& names() const { return names_; }

  Certainty get(int example, int attribute) const;
  void set(int example, int attribute, Certainty c);

  // Exchanges the roles of present and absent annotations; guessing is kept.
  AttributeTable swapped_polarity() const;

 private:
  int num_examples_ = 0;
  std::vector<std::string> names_;
  std::vector<Certainty> cells_;
};

struct AlignmentScores {
  Matrix scores;                    // A x F
  std::vector<bool> attribute_valid;  // false when M+ or M- is empty
  std::vector<bool> constant_feature;  // zero range, scores forced to 0
};

// C_aj = (mean over M_a+ - mean over M_a-) / (max - min of column j), with
// M_a+ = {probably, definitely} and M_a- = {absent}.
AlignmentScores alignment_scores(const FeatureMatrix& feats, const AttributeTable& table);

struct AlignmentRow {
  int attribute;
  int feature;
  double score;
};

// Entries with C > threshold, sorted by descending score, then (attribute, feature).
// A threshold <= 0 disables the filter and lists every finite entry.
std::vector<AlignmentRow> alignment_report(const AlignmentScores& scores, double threshold = 0.2);

}  // namespace sldd
