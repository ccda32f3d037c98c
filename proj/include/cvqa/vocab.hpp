#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace cvqa {

// Base/novel answer lists, the attribute vocabulary, and each answer's
// attribute decomposition. Base and novel sets are disjoint; every novel
// answer decomposes into at least one known attribute.
struct AnswerVocab {
  std::vector<std::string> base;
  std::vector<std::string> novel;
  std::vector<std::string> attributes;
  std::unordered_map<std::string, std::vector<int>> decomposition;

  std::unordered_map<std::string, int> base_index;
  std::unordered_map<std::string, int> novel_index;
  std::unordered_map<std::string, int> attribute_index;

  void build_indices();
  void validate() const;

  const std::vector<int>& attrs_of(const std::string& answer) const;
};

// min(count / 3, 1): the usual multi-annotator soft label.
double soft_label(int annotator_count);

// y^a_i = min(1, sum of y_j over answers whose decomposition contains u_i).
std::vector<double> attribute_labels(
    const std::vector<std::pair<std::string, double>>& answer_labels,
    const AnswerVocab& vocab);

}  // namespace cvqa
