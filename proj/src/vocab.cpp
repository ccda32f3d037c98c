#include "cvqa/vocab.hpp"

#include <algorithm>

#include "cvqa/errors.hpp"

namespace cvqa {

void AnswerVocab::build_indices() {
  base_index.clear();
  novel_index.clear();
  attribute_index.clear();
  for (size_t i = 0; i < base.size(); ++i) base_index[base[i]] = static_cast<int>(i);
  for (size_t i = 0; i < novel.size(); ++i) novel_index[novel[i]] = static_cast<int>(i);
  for (size_t i = 0; i < attributes.size(); ++i) attribute_index[attributes[i]] = static_cast<int>(i);
}

void AnswerVocab::validate() const {
  for (const auto& answer : novel) {
    if (base_index.count(answer)) {
      throw DataError("answer '" + answer + "' appears in both base and novel sets");
    }
    auto it = decomposition.find(answer);
    if (it == decomposition.end() || it->second.empty()) {
      throw DataError("novel answer '" + answer + "' has no attribute decomposition");
    }
  }
  for (const auto& [answer, attrs] : decomposition) {
    for (int idx : attrs) {
      if (idx < 0 || idx >= static_cast<int>(attributes.size())) {
        throw DataError("answer '" + answer + "' references attribute index " +
                        std::to_string(idx) + " outside the vocabulary");
      }
    }
  }
}

const std::vector<int>& AnswerVocab::attrs_of(const std::string& answer) const {
  static const std::vector<int> kEmpty;
  auto it = decomposition.find(answer);
  return it == decomposition.end() ? kEmpty : it->second;
}

double soft_label(int annotator_count) {
  if (annotator_count < 0) throw UsageError("annotator count must be non-negative");
  return std::min(static_cast<double>(annotator_count) / 3.0, 1.0);
}

std::vector<double> attribute_labels(
    const std::vector<std::pair<std::string, double>>& answer_labels,
    const AnswerVocab& vocab) {
  std::vector<double> labels(vocab.attributes.size(), 0.0);
  for (const auto& [answer, y] : answer_labels) {
    for (int idx : vocab.attrs_of(answer)) {
      labels[static_cast<size_t>(idx)] += y;
    }
  }
  for (double& y : labels) y = std::min(y, 1.0);
  return labels;
}

}  // namespace cvqa
