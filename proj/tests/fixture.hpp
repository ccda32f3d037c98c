#pragma once

// Crafted 200-record annotation fixture with counts placed around the split
// thresholds. Appearance counts (questions where >= 1 annotator gave the
// answer):
//   is 50, red car 45, cutting paper 44, pizza 42, elephant 41,
//   riding horse 40                         -> base (count >= 40)
//   riding elephant 39, cutting pizza 10    -> novel (attributes covered)
//   maybe 28, purple zebra 20               -> excluded (attributes not in U)
//   green kite 9                            -> excluded (count < 10)
//   yes (x2, answer_type yes/no)            -> filtered by answer type
// Primary answers get 7 annotators, secondary 3, so the primary is always
// the top answer.

#include <sstream>
#include <string>
#include <vector>

namespace cvqa_test {

struct FixtureRecord {
  long long qid;
  std::string primary;
  std::string secondary;  // empty = none
  std::string answer_type = "other";
};

inline std::vector<FixtureRecord> fixture_train_records() {
  std::vector<FixtureRecord> records;
  auto add = [&](long long lo, long long hi, const std::string& primary,
                 const std::string& secondary = "", const std::string& type = "other") {
    for (long long q = lo; q <= hi; ++q) records.push_back({q, primary, secondary, type});
  };
  add(1, 45, "red car");
  add(46, 85, "riding horse");
  add(86, 126, "elephant");
  add(127, 170, "cutting paper");
  add(171, 198, "maybe");
  add(199, 200, "yes", "", "yes/no");
  for (auto& record : records) {
    const long long q = record.qid;
    if (q >= 1 && q <= 50) record.secondary = "is";
    if (q >= 46 && q <= 84) record.secondary = "riding elephant";
    if (q >= 86 && q <= 95) record.secondary = "cutting pizza";
    if (q >= 96 && q <= 104) record.secondary = "green kite";
    if (q >= 105 && q <= 124) record.secondary = "purple zebra";
    if (q >= 127 && q <= 168) record.secondary = "pizza";
  }
  return records;
}

inline std::vector<FixtureRecord> fixture_val_records() {
  return {
      {1001, "red car", ""},
      {1002, "red car", ""},
      {1003, "riding elephant", ""},
      {1004, "riding elephant", "pizza"},
      {1005, "cutting pizza", ""},
      {1006, "purple zebra", ""},
  };
}

// VQA v2 annotation layout: ten annotator entries per question.
inline std::string fixture_to_json(const std::vector<FixtureRecord>& records) {
  std::ostringstream os;
  os << "{\"annotations\": [\n";
  for (size_t r = 0; r < records.size(); ++r) {
    const auto& record = records[r];
    os << "  {\"question_id\": " << record.qid << ", \"image_id\": " << (10000 + record.qid)
       << ", \"answer_type\": \"" << record.answer_type << "\""
       << ", \"multiple_choice_answer\": \"" << record.primary << "\", \"answers\": [";
    int written = 0;
    for (int i = 0; i < 7; ++i) {
      os << (written++ ? ", " : "") << "{\"answer\": \"" << record.primary
         << "\", \"answer_id\": " << written << "}";
    }
    const std::string filler = record.secondary.empty() ? record.primary : record.secondary;
    for (int i = 0; i < 3; ++i) {
      os << (written++ ? ", " : "") << "{\"answer\": \"" << filler
         << "\", \"answer_id\": " << written << "}";
    }
    os << "]}" << (r + 1 < records.size() ? "," : "") << "\n";
  }
  os << "]}\n";
  return os.str();
}

}  // namespace cvqa_test
