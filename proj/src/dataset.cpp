#include "cvqa/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "cvqa/errors.hpp"
#include "cvqa/rng.hpp"
#include "cvqa/tensor_io.hpp"

namespace cvqa {

namespace {

using json = nlohmann::ordered_json;

const std::set<std::string>& stopwords() {
  static const std::set<std::string> kStopwords = {"and", "is", "do", "&", "are"};
  return kStopwords;
}

// Highest-count answer, ties broken lexicographically; the recorded
// multiple_choice_answer wins when present.
std::string top_answer_of(const AnnotationRecord& record) {
  if (!record.top_answer.empty()) return record.top_answer;
  std::string best;
  int best_count = -1;
  for (const auto& [answer, count] : record.answers) {
    if (count > best_count || (count == best_count && answer < best)) {
      best = answer;
      best_count = count;
    }
  }
  return best;
}

}  // namespace

std::vector<std::string> tokenize_answer(const std::string& answer) {
  if (answer.empty()) throw UsageError("cannot tokenize an empty answer");
  std::vector<std::string> tokens;
  std::set<std::string> seen;
  std::string current;
  auto flush = [&] {
    if (!current.empty() && !stopwords().count(current) && !seen.count(current)) {
      tokens.push_back(current);
      seen.insert(current);
    }
    current.clear();
  };
  for (unsigned char c : answer) {
    if (std::isalnum(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else {
      flush();
    }
  }
  flush();
  return tokens;
}

SplitManifest build_splits(const std::vector<AnnotationRecord>& train,
                           const std::vector<AnnotationRecord>& val,
                           SplitThresholds thresholds) {
  // Appearance count = number of train questions where the answer was given
  // by at least one annotator.
  std::map<std::string, int64_t> counts;
  for (const auto& record : train) {
    if (record.answer_type != "other") continue;
    std::set<std::string> seen;
    for (const auto& [answer, count] : record.answers) {
      if (count > 0 && seen.insert(answer).second) ++counts[answer];
    }
  }

  SplitManifest manifest;
  manifest.thresholds = thresholds;

  // Most frequent first, lexicographic within equal counts.
  std::vector<std::pair<std::string, int64_t>> ordered(counts.begin(), counts.end());
  std::sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });

  std::set<std::string> attribute_set;
  for (const auto& [answer, count] : ordered) {
    if (count >= thresholds.base) {
      manifest.vocab.base.push_back(answer);
      for (const auto& token : tokenize_answer(answer)) attribute_set.insert(token);
    }
  }
  manifest.vocab.attributes.assign(attribute_set.begin(), attribute_set.end());
  manifest.vocab.build_indices();

  for (const auto& answer : manifest.vocab.base) {
    std::vector<int> ids;
    for (const auto& token : tokenize_answer(answer)) {
      ids.push_back(manifest.vocab.attribute_index.at(token));
    }
    manifest.vocab.decomposition[answer] = std::move(ids);
  }

  for (const auto& [answer, count] : ordered) {
    if (count >= thresholds.base || count < thresholds.novel_low) continue;
    const auto tokens = tokenize_answer(answer);
    if (tokens.empty()) continue;  // pure-stopword answers are not compositional
    bool covered = true;
    for (const auto& token : tokens) covered = covered && attribute_set.count(token) > 0;
    if (!covered) continue;
    manifest.vocab.novel.push_back(answer);
    std::vector<int> ids;
    for (const auto& token : tokens) ids.push_back(manifest.vocab.attribute_index.at(token));
    manifest.vocab.decomposition[answer] = std::move(ids);
  }
  manifest.vocab.build_indices();
  manifest.vocab.validate();

  auto assign = [&](const std::vector<AnnotationRecord>& records,
                    std::map<std::string, std::vector<int64_t>>& base_out,
                    std::map<std::string, std::vector<int64_t>>& novel_out) {
    for (const auto& answer : manifest.vocab.base) base_out[answer];
    for (const auto& answer : manifest.vocab.novel) novel_out[answer];
    for (const auto& record : records) {
      if (record.answer_type != "other") continue;
      const std::string top = top_answer_of(record);
      if (manifest.vocab.base_index.count(top)) {
        base_out[top].push_back(record.question_id);
      } else if (manifest.vocab.novel_index.count(top)) {
        novel_out[top].push_back(record.question_id);
      }
    }
    for (auto& [answer, qids] : base_out) std::sort(qids.begin(), qids.end());
    for (auto& [answer, qids] : novel_out) std::sort(qids.begin(), qids.end());
  };
  assign(train, manifest.base_train, manifest.novel_train);
  assign(val, manifest.base_val, manifest.novel_val);
  return manifest;
}

std::map<std::string, std::vector<int64_t>> sample_few_shot(const SplitManifest& manifest,
                                                            int64_t k, uint64_t seed) {
  if (k < 1) throw UsageError("shot count must be >= 1");
  auto rng = make_rng(seed, "sampling.few_shot");
  std::map<std::string, std::vector<int64_t>> shots;
  for (const auto& answer : manifest.vocab.novel) {
    const auto& pool = manifest.novel_train.at(answer);
    if (static_cast<int64_t>(pool.size()) < k) {
      throw DataError("novel answer '" + answer + "' has only " +
                      std::to_string(pool.size()) + " train examples, need " + std::to_string(k));
    }
    std::vector<int64_t> chosen(pool);
    std::shuffle(chosen.begin(), chosen.end(), rng);
    chosen.resize(static_cast<size_t>(k));
    std::sort(chosen.begin(), chosen.end());
    shots[answer] = std::move(chosen);
  }
  return shots;
}

namespace {

json vocab_to_json(const AnswerVocab& vocab) {
  json j;
  j["base"] = vocab.base;
  j["novel"] = vocab.novel;
  j["attributes"] = vocab.attributes;
  json decomp = json::object();
  auto dump = [&](const std::vector<std::string>& answers) {
    for (const auto& answer : answers) {
      auto it = vocab.decomposition.find(answer);
      decomp[answer] = it == vocab.decomposition.end() ? std::vector<int>{} : it->second;
    }
  };
  dump(vocab.base);
  dump(vocab.novel);
  j["decomposition"] = std::move(decomp);
  return j;
}

AnswerVocab vocab_from_json(const json& j) {
  AnswerVocab vocab;
  vocab.base = j.at("base").get<std::vector<std::string>>();
  vocab.novel = j.at("novel").get<std::vector<std::string>>();
  vocab.attributes = j.at("attributes").get<std::vector<std::string>>();
  for (const auto& [answer, ids] : j.at("decomposition").items()) {
    vocab.decomposition[answer] = ids.get<std::vector<int>>();
  }
  vocab.build_indices();
  vocab.validate();
  return vocab;
}

json qid_map_to_json(const std::map<std::string, std::vector<int64_t>>& m) {
  json j = json::object();
  for (const auto& [answer, qids] : m) j[answer] = qids;
  return j;
}

std::map<std::string, std::vector<int64_t>> qid_map_from_json(const json& j) {
  std::map<std::string, std::vector<int64_t>> m;
  for (const auto& [answer, qids] : j.items()) m[answer] = qids.get<std::vector<int64_t>>();
  return m;
}

}  // namespace

std::string SplitManifest::to_json() const {
  json j;
  j["vocab"] = vocab_to_json(vocab);
  j["thresholds"] = {{"base", thresholds.base}, {"novel_low", thresholds.novel_low}};
  j["base_train"] = qid_map_to_json(base_train);
  j["base_val"] = qid_map_to_json(base_val);
  j["novel_train"] = qid_map_to_json(novel_train);
  j["novel_val"] = qid_map_to_json(novel_val);
  json shots_json = json::object();
  for (const auto& [k, per_answer] : shots) {
    shots_json[std::to_string(k)] = qid_map_to_json(per_answer);
  }
  j["shots"] = std::move(shots_json);
  j["question_vocab"] = question_vocab;
  return j.dump(2) + "\n";
}

SplitManifest SplitManifest::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("malformed manifest JSON at byte " + std::to_string(e.byte) + ": " + e.what());
  }
  SplitManifest manifest;
  manifest.vocab = vocab_from_json(j.at("vocab"));
  manifest.thresholds.base = j.at("thresholds").at("base").get<int>();
  manifest.thresholds.novel_low = j.at("thresholds").at("novel_low").get<int>();
  manifest.base_train = qid_map_from_json(j.at("base_train"));
  manifest.base_val = qid_map_from_json(j.at("base_val"));
  manifest.novel_train = qid_map_from_json(j.at("novel_train"));
  manifest.novel_val = qid_map_from_json(j.at("novel_val"));
  for (const auto& [k, per_answer] : j.at("shots").items()) {
    manifest.shots[std::stoll(k)] = qid_map_from_json(per_answer);
  }
  if (j.contains("question_vocab")) {
    manifest.question_vocab = j.at("question_vocab").get<std::vector<std::string>>();
  }
  return manifest;
}

void SplitManifest::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write manifest to '" + path + "'");
  os << to_json();
}

SplitManifest SplitManifest::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open manifest '" + path + "'");
  std::ostringstream buf;
  buf << is.rdbuf();
  return from_json(buf.str());
}

std::vector<AnnotationRecord> parse_vqa_annotations(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open annotations file '" + path + "'");
  std::ostringstream buf;
  buf << is.rdbuf();
  const std::string text = buf.str();
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) return {};  // empty file, empty set
  json j;
  try {
    j = json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("malformed JSON in '" + path + "' at byte " + std::to_string(e.byte) +
                    ": " + e.what());
  }
  const json* records = &j;
  if (j.is_object()) {
    if (!j.contains("annotations")) {
      if (j.empty()) return {};
      throw DataError("'" + path + "' has no \"annotations\" array");
    }
    records = &j.at("annotations");
  }
  if (!records->is_array()) throw DataError("'" + path + "' annotations must be an array");

  std::vector<AnnotationRecord> out;
  out.reserve(records->size());
  for (const auto& item : *records) {
    AnnotationRecord record;
    record.question_id = item.value("question_id", static_cast<int64_t>(0));
    if (item.contains("image_id")) {
      const auto& img = item.at("image_id");
      record.image_id = img.is_string() ? img.get<std::string>() : std::to_string(img.get<int64_t>());
    }
    record.answer_type = item.value("answer_type", std::string("other"));
    record.top_answer = item.value("multiple_choice_answer", std::string());
    if (item.contains("answers")) {
      std::map<std::string, int> counts;
      for (const auto& entry : item.at("answers")) {
        if (entry.is_string()) {
          counts[entry.get<std::string>()] += 1;
        } else if (entry.contains("count")) {
          counts[entry.value("answer", entry.value("text", std::string()))] +=
              entry.at("count").get<int>();
        } else if (entry.contains("answer")) {
          counts[entry.at("answer").get<std::string>()] += 1;
        }
      }
      for (const auto& [answer, count] : counts) {
        if (!answer.empty()) record.answers.emplace_back(answer, std::min(count, 10));
      }
    }
    if (record.answers.empty()) throw DataError("annotation record " +
                                                std::to_string(record.question_id) +
                                                " has no answers");
    out.push_back(std::move(record));
  }
  return out;
}

std::vector<DatasetExample> read_jsonl(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open dataset file '" + path + "'");
  std::vector<DatasetExample> out;
  std::string line;
  int64_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError("malformed JSONL in '" + path + "' line " + std::to_string(line_no) +
                      " at byte " + std::to_string(e.byte) + ": " + e.what());
    }
    DatasetExample ex;
    ex.qid = j.at("qid").get<int64_t>();
    ex.tokens = j.at("tokens").get<std::vector<std::string>>();
    ex.image_key = j.at("image").get<std::string>();
    for (const auto& answer : j.at("answers")) {
      ex.answers.emplace_back(answer.at("text").get<std::string>(), answer.at("count").get<int>());
    }
    out.push_back(std::move(ex));
  }
  return out;
}

void write_jsonl(const std::string& path, const std::vector<DatasetExample>& examples) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write dataset file '" + path + "'");
  for (const auto& ex : examples) {
    json j;
    j["qid"] = ex.qid;
    j["tokens"] = ex.tokens;
    j["image"] = ex.image_key;
    json answers = json::array();
    for (const auto& [text, count] : ex.answers) {
      answers.push_back({{"text", text}, {"count", count}});
    }
    j["answers"] = std::move(answers);
    os << j.dump() << "\n";
  }
}

QuestionVocab QuestionVocab::build(const std::vector<std::string>& tokens) {
  QuestionVocab vocab;
  vocab.words = {"<pad>", "<unk>"};
  std::set<std::string> unique(tokens.begin(), tokens.end());
  unique.erase("<pad>");
  unique.erase("<unk>");
  vocab.words.insert(vocab.words.end(), unique.begin(), unique.end());
  for (size_t i = 0; i < vocab.words.size(); ++i) vocab.index[vocab.words[i]] = static_cast<int>(i);
  return vocab;
}

int QuestionVocab::id(const std::string& token) const {
  auto it = index.find(token);
  return it == index.end() ? 1 : it->second;
}

QuestionInput QuestionVocab::encode(const std::vector<std::string>& tokens, int64_t m_max) const {
  QuestionInput q;
  q.tokens.assign(static_cast<size_t>(m_max), 0);
  q.pad_mask.assign(static_cast<size_t>(m_max), true);
  const int64_t n = std::min<int64_t>(m_max, static_cast<int64_t>(tokens.size()));
  for (int64_t i = 0; i < n; ++i) {
    q.tokens[static_cast<size_t>(i)] = id(tokens[static_cast<size_t>(i)]);
    q.pad_mask[static_cast<size_t>(i)] = false;
  }
  return q;
}

const Tensor& LoadedData::features_of(const std::string& image_key) const {
  auto it = features.find(image_key);
  if (it == features.end()) throw DataError("no features for image key '" + image_key + "'");
  return it->second;
}

LoadedData load_dataset(const std::string& dir) {
  LoadedData data;
  data.manifest = SplitManifest::load(dir + "/manifest.json");
  data.train_base = read_jsonl(dir + "/train_base.jsonl");
  data.train_novel = read_jsonl(dir + "/train_novel.jsonl");
  data.val_base = read_jsonl(dir + "/val_base.jsonl");
  data.val_novel = read_jsonl(dir + "/val_novel.jsonl");
  for (auto& entry : read_tensor_file(dir + "/features.cvqa")) {
    data.features.emplace(entry.name, std::move(entry.tensor));
  }
  if (!data.manifest.question_vocab.empty()) {
    data.question_vocab.words = data.manifest.question_vocab;
    for (size_t i = 0; i < data.question_vocab.words.size(); ++i) {
      data.question_vocab.index[data.question_vocab.words[i]] = static_cast<int>(i);
    }
  } else {
    std::vector<std::string> tokens;
    for (const auto& ex : data.train_base) {
      tokens.insert(tokens.end(), ex.tokens.begin(), ex.tokens.end());
    }
    data.question_vocab = QuestionVocab::build(tokens);
  }
  return data;
}

}  // namespace cvqa
