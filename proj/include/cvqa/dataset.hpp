#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cvqa/bgn.hpp"
#include "cvqa/tensor.hpp"
#include "cvqa/vocab.hpp"

namespace cvqa {

// One annotated question: every answer string anybody gave, with how many of
// the 10 annotators gave it.
struct AnnotationRecord {
  int64_t question_id = 0;
  std::string image_id;
  std::vector<std::pair<std::string, int>> answers;
  std::string answer_type = "other";
  std::string top_answer;  // multiple_choice_answer when present
};

// Lowercase, split on whitespace/punctuation, drop the stopwords
// {and, is, do, &, are}, keep first occurrence order.
std::vector<std::string> tokenize_answer(const std::string& answer);

struct SplitThresholds {
  int base = 40;      // base answers: train count >= base
  int novel_low = 10; // novel answers: novel_low <= count < base
};

struct SplitManifest {
  AnswerVocab vocab;
  SplitThresholds thresholds;
  // answer -> question ids, insertion order fixed by the vocab order
  std::map<std::string, std::vector<int64_t>> base_train;
  std::map<std::string, std::vector<int64_t>> base_val;
  std::map<std::string, std::vector<int64_t>> novel_train;
  std::map<std::string, std::vector<int64_t>> novel_val;
  // k -> answer -> sampled question ids
  std::map<int64_t, std::map<std::string, std::vector<int64_t>>> shots;
  std::vector<std::string> question_vocab;  // optional; empty when unknown

  std::string to_json() const;
  static SplitManifest from_json(const std::string& text);
  void save(const std::string& path) const;
  static SplitManifest load(const std::string& path);
};

// Applies the count thresholds to the training records, derives the attribute
// vocabulary from base answers, and lists matching train/val questions per
// answer. Membership always uses train counts.
SplitManifest build_splits(const std::vector<AnnotationRecord>& train,
                           const std::vector<AnnotationRecord>& val,
                           SplitThresholds thresholds = {});

// Uniform sample of k train examples per novel answer, without replacement.
std::map<std::string, std::vector<int64_t>> sample_few_shot(const SplitManifest& manifest,
                                                            int64_t k, uint64_t seed);

// VQA v2 annotation JSON (object with "annotations" or a bare array);
// unknown fields are ignored. Malformed JSON raises DataError naming the
// byte offset.
std::vector<AnnotationRecord> parse_vqa_annotations(const std::string& path);

// JSON-lines dataset records.
struct DatasetExample {
  int64_t qid = 0;
  std::vector<std::string> tokens;
  std::string image_key;
  std::vector<std::pair<std::string, int>> answers;  // (text, annotator count)
};

std::vector<DatasetExample> read_jsonl(const std::string& path);
void write_jsonl(const std::string& path, const std::vector<DatasetExample>& examples);

// Question-token vocabulary; index 0 is pad, index 1 unk.
struct QuestionVocab {
  std::vector<std::string> words;  // includes <pad>, <unk>
  std::unordered_map<std::string, int> index;

  static QuestionVocab build(const std::vector<std::string>& tokens);
  int id(const std::string& token) const;
  QuestionInput encode(const std::vector<std::string>& tokens, int64_t m_max) const;
};

// Everything one training stage needs from a dataset directory.
struct LoadedData {
  SplitManifest manifest;
  std::vector<DatasetExample> train_base;
  std::vector<DatasetExample> train_novel;
  std::vector<DatasetExample> val_base;
  std::vector<DatasetExample> val_novel;
  std::unordered_map<std::string, Tensor> features;  // image key -> D x n
  QuestionVocab question_vocab;

  const Tensor& features_of(const std::string& image_key) const;
};

LoadedData load_dataset(const std::string& dir);

}  // namespace cvqa
