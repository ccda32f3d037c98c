#pragma once

#include <random>
#include <string>
#include <vector>

#include "cvqa/config.hpp"
#include "cvqa/forward_ctx.hpp"
#include "cvqa/param_store.hpp"
#include "cvqa/vocab.hpp"

namespace cvqa {

struct HeadConfig {
  int64_t c_dim = 32;
  HeadMode mode = HeadMode::kAttributeNetwork;
  DistanceFn distance = DistanceFn::kMse;
};

// Base-answer classifier, per-node attribute scoring, and the distance
// constraints tying answer embeddings to sums of attribute embeddings.
class CompositionalHead {
 public:
  CompositionalHead(HeadConfig config, AnswerVocab vocab, ParamStore& params);

  void init_params(std::mt19937_64& rng);
  // Re-initializes novel answer embeddings; kAttribute copies each answer's
  // attribute-embedding sum.
  void init_novel_embeddings(InitMode mode, std::mt19937_64& rng);

  // S = W_b'^T sigma(W_b z), one score per base answer.
  Tensor base_scores(const Tensor& summary, const EvalCtx& ctx) const;

  // Per-node attribute scores summed over graph nodes (additive in columns).
  Tensor attribute_scores(const Tensor& question_graph, const EvalCtx& ctx) const;
  // Post-sum baseline: scores the summed embedding z instead.
  Tensor attribute_scores_sum(const Tensor& summary, const EvalCtx& ctx) const;

  // Logits over novel answers from the frozen base transform.
  Tensor novel_logits(const Tensor& summary, const EvalCtx& ctx) const;

  // Distance between one embedding column and the sum of attribute columns.
  Tensor composition_distance(const Tensor& embedding_matrix, int64_t column,
                              const std::vector<int>& attribute_ids, DistanceFn fn) const;
  // L_ab / L_an: summed composition distance over all base / novel answers
  // (answers without attributes contribute nothing).
  Tensor base_distance_loss() const;
  Tensor novel_distance_loss() const;

  // Effective distance: LCR mode always measures cosine distance.
  DistanceFn effective_distance() const;

  const AnswerVocab& vocab() const { return vocab_; }
  const HeadConfig& config() const { return config_; }
  std::vector<std::string> param_names() const;
  static const std::string kNovelEmbeddingName;

 private:
  Tensor distance_sum(const Tensor& embeddings, const Tensor& composition,
                      const std::vector<double>& column_mask) const;
  Tensor composition_matrix(const std::vector<std::string>& answers) const;

  HeadConfig config_;
  AnswerVocab vocab_;
  ParamStore* params_;
  Tensor comp_base_;        // |U| x |A_b| 0/1 composition matrix
  Tensor comp_novel_;       // |U| x |A_n|
  std::vector<double> base_has_attrs_;   // 1.0 where the decomposition is non-empty
  std::vector<double> novel_has_attrs_;
};

// L_base = L_a + L_b + lambda * L_ab (any term may be a zero scalar).
Tensor base_total_loss(const Tensor& attr_loss, const Tensor& base_loss,
                       const Tensor& distance_loss, double lambda);
// L_novel = L_n + lambda * L_an.
Tensor novel_total_loss(const Tensor& novel_loss, const Tensor& distance_loss, double lambda);

}  // namespace cvqa
