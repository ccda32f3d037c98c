#pragma once

#include <random>
#include <string>
#include <vector>

#include "cvqa/forward_ctx.hpp"
#include "cvqa/param_store.hpp"

namespace cvqa {

struct ModelConfig {
  int64_t c_dim = 32;             // C; K is tied to C
  int64_t glimpses_image = 4;     // g^e
  int64_t glimpses_question = 4;  // g^r
  int64_t m_max = 15;
  int64_t n_objects = 4;
  int64_t d_obj = 16;
  int64_t question_vocab = 2;     // includes pad (0) and unk (1)
};

// Tokenized question, truncated/padded to m_max.
struct QuestionInput {
  std::vector<int> tokens;      // length m_max
  std::vector<bool> pad_mask;   // true at pad positions
};

// Evolving representations of one (question, image) pair.
struct GraphState {
  Tensor question;                         // Q: C x m
  Tensor image_graph;                      // H: C x m
  Tensor question_graph;                   // O: C x m
  Tensor summary;                          // z: C
  std::vector<Tensor> image_attention;     // per glimpse, m x n
  std::vector<Tensor> question_attention;  // per glimpse, m x m
};

// One-layer bilinear graph backbone: a recurrent question encoder, word-to-
// object attention with residual joint embeddings, word-to-word attention
// over those embeddings, and node summation.
class BgnModel {
 public:
  BgnModel(ModelConfig config, ParamStore& params);

  void init_params(std::mt19937_64& rng);

  // Per-position contextual features, C x m; pad positions are zero columns.
  Tensor encode_question(const QuestionInput& q, const EvalCtx& ctx) const;

  // Word-over-object attention for one glimpse, rows sum to 1.
  Tensor image_graph_attention(const Tensor& question, const Tensor& objects,
                               int glimpse, const EvalCtx& ctx) const;
  Tensor image_graph_layer(const Tensor& h_prev, const Tensor& objects,
                           const Tensor& attention, int glimpse, const EvalCtx& ctx) const;

  // Word-over-word attention; pad keys are masked out before normalization.
  Tensor question_graph_attention(const Tensor& image_graph, const std::vector<bool>& pad_mask,
                                  int glimpse, const EvalCtx& ctx) const;
  Tensor question_graph_layer(const Tensor& o_prev, const Tensor& image_graph,
                              const Tensor& attention, int glimpse, const EvalCtx& ctx) const;

  // z = sum over node columns.
  static Tensor summarize(const Tensor& question_graph);

  GraphState forward(const QuestionInput& q, const Tensor& objects, const EvalCtx& ctx) const;

  const ModelConfig& config() const { return config_; }
  std::vector<std::string> param_names() const;

 private:
  Tensor image_attention_logits(const Tensor& word_keys, const Tensor& object_keys,
                                int glimpse) const;

  ModelConfig config_;
  ParamStore* params_;
};

}  // namespace cvqa
