#include "cvqa/check_harness.hpp"

#include <random>

#include "cvqa/bgn.hpp"
#include "cvqa/head.hpp"
#include "cvqa/rng.hpp"

namespace cvqa {

namespace {

AnswerVocab toy_vocab(int64_t n_attrs, std::mt19937_64& rng) {
  AnswerVocab vocab;
  for (int64_t i = 0; i < n_attrs; ++i) vocab.attributes.push_back("u" + std::to_string(i));
  std::uniform_int_distribution<int> n_parts(1, 3);
  std::uniform_int_distribution<int> attr_pick(0, static_cast<int>(n_attrs) - 1);
  auto draw_attrs = [&] {
    std::vector<int> ids;
    const int k = n_parts(rng);
    for (int i = 0; i < k; ++i) {
      int id = attr_pick(rng);
      bool dup = false;
      for (int existing : ids) dup = dup || existing == id;
      if (!dup) ids.push_back(id);
    }
    return ids;
  };
  for (int i = 0; i < 5; ++i) {
    std::string answer = "base" + std::to_string(i);
    vocab.base.push_back(answer);
    vocab.decomposition[answer] = draw_attrs();
  }
  for (int i = 0; i < 4; ++i) {
    std::string answer = "novel" + std::to_string(i);
    vocab.novel.push_back(answer);
    vocab.decomposition[answer] = draw_attrs();
  }
  vocab.build_indices();
  return vocab;
}

}  // namespace

BackboneCheckResult check_backbone_gradients(const BackboneCheckConfig& config) {
  auto rng = make_rng(config.seed, "gradcheck");

  ModelConfig model_config;
  model_config.c_dim = config.c_dim;
  model_config.glimpses_image = config.glimpses;
  model_config.glimpses_question = config.glimpses;
  model_config.m_max = config.m;
  model_config.n_objects = config.n_objects;
  model_config.d_obj = config.d_obj;
  model_config.question_vocab = 8;

  HeadConfig head_config;
  head_config.c_dim = config.c_dim;
  head_config.mode = HeadMode::kAttributeNetwork;
  head_config.distance = DistanceFn::kMse;

  ParamStore params;
  BgnModel model(model_config, params);
  CompositionalHead head(head_config, toy_vocab(config.n_attrs, rng), params);
  model.init_params(rng);
  head.init_params(rng);

  QuestionInput question;
  std::uniform_int_distribution<int> token_pick(2, static_cast<int>(model_config.question_vocab) - 1);
  for (int64_t i = 0; i < config.m; ++i) {
    question.tokens.push_back(token_pick(rng));
    question.pad_mask.push_back(false);
  }
  Tensor objects = Tensor::zeros({config.d_obj, config.n_objects});
  std::normal_distribution<double> unit(0.0, 1.0);
  for (double& v : objects.values()) v = unit(rng);

  std::uniform_real_distribution<double> label_dist(0.0, 1.0);
  std::vector<double> base_labels(head.vocab().base.size());
  for (double& y : base_labels) y = label_dist(rng);
  std::vector<double> attr_labels(head.vocab().attributes.size());
  for (double& y : attr_labels) y = label_dist(rng);
  Tensor y_base = Tensor::from_values({static_cast<int64_t>(base_labels.size())}, base_labels);
  Tensor y_attr = Tensor::from_values({static_cast<int64_t>(attr_labels.size())}, attr_labels);

  const EvalCtx ctx = EvalCtx::eval();  // dropout off for determinism
  const double lambda = config.lambda;

  auto base_loss = [&]() {
    GraphState state = model.forward(question, objects, ctx);
    Tensor loss_b = bce_with_logits(head.base_scores(state.summary, ctx), y_base);
    Tensor loss_a = bce_with_logits(head.attribute_scores(state.question_graph, ctx), y_attr);
    return base_total_loss(loss_a, loss_b, head.base_distance_loss(), lambda);
  };

  BackboneCheckResult result;
  result.base = finite_diff_check(base_loss, params, config.step);

  params.freeze_all_except({CompositionalHead::kNovelEmbeddingName});
  const int64_t target = 1 % static_cast<int64_t>(head.vocab().novel.size());
  auto novel_loss = [&]() {
    GraphState state = model.forward(question, objects, ctx);
    Tensor loss_n = cross_entropy_logits(head.novel_logits(state.summary, ctx), target);
    return novel_total_loss(loss_n, head.novel_distance_loss(), lambda);
  };
  result.novel = finite_diff_check(novel_loss, params, config.step);
  return result;
}

}  // namespace cvqa
