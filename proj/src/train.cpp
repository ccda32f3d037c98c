#include "cvqa/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>

#include "cvqa/errors.hpp"
#include "cvqa/rng.hpp"
#include "cvqa/tensor_io.hpp"

namespace cvqa {

void adamax_step(ParamStore& params, AdamaxState& state, double lr) {
  state.t += 1;
  const double bias_correction = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  for (const auto& name : params.trainable_names()) {
    Tensor& param = params.get(name);
    const auto& grad = param.grad();
    auto& slot = state.slots[name];
    if (slot.m.empty()) {
      slot.m.assign(grad.size(), 0.0);
      slot.u.assign(grad.size(), 0.0);
    }
    if (slot.m.size() != grad.size()) {
      throw UsageError("adamax state for '" + name + "' does not match the gradient size");
    }
    auto& values = param.values();
    for (size_t i = 0; i < grad.size(); ++i) {
      slot.m[i] = state.beta1 * slot.m[i] + (1.0 - state.beta1) * grad[i];
      slot.u[i] = std::max(state.beta2 * slot.u[i], std::abs(grad[i]));
      values[i] -= (lr / bias_correction) * slot.m[i] / (slot.u[i] + state.eps);
    }
  }
}

double base_lr_schedule(int64_t epoch) {
  if (epoch < 1) throw UsageError("epochs are 1-based");
  if (epoch <= 4) return 0.001 * static_cast<double>(epoch);
  if (epoch <= 11) return 0.004;
  if (epoch <= 13) return 0.001;
  return 0.00025;
}

int64_t novel_plateau_epochs(int64_t shots) {
  switch (shots) {
    case 1: return 55;
    case 5: return 35;
    case 10: return 20;
    default: break;
  }
  // Snap to the nearest configured k, preferring the smaller on ties.
  int64_t best_k = 1;
  int64_t best_dist = std::abs(shots - 1);
  for (int64_t k : {5, 10}) {
    const int64_t dist = std::abs(shots - k);
    if (dist < best_dist) {
      best_dist = dist;
      best_k = k;
    }
  }
  static std::set<int64_t> warned;
  if (warned.insert(shots).second) {
    std::fprintf(stderr,
                 "warning: no novel-stage schedule for %lld-shot, using the %lld-shot plateau\n",
                 static_cast<long long>(shots), static_cast<long long>(best_k));
  }
  return novel_plateau_epochs(best_k);
}

double novel_lr_schedule(int64_t epoch, int64_t shots) {
  if (epoch < 1) throw UsageError("epochs are 1-based");
  return epoch <= novel_plateau_epochs(shots) ? 0.004 : 0.001;
}

int64_t novel_total_epochs(int64_t shots) { return novel_plateau_epochs(shots) + 5; }

ModelBundle build_model(const RunConfig& config, const LoadedData& data, ParamStore& params) {
  config.validate();
  ModelConfig model_config;
  model_config.c_dim = config.c_dim;
  model_config.glimpses_image = config.glimpses_image;
  model_config.glimpses_question = config.glimpses_question;
  model_config.m_max = config.m_max;
  model_config.n_objects = config.n_objects;
  model_config.d_obj = config.d_obj;
  model_config.question_vocab = static_cast<int64_t>(data.question_vocab.words.size());

  HeadConfig head_config;
  head_config.c_dim = config.c_dim;
  head_config.mode = config.head_mode;
  head_config.distance = config.distance;

  return ModelBundle{BgnModel(model_config, params),
                     CompositionalHead(head_config, data.manifest.vocab, params)};
}

namespace {

void check_finite(double value, const char* term, int64_t epoch, int64_t batch, int64_t qid) {
  if (!std::isfinite(value)) {
    throw NumericalError(std::string(term) + " is not finite at epoch " + std::to_string(epoch) +
                         ", batch " + std::to_string(batch) + ", qid " + std::to_string(qid));
  }
}

Tensor base_label_tensor(const DatasetExample& ex, const AnswerVocab& vocab) {
  std::vector<double> labels(vocab.base.size(), 0.0);
  for (const auto& [answer, count] : ex.answers) {
    auto it = vocab.base_index.find(answer);
    if (it != vocab.base_index.end()) labels[static_cast<size_t>(it->second)] = soft_label(count);
  }
  const int64_t n = static_cast<int64_t>(labels.size());
  return Tensor::from_values({n}, std::move(labels));
}

Tensor attr_label_tensor(const DatasetExample& ex, const AnswerVocab& vocab) {
  std::vector<std::pair<std::string, double>> labeled;
  labeled.reserve(ex.answers.size());
  for (const auto& [answer, count] : ex.answers) labeled.emplace_back(answer, soft_label(count));
  auto labels = attribute_labels(labeled, vocab);
  const int64_t n = static_cast<int64_t>(labels.size());
  return Tensor::from_values({n}, std::move(labels));
}

// Detached copy of a forward value, used to cache frozen-backbone summaries.
Tensor detach(const Tensor& t) { return Tensor::from_values(t.shape(), t.values()); }

std::unordered_map<int64_t, double> truth_over(
    const DatasetExample& ex, const std::unordered_map<std::string, int>& index) {
  std::unordered_map<int64_t, double> truth;
  for (const auto& [answer, count] : ex.answers) {
    auto it = index.find(answer);
    if (it != index.end() && count > 0) truth[it->second] = soft_label(count);
  }
  return truth;
}

}  // namespace

MetricsReport evaluate_base(const LoadedData& data, const RunConfig& config,
                            const ModelBundle& bundle,
                            const std::vector<DatasetExample>& examples) {
  std::vector<std::vector<double>> scores;
  std::vector<std::unordered_map<int64_t, double>> truth;
  scores.reserve(examples.size());
  truth.reserve(examples.size());
  WeightCache weights;  // parameters are fixed during evaluation
  const EvalCtx ctx = EvalCtx::eval().with_cache(weights);
  for (const auto& ex : examples) {
    QuestionInput q = data.question_vocab.encode(ex.tokens, config.m_max);
    GraphState state = bundle.model.forward(q, data.features_of(ex.image_key), ctx);
    scores.push_back(bundle.head.base_scores(state.summary, ctx).values());
    truth.push_back(truth_over(ex, bundle.head.vocab().base_index));
  }
  return evaluate(scores, truth, EvalMode::kSoft);
}

MetricsReport evaluate_novel(const LoadedData& data, const RunConfig& config,
                             const ModelBundle& bundle,
                             const std::vector<DatasetExample>& examples) {
  std::vector<std::vector<double>> scores;
  std::vector<std::unordered_map<int64_t, double>> truth;
  scores.reserve(examples.size());
  truth.reserve(examples.size());
  WeightCache weights;
  const EvalCtx ctx = EvalCtx::eval().with_cache(weights);
  for (const auto& ex : examples) {
    QuestionInput q = data.question_vocab.encode(ex.tokens, config.m_max);
    GraphState state = bundle.model.forward(q, data.features_of(ex.image_key), ctx);
    scores.push_back(bundle.head.novel_logits(state.summary, ctx).values());
    truth.push_back(truth_over(ex, bundle.head.vocab().novel_index));
  }
  return evaluate(scores, truth, EvalMode::kSoft);
}

TrainResult train_base(const LoadedData& data, const RunConfig& config, ParamStore& params) {
  ModelBundle bundle = build_model(config, data, params);
  if (data.train_base.empty()) throw DataError("base training split is empty");

  auto init_rng = make_rng(config.seed, "init");
  bundle.model.init_params(init_rng);
  bundle.head.init_params(init_rng);
  auto dropout_rng = make_rng(config.seed, "dropout");
  auto sample_rng = make_rng(config.seed, "sampling");

  AdamaxState optimizer;
  const int64_t epochs = config.epochs > 0 ? config.epochs : 15;
  const HeadMode mode = config.head_mode;
  const bool has_attr_loss = mode == HeadMode::kAttributeNetwork || mode == HeadMode::kSum;
  const bool has_distance = mode != HeadMode::kNone;

  std::vector<size_t> order(data.train_base.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  for (int64_t epoch = 1; epoch <= epochs; ++epoch) {
    const double lr = base_lr_schedule(epoch);
    std::shuffle(order.begin(), order.end(), sample_rng);

    double la_sum = 0.0, lb_sum = 0.0, lab_sum = 0.0;
    int64_t batches = 0;
    const int64_t n = static_cast<int64_t>(order.size());
    for (int64_t start = 0; start < n; start += config.batch_size) {
      const int64_t batch_n = std::min<int64_t>(config.batch_size, n - start);
      const double inv_batch = 1.0 / static_cast<double>(batch_n);
      params.zero_grad();
      WeightCache weights;  // shared across the batch, swept exactly once
      EvalCtx ctx = EvalCtx::train(dropout_rng).with_cache(weights);

      Tensor batch_loss;
      for (int64_t b = 0; b < batch_n; ++b) {
        const DatasetExample& ex = data.train_base[order[static_cast<size_t>(start + b)]];
        QuestionInput q = data.question_vocab.encode(ex.tokens, config.m_max);
        GraphState state = bundle.model.forward(q, data.features_of(ex.image_key), ctx);

        Tensor loss_b = bce_with_logits(bundle.head.base_scores(state.summary, ctx),
                                        base_label_tensor(ex, bundle.head.vocab()));
        check_finite(loss_b.item(), "L_b", epoch, batches, ex.qid);
        lb_sum += loss_b.item();

        Tensor example_loss = loss_b;
        if (has_attr_loss) {
          Tensor attr_scores = mode == HeadMode::kAttributeNetwork
                                   ? bundle.head.attribute_scores(state.question_graph, ctx)
                                   : bundle.head.attribute_scores_sum(state.summary, ctx);
          Tensor loss_a = bce_with_logits(attr_scores, attr_label_tensor(ex, bundle.head.vocab()));
          check_finite(loss_a.item(), "L_a", epoch, batches, ex.qid);
          la_sum += loss_a.item();
          example_loss = add(example_loss, loss_a);
        }
        batch_loss = batch_loss.defined() ? add(batch_loss, example_loss) : example_loss;
      }
      batch_loss = affine(batch_loss, inv_batch, 0.0);

      if (has_distance) {
        // L_ab depends only on parameters; one term per step equals its
        // batch mean.
        Tensor loss_ab = bundle.head.base_distance_loss();
        check_finite(loss_ab.item(), "L_ab", epoch, batches, -1);
        lab_sum += loss_ab.item();
        if (config.lambda > 0.0) batch_loss = add(batch_loss, affine(loss_ab, config.lambda, 0.0));
      }

      backward(batch_loss);
      adamax_step(params, optimizer, lr);
      ++batches;
    }

    EpochTrace train_trace;
    train_trace.epoch = epoch;
    train_trace.split = "train";
    train_trace.loss_b = lb_sum / static_cast<double>(n);
    if (has_attr_loss) train_trace.loss_a = la_sum / static_cast<double>(n);
    if (has_distance) train_trace.loss_ab = lab_sum / static_cast<double>(batches);
    result.traces.push_back(train_trace);

    if (!data.val_base.empty()) {
      MetricsReport report = evaluate_base(data, config, bundle, data.val_base);
      EpochTrace val_trace;
      val_trace.epoch = epoch;
      val_trace.split = "val";
      val_trace.top1 = report.top1;
      val_trace.top5 = report.top5;
      result.traces.push_back(val_trace);
      result.final_val = report;
    }
  }
  return result;
}

TrainResult train_novel(const LoadedData& data, const RunConfig& config, ParamStore& params) {
  if (config.checkpoint.empty()) {
    throw UsageError("the novel stage needs checkpoint=<base checkpoint path>");
  }
  ModelBundle bundle = build_model(config, data, params);
  load_checkpoint(config.checkpoint, params);

  auto novel_init_rng = make_rng(config.seed, "init.novel");
  bundle.head.init_novel_embeddings(config.init, novel_init_rng);
  params.freeze_all_except({CompositionalHead::kNovelEmbeddingName});

  // Resolve the k-shot example list.
  auto shots_it = data.manifest.shots.find(config.shots);
  const auto shot_map = shots_it != data.manifest.shots.end()
                            ? shots_it->second
                            : sample_few_shot(data.manifest, config.shots, config.seed);

  std::unordered_map<int64_t, const DatasetExample*> by_qid;
  for (const auto& ex : data.train_novel) by_qid[ex.qid] = &ex;

  const auto& vocab = bundle.head.vocab();
  struct ShotExample {
    Tensor summary;                   // detached z from the frozen backbone
    std::vector<int64_t> candidates;  // correct novel answer indices
    int64_t qid = 0;
  };
  std::vector<ShotExample> shot_examples;
  const EvalCtx eval_ctx = EvalCtx::eval();  // backbone is frozen, run it deterministically
  WeightCache frozen_weights;  // frozen backbone: reusable for all summary precomputes
  const EvalCtx precompute_ctx = eval_ctx.with_cache(frozen_weights);
  for (const auto& [answer, qids] : shot_map) {
    for (int64_t qid : qids) {
      auto it = by_qid.find(qid);
      if (it == by_qid.end()) {
        throw DataError("shot list for '" + answer + "' references unknown qid " +
                        std::to_string(qid));
      }
      const DatasetExample& ex = *it->second;
      ShotExample shot;
      shot.qid = qid;
      QuestionInput q = data.question_vocab.encode(ex.tokens, config.m_max);
      shot.summary = detach(bundle.model.forward(q, data.features_of(ex.image_key), precompute_ctx).summary);
      for (const auto& [text, count] : ex.answers) {
        auto idx = vocab.novel_index.find(text);
        if (idx != vocab.novel_index.end() && count > 0) shot.candidates.push_back(idx->second);
      }
      if (shot.candidates.empty()) {
        throw DataError("qid " + std::to_string(qid) + " has no novel answer to learn from");
      }
      shot_examples.push_back(std::move(shot));
    }
  }
  if (shot_examples.empty()) throw DataError("no novel-shot examples to train on");

  // Cache validation summaries once; only the novel embeddings move.
  std::vector<Tensor> val_summaries;
  std::vector<std::unordered_map<int64_t, double>> val_truth;
  for (const auto& ex : data.val_novel) {
    QuestionInput q = data.question_vocab.encode(ex.tokens, config.m_max);
    val_summaries.push_back(
        detach(bundle.model.forward(q, data.features_of(ex.image_key), precompute_ctx).summary));
    val_truth.push_back(truth_over(ex, vocab.novel_index));
  }

  auto sample_rng = make_rng(config.seed, "sampling.novel");
  AdamaxState optimizer;
  const int64_t epochs = config.epochs > 0 ? config.epochs : novel_total_epochs(config.shots);
  const bool has_distance = config.head_mode != HeadMode::kNone;

  std::vector<size_t> order(shot_examples.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  for (int64_t epoch = 1; epoch <= epochs; ++epoch) {
    const double lr = novel_lr_schedule(epoch, config.shots);
    std::shuffle(order.begin(), order.end(), sample_rng);

    double ln_sum = 0.0, lan_sum = 0.0;
    int64_t batches = 0;
    const int64_t n = static_cast<int64_t>(order.size());
    for (int64_t start = 0; start < n; start += config.batch_size) {
      const int64_t batch_n = std::min<int64_t>(config.batch_size, n - start);
      const double inv_batch = 1.0 / static_cast<double>(batch_n);
      params.zero_grad();
      WeightCache weights;
      EvalCtx ctx = eval_ctx.with_cache(weights);

      Tensor batch_loss;
      for (int64_t b = 0; b < batch_n; ++b) {
        const ShotExample& shot = shot_examples[order[static_cast<size_t>(start + b)]];
        Tensor logits = bundle.head.novel_logits(shot.summary, ctx);
        int64_t target = shot.candidates[0];
        if (shot.candidates.size() > 1) {
          std::uniform_int_distribution<size_t> pick(0, shot.candidates.size() - 1);
          target = shot.candidates[pick(sample_rng)];
        }
        Tensor loss_n = cross_entropy_logits(logits, target);
        check_finite(loss_n.item(), "L_n", epoch, batches, shot.qid);
        ln_sum += loss_n.item();
        batch_loss = batch_loss.defined() ? add(batch_loss, loss_n) : loss_n;
      }
      batch_loss = affine(batch_loss, inv_batch, 0.0);

      if (has_distance) {
        Tensor loss_an = bundle.head.novel_distance_loss();
        check_finite(loss_an.item(), "L_an", epoch, batches, -1);
        lan_sum += loss_an.item();
        if (config.lambda > 0.0) batch_loss = add(batch_loss, affine(loss_an, config.lambda, 0.0));
      }

      backward(batch_loss);
      adamax_step(params, optimizer, lr);
      ++batches;
    }

    EpochTrace train_trace;
    train_trace.epoch = epoch;
    train_trace.split = "train";
    train_trace.loss_n = ln_sum / static_cast<double>(n);
    if (has_distance) train_trace.loss_an = lan_sum / static_cast<double>(batches);
    result.traces.push_back(train_trace);

    if (!val_summaries.empty()) {
      std::vector<std::vector<double>> scores;
      scores.reserve(val_summaries.size());
      WeightCache epoch_weights;
      EvalCtx epoch_ctx = eval_ctx.with_cache(epoch_weights);
      for (const auto& summary : val_summaries) {
        scores.push_back(bundle.head.novel_logits(summary, epoch_ctx).values());
      }
      MetricsReport report = evaluate(scores, val_truth, EvalMode::kSoft);
      EpochTrace val_trace;
      val_trace.epoch = epoch;
      val_trace.split = "val";
      val_trace.top1 = report.top1;
      val_trace.top5 = report.top5;
      result.traces.push_back(val_trace);
      result.final_val = report;
    }
  }
  return result;
}

}  // namespace cvqa
