#include "cvqa/head.hpp"

#include "cvqa/errors.hpp"
#include "cvqa/init.hpp"

namespace cvqa {

const std::string CompositionalHead::kNovelEmbeddingName = "head.novel.emb";

CompositionalHead::CompositionalHead(HeadConfig config, AnswerVocab vocab, ParamStore& params)
    : config_(config), vocab_(std::move(vocab)), params_(&params) {
  vocab_.build_indices();
  vocab_.validate();
  const int64_t c = config_.c_dim;
  const int64_t h = 2 * c;
  params.add("head.base.w", Tensor::zeros({h, c}));
  params.add("head.base.w.g", Tensor::zeros({h}));
  params.add("head.base.emb", Tensor::zeros({h, static_cast<int64_t>(vocab_.base.size())}));
  params.add("head.attr.w", Tensor::zeros({h, c}));
  params.add("head.attr.w.g", Tensor::zeros({h}));
  params.add("head.attr.emb", Tensor::zeros({h, static_cast<int64_t>(vocab_.attributes.size())}));
  params.add(kNovelEmbeddingName, Tensor::zeros({h, static_cast<int64_t>(vocab_.novel.size())}));

  comp_base_ = composition_matrix(vocab_.base);
  comp_novel_ = composition_matrix(vocab_.novel);
  base_has_attrs_.reserve(vocab_.base.size());
  for (const auto& answer : vocab_.base) {
    base_has_attrs_.push_back(vocab_.attrs_of(answer).empty() ? 0.0 : 1.0);
  }
  novel_has_attrs_.reserve(vocab_.novel.size());
  for (const auto& answer : vocab_.novel) {
    novel_has_attrs_.push_back(vocab_.attrs_of(answer).empty() ? 0.0 : 1.0);
  }
}

Tensor CompositionalHead::composition_matrix(const std::vector<std::string>& answers) const {
  const int64_t n_attrs = static_cast<int64_t>(vocab_.attributes.size());
  const int64_t n_answers = static_cast<int64_t>(answers.size());
  if (n_attrs == 0 || n_answers == 0) return Tensor();
  Tensor comp = Tensor::zeros({n_attrs, n_answers});
  for (int64_t i = 0; i < n_answers; ++i) {
    for (int idx : vocab_.attrs_of(answers[static_cast<size_t>(i)])) {
      comp.at(idx, i) = 1.0;
    }
  }
  return comp;
}

std::vector<std::string> CompositionalHead::param_names() const {
  std::vector<std::string> names;
  for (const auto& name : params_->names()) {
    if (name.rfind("head.", 0) == 0) names.push_back(name);
  }
  return names;
}

void CompositionalHead::init_params(std::mt19937_64& rng) {
  ParamStore& p = *params_;
  const int64_t c = config_.c_dim;
  const int64_t h = 2 * c;
  auto fill = [&](const std::string& name, int64_t fan_in) {
    Tensor& t = p.get(name);
    t.values() = he_normal(t.shape(), fan_in, rng).values();
  };
  fill("head.base.w", c);
  fill("head.attr.w", c);
  for (const std::string name : {"head.base.w", "head.attr.w"}) {
    Tensor& v = p.get(name);
    Tensor& g = p.get(name + ".g");
    for (int64_t i = 0; i < h; ++i) {
      double sq = 0.0;
      for (int64_t j = 0; j < c; ++j) sq += v.at(i, j) * v.at(i, j);
      g.values()[i] = std::sqrt(sq);
    }
  }
  // Embedding columns are scored against post-relu activations whose norm
  // grows with the node sum; 1/(2C) keeps initial scores out of sigmoid
  // saturation where BCE gradients vanish.
  std::normal_distribution<double> emb_normal(0.0, 1.0 / static_cast<double>(h));
  for (const std::string name : {"head.base.emb", "head.attr.emb", kNovelEmbeddingName.c_str()}) {
    for (double& v : p.get(name).values()) v = emb_normal(rng);
  }
}

void CompositionalHead::init_novel_embeddings(InitMode mode, std::mt19937_64& rng) {
  Tensor& emb = params_->get(kNovelEmbeddingName);
  if (mode == InitMode::kHe) {
    std::normal_distribution<double> emb_normal(0.0, 1.0 / static_cast<double>(emb.dim(0)));
    for (double& v : emb.values()) v = emb_normal(rng);
    return;
  }
  // Attribute init: each column starts at its attribute-embedding sum.
  const Tensor& attr_emb = params_->get("head.attr.emb");
  const int64_t h = emb.dim(0);
  for (size_t i = 0; i < vocab_.novel.size(); ++i) {
    const auto& attrs = vocab_.attrs_of(vocab_.novel[i]);
    for (int64_t r = 0; r < h; ++r) {
      double total = 0.0;
      for (int idx : attrs) total += attr_emb.at(r, idx);
      emb.at(r, static_cast<int64_t>(i)) = total;
    }
  }
}

Tensor CompositionalHead::base_scores(const Tensor& summary, const EvalCtx& ctx) const {
  const ParamStore& p = *params_;
  Tensor hidden = maybe_dropout(
      relu(matmul(wn_rows(p, "head.base.w", ctx), summary)), ctx);
  return matmul(transpose(p.get("head.base.emb")), hidden);
}

Tensor CompositionalHead::attribute_scores(const Tensor& question_graph, const EvalCtx& ctx) const {
  const ParamStore& p = *params_;
  // The nonlinearity is applied per node, before summation.
  Tensor hidden = maybe_dropout(
      relu(matmul(wn_rows(p, "head.attr.w", ctx), question_graph)), ctx);
  Tensor per_node = matmul(transpose(p.get("head.attr.emb")), hidden);  // |U| x m
  return sum_axis(per_node, 1);
}

Tensor CompositionalHead::attribute_scores_sum(const Tensor& summary, const EvalCtx& ctx) const {
  const ParamStore& p = *params_;
  Tensor hidden = maybe_dropout(
      relu(matmul(wn_rows(p, "head.attr.w", ctx), summary)), ctx);
  return matmul(transpose(p.get("head.attr.emb")), hidden);
}

Tensor CompositionalHead::novel_logits(const Tensor& summary, const EvalCtx& ctx) const {
  const ParamStore& p = *params_;
  Tensor hidden = maybe_dropout(
      relu(matmul(wn_rows(p, "head.base.w", ctx), summary)), ctx);
  return matmul(transpose(p.get(kNovelEmbeddingName)), hidden);
}

DistanceFn CompositionalHead::effective_distance() const {
  return config_.mode == HeadMode::kLcr ? DistanceFn::kCosine : config_.distance;
}

Tensor CompositionalHead::composition_distance(const Tensor& embedding_matrix, int64_t column,
                                               const std::vector<int>& attribute_ids,
                                               DistanceFn fn) const {
  if (attribute_ids.empty()) {
    throw UsageError("composition_distance: empty attribute list");
  }
  const int64_t n_attrs = static_cast<int64_t>(vocab_.attributes.size());
  Tensor indicator = Tensor::zeros({n_attrs});
  for (int idx : attribute_ids) {
    if (idx < 0 || idx >= n_attrs) throw UsageError("composition_distance: bad attribute index");
    indicator.values()[static_cast<size_t>(idx)] = 1.0;
  }
  Tensor w = select_col(embedding_matrix, column);
  Tensor s = matmul(params_->get("head.attr.emb"), indicator);
  if (fn == DistanceFn::kMse) {
    Tensor d = sub(w, s);
    return sum_all(hadamard(d, d));
  }
  Tensor dot = sum_all(hadamard(w, s));
  Tensor nw = sqrt_op(affine(sum_all(hadamard(w, w)), 1.0, 1e-24));
  Tensor ns = sqrt_op(affine(sum_all(hadamard(s, s)), 1.0, 1e-24));
  Tensor cosine = div(dot, affine(hadamard(nw, ns), 1.0, 1e-12));
  return affine(cosine, -1.0, 1.0);
}

Tensor CompositionalHead::distance_sum(const Tensor& embeddings, const Tensor& composition,
                                       const std::vector<double>& column_mask) const {
  const Tensor mask = Tensor::from_values({static_cast<int64_t>(column_mask.size())}, column_mask);
  Tensor sums = matmul(params_->get("head.attr.emb"), composition);  // 2C x |A|
  if (effective_distance() == DistanceFn::kMse) {
    Tensor d = sub(embeddings, sums);
    Tensor per_column = sum_axis(hadamard(d, d), 0);
    return sum_all(hadamard(per_column, mask));
  }
  Tensor dots = sum_axis(hadamard(embeddings, sums), 0);
  Tensor nw = sqrt_op(affine(sum_axis(hadamard(embeddings, embeddings), 0), 1.0, 1e-24));
  Tensor ns = sqrt_op(affine(sum_axis(hadamard(sums, sums), 0), 1.0, 1e-24));
  Tensor cosine = div(dots, affine(hadamard(nw, ns), 1.0, 1e-12));
  Tensor per_column = affine(cosine, -1.0, 1.0);
  return sum_all(hadamard(per_column, mask));
}

Tensor CompositionalHead::base_distance_loss() const {
  if (!comp_base_.defined()) return Tensor::scalar(0.0);
  return distance_sum(params_->get("head.base.emb"), comp_base_, base_has_attrs_);
}

Tensor CompositionalHead::novel_distance_loss() const {
  if (!comp_novel_.defined()) return Tensor::scalar(0.0);
  return distance_sum(params_->get(kNovelEmbeddingName), comp_novel_, novel_has_attrs_);
}

Tensor base_total_loss(const Tensor& attr_loss, const Tensor& base_loss,
                       const Tensor& distance_loss, double lambda) {
  if (lambda < 0.0) throw UsageError("lambda must be >= 0");
  return add(add(attr_loss, base_loss), affine(distance_loss, lambda, 0.0));
}

Tensor novel_total_loss(const Tensor& novel_loss, const Tensor& distance_loss, double lambda) {
  if (lambda < 0.0) throw UsageError("lambda must be >= 0");
  return add(novel_loss, affine(distance_loss, lambda, 0.0));
}

}  // namespace cvqa
