#include "cvqa/bgn.hpp"

#include <cmath>

#include "cvqa/init.hpp"

namespace cvqa {

namespace {

// Additive mask keeping softmax free of NaNs: exp(-1e30 - max) underflows to
// exactly 0 in double precision.
constexpr double kMaskedLogit = -1e30;

Tensor column_norms(const Tensor& v) {
  const int64_t rows = v.dim(0);
  const int64_t cols = v.dim(1);
  Tensor g = Tensor::zeros({cols});
  for (int64_t j = 0; j < cols; ++j) {
    double sq = 0.0;
    for (int64_t i = 0; i < rows; ++i) sq += v.at(i, j) * v.at(i, j);
    g.values()[j] = std::sqrt(sq);
  }
  return g;
}

Tensor row_norms(const Tensor& v) {
  const int64_t rows = v.dim(0);
  const int64_t cols = v.dim(1);
  Tensor g = Tensor::zeros({rows});
  for (int64_t i = 0; i < rows; ++i) {
    double sq = 0.0;
    for (int64_t j = 0; j < cols; ++j) sq += v.at(i, j) * v.at(i, j);
    g.values()[i] = std::sqrt(sq);
  }
  return g;
}

}  // namespace

BgnModel::BgnModel(ModelConfig config, ParamStore& params)
    : config_(config), params_(&params) {
  const int64_t c = config_.c_dim;
  const int64_t d = config_.d_obj;

  params.add("enc.embed", Tensor::zeros({config_.question_vocab, c}));
  params.add("enc.wx", Tensor::zeros({c, c}));
  params.add("enc.wh", Tensor::zeros({c, c}));
  params.add("enc.bias", Tensor::zeros({c}));

  params.add("img.attn.word", Tensor::zeros({c, c}));
  params.add("img.attn.word.g", Tensor::zeros({c}));
  params.add("img.attn.obj", Tensor::zeros({d, c}));
  params.add("img.attn.obj.g", Tensor::zeros({c}));
  for (int64_t j = 0; j < config_.glimpses_image; ++j) {
    const std::string tag = std::to_string(j);
    params.add("img.attn.p." + tag, Tensor::zeros({c}));
    params.add("img.val.word." + tag, Tensor::zeros({c, c}));
    params.add("img.val.word." + tag + ".g", Tensor::zeros({c}));
    params.add("img.val.obj." + tag, Tensor::zeros({d, c}));
    params.add("img.val.obj." + tag + ".g", Tensor::zeros({c}));
    params.add("img.out." + tag, Tensor::zeros({c, c}));
    params.add("img.out." + tag + ".g", Tensor::zeros({c}));
  }

  params.add("qst.attn.query", Tensor::zeros({c, c}));
  params.add("qst.attn.query.g", Tensor::zeros({c}));
  params.add("qst.attn.key", Tensor::zeros({c, c}));
  params.add("qst.attn.key.g", Tensor::zeros({c}));
  for (int64_t j = 0; j < config_.glimpses_question; ++j) {
    const std::string tag = std::to_string(j);
    params.add("qst.attn.p." + tag, Tensor::zeros({c}));
    params.add("qst.val.query." + tag, Tensor::zeros({c, c}));
    params.add("qst.val.query." + tag + ".g", Tensor::zeros({c}));
    params.add("qst.val.key." + tag, Tensor::zeros({c, c}));
    params.add("qst.val.key." + tag + ".g", Tensor::zeros({c}));
    params.add("qst.out." + tag, Tensor::zeros({c, c}));
    params.add("qst.out." + tag + ".g", Tensor::zeros({c}));
  }
}

std::vector<std::string> BgnModel::param_names() const {
  std::vector<std::string> names;
  for (const auto& name : params_->names()) {
    if (name.rfind("enc.", 0) == 0 || name.rfind("img.", 0) == 0 || name.rfind("qst.", 0) == 0) {
      names.push_back(name);
    }
  }
  return names;
}

void BgnModel::init_params(std::mt19937_64& rng) {
  ParamStore& p = *params_;
  const int64_t c = config_.c_dim;
  const int64_t d = config_.d_obj;

  auto fill = [&](const std::string& name, int64_t fan_in) {
    Tensor& t = p.get(name);
    t.values() = he_normal(t.shape(), fan_in, rng).values();
  };
  auto fill_wn_cols = [&](const std::string& name, int64_t fan_in) {
    fill(name, fan_in);
    p.get(name + ".g").values() = column_norms(p.get(name)).values();
  };
  auto fill_wn_rows = [&](const std::string& name, int64_t fan_in) {
    fill(name, fan_in);
    p.get(name + ".g").values() = row_norms(p.get(name)).values();
  };

  fill("enc.embed", c);
  fill("enc.wx", c);
  fill("enc.wh", c);
  // enc.bias stays zero

  fill_wn_cols("img.attn.word", c);
  fill_wn_cols("img.attn.obj", d);
  for (int64_t j = 0; j < config_.glimpses_image; ++j) {
    const std::string tag = std::to_string(j);
    fill("img.attn.p." + tag, c);
    fill_wn_cols("img.val.word." + tag, c);
    fill_wn_cols("img.val.obj." + tag, d);
    fill_wn_rows("img.out." + tag, c);
  }

  fill_wn_cols("qst.attn.query", c);
  fill_wn_cols("qst.attn.key", c);
  for (int64_t j = 0; j < config_.glimpses_question; ++j) {
    const std::string tag = std::to_string(j);
    fill("qst.attn.p." + tag, c);
    fill_wn_cols("qst.val.query." + tag, c);
    fill_wn_cols("qst.val.key." + tag, c);
    fill_wn_rows("qst.out." + tag, c);
  }
}

Tensor BgnModel::encode_question(const QuestionInput& q, const EvalCtx& ctx) const {
  (void)ctx;  // the recurrent cell carries no dropout
  const int64_t m = config_.m_max;
  if (static_cast<int64_t>(q.tokens.size()) != m ||
      static_cast<int64_t>(q.pad_mask.size()) != m) {
    throw UsageError("question must be padded to m_max=" + std::to_string(m) +
                     ", got " + std::to_string(q.tokens.size()) + " tokens");
  }
  const ParamStore& p = *params_;
  Tensor embedded = embedding_cols(p.get("enc.embed"), q.tokens);  // (vocab x C) -> C x m
  const Tensor& wx = p.get("enc.wx");
  const Tensor& wh = p.get("enc.wh");
  const Tensor& bias = p.get("enc.bias");

  Tensor hidden;  // undefined until the first real token
  Tensor zero_col = Tensor::zeros({config_.c_dim});
  std::vector<Tensor> columns(m);
  for (int64_t t = 0; t < m; ++t) {
    if (q.pad_mask[t]) {
      columns[t] = zero_col;  // pad columns are zero; hidden state carries over
      continue;
    }
    Tensor pre = add(matmul(wx, select_col(embedded, t)), bias);
    if (hidden.defined()) pre = add(pre, matmul(wh, hidden));
    hidden = tanh_op(pre);
    columns[t] = hidden;
  }
  return stack_cols(columns);
}

Tensor BgnModel::image_attention_logits(const Tensor& word_keys, const Tensor& object_keys,
                                        int glimpse) const {
  const Tensor& p_j = params_->get("img.attn.p." + std::to_string(glimpse));
  Tensor gated = hadamard(broadcast_row(p_j, word_keys.dim(0)), word_keys);
  return matmul(gated, transpose(object_keys));
}

Tensor BgnModel::image_graph_attention(const Tensor& question, const Tensor& objects,
                                       int glimpse, const EvalCtx& ctx) const {
  const ParamStore& p = *params_;
  Tensor word_keys =
      relu(matmul(transpose(question), wn_cols(p, "img.attn.word", ctx)));
  Tensor object_keys =
      relu(matmul(transpose(objects), wn_cols(p, "img.attn.obj", ctx)));
  return softmax(image_attention_logits(word_keys, object_keys, glimpse), 1);
}

Tensor BgnModel::image_graph_layer(const Tensor& h_prev, const Tensor& objects,
                                   const Tensor& attention, int glimpse, const EvalCtx& ctx) const {
  const ParamStore& p = *params_;
  const std::string tag = std::to_string(glimpse);
  Tensor word_values = relu(matmul(
      transpose(h_prev), wn_cols(p, "img.val.word." + tag, ctx)));
  Tensor object_values = relu(matmul(
      transpose(objects), wn_cols(p, "img.val.obj." + tag, ctx)));
  Tensor joint = hadamard(word_values, matmul(attention, object_values));  // m x K
  Tensor projected = maybe_dropout(
      matmul(wn_rows(p, "img.out." + tag, ctx), transpose(joint)),
      ctx);
  return add(projected, h_prev);
}

Tensor BgnModel::question_graph_attention(const Tensor& image_graph,
                                          const std::vector<bool>& pad_mask, int glimpse,
                                          const EvalCtx& ctx) const {
  const ParamStore& p = *params_;
  const int64_t m = image_graph.dim(1);
  Tensor queries = relu(
      matmul(transpose(image_graph), wn_cols(p, "qst.attn.query", ctx)));
  Tensor keys = relu(
      matmul(transpose(image_graph), wn_cols(p, "qst.attn.key", ctx)));
  const Tensor& p_j = params_->get("qst.attn.p." + std::to_string(glimpse));
  Tensor logits = matmul(hadamard(broadcast_row(p_j, m), queries), transpose(keys));

  bool any_pad = false;
  for (bool flag : pad_mask) any_pad = any_pad || flag;
  if (any_pad) {
    if (static_cast<int64_t>(pad_mask.size()) != m) {
      throw UsageError("pad mask length does not match node count");
    }
    Tensor bias = Tensor::zeros({m, m});
    for (int64_t i = 0; i < m; ++i) {
      for (int64_t j = 0; j < m; ++j) {
        if (pad_mask[static_cast<size_t>(j)]) bias.at(i, j) = kMaskedLogit;
      }
    }
    logits = add(logits, bias);
  }
  return softmax(logits, 1);
}

Tensor BgnModel::question_graph_layer(const Tensor& o_prev, const Tensor& image_graph,
                                      const Tensor& attention, int glimpse,
                                      const EvalCtx& ctx) const {
  const ParamStore& p = *params_;
  const std::string tag = std::to_string(glimpse);
  Tensor query_values = relu(matmul(
      transpose(o_prev), wn_cols(p, "qst.val.query." + tag, ctx)));
  Tensor key_values = relu(matmul(
      transpose(image_graph), wn_cols(p, "qst.val.key." + tag, ctx)));
  Tensor joint = hadamard(query_values, matmul(attention, key_values));
  Tensor projected = maybe_dropout(
      matmul(wn_rows(p, "qst.out." + tag, ctx), transpose(joint)),
      ctx);
  return add(projected, o_prev);
}

Tensor BgnModel::summarize(const Tensor& question_graph) {
  return sum_axis(question_graph, 1);
}

GraphState BgnModel::forward(const QuestionInput& q, const Tensor& objects,
                             const EvalCtx& ctx) const {
  if (objects.rank() != 2 || objects.dim(0) != config_.d_obj || objects.dim(1) != config_.n_objects) {
    throw UsageError("object features must be " + std::to_string(config_.d_obj) + "x" +
                     std::to_string(config_.n_objects) + ", got " + shape_str(objects.shape()));
  }
  GraphState state;
  state.question = encode_question(q, ctx);

  Tensor h = state.question;
  for (int j = 0; j < config_.glimpses_image; ++j) {
    Tensor attention = image_graph_attention(state.question, objects, j, ctx);
    state.image_attention.push_back(attention);
    h = image_graph_layer(h, objects, attention, j, ctx);
  }
  state.image_graph = h;

  Tensor o = h;
  for (int j = 0; j < config_.glimpses_question; ++j) {
    Tensor attention = question_graph_attention(h, q.pad_mask, j, ctx);
    state.question_attention.push_back(attention);
    o = question_graph_layer(o, h, attention, j, ctx);
  }
  state.question_graph = o;
  state.summary = summarize(o);
  return state;
}

}  // namespace cvqa
