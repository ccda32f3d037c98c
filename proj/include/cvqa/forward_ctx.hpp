#pragma once

#include <random>
#include <string>
#include <unordered_map>

#include "cvqa/errors.hpp"
#include "cvqa/ops.hpp"
#include "cvqa/param_store.hpp"

namespace cvqa {

inline constexpr double kDropoutP = 0.2;

// Effective (weight-normalized) parameter tensors shared across the examples
// of one batch. Only valid while parameter values are unchanged, and only
// together with a single backward sweep per batch; a second sweep through a
// shared node would double-count its accumulated upstream gradient.
struct WeightCache {
  std::unordered_map<std::string, Tensor> entries;
};

// Carries the training/eval switch, the dropout sub-stream, and the optional
// per-batch weight cache through a forward pass. Gradient checks and
// evaluation run in eval mode.
struct EvalCtx {
  bool training = false;
  std::mt19937_64* dropout_rng = nullptr;
  WeightCache* weights = nullptr;

  static EvalCtx eval() { return {}; }
  static EvalCtx train(std::mt19937_64& rng) { return {true, &rng}; }
  EvalCtx with_cache(WeightCache& cache) const {
    EvalCtx out = *this;
    out.weights = &cache;
    return out;
  }
};

inline Tensor maybe_dropout(const Tensor& x, const EvalCtx& ctx) {
  if (!ctx.training) return x;
  if (ctx.dropout_rng == nullptr) throw UsageError("training forward pass needs a dropout rng");
  return dropout(x, kDropoutP, true, *ctx.dropout_rng);
}

// weight_norm normalizes rows; these wrappers pick the output-unit axis of a
// stored parameter "<name>" with gains "<name>.g". Matrices applied as
// X^T * M have their output units in columns, matrices applied as M * x in
// rows.
inline Tensor wn_cols(const ParamStore& params, const std::string& name, const EvalCtx& ctx) {
  if (ctx.weights) {
    auto it = ctx.weights->entries.find(name);
    if (it != ctx.weights->entries.end()) return it->second;
  }
  Tensor w = transpose(weight_norm(transpose(params.get(name)), params.get(name + ".g")));
  if (ctx.weights) ctx.weights->entries.emplace(name, w);
  return w;
}

inline Tensor wn_rows(const ParamStore& params, const std::string& name, const EvalCtx& ctx) {
  if (ctx.weights) {
    auto it = ctx.weights->entries.find(name);
    if (it != ctx.weights->entries.end()) return it->second;
  }
  Tensor w = weight_norm(params.get(name), params.get(name + ".g"));
  if (ctx.weights) ctx.weights->entries.emplace(name, w);
  return w;
}

}  // namespace cvqa
