#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "cvqa/bgn.hpp"
#include "cvqa/config.hpp"
#include "cvqa/dataset.hpp"
#include "cvqa/head.hpp"
#include "cvqa/metrics.hpp"
#include "cvqa/param_store.hpp"

namespace cvqa {

// Adamax moments per parameter; u is non-decreasing under constant gradients.
struct AdamaxState {
  struct Slot {
    std::vector<double> m;
    std::vector<double> u;
  };
  std::unordered_map<std::string, Slot> slots;
  int64_t t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// theta -= (lr / (1 - beta1^t)) * m / (u + eps) over trainable parameters,
// reading the gradients accumulated in the store. Frozen entries untouched.
void adamax_step(ParamStore& params, AdamaxState& state, double lr);

// Base stage: 0.001 warmup growing to 0.004, constant through epoch 11,
// then x0.25 every two epochs down to the 0.00025 floor.
double base_lr_schedule(int64_t epoch);

// Novel stage: 0.004 for {55, 35, 20} epochs at k = {1, 5, 10}, then 0.001
// for five more. Unsupported k snaps to the nearest plateau with a warning.
double novel_lr_schedule(int64_t epoch, int64_t shots);
int64_t novel_plateau_epochs(int64_t shots);
int64_t novel_total_epochs(int64_t shots);

// Constructs a BgnModel + CompositionalHead pair over `params` from the run
// config and dataset vocabularies (no initialization).
struct ModelBundle {
  BgnModel model;
  CompositionalHead head;
};
ModelBundle build_model(const RunConfig& config, const LoadedData& data, ParamStore& params);

struct TrainResult {
  std::vector<EpochTrace> traces;
  MetricsReport final_val;
};

// Minimizes L_base = L_a + L_b + lambda * L_ab with Adamax; parameters are
// initialized in place. Deterministic for a fixed seed.
TrainResult train_base(const LoadedData& data, const RunConfig& config, ParamStore& params);

// Minimizes L_novel = L_n + lambda * L_an over the novel embeddings with
// everything else frozen; `params` must already hold the base checkpoint.
TrainResult train_novel(const LoadedData& data, const RunConfig& config, ParamStore& params);

// Scores a split with the current parameters (eval mode).
MetricsReport evaluate_base(const LoadedData& data, const RunConfig& config,
                            const ModelBundle& bundle,
                            const std::vector<DatasetExample>& examples);
MetricsReport evaluate_novel(const LoadedData& data, const RunConfig& config,
                             const ModelBundle& bundle,
                             const std::vector<DatasetExample>& examples);

}  // namespace cvqa
