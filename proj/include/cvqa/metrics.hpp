#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace cvqa {

enum class EvalMode { kExact, kSoft };

struct MetricsReport {
  double top1 = 0.0;
  double top5 = 0.0;
  int64_t questions = 0;
};

// Macro-averaged top-1 / top-5 over questions. `truth[q]` maps candidate
// index to its soft score; exact mode collapses each map to 1.0 on its
// highest-scoring answer. Top-5 takes the best truth score among the five
// highest-scoring candidates.
MetricsReport evaluate(const std::vector<std::vector<double>>& scores,
                       const std::vector<std::unordered_map<int64_t, double>>& truth,
                       EvalMode mode);

// One metrics CSV row; absent values print as empty fields.
struct EpochTrace {
  int64_t epoch = 0;
  std::string split;
  std::optional<double> loss_a, loss_b, loss_ab, loss_n, loss_an, top1, top5;
};

std::string traces_to_csv(const std::vector<EpochTrace>& traces);
void write_traces_csv(const std::string& path, const std::vector<EpochTrace>& traces);

}  // namespace cvqa
