#include "cvqa/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "cvqa/errors.hpp"

namespace cvqa {

MetricsReport evaluate(const std::vector<std::vector<double>>& scores,
                       const std::vector<std::unordered_map<int64_t, double>>& truth,
                       EvalMode mode) {
  if (scores.empty()) throw UsageError("evaluate: empty evaluation set");
  if (scores.size() != truth.size()) {
    throw UsageError("evaluate: got " + std::to_string(scores.size()) + " score rows but " +
                     std::to_string(truth.size()) + " truth rows");
  }

  double top1_total = 0.0;
  double top5_total = 0.0;
  for (size_t q = 0; q < scores.size(); ++q) {
    const auto& row = scores[q];
    if (row.empty()) throw UsageError("evaluate: question " + std::to_string(q) + " has no scores");

    std::unordered_map<int64_t, double> soft = truth[q];
    if (mode == EvalMode::kExact) {
      int64_t best = -1;
      double best_val = -1.0;
      for (const auto& [idx, val] : truth[q]) {
        if (val > best_val || (val == best_val && idx < best)) {
          best = idx;
          best_val = val;
        }
      }
      soft.clear();
      if (best >= 0) soft[best] = 1.0;
    }

    // Rank candidates by score, ties by lower index.
    std::vector<int64_t> order(row.size());
    std::iota(order.begin(), order.end(), 0);
    const size_t k = std::min<size_t>(5, order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<int64_t>(k), order.end(),
                      [&](int64_t a, int64_t b) {
                        return row[static_cast<size_t>(a)] != row[static_cast<size_t>(b)]
                                   ? row[static_cast<size_t>(a)] > row[static_cast<size_t>(b)]
                                   : a < b;
                      });
    auto score_of = [&](int64_t idx) {
      auto it = soft.find(idx);
      return it == soft.end() ? 0.0 : it->second;
    };
    top1_total += score_of(order[0]);
    double best5 = 0.0;
    for (size_t i = 0; i < k; ++i) best5 = std::max(best5, score_of(order[i]));
    top5_total += best5;
  }

  MetricsReport report;
  report.questions = static_cast<int64_t>(scores.size());
  report.top1 = top1_total / static_cast<double>(report.questions);
  report.top5 = top5_total / static_cast<double>(report.questions);
  return report;
}

namespace {

std::string fmt_opt(const std::optional<double>& v) {
  if (!v) return "";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", *v);
  return buf;
}

}  // namespace

std::string traces_to_csv(const std::vector<EpochTrace>& traces) {
  std::ostringstream os;
  os << "epoch,split,loss_a,loss_b,loss_ab,loss_n,loss_an,top1,top5\n";
  for (const auto& t : traces) {
    os << t.epoch << "," << t.split << "," << fmt_opt(t.loss_a) << "," << fmt_opt(t.loss_b)
       << "," << fmt_opt(t.loss_ab) << "," << fmt_opt(t.loss_n) << "," << fmt_opt(t.loss_an)
       << "," << fmt_opt(t.top1) << "," << fmt_opt(t.top5) << "\n";
  }
  return os.str();
}

void write_traces_csv(const std::string& path, const std::vector<EpochTrace>& traces) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write metrics CSV to '" + path + "'");
  os << traces_to_csv(traces);
}

}  // namespace cvqa
