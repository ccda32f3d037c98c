#include "cvqa/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace cvqa {

GradCheckResult finite_diff_check(const std::function<Tensor()>& loss_fn,
                                  ParamStore& params, double step) {
  params.zero_grad();
  Tensor loss = loss_fn();
  backward(loss);

  const auto names = params.trainable_names();
  std::vector<std::vector<double>> analytic;
  analytic.reserve(names.size());
  for (const auto& name : names) analytic.push_back(params.get(name).grad());

  GradCheckResult result;
  for (size_t p = 0; p < names.size(); ++p) {
    auto& values = params.get(names[p]).values();
    for (size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + step;
      const double up = loss_fn().item();
      values[i] = saved - step;
      const double down = loss_fn().item();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[p][i];
      const double rel = std::abs(a - numeric) /
                         std::max({std::abs(a), std::abs(numeric), 1e-8});
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_param = names[p];
        result.worst_index = static_cast<int64_t>(i);
        result.analytic = a;
        result.numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace cvqa
