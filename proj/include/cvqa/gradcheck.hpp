#pragma once

#include <functional>
#include <string>
#include <vector>

#include "cvqa/param_store.hpp"

namespace cvqa {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  int64_t worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Central-difference check of reverse-mode gradients for a deterministic
// scalar function of the store's trainable parameters. The closure must
// rebuild its graph on every call and must not use dropout. Relative error
// per coordinate is |a - n| / max(|a|, |n|, 1e-8).
GradCheckResult finite_diff_check(const std::function<Tensor()>& loss_fn,
                                  ParamStore& params, double step = 1e-5);

}  // namespace cvqa
