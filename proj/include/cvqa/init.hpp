#pragma once

#include <random>

#include "cvqa/tensor.hpp"

namespace cvqa {

// Fan-in-scaled normal draws, std = sqrt(2 / fan_in).
inline Tensor he_normal(Shape shape, int64_t fan_in, std::mt19937_64& rng) {
  Tensor t = Tensor::zeros(std::move(shape));
  std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  for (double& v : t.values()) v = normal(rng);
  return t;
}

}  // namespace cvqa
