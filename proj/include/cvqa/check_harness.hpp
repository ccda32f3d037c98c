#pragma once

#include <cstdint>

#include "cvqa/gradcheck.hpp"

namespace cvqa {

// Toy-dimension finite-difference check of the full pipeline: L_base
// (attribute BCE + base BCE + distance) through backbone and head, and
// L_novel restricted to the novel embeddings with everything else frozen.
struct BackboneCheckConfig {
  int64_t c_dim = 8;
  int64_t m = 3;
  int64_t n_objects = 4;
  int64_t d_obj = 5;
  int64_t n_attrs = 6;
  int64_t glimpses = 2;
  double lambda = 0.1;
  uint64_t seed = 12;
  double step = 1e-5;
};

struct BackboneCheckResult {
  GradCheckResult base;
  GradCheckResult novel;
  double max_rel_error() const {
    return base.max_rel_error > novel.max_rel_error ? base.max_rel_error : novel.max_rel_error;
  }
};

BackboneCheckResult check_backbone_gradients(const BackboneCheckConfig& config);

}  // namespace cvqa
