#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "cvqa/tensor.hpp"

namespace cvqa {

// Elementwise
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh_op(const Tensor& x);
Tensor sqrt_op(const Tensor& x);
Tensor affine(const Tensor& x, double scale, double shift);  // scale * x + shift

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

// Linear algebra. matmul accepts (p x q)·(q x r) or (p x q)·(q) -> (p).
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);

// softmax along `axis` of a 1-D or 2-D tensor, max-subtracted.
Tensor softmax(const Tensor& x, int axis);

// Reductions
Tensor sum_all(const Tensor& x);                // -> scalar
Tensor sum_axis(const Tensor& x, int axis);     // 2-D -> 1-D

// Structure
Tensor broadcast_row(const Tensor& p, int64_t rows);        // (K) -> rows x K, every row p
Tensor select_col(const Tensor& x, int64_t col);            // 2-D -> 1-D column
Tensor stack_cols(const std::vector<Tensor>& cols);         // m vectors of length r -> r x m
Tensor embedding_cols(const Tensor& table, const std::vector<int>& ids);  // (V x E), m ids -> E x m

// Regularization
Tensor dropout(const Tensor& x, double p, bool training, std::mt19937_64& rng);
// Per-row reparameterization w_r = g_r * v_r / ||v_r||; rows are output units.
Tensor weight_norm(const Tensor& v, const Tensor& g);

// Losses (labels/targets are constants; gradients flow into the score inputs)
Tensor bce_with_logits(const Tensor& scores, const Tensor& labels);        // -> scalar
Tensor cross_entropy_logits(const Tensor& logits, int64_t target_index);   // 1-D -> scalar

}  // namespace cvqa
