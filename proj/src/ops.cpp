#include "cvqa/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cvqa/errors.hpp"

namespace cvqa {

namespace {

using detail::TensorNode;

Tensor make_op(Shape shape, std::vector<Tensor> inputs,
               std::function<void(TensorNode&)> backward_fn) {
  Tensor out = Tensor::zeros(std::move(shape));
  bool needs_grad = false;
  for (const Tensor& in : inputs) needs_grad = needs_grad || in.requires_grad();
  if (needs_grad) {
    out.set_requires_grad(true);
    auto* node = out.node();
    node->parents.reserve(inputs.size());
    for (const Tensor& in : inputs) node->parents.push_back(in.handle());
    node->backward_fn = std::move(backward_fn);
  }
  return out;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw UsageError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
  }
}

// Numerically stable logistic function, branching on the sign of x.
double stable_sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor unary_op(const Tensor& x, double (*fwd)(double),
                double (*dfdy)(double x, double y)) {
  Tensor out = make_op(x.shape(), {x}, [fwd, dfdy](TensorNode& node) {
    auto& parent = *node.parents[0];
    if (!parent.requires_grad) return;
    auto& pg = parent.grad_buffer();
    for (size_t i = 0; i < node.values.size(); ++i) {
      pg[i] += node.grad[i] * dfdy(parent.values[i], node.values[i]);
    }
  });
  const auto& xv = x.values();
  auto& ov = out.values();
  for (size_t i = 0; i < xv.size(); ++i) ov[i] = fwd(xv[i]);
  return out;
}

}  // namespace

Tensor relu(const Tensor& x) {
  // Subgradient at 0 is 0.
  return unary_op(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
  return unary_op(
      x, [](double v) { return stable_sigmoid(v); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh_op(const Tensor& x) {
  return unary_op(
      x, [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor sqrt_op(const Tensor& x) {
  for (double v : x.values()) {
    if (v < 0.0) throw UsageError("sqrt of negative value");
  }
  return unary_op(
      x, [](double v) { return std::sqrt(v); },
      [](double, double y) { return 0.5 / y; });
}

Tensor affine(const Tensor& x, double scale, double shift) {
  Tensor out = make_op(x.shape(), {x}, [scale](TensorNode& node) {
    auto& parent = *node.parents[0];
    if (!parent.requires_grad) return;
    auto& pg = parent.grad_buffer();
    for (size_t i = 0; i < node.values.size(); ++i) pg[i] += scale * node.grad[i];
  });
  const auto& xv = x.values();
  auto& ov = out.values();
  for (size_t i = 0; i < xv.size(); ++i) ov[i] = scale * xv[i] + shift;
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  Tensor out = make_op(a.shape(), {a, b}, [](TensorNode& node) {
    for (auto& parent : node.parents) {
      if (!parent->requires_grad) continue;
      auto& pg = parent->grad_buffer();
      for (size_t i = 0; i < node.values.size(); ++i) pg[i] += node.grad[i];
    }
  });
  const auto& av = a.values();
  const auto& bv = b.values();
  auto& ov = out.values();
  for (size_t i = 0; i < av.size(); ++i) ov[i] = av[i] + bv[i];
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  Tensor out = make_op(a.shape(), {a, b}, [](TensorNode& node) {
    auto& pa = *node.parents[0];
    auto& pb = *node.parents[1];
    if (pa.requires_grad) {
      auto& pg = pa.grad_buffer();
      for (size_t i = 0; i < node.values.size(); ++i) pg[i] += node.grad[i];
    }
    if (pb.requires_grad) {
      auto& pg = pb.grad_buffer();
      for (size_t i = 0; i < node.values.size(); ++i) pg[i] -= node.grad[i];
    }
  });
  const auto& av = a.values();
  const auto& bv = b.values();
  auto& ov = out.values();
  for (size_t i = 0; i < av.size(); ++i) ov[i] = av[i] - bv[i];
  return out;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "hadamard");
  Tensor out = make_op(a.shape(), {a, b}, [](TensorNode& node) {
    auto& pa = *node.parents[0];
    auto& pb = *node.parents[1];
    if (pa.requires_grad) {
      auto& pg = pa.grad_buffer();
      for (size_t i = 0; i < node.values.size(); ++i) pg[i] += node.grad[i] * pb.values[i];
    }
    if (pb.requires_grad) {
      auto& pg = pb.grad_buffer();
      for (size_t i = 0; i < node.values.size(); ++i) pg[i] += node.grad[i] * pa.values[i];
    }
  });
  const auto& av = a.values();
  const auto& bv = b.values();
  auto& ov = out.values();
  for (size_t i = 0; i < av.size(); ++i) ov[i] = av[i] * bv[i];
  return out;
}

Tensor div(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "div");
  Tensor out = make_op(a.shape(), {a, b}, [](TensorNode& node) {
    auto& pa = *node.parents[0];
    auto& pb = *node.parents[1];
    if (pa.requires_grad) {
      auto& pg = pa.grad_buffer();
      for (size_t i = 0; i < node.values.size(); ++i) pg[i] += node.grad[i] / pb.values[i];
    }
    if (pb.requires_grad) {
      auto& pg = pb.grad_buffer();
      for (size_t i = 0; i < node.values.size(); ++i) {
        pg[i] -= node.grad[i] * pa.values[i] / (pb.values[i] * pb.values[i]);
      }
    }
  });
  const auto& av = a.values();
  const auto& bv = b.values();
  auto& ov = out.values();
  for (size_t i = 0; i < av.size(); ++i) ov[i] = av[i] / bv[i];
  return out;
}

namespace {

// C (p x r) += A (p x q) * B (q x r), all row-major.
void gemm_acc(const double* a, const double* b, double* c, int64_t p, int64_t q, int64_t r) {
  for (int64_t i = 0; i < p; ++i) {
    const double* arow = a + i * q;
    double* crow = c + i * r;
    for (int64_t k = 0; k < q; ++k) {
      const double aik = arow[k];
      const double* brow = b + k * r;
      for (int64_t j = 0; j < r; ++j) crow[j] += aik * brow[j];
    }
  }
}

// C (p x r) += A^T (p x q stored as q x p) * B (q x r)
void gemm_at_b_acc(const double* a, const double* b, double* c, int64_t p, int64_t q, int64_t r) {
  for (int64_t k = 0; k < q; ++k) {
    const double* arow = a + k * p;
    const double* brow = b + k * r;
    for (int64_t i = 0; i < p; ++i) {
      const double aki = arow[i];
      double* crow = c + i * r;
      for (int64_t j = 0; j < r; ++j) crow[j] += aki * brow[j];
    }
  }
}

// C (p x r) += A (p x q) * B^T (q x r stored as r x q). Four partial sums
// keep a fixed summation order while letting the loop vectorize.
void gemm_a_bt_acc(const double* a, const double* b, double* c, int64_t p, int64_t q, int64_t r) {
  for (int64_t i = 0; i < p; ++i) {
    const double* arow = a + i * q;
    double* crow = c + i * r;
    for (int64_t j = 0; j < r; ++j) {
      const double* brow = b + j * q;
      double acc0 = 0.0, acc1 = 0.0, acc2 = 0.0, acc3 = 0.0;
      int64_t k = 0;
      for (; k + 4 <= q; k += 4) {
        acc0 += arow[k] * brow[k];
        acc1 += arow[k + 1] * brow[k + 1];
        acc2 += arow[k + 2] * brow[k + 2];
        acc3 += arow[k + 3] * brow[k + 3];
      }
      for (; k < q; ++k) acc0 += arow[k] * brow[k];
      crow[j] += (acc0 + acc1) + (acc2 + acc3);
    }
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || (b.rank() != 2 && b.rank() != 1)) {
    throw UsageError("matmul expects (p x q)·(q x r) or (p x q)·(q), got " +
                     shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  const int64_t p = a.dim(0);
  const int64_t q = a.dim(1);
  const bool vec = b.rank() == 1;
  const int64_t r = vec ? 1 : b.dim(1);
  if (b.dim(0) != q) {
    throw UsageError("matmul: inner dimensions disagree, " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
  }
  Shape out_shape = vec ? Shape{p} : Shape{p, r};
  Tensor out = make_op(std::move(out_shape), {a, b}, [p, q, r](TensorNode& node) {
    auto& pa = *node.parents[0];
    auto& pb = *node.parents[1];
    if (pa.requires_grad) {
      // dA += dC * B^T
      gemm_a_bt_acc(node.grad.data(), pb.values.data(), pa.grad_buffer().data(), p, r, q);
    }
    if (pb.requires_grad) {
      // dB += A^T * dC
      gemm_at_b_acc(pa.values.data(), node.grad.data(), pb.grad_buffer().data(), q, p, r);
    }
  });
  gemm_acc(a.values().data(), b.values().data(), out.values().data(), p, q, r);
  return out;
}

Tensor transpose(const Tensor& x) {
  if (x.rank() != 2) throw UsageError("transpose expects a 2-D tensor, got " + shape_str(x.shape()));
  const int64_t rows = x.dim(0);
  const int64_t cols = x.dim(1);
  Tensor out = make_op({cols, rows}, {x}, [rows, cols](TensorNode& node) {
    auto& parent = *node.parents[0];
    if (!parent.requires_grad) return;
    auto& pg = parent.grad_buffer();
    for (int64_t i = 0; i < cols; ++i) {
      for (int64_t j = 0; j < rows; ++j) pg[j * cols + i] += node.grad[i * rows + j];
    }
  });
  const auto& xv = x.values();
  auto& ov = out.values();
  for (int64_t i = 0; i < rows; ++i) {
    for (int64_t j = 0; j < cols; ++j) ov[j * rows + i] = xv[i * cols + j];
  }
  return out;
}

Tensor softmax(const Tensor& x, int axis) {
  if (x.rank() == 0 || x.rank() > 2 || axis < 0 || axis >= static_cast<int>(x.rank())) {
    throw UsageError("softmax: invalid axis " + std::to_string(axis) + " for shape " +
                     shape_str(x.shape()));
  }
  // View a 1-D tensor as a single row.
  const bool vec = x.rank() == 1;
  const int64_t rows = vec ? 1 : x.dim(0);
  const int64_t cols = vec ? x.dim(0) : x.dim(1);
  const bool along_cols = vec || axis == 1;  // normalize within each row

  const int64_t slices = along_cols ? rows : cols;
  const int64_t len = along_cols ? cols : rows;
  const int64_t stride = along_cols ? 1 : cols;
  const int64_t slice_stride = along_cols ? cols : 1;

  Tensor out = make_op(x.shape(), {x}, [slices, len, stride, slice_stride](TensorNode& node) {
    auto& parent = *node.parents[0];
    if (!parent.requires_grad) return;
    auto& pg = parent.grad_buffer();
    for (int64_t s = 0; s < slices; ++s) {
      const int64_t base = s * slice_stride;
      double dot = 0.0;
      for (int64_t i = 0; i < len; ++i) {
        const int64_t idx = base + i * stride;
        dot += node.grad[idx] * node.values[idx];
      }
      for (int64_t i = 0; i < len; ++i) {
        const int64_t idx = base + i * stride;
        pg[idx] += node.values[idx] * (node.grad[idx] - dot);
      }
    }
  });

  const auto& xv = x.values();
  auto& ov = out.values();
  for (int64_t s = 0; s < slices; ++s) {
    const int64_t base = s * slice_stride;
    double mx = xv[base];
    for (int64_t i = 1; i < len; ++i) mx = std::max(mx, xv[base + i * stride]);
    double total = 0.0;
    for (int64_t i = 0; i < len; ++i) {
      const int64_t idx = base + i * stride;
      ov[idx] = std::exp(xv[idx] - mx);
      total += ov[idx];
    }
    for (int64_t i = 0; i < len; ++i) ov[base + i * stride] /= total;
  }
  return out;
}

Tensor sum_all(const Tensor& x) {
  Tensor out = make_op({}, {x}, [](TensorNode& node) {
    auto& parent = *node.parents[0];
    if (!parent.requires_grad) return;
    auto& pg = parent.grad_buffer();
    for (size_t i = 0; i < pg.size(); ++i) pg[i] += node.grad[0];
  });
  double total = 0.0;
  for (double v : x.values()) total += v;
  out.values()[0] = total;
  return out;
}

Tensor sum_axis(const Tensor& x, int axis) {
  if (x.rank() != 2 || axis < 0 || axis > 1) {
    throw UsageError("sum_axis expects a 2-D tensor and axis 0 or 1, got " +
                     shape_str(x.shape()) + " axis " + std::to_string(axis));
  }
  const int64_t rows = x.dim(0);
  const int64_t cols = x.dim(1);
  const int64_t out_len = axis == 0 ? cols : rows;
  Tensor out = make_op({out_len}, {x}, [rows, cols, axis](TensorNode& node) {
    auto& parent = *node.parents[0];
    if (!parent.requires_grad) return;
    auto& pg = parent.grad_buffer();
    for (int64_t i = 0; i < rows; ++i) {
      for (int64_t j = 0; j < cols; ++j) {
        pg[i * cols + j] += node.grad[axis == 0 ? j : i];
      }
    }
  });
  const auto& xv = x.values();
  auto& ov = out.values();
  for (int64_t i = 0; i < rows; ++i) {
    for (int64_t j = 0; j < cols; ++j) ov[axis == 0 ? j : i] += xv[i * cols + j];
  }
  return out;
}

Tensor broadcast_row(const Tensor& p, int64_t rows) {
  if (p.rank() != 1) throw UsageError("broadcast_row expects a 1-D tensor, got " + shape_str(p.shape()));
  if (rows <= 0) throw UsageError("broadcast_row: row count must be positive");
  const int64_t cols = p.dim(0);
  Tensor out = make_op({rows, cols}, {p}, [rows, cols](TensorNode& node) {
    auto& parent = *node.parents[0];
    if (!parent.requires_grad) return;
    auto& pg = parent.grad_buffer();
    for (int64_t i = 0; i < rows; ++i) {
      for (int64_t j = 0; j < cols; ++j) pg[j] += node.grad[i * cols + j];
    }
  });
  const auto& pv = p.values();
  auto& ov = out.values();
  for (int64_t i = 0; i < rows; ++i) {
    std::copy(pv.begin(), pv.end(), ov.begin() + i * cols);
  }
  return out;
}

Tensor select_col(const Tensor& x, int64_t col) {
  if (x.rank() != 2) throw UsageError("select_col expects a 2-D tensor, got " + shape_str(x.shape()));
  const int64_t rows = x.dim(0);
  const int64_t cols = x.dim(1);
  if (col < 0 || col >= cols) throw UsageError("select_col: column index out of range");
  Tensor out = make_op({rows}, {x}, [rows, cols, col](TensorNode& node) {
    auto& parent = *node.parents[0];
    if (!parent.requires_grad) return;
    auto& pg = parent.grad_buffer();
    for (int64_t i = 0; i < rows; ++i) pg[i * cols + col] += node.grad[i];
  });
  const auto& xv = x.values();
  auto& ov = out.values();
  for (int64_t i = 0; i < rows; ++i) ov[i] = xv[i * cols + col];
  return out;
}

Tensor stack_cols(const std::vector<Tensor>& cols) {
  if (cols.empty()) throw UsageError("stack_cols: no columns given");
  const int64_t rows = cols[0].dim(0);
  for (const Tensor& c : cols) {
    if (c.rank() != 1 || c.dim(0) != rows) {
      throw UsageError("stack_cols: all columns must be 1-D of equal length");
    }
  }
  const int64_t m = static_cast<int64_t>(cols.size());
  Tensor out = make_op({rows, m}, cols, [rows, m](TensorNode& node) {
    for (int64_t j = 0; j < m; ++j) {
      auto& parent = *node.parents[j];
      if (!parent.requires_grad) continue;
      auto& pg = parent.grad_buffer();
      for (int64_t i = 0; i < rows; ++i) pg[i] += node.grad[i * m + j];
    }
  });
  auto& ov = out.values();
  for (int64_t j = 0; j < m; ++j) {
    const auto& cv = cols[j].values();
    for (int64_t i = 0; i < rows; ++i) ov[i * m + j] = cv[i];
  }
  return out;
}

Tensor embedding_cols(const Tensor& table, const std::vector<int>& ids) {
  if (table.rank() != 2) throw UsageError("embedding_cols expects a 2-D table");
  const int64_t vocab = table.dim(0);
  const int64_t dim = table.dim(1);
  for (int id : ids) {
    if (id < 0 || id >= vocab) {
      throw UsageError("embedding_cols: token index " + std::to_string(id) +
                       " outside vocabulary of size " + std::to_string(vocab));
    }
  }
  const int64_t m = static_cast<int64_t>(ids.size());
  Tensor out = make_op({dim, m}, {table}, [dim, m, ids](TensorNode& node) {
    auto& parent = *node.parents[0];
    if (!parent.requires_grad) return;
    auto& pg = parent.grad_buffer();
    for (int64_t j = 0; j < m; ++j) {
      double* row = pg.data() + static_cast<int64_t>(ids[j]) * dim;
      for (int64_t i = 0; i < dim; ++i) row[i] += node.grad[i * m + j];
    }
  });
  const auto& tv = table.values();
  auto& ov = out.values();
  for (int64_t j = 0; j < m; ++j) {
    const double* row = tv.data() + static_cast<int64_t>(ids[j]) * dim;
    for (int64_t i = 0; i < dim; ++i) ov[i * m + j] = row[i];
  }
  return out;
}

Tensor dropout(const Tensor& x, double p, bool training, std::mt19937_64& rng) {
  if (p < 0.0 || p >= 1.0) {
    throw UsageError("dropout probability must be in [0, 1), got " + std::to_string(p));
  }
  if (!training || p == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<double> mask(x.values().size());
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (double& m : mask) m = uni(rng) < p ? 0.0 : keep_scale;
  Tensor out = make_op(x.shape(), {x}, [mask](TensorNode& node) {
    auto& parent = *node.parents[0];
    if (!parent.requires_grad) return;
    auto& pg = parent.grad_buffer();
    for (size_t i = 0; i < node.values.size(); ++i) pg[i] += node.grad[i] * mask[i];
  });
  const auto& xv = x.values();
  auto& ov = out.values();
  for (size_t i = 0; i < xv.size(); ++i) ov[i] = xv[i] * mask[i];
  return out;
}

Tensor weight_norm(const Tensor& v, const Tensor& g) {
  if (v.rank() != 2 || g.rank() != 1 || g.dim(0) != v.dim(0)) {
    throw UsageError("weight_norm expects v (r x c) and g (r), got " +
                     shape_str(v.shape()) + " and " + shape_str(g.shape()));
  }
  const int64_t rows = v.dim(0);
  const int64_t cols = v.dim(1);
  std::vector<double> norms(rows);
  for (int64_t i = 0; i < rows; ++i) {
    double sq = 0.0;
    for (int64_t j = 0; j < cols; ++j) {
      double val = v.values()[i * cols + j];
      sq += val * val;
    }
    if (sq == 0.0) {
      throw UsageError("weight_norm: row " + std::to_string(i) + " has zero norm");
    }
    norms[i] = std::sqrt(sq);
  }
  Tensor out = make_op(v.shape(), {v, g}, [rows, cols, norms](TensorNode& node) {
    auto& pv = *node.parents[0];
    auto& pg_param = *node.parents[1];
    for (int64_t i = 0; i < rows; ++i) {
      const double inv_norm = 1.0 / norms[i];
      const double gain = pg_param.values[i];
      double dot = 0.0;  // sum_j dW_ij * v_ij
      for (int64_t j = 0; j < cols; ++j) {
        dot += node.grad[i * cols + j] * pv.values[i * cols + j];
      }
      if (pg_param.requires_grad) {
        pg_param.grad_buffer()[i] += dot * inv_norm;
      }
      if (pv.requires_grad) {
        auto& vg = pv.grad_buffer();
        const double coef = gain * dot * inv_norm * inv_norm * inv_norm;
        for (int64_t j = 0; j < cols; ++j) {
          vg[i * cols + j] += gain * inv_norm * node.grad[i * cols + j] -
                              coef * pv.values[i * cols + j];
        }
      }
    }
  });
  auto& ov = out.values();
  const auto& vv = v.values();
  const auto& gv = g.values();
  for (int64_t i = 0; i < rows; ++i) {
    const double scale = gv[i] / norms[i];
    for (int64_t j = 0; j < cols; ++j) ov[i * cols + j] = scale * vv[i * cols + j];
  }
  return out;
}

Tensor bce_with_logits(const Tensor& scores, const Tensor& labels) {
  check_same_shape(scores, labels, "bce_with_logits");
  for (double y : labels.values()) {
    if (y < 0.0 || y > 1.0 || !std::isfinite(y)) {
      throw UsageError("bce_with_logits: labels must lie in [0, 1]");
    }
  }
  Tensor out = make_op({}, {scores, labels}, [](TensorNode& node) {
    auto& ps = *node.parents[0];
    auto& pl = *node.parents[1];
    if (!ps.requires_grad) return;
    auto& pg = ps.grad_buffer();
    for (size_t i = 0; i < ps.values.size(); ++i) {
      pg[i] += node.grad[0] * (stable_sigmoid(ps.values[i]) - pl.values[i]);
    }
  });
  // Stable form: max(s, 0) - s*y + log(1 + exp(-|s|))
  const auto& sv = scores.values();
  const auto& yv = labels.values();
  double total = 0.0;
  for (size_t i = 0; i < sv.size(); ++i) {
    total += std::max(sv[i], 0.0) - sv[i] * yv[i] + std::log1p(std::exp(-std::abs(sv[i])));
  }
  out.values()[0] = total;
  return out;
}

Tensor cross_entropy_logits(const Tensor& logits, int64_t target_index) {
  if (logits.rank() != 1) {
    throw UsageError("cross_entropy_logits expects a 1-D logit vector, got " +
                     shape_str(logits.shape()));
  }
  const int64_t n = logits.dim(0);
  if (target_index < 0 || target_index >= n) {
    throw UsageError("cross_entropy_logits: target index out of range");
  }
  const auto& lv = logits.values();
  double mx = lv[0];
  for (double v : lv) mx = std::max(mx, v);
  double total = 0.0;
  std::vector<double> probs(lv.size());
  for (size_t i = 0; i < lv.size(); ++i) {
    probs[i] = std::exp(lv[i] - mx);
    total += probs[i];
  }
  for (double& p : probs) p /= total;

  Tensor out = make_op({}, {logits}, [probs, target_index](TensorNode& node) {
    auto& parent = *node.parents[0];
    if (!parent.requires_grad) return;
    auto& pg = parent.grad_buffer();
    for (size_t i = 0; i < probs.size(); ++i) {
      double delta = static_cast<int64_t>(i) == target_index ? 1.0 : 0.0;
      pg[i] += node.grad[0] * (probs[i] - delta);
    }
  });
  out.values()[0] = std::log(total) + mx - lv[target_index];
  return out;
}

}  // namespace cvqa
