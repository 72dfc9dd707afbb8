#pragma once

// Differentiable operations over `Tensor`. Every op computes its forward value
// eagerly and records a backward rule that accumulates into its inputs' gradients.

#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "sgear/diff/tensor.hpp"

namespace sgear::diff {

namespace detail {

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()) + " differ");
  }
}

inline void require_rank(const Tensor& a, std::size_t rank, const char* op) {
  if (a.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         ", got shape " + shape_str(a.shape()));
  }
}

inline void require_scalar(const Tensor& s, const char* op) {
  if (s.size() != 1) {
    throw DimensionError(std::string(op) + ": expected a single-element tensor, got " +
                         shape_str(s.shape()));
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return detail::make_result("add", a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (auto* g = detail::parent_grad(self, k)) {
        for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
      }
    }
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return detail::make_result("sub", a.shape(), std::move(out), {a, b}, [](Node& self) {
    if (auto* g = detail::parent_grad(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    }
    if (auto* g = detail::parent_grad(self, 1)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] -= self.grad[i];
    }
  });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return detail::make_result("mul", a.shape(), std::move(out), {a, b}, [](Node& self) {
    const auto& av = self.parents[0]->value;
    const auto& bv = self.parents[1]->value;
    if (auto* g = detail::parent_grad(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * bv[i];
    }
    if (auto* g = detail::parent_grad(self, 1)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * av[i];
    }
  });
}

inline Tensor scale(const Tensor& a, double c) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * c;
  return detail::make_result("scale", a.shape(), std::move(out), {a}, [c](Node& self) {
    if (auto* g = detail::parent_grad(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * c;
    }
  });
}

/// s * x for a single-element tensor s.
inline Tensor mul_scalar(const Tensor& s, const Tensor& x) {
  detail::require_scalar(s, "mul_scalar");
  const double sv = s[0];
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = sv * x[i];
  return detail::make_result("mul_scalar", x.shape(), std::move(out), {s, x}, [](Node& self) {
    const double sv = self.parents[0]->value[0];
    const auto& xv = self.parents[1]->value;
    if (auto* g = detail::parent_grad(self, 0)) {
      double acc = 0.0;
      for (std::size_t i = 0; i < xv.size(); ++i) acc += self.grad[i] * xv[i];
      (*g)[0] += acc;
    }
    if (auto* g = detail::parent_grad(self, 1)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * sv;
    }
  });
}

/// s * a + (1 - s) * b for a single-element tensor s.
inline Tensor lerp(const Tensor& s, const Tensor& a, const Tensor& b) {
  detail::require_scalar(s, "lerp");
  detail::require_same_shape(a, b, "lerp");
  const double sv = s[0];
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = sv * a[i] + (1.0 - sv) * b[i];
  return detail::make_result("lerp", a.shape(), std::move(out), {s, a, b}, [](Node& self) {
    const double sv = self.parents[0]->value[0];
    const auto& av = self.parents[1]->value;
    const auto& bv = self.parents[2]->value;
    if (auto* g = detail::parent_grad(self, 0)) {
      double acc = 0.0;
      for (std::size_t i = 0; i < av.size(); ++i) acc += self.grad[i] * (av[i] - bv[i]);
      (*g)[0] += acc;
    }
    if (auto* g = detail::parent_grad(self, 1)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * sv;
    }
    if (auto* g = detail::parent_grad(self, 2)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * (1.0 - sv);
    }
  });
}

/// x + bias, with bias broadcast over every leading index of x.
inline Tensor add_bias(const Tensor& x, const Tensor& bias) {
  detail::require_rank(bias, 1, "add_bias");
  const std::size_t c = bias.size();
  if (x.shape().back() != c) {
    throw DimensionError("add_bias: last extent of " + shape_str(x.shape()) +
                         " does not match bias " + shape_str(bias.shape()));
  }
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + bias[i % c];
  return detail::make_result("add_bias", x.shape(), std::move(out), {x, bias}, [c](Node& self) {
    if (auto* g = detail::parent_grad(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    }
    if (auto* g = detail::parent_grad(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i % c] += self.grad[i];
    }
  });
}

// ---------------------------------------------------------------------------
// Activations

inline Tensor sigmoid(const Tensor& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-x[i]));
  return detail::make_result("sigmoid", x.shape(), std::move(out), {x}, [](Node& self) {
    if (auto* g = detail::parent_grad(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) {
        const double y = self.value[i];
        (*g)[i] += self.grad[i] * y * (1.0 - y);
      }
    }
  });
}

/// Exact (erf-based) GELU.
inline Tensor gelu(const Tensor& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = 0.5 * x[i] * (1.0 + std::erf(x[i] / std::numbers::sqrt2));
  }
  return detail::make_result("gelu", x.shape(), std::move(out), {x}, [](Node& self) {
    if (auto* g = detail::parent_grad(self, 0)) {
      const auto& xv = self.parents[0]->value;
      for (std::size_t i = 0; i < g->size(); ++i) {
        const double cdf = 0.5 * (1.0 + std::erf(xv[i] / std::numbers::sqrt2));
        const double pdf = std::exp(-0.5 * xv[i] * xv[i]) / std::sqrt(2.0 * std::numbers::pi);
        (*g)[i] += self.grad[i] * (cdf + xv[i] * pdf);
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Shape manipulation

inline Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_size(shape) != x.size()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  return detail::make_result("reshape", std::move(shape), x.values(), {x}, [](Node& self) {
    if (auto* g = detail::parent_grad(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    }
  });
}

/// out.flat[i] = x.flat[indices[i]]; the gradient scatters back additively.
inline Tensor take(const Tensor& x, std::vector<std::size_t> indices, Shape shape) {
  if (shape_size(shape) != indices.size()) {
    throw DimensionError("take: " + std::to_string(indices.size()) + " indices for shape " +
                         shape_str(shape));
  }
  std::vector<double> out(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= x.size()) {
      throw IndexError("take: index " + std::to_string(indices[i]) + " outside tensor of size " +
                       std::to_string(x.size()));
    }
    out[i] = x[indices[i]];
  }
  return detail::make_result(
      "take", std::move(shape), std::move(out), {x},
      [idx = std::move(indices)](Node& self) {
        if (auto* g = detail::parent_grad(self, 0)) {
          for (std::size_t i = 0; i < idx.size(); ++i) (*g)[idx[i]] += self.grad[i];
        }
      });
}

inline Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& rows) {
  detail::require_rank(x, 2, "gather_rows");
  const std::size_t n = x.dim(0), c = x.dim(1);
  std::vector<std::size_t> idx;
  idx.reserve(rows.size() * c);
  for (auto r : rows) {
    if (r >= n) {
      throw IndexError("gather_rows: row " + std::to_string(r) + " of " + std::to_string(n));
    }
    for (std::size_t j = 0; j < c; ++j) idx.push_back(r * c + j);
  }
  if (rows.empty()) throw DimensionError("gather_rows: empty row list");
  return take(x, std::move(idx), {rows.size(), c});
}

inline Tensor slice_rows(const Tensor& x, std::size_t start, std::size_t count) {
  detail::require_rank(x, 2, "slice_rows");
  if (count == 0 || start + count > x.dim(0)) {
    throw DimensionError("slice_rows: rows [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") outside " + shape_str(x.shape()));
  }
  std::vector<std::size_t> rows(count);
  std::iota(rows.begin(), rows.end(), start);
  return gather_rows(x, rows);
}

inline Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count) {
  detail::require_rank(x, 2, "slice_cols");
  const std::size_t n = x.dim(0), c = x.dim(1);
  if (count == 0 || start + count > c) {
    throw DimensionError("slice_cols: cols [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") outside " + shape_str(x.shape()));
  }
  std::vector<std::size_t> idx;
  idx.reserve(n * count);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < count; ++j) idx.push_back(i * c + start + j);
  }
  return take(x, std::move(idx), {n, count});
}

/// Stacks rank-2 tensors with equal column counts along axis 0.
inline Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: nothing to concatenate");
  const std::size_t c = parts[0].shape().back();
  std::size_t rows = 0;
  std::vector<double> out;
  for (const auto& p : parts) {
    detail::require_rank(p, 2, "concat_rows");
    if (p.dim(1) != c) {
      throw DimensionError("concat_rows: " + shape_str(p.shape()) + " vs " + std::to_string(c) +
                           " columns");
    }
    rows += p.dim(0);
    out.insert(out.end(), p.data().begin(), p.data().end());
  }
  return detail::make_result("concat_rows", {rows, c}, std::move(out), parts, [](Node& self) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      const std::size_t n = self.parents[k]->value.size();
      if (auto* g = detail::parent_grad(self, k)) {
        for (std::size_t i = 0; i < n; ++i) (*g)[i] += self.grad[offset + i];
      }
      offset += n;
    }
  });
}

/// Joins rank-2 tensors with equal row counts along axis 1.
inline Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: nothing to concatenate");
  const std::size_t n = parts[0].dim(0);
  std::size_t cols = 0;
  for (const auto& p : parts) {
    detail::require_rank(p, 2, "concat_cols");
    if (p.dim(0) != n) {
      throw DimensionError("concat_cols: " + shape_str(p.shape()) + " vs " + std::to_string(n) +
                           " rows");
    }
    cols += p.dim(1);
  }
  std::vector<double> out(n * cols);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t c = p.dim(1);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < c; ++j) out[i * cols + offset + j] = p[i * c + j];
    }
    offset += c;
  }
  return detail::make_result("concat_cols", {n, cols}, std::move(out), parts, [n, cols](Node& self) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      const std::size_t c = self.parents[k]->shape[1];
      if (auto* g = detail::parent_grad(self, k)) {
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < c; ++j) (*g)[i * c + j] += self.grad[i * cols + offset + j];
        }
      }
      offset += c;
    }
  });
}

inline Tensor transpose(const Tensor& x) {
  detail::require_rank(x, 2, "transpose");
  const std::size_t r = x.dim(0), c = x.dim(1);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = x[i * c + j];
  }
  return detail::make_result("transpose", {c, r}, std::move(out), {x}, [r, c](Node& self) {
    if (auto* g = detail::parent_grad(self, 0)) {
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) (*g)[i * c + j] += self.grad[j * r + i];
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Matrix product

/// Matrix product over the last two axes. Rank-3 operands carry a leading batch
/// extent; a rank-2 operand (or batch extent 1) broadcasts across the other's batch.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  auto fail = [&] {
    throw DimensionError("matmul: shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()) + " are incompatible");
  };
  if (a.rank() < 2 || a.rank() > 3 || b.rank() < 2 || b.rank() > 3) fail();
  const std::size_t ba = a.rank() == 3 ? a.dim(0) : 1;
  const std::size_t bb = b.rank() == 3 ? b.dim(0) : 1;
  if (ba != bb && ba != 1 && bb != 1) fail();
  const std::size_t n = a.dim(a.rank() - 2), k = a.dim(a.rank() - 1);
  const std::size_t k2 = b.dim(b.rank() - 2), m = b.dim(b.rank() - 1);
  if (k != k2) fail();
  const std::size_t batch = std::max(ba, bb);
  const bool batched = a.rank() == 3 || b.rank() == 3;

  std::vector<double> out(batch * n * m, 0.0);
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t s = 0; s < batch; ++s) {
    const double* A = av.data() + (ba == 1 ? 0 : s * n * k);
    const double* B = bv.data() + (bb == 1 ? 0 : s * k * m);
    double* C = out.data() + s * n * m;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t p = 0; p < k; ++p) {
        const double aip = A[i * k + p];
        for (std::size_t j = 0; j < m; ++j) C[i * m + j] += aip * B[p * m + j];
      }
    }
  }
  Shape shape = batched ? Shape{batch, n, m} : Shape{n, m};
  return detail::make_result(
      "matmul", std::move(shape), std::move(out), {a, b}, [=](Node& self) {
        const auto& av = self.parents[0]->value;
        const auto& bv = self.parents[1]->value;
        auto* ga = detail::parent_grad(self, 0);
        auto* gb = detail::parent_grad(self, 1);
        for (std::size_t s = 0; s < batch; ++s) {
          const double* G = self.grad.data() + s * n * m;
          const std::size_t ao = ba == 1 ? 0 : s * n * k;
          const std::size_t bo = bb == 1 ? 0 : s * k * m;
          if (ga) {
            for (std::size_t i = 0; i < n; ++i) {
              for (std::size_t p = 0; p < k; ++p) {
                double acc = 0.0;
                for (std::size_t j = 0; j < m; ++j) acc += G[i * m + j] * bv[bo + p * m + j];
                (*ga)[ao + i * k + p] += acc;
              }
            }
          }
          if (gb) {
            for (std::size_t i = 0; i < n; ++i) {
              for (std::size_t p = 0; p < k; ++p) {
                const double aip = av[ao + i * k + p];
                for (std::size_t j = 0; j < m; ++j) (*gb)[bo + p * m + j] += aip * G[i * m + j];
              }
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Normalizations

/// Softmax along the last axis, stabilized by subtracting each row's maximum.
inline Tensor softmax(const Tensor& x) {
  const std::size_t c = x.shape().back();
  const std::size_t rows = x.size() / c;
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.data().data() + r * c;
    double* o = out.data() + r * c;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j) mx = std::max(mx, in[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < c; ++j) sum += (o[j] = std::exp(in[j] - mx));
    for (std::size_t j = 0; j < c; ++j) o[j] /= sum;
  }
  return detail::make_result("softmax", x.shape(), std::move(out), {x}, [rows, c](Node& self) {
    if (auto* g = detail::parent_grad(self, 0)) {
      for (std::size_t r = 0; r < rows; ++r) {
        const double* y = self.value.data() + r * c;
        const double* gy = self.grad.data() + r * c;
        double dot = 0.0;
        for (std::size_t j = 0; j < c; ++j) dot += gy[j] * y[j];
        for (std::size_t j = 0; j < c; ++j) (*g)[r * c + j] += y[j] * (gy[j] - dot);
      }
    }
  });
}

/// Row-wise softmax of an n x m score matrix where row i only sees columns j <= i.
/// Masked entries are exactly zero and receive exactly zero gradient.
inline Tensor causal_softmax(const Tensor& x) {
  detail::require_rank(x, 2, "causal_softmax");
  const std::size_t n = x.dim(0), m = x.dim(1);
  std::vector<double> out(x.size(), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t width = std::min(i + 1, m);
    const double* in = x.data().data() + i * m;
    double* o = out.data() + i * m;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < width; ++j) mx = std::max(mx, in[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < width; ++j) sum += (o[j] = std::exp(in[j] - mx));
    for (std::size_t j = 0; j < width; ++j) o[j] /= sum;
  }
  return detail::make_result("causal_softmax", x.shape(), std::move(out), {x}, [n, m](Node& self) {
    if (auto* g = detail::parent_grad(self, 0)) {
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t width = std::min(i + 1, m);
        const double* y = self.value.data() + i * m;
        const double* gy = self.grad.data() + i * m;
        double dot = 0.0;
        for (std::size_t j = 0; j < width; ++j) dot += gy[j] * y[j];
        for (std::size_t j = 0; j < width; ++j) (*g)[i * m + j] += y[j] * (gy[j] - dot);
      }
    }
  });
}

/// Normalizes the last axis to zero mean and unit variance, then applies gain and bias.
inline Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                         double eps = 1e-5) {
  const std::size_t c = x.shape().back();
  if (gain.size() != c || bias.size() != c) {
    throw DimensionError("layer_norm: input " + shape_str(x.shape()) + " with gain " +
                         shape_str(gain.shape()) + " and bias " + shape_str(bias.shape()));
  }
  const std::size_t rows = x.size() / c;
  std::vector<double> out(x.size());
  std::vector<double> xhat(x.size());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.data().data() + r * c;
    double mean = 0.0;
    for (std::size_t j = 0; j < c; ++j) mean += in[j];
    mean /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (in[j] - mean) * (in[j] - mean);
    var /= static_cast<double>(c);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) {
      xhat[r * c + j] = (in[j] - mean) * inv_std[r];
      out[r * c + j] = xhat[r * c + j] * gain[j] + bias[j];
    }
  }
  return detail::make_result(
      "layer_norm", x.shape(), std::move(out), {x, gain, bias},
      [rows, c, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
        const auto& gv = self.parents[1]->value;
        auto* gx = detail::parent_grad(self, 0);
        auto* gg = detail::parent_grad(self, 1);
        auto* gbias = detail::parent_grad(self, 2);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* gy = self.grad.data() + r * c;
          const double* xh = xhat.data() + r * c;
          if (gg || gbias) {
            for (std::size_t j = 0; j < c; ++j) {
              if (gg) (*gg)[j] += gy[j] * xh[j];
              if (gbias) (*gbias)[j] += gy[j];
            }
          }
          if (gx) {
            double sum_d = 0.0, sum_dx = 0.0;
            for (std::size_t j = 0; j < c; ++j) {
              const double dxh = gy[j] * gv[j];
              sum_d += dxh;
              sum_dx += dxh * xh[j];
            }
            const double inv_c = 1.0 / static_cast<double>(c);
            for (std::size_t j = 0; j < c; ++j) {
              const double dxh = gy[j] * gv[j];
              (*gx)[r * c + j] += inv_std[r] * (dxh - inv_c * sum_d - xh[j] * inv_c * sum_dx);
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Reductions and losses

inline Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return detail::make_result("sum", {1}, {s}, {x}, [](Node& self) {
    if (auto* g = detail::parent_grad(self, 0)) {
      for (auto& v : *g) v += self.grad[0];
    }
  });
}

inline Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.size())); }

/// Mean absolute difference over all elements.
inline Tensor l1_mean(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "l1_mean");
  const double inv_n = 1.0 / static_cast<double>(a.size());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return detail::make_result("l1_mean", {1}, {s * inv_n}, {a, b}, [inv_n](Node& self) {
    const auto& av = self.parents[0]->value;
    const auto& bv = self.parents[1]->value;
    const double g0 = self.grad[0] * inv_n;
    for (std::size_t k = 0; k < 2; ++k) {
      if (auto* g = detail::parent_grad(self, k)) {
        const double sign_k = k == 0 ? 1.0 : -1.0;
        for (std::size_t i = 0; i < av.size(); ++i) {
          const double d = av[i] - bv[i];
          const double sg = d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0);
          (*g)[i] += sign_k * sg * g0;
        }
      }
    }
  });
}

/// Mean squared difference over all elements.
inline Tensor mse(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "mse");
  const double inv_n = 1.0 / static_cast<double>(a.size());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return detail::make_result("mse", {1}, {s * inv_n}, {a, b}, [inv_n](Node& self) {
    const auto& av = self.parents[0]->value;
    const auto& bv = self.parents[1]->value;
    const double g0 = 2.0 * self.grad[0] * inv_n;
    if (auto* g = detail::parent_grad(self, 0)) {
      for (std::size_t i = 0; i < av.size(); ++i) (*g)[i] += g0 * (av[i] - bv[i]);
    }
    if (auto* g = detail::parent_grad(self, 1)) {
      for (std::size_t i = 0; i < av.size(); ++i) (*g)[i] -= g0 * (av[i] - bv[i]);
    }
  });
}

/// Euclidean distance ||a - b||, smoothed by `eps` inside the root so it stays differentiable at 0.
inline Tensor l2_distance(const Tensor& a, const Tensor& b, double eps = 1e-12) {
  detail::require_same_shape(a, b, "l2_distance");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  const double dist = std::sqrt(s + eps);
  return detail::make_result("l2_distance", {1}, {dist}, {a, b}, [](Node& self) {
    const auto& av = self.parents[0]->value;
    const auto& bv = self.parents[1]->value;
    const double g0 = self.grad[0] / self.value[0];
    if (auto* g = detail::parent_grad(self, 0)) {
      for (std::size_t i = 0; i < av.size(); ++i) (*g)[i] += g0 * (av[i] - bv[i]);
    }
    if (auto* g = detail::parent_grad(self, 1)) {
      for (std::size_t i = 0; i < av.size(); ++i) (*g)[i] -= g0 * (av[i] - bv[i]);
    }
  });
}

/// -log softmax(logits)[target] for a single row of K logits (shape {K} or {1, K}).
inline Tensor cross_entropy(const Tensor& logits, std::size_t target) {
  const std::size_t k = logits.size();
  if (logits.rank() > 2 || (logits.rank() == 2 && logits.dim(0) != 1)) {
    throw DimensionError("cross_entropy: expected one row of logits, got " +
                         shape_str(logits.shape()));
  }
  if (target >= k) {
    throw IndexError("cross_entropy: target " + std::to_string(target) + " outside [0, " +
                     std::to_string(k) + ")");
  }
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : logits.data()) mx = std::max(mx, v);
  double z = 0.0;
  for (double v : logits.data()) z += std::exp(v - mx);
  const double lse = mx + std::log(z);
  return detail::make_result(
      "cross_entropy", {1}, {lse - logits[target]}, {logits}, [target, lse](Node& self) {
        if (auto* g = detail::parent_grad(self, 0)) {
          const auto& lv = self.parents[0]->value;
          for (std::size_t j = 0; j < lv.size(); ++j) {
            const double p = std::exp(lv[j] - lse);
            (*g)[j] += self.grad[0] * (p - (j == target ? 1.0 : 0.0));
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Cosine similarity

inline constexpr double kCosineEps = 1e-8;

/// out[i][j] = <a_i, b_j> / max(|a_i| |b_j|, eps) for rows of a (n x d) and b (m x d).
inline Tensor cosine_matrix(const Tensor& a, const Tensor& b, double eps = kCosineEps) {
  detail::require_rank(a, 2, "cosine_matrix");
  detail::require_rank(b, 2, "cosine_matrix");
  const std::size_t n = a.dim(0), m = b.dim(0), d = a.dim(1);
  if (b.dim(1) != d) {
    throw DimensionError("cosine_matrix: shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()) + " have different widths");
  }
  std::vector<double> na(n), nb(m), dots(n * m), out(n * m);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < d; ++k) s += a[i * d + k] * a[i * d + k];
    na[i] = std::sqrt(s);
  }
  for (std::size_t j = 0; j < m; ++j) {
    double s = 0.0;
    for (std::size_t k = 0; k < d; ++k) s += b[j * d + k] * b[j * d + k];
    nb[j] = std::sqrt(s);
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) s += a[i * d + k] * b[j * d + k];
      dots[i * m + j] = s;
      out[i * m + j] = s / std::max(na[i] * nb[j], eps);
    }
  }
  return detail::make_result(
      "cosine_matrix", {n, m}, std::move(out), {a, b},
      [=, na = std::move(na), nb = std::move(nb), dots = std::move(dots)](Node& self) {
        const auto& av = self.parents[0]->value;
        const auto& bv = self.parents[1]->value;
        auto* ga = detail::parent_grad(self, 0);
        auto* gb = detail::parent_grad(self, 1);
        // c = s / D with D = |a||b| (unclamped):
        //   dc/da = b / D - s |b| a / (|a| D^2), symmetric for b. A clamped D is constant.
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < m; ++j) {
            const double gij = self.grad[i * m + j];
            if (gij == 0.0) continue;
            const double prod = na[i] * nb[j];
            const double den = std::max(prod, eps);
            const double s = dots[i * m + j];
            const bool clamped = prod <= eps;
            const double coef_a = clamped ? 0.0 : s * nb[j] / (na[i] * den * den);
            const double coef_b = clamped ? 0.0 : s * na[i] / (nb[j] * den * den);
            for (std::size_t k = 0; k < d; ++k) {
              const double aik = av[i * d + k], bjk = bv[j * d + k];
              if (ga) (*ga)[i * d + k] += gij * (bjk / den - coef_a * aik);
              if (gb) (*gb)[j * d + k] += gij * (aik / den - coef_b * bjk);
            }
          }
        }
      });
}

/// Cosine similarity of two vectors of equal length, as a single-element tensor.
inline Tensor cosine_sim(const Tensor& a, const Tensor& b, double eps = kCosineEps) {
  if (a.size() != b.size()) {
    throw DimensionError("cosine_sim: shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  return reshape(cosine_matrix(reshape(a, {1, a.size()}), reshape(b, {1, b.size()}), eps), {1});
}

}  // namespace sgear::diff
