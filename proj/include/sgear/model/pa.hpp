#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "sgear/model/semantic.hpp"

namespace sgear::model {

/// R[t][j] = cos(I0_t, P[j]) on detached inputs; the result only drives a discrete choice.
inline Tensor frame_relative_repr(const Tensor& cls_stream, const Tensor& protos) {
  if (cls_stream.rank() != 2 || cls_stream.dim(1) != protos.dim(1)) {
    throw DimensionError("frame_relative_repr: stream " + diff::shape_str(cls_stream.shape()) +
                         " vs prototypes " + diff::shape_str(protos.shape()));
  }
  return diff::cosine_matrix(cls_stream.detach(), protos.detach());
}

/// Indices of the k largest entries of each row of R (ties to the lower column), restricted
/// to `candidates` when given. Returned per frame in frame order.
inline std::vector<std::vector<std::size_t>> select_prototypes(const Tensor& r, std::size_t k,
                                                               const std::vector<std::size_t>* candidates = nullptr) {
  const std::size_t t = r.dim(0), cols = r.dim(1);
  std::vector<std::size_t> pool;
  if (candidates) {
    pool = *candidates;
  } else {
    pool.resize(cols);
    std::iota(pool.begin(), pool.end(), 0);
  }
  if (k == 0 || k > pool.size()) {
    throw ConfigError("cannot select " + std::to_string(k) + " of " + std::to_string(pool.size()) +
                      " prototypes");
  }
  std::vector<std::vector<std::size_t>> out(t);
  for (std::size_t i = 0; i < t; ++i) {
    auto order = pool;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const double va = r.at(i, a), vb = r.at(i, b);
      return va > vb || (va == vb && a < b);
    });
    out[i].assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  }
  return out;
}

inline std::vector<std::size_t> flatten_selection(const std::vector<std::vector<std::size_t>>& sel) {
  std::vector<std::size_t> flat;
  for (const auto& s : sel) flat.insert(flat.end(), s.begin(), s.end());
  return flat;
}

/// Index into the weight vector for entry (i, j) of a Toeplitz matrix built for
/// a matrix with `cols` columns: w_{j-i} on and above the diagonal, w_{(cols-1)+(i-j)} below.
inline std::size_t toeplitz_index(std::size_t i, std::size_t j, std::size_t cols) {
  return j >= i ? j - i : (cols - 1) + (i - j);
}

/// T x m matrix whose diagonals are the T + m - 1 entries of `weights`.
inline Tensor build_toeplitz(const Tensor& weights, std::size_t t, std::size_t m) {
  if (t == 0 || m == 0 || weights.size() != t + m - 1) {
    throw ConfigError("Toeplitz " + std::to_string(t) + "x" + std::to_string(m) + " needs " +
                      std::to_string(t + m - 1) + " weights, got " + std::to_string(weights.size()));
  }
  std::vector<std::size_t> idx;
  idx.reserve(t * m);
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t j = 0; j < m; ++j) idx.push_back(toeplitz_index(i, j, m));
  return diff::take(weights, std::move(idx), {t, m});
}

/// Toeplitz matrix of another size from weights laid out for `t0` x `m0`. Offsets beyond
/// the trained range reuse the outermost diagonal on that side.
inline Tensor resize_toeplitz(const Tensor& weights, std::size_t t0, std::size_t m0, std::size_t t,
                              std::size_t m) {
  if (weights.size() != t0 + m0 - 1) throw ConfigError("Toeplitz weights do not match trained size");
  std::vector<std::size_t> idx;
  idx.reserve(t * m);
  for (std::size_t i = 0; i < t; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      idx.push_back(j >= i ? std::min(j - i, m0 - 1) : (m0 - 1) + std::min(i - j, t0 - 1));
    }
  }
  return diff::take(weights, std::move(idx), {t, m});
}

enum class PaScale { kD, kSqrtD };

/// (sig(beta) softmax(Q K^T / s) + (1 - sig(beta)) Delta) V with s = d or sqrt(d).
inline Tensor pa_mix(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& toeplitz,
                     const Tensor& beta, PaScale scale = PaScale::kD) {
  if (q.dim(1) != k.dim(1) || k.dim(0) != v.dim(0) || toeplitz.dim(0) != q.dim(0) ||
      toeplitz.dim(1) != k.dim(0)) {
    throw DimensionError("prototype attention: q " + diff::shape_str(q.shape()) + ", k " +
                         diff::shape_str(k.shape()) + ", v " + diff::shape_str(v.shape()) +
                         ", Toeplitz " + diff::shape_str(toeplitz.shape()));
  }
  const double d = static_cast<double>(q.dim(1));
  const double s = scale == PaScale::kD ? 1.0 / d : 1.0 / std::sqrt(d);
  const Tensor attn = diff::softmax(diff::scale(diff::matmul(q, diff::transpose(k)), s));
  return diff::matmul(diff::lerp(diff::sigmoid(beta), attn, toeplitz), v);
}

/// I_hat = sig(lambda) I_bar0 + (1 - sig(lambda)) I_tilde.
inline Tensor merge_streams(const Tensor& ibar0, const Tensor& itilde, const Tensor& lambda) {
  if (ibar0.shape() != itilde.shape()) {
    throw DimensionError("merge: " + diff::shape_str(ibar0.shape()) + " vs " +
                         diff::shape_str(itilde.shape()));
  }
  return diff::lerp(diff::sigmoid(lambda), ibar0, itilde);
}

struct PaOutput {
  Tensor itilde;                                  // T x d
  std::vector<std::vector<std::size_t>> selected;  // per-frame prototype indices
};

/// Prototype attention: class tokens query the top-k prototypes of every frame, mixed
/// with a learnable Toeplitz order prior.
class PaBlock {
 public:
  PaBlock() = default;
  PaBlock(diff::ParameterStore& store, std::size_t d, std::size_t frames, std::size_t k,
          PaScale scale, Rng& rng)
      : wq_(store, "pa.wq", d, d, rng),
        wk_(store, "pa.wk", d, d, rng),
        wv_(store, "pa.wv", d, d, rng),
        wo_(store, "pa.wo", d, d, rng),
        frames_(frames),
        k_(k),
        scale_(scale) {
    if (frames == 0 || k == 0) throw ConfigError("prototype attention needs T >= 1 and k >= 1");
    toe_ = store.add("pa.toeplitz", Tensor::zeros({frames + frames * k - 1}));
    beta_ = store.add("pa.beta", Tensor::scalar(0.0));
    lambda_ = store.add("pa.lambda", Tensor::scalar(0.0));
  }

  std::size_t frames() const { return frames_; }
  std::size_t k() const { return k_; }
  const Tensor& toeplitz_weights() const { return toe_; }
  const Tensor& beta() const { return beta_; }
  const Tensor& lambda() const { return lambda_; }

  /// Delta for a T' x (T' k) value sequence; the trained layout when T' = T.
  Tensor toeplitz(std::size_t t) const {
    if (t == frames_) return build_toeplitz(toe_, frames_, frames_ * k_);
    return resize_toeplitz(toe_, frames_, frames_ * k_, t, t * k_);
  }

  /// `selected`, when given, fixes the prototype choice instead of recomputing it.
  PaOutput operator()(const Tensor& cls_stream, const Tensor& protos, const PrototypeSubset& subset,
                      const std::vector<std::vector<std::size_t>>* selected = nullptr) const {
    PaOutput out;
    if (selected) {
      out.selected = *selected;
    } else {
      const Tensor r = frame_relative_repr(cls_stream, protos);
      out.selected = select_prototypes(r, k_, subset.full() ? nullptr : &subset.indices);
    }
    const Tensor seq = diff::gather_rows(protos, flatten_selection(out.selected));
    const Tensor mixed = pa_mix(wq_(cls_stream), wk_(seq), wv_(seq), toeplitz(cls_stream.dim(0)), beta_, scale_);
    out.itilde = wo_(mixed);
    return out;
  }

 private:
  nn::Linear wq_, wk_, wv_, wo_;
  Tensor toe_, beta_, lambda_;
  std::size_t frames_ = 0;
  std::size_t k_ = 1;
  PaScale scale_ = PaScale::kD;
};

}  // namespace sgear::model
