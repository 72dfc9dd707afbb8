#pragma once

#include <cmath>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "sgear/model/encoder.hpp"

namespace sgear::model {

/// K_hat_0 = K_0, K_hat_t = K_t + alpha[t-1] * K_hat_{t-1}, token-aligned. `alpha` is a
/// vector of T-1 weights.
inline std::vector<Tensor> accumulate_history(const std::vector<Tensor>& seq, const Tensor& alpha) {
  if (seq.empty()) throw DimensionError("history accumulation needs at least one frame");
  if (seq.size() == 1) return seq;
  if (alpha.size() != seq.size() - 1) {
    throw ConfigError("history weights: expected " + std::to_string(seq.size() - 1) +
                      " values for " + std::to_string(seq.size()) + " frames, got " +
                      std::to_string(alpha.size()));
  }
  std::vector<Tensor> out;
  out.reserve(seq.size());
  out.push_back(seq[0]);
  for (std::size_t t = 1; t < seq.size(); ++t) {
    Tensor a = diff::take(alpha, {t - 1}, {1});
    out.push_back(diff::add(seq[t], diff::mul_scalar(a, out.back())));
  }
  return out;
}

inline std::pair<std::vector<Tensor>, std::vector<Tensor>> aggregate_kv(
    const std::vector<Tensor>& keys, const std::vector<Tensor>& values, const Tensor& alpha) {
  if (keys.size() != values.size()) throw DimensionError("aggregate_kv: key/value frame counts differ");
  return {accumulate_history(keys, alpha), accumulate_history(values, alpha)};
}

/// Causal aggregator block: each frame's queries attend over keys and values that
/// carry a weighted running sum of all earlier frames, wrapped in a pre-norm
/// residual block with an MLP.
class TcaBlock {
 public:
  TcaBlock() = default;
  TcaBlock(diff::ParameterStore& store, const std::string& name, std::size_t d, std::size_t heads,
           std::size_t mlp_hidden, std::size_t frames, Rng& rng)
      : ln1_(store, name + ".ln1", d),
        attn_(store, name + ".attn", d, heads, rng),
        ln2_(store, name + ".ln2", d),
        mlp_(store, name + ".mlp", d, mlp_hidden, rng) {
    if (frames == 0) throw ConfigError(name + ": clip length must be positive");
    // A single-frame model has no history weights; keep a placeholder entry.
    alpha_ = store.add(name + ".alpha", Tensor::full({std::max<std::size_t>(1, frames - 1)}, 1.0));
    frames_ = frames;
  }

  std::size_t frames() const { return frames_; }
  const Tensor& alpha() const { return alpha_; }
  const nn::SelfAttention& attention() const { return attn_; }

  /// Runs on T' <= T frames, using the first T'-1 history weights.
  std::vector<Tensor> operator()(const std::vector<Tensor>& x) const {
    const std::size_t n = x.size();
    if (n == 0 || n > frames_) {
      throw ConfigError("TCA block built for " + std::to_string(frames_) + " frames got " +
                        std::to_string(n));
    }
    std::vector<Tensor> q, k, v;
    for (const auto& f : x) {
      Tensor h = ln1_(f);
      q.push_back(attn_.wq(h));
      k.push_back(attn_.wk(h));
      v.push_back(attn_.wv(h));
    }
    std::vector<Tensor> khat = k, vhat = v;
    if (n > 1) {
      std::vector<std::size_t> first(n - 1);
      std::iota(first.begin(), first.end(), 0);
      std::tie(khat, vhat) = aggregate_kv(k, v, diff::take(alpha_, std::move(first), {n - 1}));
    }
    std::vector<Tensor> out;
    out.reserve(n);
    for (std::size_t t = 0; t < n; ++t) {
      Tensor att = nn::multi_head_attention(q[t], khat[t], vhat[t], attn_.heads, attn_.scale());
      Tensor h = diff::add(x[t], attn_.wo(att));
      out.push_back(diff::add(h, mlp_(ln2_(h))));
    }
    return out;
  }

 private:
  nn::LayerNorm ln1_;
  nn::SelfAttention attn_;
  nn::LayerNorm ln2_;
  nn::Mlp mlp_;
  Tensor alpha_;
  std::size_t frames_ = 0;
};

/// A stack of aggregator blocks, each with its own history weights.
class TcaStack {
 public:
  TcaStack() = default;
  TcaStack(diff::ParameterStore& store, std::size_t blocks, std::size_t d, std::size_t heads,
           std::size_t mlp_hidden, std::size_t frames, Rng& rng) {
    for (std::size_t b = 0; b < blocks; ++b) {
      blocks_.emplace_back(store, "tca.block" + std::to_string(b), d, heads, mlp_hidden, frames, rng);
    }
  }

  std::size_t size() const { return blocks_.size(); }
  const TcaBlock& block(std::size_t i) const { return blocks_.at(i); }

  ClipFeatures operator()(const ClipFeatures& in) const {
    ClipFeatures out = in;
    for (const auto& b : blocks_) out.frames = b(out.frames);
    return out;
  }

 private:
  std::vector<TcaBlock> blocks_;
};

}  // namespace sgear::model
