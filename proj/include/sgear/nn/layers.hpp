#pragma once

// Transformer building blocks shared by the encoder, the aggregator and the decoder.

#include <cmath>
#include <string>
#include <vector>

#include "sgear/diff/ops.hpp"
#include "sgear/diff/parameter.hpp"
#include "sgear/diff/random.hpp"

namespace sgear::nn {

using diff::Tensor;

/// y = x W + b with W stored as (in x out).
struct Linear {
  Tensor weight;
  Tensor bias;

  Linear() = default;
  Linear(diff::ParameterStore& store, const std::string& name, std::size_t in, std::size_t out,
         Rng& rng) {
    weight = store.add(name + ".weight",
                       rng.normal_tensor({in, out}, 1.0 / std::sqrt(static_cast<double>(in))));
    bias = store.add(name + ".bias", Tensor::zeros({out}));
  }

  std::size_t in_features() const { return weight.dim(0); }
  std::size_t out_features() const { return weight.dim(1); }

  Tensor operator()(const Tensor& x) const { return diff::add_bias(diff::matmul(x, weight), bias); }
};

struct LayerNorm {
  Tensor gain;
  Tensor bias;

  LayerNorm() = default;
  LayerNorm(diff::ParameterStore& store, const std::string& name, std::size_t d) {
    gain = store.add(name + ".gain", Tensor::full({d}, 1.0));
    bias = store.add(name + ".bias", Tensor::zeros({d}));
  }

  Tensor operator()(const Tensor& x) const { return diff::layer_norm(x, gain, bias); }
};

/// Two-layer perceptron with a GELU in between.
struct Mlp {
  Linear fc1;
  Linear fc2;

  Mlp() = default;
  Mlp(diff::ParameterStore& store, const std::string& name, std::size_t d, std::size_t hidden,
      Rng& rng)
      : fc1(store, name + ".fc1", d, hidden, rng), fc2(store, name + ".fc2", hidden, d, rng) {}

  Tensor operator()(const Tensor& x) const { return fc2(diff::gelu(fc1(x))); }
};

/// Scaled dot-product attention over column-split heads.
///
/// q is n x d, k and v are m x d. Each head h uses columns [h*dh, (h+1)*dh) and scores
/// q_h k_h^T * scale. With `causal`, query i only attends to keys j <= i.
inline Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                                   std::size_t heads, double scale, bool causal = false) {
  const std::size_t d = q.dim(1);
  if (heads == 0 || d % heads != 0) {
    throw ConfigError("attention: " + std::to_string(heads) + " heads do not divide width " +
                      std::to_string(d));
  }
  if (k.dim(1) != d || v.dim(1) != d || k.dim(0) != v.dim(0)) {
    throw DimensionError("attention: q " + diff::shape_str(q.shape()) + ", k " +
                         diff::shape_str(k.shape()) + ", v " + diff::shape_str(v.shape()));
  }
  const std::size_t dh = d / heads;
  std::vector<Tensor> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    Tensor qh = heads == 1 ? q : diff::slice_cols(q, h * dh, dh);
    Tensor kh = heads == 1 ? k : diff::slice_cols(k, h * dh, dh);
    Tensor vh = heads == 1 ? v : diff::slice_cols(v, h * dh, dh);
    Tensor scores = diff::scale(diff::matmul(qh, diff::transpose(kh)), scale);
    Tensor weights = causal ? diff::causal_softmax(scores) : diff::softmax(scores);
    outs.push_back(diff::matmul(weights, vh));
  }
  return heads == 1 ? outs[0] : diff::concat_cols(outs);
}

/// Query/key/value/output projections around `multi_head_attention`.
struct SelfAttention {
  Linear wq, wk, wv, wo;
  std::size_t heads = 1;

  SelfAttention() = default;
  SelfAttention(diff::ParameterStore& store, const std::string& name, std::size_t d,
                std::size_t n_heads, Rng& rng)
      : wq(store, name + ".wq", d, d, rng),
        wk(store, name + ".wk", d, d, rng),
        wv(store, name + ".wv", d, d, rng),
        wo(store, name + ".wo", d, d, rng),
        heads(n_heads) {
    if (n_heads == 0 || d % n_heads != 0) {
      throw ConfigError(name + ": " + std::to_string(n_heads) + " heads do not divide width " +
                        std::to_string(d));
    }
  }

  double scale() const {
    return 1.0 / std::sqrt(static_cast<double>(wq.out_features() / heads));
  }

  Tensor operator()(const Tensor& x, bool causal) const {
    return wo(multi_head_attention(wq(x), wk(x), wv(x), heads, scale(), causal));
  }
};

/// Pre-norm transformer block: x + attn(ln1(x)), then + mlp(ln2(x)).
struct TransformerBlock {
  LayerNorm ln1;
  SelfAttention attn;
  LayerNorm ln2;
  Mlp mlp;

  TransformerBlock() = default;
  TransformerBlock(diff::ParameterStore& store, const std::string& name, std::size_t d,
                   std::size_t heads, std::size_t mlp_hidden, Rng& rng)
      : ln1(store, name + ".ln1", d),
        attn(store, name + ".attn", d, heads, rng),
        ln2(store, name + ".ln2", d),
        mlp(store, name + ".mlp", d, mlp_hidden, rng) {}

  Tensor operator()(const Tensor& x, bool causal = false) const {
    Tensor h = diff::add(x, attn(ln1(x), causal));
    return diff::add(h, mlp(ln2(h)));
  }
};

}  // namespace sgear::nn
