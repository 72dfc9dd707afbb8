#pragma once

#include <string>
#include <vector>

#include "sgear/nn/layers.hpp"

namespace sgear::model {

using diff::Tensor;

struct DecoderConfig {
  std::size_t layers = 2;
  std::size_t heads = 2;
  std::size_t mlp_hidden = 128;
  std::size_t d = 64;
  std::size_t max_rollout = 16;  // rollout steps allowed past the trained length

  void validate() const {
    if (d == 0 || heads == 0 || d % heads != 0) {
      throw ConfigError("decoder heads (" + std::to_string(heads) + ") must divide d (" +
                        std::to_string(d) + ")");
    }
  }
};

struct Rollout {
  Tensor inputs;   // (T + n) x d: the original sequence followed by re-injected predictions
  Tensor outputs;  // (T + n) x d
};

/// Causal transformer over a T x d sequence with learnable positions and a final norm.
class CausalDecoder {
 public:
  CausalDecoder() = default;
  CausalDecoder(diff::ParameterStore& store, const DecoderConfig& cfg, std::size_t frames, Rng& rng)
      : cfg_(cfg), frames_(frames) {
    cfg.validate();
    if (frames == 0) throw ConfigError("decoder needs at least one position");
    pos_ = store.add("decoder.pos", rng.normal_tensor({frames, cfg.d}, 0.02));
    for (std::size_t l = 0; l < cfg.layers; ++l) {
      blocks_.emplace_back(store, "decoder.block" + std::to_string(l), cfg.d, cfg.heads,
                           cfg.mlp_hidden, rng);
    }
    norm_ = nn::LayerNorm(store, "decoder.norm", cfg.d);
  }

  const DecoderConfig& config() const { return cfg_; }
  std::size_t frames() const { return frames_; }
  const Tensor& positional() const { return pos_; }

  /// Positions past the trained length reuse the last trained vector.
  Tensor positions(std::size_t n) const {
    if (n > frames_ + cfg_.max_rollout) {
      throw ConfigError("decoder sequence of " + std::to_string(n) + " exceeds " +
                        std::to_string(frames_) + " trained positions plus " +
                        std::to_string(cfg_.max_rollout) + " rollout steps");
    }
    std::vector<std::size_t> rows(n);
    for (std::size_t i = 0; i < n; ++i) rows[i] = std::min(i, frames_ - 1);
    return diff::gather_rows(pos_, rows);
  }

  Tensor decode(const Tensor& ihat) const {
    if (ihat.rank() != 2 || ihat.dim(1) != cfg_.d) {
      throw DimensionError("decoder input " + diff::shape_str(ihat.shape()) + " is not T x " +
                           std::to_string(cfg_.d));
    }
    Tensor x = diff::add(ihat, positions(ihat.dim(0)));
    for (const auto& b : blocks_) x = b(x, true);
    return norm_(x);
  }

  /// Appends the last prediction as the next input `steps` times, re-decoding each time.
  Rollout rollout(const Tensor& ihat, std::size_t steps) const {
    Rollout r{ihat, decode(ihat)};
    for (std::size_t s = 0; s < steps; ++s) {
      const Tensor last = diff::slice_rows(r.outputs, r.outputs.dim(0) - 1, 1);
      r.inputs = diff::concat_rows({r.inputs, last});
      r.outputs = decode(r.inputs);
    }
    return r;
  }

 private:
  DecoderConfig cfg_;
  std::size_t frames_ = 0;
  Tensor pos_;
  std::vector<nn::TransformerBlock> blocks_;
  nn::LayerNorm norm_;
};

}  // namespace sgear::model
