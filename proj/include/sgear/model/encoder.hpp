#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "sgear/data/feature_file.hpp"
#include "sgear/nn/layers.hpp"

namespace sgear::model {

using diff::Tensor;

/// Per-frame token features of one clip: frame t is a (P+1) x d tensor whose row 0 is
/// the class token.
struct ClipFeatures {
  std::vector<Tensor> frames;

  std::size_t length() const { return frames.size(); }
  std::size_t tokens() const { return frames.empty() ? 0 : frames[0].dim(0); }
  std::size_t dim() const { return frames.empty() ? 0 : frames[0].dim(1); }

  /// The class-token stream I0 as a T x d tensor.
  Tensor cls_view() const {
    std::vector<Tensor> rows;
    rows.reserve(frames.size());
    for (const auto& f : frames) rows.push_back(diff::slice_rows(f, 0, 1));
    return diff::concat_rows(rows);
  }

  /// All tokens stacked as T x (P+1) x d.
  Tensor stacked() const {
    return diff::reshape(diff::concat_rows(frames), {length(), tokens(), dim()});
  }
};

struct EncoderConfig {
  std::string mode = "vit-lite";  // "vit-lite" | "adapter"
  std::size_t patch_size = 2;
  std::size_t depth = 2;
  std::size_t heads = 2;
  std::size_t d = 64;
  std::size_t input_size = 4;   // square frames, vit-lite only
  std::size_t channels = 3;     // per-pixel values, vit-lite only
  std::size_t input_dim = 0;    // adapter input width; 0 means d
  std::size_t mlp_ratio = 4;

  bool adapter() const { return mode == "adapter"; }

  std::size_t num_patches() const {
    const std::size_t side = input_size / patch_size;
    return side * side;
  }

  void validate() const {
    if (mode != "vit-lite" && mode != "adapter") {
      throw ConfigError("encoder mode must be 'vit-lite' or 'adapter', got '" + mode + "'");
    }
    if (d == 0) throw ConfigError("encoder width must be positive");
    if (!adapter()) {
      if (patch_size == 0 || input_size == 0 || input_size % patch_size != 0) {
        throw ConfigError("input size " + std::to_string(input_size) +
                          " is not divisible by patch size " + std::to_string(patch_size));
      }
      if (heads == 0 || d % heads != 0) throw ConfigError("encoder heads must divide d");
    }
  }
};

/// Splits an H x W frame stored as (H*W) x C pixels into non-overlapping patch tokens,
/// row-major over patches; each token flattens its patch row-major with channels last.
inline Tensor patchify(const Tensor& frame, std::size_t height, std::size_t width,
                       std::size_t patch) {
  if (frame.rank() != 2 || frame.dim(0) != height * width) {
    throw DimensionError("patchify: frame " + diff::shape_str(frame.shape()) + " is not " +
                         std::to_string(height) + "x" + std::to_string(width) + " pixels");
  }
  if (patch == 0 || height % patch != 0 || width % patch != 0) {
    throw DimensionError("patchify: " + std::to_string(height) + "x" + std::to_string(width) +
                         " frame is not divisible into " + std::to_string(patch) + "x" +
                         std::to_string(patch) + " patches");
  }
  const std::size_t c = frame.dim(1);
  const std::size_t rows = height / patch, cols = width / patch;
  std::vector<std::size_t> idx;
  idx.reserve(frame.size());
  for (std::size_t pr = 0; pr < rows; ++pr) {
    for (std::size_t pc = 0; pc < cols; ++pc) {
      for (std::size_t y = 0; y < patch; ++y) {
        for (std::size_t x = 0; x < patch; ++x) {
          const std::size_t pixel = (pr * patch + y) * width + pc * patch + x;
          for (std::size_t ch = 0; ch < c; ++ch) idx.push_back(pixel * c + ch);
        }
      }
    }
  }
  return diff::take(frame, std::move(idx), {rows * cols, patch * patch * c});
}

/// Small ViT: linear patch embedding plus positional vectors, a prepended class token,
/// then `depth` pre-norm blocks applied to each frame on its own.
class VitLiteEncoder {
 public:
  VitLiteEncoder() = default;
  VitLiteEncoder(diff::ParameterStore& store, const EncoderConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg.validate();
    if (cfg.adapter()) throw ConfigError("VitLiteEncoder needs vit-lite mode");
    const std::size_t patch_dim = cfg.patch_size * cfg.patch_size * cfg.channels;
    embed_ = nn::Linear(store, "encoder.embed", patch_dim, cfg.d, rng);
    pos_ = store.add("encoder.pos", rng.normal_tensor({cfg.num_patches(), cfg.d}, 0.02));
    cls_ = store.add("encoder.cls", rng.normal_tensor({1, cfg.d}, 0.02));
    for (std::size_t b = 0; b < cfg.depth; ++b) {
      blocks_.emplace_back(store, "encoder.block" + std::to_string(b), cfg.d, cfg.heads,
                           cfg.mlp_ratio * cfg.d, rng);
    }
  }

  const EncoderConfig& config() const { return cfg_; }

  Tensor encode_frame(const Tensor& pixels) const {
    if (pixels.rank() != 2 || pixels.dim(1) != cfg_.channels) {
      throw DimensionError("encoder: frame " + diff::shape_str(pixels.shape()) + " does not have " +
                           std::to_string(cfg_.channels) + " channels");
    }
    Tensor x = diff::add(embed_(patchify(pixels, cfg_.input_size, cfg_.input_size, cfg_.patch_size)),
                         pos_);
    x = diff::concat_rows({cls_, x});
    for (const auto& b : blocks_) x = b(x);
    return x;
  }

  ClipFeatures encode(const std::vector<Tensor>& frames) const {
    ClipFeatures out;
    out.frames.reserve(frames.size());
    for (const auto& f : frames) out.frames.push_back(encode_frame(f));
    return out;
  }

  ClipFeatures encode(const data::FeatureArray& clip) const {
    if (clip.tokens != cfg_.input_size * cfg_.input_size || clip.dim != cfg_.channels) {
      throw DimensionError("encoder expects frames of " +
                           std::to_string(cfg_.input_size * cfg_.input_size) + " pixels x " +
                           std::to_string(cfg_.channels) + " channels, got " +
                           std::to_string(clip.tokens) + " x " + std::to_string(clip.dim));
    }
    std::vector<Tensor> frames;
    for (std::size_t t = 0; t < clip.frames; ++t) frames.push_back(clip.frame(t));
    return encode(frames);
  }

  const Tensor& positional() const { return pos_; }
  const Tensor& class_token() const { return cls_; }
  const nn::Linear& embedding() const { return embed_; }

 private:
  EncoderConfig cfg_;
  nn::Linear embed_;
  Tensor pos_;
  Tensor cls_;
  std::vector<nn::TransformerBlock> blocks_;
};

/// Channelwise mean and population standard deviation of a K x d prototype matrix.
struct PrototypeStats {
  std::vector<double> mean;
  std::vector<double> stddev;
};

inline constexpr double kStdFloor = 1e-6;

inline PrototypeStats prototype_stats(const Tensor& protos) {
  if (protos.rank() != 2) throw DimensionError("prototype statistics need a K x d matrix");
  const std::size_t k = protos.dim(0), d = protos.dim(1);
  PrototypeStats s{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < d; ++j) s.mean[j] += protos.at(i, j);
  for (auto& m : s.mean) m /= static_cast<double>(k);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      const double e = protos.at(i, j) - s.mean[j];
      s.stddev[j] += e * e;
    }
  }
  for (auto& v : s.stddev) v = std::max(kStdFloor, std::sqrt(v / static_cast<double>(k)));
  return s;
}

/// Maps pre-extracted T x d_in features to single-token frames normalized by the
/// visual prototype statistics: I_t = (lin(x_t) - mean) / std.
class FeatureAdapter {
 public:
  FeatureAdapter() = default;
  FeatureAdapter(diff::ParameterStore& store, const EncoderConfig& cfg) : cfg_(cfg) {
    cfg.validate();
    const std::size_t in = cfg.input_dim ? cfg.input_dim : cfg.d;
    // Identity-initialized where the shapes allow it.
    std::vector<double> w(in * cfg.d, 0.0);
    for (std::size_t i = 0; i < std::min(in, cfg.d); ++i) w[i * cfg.d + i] = 1.0;
    lin_.weight = store.add("adapter.weight", Tensor::from({in, cfg.d}, std::move(w)));
    lin_.bias = store.add("adapter.bias", Tensor::zeros({cfg.d}));
  }

  const EncoderConfig& config() const { return cfg_; }
  nn::Linear& linear() { return lin_; }

  ClipFeatures adapt(const Tensor& x, const std::optional<PrototypeStats>& stats) const {
    if (!stats) throw ConfigError("adapter mode needs visual prototype statistics");
    if (x.rank() != 2 || x.dim(1) != lin_.in_features()) {
      throw DimensionError("adapter: features " + diff::shape_str(x.shape()) + " do not have width " +
                           std::to_string(lin_.in_features()));
    }
    const std::size_t d = lin_.out_features();
    if (stats->mean.size() != d) throw DimensionError("adapter: statistics width mismatch");
    std::vector<double> inv(d);
    for (std::size_t j = 0; j < d; ++j) inv[j] = 1.0 / std::max(kStdFloor, stats->stddev[j]);
    std::vector<double> neg_mean(d);
    for (std::size_t j = 0; j < d; ++j) neg_mean[j] = -stats->mean[j];
    const Tensor shift = Tensor::from({d}, std::move(neg_mean));
    const Tensor scale_row = Tensor::from({d}, std::move(inv));

    Tensor y = diff::add_bias(lin_(x), shift);
    std::vector<double> tiled;
    tiled.reserve(x.dim(0) * d);
    for (std::size_t t = 0; t < x.dim(0); ++t) tiled.insert(tiled.end(), scale_row.data().begin(), scale_row.data().end());
    y = diff::mul(y, Tensor::from({x.dim(0), d}, std::move(tiled)));

    ClipFeatures out;
    for (std::size_t t = 0; t < x.dim(0); ++t) out.frames.push_back(diff::slice_rows(y, t, 1));
    return out;
  }

  ClipFeatures adapt(const data::FeatureArray& clip, const std::optional<PrototypeStats>& stats) const {
    if (clip.tokens != 1) {
      throw DimensionError("adapter expects one token per frame, got " + std::to_string(clip.tokens));
    }
    std::vector<double> v(clip.values.begin(), clip.values.end());
    return adapt(Tensor::from({clip.frames, clip.dim}, std::move(v)), stats);
  }

 private:
  EncoderConfig cfg_;
  nn::Linear lin_;
};

}  // namespace sgear::model
