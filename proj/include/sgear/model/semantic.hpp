#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "sgear/diff/ops.hpp"
#include "sgear/diff/random.hpp"
#include "sgear/nn/layers.hpp"

namespace sgear::model {

using diff::Tensor;

/// Number of prototypes compared against at a given subset ratio: ceil(ratio * K).
inline std::size_t subset_size(std::size_t k, double ratio) {
  if (!(ratio > 0.0 && ratio <= 1.0)) {
    throw ConfigError("prototype subset ratio must lie in (0, 1], got " + std::to_string(ratio));
  }
  // The small slack keeps products like 0.3 * 10 from rounding up to 4.
  const auto n = static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(k) - 1e-9));
  return std::clamp<std::size_t>(n, 1, k);
}

/// The fixed set of prototype indices used for relative representations.
struct PrototypeSubset {
  std::size_t classes = 0;
  std::vector<std::size_t> indices;  // ascending

  bool full() const { return indices.size() == classes; }
  std::size_t size() const { return indices.size(); }

  static PrototypeSubset all(std::size_t k) {
    PrototypeSubset s{k, std::vector<std::size_t>(k)};
    std::iota(s.indices.begin(), s.indices.end(), 0);
    return s;
  }

  /// Uniform sample of ceil(ratio * K) indices, fixed by `seed`.
  static PrototypeSubset sample(std::size_t k, double ratio, std::uint64_t seed) {
    const std::size_t n = subset_size(k, ratio);
    if (n == k) return all(k);
    std::vector<std::size_t> pool(k);
    std::iota(pool.begin(), pool.end(), 0);
    PrototypeSubset s{k, {}};
    std::mt19937_64 gen(seed);
    std::sample(pool.begin(), pool.end(), std::back_inserter(s.indices), n, gen);
    std::sort(s.indices.begin(), s.indices.end());
    return s;
  }

  /// Rows of `protos` in the subset (the tensor itself when the subset is full).
  Tensor rows(const Tensor& protos) const {
    if (protos.dim(0) != classes) {
      throw DimensionError("subset over " + std::to_string(classes) + " classes applied to " +
                           std::to_string(protos.dim(0)) + " prototypes");
    }
    return full() ? protos : diff::gather_rows(protos, indices);
  }
};

/// A K x d matrix of per-class prototypes.
struct ProtoStore {
  std::string kind = "visual";  // "visual" | "language"
  Tensor protos;
  std::vector<std::string> class_names;
  bool frozen = false;

  std::size_t classes() const { return protos.dim(0); }
  std::size_t dim() const { return protos.dim(1); }
};

/// Cosine similarities of each row of x against the subset's prototypes.
inline Tensor relative_repr(const Tensor& x, const Tensor& protos, const PrototypeSubset& subset) {
  const Tensor row = x.rank() == 1 ? diff::reshape(x, {1, x.size()}) : x;
  if (row.dim(1) != protos.dim(1)) {
    throw DimensionError("relative representation: embedding width " + std::to_string(row.dim(1)) +
                         " vs prototype width " + std::to_string(protos.dim(1)));
  }
  return diff::cosine_matrix(row, subset.rows(protos));
}

/// Cached self-similarity of the language store; row y is the relative representation
/// of class y's label encoding.
class LanguageTargets {
 public:
  LanguageTargets() = default;
  explicit LanguageTargets(const Tensor& language) : k_(language.dim(0)) {
    sim_ = diff::cosine_matrix(language.detach(), language.detach()).values();
  }

  std::size_t classes() const { return k_; }
  double at(std::size_t y, std::size_t j) const { return sim_[y * k_ + j]; }

  Tensor row(std::size_t y, const PrototypeSubset& subset) const {
    if (y >= k_) {
      throw IndexError("language target for class " + std::to_string(y) + " of " + std::to_string(k_));
    }
    std::vector<double> v;
    v.reserve(subset.size());
    for (auto j : subset.indices) v.push_back(at(y, j));
    return Tensor::from({1, subset.size()}, std::move(v));
  }

 private:
  std::size_t k_ = 0;
  std::vector<double> sim_;
};

/// z_bar = softmax(cos(z, P_sub)) P_sub and z_hat = sig(alpha) z + (1 - sig(alpha)) z_bar,
/// row by row for an n x d input.
inline Tensor cosine_attention(const Tensor& z, const Tensor& protos, const Tensor& alpha,
                               const PrototypeSubset& subset) {
  const Tensor sub = subset.rows(protos);
  const Tensor zbar = diff::matmul(diff::softmax(diff::cosine_matrix(z, sub)), sub);
  return diff::lerp(diff::sigmoid(alpha), z, zbar);
}

struct Classification {
  Tensor logits;
  std::vector<double> probabilities;
};

inline Classification classify(const Tensor& zhat, const nn::Linear& head) {
  Classification c;
  c.logits = head(zhat);
  c.probabilities = diff::softmax(c.logits.detach()).values();
  return c;
}

/// Mean |cos(detach(z), P_sub) - target|: only the prototypes receive gradient.
inline Tensor loss_sem(const Tensor& z, const Tensor& protos, const Tensor& target,
                       const PrototypeSubset& subset) {
  return diff::l1_mean(relative_repr(z.detach(), protos, subset), target);
}

/// ||z - detach(P[y])||^2 / d: only z receives gradient.
inline Tensor loss_reg(const Tensor& z, const Tensor& protos, std::size_t y) {
  if (y >= protos.dim(0)) {
    throw IndexError("regularization target " + std::to_string(y) + " of " +
                     std::to_string(protos.dim(0)) + " classes");
  }
  const Tensor row = z.rank() == 1 ? diff::reshape(z, {1, z.size()}) : z;
  return diff::mse(row, diff::gather_rows(protos.detach(), {y}));
}

/// A loss term that may have had nothing to sum over.
struct OptionalLoss {
  Tensor value;
  bool empty = false;
};

/// Sum of per-step cross-entropies; `labels[t]` is the class step t should predict.
inline OptionalLoss loss_past(const Tensor& logits, const std::vector<std::optional<std::size_t>>& labels) {
  OptionalLoss out;
  std::vector<Tensor> terms;
  for (std::size_t t = 0; t < labels.size() && t < logits.dim(0); ++t) {
    if (labels[t]) terms.push_back(diff::cross_entropy(diff::slice_rows(logits, t, 1), *labels[t]));
  }
  if (terms.empty()) {
    out.value = Tensor::scalar(0.0);
    out.empty = true;
    return out;
  }
  out.value = terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) out.value = diff::add(out.value, terms[i]);
  return out;
}

enum class FeatLoss { kMse, kL2 };

/// Sum over t < T-1 of the distance between z_t and detach(I_hat_{t+1}).
inline OptionalLoss loss_feat(const Tensor& zeta, const Tensor& ihat, FeatLoss kind = FeatLoss::kMse) {
  if (zeta.shape() != ihat.shape()) {
    throw DimensionError("feature loss: predictions " + diff::shape_str(zeta.shape()) +
                         " vs inputs " + diff::shape_str(ihat.shape()));
  }
  const std::size_t t = zeta.dim(0);
  OptionalLoss out;
  if (t < 2) {
    out.value = Tensor::scalar(0.0);
    out.empty = true;
    return out;
  }
  const Tensor pred = diff::slice_rows(zeta, 0, t - 1);
  const Tensor next = diff::slice_rows(ihat.detach(), 1, t - 1);
  std::vector<Tensor> terms;
  for (std::size_t i = 0; i + 1 < t; ++i) {
    const Tensor a = diff::slice_rows(pred, i, 1), b = diff::slice_rows(next, i, 1);
    terms.push_back(kind == FeatLoss::kMse ? diff::mse(a, b) : diff::l2_distance(a, b));
  }
  out.value = terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) out.value = diff::add(out.value, terms[i]);
  return out;
}

struct LossWeights {
  double sem = 1.0;
  double reg = 1.0;
  double cls = 1.0;
  double past = 1.0;
  double feat = 1.0;

  bool operator==(const LossWeights&) const = default;
};

struct LossParts {
  Tensor sem, reg, cls, past, feat;
};

inline Tensor weighted_term(const Tensor& part, double w) {
  return part.node() ? diff::scale(part, w) : Tensor::scalar(0.0);
}

inline Tensor total_loss(const LossParts& p, const LossWeights& w) {
  Tensor total = weighted_term(p.sem, w.sem);
  total = diff::add(total, weighted_term(p.reg, w.reg));
  total = diff::add(total, weighted_term(p.cls, w.cls));
  total = diff::add(total, weighted_term(p.past, w.past));
  return diff::add(total, weighted_term(p.feat, w.feat));
}

// ---------------------------------------------------------------------------
// Prototype geometry

inline std::vector<double> similarity_matrix(const Tensor& protos) {
  return diff::cosine_matrix(protos.detach(), protos.detach()).values();
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) throw DimensionError("pearson: need two equal series");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

/// Pearson correlation between the off-diagonal similarity entries of two stores.
inline double alignment_score(const Tensor& visual, const Tensor& language) {
  if (visual.dim(0) != language.dim(0)) {
    throw DimensionError("alignment: " + std::to_string(visual.dim(0)) + " vs " +
                         std::to_string(language.dim(0)) + " classes");
  }
  const std::size_t k = visual.dim(0);
  const auto sv = similarity_matrix(visual), sl = similarity_matrix(language);
  std::vector<double> a, b;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      if (i == j) continue;
      a.push_back(sv[i * k + j]);
      b.push_back(sl[i * k + j]);
    }
  }
  return pearson(a, b);
}

struct Neighbor {
  std::size_t cls = 0;
  double similarity = 0.0;
};

/// The n classes most similar to `ref` (self excluded), most similar first; ties by index.
inline std::vector<Neighbor> nearest_actions(std::size_t ref, const Tensor& protos, std::size_t n) {
  const std::size_t k = protos.dim(0);
  if (ref >= k) throw IndexError("reference class " + std::to_string(ref) + " of " + std::to_string(k));
  const auto sim = similarity_matrix(protos);
  std::vector<Neighbor> all;
  for (std::size_t j = 0; j < k; ++j) {
    if (j != ref) all.push_back({j, sim[ref * k + j]});
  }
  std::stable_sort(all.begin(), all.end(),
                   [](const Neighbor& a, const Neighbor& b) { return a.similarity > b.similarity; });
  all.resize(std::min(n, all.size()));
  return all;
}

// ---------------------------------------------------------------------------
// Visual prototype initialization

struct PrototypeInit {
  Tensor protos;
  std::vector<std::string> warnings;
};

inline Tensor random_prototypes(std::size_t k, std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  return rng.normal_tensor({k, d}, 1.0 / std::sqrt(static_cast<double>(d)));
}

/// Per-class running mean of labeled embeddings; classes without samples get a seeded
/// random row and a warning.
inline PrototypeInit class_mean_prototypes(const std::vector<std::pair<std::vector<double>, std::size_t>>& samples,
                                           std::size_t k, std::size_t d, std::uint64_t seed) {
  std::vector<double> mean(k * d, 0.0);
  std::vector<std::size_t> count(k, 0);
  for (const auto& [e, y] : samples) {
    if (y >= k) throw IndexError("sample class " + std::to_string(y) + " of " + std::to_string(k));
    if (e.size() != d) throw DimensionError("sample embedding width mismatch");
    ++count[y];
    const double inv = 1.0 / static_cast<double>(count[y]);
    for (std::size_t j = 0; j < d; ++j) mean[y * d + j] += (e[j] - mean[y * d + j]) * inv;
  }
  PrototypeInit out;
  const Tensor fallback = random_prototypes(k, d, seed);
  for (std::size_t c = 0; c < k; ++c) {
    if (count[c] == 0) {
      for (std::size_t j = 0; j < d; ++j) mean[c * d + j] = fallback.at(c, j);
      out.warnings.push_back("class " + std::to_string(c) + " has no samples; using a random prototype");
    }
  }
  out.protos = Tensor::from({k, d}, std::move(mean));
  return out;
}

}  // namespace sgear::model
