#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sgear/data/manifest.hpp"
#include "sgear/data/prototype_file.hpp"
#include "sgear/diff/random.hpp"

namespace sgear::data {

/// Row-stochastic K x K action transition matrix.
using CoGraph = std::vector<std::vector<double>>;

inline void validate_co_graph(const CoGraph& g) {
  if (g.size() < 2) throw ValidationError("co-occurrence graph needs at least 2 classes");
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (g[i].size() != g.size()) {
      throw ValidationError("co-occurrence row " + std::to_string(i) + " has " +
                            std::to_string(g[i].size()) + " entries, expected " +
                            std::to_string(g.size()));
    }
    double s = 0.0;
    for (double p : g[i]) {
      if (!(p >= 0.0)) {
        throw ValidationError("co-occurrence row " + std::to_string(i) + " has a negative entry");
      }
      s += p;
    }
    if (std::abs(s - 1.0) > 1e-6) {
      throw ValidationError("co-occurrence row " + std::to_string(i) + " sums to " +
                            std::to_string(s) + ", not 1");
    }
  }
}

inline CoGraph uniform_graph(std::size_t k) { return CoGraph(k, std::vector<double>(k, 1.0 / k)); }

inline CoGraph identity_graph(std::size_t k) {
  CoGraph g(k, std::vector<double>(k, 0.0));
  for (std::size_t i = 0; i < k; ++i) g[i][i] = 1.0;
  return g;
}

/// Classes split into `blocks` contiguous groups; `within` of each row's mass is spread
/// uniformly over the row's own group, the rest uniformly over the other classes.
inline CoGraph block_graph(std::size_t k, std::size_t blocks, double within) {
  if (blocks < 1 || blocks > k) throw ConfigError("block count must lie in [1, K]");
  CoGraph g(k, std::vector<double>(k, 0.0));
  auto block_of = [&](std::size_t i) { return i * blocks / k; };
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t in = 0;
    for (std::size_t j = 0; j < k; ++j) in += block_of(j) == block_of(i);
    const std::size_t out = k - in;
    for (std::size_t j = 0; j < k; ++j) {
      if (block_of(j) == block_of(i)) {
        g[i][j] = out == 0 ? 1.0 / in : within / in;
      } else {
        g[i][j] = (1.0 - within) / out;
      }
    }
  }
  return g;
}

/// Each class moves to its successor (i + 1 mod K) with probability `p`; the remaining
/// mass is spread uniformly over the other K - 1 classes.
inline CoGraph cycle_graph(std::size_t k, double p) {
  CoGraph g(k, std::vector<double>(k, (1.0 - p) / static_cast<double>(k - 1)));
  for (std::size_t i = 0; i < k; ++i) g[i][(i + 1) % k] = p;
  return g;
}

inline std::size_t sample_row(const std::vector<double>& row, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t j = 0; j < row.size(); ++j) {
    acc += row[j];
    if (u < acc) return j;
  }
  // Rounding left u above the accumulated mass: take the last class with mass.
  for (std::size_t j = row.size(); j-- > 0;) {
    if (row[j] > 0.0) return j;
  }
  return row.size() - 1;
}

/// Markov chain of `length` states, starting at `start`.
inline std::vector<std::size_t> sample_markov_chain(const CoGraph& g, std::size_t start,
                                                    std::size_t length, Rng& rng) {
  std::vector<std::size_t> chain;
  chain.reserve(length);
  std::size_t s = start;
  for (std::size_t i = 0; i < length; ++i) {
    chain.push_back(s);
    s = sample_row(g[s], rng);
  }
  return chain;
}

/// Unit-norm class embeddings whose pairwise cosines grow with symmetrized co-occurrence.
///
/// The symmetrized off-diagonal mass S is shifted by c*I until positive definite and
/// factored as U sqrt(L) U^T; the rows of U sqrt(L) then have inner products S_ij and
/// equal norms sqrt(c), so cos_ij = S_ij / c. The rows are rotated by a seeded random
/// orthogonal matrix when dim > K and truncated to the leading components when dim < K.
inline PrototypeArray spectral_language_prototypes(const CoGraph& g, std::size_t dim,
                                                   std::uint64_t seed) {
  validate_co_graph(g);
  const auto k = static_cast<Eigen::Index>(g.size());
  Eigen::MatrixXd s(k, k);
  double max_off = 0.0;
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) {
      s(i, j) = i == j ? 0.0 : 0.5 * (g[i][j] + g[j][i]);
      if (i != j) max_off = std::max(max_off, s(i, j));
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig0(s);
  const double shift = std::max(0.0, -eig0.eigenvalues().minCoeff()) + 0.5 * max_off + 1e-9;
  s += shift * Eigen::MatrixXd::Identity(k, k);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s);
  // Eigen sorts ascending; keep the largest components first.
  Eigen::MatrixXd embed(k, k);
  for (Eigen::Index c = 0; c < k; ++c) {
    const Eigen::Index src = k - 1 - c;
    embed.col(c) = eig.eigenvectors().col(src) * std::sqrt(std::max(0.0, eig.eigenvalues()(src)));
  }
  const auto d = static_cast<Eigen::Index>(dim);
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(k, d);
  out.leftCols(std::min(k, d)) = embed.leftCols(std::min(k, d));

  Rng rng(seed);
  Eigen::MatrixXd gauss(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) gauss(i, j) = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(gauss);
  const Eigen::MatrixXd rotation = qr.householderQ();
  out = out * rotation;

  PrototypeArray p;
  p.classes = static_cast<std::uint32_t>(k);
  p.dim = static_cast<std::uint32_t>(dim);
  p.values.resize(static_cast<std::size_t>(k * d));
  for (Eigen::Index i = 0; i < k; ++i) {
    const double n = out.row(i).norm();
    for (Eigen::Index j = 0; j < d; ++j) {
      p.values[static_cast<std::size_t>(i * d + j)] = static_cast<float>(n > 0 ? out(i, j) / n : 0.0);
    }
  }
  return p;
}

struct SyntheticOptions {
  std::size_t num_classes = 4;
  std::size_t frames = 4;       // T
  std::size_t tokens = 1;       // tokens per frame (pixels for frame-level data)
  std::size_t channels = 8;     // values per token
  std::size_t clips = 16;
  CoGraph co_graph;             // empty: uniform
  std::uint64_t seed = 0;
  std::size_t proto_dim = 0;    // width of the language prototypes; 0 means `channels`
  double fps = 1.0;
  double tau_a = 1.0;
  double noise = 0.25;
};

struct SyntheticDataset {
  Dataset dataset;
  PrototypeArray language;
  CoGraph co_graph;
};

/// Clips whose frames follow a Markov chain over the co-occurrence graph.
///
/// Frame i of a clip shows chain state s_i; the anticipated action is s_T. Every
/// frame is the class's mean pattern plus isotropic Gaussian noise, so classes are
/// separable. The record's action starts right at tau_o + tau_a, making the
/// observation window exactly the clip.
inline SyntheticDataset generate_synthetic_dataset(SyntheticOptions opt) {
  if (opt.co_graph.empty()) opt.co_graph = uniform_graph(opt.num_classes);
  if (opt.co_graph.size() != opt.num_classes) {
    throw ValidationError("co-occurrence graph size does not match K");
  }
  validate_co_graph(opt.co_graph);
  if (opt.frames == 0 || opt.tokens == 0 || opt.channels == 0) {
    throw ConfigError("synthetic extents must be positive");
  }
  const std::size_t k = opt.num_classes;
  const std::size_t per_frame = opt.tokens * opt.channels;

  Rng rng(opt.seed);
  std::vector<std::vector<double>> means(k, std::vector<double>(per_frame));
  for (auto& m : means)
    for (auto& v : m) v = rng.normal();

  SyntheticDataset out;
  out.co_graph = opt.co_graph;
  auto& man = out.dataset.manifest;
  man.num_classes = k;
  for (std::size_t c = 0; c < k; ++c) man.class_names.push_back("action_" + std::to_string(c));
  man.fps = opt.fps;
  man.tau_o = static_cast<double>(opt.frames) / opt.fps;
  man.tau_a = opt.tau_a;

  for (std::size_t i = 0; i < opt.clips; ++i) {
    const auto chain = sample_markov_chain(opt.co_graph, rng.index(k), opt.frames + 1, rng);
    std::ostringstream id;
    id << "clip_" << std::setw(5) << std::setfill('0') << i;

    SegmentRecord rec;
    rec.clip_id = id.str();
    rec.feature_path = "features/" + rec.clip_id + ".sgft";
    rec.start_time = man.tau_o + man.tau_a;
    rec.target = chain[opt.frames];
    for (std::size_t t = 0; t < opt.frames; ++t) {
      rec.labels.push_back({static_cast<double>(t) / opt.fps, chain[t]});
    }

    FeatureArray f;
    f.frames = static_cast<std::uint32_t>(opt.frames);
    f.tokens = static_cast<std::uint32_t>(opt.tokens);
    f.dim = static_cast<std::uint32_t>(opt.channels);
    f.values.reserve(opt.frames * per_frame);
    for (std::size_t t = 0; t < opt.frames; ++t) {
      for (std::size_t j = 0; j < per_frame; ++j) {
        f.values.push_back(static_cast<float>(means[chain[t]][j] + rng.normal(0.0, opt.noise)));
      }
    }
    man.records.push_back(std::move(rec));
    out.dataset.features.push_back(std::move(f));
  }
  man.validate();
  out.language = spectral_language_prototypes(opt.co_graph, opt.proto_dim ? opt.proto_dim : opt.channels,
                                              opt.seed ^ 0x5eedULL);
  return out;
}

/// Writes manifest.jsonl, features/*.sgft and language.sglp under `dir`.
inline void write_synthetic_dataset(const std::string& dir, const SyntheticDataset& s) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "features");
  const auto& man = s.dataset.manifest;
  for (std::size_t i = 0; i < man.records.size(); ++i) {
    write_feature_file((fs::path(dir) / man.records[i].feature_path).string(), s.dataset.features[i]);
  }
  write_manifest((fs::path(dir) / "manifest.jsonl").string(), man);
  write_prototype_file((fs::path(dir) / "language.sglp").string(), s.language);
}

}  // namespace sgear::data
