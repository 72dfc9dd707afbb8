#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "sgear/diff/tensor.hpp"

namespace sgear {

/// Seeded generator shared by initializers, samplers and the synthetic data builder.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  double normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }
  double uniform(double lo = 0.0, double hi = 1.0) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }

  diff::Tensor normal_tensor(diff::Shape shape, double stddev, bool requires_grad = false) {
    std::vector<double> v(diff::shape_size(shape));
    for (auto& x : v) x = normal(0.0, stddev);
    return diff::Tensor::from(std::move(shape), std::move(v), requires_grad);
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace sgear
