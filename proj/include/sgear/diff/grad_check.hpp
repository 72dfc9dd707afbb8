#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "sgear/diff/tensor.hpp"

namespace sgear::diff {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;  // position in the checked parameter list
  std::size_t worst_index = 0;  // flat element index within that parameter
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates = 0;
};

/// Compares the reverse-mode gradient of a scalar computation against central
/// differences (f(x + eps) - f(x - eps)) / 2eps, one coordinate at a time.
///
/// The per-coordinate error is |g_ad - g_fd| / max(1, |g_ad|, |g_fd|). `f` must rebuild
/// its graph from the current parameter values on every call.
///
/// With `freeze_detached`, every detach() inside `f` returns the value it produced at the
/// unperturbed point, so the differences measure the same stop-gradient objective that
/// backward() differentiates. Without it, central differences also see through detach().
inline GradCheckResult grad_check(const std::function<Tensor()>& f, std::vector<Tensor> params,
                                  double eps = 1e-5, bool freeze_detached = false) {
  detail::DetachTape tape;
  struct Scope {
    explicit Scope(detail::DetachTape* t) { detail::active_detach_tape = t; }
    ~Scope() { detail::active_detach_tape = nullptr; }
  } scope(freeze_detached ? &tape : nullptr);

  for (auto& p : params) p.zero_grad();
  Tensor y = f();
  y.backward();
  tape.replay = true;

  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params) analytic.emplace_back(p.grad().begin(), p.grad().end());

  GradCheckResult result;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto values = params[pi].mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + eps;
      tape.cursor = 0;
      const double up = f().item();
      values[i] = saved - eps;
      tape.cursor = 0;
      const double down = f().item();
      values[i] = saved;

      const double g_fd = (up - down) / (2.0 * eps);
      const double g_ad = analytic[pi][i];
      const double err =
          std::abs(g_ad - g_fd) / std::max({1.0, std::abs(g_ad), std::abs(g_fd)});
      ++result.coordinates;
      if (err > result.max_rel_error || result.coordinates == 1) {
        result.max_rel_error = err;
        result.worst_param = pi;
        result.worst_index = i;
        result.analytic = g_ad;
        result.numeric = g_fd;
      }
    }
  }
  for (auto& p : params) p.zero_grad();
  return result;
}

}  // namespace sgear::diff
