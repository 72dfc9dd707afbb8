#pragma once

#include <cmath>
#include <vector>

#include "sgear/error.hpp"

namespace sgear::data {

/// Number of frames observed in a window of `tau_o` seconds at `fps`.
inline std::size_t frame_count(double tau_o, double fps) {
  const double t = std::round(tau_o * fps);
  if (!(t >= 1.0)) {
    throw ConfigError("observation window of " + std::to_string(tau_o) + "s at " +
                      std::to_string(fps) + " fps contains no frame");
  }
  return static_cast<std::size_t>(t);
}

/// Frame times for an action starting at `start_time`, observed over
/// [start_time - (tau_o + tau_a), start_time - tau_a) on a left-aligned 1/fps grid.
///
/// Frames that would fall before time 0 are clamped to 0, so a window underflowing
/// the video start repeats its first frame.
inline std::vector<double> sample_observation_window(double start_time, double tau_o, double tau_a,
                                                     double fps) {
  if (!(fps > 0.0) || tau_o <= 0.0 || tau_a < 0.0) {
    throw ConfigError("window needs fps > 0, tau_o > 0 and tau_a >= 0");
  }
  const std::size_t n = frame_count(tau_o, fps);
  const double begin = start_time - tau_a - tau_o;
  std::vector<double> times(n);
  for (std::size_t i = 0; i < n; ++i) {
    times[i] = std::max(0.0, begin + static_cast<double>(i) / fps);
  }
  return times;
}

}  // namespace sgear::data
