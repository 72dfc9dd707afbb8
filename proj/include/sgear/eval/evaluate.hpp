#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "sgear/eval/predictions.hpp"
#include "sgear/model/model.hpp"
#include "sgear/train/trainer.hpp"

namespace sgear::eval {

using model::SGearModel;
using train::Sample;

/// Final-step class probabilities for every sample.
inline PredictionSet predict(const SGearModel& m, const std::vector<Sample>& samples,
                             const model::ForwardOptions& opt = {}) {
  PredictionSet out;
  out.num_classes = m.config().num_classes;
  for (const auto& s : samples) {
    out.items.push_back({s.clip_id, m.forward(*s.features, opt).probabilities(), s.target, {}, {}});
  }
  return out;
}

struct TauRow {
  double tau_a = 0.0;
  std::size_t steps = 0;
  Metrics metrics;
};

/// Rollout steps needed to anticipate `tau_a` ahead with a model trained at `tau_train`.
inline std::size_t rollout_steps(double tau_a, double tau_train, double fps) {
  if (tau_a < tau_train - 1e-9) {
    throw ConfigError("anticipation time " + std::to_string(tau_a) + " is below the training value " +
                      std::to_string(tau_train));
  }
  return static_cast<std::size_t>(std::llround((tau_a - tau_train) * fps));
}

/// Evaluates at longer anticipation times. With n = round((tau_a - tau_train) * fps), the
/// model observes the first T - n frames of each clip (the window ending tau_a before the
/// action) and rolls the decoder forward n steps; the last step is scored.
inline std::vector<TauRow> eval_variable_tau(const SGearModel& m, const std::vector<Sample>& samples,
                                             double tau_train, double fps, const std::vector<double>& taus) {
  const std::size_t t = m.config().frames;
  std::vector<TauRow> rows;
  for (double tau : taus) {
    const std::size_t n = rollout_steps(tau, tau_train, fps);
    if (n >= t) {
      throw ConfigError("anticipation time " + std::to_string(tau) + " needs " + std::to_string(n) +
                        " rollout steps, but clips hold only " + std::to_string(t) + " frames");
    }
    model::ForwardOptions opt;
    opt.frames_used = t - n;
    opt.rollout = n;
    rows.push_back({tau, n, compute_metrics(predict(m, samples, opt))});
  }
  return rows;
}

struct RatioRow {
  double ratio = 0.0;
  std::size_t comparisons = 0;  // prototypes compared per relative representation
  Metrics metrics;
  double max_simplex_error = 0.0;
};

/// Re-evaluates with the prototype subset restricted to each ratio's seeded sample.
/// The model's own subset is restored afterwards.
inline std::vector<RatioRow> prototype_ratio_sweep(SGearModel& m, const std::vector<Sample>& samples,
                                                   const std::vector<double>& ratios) {
  const auto original = m.subset();
  std::vector<RatioRow> rows;
  try {
    for (double r : ratios) {
      auto subset = model::PrototypeSubset::sample(m.config().num_classes, r, m.config().subset_seed);
      RatioRow row{r, subset.size(), {}, 0.0};
      m.set_subset(std::move(subset));
      const auto preds = predict(m, samples);
      for (const auto& p : preds.items) {
        double s = 0.0;
        for (double v : p.probs) s += v;
        row.max_simplex_error = std::max(row.max_simplex_error, std::abs(s - 1.0));
      }
      row.metrics = compute_metrics(preds);
      rows.push_back(row);
    }
  } catch (...) {
    m.set_subset(original);
    throw;
  }
  m.set_subset(original);
  return rows;
}

inline CsvTable metrics_table(const std::vector<std::pair<std::string, Metrics>>& named) {
  CsvTable t{{"name", "clips", "top1", "top5", "mean_top5_recall"}, {}};
  for (const auto& [name, m] : named) {
    t.rows.push_back({name, std::to_string(m.clips), CsvTable::num(m.top1), CsvTable::num(m.top5),
                      CsvTable::num(m.mean_top5_recall)});
  }
  return t;
}

inline CsvTable tau_table(const std::vector<TauRow>& rows) {
  CsvTable t{{"tau_a", "rollout_steps", "top1", "top5", "mean_top5_recall"}, {}};
  for (const auto& r : rows) {
    t.rows.push_back({CsvTable::num(r.tau_a), std::to_string(r.steps), CsvTable::num(r.metrics.top1),
                      CsvTable::num(r.metrics.top5), CsvTable::num(r.metrics.mean_top5_recall)});
  }
  return t;
}

inline CsvTable ratio_table(const std::vector<RatioRow>& rows) {
  CsvTable t{{"ratio", "comparisons", "top1", "top5", "mean_top5_recall"}, {}};
  for (const auto& r : rows) {
    t.rows.push_back({CsvTable::num(r.ratio), std::to_string(r.comparisons), CsvTable::num(r.metrics.top1),
                      CsvTable::num(r.metrics.top5), CsvTable::num(r.metrics.mean_top5_recall)});
  }
  return t;
}

/// K x K cosine similarity matrix with class names on both axes.
inline CsvTable similarity_table(const diff::Tensor& protos, const std::vector<std::string>& names) {
  const std::size_t k = protos.dim(0);
  const auto sim = model::similarity_matrix(protos);
  CsvTable t;
  t.header.push_back("class");
  for (std::size_t j = 0; j < k; ++j) t.header.push_back(j < names.size() ? names[j] : std::to_string(j));
  for (std::size_t i = 0; i < k; ++i) {
    std::vector<std::string> row{i < names.size() ? names[i] : std::to_string(i)};
    for (std::size_t j = 0; j < k; ++j) row.push_back(CsvTable::num(sim[i * k + j]));
    t.rows.push_back(std::move(row));
  }
  return t;
}

/// The n nearest classes of every class under both prototype stores.
inline CsvTable nearest_table(const diff::Tensor& visual, const diff::Tensor* language,
                              const std::vector<std::string>& names, std::size_t n) {
  CsvTable t{{"class", "store", "rank", "neighbor", "similarity"}, {}};
  auto name = [&](std::size_t c) { return c < names.size() ? names[c] : std::to_string(c); };
  auto emit = [&](const diff::Tensor& protos, const std::string& store) {
    for (std::size_t c = 0; c < protos.dim(0); ++c) {
      const auto nb = model::nearest_actions(c, protos, n);
      for (std::size_t r = 0; r < nb.size(); ++r) {
        t.rows.push_back({name(c), store, std::to_string(r + 1), name(nb[r].cls), CsvTable::num(nb[r].similarity)});
      }
    }
  };
  emit(visual, "visual");
  if (language) emit(*language, "language");
  return t;
}

}  // namespace sgear::eval
