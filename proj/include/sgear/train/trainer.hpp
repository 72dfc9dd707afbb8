#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sgear/data/manifest.hpp"
#include "sgear/model/model.hpp"
#include "sgear/train/config.hpp"

namespace sgear::train {

using diff::Tensor;
using model::SGearModel;

/// One training clip: its features, per-frame labels and anticipated action.
struct Sample {
  const data::FeatureArray* features = nullptr;
  std::vector<std::optional<std::size_t>> labels;
  std::size_t target = 0;
  std::string clip_id;
};

/// Samples over `ds`; they point into `ds.features`, which must outlive them.
inline std::vector<Sample> make_samples(const data::Dataset& ds) {
  std::vector<Sample> out;
  out.reserve(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& r = ds.manifest.records[i];
    out.push_back({&ds.features[i], data::frame_labels(ds.manifest, r), r.target, r.clip_id});
  }
  return out;
}

/// SGD with momentum and coupled weight decay, or AdamW with decoupled decay.
class Optimizer {
 public:
  Optimizer() = default;
  Optimizer(const TrainConfig& cfg, const diff::ParameterStore& store) : cfg_(cfg) {
    for (const auto& e : store.entries()) {
      if (!e.value.requires_grad()) continue;
      params_.push_back(e);
      if (cfg_.optimizer == "sgd") {
        slots_["momentum." + e.name].assign(e.value.size(), 0.0);
      } else {
        slots_["m." + e.name].assign(e.value.size(), 0.0);
        slots_["v." + e.name].assign(e.value.size(), 0.0);
      }
    }
  }

  void step(double lr) {
    ++count_;
    if (cfg_.optimizer == "sgd") {
      for (auto& e : params_) sgd(e, lr);
    } else {
      for (auto& e : params_) adamw(e, lr);
    }
  }

  std::size_t count() const { return count_; }
  void set_count(std::size_t n) { count_ = n; }
  const std::map<std::string, std::vector<double>>& slots() const { return slots_; }

  void load_slot(const std::string& name, const std::vector<double>& v) {
    auto it = slots_.find(name);
    if (it == slots_.end()) throw ConfigError("optimizer has no state slot '" + name + "'");
    if (it->second.size() != v.size()) throw DimensionError("optimizer slot '" + name + "' size mismatch");
    it->second = v;
  }

 private:
  void sgd(diff::ParameterStore::Entry& e, double lr) {
    auto p = e.value.mutable_data();
    auto g = e.value.grad();
    auto& buf = slots_["momentum." + e.name];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i] + cfg_.weight_decay * p[i];
      buf[i] = cfg_.momentum * buf[i] + gi;
      p[i] -= lr * buf[i];
    }
  }

  void adamw(diff::ParameterStore::Entry& e, double lr) {
    auto p = e.value.mutable_data();
    auto g = e.value.grad();
    auto& m = slots_["m." + e.name];
    auto& v = slots_["v." + e.name];
    const double b1 = cfg_.betas[0], b2 = cfg_.betas[1];
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(count_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(count_));
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] -= lr * cfg_.weight_decay * p[i];
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.adam_eps);
    }
  }

  TrainConfig cfg_;
  std::vector<diff::ParameterStore::Entry> params_;
  std::map<std::string, std::vector<double>> slots_;
  std::size_t count_ = 0;
};

/// Mean loss-part values over a batch or an epoch.
struct LossValues {
  double total = 0, sem = 0, reg = 0, cls = 0, past = 0, feat = 0;

  LossValues& operator+=(const LossValues& o) {
    total += o.total, sem += o.sem, reg += o.reg, cls += o.cls, past += o.past, feat += o.feat;
    return *this;
  }
  LossValues scaled(double s) const { return {total * s, sem * s, reg * s, cls * s, past * s, feat * s}; }
};

struct StepReport {
  std::size_t step = 0;
  double lr = 0.0;
  double grad_norm = 0.0;
  LossValues loss;
};

struct EpochReport {
  std::size_t epoch = 0;
  LossValues loss;
};

inline double global_grad_norm(const diff::ParameterStore& store) {
  double s = 0.0;
  for (const auto& e : store.entries()) {
    if (!e.value.requires_grad() || !e.value.has_grad()) continue;
    for (double g : e.value.grad()) s += g * g;
  }
  return std::sqrt(s);
}

class Trainer {
 public:
  Trainer(SGearModel& model, TrainConfig cfg, std::size_t dataset_size)
      : model_(&model), cfg_(std::move(cfg)) {
    cfg_.validate();
    if (!(cfg_.toggles == model.config().toggles)) {
      throw ConfigError("training toggles '" + cfg_.toggles.describe() + "' differ from the model's '" +
                        model.config().toggles.describe() + "'");
    }
    if (dataset_size == 0) throw ConfigError("empty training set");
    steps_per_epoch_ = (dataset_size + cfg_.batch_size - 1) / cfg_.batch_size;
    opt_ = Optimizer(cfg_, model.parameters());
  }

  const TrainConfig& config() const { return cfg_; }
  std::size_t global_step() const { return step_; }
  std::size_t epoch() const { return epoch_; }
  std::size_t steps_per_epoch() const { return steps_per_epoch_; }
  std::size_t total_steps() const { return cfg_.epochs * steps_per_epoch_; }
  Optimizer& optimizer() { return opt_; }
  const Optimizer& optimizer() const { return opt_; }

  void restore_position(std::size_t step, std::size_t epoch) {
    step_ = step;
    epoch_ = epoch;
  }

  /// Loss of one clip (graph attached), with the trainer's loss weights.
  model::LossReport clip_loss(const Sample& s) const {
    const auto f = model_->forward(*s.features);
    return model_->losses(f, s.labels, s.target, cfg_.loss_weights);
  }

  /// One optimizer update on the mean loss of `batch`.
  StepReport step(std::span<const Sample* const> batch) {
    if (batch.empty()) throw ConfigError("empty batch");
    auto& store = model_->parameters();
    store.zero_grad();
    const double inv = 1.0 / static_cast<double>(batch.size());
    StepReport rep;
    Tensor sum;
    for (const Sample* s : batch) {
      const auto r = clip_loss(*s);
      rep.loss += LossValues{r.value(r.total), r.value(r.parts.sem), r.value(r.parts.reg),
                             r.value(r.parts.cls), r.value(r.parts.past), r.value(r.parts.feat)};
      sum = sum.node() ? diff::add(sum, r.total) : r.total;
    }
    rep.loss = rep.loss.scaled(inv);
    diff::scale(sum, inv).backward();

    for (const auto& e : store.entries()) {
      if (!e.value.requires_grad() || !e.value.has_grad()) continue;
      for (double g : e.value.grad()) {
        if (!std::isfinite(g)) throw NumericError("non-finite gradient in parameter '" + e.name + "'");
      }
    }
    rep.grad_norm = global_grad_norm(store);
    if (cfg_.grad_clip > 0.0 && rep.grad_norm > cfg_.grad_clip) {
      const double f = cfg_.grad_clip / rep.grad_norm;
      for (const auto& e : store.entries()) {
        if (!e.value.requires_grad() || !e.value.has_grad()) continue;
        auto& g = e.value.node()->grad;
        for (double& x : g) x *= f;
      }
    }
    rep.lr = lr_at(step_, cfg_, steps_per_epoch_);
    opt_.step(rep.lr);
    rep.step = step_++;
    return rep;
  }

  /// One pass over `samples` in a seeded shuffled order.
  EpochReport train_epoch(const std::vector<Sample>& samples,
                          const std::function<void(const StepReport&)>& on_step = {}) {
    std::vector<const Sample*> order;
    order.reserve(samples.size());
    for (const auto& s : samples) order.push_back(&s);
    std::mt19937_64 gen(cfg_.seed + 0x51ed270b27cc0b9dULL * (epoch_ + 1));
    std::shuffle(order.begin(), order.end(), gen);

    EpochReport rep;
    rep.epoch = epoch_;
    std::size_t batches = 0;
    for (std::size_t i = 0; i < order.size(); i += cfg_.batch_size) {
      const std::size_t n = std::min(cfg_.batch_size, order.size() - i);
      const auto s = step(std::span<const Sample* const>(order.data() + i, n));
      rep.loss += s.loss;
      ++batches;
      if (on_step) on_step(s);
    }
    rep.loss = rep.loss.scaled(1.0 / static_cast<double>(batches));
    ++epoch_;
    return rep;
  }

  /// Trains for the remaining configured epochs.
  std::vector<EpochReport> fit(const std::vector<Sample>& samples,
                               const std::function<void(const EpochReport&)>& on_epoch = {}) {
    std::vector<EpochReport> out;
    while (epoch_ < cfg_.epochs) {
      out.push_back(train_epoch(samples));
      if (on_epoch) on_epoch(out.back());
    }
    return out;
  }

 private:
  SGearModel* model_;
  TrainConfig cfg_;
  Optimizer opt_;
  std::size_t steps_per_epoch_ = 1;
  std::size_t step_ = 0;
  std::size_t epoch_ = 0;
};

/// Top-1 accuracy of the final-step prediction over `samples`.
inline double top1_accuracy(const SGearModel& m, const std::vector<Sample>& samples) {
  if (samples.empty()) return 0.0;
  std::size_t hit = 0;
  for (const auto& s : samples) {
    const auto p = m.forward(*s.features).probabilities();
    const auto best = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
    hit += best == s.target;
  }
  return static_cast<double>(hit) / static_cast<double>(samples.size());
}

enum class ProtoInit { kRandom, kClassMean, kRecognitionMean };

inline ProtoInit proto_init_from(const std::string& s) {
  if (s == "random") return ProtoInit::kRandom;
  if (s == "class-mean") return ProtoInit::kClassMean;
  if (s == "recognition-mean") return ProtoInit::kRecognitionMean;
  throw ConfigError("prototype init must be random, class-mean or recognition-mean, got '" + s + "'");
}

/// Class means of the raw encoder class tokens over all labeled frames.
inline model::PrototypeInit class_mean_init(const SGearModel& m, const std::vector<Sample>& samples) {
  std::vector<std::pair<std::vector<double>, std::size_t>> rows;
  const std::size_t d = m.config().d();
  for (const auto& s : samples) {
    const Tensor cls = m.encode(*s.features).cls_view().detach();
    for (std::size_t t = 0; t < s.labels.size() && t < cls.dim(0); ++t) {
      if (!s.labels[t]) continue;
      rows.emplace_back(std::vector<double>(cls.values().begin() + static_cast<std::ptrdiff_t>(t * d),
                                            cls.values().begin() + static_cast<std::ptrdiff_t>((t + 1) * d)),
                        *s.labels[t]);
    }
  }
  return model::class_mean_prototypes(rows, m.config().num_classes, d, m.config().seed);
}

/// Trains a PA-free copy of the architecture to recognize the action in each frame,
/// then averages its decoder outputs per class.
inline model::PrototypeInit recognition_mean_init(const model::ModelConfig& base, const TrainConfig& tc,
                                                  const std::vector<Sample>& samples) {
  model::ModelConfig rc = base;
  rc.toggles = {base.toggles.tca, false, false, false};
  TrainConfig rt = tc;
  rt.toggles = rc.toggles;
  rt.loss_weights = {0.0, 0.0, 1.0, 1.0, 0.0};
  SGearModel rec(rc);

  // Shift labels so step t is supervised with frame t's own label.
  std::vector<Sample> shifted;
  for (const auto& s : samples) {
    if (s.labels.empty() || !s.labels.back()) continue;
    Sample r = s;
    r.labels.assign(s.labels.size(), std::nullopt);
    for (std::size_t t = 0; t + 1 < s.labels.size(); ++t) r.labels[t + 1] = s.labels[t];
    r.target = *s.labels.back();
    shifted.push_back(std::move(r));
  }
  if (shifted.empty()) throw ValidationError("recognition-mean init needs clips whose last frame is labeled");
  Trainer trainer(rec, rt, shifted.size());
  trainer.fit(shifted);

  std::vector<std::pair<std::vector<double>, std::size_t>> rows;
  const std::size_t d = base.d();
  for (const auto& s : samples) {
    const Tensor z = rec.forward(*s.features).zeta.detach();
    for (std::size_t t = 0; t < s.labels.size(); ++t) {
      if (!s.labels[t]) continue;
      rows.emplace_back(std::vector<double>(z.values().begin() + static_cast<std::ptrdiff_t>(t * d),
                                            z.values().begin() + static_cast<std::ptrdiff_t>((t + 1) * d)),
                        *s.labels[t]);
    }
  }
  return model::class_mean_prototypes(rows, base.num_classes, d, base.seed);
}

/// Applies the chosen visual prototype initialization. Returns warnings for classes
/// that had no samples. Language-as-visual models keep the language store.
inline std::vector<std::string> init_visual_prototypes(SGearModel& m, ProtoInit mode, const TrainConfig& tc,
                                                       const std::vector<Sample>& samples) {
  if (mode == ProtoInit::kRandom || m.config().toggles.language_as_visual) return {};
  auto init = mode == ProtoInit::kClassMean ? class_mean_init(m, samples)
                                            : recognition_mean_init(m.config(), tc, samples);
  m.set_visual(init.protos);
  return init.warnings;
}

}  // namespace sgear::train
