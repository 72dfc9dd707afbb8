#pragma once

#include <array>
#include <cmath>
#include <string>

#include <nlohmann/json.hpp>

#include "sgear/model/model.hpp"

namespace sgear::train {

using model::LossWeights;
using model::Toggles;

struct TrainConfig {
  std::string preset = "desk";
  std::string optimizer = "sgd";  // "sgd" | "adamw"
  double lr = 1e-2;
  double momentum = 0.9;
  std::array<double, 2> betas{0.9, 0.999};
  double adam_eps = 1e-8;
  double weight_decay = 0.0;
  std::size_t batch_size = 4;
  std::size_t epochs = 20;
  std::size_t warmup_epochs = 2;
  double grad_clip = 0.0;  // global norm; 0 disables
  LossWeights loss_weights;
  Toggles toggles;
  std::uint64_t seed = 0;

  void validate() const {
    if (optimizer != "sgd" && optimizer != "adamw") {
      throw ConfigError("optimizer must be 'sgd' or 'adamw', got '" + optimizer + "'");
    }
    if (!(lr >= 0.0)) throw ConfigError("learning rate must be non-negative");
    if (batch_size == 0) throw ConfigError("batch size must be positive");
    if (epochs == 0) throw ConfigError("epoch count must be positive");
    if (warmup_epochs > epochs) {
      throw ConfigError("warmup (" + std::to_string(warmup_epochs) + " epochs) exceeds training length (" +
                        std::to_string(epochs) + " epochs)");
    }
    if (grad_clip < 0.0) throw ConfigError("gradient clip must be non-negative");
  }
};

/// Optimization presets per benchmark; "desk" is a small synthetic-data default.
inline TrainConfig make_preset(const std::string& name) {
  TrainConfig c;
  c.preset = name;
  if (name == "ek100" || name == "ek55" || name == "eg") {
    c.optimizer = "sgd";
    c.momentum = 0.9;
    c.weight_decay = 1e-5;
    c.batch_size = 3;
    if (name == "ek100") {
      c.lr = 1e-4;
      c.warmup_epochs = 20;
      c.epochs = 50;
      c.loss_weights = {4.0, 1.0, 1.0, 1.0, 1.0};
    } else if (name == "ek55") {
      c.lr = 1e-4;
      c.warmup_epochs = 10;
      c.epochs = 35;
      c.loss_weights = {2.0, 1.0, 1.0, 1.0, 1.0};
    } else {
      c.lr = 4.75e-4;
      c.warmup_epochs = 5;
      c.epochs = 10;
      c.loss_weights = {2.0, 1.0, 1.0, 0.1, 1.0};
    }
  } else if (name == "50s") {
    c.optimizer = "adamw";
    c.betas = {0.9, 0.999};
    c.weight_decay = 1e-4;
    c.lr = 5e-6;
    c.warmup_epochs = 20;
    c.epochs = 100;
    c.batch_size = 2;
    c.loss_weights = {1.0, 0.1, 1.0, 0.1, 1.0};
  } else if (name == "desk") {
    c.optimizer = "adamw";
    c.lr = 1e-2;
    c.weight_decay = 0.0;
    c.batch_size = 4;
    c.epochs = 20;
    c.warmup_epochs = 1;
    c.loss_weights = {1.0, 1.0, 1.0, 1.0, 1.0};
  } else {
    throw ConfigError("unknown preset '" + name + "' (expected ek100, ek55, eg, 50s or desk)");
  }
  return c;
}

/// Benchmark architecture: ViT-B/16 encoder, 2 TCA + 1 PA, causal decoder sized per dataset.
inline model::ModelConfig model_preset(const std::string& name) {
  model::ModelConfig m;
  m.encoder.mode = "vit-lite";
  m.encoder.patch_size = 16;
  m.encoder.depth = 12;
  m.encoder.heads = 12;
  m.encoder.d = 768;
  m.encoder.channels = 3;
  m.tca_blocks = 2;
  m.pa_blocks = 1;
  m.decoder.d = 768;
  m.decoder.mlp_hidden = 2048;
  if (name == "ek100" || name == "ek55") {
    m.encoder.input_size = 384;
    m.decoder.layers = 6;
    m.decoder.heads = 4;
    m.frames = name == "ek100" ? 15 : 10;
  } else if (name == "eg") {
    m.encoder.input_size = 224;
    m.decoder.layers = 2;
    m.decoder.heads = 4;
    m.frames = 10;
  } else if (name == "50s") {
    m.encoder.input_size = 224;
    m.decoder.layers = 8;
    m.decoder.heads = 8;
    m.frames = 8;  // observation is a fraction of each video; datasets set the real length
  } else if (name == "desk") {
    m.encoder.patch_size = 2;
    m.encoder.depth = 1;
    m.encoder.heads = 2;
    m.encoder.d = 16;
    m.encoder.input_size = 4;
    m.encoder.channels = 2;
    m.decoder.d = 16;
    m.decoder.layers = 2;
    m.decoder.heads = 2;
    m.decoder.mlp_hidden = 32;
    m.frames = 4;
  } else {
    throw ConfigError("unknown preset '" + name + "'");
  }
  return m;
}

/// Observation window per benchmark. For 50s the window is a fraction of each video.
struct ObservationPreset {
  double tau_o = 0.0;  // seconds; 0 when relative
  double fps = 1.0;
  std::array<double, 2> relative{0.0, 0.0};
};

inline ObservationPreset observation_preset(const std::string& name) {
  if (name == "ek100") return {15.0, 1.0, {0.0, 0.0}};
  if (name == "ek55" || name == "eg") return {10.0, 1.0, {0.0, 0.0}};
  if (name == "50s") return {0.0, 0.25, {0.2, 0.3}};
  throw ConfigError("no observation preset for '" + name + "'");
}

inline nlohmann::json to_json(const LossWeights& w) {
  return {{"sem", w.sem}, {"reg", w.reg}, {"cls", w.cls}, {"past", w.past}, {"feat", w.feat}};
}

/// All five weights are required.
inline LossWeights loss_weights_from_json(const nlohmann::json& j) {
  LossWeights w;
  for (const char* key : {"sem", "reg", "cls", "past", "feat"}) {
    if (!j.contains(key)) throw ConfigError(std::string("loss weights: missing '") + key + "'");
  }
  try {
    w.sem = j.at("sem").get<double>();
    w.reg = j.at("reg").get<double>();
    w.cls = j.at("cls").get<double>();
    w.past = j.at("past").get<double>();
    w.feat = j.at("feat").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("loss weights: ") + e.what());
  }
  return w;
}

inline nlohmann::json to_json(const Toggles& t) {
  return {{"tca", t.tca}, {"pa", t.pa}, {"sem", t.sem}, {"language_as_visual", t.language_as_visual}};
}

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"preset", c.preset},
          {"optimizer", c.optimizer},
          {"lr", c.lr},
          {"momentum", c.momentum},
          {"betas", c.betas},
          {"adam_eps", c.adam_eps},
          {"weight_decay", c.weight_decay},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"warmup_epochs", c.warmup_epochs},
          {"grad_clip", c.grad_clip},
          {"loss_weights", to_json(c.loss_weights)},
          {"toggles", to_json(c.toggles)},
          {"seed", c.seed}};
}

/// Starts from the named preset (if "preset" is given) and applies the remaining keys.
inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    if (j.contains("preset")) c = make_preset(j["preset"].get<std::string>());
    c.optimizer = j.value("optimizer", c.optimizer);
    c.lr = j.value("lr", c.lr);
    c.momentum = j.value("momentum", c.momentum);
    if (j.contains("betas")) c.betas = j["betas"].get<std::array<double, 2>>();
    c.adam_eps = j.value("adam_eps", c.adam_eps);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.warmup_epochs = j.value("warmup_epochs", c.warmup_epochs);
    c.grad_clip = j.value("grad_clip", c.grad_clip);
    if (j.contains("loss_weights")) c.loss_weights = loss_weights_from_json(j["loss_weights"]);
    if (j.contains("toggles")) {
      const auto& t = j["toggles"];
      if (t.is_string()) {
        c.toggles = Toggles::named(t.get<std::string>());
      } else {
        c.toggles.tca = t.value("tca", c.toggles.tca);
        c.toggles.pa = t.value("pa", c.toggles.pa);
        c.toggles.sem = t.value("sem", c.toggles.sem);
        c.toggles.language_as_visual = t.value("language_as_visual", c.toggles.language_as_visual);
      }
    }
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

/// Linear warmup from 0 to lr, then cosine decay to 0 at the last step.
inline double lr_at(std::size_t step, const TrainConfig& c, std::size_t steps_per_epoch = 1) {
  const double warmup = static_cast<double>(c.warmup_epochs * steps_per_epoch);
  const double total = static_cast<double>(c.epochs * steps_per_epoch);
  const double s = static_cast<double>(step);
  if (s < warmup) return c.lr * s / warmup;
  if (s >= total) return 0.0;
  const double progress = (s - warmup) / (total - warmup);
  return c.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace sgear::train
