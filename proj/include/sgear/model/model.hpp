#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sgear/data/feature_file.hpp"
#include "sgear/model/decoder.hpp"
#include "sgear/model/encoder.hpp"
#include "sgear/model/pa.hpp"
#include "sgear/model/semantic.hpp"
#include "sgear/model/tca.hpp"

namespace sgear::model {

/// Which parts of the architecture and objective are active.
struct Toggles {
  bool tca = true;
  bool pa = true;
  bool sem = true;
  bool language_as_visual = false;  // visual prototypes replaced by the frozen language store

  bool cosine_head() const { return sem || language_as_visual; }
  bool uses_language() const { return sem || language_as_visual; }

  bool operator==(const Toggles&) const = default;

  std::string describe() const {
    std::string s = std::string("tca=") + (tca ? "on" : "off") + " pa=" + (pa ? "on" : "off") +
                    " sem=" + (sem ? "on" : "off");
    if (language_as_visual) s += " language-as-visual";
    return s;
  }

  /// "1" baseline, "2" +Sem, "3" +TCA, "4" PA+Sem, "5" TCA+PA on fixed language
  /// prototypes, "full" everything.
  static Toggles named(const std::string& name) {
    if (name == "1") return {false, false, false, false};
    if (name == "2") return {false, false, true, false};
    if (name == "3") return {true, false, false, false};
    if (name == "4") return {false, true, true, false};
    if (name == "5") return {true, true, false, true};
    if (name == "full") return {true, true, true, false};
    throw ConfigError("unknown toggle preset '" + name + "' (expected 1-5 or full)");
  }
};

struct ModelConfig {
  EncoderConfig encoder;
  std::size_t tca_blocks = 2;
  std::size_t pa_blocks = 1;
  std::size_t pa_k = 1;
  PaScale pa_scale = PaScale::kD;
  DecoderConfig decoder;
  std::size_t num_classes = 4;
  std::size_t frames = 4;
  double subset_ratio = 1.0;
  std::uint64_t subset_seed = 0;
  FeatLoss feat_loss = FeatLoss::kMse;
  bool freeze_visual = false;
  Toggles toggles;
  std::uint64_t seed = 0;

  std::size_t d() const { return encoder.d; }

  void validate() const {
    encoder.validate();
    decoder.validate();
    if (decoder.d != encoder.d) {
      throw ConfigError("decoder width " + std::to_string(decoder.d) + " differs from encoder width " +
                        std::to_string(encoder.d));
    }
    if (num_classes < 1) throw ConfigError("model needs at least one class");
    if (frames < 1) throw ConfigError("model needs at least one frame");
    if (toggles.tca && encoder.adapter()) {
      throw ConfigError("TCA operates on patch tokens; disable it in adapter mode");
    }
    if (toggles.pa && pa_blocks != 1) throw ConfigError("exactly one PA block is supported");
    if (toggles.pa && (pa_k == 0 || pa_k > subset_size(num_classes, subset_ratio))) {
      throw ConfigError("PA selects " + std::to_string(pa_k) + " prototypes per frame from " +
                        std::to_string(subset_size(num_classes, subset_ratio)));
    }
    subset_size(num_classes, subset_ratio);
  }
};

inline std::string to_string(PaScale s) { return s == PaScale::kD ? "d" : "sqrt_d"; }
inline std::string to_string(FeatLoss f) { return f == FeatLoss::kMse ? "mse" : "l2"; }

inline PaScale pa_scale_from(const std::string& s) {
  if (s == "d") return PaScale::kD;
  if (s == "sqrt_d") return PaScale::kSqrtD;
  throw ConfigError("pa_scale must be 'd' or 'sqrt_d', got '" + s + "'");
}

inline FeatLoss feat_loss_from(const std::string& s) {
  if (s == "mse") return FeatLoss::kMse;
  if (s == "l2") return FeatLoss::kL2;
  throw ConfigError("feat_loss must be 'mse' or 'l2', got '" + s + "'");
}

inline nlohmann::json to_json(const ModelConfig& c) {
  return {{"encoder",
           {{"mode", c.encoder.mode},
            {"patch_size", c.encoder.patch_size},
            {"depth", c.encoder.depth},
            {"heads", c.encoder.heads},
            {"d", c.encoder.d},
            {"input_size", c.encoder.input_size},
            {"channels", c.encoder.channels},
            {"input_dim", c.encoder.input_dim},
            {"mlp_ratio", c.encoder.mlp_ratio}}},
          {"tca_blocks", c.tca_blocks},
          {"pa_blocks", c.pa_blocks},
          {"pa_k", c.pa_k},
          {"pa_scale", to_string(c.pa_scale)},
          {"decoder",
           {{"layers", c.decoder.layers},
            {"heads", c.decoder.heads},
            {"mlp_hidden", c.decoder.mlp_hidden},
            {"d", c.decoder.d},
            {"max_rollout", c.decoder.max_rollout}}},
          {"num_classes", c.num_classes},
          {"frames", c.frames},
          {"subset_ratio", c.subset_ratio},
          {"subset_seed", c.subset_seed},
          {"feat_loss", to_string(c.feat_loss)},
          {"freeze_visual", c.freeze_visual},
          {"toggles",
           {{"tca", c.toggles.tca},
            {"pa", c.toggles.pa},
            {"sem", c.toggles.sem},
            {"language_as_visual", c.toggles.language_as_visual}}},
          {"seed", c.seed}};
}

/// Reads a model config; absent keys keep the defaults already in `c`.
inline ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig c = {}) {
  try {
    if (j.contains("encoder")) {
      const auto& e = j["encoder"];
      c.encoder.mode = e.value("mode", c.encoder.mode);
      c.encoder.patch_size = e.value("patch_size", c.encoder.patch_size);
      c.encoder.depth = e.value("depth", c.encoder.depth);
      c.encoder.heads = e.value("heads", c.encoder.heads);
      c.encoder.d = e.value("d", c.encoder.d);
      c.encoder.input_size = e.value("input_size", c.encoder.input_size);
      c.encoder.channels = e.value("channels", c.encoder.channels);
      c.encoder.input_dim = e.value("input_dim", c.encoder.input_dim);
      c.encoder.mlp_ratio = e.value("mlp_ratio", c.encoder.mlp_ratio);
    }
    c.tca_blocks = j.value("tca_blocks", c.tca_blocks);
    c.pa_blocks = j.value("pa_blocks", c.pa_blocks);
    c.pa_k = j.value("pa_k", c.pa_k);
    if (j.contains("pa_scale")) c.pa_scale = pa_scale_from(j["pa_scale"].get<std::string>());
    if (j.contains("decoder")) {
      const auto& d = j["decoder"];
      c.decoder.layers = d.value("layers", c.decoder.layers);
      c.decoder.heads = d.value("heads", c.decoder.heads);
      c.decoder.mlp_hidden = d.value("mlp_hidden", c.decoder.mlp_hidden);
      c.decoder.d = d.value("d", c.decoder.d);
      c.decoder.max_rollout = d.value("max_rollout", c.decoder.max_rollout);
    }
    c.num_classes = j.value("num_classes", c.num_classes);
    c.frames = j.value("frames", c.frames);
    c.subset_ratio = j.value("subset_ratio", c.subset_ratio);
    c.subset_seed = j.value("subset_seed", c.subset_seed);
    if (j.contains("feat_loss")) c.feat_loss = feat_loss_from(j["feat_loss"].get<std::string>());
    c.freeze_visual = j.value("freeze_visual", c.freeze_visual);
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
    throw ConfigError(std::string("model config: ") + e.what());
  }
  return c;
}

/// Everything one forward pass produces for a clip.
struct Forward {
  ClipFeatures features;
  Tensor i0;      // raw class-token stream, T' x d
  Tensor ibar0;   // after TCA (equals i0 without TCA)
  Tensor itilde;  // PA output (empty without PA)
  Tensor ihat;    // decoder input, T' x d
  Tensor zeta;    // decoder output, (T' + rollout) x d
  Tensor zhat;    // head input after cosine attention (equals zeta for a linear head)
  Tensor logits;  // (T' + rollout) x K
  std::vector<std::vector<std::size_t>> selected;

  /// Class probabilities of the final step.
  std::vector<double> probabilities() const {
    return diff::softmax(diff::slice_rows(logits.detach(), logits.dim(0) - 1, 1)).values();
  }
};

struct ForwardOptions {
  std::size_t frames_used = 0;  // leading frames to observe; 0 means all
  std::size_t rollout = 0;      // extra autoregressive steps
  const std::vector<std::vector<std::size_t>>* selected = nullptr;  // fixed PA choice
};

/// Scalar values of each loss part with the weights actually applied.
struct LossReport {
  Tensor total;
  LossParts parts;
  LossWeights applied;
  bool past_empty = false;
  bool feat_empty = false;

  double value(const Tensor& t) const { return t.node() ? t.item() : 0.0; }
};

class SGearModel {
 public:
  /// `language` is the K x d_l label-embedding store; required when Sem or the
  /// language-as-visual mode is on.
  explicit SGearModel(ModelConfig cfg, std::optional<Tensor> language = std::nullopt)
      : cfg_(std::move(cfg)) {
    cfg_.validate();
    Rng rng(cfg_.seed);
    const std::size_t d = cfg_.d(), k = cfg_.num_classes;
    if (cfg_.toggles.uses_language() && !language) {
      throw ConfigError("semantic guidance needs a language prototype store");
    }
    if (language) {
      if (language->rank() != 2 || language->dim(0) != k) {
        throw DimensionError("language store " + diff::shape_str(language->shape()) + " does not have " +
                             std::to_string(k) + " rows");
      }
      language_ = language->detach();
      targets_ = LanguageTargets(language_);
    }
    subset_ = PrototypeSubset::sample(k, cfg_.subset_ratio, cfg_.subset_seed);

    if (cfg_.encoder.adapter()) {
      adapter_ = FeatureAdapter(params_, cfg_.encoder);
    } else {
      vit_ = VitLiteEncoder(params_, cfg_.encoder, rng);
      encoder_norm_ = nn::LayerNorm(params_, "encoder.norm", d);
    }
    const std::size_t mlp = cfg_.encoder.mlp_ratio * d;
    if (cfg_.toggles.tca) tca_ = TcaStack(params_, cfg_.tca_blocks, d, cfg_.encoder.heads, mlp, cfg_.frames, rng);
    if (cfg_.toggles.pa) pa_ = PaBlock(params_, d, cfg_.frames, cfg_.pa_k, cfg_.pa_scale, rng);
    decoder_ = CausalDecoder(params_, cfg_.decoder, cfg_.frames, rng);
    if (cfg_.toggles.cosine_head()) head_alpha_ = params_.add("head.alpha", Tensor::scalar(0.0));
    classifier_ = nn::Linear(params_, "head.cls", d, k, rng);

    if (cfg_.toggles.language_as_visual) {
      if (language_.dim(1) != d) {
        throw ConfigError("language-as-visual needs language width " + std::to_string(language_.dim(1)) +
                          " to equal d = " + std::to_string(d));
      }
      visual_ = params_.add("proto.visual", language_.detach(), false);
    } else {
      visual_ = params_.add("proto.visual", random_prototypes(k, d, cfg_.seed ^ 0x9e3779b97f4a7c15ULL),
                            !cfg_.freeze_visual);
    }
  }

  const ModelConfig& config() const { return cfg_; }
  diff::ParameterStore& parameters() { return params_; }
  const diff::ParameterStore& parameters() const { return params_; }
  const Tensor& visual() const { return visual_; }
  const Tensor& language() const { return language_; }
  bool has_language() const { return language_.node() != nullptr; }
  const LanguageTargets& language_targets() const { return targets_; }
  const PrototypeSubset& subset() const { return subset_; }
  const CausalDecoder& decoder() const { return decoder_; }
  const nn::Linear& classifier() const { return classifier_; }
  const Tensor& head_alpha() const { return head_alpha_; }
  const std::optional<TcaStack>& tca() const { return tca_; }
  const std::optional<PaBlock>& pa() const { return pa_; }

  /// Overwrites the visual prototype values in place.
  void set_visual(const Tensor& protos) {
    if (protos.shape() != visual_.shape()) {
      throw DimensionError("visual prototypes " + diff::shape_str(protos.shape()) + " vs store " +
                           diff::shape_str(visual_.shape()));
    }
    std::copy(protos.data().begin(), protos.data().end(), visual_.mutable_data().begin());
  }

  /// Replaces the prototype subset (the subset-ratio sweep evaluates one model at several ratios).
  void set_subset(PrototypeSubset s) {
    if (s.classes != cfg_.num_classes) throw DimensionError("subset class count mismatch");
    subset_ = std::move(s);
  }

  ClipFeatures encode(const data::FeatureArray& clip) const {
    if (adapter_) return adapter_->adapt(clip, prototype_stats(visual_.detach()));
    return vit_->encode(clip);
  }

  Forward forward(const data::FeatureArray& clip, const ForwardOptions& opt = {}) const {
    if (clip.frames != cfg_.frames) {
      throw DimensionError("clip has " + std::to_string(clip.frames) + " frames, model expects " +
                           std::to_string(cfg_.frames));
    }
    Forward f;
    f.features = encode(clip);
    const std::size_t used = opt.frames_used ? opt.frames_used : cfg_.frames;
    if (used > cfg_.frames) throw ConfigError("cannot observe more frames than the clip holds");
    f.features.frames.resize(used);
    return forward_features(std::move(f), opt);
  }

  /// Runs TCA, PA, the decoder and the head on already encoded frames.
  Forward forward_features(Forward f, const ForwardOptions& opt = {}) const {
    // vit-lite closes with a final norm on the class tokens, after the TCA blocks.
    auto close = [&](const Tensor& cls) { return vit_ ? encoder_norm_(cls) : cls; };
    f.i0 = close(f.features.cls_view());
    f.ibar0 = f.i0;
    if (tca_) f.ibar0 = close((*tca_)(f.features).cls_view());
    f.ihat = f.ibar0;
    if (pa_) {
      auto out = (*pa_)(f.i0, visual_, subset_, opt.selected);
      f.itilde = out.itilde;
      f.selected = std::move(out.selected);
      f.ihat = merge_streams(f.ibar0, f.itilde, pa_->lambda());
    }
    if (opt.rollout) {
      auto r = decoder_.rollout(f.ihat, opt.rollout);
      f.zeta = r.outputs;
    } else {
      f.zeta = decoder_.decode(f.ihat);
    }
    f.zhat = cfg_.toggles.cosine_head() ? cosine_attention(f.zeta, visual_, head_alpha_, subset_) : f.zeta;
    f.logits = classifier_(f.zhat);
    return f;
  }

  /// Loss weights after masking the terms the toggles switch off.
  LossWeights effective_weights(const LossWeights& w) const {
    LossWeights e = w;
    if (!cfg_.toggles.sem) e.sem = 0.0;
    if (!cfg_.toggles.uses_language()) e.reg = 0.0;
    return e;
  }

  /// Loss terms for one clip. `labels[t]` is the (optional) label of observed frame t and
  /// `target` the anticipated action; step t is supervised with the label of step t+1.
  LossReport losses(const Forward& f, const std::vector<std::optional<std::size_t>>& labels,
                    std::size_t target, const LossWeights& weights) const {
    const std::size_t t = f.zeta.dim(0);
    if (target >= cfg_.num_classes) {
      throw IndexError("target class " + std::to_string(target) + " of " + std::to_string(cfg_.num_classes));
    }
    std::vector<std::optional<std::size_t>> future(t);
    for (std::size_t i = 0; i + 1 < t; ++i) future[i] = i + 1 < labels.size() ? labels[i + 1] : std::nullopt;
    future[t - 1] = target;

    LossReport r;
    r.applied = effective_weights(weights);
    r.parts.cls = guarded("cls", [&] { return diff::cross_entropy(diff::slice_rows(f.logits, t - 1, 1), target); });

    std::vector<std::optional<std::size_t>> past(future.begin(), future.end() - 1);
    OptionalLoss lp;
    r.parts.past = guarded("past", [&] {
      lp = loss_past(t > 1 ? diff::slice_rows(f.logits, 0, t - 1) : f.logits, past);
      return lp.value;
    });
    r.past_empty = lp.empty;

    OptionalLoss lf;
    r.parts.feat = guarded("feat", [&] {
      lf = loss_feat(f.zeta.dim(0) == f.ihat.dim(0) ? f.zeta : diff::slice_rows(f.zeta, 0, f.ihat.dim(0)),
                     f.ihat, cfg_.feat_loss);
      return lf.value;
    });
    r.feat_empty = lf.empty;

    if (r.applied.sem != 0.0 || r.applied.reg != 0.0) {
      std::vector<Tensor> sem, reg;
      for (std::size_t i = 0; i < t; ++i) {
        if (!future[i]) continue;
        const Tensor z = diff::slice_rows(f.zeta, i, 1);
        if (r.applied.sem != 0.0) {
          sem.push_back(guarded("sem", [&] { return loss_sem(z, visual_, targets_.row(*future[i], subset_), subset_); }));
        }
        if (r.applied.reg != 0.0) reg.push_back(guarded("reg", [&] { return loss_reg(z, visual_, *future[i]); }));
      }
      r.parts.sem = guarded("sem", [&] { return mean_of(sem); });
      r.parts.reg = guarded("reg", [&] { return mean_of(reg); });
    }
    r.total = guarded("total", [&] { return total_loss(r.parts, r.applied); });
    return r;
  }

 private:
  /// Re-raises numeric failures with the name of the loss part that produced them.
  template <class F>
  static Tensor guarded(const char* part, F&& fn) {
    try {
      return fn();
    } catch (const NumericError& e) {
      throw NumericError(std::string("loss part '") + part + "': " + e.what());
    }
  }

  static Tensor mean_of(const std::vector<Tensor>& terms) {
    if (terms.empty()) return {};
    Tensor s = terms[0];
    for (std::size_t i = 1; i < terms.size(); ++i) s = diff::add(s, terms[i]);
    return diff::scale(s, 1.0 / static_cast<double>(terms.size()));
  }

  ModelConfig cfg_;
  diff::ParameterStore params_;
  Tensor language_;
  LanguageTargets targets_;
  PrototypeSubset subset_;
  std::optional<VitLiteEncoder> vit_;
  std::optional<FeatureAdapter> adapter_;
  nn::LayerNorm encoder_norm_;
  std::optional<TcaStack> tca_;
  std::optional<PaBlock> pa_;
  CausalDecoder decoder_;
  Tensor head_alpha_;
  nn::Linear classifier_;
  Tensor visual_;
};

}  // namespace sgear::model
