#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "sgear/data/synthetic.hpp"
#include "sgear/eval/evaluate.hpp"
#include "sgear/train/checkpoint.hpp"

namespace fs = std::filesystem;
using namespace sgear;

namespace {

enum ExitCode { kOk = 0, kConfig = 2, kData = 3, kNumeric = 4 };

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config '" + path + "'");
  try {
    return nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }
}

/// Applies "a.b.c=value" overrides; the value is parsed as JSON when possible.
void apply_overrides(nlohmann::json& j, const std::vector<std::string>& sets) {
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + s + "' is not key=value");
    std::string ptr = "/" + s.substr(0, eq);
    std::replace(ptr.begin(), ptr.end(), '.', '/');
    const std::string raw = s.substr(eq + 1);
    nlohmann::json v;
    try {
      v = nlohmann::json::parse(raw);
    } catch (const nlohmann::json::exception&) {
      v = raw;
    }
    j[nlohmann::json::json_pointer(ptr)] = v;
  }
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw ConfigError("'" + item + "' is not a number");
    }
  }
  return out;
}

std::optional<diff::Tensor> load_language(const std::string& explicit_path, const std::string& manifest) {
  std::string path = explicit_path;
  if (path.empty()) {
    const auto guess = fs::path(manifest).parent_path() / "language.sglp";
    if (fs::exists(guess)) path = guess.string();
  }
  if (path.empty()) return std::nullopt;
  return data::read_prototype_file(path).to_tensor();
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string out;
  std::size_t classes = 12, frames = 8, clips = 300, tokens = 1, channels = 16, proto_dim = 0;
  std::string graph = "cycle";
  double p = 0.9, noise = 0.25, fps = 1.0, tau_a = 1.0;
  std::size_t blocks = 2;
  std::uint64_t seed = 0;
};

int run_synth(const SynthArgs& a) {
  data::SyntheticOptions o;
  o.num_classes = a.classes;
  o.frames = a.frames;
  o.clips = a.clips;
  o.tokens = a.tokens;
  o.channels = a.channels;
  o.proto_dim = a.proto_dim;
  o.noise = a.noise;
  o.fps = a.fps;
  o.tau_a = a.tau_a;
  o.seed = a.seed;
  if (a.graph == "cycle") {
    o.co_graph = data::cycle_graph(a.classes, a.p);
  } else if (a.graph == "block") {
    o.co_graph = data::block_graph(a.classes, a.blocks, a.p);
  } else if (a.graph == "uniform") {
    o.co_graph = data::uniform_graph(a.classes);
  } else if (a.graph == "identity") {
    o.co_graph = data::identity_graph(a.classes);
  } else {
    throw ConfigError("graph must be cycle, block, uniform or identity");
  }
  const auto ds = data::generate_synthetic_dataset(o);
  data::write_synthetic_dataset(a.out, ds);
  std::cout << "wrote " << a.clips << " clips (K=" << a.classes << ", T=" << a.frames << ") to " << a.out << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string config, data, language, out, log_csv;
  std::vector<std::string> sets;
};

int run_train(const TrainArgs& a) {
  nlohmann::json cfg = a.config.empty() ? nlohmann::json::object() : read_json_file(a.config);
  apply_overrides(cfg, a.sets);

  const auto ds = data::load_dataset(a.data);
  model::ModelConfig base;
  if (cfg.contains("model_preset")) base = train::model_preset(cfg["model_preset"].get<std::string>());
  base.num_classes = ds.manifest.num_classes;
  base.frames = ds.manifest.frames();
  if (!ds.features.empty() && ds.features[0].tokens == 1) {
    base.encoder.mode = "adapter";
    base.encoder.input_dim = ds.features[0].dim;
  } else if (!ds.features.empty()) {
    // Square frames: take the image side and channel count from the data.
    const auto side = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(ds.features[0].tokens))));
    if (side * side == ds.features[0].tokens) base.encoder.input_size = side;
    base.encoder.channels = ds.features[0].dim;
  }
  auto mcfg = model::model_config_from_json(cfg.value("model", nlohmann::json::object()), base);
  auto tcfg = train::train_config_from_json(cfg.value("train", nlohmann::json::object()));
  if (!cfg.contains("train") || !cfg["train"].contains("toggles")) tcfg.toggles = mcfg.toggles;
  if (cfg.contains("model") && !cfg["model"].contains("toggles")) mcfg.toggles = tcfg.toggles;
  if (mcfg.frames != ds.manifest.frames()) throw ConfigError("model frame count differs from the dataset window");

  auto language = load_language(a.language, a.data);
  model::SGearModel m(mcfg, language);
  const auto samples = train::make_samples(ds);
  const auto init = train::proto_init_from(cfg.value("proto_init", std::string("random")));
  for (const auto& w : train::init_visual_prototypes(m, init, tcfg, samples)) std::cerr << "warning: " << w << "\n";

  train::Trainer trainer(m, tcfg, samples.size());
  eval::CsvTable log{{"epoch", "total", "sem", "reg", "cls", "past", "feat", "train_top1"}, {}};
  trainer.fit(samples, [&](const train::EpochReport& r) {
    const double acc = train::top1_accuracy(m, samples);
    std::cout << "epoch " << r.epoch << " loss " << r.loss.total << " cls " << r.loss.cls << " top1 " << acc << "\n";
    using eval::CsvTable;
    log.rows.push_back({std::to_string(r.epoch), CsvTable::num(r.loss.total), CsvTable::num(r.loss.sem),
                        CsvTable::num(r.loss.reg), CsvTable::num(r.loss.cls), CsvTable::num(r.loss.past),
                        CsvTable::num(r.loss.feat), CsvTable::num(acc)});
  });
  train::save_checkpoint(a.out, train::make_checkpoint(m, tcfg, &trainer));
  if (!a.log_csv.empty()) log.write(a.log_csv);
  std::cout << "saved " << a.out << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint, data, predictions, csv_dir, action_map, taus, ratios;
};

int run_eval(const EvalArgs& a) {
  const auto ck = train::load_checkpoint(a.checkpoint);
  auto m = train::restore_model(ck);
  const auto ds = data::load_dataset(a.data);
  if (ds.manifest.frames() != m->config().frames) throw ConfigError("dataset window differs from the model's");
  const auto samples = train::make_samples(ds);

  auto preds = eval::predict(*m, samples);
  std::vector<std::pair<std::string, eval::Metrics>> named{{"action", eval::compute_metrics(preds)}};
  if (!a.action_map.empty()) {
    const auto [verbs, nouns] = eval::marginalize(preds, eval::read_action_map(a.action_map));
    named.emplace_back("verb", eval::compute_metrics(verbs));
    named.emplace_back("noun", eval::compute_metrics(nouns));
  }
  const auto table = eval::metrics_table(named);
  std::cout << table.str();
  if (!a.predictions.empty()) eval::write_predictions(a.predictions, preds);
  if (!a.csv_dir.empty()) fs::create_directories(a.csv_dir);
  if (!a.csv_dir.empty()) table.write((fs::path(a.csv_dir) / "metrics.csv").string());

  if (!a.taus.empty()) {
    const auto rows =
        eval::eval_variable_tau(*m, samples, ds.manifest.tau_a, ds.manifest.fps, parse_list(a.taus));
    const auto t = eval::tau_table(rows);
    std::cout << t.str();
    if (!a.csv_dir.empty()) t.write((fs::path(a.csv_dir) / "tau.csv").string());
  }
  if (!a.ratios.empty()) {
    const auto t = eval::ratio_table(eval::prototype_ratio_sweep(*m, samples, parse_list(a.ratios)));
    std::cout << t.str();
    if (!a.csv_dir.empty()) t.write((fs::path(a.csv_dir) / "ratios.csv").string());
  }
  return kOk;
}

// ---------------------------------------------------------------------------

struct EnsembleArgs {
  std::vector<std::string> preds;
  std::vector<double> weights;
  std::string preset, out, csv;
};

int run_ensemble(const EnsembleArgs& a) {
  std::vector<std::pair<eval::PredictionSet, double>> inputs;
  if (!a.preset.empty()) {
    // Members are given as name=path.
    std::map<std::string, std::string> paths;
    for (const auto& p : a.preds) {
      const auto eq = p.find('=');
      if (eq == std::string::npos) throw ConfigError("with --preset, pass predictions as member=path");
      paths[p.substr(0, eq)] = p.substr(eq + 1);
    }
    for (const auto& [member, w] : eval::ensemble_preset(a.preset)) {
      auto it = paths.find(member);
      if (it == paths.end()) throw ConfigError("preset '" + a.preset + "' needs member '" + member + "'");
      inputs.emplace_back(eval::read_predictions(it->second), w);
    }
  } else {
    if (a.weights.size() != a.preds.size()) throw ConfigError("give one --weight per --pred");
    for (std::size_t i = 0; i < a.preds.size(); ++i) inputs.emplace_back(eval::read_predictions(a.preds[i]), a.weights[i]);
  }
  const auto fused = eval::late_fuse(inputs);
  if (!a.out.empty()) eval::write_predictions(a.out, fused);
  const auto table = eval::metrics_table({{"fused", eval::compute_metrics(fused)}});
  std::cout << table.str();
  if (!a.csv.empty()) table.write(a.csv);
  return kOk;
}

// ---------------------------------------------------------------------------

struct AnalyzeArgs {
  std::string checkpoint, out_dir, data;
  std::size_t neighbors = 5;
};

int run_analyze(const AnalyzeArgs& a) {
  const auto ck = train::load_checkpoint(a.checkpoint);
  const auto m = train::restore_model(ck);
  std::vector<std::string> names;
  if (!a.data.empty()) names = data::read_manifest(a.data).class_names;
  fs::create_directories(a.out_dir);
  const auto out = [&](const char* f) { return (fs::path(a.out_dir) / f).string(); };

  eval::similarity_table(m->visual(), names).write(out("similarity_visual.csv"));
  const diff::Tensor* lang = m->has_language() ? &m->language() : nullptr;
  if (lang) eval::similarity_table(*lang, names).write(out("similarity_language.csv"));
  eval::nearest_table(m->visual(), lang, names, a.neighbors).write(out("nearest.csv"));
  if (lang) {
    const double score = model::alignment_score(m->visual(), *lang);
    eval::CsvTable{{"alignment_score"}, {{eval::CsvTable::num(score)}}}.write(out("alignment.csv"));
    std::cout << "alignment score " << score << "\n";
  }
  std::cout << "wrote analysis to " << a.out_dir << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semantic-guided action anticipation: synthetic data, training, evaluation and analysis"};
  app.require_subcommand(1);

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth->add_option("--out", sa.out, "Output directory")->required();
  synth->add_option("--classes", sa.classes, "Number of action classes");
  synth->add_option("--frames", sa.frames, "Frames per clip");
  synth->add_option("--clips", sa.clips, "Number of clips");
  synth->add_option("--tokens", sa.tokens, "Tokens per frame (pixels for image-like data)");
  synth->add_option("--channels", sa.channels, "Values per token");
  synth->add_option("--proto-dim", sa.proto_dim, "Language prototype width (default: channels)");
  synth->add_option("--graph", sa.graph, "Co-occurrence graph: cycle, block, uniform, identity");
  synth->add_option("--p", sa.p, "Successor / within-block probability");
  synth->add_option("--blocks", sa.blocks, "Block count for the block graph");
  synth->add_option("--noise", sa.noise, "Frame noise standard deviation");
  synth->add_option("--fps", sa.fps, "Frame rate");
  synth->add_option("--tau-a", sa.tau_a, "Anticipation time in seconds");
  synth->add_option("--seed", sa.seed, "Random seed");

  TrainArgs ta;
  auto* trn = app.add_subcommand("train", "Train a model and write a checkpoint");
  trn->add_option("--config", ta.config, "JSON config with model, train and proto_init sections");
  trn->add_option("--data", ta.data, "Dataset manifest")->required();
  trn->add_option("--language", ta.language, "Language prototype file (default: next to the manifest)");
  trn->add_option("--out", ta.out, "Checkpoint path")->required();
  trn->add_option("--set", ta.sets, "Override, e.g. train.lr=0.01 or model.toggles=\"full\"");
  trn->add_option("--log-csv", ta.log_csv, "Per-epoch loss log");

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  ev->add_option("--checkpoint", ea.checkpoint, "Checkpoint path")->required();
  ev->add_option("--data", ea.data, "Dataset manifest")->required();
  ev->add_option("--predictions", ea.predictions, "Write per-clip predictions (JSON lines)");
  ev->add_option("--csv-dir", ea.csv_dir, "Directory for CSV reports");
  ev->add_option("--action-map", ea.action_map, "CSV action,verb,noun for verb/noun metrics");
  ev->add_option("--tau", ea.taus, "Comma-separated anticipation times");
  ev->add_option("--ratios", ea.ratios, "Comma-separated prototype subset ratios");

  EnsembleArgs na;
  auto* ens = app.add_subcommand("ensemble", "Late-fuse prediction files");
  ens->add_option("--pred", na.preds, "Prediction file (member=path with --preset)")->required();
  ens->add_option("--weight", na.weights, "Weight per prediction file");
  ens->add_option("--preset", na.preset, "Named weights: ek100-sgear, ek100-2b, ek100-4b, ek55");
  ens->add_option("--out", na.out, "Fused prediction file");
  ens->add_option("--csv", na.csv, "Metrics CSV");

  AnalyzeArgs aa;
  auto* an = app.add_subcommand("analyze", "Export prototype similarity, alignment and neighbors");
  an->add_option("--checkpoint", aa.checkpoint, "Checkpoint path")->required();
  an->add_option("--out-dir", aa.out_dir, "Output directory")->required();
  an->add_option("--data", aa.data, "Manifest for class names");
  an->add_option("--neighbors", aa.neighbors, "Neighbors per class");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*synth) return run_synth(sa);
    if (*trn) return run_train(ta);
    if (*ev) return run_eval(ea);
    if (*ens) return run_ensemble(na);
    if (*an) return run_analyze(aa);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kConfig;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kNumeric;
  } catch (const Error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  }
  return kOk;
}
