#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sgear/error.hpp"

namespace sgear::eval {

struct Prediction {
  std::string clip_id;
  std::vector<double> probs;
  std::size_t truth = 0;
  std::optional<std::size_t> verb;
  std::optional<std::size_t> noun;
  bool operator==(const Prediction&) const = default;
};

inline constexpr double kSimplexTolerance = 1e-6;

/// Per-clip class probabilities with ground truth.
struct PredictionSet {
  std::size_t num_classes = 0;
  std::vector<Prediction> items;

  std::size_t size() const { return items.size(); }
  bool empty() const { return items.empty(); }

  void validate() const {
    std::set<std::string> ids;
    for (const auto& p : items) {
      if (p.probs.size() != num_classes) {
        throw ValidationError(p.clip_id + ": " + std::to_string(p.probs.size()) + " scores for K = " +
                              std::to_string(num_classes));
      }
      if (p.truth >= num_classes) throw ValidationError(p.clip_id + ": ground truth out of range");
      double s = 0.0;
      for (double v : p.probs) {
        if (!std::isfinite(v) || v < 0.0) throw ValidationError(p.clip_id + ": invalid probability");
        s += v;
      }
      if (std::abs(s - 1.0) > kSimplexTolerance) {
        throw ValidationError(p.clip_id + ": probabilities sum to " + std::to_string(s));
      }
      if (!ids.insert(p.clip_id).second) throw ValidationError("duplicate clip id '" + p.clip_id + "'");
    }
  }

  bool operator==(const PredictionSet&) const = default;
};

/// Class indices by descending score; equal scores keep the lower index first.
inline std::vector<std::size_t> ranking(const std::vector<double>& scores) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return idx;
}

/// Whether `truth` is among the k best classes under the lower-index tie rule.
inline bool in_top_k(const std::vector<double>& scores, std::size_t truth, std::size_t k) {
  // Classes that outrank truth: strictly higher score, or equal score and lower index.
  std::size_t ahead = 0;
  for (std::size_t c = 0; c < scores.size(); ++c) {
    if (scores[c] > scores[truth] || (scores[c] == scores[truth] && c < truth)) ++ahead;
  }
  return ahead < k;
}

inline double topk_accuracy(const PredictionSet& p, std::size_t k) {
  if (p.empty()) throw EvaluationError("top-k accuracy of an empty prediction set");
  std::size_t hit = 0;
  for (const auto& x : p.items) hit += in_top_k(x.probs, x.truth, k);
  return static_cast<double>(hit) / static_cast<double>(p.size());
}

/// Unweighted mean over present classes of each class's top-5 recall.
inline double class_mean_top5_recall(const PredictionSet& p) {
  if (p.empty()) throw EvaluationError("mean top-5 recall of an empty prediction set");
  std::map<std::size_t, std::pair<std::size_t, std::size_t>> per;  // class -> (hits, count)
  for (const auto& x : p.items) {
    auto& [hit, n] = per[x.truth];
    hit += in_top_k(x.probs, x.truth, 5);
    ++n;
  }
  double s = 0.0;
  for (const auto& [c, hn] : per) s += static_cast<double>(hn.first) / static_cast<double>(hn.second);
  return s / static_cast<double>(per.size());
}

struct Metrics {
  std::size_t clips = 0;
  double top1 = 0.0;
  double top5 = 0.0;
  double mean_top5_recall = 0.0;
};

inline Metrics compute_metrics(const PredictionSet& p) {
  return {p.size(), topk_accuracy(p, 1), topk_accuracy(p, 5), class_mean_top5_recall(p)};
}

/// Weighted sum of probability vectors per clip, renormalized. Output follows the
/// clip order of the first set.
inline PredictionSet late_fuse(const std::vector<std::pair<PredictionSet, double>>& inputs) {
  if (inputs.empty()) throw ConfigError("late fusion needs at least one prediction set");
  double wsum = 0.0;
  for (const auto& [set, w] : inputs) {
    if (!(w >= 0.0)) throw ConfigError("fusion weights must be non-negative");
    wsum += w;
  }
  if (wsum <= 0.0) throw ConfigError("fusion weights sum to zero");

  const auto& base = inputs.front().first;
  std::vector<std::map<std::string, const Prediction*>> lookup;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto& s = inputs[i].first;
    if (s.num_classes != base.num_classes) {
      throw AlignmentError("prediction set " + std::to_string(i) + " has K = " + std::to_string(s.num_classes) +
                           ", expected " + std::to_string(base.num_classes));
    }
    std::map<std::string, const Prediction*> m;
    for (const auto& p : s.items) m[p.clip_id] = &p;
    lookup.push_back(std::move(m));
  }
  for (std::size_t i = 1; i < inputs.size(); ++i) {
    std::vector<std::string> missing, extra;
    for (const auto& [id, p] : lookup[0]) {
      if (!lookup[i].count(id)) missing.push_back(id);
    }
    for (const auto& [id, p] : lookup[i]) {
      if (!lookup[0].count(id)) extra.push_back(id);
    }
    if (!missing.empty() || !extra.empty()) {
      std::string msg = "prediction set " + std::to_string(i) + " does not match set 0";
      auto list = [](const std::vector<std::string>& ids) {
        std::string s;
        for (std::size_t j = 0; j < ids.size(); ++j) s += (j ? ", " : "") + ids[j];
        return s;
      };
      if (!missing.empty()) msg += "; missing: " + list(missing);
      if (!extra.empty()) msg += "; unexpected: " + list(extra);
      throw AlignmentError(msg);
    }
  }

  PredictionSet out;
  out.num_classes = base.num_classes;
  for (const auto& p : base.items) {
    Prediction f = p;
    std::fill(f.probs.begin(), f.probs.end(), 0.0);
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      const Prediction& q = *lookup[i].at(p.clip_id);
      if (q.truth != p.truth) throw AlignmentError(p.clip_id + ": ground truth differs between prediction sets");
      for (std::size_t c = 0; c < f.probs.size(); ++c) f.probs[c] += inputs[i].second * q.probs[c];
    }
    const double s = std::accumulate(f.probs.begin(), f.probs.end(), 0.0);
    for (double& v : f.probs) v /= s;
    out.items.push_back(std::move(f));
  }
  return out;
}

/// Named late-fusion recipes: member name -> weight.
inline std::vector<std::pair<std::string, double>> ensemble_preset(const std::string& name) {
  if (name == "ek100-sgear") return {{"vit", 2.5}, {"obj", 0.5}};
  if (name == "ek100-2b") return {{"vit", 2.5}, {"vit_low", 1.5}, {"obj", 0.5}};
  if (name == "ek100-4b") return {{"vit", 2.5}, {"vit_low", 1.5}, {"tsn", 1.0}, {"ircsn", 1.0}, {"obj", 0.5}};
  if (name == "ek55") return {{"vit", 1.5}, {"ircsn", 1.5}, {"tsn", 1.5}, {"flow", 1.0}, {"obj", 1.0}};
  throw ConfigError("unknown ensemble preset '" + name + "' (expected ek100-sgear, ek100-2b, ek100-4b or ek55)");
}

/// Action index -> (verb, noun).
struct ActionMap {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::size_t verbs = 0;
  std::size_t nouns = 0;
};

/// CSV with header "action,verb,noun" and one row per action 0..K-1.
inline ActionMap parse_action_map(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("action map is empty");
  std::map<std::size_t, std::pair<std::size_t, std::size_t>> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string a, v, n;
    if (!std::getline(ls, a, ',') || !std::getline(ls, v, ',') || !std::getline(ls, n)) {
      throw ValidationError("action map line " + std::to_string(lineno) + ": expected action,verb,noun");
    }
    try {
      rows[std::stoul(a)] = {std::stoul(v), std::stoul(n)};
    } catch (const std::exception&) {
      throw ValidationError("action map line " + std::to_string(lineno) + ": non-numeric field");
    }
  }
  ActionMap m;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto it = rows.find(i);
    if (it == rows.end()) throw ValidationError("action map skips action " + std::to_string(i));
    m.pairs.push_back(it->second);
    m.verbs = std::max(m.verbs, it->second.first + 1);
    m.nouns = std::max(m.nouns, it->second.second + 1);
  }
  return m;
}

inline ActionMap read_action_map(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ValidationError("cannot open action map '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_action_map(ss.str());
}

/// Verb and noun prediction sets obtained by summing action probabilities.
inline std::pair<PredictionSet, PredictionSet> marginalize(const PredictionSet& p, const ActionMap& map) {
  if (map.pairs.size() != p.num_classes) {
    throw AlignmentError("action map covers " + std::to_string(map.pairs.size()) + " actions, predictions have " +
                         std::to_string(p.num_classes));
  }
  PredictionSet verbs{map.verbs, {}}, nouns{map.nouns, {}};
  for (const auto& x : p.items) {
    Prediction v{x.clip_id, std::vector<double>(map.verbs, 0.0), map.pairs[x.truth].first, {}, {}};
    Prediction n{x.clip_id, std::vector<double>(map.nouns, 0.0), map.pairs[x.truth].second, {}, {}};
    for (std::size_t a = 0; a < x.probs.size(); ++a) {
      v.probs[map.pairs[a].first] += x.probs[a];
      n.probs[map.pairs[a].second] += x.probs[a];
    }
    verbs.items.push_back(std::move(v));
    nouns.items.push_back(std::move(n));
  }
  return {verbs, nouns};
}

/// JSON lines, one record per clip: {"clip_id", "probs", "truth"[, "verb", "noun"]}.
inline std::string encode_predictions(const PredictionSet& p) {
  std::ostringstream os;
  for (const auto& x : p.items) {
    nlohmann::json j = {{"clip_id", x.clip_id}, {"probs", x.probs}, {"truth", x.truth}};
    if (x.verb) j["verb"] = *x.verb;
    if (x.noun) j["noun"] = *x.noun;
    os << j.dump() << '\n';
  }
  return os.str();
}

inline PredictionSet decode_predictions(const std::string& text) {
  PredictionSet p;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      Prediction x;
      x.clip_id = j.at("clip_id").get<std::string>();
      x.probs = j.at("probs").get<std::vector<double>>();
      x.truth = j.at("truth").get<std::size_t>();
      if (j.contains("verb")) x.verb = j["verb"].get<std::size_t>();
      if (j.contains("noun")) x.noun = j["noun"].get<std::size_t>();
      if (p.items.empty()) p.num_classes = x.probs.size();
      p.items.push_back(std::move(x));
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("prediction line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  p.validate();
  return p;
}

inline void write_predictions(const std::string& path, const PredictionSet& p) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot write '" + path + "'");
  f << encode_predictions(p);
}

inline PredictionSet read_predictions(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot open prediction file '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return decode_predictions(ss.str());
}

/// Minimal CSV table: a header row and numeric or text cells.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  static std::string num(double v) {
    std::ostringstream os;
    os.precision(10);
    os << v;
    return os.str();
  }

  std::string str() const {
    std::ostringstream os;
    auto line = [&](const std::vector<std::string>& cells) {
      for (std::size_t i = 0; i < cells.size(); ++i) os << (i ? "," : "") << cells[i];
      os << '\n';
    };
    line(header);
    for (const auto& r : rows) line(r);
    return os.str();
  }

  void write(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ValidationError("cannot write '" + path + "'");
    f << str();
  }
};

}  // namespace sgear::eval
