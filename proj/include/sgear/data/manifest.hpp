#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sgear/data/feature_file.hpp"
#include "sgear/data/window.hpp"

namespace sgear::data {

struct FrameLabel {
  double time = 0.0;
  std::size_t cls = 0;
  bool operator==(const FrameLabel&) const = default;
};

/// One labeled action segment: the clip to observe and the action it precedes.
struct SegmentRecord {
  std::string clip_id;
  std::string feature_path;  // relative to the manifest, or "inline" for in-memory data
  double start_time = 0.0;   // tau_s, the action start in seconds
  std::vector<FrameLabel> labels;
  std::size_t target = 0;
  bool operator==(const SegmentRecord&) const = default;
};

inline constexpr int kManifestVersion = 1;
inline constexpr const char* kInlineFeatures = "inline";

/// A dataset description. Serialized as JSON lines: a versioned header object followed
/// by one segment record per line.
struct DatasetManifest {
  std::size_t num_classes = 0;
  std::vector<std::string> class_names;
  double tau_o = 1.0;
  double tau_a = 1.0;
  double fps = 1.0;
  std::vector<SegmentRecord> records;

  std::size_t frames() const { return frame_count(tau_o, fps); }

  std::vector<double> window(const SegmentRecord& r) const {
    return sample_observation_window(r.start_time, tau_o, tau_a, fps);
  }

  void validate() const {
    if (class_names.size() != num_classes) {
      throw ValidationError("manifest lists " + std::to_string(class_names.size()) +
                            " class names for K = " + std::to_string(num_classes));
    }
    std::set<std::string> unique(class_names.begin(), class_names.end());
    if (unique.size() != class_names.size()) throw ValidationError("class names are not unique");
    frames();
    for (const auto& r : records) {
      if (r.start_time < 0.0) throw ValidationError(r.clip_id + ": negative start time");
      if (r.target >= num_classes) {
        throw ValidationError(r.clip_id + ": target class " + std::to_string(r.target) +
                              " outside [0, " + std::to_string(num_classes) + ")");
      }
      for (const auto& l : r.labels) {
        if (l.cls >= num_classes) throw ValidationError(r.clip_id + ": frame label out of range");
        if (!(l.time < r.start_time)) {
          throw ValidationError(r.clip_id + ": frame label at or after the action start");
        }
      }
    }
  }

  bool operator==(const DatasetManifest&) const = default;
};

/// Label of each observed frame: the record's label whose time lies within half a
/// frame interval of the frame time. Frames with no such label are unlabeled.
inline std::vector<std::optional<std::size_t>> frame_labels(const DatasetManifest& m,
                                                            const SegmentRecord& r) {
  const auto times = m.window(r);
  std::vector<std::optional<std::size_t>> out(times.size());
  const double half = 0.5 / m.fps;
  for (std::size_t i = 0; i < times.size(); ++i) {
    for (const auto& l : r.labels) {
      if (std::abs(l.time - times[i]) < half) {
        out[i] = l.cls;
        break;
      }
    }
  }
  return out;
}

inline std::string encode_manifest(const DatasetManifest& m) {
  using nlohmann::json;
  std::ostringstream os;
  json header = {{"format", "sgear-manifest"},
                 {"version", kManifestVersion},
                 {"num_classes", m.num_classes},
                 {"class_names", m.class_names},
                 {"tau_o", m.tau_o},
                 {"tau_a", m.tau_a},
                 {"fps", m.fps}};
  os << header.dump() << '\n';
  for (const auto& r : m.records) {
    json labels = json::array();
    for (const auto& l : r.labels) labels.push_back({l.time, l.cls});
    json rec = {{"clip_id", r.clip_id},
                {"feature_path", r.feature_path},
                {"start_time", r.start_time},
                {"labels", labels},
                {"target", r.target}};
    os << rec.dump() << '\n';
  }
  return os.str();
}

inline DatasetManifest decode_manifest(const std::string& text) {
  using nlohmann::json;
  DatasetManifest m;
  std::istringstream in(text);
  std::string line;
  std::size_t offset = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    const std::size_t line_at = offset;
    offset += line.size() + 1;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
      if (!have_header) {
        if (j.value("format", "") != "sgear-manifest") {
          throw FormatError("missing sgear-manifest header", line_at);
        }
        if (j.at("version").get<int>() != kManifestVersion) {
          throw FormatError("unsupported manifest version", line_at);
        }
        m.num_classes = j.at("num_classes").get<std::size_t>();
        m.class_names = j.at("class_names").get<std::vector<std::string>>();
        m.tau_o = j.at("tau_o").get<double>();
        m.tau_a = j.at("tau_a").get<double>();
        m.fps = j.at("fps").get<double>();
        have_header = true;
        continue;
      }
      SegmentRecord r;
      r.clip_id = j.at("clip_id").get<std::string>();
      r.feature_path = j.at("feature_path").get<std::string>();
      r.start_time = j.at("start_time").get<double>();
      r.target = j.at("target").get<std::size_t>();
      for (const auto& l : j.value("labels", json::array())) {
        r.labels.push_back({l.at(0).get<double>(), l.at(1).get<std::size_t>()});
      }
      m.records.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw FormatError(std::string("manifest line: ") + e.what(), line_at);
    }
  }
  if (!have_header) throw FormatError("empty manifest", 0);
  m.validate();
  return m;
}

inline void write_manifest(const std::string& path, const DatasetManifest& m) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << encode_manifest(m);
}

inline DatasetManifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open '" + path + "'", 0);
  std::stringstream ss;
  ss << in.rdbuf();
  return decode_manifest(ss.str());
}

/// A manifest together with the feature arrays of its records (same order).
struct Dataset {
  DatasetManifest manifest;
  std::vector<FeatureArray> features;

  std::size_t size() const { return manifest.records.size(); }
};

inline Dataset load_dataset(const std::string& manifest_path) {
  Dataset ds;
  ds.manifest = read_manifest(manifest_path);
  const auto base = std::filesystem::path(manifest_path).parent_path();
  const std::size_t t = ds.manifest.frames();
  for (const auto& r : ds.manifest.records) {
    if (r.feature_path == kInlineFeatures) {
      throw ValidationError(r.clip_id + ": inline features cannot be loaded from disk");
    }
    auto f = read_feature_file((base / r.feature_path).string());
    if (f.frames != t) {
      throw ValidationError(r.clip_id + ": feature file has " + std::to_string(f.frames) +
                            " frames, manifest window needs " + std::to_string(t));
    }
    ds.features.push_back(std::move(f));
  }
  return ds;
}

}  // namespace sgear::data
