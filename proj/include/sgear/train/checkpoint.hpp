#pragma once

#include <cstdint>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sgear/data/binary_io.hpp"
#include "sgear/train/trainer.hpp"

namespace sgear::train {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string config_hash(const model::ModelConfig& m, const TrainConfig& t) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a(model::to_json(m).dump() + to_json(t).dump())));
  return buf;
}

struct Blob {
  std::string name;
  diff::Shape shape;
  std::vector<double> values;
  bool operator==(const Blob&) const = default;
};

/// Everything needed to resume training or evaluate: configs, position, parameters,
/// the language store, the prototype subset and optimizer state.
///
/// On disk: "SGCK", u32 version, u32 header length, JSON header, u32 blob count, then per
/// blob u32 name length, name, u32 rank, u32 extents, float64 values.
struct Checkpoint {
  model::ModelConfig model;
  TrainConfig train;
  std::size_t step = 0;
  std::size_t epoch = 0;
  std::size_t optimizer_count = 0;
  std::vector<Blob> blobs;

  const Blob* find(const std::string& name) const {
    for (const auto& b : blobs) {
      if (b.name == name) return &b;
    }
    return nullptr;
  }
};

inline Checkpoint make_checkpoint(const SGearModel& m, const TrainConfig& tc, const Trainer* trainer = nullptr) {
  Checkpoint c;
  c.model = m.config();
  c.train = trainer ? trainer->config() : tc;
  for (const auto& e : m.parameters().entries()) c.blobs.push_back({"param." + e.name, e.value.shape(), e.value.values()});
  if (m.has_language()) c.blobs.push_back({"language", m.language().shape(), m.language().values()});
  Blob subset{"subset", {m.subset().size()}, {}};
  for (auto i : m.subset().indices) subset.values.push_back(static_cast<double>(i));
  c.blobs.push_back(std::move(subset));
  if (trainer) {
    c.step = trainer->global_step();
    c.epoch = trainer->epoch();
    c.optimizer_count = trainer->optimizer().count();
    for (const auto& [name, v] : trainer->optimizer().slots()) c.blobs.push_back({"opt." + name, {v.size()}, v});
  }
  return c;
}

inline std::vector<unsigned char> encode_checkpoint(const Checkpoint& c) {
  const nlohmann::json header = {{"model", model::to_json(c.model)},
                                 {"train", to_json(c.train)},
                                 {"step", c.step},
                                 {"epoch", c.epoch},
                                 {"optimizer_count", c.optimizer_count},
                                 {"config_hash", config_hash(c.model, c.train)}};
  const std::string text = header.dump();
  data::ByteWriter w;
  w.str("SGCK");
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(text.size()));
  w.str(text);
  w.u32(static_cast<std::uint32_t>(c.blobs.size()));
  for (const auto& b : c.blobs) {
    if (diff::shape_size(b.shape) != b.values.size()) throw DimensionError("blob '" + b.name + "' size mismatch");
    w.u32(static_cast<std::uint32_t>(b.name.size()));
    w.str(b.name);
    w.u32(static_cast<std::uint32_t>(b.shape.size()));
    for (auto e : b.shape) w.u32(static_cast<std::uint32_t>(e));
    for (double v : b.values) w.f64(v);
  }
  return w.buffer();
}

inline Checkpoint decode_checkpoint(std::vector<unsigned char> bytes) {
  data::ByteReader r(std::move(bytes));
  r.expect_magic("SGCK");
  const std::size_t version_at = r.offset();
  if (r.u32("version") != kCheckpointVersion) throw FormatError("unsupported checkpoint version", version_at);
  const std::size_t header_at = r.offset() + 4;
  const std::uint32_t len = r.u32("header length");
  const std::string text = r.str(len, "header");
  Checkpoint c;
  try {
    const auto h = nlohmann::json::parse(text);
    c.model = model::model_config_from_json(h.at("model"));
    c.train = train_config_from_json(h.at("train"));
    c.step = h.at("step").get<std::size_t>();
    c.epoch = h.at("epoch").get<std::size_t>();
    c.optimizer_count = h.at("optimizer_count").get<std::size_t>();
    if (h.at("config_hash").get<std::string>() != config_hash(c.model, c.train)) {
      throw FormatError("config hash does not match the stored configuration", header_at);
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad checkpoint header: ") + e.what(), header_at);
  } catch (const ConfigError& e) {
    throw FormatError(std::string("bad checkpoint header: ") + e.what(), header_at);
  }
  const std::uint32_t n = r.u32("blob count");
  for (std::uint32_t i = 0; i < n; ++i) {
    Blob b;
    b.name = r.str(r.u32("blob name length"), "blob name");
    const std::uint32_t rank = r.u32("blob rank");
    for (std::uint32_t k = 0; k < rank; ++k) b.shape.push_back(r.u32("blob extent"));
    const std::size_t count = diff::shape_size(b.shape);
    if (r.remaining() < count * 8) {
      throw FormatError("truncated blob '" + b.name + "'", r.offset() + r.remaining());
    }
    b.values.resize(count);
    r.read(b.values.data(), count * 8, "blob values");
    c.blobs.push_back(std::move(b));
  }
  r.expect_end();
  return c;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& c) {
  data::write_file_bytes(path, encode_checkpoint(c));
}

inline Checkpoint load_checkpoint(const std::string& path) { return decode_checkpoint(data::read_file_bytes(path)); }

/// Rebuilds the model and copies every stored parameter into it.
inline std::unique_ptr<SGearModel> restore_model(const Checkpoint& c) {
  std::optional<Tensor> language;
  if (const Blob* b = c.find("language")) language = Tensor::from(b->shape, b->values);
  auto m = std::make_unique<SGearModel>(c.model, language);
  for (const auto& e : m->parameters().entries()) {
    const Blob* b = c.find("param." + e.name);
    if (!b) throw ValidationError("checkpoint lacks parameter '" + e.name + "'");
    if (b->shape != e.value.shape()) {
      throw ValidationError("parameter '" + e.name + "' stored as " + diff::shape_str(b->shape) + ", model has " +
                            diff::shape_str(e.value.shape()));
    }
    Tensor t = e.value;
    std::copy(b->values.begin(), b->values.end(), t.mutable_data().begin());
  }
  if (const Blob* b = c.find("subset")) {
    model::PrototypeSubset s{c.model.num_classes, {}};
    for (double v : b->values) s.indices.push_back(static_cast<std::size_t>(v));
    m->set_subset(std::move(s));
  }
  return m;
}

/// Restores optimizer slots and the step/epoch counters into a trainer built on the restored model.
inline void restore_trainer(Trainer& t, const Checkpoint& c) {
  for (const auto& b : c.blobs) {
    if (b.name.rfind("opt.", 0) == 0) t.optimizer().load_slot(b.name.substr(4), b.values);
  }
  t.optimizer().set_count(c.optimizer_count);
  t.restore_position(c.step, c.epoch);
}

}  // namespace sgear::train
