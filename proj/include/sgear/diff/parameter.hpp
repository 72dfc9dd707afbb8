#pragma once

#include <map>
#include <string>
#include <vector>

#include "sgear/diff/tensor.hpp"

namespace sgear::diff {

/// Named learnable tensors, kept in registration order so serialization is stable.
class ParameterStore {
 public:
  /// Registers `value` under `name`. Names must be unique within the store.
  Tensor add(const std::string& name, Tensor value, bool trainable = true) {
    if (index_.count(name)) throw ConfigError("duplicate parameter name '" + name + "'");
    value.set_requires_grad(trainable);
    index_[name] = entries_.size();
    entries_.push_back({name, value});
    return value;
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  Tensor get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
    return entries_[it->second].value;
  }

  struct Entry {
    std::string name;
    Tensor value;
  };

  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  std::vector<Tensor> trainable() const {
    std::vector<Tensor> out;
    for (const auto& e : entries_) {
      if (e.value.requires_grad()) out.push_back(e.value);
    }
    return out;
  }

  std::size_t element_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
  }

  void zero_grad() {
    for (auto& e : entries_) e.value.zero_grad();
  }

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace sgear::diff
