#pragma once

#include <map>
#include <string>
#include <vector>

#include "aadam/autodiff.hpp"
#include "aadam/error.hpp"

namespace aadam {

/// Ordered collection of uniquely named parameters.
class ParameterStore {
 public:
  Parameter& add(std::string name, Tensor tensor, bool trainable = true) {
    if (index_.count(name)) throw UsageError("duplicate parameter name '" + name + "'");
    index_.emplace(name, items_.size());
    items_.push_back(Parameter{std::move(name), std::move(tensor), trainable});
    return items_.back();
  }

  /// Removes every parameter whose name starts with prefix.
  void remove_prefix(const std::string& prefix) {
    std::vector<Parameter> kept;
    for (auto& p : items_) {
      if (p.name.rfind(prefix, 0) != 0) kept.push_back(std::move(p));
    }
    items_ = std::move(kept);
    reindex();
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  Parameter& get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw UsageError("unknown parameter '" + name + "'");
    return items_[it->second];
  }
  const Parameter& get(const std::string& name) const { return const_cast<ParameterStore*>(this)->get(name); }

  std::vector<Parameter>& items() { return items_; }
  const std::vector<Parameter>& items() const { return items_; }
  std::size_t size() const { return items_.size(); }

  std::size_t numel() const {
    std::size_t n = 0;
    for (const auto& p : items_) n += p.tensor.size();
    return n;
  }

  auto begin() { return items_.begin(); }
  auto end() { return items_.end(); }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }

 private:
  void reindex() {
    index_.clear();
    for (std::size_t i = 0; i < items_.size(); ++i) index_.emplace(items_[i].name, i);
  }

  std::vector<Parameter> items_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace aadam
