#pragma once

#include <map>
#include <stdexcept>
#include <string>

#include "textar/tensor.hpp"

namespace textar {

// One named parameter with its gradient and Adam moment buffers.
struct ParamEntry {
  Tensor value;
  Tensor grad;
  Tensor adam_m;
  Tensor adam_v;
  bool frozen = false;
};

// Named parameter tensors. std::map keeps iteration order deterministic,
// which checkpointing and the optimizer rely on.
class ParamStore {
 public:
  ParamEntry& create(const std::string& name, Tensor init) {
    auto [it, inserted] = entries_.try_emplace(name);
    if (!inserted) throw std::invalid_argument("param already exists: " + name);
    ParamEntry& e = it->second;
    e.grad = Tensor::zeros(init.shape);
    e.adam_m = Tensor::zeros(init.shape);
    e.adam_v = Tensor::zeros(init.shape);
    e.value = std::move(init);
    return e;
  }

  ParamEntry& at(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw std::out_of_range("no such param: " + name);
    return it->second;
  }
  const ParamEntry& at(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw std::out_of_range("no such param: " + name);
    return it->second;
  }
  bool contains(const std::string& name) const { return entries_.count(name) > 0; }

  void zero_grads() {
    for (auto& [name, e] : entries_) e.grad.fill(0.0);
  }

  // Zero the gradient of every frozen entry (frozen tensors must never move).
  void clear_frozen_grads() {
    for (auto& [name, e] : entries_)
      if (e.frozen) e.grad.fill(0.0);
  }

  void set_frozen(const std::string& prefix, bool frozen) {
    for (auto& [name, e] : entries_)
      if (name.rfind(prefix, 0) == 0) e.frozen = frozen;
  }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& [name, e] : entries_) n += e.value.size();
    return n;
  }

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  std::size_t size() const { return entries_.size(); }

 private:
  std::map<std::string, ParamEntry> entries_;
};

}  // namespace textar
