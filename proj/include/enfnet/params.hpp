#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "enfnet/tape.hpp"
#include "enfnet/tensor.hpp"

namespace enfnet {

/// One learnable tensor plus its gradient and Adam moment slots. The slots
/// stay empty until training needs them: at full geometry they triple the
/// footprint, and inference or shape checks never touch them.
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor m;
  Tensor v;

  void ensure_grad_slot() {
    if (grad.empty()) {
      const auto& s = value.shape();
      grad = Tensor(s[0], s[1], s[2], s[3]);
    }
  }
  void ensure_moment_slots() {
    if (m.empty()) {
      const auto& s = value.shape();
      m = Tensor(s[0], s[1], s[2], s[3]);
      v = Tensor(s[0], s[1], s[2], s[3]);
    }
  }
};

/// Named, insertion-ordered collection of learnable tensors. Iteration order
/// is the registration order, which keeps optimizer updates and checkpoints
/// deterministic.
class ParamStore {
 public:
  Param& add(const std::string& name, Tensor init) {
    require(index_.find(name) == index_.end(), "ParamStore: duplicate parameter '" + name + "'");
    Param p{name, std::move(init), Tensor(), Tensor(), Tensor()};
    index_[name] = items_.size();
    items_.push_back(std::move(p));
    return items_.back();
  }

  bool has(const std::string& name) const { return index_.count(name) > 0; }

  Param& at(const std::string& name) {
    auto it = index_.find(name);
    require(it != index_.end(), "ParamStore: unknown parameter '" + name + "'");
    return items_[it->second];
  }
  const Param& at(const std::string& name) const {
    auto it = index_.find(name);
    require(it != index_.end(), "ParamStore: unknown parameter '" + name + "'");
    return items_[it->second];
  }

  size_t size() const { return items_.size(); }
  std::vector<Param>& items() { return items_; }
  const std::vector<Param>& items() const { return items_; }

  void zero_grads() {
    for (Param& p : items_) {
      p.ensure_grad_slot();
      p.grad.fill(0.0);
    }
  }

  int64_t total_values() const {
    int64_t n = 0;
    for (const Param& p : items_) n += p.value.numel();
    return n;
  }

 private:
  std::vector<Param> items_;
  std::unordered_map<std::string, size_t> index_;
};

/// Binds store parameters onto a tape as leaves (one leaf per parameter per
/// tape) and copies tape gradients back out after reverse accumulation.
class ParamBinder {
 public:
  ParamBinder(Tape& tape, ParamStore& store) : tape_(tape), store_(store) {}

  Value operator()(const std::string& name) {
    auto it = bound_.find(name);
    if (it != bound_.end()) return it->second;
    Value v = tape_.leaf(store_.at(name).value);
    bound_.emplace(name, v);
    return v;
  }

  ParamStore& store() { return store_; }

  /// Writes gradients into the store; parameters the terminal never reached
  /// keep a zero gradient.
  void export_grads() {
    store_.zero_grads();
    accumulate_grads();
  }

  /// Adds tape gradients into the store without zeroing (micro-batching).
  void accumulate_grads() {
    for (const auto& [name, v] : bound_) {
      const Tensor& g = tape_.grad(v);
      if (g.empty()) continue;
      Param& p = store_.at(name);
      p.ensure_grad_slot();
      for (int64_t i = 0; i < g.numel(); ++i) p.grad[i] += g[i];
    }
  }

 private:
  Tape& tape_;
  ParamStore& store_;
  std::unordered_map<std::string, Value> bound_;
};

}  // namespace enfnet
