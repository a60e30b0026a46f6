#pragma once

// Named parameter registry. A parameter's group is the prefix of its name
// before the first '.', e.g. "fusion_spatial.w_q" lives in "fusion_spatial".
// Freeze masks and checksums operate on groups.

#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "fea/autograd.hpp"
#include "fea/io_formats.hpp"
#include "fea/rng.hpp"

namespace fea {

enum class Init {
  Uniform,  // U(-1/sqrt(rows), +1/sqrt(rows)), rows = fan-in
  Zeros,
  Ones,
  Constant,
  Identity,  // constant * I plus a tenth of the Uniform noise; square matrices only
};

inline std::string group_of(const std::string& name) { return name.substr(0, name.find('.')); }

template <class T>
struct Param {
  std::string name;
  std::string group;
  Tensor<T> value;
};

template <class T>
class ParamStore {
 public:
  // Each parameter draws from its own stream derived from (seed, name), so
  // adding or removing unrelated parameters never changes its values.
  const Param<T>& add(const std::string& name, Shape shape, Init init, uint64_t seed, double constant = 0.0) {
    if (index_.count(name)) throw Error(ErrorKind::DuplicateName, name);
    Tensor<T> value(shape);
    switch (init) {
      case Init::Uniform: {
        Rng rng(Rng::derive(seed, name));
        const double bound = 1.0 / std::sqrt(static_cast<double>(shape[0]));
        for (auto& v : value.values()) v = static_cast<T>(rng.uniform(-bound, bound));
        break;
      }
      case Init::Zeros: break;
      case Init::Ones: value.fill(T(1)); break;
      case Init::Constant: value.fill(static_cast<T>(constant)); break;
      case Init::Identity: {
        if (shape.size() != 2 || shape[0] != shape[1]) throw Error(ErrorKind::ShapeMismatch, name + " is not square");
        Rng rng(Rng::derive(seed, name));
        const double bound = 0.1 / std::sqrt(static_cast<double>(shape[0]));
        for (auto& v : value.values()) v = static_cast<T>(rng.uniform(-bound, bound));
        for (size_t i = 0; i < shape[0]; ++i) value[i * shape[0] + i] += static_cast<T>(constant);
        break;
      }
    }
    index_[name] = params_.size();
    params_.push_back(Param<T>{name, group_of(name), std::move(value)});
    return params_.back();
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  size_t index(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error(ErrorKind::UnknownGroup, "no parameter named " + name);
    return it->second;
  }
  const Param<T>& at(size_t i) const { return params_[i]; }
  Param<T>& at(size_t i) { return params_[i]; }
  Tensor<T>& value(const std::string& name) { return params_[index(name)].value; }
  const Tensor<T>& value(const std::string& name) const { return params_[index(name)].value; }
  size_t size() const { return params_.size(); }

  std::set<std::string> groups() const {
    std::set<std::string> out;
    for (const auto& p : params_) out.insert(p.group);
    return out;
  }

  // FNV-1a over the raw bytes of every tensor in the group, in registration order.
  uint64_t checksum(const std::string& group) const {
    uint64_t h = 0xCBF29CE484222325ULL;
    for (const auto& p : params_) {
      if (p.group != group) continue;
      for (T v : p.value.values()) {
        const auto* bytes = reinterpret_cast<const unsigned char*>(&v);
        for (size_t i = 0; i < sizeof(T); ++i) {
          h ^= bytes[i];
          h *= 0x100000001B3ULL;
        }
      }
    }
    return h;
  }

  void append_to(Checkpoint& ckpt) const {
    for (const auto& p : params_) {
      NamedTensor t;
      t.name = p.name;
      for (size_t d : p.value.shape()) t.shape.push_back(static_cast<uint32_t>(d));
      t.data.assign(p.value.values().begin(), p.value.values().end());
      ckpt.add(std::move(t));
    }
  }

  // Overwrites every registered parameter from the checkpoint; shapes must match.
  void load_from(const Checkpoint& ckpt) {
    for (auto& p : params_) {
      const NamedTensor* t = ckpt.find(p.name);
      if (t == nullptr) throw Error(ErrorKind::MissingCheckpoint, "checkpoint lacks " + p.name);
      Shape s(t->shape.begin(), t->shape.end());
      if (s != p.value.shape()) throw Error(ErrorKind::ShapeMismatch, "checkpoint shape for " + p.name);
      p.value = Tensor<T>(s, std::vector<T>(t->data.begin(), t->data.end()));
    }
  }

 private:
  std::vector<Param<T>> params_;
  std::map<std::string, size_t> index_;
};

// Leaves for one tape. Parameters in `trainable` groups become gradient
// variables; everything else enters as a constant.
template <class T>
class Binding {
 public:
  Binding(nn::Tape<T>& tape, const ParamStore<T>& store, std::set<std::string> trainable = {})
      : tape_(tape), store_(store), trainable_(std::move(trainable)), vars_(store.size()) {}

  nn::Var<T> operator()(const std::string& name) {
    const size_t i = store_.index(name);
    if (!vars_[i].valid()) {
      const Param<T>& p = store_.at(i);
      vars_[i] = trainable_.count(p.group) ? tape_.variable(p.value) : tape_.constant(p.value);
    }
    return vars_[i];
  }

  nn::Tape<T>& tape() { return tape_; }
  const ParamStore<T>& store() const { return store_; }
  bool trains(const std::string& group) const { return trainable_.count(group) != 0; }

  // Adds this tape's parameter gradients into `grads` (one tensor per
  // parameter, same order as the store; empty tensors are left untouched
  // for parameters that received nothing).
  void collect(std::vector<Tensor<T>>& grads) {
    grads.resize(store_.size());
    for (size_t i = 0; i < vars_.size(); ++i) {
      if (!vars_[i].valid() || !tape_.requires_grad(vars_[i].id()) || !tape_.has_grad(vars_[i].id())) continue;
      const Tensor<T>& g = tape_.grad(vars_[i].id());
      if (grads[i].size() != g.size()) grads[i] = Tensor<T>(g.shape());
      for (size_t k = 0; k < g.size(); ++k) grads[i][k] += g[k];
    }
  }

 private:
  nn::Tape<T>& tape_;
  const ParamStore<T>& store_;
  std::set<std::string> trainable_;
  std::vector<nn::Var<T>> vars_;
};

}  // namespace fea
