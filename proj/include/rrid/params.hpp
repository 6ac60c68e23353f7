#pragma once

#include <deque>
#include <map>
#include <optional>
#include <string>

#include "rrid/errors.hpp"
#include "rrid/tensor.hpp"

namespace rrid {

using ParamId = std::size_t;

template <typename T>
struct BasicParameter {
  std::string name;
  BasicTensor<T> value;
  // Buffers (batch-norm running statistics) are stored and checkpointed but
  // never touched by the optimizer.
  bool trainable = true;
};

// Named tensors in insertion order. Storage is a deque so references handed
// to a graph stay valid while more parameters are added.
template <typename T>
class BasicParamStore {
 public:
  ParamId add(std::string name, BasicTensor<T> value, bool trainable = true) {
    if (index_.count(name)) throw ConfigError("duplicate parameter name '" + name + "'");
    const ParamId id = params_.size();
    index_.emplace(name, id);
    params_.push_back({std::move(name), std::move(value), trainable});
    return id;
  }

  std::size_t size() const noexcept { return params_.size(); }

  BasicParameter<T>& operator[](ParamId id) { return params_.at(id); }
  const BasicParameter<T>& operator[](ParamId id) const { return params_.at(id); }

  std::optional<ParamId> find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  ParamId id_of(const std::string& name) const {
    auto id = find(name);
    if (!id) throw ConfigError("unknown parameter '" + name + "'");
    return *id;
  }

  std::size_t trainable_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) {
      if (p.trainable) n += p.value.size();
    }
    return n;
  }

  template <typename U>
  BasicParamStore<U> cast() const {
    BasicParamStore<U> out;
    for (const auto& p : params_) out.add(p.name, p.value.template cast<U>(), p.trainable);
    return out;
  }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::deque<BasicParameter<T>> params_;
  std::map<std::string, ParamId> index_;
};

using Parameter = BasicParameter<float>;
using ParamStore = BasicParamStore<float>;

}  // namespace rrid
