#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "frrn/tensor.hpp"

namespace frrn {

template <typename T>
struct AdamState {
  Tensor<T> m;
  Tensor<T> v;
  std::uint64_t step = 0;
};

/// A named tensor owned by a ParamStore. Non-trainable entries hold
/// batch-norm running statistics: they are checkpointed but receive no
/// gradient and no optimizer update.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  AdamState<T> adam;
  bool trainable = true;

  Parameter(std::string n, Tensor<T> v, bool train)
      : name(std::move(n)), value(std::move(v)), trainable(train) {
    if (trainable) {
      grad = Tensor<T>(value.shape());
      adam.m = Tensor<T>(value.shape());
      adam.v = Tensor<T>(value.shape());
    }
  }

  void zero_grad() {
    if (trainable) grad.fill(T(0));
  }
};

/// Insertion-ordered parameter registry with stable addresses.
template <typename T>
class ParamStore {
 public:
  ParamStore() = default;
  ParamStore(const ParamStore&) = delete;
  ParamStore& operator=(const ParamStore&) = delete;
  ParamStore(ParamStore&&) noexcept = default;
  ParamStore& operator=(ParamStore&&) noexcept = default;

  Parameter<T>& add(std::string name, Tensor<T> value, bool trainable = true) {
    if (index_.count(name) != 0) throw std::invalid_argument("duplicate parameter '" + name + "'");
    index_.emplace(name, params_.size());
    params_.push_back(std::make_unique<Parameter<T>>(std::move(name), std::move(value), trainable));
    return *params_.back();
  }

  Parameter<T>* find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : params_[it->second].get();
  }
  const Parameter<T>* find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : params_[it->second].get();
  }

  Parameter<T>& get(const std::string& name) {
    if (auto* p = find(name)) return *p;
    throw std::out_of_range("unknown parameter '" + name + "'");
  }
  const Parameter<T>& get(const std::string& name) const {
    if (const auto* p = find(name)) return *p;
    throw std::out_of_range("unknown parameter '" + name + "'");
  }

  std::size_t size() const noexcept { return params_.size(); }
  Parameter<T>& operator[](std::size_t i) { return *params_[i]; }
  const Parameter<T>& operator[](std::size_t i) const { return *params_[i]; }

  void zero_grad() {
    for (auto& p : params_) p->zero_grad();
  }

  std::size_t trainable_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) {
      if (p->trainable) n += p->value.size();
    }
    return n;
  }

 private:
  std::vector<std::unique_ptr<Parameter<T>>> params_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace frrn
