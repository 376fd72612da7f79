#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "metaumt/tensor.hpp"

namespace metaumt {

/// Named parameter tensors in insertion order. Copying a ParamSet copies
/// handles (aliasing the same storage); deep_clone() copies values.
template <typename T>
class BasicParamSet {
 public:
  using TensorType = BasicTensor<T>;

  BasicParamSet() = default;
  explicit BasicParamSet(std::uint64_t seed) : rng_seed_used_(seed) {}

  TensorType& add(const std::string& name, TensorType tensor) {
    if (index_.count(name)) throw std::invalid_argument("ParamSet: duplicate parameter name '" + name + "'");
    tensor.set_requires_grad(true);
    index_.emplace(name, names_.size());
    names_.push_back(name);
    tensors_.push_back(std::move(tensor));
    return tensors_.back();
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  TensorType& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("ParamSet: no parameter named '" + name + "'");
    return tensors_[it->second];
  }
  const TensorType& at(const std::string& name) const { return const_cast<BasicParamSet*>(this)->at(name); }

  std::size_t size() const { return tensors_.size(); }
  bool empty() const { return tensors_.empty(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  TensorType& operator[](std::size_t i) { return tensors_[i]; }
  const TensorType& operator[](std::size_t i) const { return tensors_[i]; }
  const std::vector<std::string>& names() const { return names_; }

  std::uint64_t rng_seed_used() const { return rng_seed_used_; }
  void set_rng_seed_used(std::uint64_t seed) { rng_seed_used_ = seed; }

  std::size_t total_elements() const {
    std::size_t n = 0;
    for (const auto& t : tensors_) n += t.numel();
    return n;
  }

  /// Value-equal, storage-independent copy with no gradients.
  BasicParamSet deep_clone() const {
    BasicParamSet out(rng_seed_used_);
    for (std::size_t i = 0; i < size(); ++i) out.add(names_[i], tensors_[i].clone());
    return out;
  }

  void zero_grad() {
    for (auto& t : tensors_) t.zero_grad();
  }

  bool values_equal(const BasicParamSet& other) const {
    if (other.names_ != names_) return false;
    for (std::size_t i = 0; i < size(); ++i) {
      if (tensors_[i].shape() != other.tensors_[i].shape() || tensors_[i].data() != other.tensors_[i].data()) return false;
    }
    return true;
  }

 private:
  std::vector<std::string> names_;
  std::vector<TensorType> tensors_;
  std::unordered_map<std::string, std::size_t> index_;
  std::uint64_t rng_seed_used_ = 0;
};

using ParamSet = BasicParamSet<float>;

template <typename T>
BasicParamSet<T> deep_clone(const BasicParamSet<T>& params) {
  return params.deep_clone();
}

/// Euclidean norm over all present gradients.
template <typename T>
double grad_norm(const BasicParamSet<T>& params) {
  double sq = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i)
    for (T g : params[i].grad()) sq += static_cast<double>(g) * static_cast<double>(g);
  return std::sqrt(sq);
}

/// Rescales gradients so their global norm is at most max_norm (disabled when
/// max_norm <= 0). Returns the norm before clipping.
template <typename T>
double clip_grad_norm(BasicParamSet<T>& params, double max_norm) {
  const double norm = grad_norm(params);
  if (max_norm > 0.0 && norm > max_norm) {
    const T factor = static_cast<T>(max_norm / norm);
    for (std::size_t i = 0; i < params.size(); ++i)
      for (T& g : params[i].grad()) g *= factor;
  }
  return norm;
}

}  // namespace metaumt
