#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "metaumt/param_set.hpp"

namespace metaumt {

class MissingGradError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct SgdState {
  double lr = 0.1;
  std::uint64_t step_count = 0;
};

struct AdamState {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step_count = 0;
  std::vector<std::vector<float>> first_moment;
  std::vector<std::vector<float>> second_moment;
};

/// Linear warmup to `peak` over `warmup_steps` updates, constant afterwards.
struct LinearWarmup {
  double peak = 1e-4;
  std::uint64_t warmup_steps = 0;

  double at(std::uint64_t step) const {
    if (warmup_steps == 0) return peak;
    return peak * std::min(1.0, static_cast<double>(step) / static_cast<double>(warmup_steps));
  }
};

namespace detail {

template <typename T>
void require_grads(const BasicParamSet<T>& params) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].has_grad()) throw MissingGradError("optimizer_step: parameter '" + params.name(i) + "' has no gradient");
  }
}

}  // namespace detail

/// p -= lr * g, then grads are zeroed.
template <typename T>
void optimizer_step(BasicParamSet<T>& params, SgdState& state) {
  detail::require_grads(params);
  const T lr = static_cast<T>(state.lr);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& d = params[i].data();
    const auto& g = params[i].grad();
    for (std::size_t j = 0; j < d.size(); ++j) d[j] -= lr * g[j];
  }
  ++state.step_count;
  params.zero_grad();
}

/// Bias-corrected Adam update, then grads are zeroed.
inline void optimizer_step(ParamSet& params, AdamState& state) {
  detail::require_grads(params);
  if (state.first_moment.empty()) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.first_moment.emplace_back(params[i].numel(), 0.0f);
      state.second_moment.emplace_back(params[i].numel(), 0.0f);
    }
  }
  if (state.first_moment.size() != params.size()) throw std::invalid_argument("optimizer_step: Adam state does not match parameters");
  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const float b1 = static_cast<float>(state.beta1);
  const float b2 = static_cast<float>(state.beta2);
  const float c1 = static_cast<float>(1.0 / (1.0 - std::pow(state.beta1, t)));
  const float c2 = static_cast<float>(1.0 / (1.0 - std::pow(state.beta2, t)));
  const float lr = static_cast<float>(state.lr);
  const float eps = static_cast<float>(state.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& d = params[i].data();
    const auto& g = params[i].grad();
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    if (m.size() != d.size()) throw std::invalid_argument("optimizer_step: moment shape mismatch for '" + params.name(i) + "'");
    for (std::size_t j = 0; j < d.size(); ++j) {
      m[j] = b1 * m[j] + (1.0f - b1) * g[j];
      v[j] = b2 * v[j] + (1.0f - b2) * g[j] * g[j];
      const float mhat = m[j] * c1;
      const float vhat = v[j] * c2;
      d[j] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
  params.zero_grad();
}

}  // namespace metaumt
