#pragma once

// First-order meta-learning over domains. Each meta step adapts a clone of
// theta per domain with plain SGD, evaluates the meta-test loss at the adapted
// clone on fresh data, and applies the summed clone gradients to theta.

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

#include "metaumt/meta/task.hpp"
#include "metaumt/optim.hpp"

namespace metaumt {

struct MetaConfig {
  double alpha = 0.05;   // inner SGD step size
  double beta = 1e-4;    // meta (outer) learning rate
  std::size_t meta_steps = 100;
  std::size_t inner_steps_per_domain = 1;
  double cross_domain_mix = 0.5;  // share of the meta-test batch from other domains; 0 turns the term off
  bool aggregate_domain = true;
  double clip_norm = 5.0;  // <= 0 disables clipping

  void validate() const {
    if (!(alpha >= 0.0)) throw std::invalid_argument("MetaConfig: alpha must be >= 0");
    if (!(beta > 0.0)) throw std::invalid_argument("MetaConfig: beta must be > 0");
    if (!(cross_domain_mix >= 0.0 && cross_domain_mix <= 1.0)) throw std::invalid_argument("MetaConfig: cross_domain_mix must be in [0,1]");
    if (inner_steps_per_domain == 0) throw std::invalid_argument("MetaConfig: inner_steps_per_domain must be >= 1");
  }
};

/// Independent random streams for the three roles data is drawn for. Transfer
/// steps draw from `outer`, which makes them comparable with meta-test terms.
struct MetaStreams {
  Rng inner;
  Rng outer;
  Rng aggregate;

  static MetaStreams from_seed(std::uint64_t seed) {
    return {make_rng(seed, "meta-inner"), make_rng(seed, "meta-outer"), make_rng(seed, "meta-aggregate")};
  }
};

struct MetaStepStats {
  TaskLoss inner;      // summed over domains (last inner step each)
  TaskLoss meta_test;  // summed over domains
  TaskLoss aggregate;  // summed over domains, zero when the term is off
  double grad_norm = 0.0;  // before clipping
};

namespace detail {

inline void add_loss(TaskLoss& acc, const TaskLoss& l) {
  acc.total += l.total;
  acc.lm += l.lm;
  acc.bt += l.bt;
}

/// dst.grad += src.grad, parameter by parameter.
template <typename T>
void accumulate_grads(BasicParamSet<T>& dst, const BasicParamSet<T>& src) {
  if (dst.size() != src.size()) throw std::invalid_argument("accumulate_grads: parameter sets differ");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (!src[i].has_grad()) continue;
    auto& d = dst[i].ensure_grad();
    const auto& s = src[i].grad();
    for (std::size_t j = 0; j < d.size(); ++j) d[j] += s[j];
  }
}

}  // namespace detail

/// theta' = theta - alpha * grad L(theta) on a fresh batch of `domain`,
/// repeated inner_steps_per_domain times. theta is not modified.
template <MetaTask Task>
ParamSet inner_adapt(Task& task, const ParamSet& theta, std::size_t domain, const MetaConfig& cfg, Rng& rng,
                     TaskLoss* loss_out = nullptr) {
  ParamSet adapted = theta.deep_clone();
  SgdState sgd{cfg.alpha, 0};
  for (std::size_t s = 0; s < cfg.inner_steps_per_domain; ++s) {
    adapted.zero_grad();
    TaskLoss l = task.domain_grad(adapted, domain, rng);
    if (loss_out) *loss_out = l;
    clip_grad_norm(adapted, cfg.clip_norm);
    optimizer_step(adapted, sgd);
  }
  return adapted;
}

/// Shared body of both meta updates; `generalized` enables the cross-domain
/// mix and the aggregate term according to cfg.
template <MetaTask Task, typename Optimizer>
MetaStepStats meta_step(Task& task, ParamSet& theta, Optimizer& opt, const MetaConfig& cfg, MetaStreams& streams, bool generalized) {
  cfg.validate();
  const std::size_t n = task.domain_count();
  if (n == 0) throw std::invalid_argument("meta step: no out-domains");
  if (generalized && n < 2) throw std::invalid_argument("meta_step_gumt: needs at least two out-domains");
  MetaStepStats st;
  theta.zero_grad();
  for (std::size_t i = 0; i < n; ++i) {
    TaskLoss inner;
    ParamSet adapted = inner_adapt(task, theta, i, cfg, streams.inner, &inner);
    detail::add_loss(st.inner, inner);
    adapted.zero_grad();
    const TaskLoss test = generalized ? task.cross_domain_grad(adapted, i, cfg.cross_domain_mix, streams.outer)
                                      : task.domain_grad(adapted, i, streams.outer);
    detail::add_loss(st.meta_test, test);
    detail::accumulate_grads(theta, adapted);
    if (generalized && cfg.aggregate_domain) detail::add_loss(st.aggregate, task.domain_grad(theta, i, streams.aggregate));
  }
  st.grad_norm = clip_grad_norm(theta, cfg.clip_norm);
  optimizer_step(theta, opt);
  return st;
}

template <MetaTask Task, typename Optimizer>
MetaStepStats meta_step_umt(Task& task, ParamSet& theta, Optimizer& opt, const MetaConfig& cfg, MetaStreams& streams) {
  return meta_step(task, theta, opt, cfg, streams, false);
}

template <MetaTask Task, typename Optimizer>
MetaStepStats meta_step_gumt(Task& task, ParamSet& theta, Optimizer& opt, const MetaConfig& cfg, MetaStreams& streams) {
  return meta_step(task, theta, opt, cfg, streams, true);
}

/// One ordinary training step on `domain`, drawing from the outer stream.
template <MetaTask Task, typename Optimizer>
TaskLoss transfer_step(Task& task, ParamSet& theta, Optimizer& opt, std::size_t domain, double clip_norm, MetaStreams& streams) {
  theta.zero_grad();
  TaskLoss l = task.domain_grad(theta, domain, streams.outer);
  clip_grad_norm(theta, clip_norm);
  optimizer_step(theta, opt);
  return l;
}

enum class PretrainMethod { transfer, metaumt, metagumt };

inline std::string method_name(PretrainMethod m) {
  switch (m) {
    case PretrainMethod::transfer: return "transfer";
    case PretrainMethod::metaumt: return "metaumt";
    case PretrainMethod::metagumt: return "metagumt";
  }
  return "?";
}

inline PretrainMethod parse_pretrain_method(const std::string& s) {
  if (s == "transfer") return PretrainMethod::transfer;
  if (s == "metaumt") return PretrainMethod::metaumt;
  if (s == "metagumt") return PretrainMethod::metagumt;
  throw std::invalid_argument("unknown pretraining method '" + s + "'");
}

/// Progress hook: (update index starting at 1, loss at that update).
using PretrainCallback = std::function<void(std::size_t, const TaskLoss&)>;

/// Runs cfg.meta_steps parameter updates of the chosen method with Adam at
/// learning rate cfg.beta. Transfer samples its domain round-robin.
template <MetaTask Task>
void pretrain(Task& task, ParamSet& theta, PretrainMethod method, const MetaConfig& cfg, std::uint64_t seed,
              const PretrainCallback& on_step = {}) {
  cfg.validate();
  MetaStreams streams = MetaStreams::from_seed(seed);
  AdamState adam;
  adam.lr = cfg.beta;
  const std::size_t n = task.domain_count();
  for (std::size_t s = 0; s < cfg.meta_steps; ++s) {
    TaskLoss l;
    switch (method) {
      case PretrainMethod::transfer:
        l = transfer_step(task, theta, adam, s % n, cfg.clip_norm, streams);
        break;
      case PretrainMethod::metaumt:
        l = meta_step_umt(task, theta, adam, cfg, streams).meta_test;
        break;
      case PretrainMethod::metagumt:
        l = meta_step_gumt(task, theta, adam, cfg, streams).meta_test;
        break;
    }
    if (method != PretrainMethod::transfer) {
      l.total /= static_cast<double>(n);
      l.lm /= static_cast<double>(n);
      l.bt /= static_cast<double>(n);
    }
    if (on_step) on_step(s + 1, l);
  }
}

}  // namespace metaumt
