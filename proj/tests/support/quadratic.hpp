#pragma once

// Quadratic task family L_i(theta) = |theta - a_i|^2 / 2 routed through the
// tape, plus closed-form first-order meta-gradients computed in double.

#include <cstddef>
#include <vector>

#include "metaumt/meta/meta_engine.hpp"

namespace metaumt::testing {

using Vec = std::vector<double>;

/// Cross-domain partner of domain i; fixed so the oracle can follow it.
inline std::size_t partner(std::size_t i, std::size_t n) { return (i + 1) % n; }

class QuadraticTask {
 public:
  explicit QuadraticTask(std::vector<Vec> centers) : a_(std::move(centers)) {}

  std::size_t domain_count() const { return a_.size(); }
  std::size_t calls = 0;

  TaskLoss domain_grad(ParamSet& p, std::size_t d, Rng&) { return weighted(p, {{d, 1.0}}); }

  /// Meta-test loss at theta' on a batch mixing domain d with its partner:
  /// (1 - mix) L_d + mix L_partner.
  TaskLoss cross_domain_grad(ParamSet& p, std::size_t d, double mix, Rng& rng) {
    if (mix == 0.0) return domain_grad(p, d, rng);
    return weighted(p, {{d, 1.0 - mix}, {partner(d, a_.size()), mix}});
  }

  static ParamSet params(const Vec& theta) {
    ParamSet p;
    std::vector<float> v(theta.begin(), theta.end());
    p.add("theta", Tensor({theta.size()}, std::move(v)));
    return p;
  }

 private:
  TaskLoss weighted(ParamSet& p, const std::vector<std::pair<std::size_t, double>>& terms) {
    ++calls;
    Tape<float> tape;
    Tensor total;
    for (const auto& [d, w] : terms) {
      const Shape shape{a_[d].size()};
      Tensor diff = ops::sub(tape, p.at("theta"), ops::constant<float>(shape, std::vector<float>(a_[d].begin(), a_[d].end())));
      Tensor l = ops::scale(tape, ops::sum(tape, ops::mul(tape, diff, diff)), static_cast<float>(0.5 * w));
      total = total.defined() ? ops::add(tape, total, l) : l;
    }
    tape.backward(total);
    return {total.item(), total.item(), 0.0};
  }

  std::vector<Vec> a_;
};

/// theta' = theta - alpha (theta - a).
inline Vec adapted(const Vec& theta, const Vec& a, double alpha) {
  Vec out(theta.size());
  for (std::size_t k = 0; k < theta.size(); ++k) out[k] = theta[k] - alpha * (theta[k] - a[k]);
  return out;
}

/// First-order MetaUMT gradient: sum_i (theta'_i - a_i).
inline Vec umt_gradient(const Vec& theta, const std::vector<Vec>& a, double alpha) {
  Vec g(theta.size(), 0.0);
  for (const auto& ai : a) {
    const Vec t = adapted(theta, ai, alpha);
    for (std::size_t k = 0; k < g.size(); ++k) g[k] += t[k] - ai[k];
  }
  return g;
}

/// First-order MetaGUMT gradient: sum_i [(1 - mix)(theta'_i - a_i) +
/// mix (theta'_i - a_partner(i)) + agg (theta - a_i)].
inline Vec gumt_gradient(const Vec& theta, const std::vector<Vec>& a, double alpha, double mix, bool aggregate) {
  Vec g(theta.size(), 0.0);
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec t = adapted(theta, a[i], alpha);
    const Vec& aj = a[partner(i, n)];
    for (std::size_t k = 0; k < g.size(); ++k) {
      g[k] += (1.0 - mix) * (t[k] - a[i][k]) + mix * (t[k] - aj[k]);
      if (aggregate) g[k] += theta[k] - a[i][k];
    }
  }
  return g;
}

inline Vec sgd(const Vec& theta, const Vec& g, double lr) {
  Vec out(theta.size());
  for (std::size_t k = 0; k < theta.size(); ++k) out[k] = theta[k] - lr * g[k];
  return out;
}

inline Vec values(const ParamSet& p) {
  const auto& d = p.at("theta").data();
  return Vec(d.begin(), d.end());
}

}  // namespace metaumt::testing
