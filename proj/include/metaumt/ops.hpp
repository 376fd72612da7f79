#pragma once

// Differentiable primitives. Every op takes the tape first; when none of the
// inputs requires a gradient (or the tape is not recording) no node is kept.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "metaumt/rng.hpp"
#include "metaumt/tensor.hpp"

namespace metaumt::ops {

namespace detail {

[[noreturn]] inline void shape_fail(const char* op, const std::string& what) {
  throw ShapeError(std::string(op) + ": " + what);
}

// C[M,N] += A[M,K] * B[K,N]. Each C element is accumulated sequentially
// over K, so a row's result does not depend on the other rows in the call.
template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* __restrict a, const T* __restrict b, T* __restrict c) {
  for (std::size_t i = 0; i < m; ++i) {
    T* __restrict crow = c + i * n;
    const T* __restrict arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      const T* __restrict brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// dst[C,R] = src[R,C]^T into a per-thread scratch buffer.
template <typename T>
const T* transposed(const T* src, std::size_t rows, std::size_t cols, int slot) {
  thread_local std::vector<T> scratch[2];
  std::vector<T>& buf = scratch[slot];
  if (buf.size() < rows * cols) buf.resize(rows * cols);
  T* dst = buf.data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
  return dst;
}

// C[M,N] += A[M,K] * B[N,K]^T
template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  gemm_nn(m, n, k, a, transposed(b, n, k, 0), c);
}

// C[M,N] += A[K,M]^T * B[K,N]
template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  gemm_nn(m, n, k, transposed(a, k, m, 1), b, c);
}

inline bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.begin(), small.end(), big.end() - static_cast<std::ptrdiff_t>(small.size()));
}

}  // namespace detail

template <typename T>
BasicTensor<T> constant(Shape shape, std::vector<T> data) {
  return BasicTensor<T>(std::move(shape), std::move(data));
}

/// a: [..., M, K]; b: [K, N] shared across the batch, or [..., K, N] with
/// matching batch dims. With trans_b, b is stored as [N, K] / [..., N, K].
template <typename T>
BasicTensor<T> matmul(Tape<T>& tape, const BasicTensor<T>& a, const BasicTensor<T>& b, bool trans_b = false) {
  tape.check_input(a, "matmul");
  tape.check_input(b, "matmul");
  const auto& as = a.shape();
  const auto& bs = b.shape();
  if (as.size() < 2 || bs.size() < 2) detail::shape_fail("matmul", "operands must have rank >= 2, got " + to_string(as) + " and " + to_string(bs));
  const std::size_t k = as.back();
  const std::size_t m = as[as.size() - 2];
  const std::size_t bk = trans_b ? bs.back() : bs[bs.size() - 2];
  const std::size_t n = trans_b ? bs[bs.size() - 2] : bs.back();
  if (bk != k) detail::shape_fail("matmul", "inner dims differ: " + to_string(as) + " x " + to_string(bs) + (trans_b ? "^T" : ""));
  const bool shared_b = bs.size() == 2;
  std::size_t batch = 1;
  for (std::size_t i = 0; i + 2 < as.size(); ++i) batch *= as[i];
  if (!shared_b) {
    if (bs.size() != as.size() || !std::equal(as.begin(), as.end() - 2, bs.begin())) {
      detail::shape_fail("matmul", "batch dims differ: " + to_string(as) + " x " + to_string(bs));
    }
  }
  Shape os(as.begin(), as.end() - 1);
  os.push_back(n);
  BasicTensor<T> out(os);
  const T* ad = a.data().data();
  const T* bd = b.data().data();
  T* od = out.data().data();
  if (shared_b) {
    if (trans_b) detail::gemm_nt(batch * m, n, k, ad, bd, od);
    else detail::gemm_nn(batch * m, n, k, ad, bd, od);
  } else {
    for (std::size_t bi = 0; bi < batch; ++bi) {
      if (trans_b) detail::gemm_nt(m, n, k, ad + bi * m * k, bd + bi * n * k, od + bi * m * n);
      else detail::gemm_nn(m, n, k, ad + bi * m * k, bd + bi * k * n, od + bi * m * n);
    }
  }
  if (tape.needs_grad(a, b)) {
    auto ah = a.handle(), bh = b.handle(), oh = out.handle();
    tape.record("matmul", out, [ah, bh, oh, m, n, k, batch, shared_b, trans_b]() {
      const T* g = oh->grad.data();
      if (ah->requires_grad) {
        if (ah->grad.empty()) ah->grad.assign(ah->data.size(), T{0});
        T* ga = ah->grad.data();
        const T* bd = bh->data.data();
        if (shared_b) {
          if (trans_b) detail::gemm_nn(batch * m, k, n, g, bd, ga);
          else detail::gemm_nt(batch * m, k, n, g, bd, ga);
        } else {
          for (std::size_t bi = 0; bi < batch; ++bi) {
            if (trans_b) detail::gemm_nn(m, k, n, g + bi * m * n, bd + bi * n * k, ga + bi * m * k);
            else detail::gemm_nt(m, k, n, g + bi * m * n, bd + bi * k * n, ga + bi * m * k);
          }
        }
      }
      if (bh->requires_grad) {
        if (bh->grad.empty()) bh->grad.assign(bh->data.size(), T{0});
        T* gb = bh->grad.data();
        const T* ad = ah->data.data();
        if (shared_b) {
          if (trans_b) detail::gemm_tn(n, k, batch * m, g, ad, gb);
          else detail::gemm_tn(k, n, batch * m, ad, g, gb);
        } else {
          for (std::size_t bi = 0; bi < batch; ++bi) {
            if (trans_b) detail::gemm_tn(n, k, m, g + bi * m * n, ad + bi * m * k, gb + bi * n * k);
            else detail::gemm_tn(k, n, m, ad + bi * m * k, g + bi * m * n, gb + bi * k * n);
          }
        }
      }
    });
  }
  return out;
}

namespace detail {

// Shared implementation of add / sub: out = a + sign * b, b same shape as a
// or a suffix of it (broadcast over leading dims).
template <typename T>
BasicTensor<T> add_impl(Tape<T>& tape, const BasicTensor<T>& a, const BasicTensor<T>& b, T sign, const char* name) {
  tape.check_input(a, name);
  tape.check_input(b, name);
  if (!is_suffix(b.shape(), a.shape())) {
    shape_fail(name, "cannot broadcast " + to_string(b.shape()) + " onto " + to_string(a.shape()));
  }
  BasicTensor<T> out(a.shape());
  const std::size_t inner = b.numel();
  const std::size_t outer = inner == 0 ? 0 : a.numel() / inner;
  const T* ad = a.data().data();
  const T* bd = b.data().data();
  T* od = out.data().data();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < inner; ++i) od[o * inner + i] = ad[o * inner + i] + sign * bd[i];
  if (tape.needs_grad(a, b)) {
    auto ah = a.handle(), bh = b.handle(), oh = out.handle();
    tape.record(name, out, [ah, bh, oh, inner, outer, sign]() {
      const T* g = oh->grad.data();
      if (ah->requires_grad) {
        if (ah->grad.empty()) ah->grad.assign(ah->data.size(), T{0});
        for (std::size_t i = 0; i < outer * inner; ++i) ah->grad[i] += g[i];
      }
      if (bh->requires_grad) {
        if (bh->grad.empty()) bh->grad.assign(bh->data.size(), T{0});
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t i = 0; i < inner; ++i) bh->grad[i] += sign * g[o * inner + i];
      }
    });
  }
  return out;
}

}  // namespace detail

template <typename T>
BasicTensor<T> add(Tape<T>& tape, const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return detail::add_impl(tape, a, b, T{1}, "add");
}

template <typename T>
BasicTensor<T> sub(Tape<T>& tape, const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return detail::add_impl(tape, a, b, T{-1}, "sub");
}

/// Elementwise product; b may broadcast as a suffix of a's shape.
template <typename T>
BasicTensor<T> mul(Tape<T>& tape, const BasicTensor<T>& a, const BasicTensor<T>& b) {
  tape.check_input(a, "mul");
  tape.check_input(b, "mul");
  if (!detail::is_suffix(b.shape(), a.shape())) {
    detail::shape_fail("mul", "cannot broadcast " + to_string(b.shape()) + " onto " + to_string(a.shape()));
  }
  BasicTensor<T> out(a.shape());
  const std::size_t inner = b.numel();
  const std::size_t outer = inner == 0 ? 0 : a.numel() / inner;
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < inner; ++i) out.data()[o * inner + i] = a.data()[o * inner + i] * b.data()[i];
  if (tape.needs_grad(a, b)) {
    auto ah = a.handle(), bh = b.handle(), oh = out.handle();
    tape.record("mul", out, [ah, bh, oh, inner, outer]() {
      const T* g = oh->grad.data();
      if (ah->requires_grad) {
        if (ah->grad.empty()) ah->grad.assign(ah->data.size(), T{0});
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t i = 0; i < inner; ++i) ah->grad[o * inner + i] += g[o * inner + i] * bh->data[i];
      }
      if (bh->requires_grad) {
        if (bh->grad.empty()) bh->grad.assign(bh->data.size(), T{0});
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t i = 0; i < inner; ++i) bh->grad[i] += g[o * inner + i] * ah->data[o * inner + i];
      }
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> scale(Tape<T>& tape, const BasicTensor<T>& a, T s) {
  tape.check_input(a, "scale");
  BasicTensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out.data()[i] = a.data()[i] * s;
  if (tape.needs_grad(a)) {
    auto ah = a.handle(), oh = out.handle();
    tape.record("scale", out, [ah, oh, s]() {
      if (ah->grad.empty()) ah->grad.assign(ah->data.size(), T{0});
      for (std::size_t i = 0; i < ah->data.size(); ++i) ah->grad[i] += s * oh->grad[i];
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> sum(Tape<T>& tape, const BasicTensor<T>& a) {
  tape.check_input(a, "sum");
  T acc{0};
  for (T v : a.data()) acc += v;
  BasicTensor<T> out = BasicTensor<T>::scalar(acc);
  if (tape.needs_grad(a)) {
    auto ah = a.handle(), oh = out.handle();
    tape.record("sum", out, [ah, oh]() {
      if (ah->grad.empty()) ah->grad.assign(ah->data.size(), T{0});
      const T g = oh->grad[0];
      for (auto& v : ah->grad) v += g;
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> mean(Tape<T>& tape, const BasicTensor<T>& a) {
  if (a.numel() == 0) detail::shape_fail("mean", "empty tensor");
  return scale(tape, sum(tape, a), T{1} / static_cast<T>(a.numel()));
}

/// Softmax over the last dimension.
template <typename T>
BasicTensor<T> softmax(Tape<T>& tape, const BasicTensor<T>& a) {
  tape.check_input(a, "softmax");
  if (a.rank() == 0) detail::shape_fail("softmax", "needs rank >= 1");
  const std::size_t n = a.shape().back();
  const std::size_t rows = n == 0 ? 0 : a.numel() / n;
  BasicTensor<T> out(a.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* x = a.data().data() + r * n;
    T* y = out.data().data() + r * n;
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, x[j]);
    T z{0};
    for (std::size_t j = 0; j < n; ++j) {
      y[j] = std::exp(x[j] - mx);
      z += y[j];
    }
    for (std::size_t j = 0; j < n; ++j) y[j] /= z;
  }
  if (tape.needs_grad(a)) {
    auto ah = a.handle(), oh = out.handle();
    tape.record("softmax", out, [ah, oh, n, rows]() {
      if (ah->grad.empty()) ah->grad.assign(ah->data.size(), T{0});
      for (std::size_t r = 0; r < rows; ++r) {
        const T* y = oh->data.data() + r * n;
        const T* g = oh->grad.data() + r * n;
        T dot{0};
        for (std::size_t j = 0; j < n; ++j) dot += g[j] * y[j];
        T* ga = ah->grad.data() + r * n;
        for (std::size_t j = 0; j < n; ++j) ga[j] += y[j] * (g[j] - dot);
      }
    });
  }
  return out;
}

/// Layer normalisation over the last dimension with affine gamma/beta.
template <typename T>
BasicTensor<T> layer_norm(Tape<T>& tape, const BasicTensor<T>& x, const BasicTensor<T>& gamma,
                          const BasicTensor<T>& beta, T eps = T(1e-5)) {
  tape.check_input(x, "layer_norm");
  tape.check_input(gamma, "layer_norm");
  tape.check_input(beta, "layer_norm");
  if (x.rank() == 0) detail::shape_fail("layer_norm", "needs rank >= 1");
  const std::size_t n = x.shape().back();
  if (gamma.shape() != Shape{n} || beta.shape() != Shape{n}) {
    detail::shape_fail("layer_norm", "gamma/beta must be [" + std::to_string(n) + "], got " + to_string(gamma.shape()) +
                                         " and " + to_string(beta.shape()));
  }
  const std::size_t rows = n == 0 ? 0 : x.numel() / n;
  BasicTensor<T> out(x.shape());
  std::vector<T> xhat(x.numel());
  std::vector<T> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x.data().data() + r * n;
    T mu{0};
    for (std::size_t j = 0; j < n; ++j) mu += xr[j];
    mu /= static_cast<T>(n);
    T var{0};
    for (std::size_t j = 0; j < n; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<T>(n);
    const T is = T{1} / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t j = 0; j < n; ++j) {
      xhat[r * n + j] = (xr[j] - mu) * is;
      out.data()[r * n + j] = xhat[r * n + j] * gamma.data()[j] + beta.data()[j];
    }
  }
  if (tape.needs_grad(x, gamma, beta)) {
    auto xh = x.handle(), gh = gamma.handle(), bh = beta.handle(), oh = out.handle();
    tape.record("layer_norm", out, [xh, gh, bh, oh, n, rows, xhat = std::move(xhat), inv_std = std::move(inv_std)]() {
      const T* g = oh->grad.data();
      if (gh->requires_grad && gh->grad.empty()) gh->grad.assign(n, T{0});
      if (bh->requires_grad && bh->grad.empty()) bh->grad.assign(n, T{0});
      if (xh->requires_grad && xh->grad.empty()) xh->grad.assign(xh->data.size(), T{0});
      for (std::size_t r = 0; r < rows; ++r) {
        const T* gr = g + r * n;
        const T* xr = xhat.data() + r * n;
        if (gh->requires_grad)
          for (std::size_t j = 0; j < n; ++j) gh->grad[j] += gr[j] * xr[j];
        if (bh->requires_grad)
          for (std::size_t j = 0; j < n; ++j) bh->grad[j] += gr[j];
        if (xh->requires_grad) {
          T s1{0}, s2{0};
          for (std::size_t j = 0; j < n; ++j) {
            const T dy = gr[j] * gh->data[j];
            s1 += dy;
            s2 += dy * xr[j];
          }
          const T inv_n = T{1} / static_cast<T>(n);
          T* gx = xh->grad.data() + r * n;
          for (std::size_t j = 0; j < n; ++j) {
            const T dy = gr[j] * gh->data[j];
            gx[j] += inv_std[r] * (dy - inv_n * s1 - xr[j] * inv_n * s2);
          }
        }
      }
    });
  }
  return out;
}

/// Exact GELU, x * Phi(x).
template <typename T>
BasicTensor<T> gelu(Tape<T>& tape, const BasicTensor<T>& x) {
  tape.check_input(x, "gelu");
  BasicTensor<T> out(x.shape());
  constexpr T inv_sqrt2 = T(0.70710678118654752440);
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const T v = x.data()[i];
    out.data()[i] = T(0.5) * v * (T{1} + std::erf(v * inv_sqrt2));
  }
  if (tape.needs_grad(x)) {
    auto xh = x.handle(), oh = out.handle();
    tape.record("gelu", out, [xh, oh]() {
      if (xh->grad.empty()) xh->grad.assign(xh->data.size(), T{0});
      constexpr T inv_sqrt2 = T(0.70710678118654752440);
      constexpr T inv_sqrt2pi = T(0.39894228040143267794);
      for (std::size_t i = 0; i < xh->data.size(); ++i) {
        const T v = xh->data[i];
        const T cdf = T(0.5) * (T{1} + std::erf(v * inv_sqrt2));
        const T pdf = inv_sqrt2pi * std::exp(T(-0.5) * v * v);
        xh->grad[i] += oh->grad[i] * (cdf + v * pdf);
      }
    });
  }
  return out;
}

/// Inverted dropout. Identity (same handle) when p == 0 or not training.
template <typename T>
BasicTensor<T> dropout(Tape<T>& tape, const BasicTensor<T>& x, double p, Rng& rng, bool training) {
  tape.check_input(x, "dropout");
  if (!training || p <= 0.0) return x;
  if (p >= 1.0) detail::shape_fail("dropout", "probability must be < 1");
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  std::vector<T> mask(x.numel());
  BasicTensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) {
    mask[i] = uniform01(rng) < p ? T{0} : keep_scale;
    out.data()[i] = x.data()[i] * mask[i];
  }
  if (tape.needs_grad(x)) {
    auto xh = x.handle(), oh = out.handle();
    tape.record("dropout", out, [xh, oh, mask = std::move(mask)]() {
      if (xh->grad.empty()) xh->grad.assign(xh->data.size(), T{0});
      for (std::size_t i = 0; i < mask.size(); ++i) xh->grad[i] += oh->grad[i] * mask[i];
    });
  }
  return out;
}

/// Row lookup: table [V, D], ids of any count -> lead_shape + [D].
template <typename T>
BasicTensor<T> embedding(Tape<T>& tape, const BasicTensor<T>& table, std::span<const std::int32_t> ids, Shape lead_shape) {
  tape.check_input(table, "embedding");
  if (table.rank() != 2) detail::shape_fail("embedding", "table must be rank 2, got " + to_string(table.shape()));
  if (numel(lead_shape) != ids.size()) {
    detail::shape_fail("embedding", "lead shape " + to_string(lead_shape) + " does not hold " + std::to_string(ids.size()) + " ids");
  }
  const std::size_t v = table.dim(0), d = table.dim(1);
  for (auto id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= v) {
      detail::shape_fail("embedding", "id " + std::to_string(id) + " out of range for vocabulary " + std::to_string(v));
    }
  }
  lead_shape.push_back(d);
  BasicTensor<T> out(lead_shape);
  for (std::size_t i = 0; i < ids.size(); ++i)
    std::copy_n(table.data().data() + static_cast<std::size_t>(ids[i]) * d, d, out.data().data() + i * d);
  if (tape.needs_grad(table)) {
    auto th = table.handle(), oh = out.handle();
    std::vector<std::int32_t> idv(ids.begin(), ids.end());
    tape.record("embedding", out, [th, oh, d, idv = std::move(idv)]() {
      if (th->grad.empty()) th->grad.assign(th->data.size(), T{0});
      for (std::size_t i = 0; i < idv.size(); ++i) {
        T* gr = th->grad.data() + static_cast<std::size_t>(idv[i]) * d;
        const T* g = oh->grad.data() + i * d;
        for (std::size_t j = 0; j < d; ++j) gr[j] += g[j];
      }
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> reshape(Tape<T>& tape, const BasicTensor<T>& x, Shape shape) {
  tape.check_input(x, "reshape");
  if (numel(shape) != x.numel()) detail::shape_fail("reshape", "cannot reshape " + to_string(x.shape()) + " to " + to_string(shape));
  BasicTensor<T> out(std::move(shape), x.data());
  if (tape.needs_grad(x)) {
    auto xh = x.handle(), oh = out.handle();
    tape.record("reshape", out, [xh, oh]() {
      if (xh->grad.empty()) xh->grad.assign(xh->data.size(), T{0});
      for (std::size_t i = 0; i < xh->data.size(); ++i) xh->grad[i] += oh->grad[i];
    });
  }
  return out;
}

/// General axis permutation: out.shape[i] = x.shape[perm[i]].
template <typename T>
BasicTensor<T> permute(Tape<T>& tape, const BasicTensor<T>& x, const std::vector<std::size_t>& perm) {
  tape.check_input(x, "permute");
  const std::size_t r = x.rank();
  if (perm.size() != r) detail::shape_fail("permute", "permutation size differs from rank of " + to_string(x.shape()));
  std::vector<bool> seen(r, false);
  for (auto p : perm) {
    if (p >= r || seen[p]) detail::shape_fail("permute", "invalid permutation for " + to_string(x.shape()));
    seen[p] = true;
  }
  Shape os(r);
  for (std::size_t i = 0; i < r; ++i) os[i] = x.shape()[perm[i]];
  std::vector<std::size_t> in_strides(r, 1);
  for (std::size_t i = r; i-- > 1;) in_strides[i - 1] = in_strides[i] * x.shape()[i];
  // src index for every output position
  std::vector<std::size_t> src(x.numel());
  std::vector<std::size_t> idx(r, 0);
  for (std::size_t o = 0; o < src.size(); ++o) {
    std::size_t s = 0;
    for (std::size_t i = 0; i < r; ++i) s += idx[i] * in_strides[perm[i]];
    src[o] = s;
    for (std::size_t i = r; i-- > 0;) {
      if (++idx[i] < os[i]) break;
      idx[i] = 0;
    }
  }
  BasicTensor<T> out(os);
  for (std::size_t o = 0; o < src.size(); ++o) out.data()[o] = x.data()[src[o]];
  if (tape.needs_grad(x)) {
    auto xh = x.handle(), oh = out.handle();
    tape.record("permute", out, [xh, oh, src = std::move(src)]() {
      if (xh->grad.empty()) xh->grad.assign(xh->data.size(), T{0});
      for (std::size_t o = 0; o < src.size(); ++o) xh->grad[src[o]] += oh->grad[o];
    });
  }
  return out;
}

/// Swap the last two axes.
template <typename T>
BasicTensor<T> transpose(Tape<T>& tape, const BasicTensor<T>& x) {
  if (x.rank() < 2) detail::shape_fail("transpose", "needs rank >= 2, got " + to_string(x.shape()));
  std::vector<std::size_t> perm(x.rank());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  std::swap(perm[perm.size() - 1], perm[perm.size() - 2]);
  return permute(tape, x, perm);
}

template <typename T>
BasicTensor<T> concat(Tape<T>& tape, const std::vector<BasicTensor<T>>& parts, std::size_t axis) {
  if (parts.empty()) detail::shape_fail("concat", "no inputs");
  for (const auto& p : parts) tape.check_input(p, "concat");
  const Shape& s0 = parts[0].shape();
  if (axis >= s0.size()) detail::shape_fail("concat", "axis out of range for " + to_string(s0));
  Shape os = s0;
  os[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == s0.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = i == axis || s[i] == s0[i];
    if (!ok) detail::shape_fail("concat", "incompatible shapes " + to_string(s0) + " and " + to_string(s));
    os[axis] += s[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s0[i];
  for (std::size_t i = axis + 1; i < s0.size(); ++i) inner *= s0[i];
  BasicTensor<T> out(os);
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const std::size_t chunk = p.shape()[axis] * inner;
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(p.data().data() + o * chunk, chunk, out.data().data() + o * os[axis] * inner + off);
    off += chunk;
  }
  bool any = false;
  for (const auto& p : parts) any = any || p.requires_grad();
  if (tape.recording() && any) {
    std::vector<std::shared_ptr<TensorStorage<T>>> hs;
    for (const auto& p : parts) hs.push_back(p.handle());
    auto oh = out.handle();
    const std::size_t row = os[axis] * inner;
    tape.record("concat", out, [hs, oh, offsets, outer, inner, row, axis]() {
      for (std::size_t pi = 0; pi < hs.size(); ++pi) {
        auto& h = hs[pi];
        if (!h->requires_grad) continue;
        if (h->grad.empty()) h->grad.assign(h->data.size(), T{0});
        const std::size_t chunk = h->shape[axis] * inner;
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t i = 0; i < chunk; ++i) h->grad[o * chunk + i] += oh->grad[o * row + offsets[pi] + i];
      }
    });
  }
  return out;
}

/// Positions where mask != 0 are replaced by `value`; they receive no gradient.
template <typename T>
BasicTensor<T> masked_fill(Tape<T>& tape, const BasicTensor<T>& x, std::span<const std::uint8_t> mask, T value) {
  tape.check_input(x, "masked_fill");
  if (mask.size() != x.numel()) {
    detail::shape_fail("masked_fill", "mask of " + std::to_string(mask.size()) + " entries for tensor " + to_string(x.shape()));
  }
  BasicTensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) out.data()[i] = mask[i] ? value : x.data()[i];
  if (tape.needs_grad(x)) {
    auto xh = x.handle(), oh = out.handle();
    std::vector<std::uint8_t> m(mask.begin(), mask.end());
    tape.record("masked_fill", out, [xh, oh, m = std::move(m)]() {
      if (xh->grad.empty()) xh->grad.assign(xh->data.size(), T{0});
      for (std::size_t i = 0; i < m.size(); ++i)
        if (!m[i]) xh->grad[i] += oh->grad[i];
    });
  }
  return out;
}

/// Mean negative log-likelihood over rows whose target != ignore_index.
/// logits: [N, V]; targets: N entries.
template <typename T>
BasicTensor<T> cross_entropy(Tape<T>& tape, const BasicTensor<T>& logits, std::span<const std::int32_t> targets,
                             std::int32_t ignore_index = -1) {
  tape.check_input(logits, "cross_entropy");
  if (logits.rank() != 2) detail::shape_fail("cross_entropy", "logits must be [N, V], got " + to_string(logits.shape()));
  const std::size_t rows = logits.dim(0), v = logits.dim(1);
  if (targets.size() != rows) {
    detail::shape_fail("cross_entropy", std::to_string(targets.size()) + " targets for " + std::to_string(rows) + " rows");
  }
  std::vector<T> probs(logits.numel());
  std::size_t count = 0;
  T total{0};
  for (std::size_t r = 0; r < rows; ++r) {
    if (targets[r] == ignore_index) continue;
    if (targets[r] < 0 || static_cast<std::size_t>(targets[r]) >= v) {
      detail::shape_fail("cross_entropy", "target " + std::to_string(targets[r]) + " out of range " + std::to_string(v));
    }
    const T* x = logits.data().data() + r * v;
    T* p = probs.data() + r * v;
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < v; ++j) mx = std::max(mx, x[j]);
    T z{0};
    for (std::size_t j = 0; j < v; ++j) {
      p[j] = std::exp(x[j] - mx);
      z += p[j];
    }
    for (std::size_t j = 0; j < v; ++j) p[j] /= z;
    total += -(x[targets[r]] - mx - std::log(z));
    ++count;
  }
  if (count == 0) detail::shape_fail("cross_entropy", "no target positions");
  BasicTensor<T> out = BasicTensor<T>::scalar(total / static_cast<T>(count));
  if (tape.needs_grad(logits)) {
    auto lh = logits.handle(), oh = out.handle();
    std::vector<std::int32_t> tg(targets.begin(), targets.end());
    tape.record("cross_entropy", out, [lh, oh, tg = std::move(tg), probs = std::move(probs), v, count, ignore_index]() {
      if (lh->grad.empty()) lh->grad.assign(lh->data.size(), T{0});
      const T g = oh->grad[0] / static_cast<T>(count);
      for (std::size_t r = 0; r < tg.size(); ++r) {
        if (tg[r] == ignore_index) continue;
        T* gr = lh->grad.data() + r * v;
        const T* p = probs.data() + r * v;
        for (std::size_t j = 0; j < v; ++j) gr[j] += g * p[j];
        gr[tg[r]] -= g;
      }
    });
  }
  return out;
}

}  // namespace metaumt::ops
