#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <utility>
#include <vector>

#include "dysat/errors.hpp"
#include "dysat/rng.hpp"
#include "dysat/tensor.hpp"

namespace dysat {

/// Handle into a tape; cheap to copy, invalid when default-constructed.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Multiply-add counters for the cost-model harness.
struct FlopCounter {
  std::uint64_t temporal_attention_flops = 0;
  std::uint64_t total_flops = 0;
};

/// Sparse adjacency with entries grouped contiguously by destination node.
/// Entry e contributes source row src[e] to destination dst[e] with link
/// weight weight[e]; segment for node v is [offsets[v], offsets[v+1]).
struct EdgeStructure {
  std::vector<std::uint32_t> src;
  std::vector<std::uint32_t> dst;
  std::vector<double> weight;
  std::vector<std::size_t> offsets;

  std::size_t num_nodes() const { return offsets.empty() ? 0 : offsets.size() - 1; }
  std::size_t num_entries() const { return src.size(); }
};

namespace detail {

// C[m x n] += A[m x k] * B[k x n]
template <class Real>
void mm_nn(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const Real* arow = a + i * k;
    Real* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const Real av = arow[p];
      if (av == Real(0)) continue;
      const Real* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m x k] += G[m x n] * B^T, B is [k x n]
template <class Real>
void mm_nt(const Real* g, const Real* b, Real* c, std::size_t m, std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    const Real* grow = g + i * n;
    Real* crow = c + i * k;
    for (std::size_t j = 0; j < k; ++j) {
      const Real* brow = b + j * n;
      Real acc = Real(0);
      for (std::size_t p = 0; p < n; ++p) acc += grow[p] * brow[p];
      crow[j] += acc;
    }
  }
}

// C[k x n] += A^T * G, A is [m x k], G is [m x n]
template <class Real>
void mm_tn(const Real* a, const Real* g, Real* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const Real* arow = a + i * k;
    const Real* grow = g + i * n;
    for (std::size_t j = 0; j < k; ++j) {
      const Real av = arow[j];
      if (av == Real(0)) continue;
      Real* crow = c + j * n;
      for (std::size_t p = 0; p < n; ++p) crow[p] += av * grow[p];
    }
  }
}

template <class Real>
Real stable_sigmoid(Real x) {
  if (x >= Real(0)) {
    const Real e = std::exp(-x);
    return Real(1) / (Real(1) + e);
  }
  const Real e = std::exp(x);
  return e / (Real(1) + e);
}

template <class Real>
Real stable_softplus(Real x) {
  if (x > Real(30)) return x;
  if (x < Real(-30)) return std::exp(x);
  return std::log1p(std::exp(x));
}

}  // namespace detail

/// Reverse-mode gradient tape over dense tensors. Single-threaded; one tape
/// per forward/backward pass. Gradients accumulate additively, so a value
/// used along several paths receives the sum of all path gradients.
template <class Real>
class TapeT {
 public:
  using Tensor = TensorT<Real>;

  Var leaf(Tensor value, bool requires_grad = false) {
    return push(std::move(value), requires_grad, nullptr);
  }

  /// Forward-pass multiply-add accounting (matmul and attention); optional.
  void set_flop_counter(FlopCounter* flops) { flops_ = flops; }

  Var constant(Tensor value) { return leaf(std::move(value), false); }

  const Tensor& value(Var v) const { return nodes_[check(v)].value; }

  /// Gradient of the last backward() pass; zeros if the node was unreached.
  const Tensor& grad(Var v) const {
    const Node& n = nodes_[check(v)];
    if (!n.requires_grad) throw DimensionError("grad requested for a non-differentiable node");
    return n.grad;
  }

  bool wants_grad(Var v) const { return nodes_[check(v)].requires_grad; }

  std::size_t size() const { return nodes_.size(); }

  // ---- arithmetic ---------------------------------------------------------

  Var add(Var a, Var b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (!ta.same_shape(tb)) throw DimensionError("add: shape mismatch");
    Tensor out = ta;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += tb[i];
    return push(std::move(out), wants_grad(a) || wants_grad(b), [a, b](TapeT& t, int self) {
      const Tensor& g = t.nodes_[self].grad;
      if (t.wants_grad(a)) {
        Tensor& da = t.grad_buf(a);
        for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
      }
      if (t.wants_grad(b)) {
        Tensor& db = t.grad_buf(b);
        for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i];
      }
    });
  }

  /// Elementwise product.
  Var mul(Var a, Var b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (!ta.same_shape(tb)) throw DimensionError("mul: shape mismatch");
    Tensor out = ta;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= tb[i];
    return push(std::move(out), wants_grad(a) || wants_grad(b), [a, b](TapeT& t, int self) {
      const Tensor& g = t.nodes_[self].grad;
      const Tensor& ta = t.value(a);
      const Tensor& tb = t.value(b);
      if (t.wants_grad(a)) {
        Tensor& da = t.grad_buf(a);
        for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * tb[i];
      }
      if (t.wants_grad(b)) {
        Tensor& db = t.grad_buf(b);
        for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i] * ta[i];
      }
    });
  }

  /// m[n x d] + bias[d], bias added to every row.
  Var add_row_broadcast(Var m, Var bias) {
    const Tensor& tm = value(m);
    const Tensor& tb = value(bias);
    if (tm.rank() != 2 || tb.size() != tm.dim(1)) {
      throw DimensionError("add_row_broadcast: bias length must equal column count");
    }
    const std::size_t n = tm.dim(0), d = tm.dim(1);
    Tensor out = tm;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) out[i * d + j] += tb[j];
    return push(std::move(out), wants_grad(m) || wants_grad(bias),
                [m, bias, n, d](TapeT& t, int self) {
                  const Tensor& g = t.nodes_[self].grad;
                  if (t.wants_grad(m)) {
                    Tensor& dm = t.grad_buf(m);
                    for (std::size_t i = 0; i < g.size(); ++i) dm[i] += g[i];
                  }
                  if (t.wants_grad(bias)) {
                    Tensor& db = t.grad_buf(bias);
                    for (std::size_t i = 0; i < n; ++i)
                      for (std::size_t j = 0; j < d; ++j) db[j] += g[i * d + j];
                  }
                });
  }

  Var scale(Var a, Real c) {
    Tensor out = value(a);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= c;
    return push(std::move(out), wants_grad(a), [a, c](TapeT& t, int self) {
      const Tensor& g = t.nodes_[self].grad;
      if (!t.wants_grad(a)) return;
      Tensor& da = t.grad_buf(a);
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += c * g[i];
    });
  }

  Var sum(Var a) {
    const Tensor& ta = value(a);
    Real acc = Real(0);
    for (std::size_t i = 0; i < ta.size(); ++i) acc += ta[i];
    return push(Tensor::scalar(acc), wants_grad(a), [a](TapeT& t, int self) {
      if (!t.wants_grad(a)) return;
      const Real g = t.nodes_[self].grad[0];
      Tensor& da = t.grad_buf(a);
      for (std::size_t i = 0; i < da.size(); ++i) da[i] += g;
    });
  }

  Var matmul(Var a, Var b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (ta.rank() != 2 || tb.rank() != 2 || ta.dim(1) != tb.dim(0)) {
      throw DimensionError("matmul: inner dimensions disagree " + ta.shape_str() + " vs " +
                           tb.shape_str());
    }
    const std::size_t m = ta.dim(0), k = ta.dim(1), n = tb.dim(1);
    Tensor out({m, n});
    detail::mm_nn(ta.data(), tb.data(), out.data(), m, k, n);
    if (flops_ != nullptr) flops_->total_flops += 2ull * m * k * n;
    return push(std::move(out), wants_grad(a) || wants_grad(b),
                [a, b, m, k, n](TapeT& t, int self) {
                  const Tensor& g = t.nodes_[self].grad;
                  if (t.wants_grad(a)) {
                    detail::mm_nt(g.data(), t.value(b).data(), t.grad_buf(a).data(), m, n, k);
                  }
                  if (t.wants_grad(b)) {
                    detail::mm_tn(t.value(a).data(), g.data(), t.grad_buf(b).data(), m, k, n);
                  }
                });
  }

  /// m[n x k] * v[k] -> [n]
  Var matvec(Var m, Var v) {
    const Tensor& tm = value(m);
    const Tensor& tv = value(v);
    if (tm.rank() != 2 || tv.rank() != 1 || tm.dim(1) != tv.dim(0)) {
      throw DimensionError("matvec: shapes disagree");
    }
    const std::size_t n = tm.dim(0), k = tm.dim(1);
    Tensor out({n});
    for (std::size_t i = 0; i < n; ++i) {
      const Real* row = tm.data() + i * k;
      Real acc = Real(0);
      for (std::size_t j = 0; j < k; ++j) acc += row[j] * tv[j];
      out[i] = acc;
    }
    return push(std::move(out), wants_grad(m) || wants_grad(v), [m, v, n, k](TapeT& t, int self) {
      const Tensor& g = t.nodes_[self].grad;
      const Tensor& tm = t.value(m);
      const Tensor& tv = t.value(v);
      if (t.wants_grad(m)) {
        Tensor& dm = t.grad_buf(m);
        for (std::size_t i = 0; i < n; ++i) {
          const Real gi = g[i];
          if (gi == Real(0)) continue;
          Real* row = dm.data() + i * k;
          for (std::size_t j = 0; j < k; ++j) row[j] += gi * tv[j];
        }
      }
      if (t.wants_grad(v)) {
        Tensor& dv = t.grad_buf(v);
        for (std::size_t i = 0; i < n; ++i) {
          const Real gi = g[i];
          if (gi == Real(0)) continue;
          const Real* row = tm.data() + i * k;
          for (std::size_t j = 0; j < k; ++j) dv[j] += gi * row[j];
        }
      }
    });
  }

  /// Contiguous slice of a rank-1 tensor.
  Var slice1d(Var a, std::size_t off, std::size_t len) {
    const Tensor& ta = value(a);
    if (ta.rank() != 1 || off + len > ta.size()) throw DimensionError("slice1d out of range");
    Tensor out({len});
    for (std::size_t i = 0; i < len; ++i) out[i] = ta[off + i];
    return push(std::move(out), wants_grad(a), [a, off, len](TapeT& t, int self) {
      if (!t.wants_grad(a)) return;
      const Tensor& g = t.nodes_[self].grad;
      Tensor& da = t.grad_buf(a);
      for (std::size_t i = 0; i < len; ++i) da[off + i] += g[i];
    });
  }

  /// Row-wise inner products of two [n x d] tensors -> [n].
  Var row_dot(Var a, Var b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (!ta.same_shape(tb) || ta.rank() != 2) throw DimensionError("row_dot: shape mismatch");
    const std::size_t n = ta.dim(0), d = ta.dim(1);
    Tensor out({n});
    for (std::size_t i = 0; i < n; ++i) {
      const Real* ra = ta.data() + i * d;
      const Real* rb = tb.data() + i * d;
      Real acc = Real(0);
      for (std::size_t j = 0; j < d; ++j) acc += ra[j] * rb[j];
      out[i] = acc;
    }
    return push(std::move(out), wants_grad(a) || wants_grad(b), [a, b, n, d](TapeT& t, int self) {
      const Tensor& g = t.nodes_[self].grad;
      const Tensor& ta = t.value(a);
      const Tensor& tb = t.value(b);
      if (t.wants_grad(a)) {
        Tensor& da = t.grad_buf(a);
        for (std::size_t i = 0; i < n; ++i) {
          const Real gi = g[i];
          for (std::size_t j = 0; j < d; ++j) da[i * d + j] += gi * tb[i * d + j];
        }
      }
      if (t.wants_grad(b)) {
        Tensor& db = t.grad_buf(b);
        for (std::size_t i = 0; i < n; ++i) {
          const Real gi = g[i];
          for (std::size_t j = 0; j < d; ++j) db[i * d + j] += gi * ta[i * d + j];
        }
      }
    });
  }

  /// Rows m[idx[i], :] stacked into [idx.size() x d]. Backward scatter-adds,
  /// so repeated indices accumulate.
  Var gather_rows(Var m, std::vector<std::uint32_t> idx) {
    const Tensor& tm = value(m);
    if (tm.rank() != 2) throw DimensionError("gather_rows: rank-2 input required");
    const std::size_t d = tm.dim(1);
    const std::size_t n = idx.size();
    Tensor out({n, d});
    for (std::size_t i = 0; i < n; ++i) {
      if (idx[i] >= tm.dim(0)) throw RangeError("gather_rows: index out of range");
      const Real* src = tm.data() + static_cast<std::size_t>(idx[i]) * d;
      Real* dst = out.data() + i * d;
      for (std::size_t j = 0; j < d; ++j) dst[j] = src[j];
    }
    auto shared = std::make_shared<std::vector<std::uint32_t>>(std::move(idx));
    return push(std::move(out), wants_grad(m), [m, shared, n, d](TapeT& t, int self) {
      if (!t.wants_grad(m)) return;
      const Tensor& g = t.nodes_[self].grad;
      Tensor& dm = t.grad_buf(m);
      for (std::size_t i = 0; i < n; ++i) {
        Real* dst = dm.data() + static_cast<std::size_t>((*shared)[i]) * d;
        const Real* src = g.data() + i * d;
        for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
      }
    });
  }

  /// Concatenate [n x d_i] blocks along the feature axis.
  Var concat_cols(const std::vector<Var>& xs) {
    if (xs.empty()) throw DimensionError("concat_cols: no inputs");
    const std::size_t n = value(xs[0]).dim(0);
    std::size_t total = 0;
    bool needs = false;
    for (Var x : xs) {
      const Tensor& tx = value(x);
      if (tx.rank() != 2 || tx.dim(0) != n) throw DimensionError("concat_cols: row mismatch");
      total += tx.dim(1);
      needs = needs || wants_grad(x);
    }
    Tensor out({n, total});
    std::size_t col = 0;
    for (Var x : xs) {
      const Tensor& tx = value(x);
      const std::size_t d = tx.dim(1);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) out[i * total + col + j] = tx[i * d + j];
      col += d;
    }
    auto parts = std::make_shared<std::vector<Var>>(xs);
    return push(std::move(out), needs, [parts, n, total](TapeT& t, int self) {
      const Tensor& g = t.nodes_[self].grad;
      std::size_t col = 0;
      for (Var x : *parts) {
        const std::size_t d = t.value(x).dim(1);
        if (t.wants_grad(x)) {
          Tensor& dx = t.grad_buf(x);
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) dx[i * d + j] += g[i * total + col + j];
        }
        col += d;
      }
    });
  }

  /// Stack [r_i x d] blocks along the row axis.
  Var concat_rows(const std::vector<Var>& xs) {
    if (xs.empty()) throw DimensionError("concat_rows: no inputs");
    const std::size_t d = value(xs[0]).dim(1);
    std::size_t rows = 0;
    bool needs = false;
    for (Var x : xs) {
      const Tensor& tx = value(x);
      if (tx.rank() != 2 || tx.dim(1) != d) throw DimensionError("concat_rows: column mismatch");
      rows += tx.dim(0);
      needs = needs || wants_grad(x);
    }
    Tensor out({rows, d});
    std::size_t at = 0;
    for (Var x : xs) {
      const Tensor& tx = value(x);
      for (std::size_t i = 0; i < tx.size(); ++i) out[at + i] = tx[i];
      at += tx.size();
    }
    auto parts = std::make_shared<std::vector<Var>>(xs);
    return push(std::move(out), needs, [parts](TapeT& t, int self) {
      const Tensor& g = t.nodes_[self].grad;
      std::size_t at = 0;
      for (Var x : *parts) {
        const std::size_t sz = t.value(x).size();
        if (t.wants_grad(x)) {
          Tensor& dx = t.grad_buf(x);
          for (std::size_t i = 0; i < sz; ++i) dx[i] += g[at + i];
        }
        at += sz;
      }
    });
  }

  // ---- elementwise nonlinearities -----------------------------------------

  Var leaky_relu(Var a, Real slope) {
    const Tensor& ta = value(a);
    Tensor out = ta;
    for (std::size_t i = 0; i < out.size(); ++i)
      if (out[i] < Real(0)) out[i] *= slope;
    return push(std::move(out), wants_grad(a), [a, slope](TapeT& t, int self) {
      if (!t.wants_grad(a)) return;
      const Tensor& g = t.nodes_[self].grad;
      const Tensor& x = t.value(a);
      Tensor& da = t.grad_buf(a);
      for (std::size_t i = 0; i < g.size(); ++i)
        da[i] += g[i] * (x[i] > Real(0) ? Real(1) : slope);
    });
  }

  Var elu(Var a) {
    const Tensor& ta = value(a);
    Tensor out = ta;
    for (std::size_t i = 0; i < out.size(); ++i)
      if (out[i] < Real(0)) out[i] = std::exp(out[i]) - Real(1);
    return push(std::move(out), wants_grad(a), [a](TapeT& t, int self) {
      if (!t.wants_grad(a)) return;
      const Tensor& g = t.nodes_[self].grad;
      const Tensor& y = t.nodes_[self].value;
      const Tensor& x = t.value(a);
      Tensor& da = t.grad_buf(a);
      for (std::size_t i = 0; i < g.size(); ++i)
        da[i] += g[i] * (x[i] > Real(0) ? Real(1) : y[i] + Real(1));
    });
  }

  Var sigmoid(Var a) {
    const Tensor& ta = value(a);
    Tensor out = ta;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = detail::stable_sigmoid(out[i]);
    return push(std::move(out), wants_grad(a), [a](TapeT& t, int self) {
      if (!t.wants_grad(a)) return;
      const Tensor& g = t.nodes_[self].grad;
      const Tensor& y = t.nodes_[self].value;
      Tensor& da = t.grad_buf(a);
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * y[i] * (Real(1) - y[i]);
    });
  }

  /// softplus(x) = log(1 + e^x), clamped above at `cap`. With
  /// cap = -log(eps) this realizes -log(max(sigmoid(-x), eps)).
  Var softplus_clamped(Var a, Real cap) {
    const Tensor& ta = value(a);
    Tensor out = ta;
    for (std::size_t i = 0; i < out.size(); ++i) {
      const Real sp = detail::stable_softplus(out[i]);
      out[i] = sp < cap ? sp : cap;
    }
    return push(std::move(out), wants_grad(a), [a, cap](TapeT& t, int self) {
      if (!t.wants_grad(a)) return;
      const Tensor& g = t.nodes_[self].grad;
      const Tensor& y = t.nodes_[self].value;
      const Tensor& x = t.value(a);
      Tensor& da = t.grad_buf(a);
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (y[i] >= cap) continue;
        da[i] += g[i] * detail::stable_sigmoid(x[i]);
      }
    });
  }

  /// Inverted dropout; identity when p <= 0. The mask is drawn once at
  /// forward time and reused in backward.
  Var dropout(Var a, Real p, RngEngine& rng) {
    if (p <= Real(0)) return a;
    const Tensor& ta = value(a);
    auto mask = std::make_shared<std::vector<Real>>(ta.size());
    const Real keep_scale = Real(1) / (Real(1) - p);
    Tensor out = ta;
    for (std::size_t i = 0; i < out.size(); ++i) {
      const Real m = uniform_real(rng) < static_cast<double>(p) ? Real(0) : keep_scale;
      (*mask)[i] = m;
      out[i] *= m;
    }
    return push(std::move(out), wants_grad(a), [a, mask](TapeT& t, int self) {
      if (!t.wants_grad(a)) return;
      const Tensor& g = t.nodes_[self].grad;
      Tensor& da = t.grad_buf(a);
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * (*mask)[i];
    });
  }

  // ---- softmax family ------------------------------------------------------

  /// Softmax over the unmasked entries of a rank-1 logit vector. Mask entries
  /// are 0 (attend) or -inf (skip); masked outputs are exactly zero.
  Var masked_softmax(Var logits, const Tensor& mask) {
    const Tensor& tl = value(logits);
    if (tl.rank() != 1 || mask.size() != tl.size()) {
      throw DimensionError("masked_softmax: logits and mask sizes differ");
    }
    auto active = std::make_shared<std::vector<std::size_t>>();
    for (std::size_t i = 0; i < mask.size(); ++i)
      if (mask[i] == Real(0)) active->push_back(i);
    if (active->empty()) throw DegenerateRowError("masked_softmax: all entries masked");

    Tensor out({tl.size()});
    Real mx = -std::numeric_limits<Real>::infinity();
    for (std::size_t i : *active) mx = std::max(mx, tl[i]);
    Real z = Real(0);
    for (std::size_t i : *active) {
      const Real e = std::exp(tl[i] - mx);
      out[i] = e;
      z += e;
    }
    for (std::size_t i : *active) out[i] /= z;

    return push(std::move(out), wants_grad(logits), [logits, active](TapeT& t, int self) {
      if (!t.wants_grad(logits)) return;
      const Tensor& g = t.nodes_[self].grad;
      const Tensor& y = t.nodes_[self].value;
      Tensor& dl = t.grad_buf(logits);
      Real dot = Real(0);
      for (std::size_t i : *active) dot += y[i] * g[i];
      for (std::size_t i : *active) dl[i] += y[i] * (g[i] - dot);
    });
  }

  // ---- graph attention primitives -----------------------------------------

  /// Per-entry pre-activation logits: weight[e] * (s_src[src[e]] + s_dst[dst[e]]).
  /// The caller keeps `es` alive for the lifetime of the tape.
  Var edge_score(Var s_src, Var s_dst, const EdgeStructure& es) {
    const Tensor& a = value(s_src);
    const Tensor& b = value(s_dst);
    if (a.rank() != 1 || b.rank() != 1 || a.size() != es.num_nodes() ||
        b.size() != es.num_nodes()) {
      throw DimensionError("edge_score: node score vectors must have one entry per node");
    }
    const std::size_t ne = es.num_entries();
    Tensor out({ne});
    for (std::size_t e = 0; e < ne; ++e) {
      out[e] = static_cast<Real>(es.weight[e]) * (a[es.src[e]] + b[es.dst[e]]);
    }
    const EdgeStructure* s = &es;
    return push(std::move(out), wants_grad(s_src) || wants_grad(s_dst),
                [s_src, s_dst, s, ne](TapeT& t, int self) {
                  const Tensor& g = t.nodes_[self].grad;
                  const bool wa = t.wants_grad(s_src);
                  const bool wb = t.wants_grad(s_dst);
                  Tensor* da = wa ? &t.grad_buf(s_src) : nullptr;
                  Tensor* db = wb ? &t.grad_buf(s_dst) : nullptr;
                  for (std::size_t e = 0; e < ne; ++e) {
                    const Real wg = static_cast<Real>(s->weight[e]) * g[e];
                    if (wa) (*da)[s->src[e]] += wg;
                    if (wb) (*db)[s->dst[e]] += wg;
                  }
                });
  }

  /// Softmax within each destination segment of the edge structure.
  Var segment_softmax(Var scores, const EdgeStructure& es) {
    const Tensor& ts = value(scores);
    if (ts.size() != es.num_entries()) throw DimensionError("segment_softmax: entry count");
    Tensor out({ts.size()});
    for (std::size_t v = 0; v < es.num_nodes(); ++v) {
      const std::size_t lo = es.offsets[v], hi = es.offsets[v + 1];
      if (lo == hi) continue;
      Real mx = ts[lo];
      for (std::size_t e = lo + 1; e < hi; ++e) mx = std::max(mx, ts[e]);
      Real z = Real(0);
      for (std::size_t e = lo; e < hi; ++e) {
        out[e] = std::exp(ts[e] - mx);
        z += out[e];
      }
      for (std::size_t e = lo; e < hi; ++e) out[e] /= z;
    }
    const EdgeStructure* s = &es;
    return push(std::move(out), wants_grad(scores), [scores, s](TapeT& t, int self) {
      if (!t.wants_grad(scores)) return;
      const Tensor& g = t.nodes_[self].grad;
      const Tensor& y = t.nodes_[self].value;
      Tensor& ds = t.grad_buf(scores);
      for (std::size_t v = 0; v < s->num_nodes(); ++v) {
        const std::size_t lo = s->offsets[v], hi = s->offsets[v + 1];
        Real dot = Real(0);
        for (std::size_t e = lo; e < hi; ++e) dot += y[e] * g[e];
        for (std::size_t e = lo; e < hi; ++e) ds[e] += y[e] * (g[e] - dot);
      }
    });
  }

  /// out[v, :] = sum over entries e with dst[e] = v of alpha[e] * rows[src[e], :].
  Var segment_weighted_rows(Var alpha, Var rows, const EdgeStructure& es) {
    const Tensor& ta = value(alpha);
    const Tensor& tr = value(rows);
    if (ta.size() != es.num_entries() || tr.rank() != 2 || tr.dim(0) != es.num_nodes()) {
      throw DimensionError("segment_weighted_rows: shapes disagree with edge structure");
    }
    const std::size_t nv = es.num_nodes(), d = tr.dim(1);
    Tensor out({nv, d});
    for (std::size_t v = 0; v < nv; ++v) {
      Real* dst = out.data() + v * d;
      for (std::size_t e = es.offsets[v]; e < es.offsets[v + 1]; ++e) {
        const Real w = ta[e];
        const Real* srow = tr.data() + static_cast<std::size_t>(es.src[e]) * d;
        for (std::size_t j = 0; j < d; ++j) dst[j] += w * srow[j];
      }
    }
    const EdgeStructure* s = &es;
    return push(std::move(out), wants_grad(alpha) || wants_grad(rows),
                [alpha, rows, s, nv, d](TapeT& t, int self) {
                  const Tensor& g = t.nodes_[self].grad;
                  const Tensor& ta = t.value(alpha);
                  const Tensor& tr = t.value(rows);
                  const bool wa = t.wants_grad(alpha);
                  const bool wr = t.wants_grad(rows);
                  Tensor* da = wa ? &t.grad_buf(alpha) : nullptr;
                  Tensor* dr = wr ? &t.grad_buf(rows) : nullptr;
                  for (std::size_t v = 0; v < nv; ++v) {
                    const Real* grow = g.data() + v * d;
                    for (std::size_t e = s->offsets[v]; e < s->offsets[v + 1]; ++e) {
                      const std::size_t sr = s->src[e];
                      if (wa) {
                        const Real* srow = tr.data() + sr * d;
                        Real acc = Real(0);
                        for (std::size_t j = 0; j < d; ++j) acc += grow[j] * srow[j];
                        (*da)[e] += acc;
                      }
                      if (wr) {
                        Real* drow = dr->data() + sr * d;
                        const Real w = ta[e];
                        for (std::size_t j = 0; j < d; ++j) drow[j] += w * grow[j];
                      }
                    }
                  }
                });
  }

  // ---- temporal attention ---------------------------------------------------

  /// h[(t * nodes + v), :] + pos[t, :].
  Var add_position(Var h, Var pos, std::size_t steps, std::size_t nodes) {
    const Tensor& th = value(h);
    const Tensor& tp = value(pos);
    if (th.rank() != 2 || tp.rank() != 2 || th.dim(0) != steps * nodes ||
        tp.dim(0) != steps || tp.dim(1) != th.dim(1)) {
      throw DimensionError("add_position: shapes disagree");
    }
    const std::size_t d = th.dim(1);
    Tensor out = th;
    for (std::size_t t = 0; t < steps; ++t) {
      const Real* prow = tp.data() + t * d;
      for (std::size_t v = 0; v < nodes; ++v) {
        Real* row = out.data() + (t * nodes + v) * d;
        for (std::size_t j = 0; j < d; ++j) row[j] += prow[j];
      }
    }
    return push(std::move(out), wants_grad(h) || wants_grad(pos),
                [h, pos, steps, nodes, d](TapeT& t, int self) {
                  const Tensor& g = t.nodes_[self].grad;
                  if (t.wants_grad(h)) {
                    Tensor& dh = t.grad_buf(h);
                    for (std::size_t i = 0; i < g.size(); ++i) dh[i] += g[i];
                  }
                  if (t.wants_grad(pos)) {
                    Tensor& dp = t.grad_buf(pos);
                    for (std::size_t ts = 0; ts < steps; ++ts) {
                      Real* prow = dp.data() + ts * d;
                      for (std::size_t v = 0; v < nodes; ++v) {
                        const Real* grow = g.data() + (ts * nodes + v) * d;
                        for (std::size_t j = 0; j < d; ++j) prow[j] += grow[j];
                      }
                    }
                  }
                });
  }

  /// Scaled dot-product attention over each node's own time series, restricted
  /// by a {0, -inf} mask. q/k/v are [steps*nodes x dim] with row (t*nodes + v)
  /// holding node v at step t. Masked attention weights are exactly zero and
  /// masked positions contribute no work, so the flop count tracks the mask.
  ///
  /// `beta_sink`, when non-null, receives the pre-dropout attention weights as
  /// a [nodes x steps x steps] tensor. The caller keeps `mask` alive.
  Var masked_attention(Var q, Var k, Var v, const Tensor& mask, std::size_t steps,
                       std::size_t nodes, Real scale, Real drop_p, RngEngine* rng,
                       TensorT<Real>* beta_sink, FlopCounter* flops) {
    const Tensor& tq = value(q);
    const Tensor& tk = value(k);
    const Tensor& tv = value(v);
    if (tq.rank() != 2 || !tq.same_shape(tk) || !tq.same_shape(tv) ||
        tq.dim(0) != steps * nodes) {
      throw DimensionError("masked_attention: q/k/v must be [steps*nodes x dim]");
    }
    if (mask.rank() != 2 || mask.dim(0) != steps || mask.dim(1) != steps) {
      throw DimensionError("masked_attention: mask must be [steps x steps]");
    }
    const std::size_t dim = tq.dim(1);

    // Active key positions per query row, shared by every node.
    auto active = std::make_shared<std::vector<std::vector<std::uint32_t>>>(steps);
    std::size_t per_node = 0;
    for (std::size_t i = 0; i < steps; ++i) {
      for (std::size_t j = 0; j < steps; ++j)
        if (mask.at(i, j) == Real(0)) (*active)[i].push_back(static_cast<std::uint32_t>(j));
      if ((*active)[i].empty()) throw DegenerateRowError("masked_attention: fully masked row");
      per_node += (*active)[i].size();
    }
    // Row offsets into the per-node flat weight buffer.
    auto row_off = std::make_shared<std::vector<std::size_t>>(steps + 1, 0);
    for (std::size_t i = 0; i < steps; ++i) (*row_off)[i + 1] = (*row_off)[i] + (*active)[i].size();

    auto beta = std::make_shared<std::vector<Real>>(nodes * per_node);
    std::shared_ptr<std::vector<Real>> dmask;
    const bool training_drop = drop_p > Real(0) && rng != nullptr;
    if (training_drop) dmask = std::make_shared<std::vector<Real>>(nodes * per_node);
    const Real keep_scale = training_drop ? Real(1) / (Real(1) - drop_p) : Real(1);

    Tensor out({steps * nodes, dim});
    std::vector<Real> logits(steps);
    std::uint64_t fl = 0;
    for (std::size_t node = 0; node < nodes; ++node) {
      for (std::size_t i = 0; i < steps; ++i) {
        const auto& act = (*active)[i];
        const Real* qrow = tq.data() + (i * nodes + node) * dim;
        Real mx = -std::numeric_limits<Real>::infinity();
        for (std::size_t a = 0; a < act.size(); ++a) {
          const Real* krow = tk.data() + (act[a] * nodes + node) * dim;
          Real acc = Real(0);
          for (std::size_t p = 0; p < dim; ++p) acc += qrow[p] * krow[p];
          logits[a] = acc * scale;
          mx = std::max(mx, logits[a]);
        }
        Real z = Real(0);
        for (std::size_t a = 0; a < act.size(); ++a) {
          logits[a] = std::exp(logits[a] - mx);
          z += logits[a];
        }
        Real* brow = beta->data() + node * per_node + (*row_off)[i];
        Real* out_row = out.data() + (i * nodes + node) * dim;
        for (std::size_t a = 0; a < act.size(); ++a) {
          const Real b = logits[a] / z;
          brow[a] = b;
          Real bw = b;
          if (training_drop) {
            const Real m = uniform_real(*rng) < static_cast<double>(drop_p) ? Real(0) : keep_scale;
            (*dmask)[node * per_node + (*row_off)[i] + a] = m;
            bw *= m;
          }
          const Real* vrow = tv.data() + (act[a] * nodes + node) * dim;
          for (std::size_t p = 0; p < dim; ++p) out_row[p] += bw * vrow[p];
        }
        fl += 4ull * act.size() * dim;
        if (beta_sink != nullptr) {
          for (std::size_t a = 0; a < act.size(); ++a) {
            (*beta_sink)[(node * steps + i) * steps + act[a]] = brow[a];
          }
        }
      }
    }
    if (flops != nullptr) {
      flops->temporal_attention_flops += fl;
      flops->total_flops += fl;
    }
    if (flops_ != nullptr && flops_ != flops) {
      flops_->temporal_attention_flops += fl;
      flops_->total_flops += fl;
    }

    return push(std::move(out), wants_grad(q) || wants_grad(k) || wants_grad(v),
                [q, k, v, active, row_off, beta, dmask, steps, nodes, dim, scale, keep_scale,
                 per_node](TapeT& t, int self) {
                  const Tensor& g = t.nodes_[self].grad;
                  const Tensor& tq = t.value(q);
                  const Tensor& tk = t.value(k);
                  const Tensor& tv = t.value(v);
                  const bool wq = t.wants_grad(q);
                  const bool wk = t.wants_grad(k);
                  const bool wv = t.wants_grad(v);
                  Tensor* dq = wq ? &t.grad_buf(q) : nullptr;
                  Tensor* dk = wk ? &t.grad_buf(k) : nullptr;
                  Tensor* dv = wv ? &t.grad_buf(v) : nullptr;
                  std::vector<Real> db(steps);
                  for (std::size_t node = 0; node < nodes; ++node) {
                    for (std::size_t i = 0; i < steps; ++i) {
                      const auto& act = (*active)[i];
                      const Real* grow = g.data() + (i * nodes + node) * dim;
                      const Real* brow = beta->data() + node * per_node + (*row_off)[i];
                      const Real* mrow =
                          dmask ? dmask->data() + node * per_node + (*row_off)[i] : nullptr;
                      // dV and d(beta) through the dropout mask.
                      Real dot = Real(0);
                      for (std::size_t a = 0; a < act.size(); ++a) {
                        const std::size_t vr = (act[a] * nodes + node) * dim;
                        const Real* vrow = tv.data() + vr;
                        Real acc = Real(0);
                        for (std::size_t p = 0; p < dim; ++p) acc += grow[p] * vrow[p];
                        const Real m = mrow ? mrow[a] : keep_scale;
                        db[a] = acc * m;
                        if (wv) {
                          Real* dvrow = dv->data() + vr;
                          const Real bw = brow[a] * m;
                          for (std::size_t p = 0; p < dim; ++p) dvrow[p] += bw * grow[p];
                        }
                        dot += brow[a] * db[a];
                      }
                      // softmax backward, then into q and k.
                      const Real* qrow = tq.data() + (i * nodes + node) * dim;
                      Real* dqrow = wq ? dq->data() + (i * nodes + node) * dim : nullptr;
                      for (std::size_t a = 0; a < act.size(); ++a) {
                        const Real ds = brow[a] * (db[a] - dot) * scale;
                        if (ds == Real(0)) continue;
                        const std::size_t kr = (act[a] * nodes + node) * dim;
                        if (wq) {
                          const Real* krow = tk.data() + kr;
                          for (std::size_t p = 0; p < dim; ++p) dqrow[p] += ds * krow[p];
                        }
                        if (wk) {
                          Real* dkrow = dk->data() + kr;
                          for (std::size_t p = 0; p < dim; ++p) dkrow[p] += ds * qrow[p];
                        }
                      }
                    }
                  }
                });
  }

  // ---- backward -------------------------------------------------------------

  /// Reverse sweep from a scalar output. Replays recorded closures in reverse
  /// creation order; repeat calls re-accumulate, so use one per tape.
  void backward(Var out) {
    Node& o = nodes_[check(out)];
    if (o.value.size() != 1) throw DimensionError("backward: output must be scalar");
    if (!o.requires_grad) throw DimensionError("backward: output does not require grad");
    touched_.assign(nodes_.size(), 0);
    o.grad[0] = Real(1);
    touched_[out.id] = 1;
    for (int i = out.id; i >= 0; --i) {
      if (!touched_[i]) continue;
      Node& n = nodes_[i];
      if (n.backward) n.backward(*this, i);
    }
  }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::function<void(TapeT&, int)> backward;
  };

  int check(Var v) const {
    if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size()) {
      throw RangeError("invalid tape variable");
    }
    return v.id;
  }

  /// Gradient accumulator for a node; marks it live for the reverse sweep.
  Tensor& grad_buf(Var v) {
    touched_[v.id] = 1;
    return nodes_[v.id].grad;
  }

  Var push(Tensor value, bool requires_grad, std::function<void(TapeT&, int)> back) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    if (requires_grad) {
      n.grad = Tensor(n.value.shape());
      n.backward = std::move(back);
    }
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size() - 1)};
  }

  std::vector<Node> nodes_;
  std::vector<char> touched_;
  FlopCounter* flops_ = nullptr;
};

using Tape = TapeT<double>;

}  // namespace dysat
