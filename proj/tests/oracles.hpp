#pragma once

// Straight-line brute-force references, independent of the tape and layer
// implementations. Everything here is written with explicit loops directly
// from the math so the library can be checked against it.

#include <cmath>
#include <vector>

#include "dysat/graph.hpp"
#include "dysat/tensor.hpp"

namespace oracle {

using dysat::NodeId;
using dysat::Snapshot;
using dysat::Tensor;

inline double leaky_relu(double x, double slope) { return x > 0 ? x : slope * x; }
inline double elu(double x) { return x > 0 ? x : std::exp(x) - 1.0; }
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  Tensor c({a.dim(0), b.dim(1)});
  for (std::size_t i = 0; i < a.dim(0); ++i)
    for (std::size_t j = 0; j < b.dim(1); ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < a.dim(1); ++k) acc += a.at(i, k) * b.at(k, j);
      c.at(i, j) = acc;
    }
  return c;
}

/// Structural attention, one head: for every node v, logits over u in
/// N_v plus the self entry (weight 1) are leaky_relu(A_uv * (a_l . Wx_u +
/// a_r . Wx_v)); alpha is their softmax; z_v = elu(sum_u alpha_u Wx_u).
inline Tensor structural_attention(const Snapshot& s, const Tensor& x, const Tensor& w,
                                   const Tensor& a, double slope) {
  const std::size_t nodes = s.num_nodes();
  const std::size_t feat = w.dim(1);
  const Tensor wx = matmul(x, w);
  Tensor out({nodes, feat});
  for (NodeId v = 0; v < nodes; ++v) {
    std::vector<std::pair<NodeId, double>> nbrs = s.neighbors(v);
    nbrs.emplace_back(v, 1.0);
    std::vector<double> logits(nbrs.size());
    for (std::size_t i = 0; i < nbrs.size(); ++i) {
      const auto& [u, weight] = nbrs[i];
      double score = 0.0;
      for (std::size_t f = 0; f < feat; ++f) {
        score += a[f] * wx.at(u, f) + a[feat + f] * wx.at(v, f);
      }
      logits[i] = leaky_relu(weight * score, slope);
    }
    double mx = logits[0];
    for (double l : logits) mx = std::max(mx, l);
    double z = 0.0;
    std::vector<double> alpha(nbrs.size());
    for (std::size_t i = 0; i < nbrs.size(); ++i) {
      alpha[i] = std::exp(logits[i] - mx);
      z += alpha[i];
    }
    for (std::size_t i = 0; i < nbrs.size(); ++i) alpha[i] /= z;
    for (std::size_t f = 0; f < feat; ++f) {
      double acc = 0.0;
      for (std::size_t i = 0; i < nbrs.size(); ++i) acc += alpha[i] * wx.at(nbrs[i].first, f);
      out.at(v, f) = elu(acc);
    }
  }
  return out;
}

/// Temporal attention, one head, one node sequence [T x D']: scaled
/// dot-product attention where row i attends to columns j <= i.
inline Tensor temporal_attention(const Tensor& x, const Tensor& wq, const Tensor& wk,
                                 const Tensor& wv) {
  const std::size_t steps = x.dim(0);
  const std::size_t feat = wq.dim(1);
  const Tensor q = matmul(x, wq);
  const Tensor k = matmul(x, wk);
  const Tensor v = matmul(x, wv);
  const double scale = 1.0 / std::sqrt(static_cast<double>(feat));
  Tensor out({steps, feat});
  for (std::size_t i = 0; i < steps; ++i) {
    std::vector<double> logits(i + 1);
    double mx = -1e300;
    for (std::size_t j = 0; j <= i; ++j) {
      double acc = 0.0;
      for (std::size_t f = 0; f < feat; ++f) acc += q.at(i, f) * k.at(j, f);
      logits[j] = acc * scale;
      mx = std::max(mx, logits[j]);
    }
    double z = 0.0;
    for (std::size_t j = 0; j <= i; ++j) {
      logits[j] = std::exp(logits[j] - mx);
      z += logits[j];
    }
    for (std::size_t f = 0; f < feat; ++f) {
      double acc = 0.0;
      for (std::size_t j = 0; j <= i; ++j) acc += (logits[j] / z) * v.at(j, f);
      out.at(i, f) = acc;
    }
  }
  return out;
}

/// Graph-context loss: positives[t] holds (v, u) pairs, negatives[t][p] the
/// negative draws for positive p. Log arguments floor at 1e-12.
inline double context_loss(const std::vector<Tensor>& embeddings,
                           const std::vector<std::vector<std::pair<NodeId, NodeId>>>& positives,
                           const std::vector<std::vector<std::vector<NodeId>>>& negatives,
                           double w_n) {
  const std::size_t d = embeddings.empty() ? 0 : embeddings[0].dim(1);
  auto dot = [&](std::size_t t, NodeId a, NodeId b) {
    double acc = 0.0;
    for (std::size_t f = 0; f < d; ++f) acc += embeddings[t].at(a, f) * embeddings[t].at(b, f);
    return acc;
  };
  double loss = 0.0;
  for (std::size_t t = 0; t < positives.size(); ++t) {
    for (std::size_t p = 0; p < positives[t].size(); ++p) {
      const auto& [v, u] = positives[t][p];
      loss += -std::log(std::max(sigmoid(dot(t, u, v)), 1e-12));
      if (t < negatives.size() && p < negatives[t].size()) {
        for (NodeId neg : negatives[t][p]) {
          loss += -w_n * std::log(std::max(1.0 - sigmoid(dot(t, neg, v)), 1e-12));
        }
      }
    }
  }
  return loss;
}

}  // namespace oracle
