#include "dysat/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>

#include "dysat/errors.hpp"
#include "dysat/parallel.hpp"
#include "dysat/tensor_io.hpp"

namespace dysat {

namespace {

/// Per-node cumulative neighbor weights for O(log deg) transitions.
struct TransitionTable {
  std::vector<std::vector<double>> cumulative;

  explicit TransitionTable(const Snapshot& s) : cumulative(s.num_nodes()) {
    for (NodeId v = 0; v < s.num_nodes(); ++v) {
      const auto& nbrs = s.neighbors(v);
      auto& cum = cumulative[v];
      cum.reserve(nbrs.size());
      double acc = 0.0;
      for (const auto& [u, w] : nbrs) {
        (void)u;
        acc += w;
        cum.push_back(acc);
      }
    }
  }

  NodeId step(const Snapshot& s, NodeId v, RngEngine& rng) const {
    const auto& cum = cumulative[v];
    const double r = uniform_real(rng) * cum.back();
    const std::size_t idx =
        std::lower_bound(cum.begin(), cum.end(), r) - cum.begin();
    return s.neighbors(v)[std::min(idx, cum.size() - 1)].first;
  }
};

}  // namespace

void SamplerConfig::validate() const {
  if (walks_per_node <= 0 || walk_length <= 0 || window <= 0 || negatives_per_positive <= 0) {
    throw ConfigError("sampler: walk counts, lengths, window and negatives must be positive");
  }
  if (smoothing < 0.0) throw ConfigError("sampler: smoothing must be non-negative");
}

std::vector<Walk> random_walks(const Snapshot& s, const SamplerConfig& cfg, int threads) {
  cfg.validate();
  std::vector<NodeId> starts;
  for (NodeId v = 0; v < s.num_nodes(); ++v) {
    if (s.degree(v) > 0) starts.push_back(v);
  }
  const TransitionTable table(s);
  std::vector<Walk> walks(starts.size() * static_cast<std::size_t>(cfg.walks_per_node));
  parallel_for(starts.size(), threads, [&](std::size_t si) {
    const NodeId start = starts[si];
    RngEngine rng(derive_seed(cfg.seed, stream_tag("walk"), start));
    for (int w = 0; w < cfg.walks_per_node; ++w) {
      Walk walk;
      walk.reserve(cfg.walk_length);
      NodeId cur = start;
      walk.push_back(cur);
      for (int step = 1; step < cfg.walk_length; ++step) {
        cur = table.step(s, cur, rng);
        walk.push_back(cur);
      }
      walks[si * cfg.walks_per_node + w] = std::move(walk);
    }
  });
  return walks;
}

std::vector<std::pair<NodeId, NodeId>> cooccurrence_pairs(const std::vector<Walk>& walks,
                                                          int window) {
  if (window < 1) throw ConfigError("cooccurrence window must be >= 1");
  std::vector<std::pair<NodeId, NodeId>> pairs;
  for (const Walk& walk : walks) {
    const std::size_t n = walk.size();
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t lo = i >= static_cast<std::size_t>(window) ? i - window : 0;
      const std::size_t hi = std::min(n - 1, i + static_cast<std::size_t>(window));
      for (std::size_t j = lo; j <= hi; ++j) {
        if (j == i) continue;
        pairs.emplace_back(walk[i], walk[j]);
      }
    }
  }
  return pairs;
}

std::vector<double> negative_distribution(const Snapshot& s, double smoothing) {
  std::vector<double> dist(s.num_nodes(), 0.0);
  double total = 0.0;
  for (NodeId v = 0; v < s.num_nodes(); ++v) {
    const std::size_t deg = s.degree(v);
    if (deg == 0) continue;
    dist[v] = std::pow(static_cast<double>(deg), smoothing);
    total += dist[v];
  }
  if (total == 0.0) throw EmptyDistributionError("negative distribution over edgeless snapshot");
  for (auto& p : dist) p /= total;
  return dist;
}

std::vector<NodeId> sample_negatives(const std::vector<double>& dist, int k, RngEngine& rng) {
  std::vector<double> cum(dist.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    acc += dist[i];
    cum[i] = acc;
  }
  if (!(acc > 0.0)) throw EmptyDistributionError("sample_negatives: empty distribution");
  std::vector<NodeId> out(k);
  for (int i = 0; i < k; ++i) {
    const double r = uniform_real(rng) * acc;
    const std::size_t idx = std::lower_bound(cum.begin(), cum.end(), r) - cum.begin();
    out[i] = static_cast<NodeId>(std::min(idx, cum.size() - 1));
  }
  return out;
}

std::size_t WalkCorpus::total_pairs(std::size_t t) const {
  std::size_t n = 0;
  for (const auto& ctx : contexts[t]) n += ctx.size();
  return n;
}

WalkCorpus build_corpus(const SnapshotSequence& seq, const SamplerConfig& cfg, int threads) {
  return build_corpus_at(seq, cfg, 0, threads);
}

WalkCorpus build_corpus_at(const SnapshotSequence& seq, const SamplerConfig& cfg,
                           std::size_t step_offset, int threads) {
  cfg.validate();
  WalkCorpus corpus;
  corpus.num_nodes = seq.num_nodes;
  corpus.contexts.resize(seq.num_steps());
  corpus.neg_dist.resize(seq.num_steps());
  for (std::size_t t = 0; t < seq.num_steps(); ++t) {
    corpus.contexts[t].resize(seq.num_nodes);
    const Snapshot& s = seq.snapshots[t];
    if (s.num_edges() == 0) continue;  // unusable step: no pairs, empty dist
    SamplerConfig step_cfg = cfg;
    step_cfg.seed = derive_seed(cfg.seed, stream_tag("snapshot"), step_offset + t);
    const auto walks = random_walks(s, step_cfg, threads);
    for (const auto& [v, u] : cooccurrence_pairs(walks, cfg.window)) {
      corpus.contexts[t][v].push_back(u);
    }
    corpus.neg_dist[t] = negative_distribution(s, cfg.smoothing);
  }
  return corpus;
}

void save_corpus(const WalkCorpus& corpus, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ParseError("cannot open for writing: " + path);
  detail::put_u64(os, corpus.num_nodes);
  detail::put_u64(os, corpus.num_steps());
  for (std::size_t t = 0; t < corpus.num_steps(); ++t) {
    for (const auto& ctx : corpus.contexts[t]) {
      detail::put_u64(os, ctx.size());
      for (NodeId u : ctx) detail::put_u64(os, u);
    }
    detail::put_u64(os, corpus.neg_dist[t].size());
    for (double p : corpus.neg_dist[t]) detail::put_f64(os, p);
  }
}

WalkCorpus load_corpus(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError("cannot open: " + path);
  WalkCorpus corpus;
  corpus.num_nodes = detail::get_u64(is);
  const std::size_t steps = detail::get_u64(is);
  corpus.contexts.resize(steps);
  corpus.neg_dist.resize(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    corpus.contexts[t].resize(corpus.num_nodes);
    for (auto& ctx : corpus.contexts[t]) {
      const std::size_t n = detail::get_u64(is);
      ctx.resize(n);
      for (auto& u : ctx) u = static_cast<NodeId>(detail::get_u64(is));
    }
    const std::size_t nd = detail::get_u64(is);
    corpus.neg_dist[t].resize(nd);
    for (auto& p : corpus.neg_dist[t]) p = detail::get_f64(is);
  }
  return corpus;
}

}  // namespace dysat
