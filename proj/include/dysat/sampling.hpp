#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dysat/graph.hpp"
#include "dysat/rng.hpp"

namespace dysat {

struct SamplerConfig {
  int walks_per_node = 10;
  int walk_length = 40;
  int window = 10;
  int negatives_per_positive = 10;
  double smoothing = 0.75;
  std::uint64_t seed = 1;

  void validate() const;
};

using Walk = std::vector<NodeId>;

/// DeepWalk-style first-order walks: walks_per_node walks of walk_length
/// nodes from every node with degree >= 1, the next node drawn proportionally
/// to edge weight. Each start node owns an RNG stream derived from
/// (cfg.seed, node id), so parallel and serial generation agree.
std::vector<Walk> random_walks(const Snapshot& s, const SamplerConfig& cfg, int threads = 1);

/// Ordered co-occurrence pairs (walk[i], walk[j]) for all j != i with
/// |i - j| <= window, kept as a multiset.
std::vector<std::pair<NodeId, NodeId>> cooccurrence_pairs(const std::vector<Walk>& walks,
                                                          int window);

/// P(v) proportional to degree(v)^smoothing over nodes with degree >= 1.
/// Throws EmptyDistributionError on an edgeless snapshot.
std::vector<double> negative_distribution(const Snapshot& s, double smoothing);

/// k i.i.d. draws from `dist` by CDF inversion; deterministic given the rng.
std::vector<NodeId> sample_negatives(const std::vector<double>& dist, int k, RngEngine& rng);

/// Per-snapshot positive pairs and negative distributions for the contrastive
/// objective. Contexts are grouped by source node; frequencies are kept.
struct WalkCorpus {
  std::size_t num_nodes = 0;
  /// contexts[t][v] = multiset of context nodes for v at step t.
  std::vector<std::vector<std::vector<NodeId>>> contexts;
  /// neg_dist[t] over all nodes; empty when snapshot t has no edges.
  std::vector<std::vector<double>> neg_dist;

  std::size_t num_steps() const { return contexts.size(); }
  std::size_t total_pairs(std::size_t t) const;
  bool step_usable(std::size_t t) const { return !neg_dist[t].empty(); }
};

/// Walks + pairs + negative distributions for every snapshot. Per-snapshot
/// walk seeds derive from (cfg.seed, t).
WalkCorpus build_corpus(const SnapshotSequence& seq, const SamplerConfig& cfg, int threads = 1);

/// Same, but snapshot t seeds as global step `step_offset + t`; lets an
/// incremental run reproduce the walks a full run would draw for that step.
WalkCorpus build_corpus_at(const SnapshotSequence& seq, const SamplerConfig& cfg,
                           std::size_t step_offset, int threads = 1);

void save_corpus(const WalkCorpus& corpus, const std::string& path);
WalkCorpus load_corpus(const std::string& path);

}  // namespace dysat
