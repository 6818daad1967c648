#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dysat/errors.hpp"
#include "dysat/tensor.hpp"

namespace dysat {

/// Dense node index, stable across every snapshot of a sequence.
using NodeId = std::uint32_t;

struct WeightedEdge {
  NodeId u = 0;
  NodeId v = 0;
  double weight = 1.0;
};

/// One weighted undirected graph of the dynamic sequence. Immutable after
/// construction; safe for concurrent reads.
class Snapshot {
 public:
  Snapshot() = default;

  /// Builds symmetric adjacency from an edge list. Duplicate (u,v) entries
  /// are summed into one weight; self-loops and non-positive weights are
  /// rejected.
  Snapshot(std::size_t num_nodes, const std::vector<WeightedEdge>& edges);

  std::size_t num_nodes() const { return adjacency_.size(); }
  std::size_t num_edges() const { return num_edges_; }

  /// Neighbors of v sorted by node id, with link weights.
  const std::vector<std::pair<NodeId, double>>& neighbors(NodeId v) const;

  std::size_t degree(NodeId v) const { return neighbors(v).size(); }
  bool has_edge(NodeId u, NodeId v) const;

  /// Undirected edge list with u < v, sorted.
  std::vector<WeightedEdge> edge_list() const;

 private:
  std::vector<std::vector<std::pair<NodeId, double>>> adjacency_;
  std::size_t num_edges_ = 0;
};

/// Ordered snapshots over a shared node set.
struct SnapshotSequence {
  std::size_t num_nodes = 0;
  std::vector<Snapshot> snapshots;

  std::size_t num_steps() const { return snapshots.size(); }
  const Snapshot& at(std::size_t t) const;

  /// The first `upto` snapshots as a training range.
  SnapshotSequence prefix(std::size_t upto) const;
};

/// N_v, optionally augmented with (v, 1.0) so isolated nodes still have a
/// defined attention neighborhood.
std::vector<std::pair<NodeId, double>> neighborhood(const Snapshot& s, NodeId v,
                                                    bool include_self);

/// Parses whitespace-separated `t u v w` lines. Gaps in t yield empty
/// snapshots; repeated (t,u,v) lines sum their weights.
SnapshotSequence load_snapshots(const std::string& path, std::size_t num_nodes);

/// Inverse of load_snapshots up to weight summation: one line per undirected
/// edge, sorted by (t, u, v).
void save_snapshots(const SnapshotSequence& seq, const std::string& path);

/// Node input representations; defaults to 1-hot (identity). The identity
/// case is flagged so layers can skip the trivial transform.
struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;
  bool one_hot = false;

  static FeatureMatrix identity(std::size_t n);
  double at(std::size_t i, std::size_t j) const { return values[i * cols + j]; }
  Tensor as_tensor() const { return Tensor({rows, cols}, values); }
};

/// TSV feature file: node id followed by D reals; every node must appear.
FeatureMatrix load_features(const std::string& path, std::size_t num_nodes);

}  // namespace dysat
