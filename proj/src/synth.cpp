#include "dysat/synth.hpp"

#include <set>
#include <utility>
#include <vector>

#include "dysat/errors.hpp"
#include "dysat/rng.hpp"

namespace dysat {

namespace {

using Pair = std::pair<NodeId, NodeId>;

Pair canonical(NodeId u, NodeId v) { return u < v ? Pair{u, v} : Pair{v, u}; }

}  // namespace

SnapshotSequence make_periodic_two_community(const SynthConfig& cfg) {
  if (cfg.nodes < 4 || cfg.nodes % 2 != 0) throw ConfigError("synth: need an even node count >= 4");
  if (cfg.connectors > cfg.nodes / 2) throw ConfigError("synth: connectors exceed community size");
  const NodeId half = static_cast<NodeId>(cfg.nodes / 2);

  RngEngine rng(derive_seed(cfg.seed, stream_tag("synth")));

  // Stable intra-community backbone, one draw per node pair.
  std::set<Pair> backbone;
  auto add_community = [&](NodeId lo, NodeId hi) {
    for (NodeId u = lo; u < hi; ++u) {
      for (NodeId v = u + 1; v < hi; ++v) {
        if (uniform_real(rng) < cfg.p_intra) backbone.insert({u, v});
      }
    }
  };
  add_community(0, half);
  add_community(half, static_cast<NodeId>(cfg.nodes));

  // Every node gets at least one stable edge so no node is isolated.
  for (NodeId side = 0; side < 2; ++side) {
    const NodeId lo = side == 0 ? 0 : half;
    const NodeId hi = side == 0 ? half : static_cast<NodeId>(cfg.nodes);
    for (NodeId v = lo; v < hi; ++v) {
      bool covered = false;
      for (const auto& [a, b] : backbone) {
        if (a == v || b == v) {
          covered = true;
          break;
        }
      }
      if (!covered) {
        NodeId other = v;
        while (other == v) other = lo + static_cast<NodeId>(uniform_index(rng, hi - lo));
        backbone.insert(canonical(v, other));
      }
    }
  }

  // Fixed inter-community block between the connector subsets.
  std::set<Pair> cross;
  std::size_t guard = 0;
  while (cross.size() < cfg.cross_pairs && guard++ < 100000) {
    const NodeId u = static_cast<NodeId>(uniform_index(rng, cfg.connectors));
    const NodeId v = half + static_cast<NodeId>(uniform_index(rng, cfg.connectors));
    cross.insert({u, v});
  }

  SnapshotSequence seq;
  seq.num_nodes = cfg.nodes;
  for (std::size_t t = 0; t < cfg.steps; ++t) {
    std::set<Pair> edges = backbone;
    if (t % 2 == 0) edges.insert(cross.begin(), cross.end());
    // Churn: a few intra edges that exist only this snapshot.
    RngEngine noise_rng(derive_seed(cfg.seed, stream_tag("noise"), t));
    std::size_t added = 0;
    guard = 0;
    while (added < cfg.noise_edges && guard++ < 100000) {
      const NodeId side = static_cast<NodeId>(uniform_index(noise_rng, 2));
      const NodeId lo = side == 0 ? 0 : half;
      const NodeId u = lo + static_cast<NodeId>(uniform_index(noise_rng, half));
      const NodeId v = lo + static_cast<NodeId>(uniform_index(noise_rng, half));
      if (u == v) continue;
      if (edges.insert(canonical(u, v)).second) ++added;
    }
    std::vector<WeightedEdge> list;
    list.reserve(edges.size());
    for (const auto& [u, v] : edges) list.push_back({u, v, 1.0});
    seq.snapshots.emplace_back(cfg.nodes, list);
  }
  return seq;
}

}  // namespace dysat
