#include "dysat/graph.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

namespace dysat {

Snapshot::Snapshot(std::size_t num_nodes, const std::vector<WeightedEdge>& edges)
    : adjacency_(num_nodes) {
  std::map<std::pair<NodeId, NodeId>, double> merged;
  for (const auto& e : edges) {
    if (e.u >= num_nodes || e.v >= num_nodes) {
      throw RangeError("edge endpoint " + std::to_string(std::max(e.u, e.v)) +
                       " outside node set of size " + std::to_string(num_nodes));
    }
    if (e.u == e.v) throw ParseError("self-loop rejected at node " + std::to_string(e.u));
    if (!(e.weight > 0.0)) throw ParseError("non-positive edge weight");
    const auto key = std::minmax(e.u, e.v);
    merged[{key.first, key.second}] += e.weight;
  }
  for (const auto& [key, w] : merged) {
    adjacency_[key.first].emplace_back(key.second, w);
    adjacency_[key.second].emplace_back(key.first, w);
  }
  for (auto& nbrs : adjacency_) {
    std::sort(nbrs.begin(), nbrs.end());
  }
  num_edges_ = merged.size();
}

const std::vector<std::pair<NodeId, double>>& Snapshot::neighbors(NodeId v) const {
  if (v >= adjacency_.size()) throw RangeError("node id out of range");
  return adjacency_[v];
}

bool Snapshot::has_edge(NodeId u, NodeId v) const {
  const auto& nbrs = neighbors(u);
  auto it = std::lower_bound(nbrs.begin(), nbrs.end(), v,
                             [](const std::pair<NodeId, double>& p, NodeId x) {
                               return p.first < x;
                             });
  return it != nbrs.end() && it->first == v;
}

std::vector<WeightedEdge> Snapshot::edge_list() const {
  std::vector<WeightedEdge> edges;
  edges.reserve(num_edges_);
  for (NodeId u = 0; u < adjacency_.size(); ++u) {
    for (const auto& [v, w] : adjacency_[u]) {
      if (u < v) edges.push_back({u, v, w});
    }
  }
  return edges;
}

const Snapshot& SnapshotSequence::at(std::size_t t) const {
  if (t >= snapshots.size()) throw RangeError("snapshot index out of range");
  return snapshots[t];
}

SnapshotSequence SnapshotSequence::prefix(std::size_t upto) const {
  if (upto == 0 || upto > snapshots.size()) throw RangeError("invalid prefix length");
  SnapshotSequence out;
  out.num_nodes = num_nodes;
  out.snapshots.assign(snapshots.begin(), snapshots.begin() + static_cast<long>(upto));
  return out;
}

std::vector<std::pair<NodeId, double>> neighborhood(const Snapshot& s, NodeId v,
                                                    bool include_self) {
  std::vector<std::pair<NodeId, double>> out = s.neighbors(v);
  if (include_self) out.emplace_back(v, 1.0);
  return out;
}

SnapshotSequence load_snapshots(const std::string& path, std::size_t num_nodes) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open snapshot file: " + path);

  std::vector<std::vector<WeightedEdge>> per_step;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    long long t;
    long long u, v;
    double w;
    if (!(ls >> t >> u >> v >> w)) {
      throw ParseError("line " + std::to_string(line_no) + ": expected `t u v w`");
    }
    std::string trailing;
    if (ls >> trailing) {
      throw ParseError("line " + std::to_string(line_no) + ": trailing tokens");
    }
    if (t < 0) throw ParseError("line " + std::to_string(line_no) + ": negative time step");
    if (u < 0 || v < 0) throw ParseError("line " + std::to_string(line_no) + ": negative node id");
    if (static_cast<std::size_t>(u) >= num_nodes || static_cast<std::size_t>(v) >= num_nodes) {
      throw RangeError("line " + std::to_string(line_no) + ": node id >= " +
                       std::to_string(num_nodes));
    }
    if (u == v) throw ParseError("line " + std::to_string(line_no) + ": self-loop");
    if (!(w > 0.0)) {
      throw ParseError("line " + std::to_string(line_no) + ": weight must be positive");
    }
    if (per_step.size() <= static_cast<std::size_t>(t)) per_step.resize(t + 1);
    per_step[t].push_back({static_cast<NodeId>(u), static_cast<NodeId>(v), w});
  }
  if (per_step.empty()) throw ParseError("snapshot file has no edges: " + path);

  SnapshotSequence seq;
  seq.num_nodes = num_nodes;
  seq.snapshots.reserve(per_step.size());
  for (const auto& edges : per_step) seq.snapshots.emplace_back(num_nodes, edges);
  return seq;
}

void save_snapshots(const SnapshotSequence& seq, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open for writing: " + path);
  out.precision(17);
  for (std::size_t t = 0; t < seq.num_steps(); ++t) {
    for (const auto& e : seq.snapshots[t].edge_list()) {
      out << t << ' ' << e.u << ' ' << e.v << ' ' << e.weight << '\n';
    }
  }
}

FeatureMatrix FeatureMatrix::identity(std::size_t n) {
  FeatureMatrix f;
  f.rows = n;
  f.cols = n;
  f.values.assign(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) f.values[i * n + i] = 1.0;
  f.one_hot = true;
  return f;
}

FeatureMatrix load_features(const std::string& path, std::size_t num_nodes) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open feature file: " + path);
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::vector<double>> rows(num_nodes);
  std::size_t dim = 0;
  std::vector<bool> seen(num_nodes, false);
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    long long id;
    if (!(ls >> id)) throw ParseError("line " + std::to_string(line_no) + ": expected node id");
    if (id < 0 || static_cast<std::size_t>(id) >= num_nodes) {
      throw RangeError("line " + std::to_string(line_no) + ": node id out of range");
    }
    std::vector<double> vals;
    double x;
    while (ls >> x) vals.push_back(x);
    if (vals.empty()) throw ParseError("line " + std::to_string(line_no) + ": no feature values");
    if (dim == 0) dim = vals.size();
    if (vals.size() != dim) {
      throw ParseError("line " + std::to_string(line_no) + ": inconsistent feature width");
    }
    seen[id] = true;
    rows[id] = std::move(vals);
  }
  for (std::size_t i = 0; i < num_nodes; ++i) {
    if (!seen[i]) throw ParseError("feature file missing node " + std::to_string(i));
  }
  FeatureMatrix f;
  f.rows = num_nodes;
  f.cols = dim;
  f.values.reserve(num_nodes * dim);
  for (const auto& r : rows) f.values.insert(f.values.end(), r.begin(), r.end());
  f.one_hot = false;
  return f;
}

}  // namespace dysat
