#pragma once

#include <cstdint>

#include "dysat/graph.hpp"

namespace dysat {

/// Two equal communities with stable intra-community structure, light
/// per-snapshot churn, and a fixed inter-community link block that recurs on
/// every other snapshot. The periodic block is invisible to a purely
/// structural model at odd steps but predictable from history.
struct SynthConfig {
  std::size_t nodes = 60;
  std::size_t steps = 8;
  double p_intra = 0.10;       // ER density inside each community (stable part)
  std::size_t cross_pairs = 60;  // size of the recurring inter-community block
  std::size_t connectors = 10;   // nodes per community that may carry cross links
  std::size_t noise_edges = 8;   // intra edges resampled every snapshot
  std::uint64_t seed = 7;
};

SnapshotSequence make_periodic_two_community(const SynthConfig& cfg);

}  // namespace dysat
