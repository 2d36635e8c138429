#pragma once

#include <cstdint>

#include "pcscopf/network.hpp"

namespace pcscopf {

/// Random connected test grids. The core is a ring with random chords, so it
/// has no bridges; every islanding outage therefore comes from the leaf buses
/// and two-bus radial spurs attached to it.
struct GridOptions {
  int core_buses = 50;
  int chords = 25;
  int leaf_buses = 5;
  int radial_pairs = 0;
  int generators = 10;
  /// Leaves that also carry a small generator (islanded generation is lost).
  int leaf_generators = 0;
  double mean_load_mw = 40.0;
  double load_share = 0.8;
  /// Upper bound on each leaf load as a share of the total core load.
  double leaf_load_share = 0.004;
  double capacity_margin = 1.5;
  /// Ratings are the worst N-1 flow of a proportional dispatch times a
  /// factor drawn from this range; factors below 1 create congestion.
  double limit_factor_min = 0.85;
  double limit_factor_max = 1.4;
  std::uint64_t seed = 1;
  ReliabilityDefaults defaults;
};

Network random_grid(const GridOptions& options);

/// 500 buses and 597 branches of which 254 isolate a single leaf bus.
Network leafy_500_bus_grid(std::uint64_t seed);

}  // namespace pcscopf
