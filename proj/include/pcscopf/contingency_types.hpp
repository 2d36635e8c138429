#pragma once

#include <vector>

namespace pcscopf {

enum class IslandKind { connected, radial_isolation, multi_split };

/// How an outage separates the grid. The reference bus always stays in the
/// surviving network; `isolated_buses` is the side without it.
struct IslandInfo {
  IslandKind kind = IslandKind::connected;
  std::vector<int> isolated_buses;  // sorted, empty unless radial_isolation

  bool operator==(const IslandInfo&) const = default;
};

struct Contingency {
  int outaged_branch = -1;
  double probability = 0.0;
  IslandInfo island_info;

  bool is_island() const { return island_info.kind == IslandKind::radial_isolation; }
  bool operator==(const Contingency&) const = default;
};

}  // namespace pcscopf
