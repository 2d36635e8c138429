#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "pcscopf/contingency_types.hpp"

namespace pcscopf {

struct Bus {
  int id = 0;
  bool is_reference = false;
  /// Bus number in the source file, kept for reporting only.
  long external_id = -1;

  bool operator==(const Bus&) const = default;
};

struct Branch {
  int id = 0;
  int from_bus = 0;
  int to_bus = 0;
  double reactance_pu = 0.0;
  double limit_normal_mw = 0.0;
  double limit_short_mw = 0.0;
  double limit_long_mw = 0.0;
  /// Outage probability per operating hour.
  double outage_probability = 0.0;

  double susceptance_pu() const { return 1.0 / reactance_pu; }
  bool operator==(const Branch&) const = default;
};

struct CostSegment {
  double capacity_mw = 0.0;
  double marginal_cost_per_mwh = 0.0;

  bool operator==(const CostSegment&) const = default;
};

/// A dispatchable unit with a convex piecewise-linear cost curve. Each
/// segment becomes its own LP column.
struct Generator {
  int id = 0;
  int bus = 0;
  std::vector<CostSegment> segments;
  double ramp_short_mw = 0.0;
  double ramp_long_mw = 0.0;
  double redispatch_cost_per_mwh = 0.0;

  double capacity_mw() const;
  bool operator==(const Generator&) const = default;
};

struct Demand {
  int id = 0;
  int bus = 0;
  double p_demand_mw = 0.0;
  double voll_per_mwh = 0.0;

  bool operator==(const Demand&) const = default;
};

struct Network {
  double base_mva = 100.0;
  std::vector<Bus> buses;
  std::vector<Branch> branches;
  std::vector<Generator> generators;
  std::vector<Demand> demands;

  int bus_count() const { return static_cast<int>(buses.size()); }
  int branch_count() const { return static_cast<int>(branches.size()); }
  /// Id of the first bus flagged as reference, -1 if none.
  int reference_bus() const;
  double total_demand_mw() const;
  double total_capacity_mw() const;

  bool operator==(const Network&) const = default;
};

/// Defaults applied when reliability or economic side data is absent.
struct ReliabilityDefaults {
  double short_rating_factor = 1.3;
  double long_rating_factor = 1.1;
  double outage_probability = 1e-4;
  double voll_per_mwh = 10000.0;
  /// ramp_long = factor * capacity; ramp_short = ramp_long / short_ramp_divisor.
  double long_ramp_capacity_factor = 1.0;
  double short_ramp_divisor = 10.0;
};

enum class Severity { warning, error };

struct Violation {
  Severity severity = Severity::error;
  std::string code;
  std::string message;
  /// Offending element id (branch, bus, generator or demand), -1 if global.
  int element = -1;
};

/// Checks every data invariant plus connectivity. Violations are data, never
/// exceptions; warnings do not make a network invalid.
std::vector<Violation> validate(const Network& network);

bool has_errors(const std::vector<Violation>& violations);

/// Throws InvalidNetwork listing all error-severity violations.
void require_valid(const Network& network);

class InvalidNetwork : public std::runtime_error {
 public:
  explicit InvalidNetwork(std::vector<Violation> violations);
  const std::vector<Violation>& violations() const { return violations_; }

 private:
  std::vector<Violation> violations_;
};

/// One N-1 contingency per branch, in branch order, with islanding classified.
std::vector<Contingency> contingency_list(const Network& network);

/// Buses reachable from `start` over in-service branches, skipping the
/// branches flagged in `removed` (may be empty).
std::vector<bool> reachable_buses(const Network& network, int start,
                                  const std::vector<bool>& removed = {});

}  // namespace pcscopf
