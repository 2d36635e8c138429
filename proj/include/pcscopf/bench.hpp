#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "pcscopf/network.hpp"
#include "pcscopf/scopf.hpp"

namespace pcscopf {

struct BenchOptions {
  /// Recorded trials per contingency and method; warm-up trials come on top.
  int trials = 10;
  int warmup_trials = 2;
  std::uint64_t seed = 1;
  /// 0 times every contingency; otherwise a seeded subset of this size that
  /// keeps the island contingencies first.
  int max_contingencies = 0;
  std::string system_name = "network";
};

struct MethodTiming {
  std::string method;  // "I", "II", "III", "IV"
  double median_ns = 0.0;
  double p10_ns = 0.0;
  double p90_ns = 0.0;
};

struct BenchSample {
  std::string method;
  int contingency = -1;
  int trial = 0;
  std::int64_t nanos = 0;
};

struct BenchReport {
  std::string system;
  int buses = 0;
  int branches = 0;
  int trials = 0;
  int contingencies = 0;
  int island_contingencies = 0;
  std::vector<MethodTiming> methods;
  std::vector<BenchSample> samples;
  /// max |theta(I) - theta(II)| in p.u. and max |row(III) - row(IV)|.
  double max_theta_deviation = 0.0;
  double max_ptdf_deviation = 0.0;
  /// Sum of every computed value; equal seeds give equal checksums.
  double value_checksum = 0.0;

  const MethodTiming& method(const std::string& name) const;
};

/// Times Methods I-IV per contingency on one seeded set of perturbed
/// injections (so dP != 0) and one monitored branch per contingency.
BenchReport bench_methods(const Network& network, const BenchOptions& options = {});

void write_bench_csv(const BenchReport& report, std::ostream& out);
void write_method_summary_csv(const BenchReport& report, std::ostream& out);

struct PhaseShare {
  std::string phase;
  double seconds = 0.0;
  double share = 0.0;
};

struct TimeBreakdown {
  std::vector<PhaseShare> phases;  // the five algorithm phases then "unattributed"
  double total = 0.0;
  double unattributed = 0.0;
  /// Cuts and blocks added, keyed by log phase ("initial", "pre_iteration", "main").
  std::vector<std::pair<std::string, int>> cuts_per_phase;
  std::vector<std::pair<std::string, int>> blocks_per_phase;

  double share(const std::string& phase) const;
};

TimeBreakdown time_breakdown(const ScopfSolution& solution);
void write_phase_csv(const TimeBreakdown& breakdown, std::ostream& out);

}  // namespace pcscopf
