#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "pcscopf/network.hpp"
#include "pcscopf/scopf.hpp"

namespace pcscopf {

struct MultiplierRange {
  double low = 1.0;
  double high = 1.0;
};

/// Uniform sampling ranges. `b_short` and `b_long` are rating factors on
/// the normal limit; the others multiply the network's own values, and the
/// Gamma multiplier applies to `SensitivityOptions::gamma_base_fraction`.
struct SensitivityRanges {
  MultiplierRange voll{0.1, 10.0};
  MultiplierRange pi{0.1, 10.0};
  MultiplierRange gamma{0.1, 50.0};
  MultiplierRange redispatch{1.0, 10.0};
  MultiplierRange b_short{1.25, 1.5};
  MultiplierRange b_long{1.0, 1.25};

  void validate() const;
};

struct ParameterSample {
  int index = 0;
  double voll = 1.0;
  double pi = 1.0;
  double gamma = 1.0;
  double redispatch = 1.0;
  /// Unset keeps the network's own short/long ratings.
  std::optional<double> b_short;
  std::optional<double> b_long;
  /// Study seed the sample was drawn from.
  std::uint64_t seed = 0;
};

struct SampleRecord {
  ParameterSample sample;
  ScopfStatus status = ScopfStatus::optimal;
  double base_cost = 0.0;
  /// Energy not served summed over every post-contingency state of the stage
  /// (MWh per hour of operation), not weighted by outage probability.
  double ens_short = 0.0;
  double ens_long = 0.0;
  /// The probability-weighted counterparts from the cost breakdown.
  double expected_ens_short = 0.0;
  double expected_ens_long = 0.0;
  double eoc = 0.0;
  double objective = 0.0;

  bool converged() const { return status == ScopfStatus::optimal; }
};

struct SensitivityOptions {
  /// Variant, tolerances and LP options for every run; gamma_fraction is
  /// overwritten from the Gamma multiplier.
  ScopfConfig config;
  double gamma_base_fraction = 0.02;
  /// Samples are independent and may run in parallel; output order is fixed.
  int threads = 1;
};

std::vector<ParameterSample> draw_samples(int n, const SensitivityRanges& ranges, std::uint64_t seed);

/// A copy of `network` with the sample's multipliers applied.
Network apply_sample(const Network& network, const ParameterSample& sample);
/// Gamma fraction of a sample, clamped to 1.
double sample_gamma_fraction(const ParameterSample& sample, double gamma_base_fraction);

SampleRecord run_sample(const Network& network, const ParameterSample& sample, const SensitivityOptions& options);

std::vector<SampleRecord> sample_and_run(const Network& network, int n, const SensitivityRanges& ranges,
                                         std::uint64_t seed, const SensitivityOptions& options = {});

struct CorrelationMatrix {
  /// Inputs first (voll, pi, gamma, redispatch, b_short, b_long), then
  /// outputs (base_cost, ens_short, ens_long, eoc).
  std::vector<std::string> names;
  std::vector<std::vector<double>> r;
  /// Set where a column has zero variance; r is 0 there by convention.
  std::vector<std::vector<bool>> degenerate;
  int records_used = 0;
  int records_total = 0;

  double at(const std::string& a, const std::string& b) const;
  bool is_degenerate(const std::string& a, const std::string& b) const;
};

/// Pearson correlations over the converged records. Throws
/// std::invalid_argument with fewer than three converged records.
CorrelationMatrix correlations(const std::vector<SampleRecord>& records);

struct SweepPoint {
  double parameter = 0.0;  // VOLL multiplier or Gamma fraction
  Variant variant = Variant::c_scopf;
  ScopfStatus status = ScopfStatus::optimal;
  double base_cost = 0.0;
  double objective = 0.0;
  std::string diagnosis;
};

struct VollSweep {
  std::vector<SweepPoint> points;
  /// Base costs of one variant in multiplier order; NaN where not optimal.
  std::vector<double> curve(Variant v) const;
};

/// Base cost per (VOLL multiplier, variant) with system-splitting
/// contingencies excluded.
VollSweep voll_sweep(const Network& network, const std::vector<double>& multipliers,
                     const std::vector<Variant>& variants, const ScopfConfig& config = {});

struct GammaSweep {
  std::vector<SweepPoint> points;
  /// Smallest Gamma from which the objective no longer changes, when the
  /// sweep reaches such a plateau.
  std::optional<double> saturation_gamma;
};

GammaSweep gamma_sweep(const Network& network, const std::vector<double>& gamma_fractions,
                       const ScopfConfig& config = {});

void write_samples_csv(const std::vector<SampleRecord>& records, std::ostream& out);
void write_correlation_csv(const CorrelationMatrix& matrix, std::ostream& out);
void write_sweep_csv(const std::vector<SweepPoint>& points, const std::string& parameter_name, std::ostream& out);

}  // namespace pcscopf
