#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "pcscopf/contingency_types.hpp"
#include "pcscopf/linalg.hpp"
#include "pcscopf/network.hpp"

namespace pcscopf {

/// Raised for outages the rank-one kernels cannot represent (multi_split).
class UnsupportedContingency : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The rank-one denominator vanished although the outage was classified as
/// non-separating: the island classification and the matrices disagree.
class SingularUpdate : public std::runtime_error {
 public:
  SingularUpdate(int branch, double denominator);
  int branch() const { return branch_; }
  double denominator() const { return denominator_; }

 private:
  int branch_;
  double denominator_;
};

/// Classification of the graph with `branch` removed.
IslandInfo detect_islanding(const Network& network, int branch);
/// Classification for an outage set. A set that separates the grid is
/// reported as multi_split; only single-branch outages are supported by the
/// flow kernels.
IslandInfo detect_islanding(const Network& network, std::span<const int> branches);
/// All single-branch classifications at once (bridge search, linear time).
std::vector<IslandInfo> classify_islanding(const Network& network);

/// Pre-contingency injections and angles, kept so that Method I can skip
/// the intermediate solve when the post-contingency injections match.
struct BaseCase {
  Vector injections_pu;
  Vector theta;

  static BaseCase from_injections(const SystemMatrices& m, std::span<const double> injections_mw);
};

/// Method I: rank-one (IMML) update of the base inverse. `injections_mw`
/// must be balanced over the surviving network and zero on isolated buses.
/// When `base` is given and the injections agree with it on every surviving
/// non-reference bus, no linear solve is performed. Angles of isolated buses
/// are reported as 0.
Vector method1_theta(const SystemMatrices& m, const Contingency& c, std::span<const double> injections_mw,
                     const BaseCase* base = nullptr);

/// Method II: refactorize the contingency matrix and solve.
Vector method2_theta(const SystemMatrices& m, const Contingency& c, std::span<const double> injections_mw);

/// Method III: contingency PTDF row of branch `monitored` from four inverse
/// columns and one scalar.
Vector method3_ptdf_row(const SystemMatrices& m, const Contingency& c, int monitored);

/// Method IV: contingency PTDF row from a solve against the refactorized
/// contingency matrix.
Vector method4_ptdf_row(const SystemMatrices& m, const Contingency& c, int monitored);

/// A factorized contingency matrix, reused for many angle solves and PTDF
/// rows of the same outage. `outaged_branch = -1` gives the intact system.
class ContingencySystem {
 public:
  ContingencySystem(const SystemMatrices& m, const Contingency& c);

  Vector theta(std::span<const double> injections_mw) const;
  Vector ptdf_row(int monitored) const;
  const std::vector<bool>& isolated() const { return isolated_; }

 private:
  const SystemMatrices* m_;
  Contingency c_;
  std::vector<bool> isolated_;
  std::vector<int> index_;
  SparseFactor lu_;
};

enum class FlowMethod { imml, refactorize };

struct ContingencyFlowResult {
  int outaged_branch = -1;
  Vector flows_mw;
  Vector angles;
  Vector overload_short;
  Vector overload_long;
  double max_overload_ratio_short = 0.0;
  double max_overload_ratio_long = 0.0;
};

/// A branch counts as overloaded when |F| > limit * (1 + tolerance).
inline constexpr double kOverloadTolerance = 1e-6;

ContingencyFlowResult contingency_flows(const SystemMatrices& m, const Contingency& c,
                                        std::span<const double> injections_mw, FlowMethod method = FlowMethod::imml,
                                        const BaseCase* base = nullptr);

/// Per-branch MW flows for angles of the post-contingency state; the outaged
/// branch carries zero.
Vector contingency_branch_flows(const SystemMatrices& m, int outaged_branch, std::span<const double> theta);

/// Base injections with the isolated buses removed and the lost net
/// injection taken up at the reference bus.
Vector surviving_injections(const SystemMatrices& m, const Contingency& c, std::span<const double> injections_mw);

struct RankedContingency {
  Contingency contingency;
  double max_overload_ratio_short = 0.0;
};

struct ScreenOptions {
  FlowMethod method = FlowMethod::imml;
  int threads = 1;
};

/// Screens every contingency at the given base injections and sorts by
/// descending short-term overload ratio (compared to 1e-9), ties by branch id.
std::vector<RankedContingency> screen_and_rank(const Network& network, const SystemMatrices& m,
                                               std::span<const double> injections_mw,
                                               const ScreenOptions& options = {});

}  // namespace pcscopf
