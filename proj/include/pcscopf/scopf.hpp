#pragma once

#include <chrono>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"

#include "pcscopf/contingency.hpp"
#include "pcscopf/linalg.hpp"
#include "pcscopf/lp.hpp"
#include "pcscopf/network.hpp"

namespace pcscopf {

enum class Variant { scopf, p_scopf, c_scopf };

/// Operating states of a contingency. `pre` is the intact base state.
enum class Stage { pre, short_term, long_term };

const char* to_string(Variant v);
const char* to_string(Stage s);
/// Accepts "scopf", "p-scopf", "c-scopf" (case-insensitive, '_' or '-').
Variant parse_variant(const std::string& text);

struct ScopfConfig {
  Variant variant = Variant::c_scopf;
  /// Cap on unserved load in each post-contingency state, as a fraction of
  /// total system load.
  double gamma_fraction = 0.02;
  /// Relative overload tolerance for cut generation and verification.
  double overload_tolerance = 1e-6;
  /// Full passes over the ranked contingency list.
  int max_iterations = 200;
  /// 0 means every overloaded branch of a contingency gets a cut per pass.
  int cuts_per_contingency_per_iteration = 0;
  /// Weight corrective costs by the contingency probability.
  bool probability_weighting = true;
  /// Screening threads; the main loop itself is sequential.
  int threads = 1;
  /// Inverse-column cache capacity, 0 for unlimited.
  std::size_t column_cache_capacity = 0;
  /// Size guard for the monolithic formulation.
  int monolithic_bus_limit = 200;
  /// false drops every system-splitting contingency from the study.
  bool include_islanding = true;
  SolverOptions lp;

  void validate() const;
  bool considers(const Contingency& c) const { return include_islanding || !c.is_island(); }
};

/// Post-contingency states checked for a contingency. Islanding forces
/// rebalancing in both stages whatever the variant; P-SCOPF checks both
/// against long-term limits.
std::vector<Stage> post_contingency_stages(Variant v, bool island = false);

class ModelTooLarge : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class RowKind { balance, gamma_base, pre_cut, stage_balance, stage_gamma, stage_link, stage_demand, stage_cut };

/// What an LP row stands for, used to name infeasibility certificates.
struct RowTag {
  RowKind kind = RowKind::balance;
  int contingency = -1;  // outaged branch id
  Stage stage = Stage::pre;
  int element = -1;  // generator, demand or monitored branch
};

/// Corrective variables and rows of one post-contingency state.
struct StageBlock {
  int contingency = -1;
  Stage stage = Stage::long_term;
  /// Upward and downward redispatch per generator; invalid handles for
  /// generators stranded on isolated buses.
  std::vector<VarId> up;
  std::vector<VarId> down;
  std::vector<VarId> shed;
  RowId balance;
  RowId gamma;
};

/// The growing LP with its variable maps and cut registry.
class ScopfModel {
 public:
  ScopfModel(const Network& network, const ScopfConfig& config);

  const Network& network() const { return *network_; }
  const ScopfConfig& config() const { return config_; }
  LinearProgram& lp() { return lp_; }
  const LinearProgram& lp() const { return lp_; }

  double total_load_mw() const { return total_load_; }
  double gamma_mw() const { return config_.gamma_fraction * total_load_; }
  const std::vector<Contingency>& contingencies() const { return contingencies_; }
  const Contingency& contingency(int branch) const;
  /// Objective weight of corrective costs in contingency `k`.
  double weight(int k) const;

  /// Base-state variables.
  const std::vector<std::vector<VarId>>& segments() const { return segments_; }
  const std::vector<VarId>& pre_shed() const { return pre_shed_; }

  const StageBlock* block(int k, Stage s) const;
  const std::map<std::pair<int, Stage>, StageBlock>& blocks() const { return blocks_; }

  /// Adds the corrective block of (k, s). Idempotent; returns the block and
  /// whether it was created now.
  std::pair<const StageBlock*, bool> add_block(int k, Stage s);

  /// Two-sided flow row `row . P^{k,s}` within +-limit, where P^{k,s} is the
  /// bus injection expression of that state (base state when k < 0 or when
  /// the state has no block). Returns false when the cut already exists.
  bool add_flow_cut(int k, Stage s, int monitored, std::span<const double> ptdf_row, double limit_mw);
  bool has_cut(int k, Stage s, int monitored) const;
  std::size_t cut_count() const { return cuts_.size(); }
  std::size_t pre_cut_count() const { return pre_cuts_; }

  /// sum of pre-contingency shedding <= gamma; implied by every stage
  /// gamma row and used for states without a block.
  bool add_gamma_base_row();
  bool has_gamma_base_row() const { return gamma_base_.has_value(); }

  const std::vector<RowTag>& row_tags() const { return tags_; }

  /// Base-state MW injections per bus for an LP solution.
  Vector base_injections(const LpSolution& s) const;
  /// Injections of state (k, s): isolated buses zero, block actions applied
  /// when the block exists.
  Vector state_injections(const LpSolution& sol, int k, Stage s) const;

 private:
  /// weights . P^{k,s} as LP terms plus a constant (the fixed demand part).
  std::pair<std::vector<Term>, double> weighted_injection(int k, Stage s, std::span<const double> weights) const;
  std::vector<bool> isolated_mask(int k) const;
  RowId add_row(ConstraintSpec spec, RowTag tag);

  const Network* network_;
  ScopfConfig config_;
  LinearProgram lp_;
  double total_load_ = 0.0;
  std::vector<Contingency> contingencies_;
  std::vector<std::vector<VarId>> segments_;
  std::vector<VarId> pre_shed_;
  std::map<std::pair<int, Stage>, StageBlock> blocks_;
  std::set<std::tuple<int, Stage, int>> cuts_;
  std::size_t pre_cuts_ = 0;
  std::optional<RowId> gamma_base_;
  std::vector<RowTag> tags_;
};

/// Economic dispatch: segment and pre-shed variables plus the balance row.
ScopfModel build_main_problem(const Network& network, const ScopfConfig& config);

/// Adds base-state cuts for branches overloaded at `solution`. Returns the
/// number of new cuts.
int add_pre_contingency_cuts(ScopfModel& model, const SystemMatrices& m, const LpSolution& solution);

/// Adds the corrective block of contingency `k` (branch id) and stage `s`.
const StageBlock& add_contingency_stage(ScopfModel& model, int k, Stage s);

struct PreIterationResult {
  std::vector<RankedContingency> ranking;
  int island_blocks = 0;
  int screened = 0;
  LpSolution solution;
};

/// Island blocks, Method I screening at the current dispatch, one re-solve.
PreIterationResult pre_iteration(ScopfModel& model, const SystemMatrices& m, const LpSolution& current);

enum class ScopfStatus { optimal, infeasible, not_converged };
const char* to_string(ScopfStatus s);

struct StageAction {
  int contingency = -1;
  Stage stage = Stage::long_term;
  std::vector<double> up_mw;
  std::vector<double> down_mw;
  std::vector<double> shed_mw;

  double delta_mw(int g) const { return up_mw[g] - down_mw[g]; }
};

struct CostBreakdown {
  double base_generation_cost = 0.0;
  /// VOLL cost of pre-contingency shedding.
  double base_cens = 0.0;
  double expected_redispatch_cost = 0.0;
  double expected_cens_short = 0.0;
  double expected_cens_long = 0.0;
  double eoc_total = 0.0;
  /// Probability-weighted shed energy per stage (MWh per hour).
  double expected_ens_short = 0.0;
  double expected_ens_long = 0.0;

  double base_cost() const { return base_generation_cost + base_cens; }
};

struct IterationRecord {
  std::string phase;  // "initial", "pre_iteration", "main"
  int iteration = 0;
  int cuts_added = 0;
  int blocks_added = 0;
  double objective = 0.0;
  long lp_iterations = 0;
};

struct PhaseTimes {
  double initialize_pre_contingency = 0.0;
  double pre_iteration = 0.0;
  double contingency_power_flow = 0.0;
  double lp_solve = 0.0;
  double cut_management = 0.0;
  double total = 0.0;

  double attributed() const {
    return initialize_pre_contingency + pre_iteration + contingency_power_flow + lp_solve + cut_management;
  }
  double unattributed() const { return total - attributed(); }
};

struct Diagnosis {
  std::string message;
  std::vector<int> contingencies;
  std::vector<std::string> rows;
};

struct ModelStats {
  int variables = 0;
  int constraints = 0;
  int pre_cuts = 0;
  int post_cuts = 0;
  int blocks = 0;
  int lp_solves = 0;
  int screened_contingencies = 0;
  int iterations = 0;
};

struct ScopfSolution {
  ScopfStatus status = ScopfStatus::optimal;
  Variant variant = Variant::c_scopf;
  double objective = 0.0;
  std::vector<double> dispatch_mw;
  std::vector<std::vector<double>> segment_mw;
  std::vector<double> pre_shed_mw;
  std::vector<StageAction> actions;  // sorted by (contingency, stage)
  CostBreakdown costs;
  std::vector<IterationRecord> log;
  ModelStats stats;
  PhaseTimes times;
  std::optional<Diagnosis> diagnosis;

  const StageAction* action(int k, Stage s) const;
  std::vector<double> objective_trajectory() const;
};

/// The full cutting-plane algorithm.
ScopfSolution solve_scopf(const Network& network, const ScopfConfig& config = {});

/// Every state with every flow row, PTDF rows from refactorized contingency
/// matrices. Throws ModelTooLarge above `config.monolithic_bus_limit`.
ScopfModel build_monolithic(const Network& network, const ScopfConfig& config = {});
ScopfSolution solve_monolithic(const Network& network, const ScopfConfig& config = {});

/// Reads the solution out of a solved model.
ScopfSolution extract_solution(const ScopfModel& model, const LpSolution& lp);

struct VerificationIssue {
  std::string kind;  // "flow", "bound", "ramp", "balance", "gamma", "island_shed"
  int contingency = -1;
  Stage stage = Stage::pre;
  int element = -1;
  double excess_mw = 0.0;
  /// excess relative to its scale (limit for flows, system load otherwise)
  double relative = 0.0;
};

struct VerificationReport {
  bool passed = true;
  std::vector<VerificationIssue> issues;
  double max_flow_violation = 0.0;
  double max_bound_violation = 0.0;
  double max_ramp_violation = 0.0;
  double max_balance_violation = 0.0;
  double max_gamma_violation = 0.0;
  /// Largest |F|/limit over all checked states.
  double worst_loading = 0.0;
  int worst_contingency = -1;
  Stage worst_stage = Stage::pre;
  int worst_branch = -1;
  int states_checked = 0;
};

/// Recomputes every state with refactorized contingency matrices and checks
/// flows, bounds, ramps, balance, island shedding and the shedding cap.
VerificationReport verify_solution(const Network& network, const SystemMatrices& m, const ScopfSolution& solution,
                                   const ScopfConfig& config);

nlohmann::json to_json(const ScopfSolution& solution, bool include_timings = false);
nlohmann::json to_json(const VerificationReport& report);
void write_solution_json(const ScopfSolution& solution, std::ostream& out, bool include_timings = false);
/// Reads back what to_json wrote: enough to re-verify a dispatch. The log,
/// stats and timings are not restored. Throws std::invalid_argument.
ScopfSolution solution_from_json(const nlohmann::json& document);

}  // namespace pcscopf
