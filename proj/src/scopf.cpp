#include "pcscopf/scopf.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <numeric>
#include <ostream>
#include <sstream>

namespace pcscopf {

namespace {

constexpr double kCoefficientFloor = 1e-12;
constexpr double kPtdfBound = 1.0 + 1e-9;

std::string stage_tag(Stage s) {
  switch (s) {
    case Stage::pre: return "pre";
    case Stage::short_term: return "st";
    case Stage::long_term: return "lt";
  }
  return "?";
}

std::string cat_name(const char* prefix, int k, Stage s, int element) {
  std::string out = prefix;
  if (k >= 0) out += "_k" + std::to_string(k) + "_" + stage_tag(s);
  if (element >= 0) out += "_" + std::to_string(element);
  return out;
}

double ramp_of(const Generator& g, Stage s) { return s == Stage::short_term ? g.ramp_short_mw : g.ramp_long_mw; }

double limit_of(const Branch& br, Variant v, Stage s) {
  if (s == Stage::pre) return br.limit_normal_mw;
  if (v == Variant::c_scopf && s == Stage::short_term) return br.limit_short_mw;
  return br.limit_long_mw;
}

/// Accumulates wall time into whichever phase is active.
class PhaseClock {
 public:
  using clock = std::chrono::steady_clock;

  double* enter(double* bucket) {
    const auto now = clock::now();
    if (bucket_) *bucket_ += std::chrono::duration<double>(now - last_).count();
    last_ = now;
    double* previous = bucket_;
    bucket_ = bucket;
    return previous;
  }

 private:
  clock::time_point last_ = clock::now();
  double* bucket_ = nullptr;
};

class ScopedPhase {
 public:
  ScopedPhase(PhaseClock& clock, double* bucket) : clock_(clock), previous_(clock.enter(bucket)) {}
  ~ScopedPhase() { clock_.enter(previous_); }
  ScopedPhase(const ScopedPhase&) = delete;
  ScopedPhase& operator=(const ScopedPhase&) = delete;

 private:
  PhaseClock& clock_;
  double* previous_;
};

struct LpInfeasible {
  LpSolution solution;
};

Diagnosis diagnose(const ScopfModel& model, const LpSolution& sol) {
  Diagnosis d;
  std::set<int> ks;
  for (int r : sol.infeasible_rows) {
    d.rows.push_back(model.lp().constraint(r).name);
    const RowTag& tag = model.row_tags()[r];
    if (tag.contingency >= 0) ks.insert(tag.contingency);
  }
  d.contingencies.assign(ks.begin(), ks.end());

  std::ostringstream os;
  os << "model is infeasible";
  // Island shedding that alone exceeds the cap is the common cause; name it.
  std::vector<int> forced;
  for (const auto& c : model.contingencies()) {
    if (!c.is_island() || !model.config().considers(c)) continue;
    double load = 0.0;
    for (const auto& dem : model.network().demands)
      if (std::binary_search(c.island_info.isolated_buses.begin(), c.island_info.isolated_buses.end(), dem.bus))
        load += dem.p_demand_mw;
    if (load > model.gamma_mw() * (1.0 + 1e-12)) forced.push_back(c.outaged_branch);
  }
  if (!forced.empty()) {
    os << "; islanded load exceeds the shedding cap of " << model.gamma_mw() << " MW for contingencies";
    for (int k : forced) os << ' ' << k;
    for (int k : forced)
      if (!ks.count(k)) d.contingencies.push_back(k);
    std::sort(d.contingencies.begin(), d.contingencies.end());
  } else if (!d.contingencies.empty()) {
    os << "; certificate involves contingencies";
    for (int k : d.contingencies) os << ' ' << k;
  }
  d.message = os.str();
  return d;
}

}  // namespace

const char* to_string(Variant v) {
  switch (v) {
    case Variant::scopf: return "scopf";
    case Variant::p_scopf: return "p-scopf";
    case Variant::c_scopf: return "c-scopf";
  }
  return "?";
}

const char* to_string(Stage s) {
  switch (s) {
    case Stage::pre: return "pre";
    case Stage::short_term: return "short";
    case Stage::long_term: return "long";
  }
  return "?";
}

const char* to_string(ScopfStatus s) {
  switch (s) {
    case ScopfStatus::optimal: return "optimal";
    case ScopfStatus::infeasible: return "infeasible";
    case ScopfStatus::not_converged: return "not_converged";
  }
  return "?";
}

Variant parse_variant(const std::string& text) {
  std::string t;
  for (char c : text) t += c == '_' ? '-' : static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (t == "scopf") return Variant::scopf;
  if (t == "p-scopf" || t == "pscopf") return Variant::p_scopf;
  if (t == "c-scopf" || t == "cscopf") return Variant::c_scopf;
  throw std::invalid_argument("unknown variant '" + text + "' (expected scopf, p-scopf or c-scopf)");
}

void ScopfConfig::validate() const {
  if (!(gamma_fraction > 0.0 && gamma_fraction <= 1.0))
    throw std::invalid_argument("gamma_fraction must lie in (0, 1]");
  if (!(overload_tolerance >= 0.0)) throw std::invalid_argument("overload_tolerance must be nonnegative");
  if (max_iterations < 1) throw std::invalid_argument("max_iterations must be at least 1");
  if (cuts_per_contingency_per_iteration < 0)
    throw std::invalid_argument("cuts_per_contingency_per_iteration must be nonnegative");
  if (threads < 1) throw std::invalid_argument("threads must be at least 1");
}

std::vector<Stage> post_contingency_stages(Variant v, bool island) {
  switch (v) {
    case Variant::scopf: return {};
    case Variant::p_scopf:
      if (island) return {Stage::short_term, Stage::long_term};
      return {Stage::long_term};
    case Variant::c_scopf: return {Stage::short_term, Stage::long_term};
  }
  return {};
}

// ---------------------------------------------------------------------------
// Model

ScopfModel::ScopfModel(const Network& network, const ScopfConfig& config)
    : network_(&network), config_(config), total_load_(network.total_demand_mw()),
      contingencies_(contingency_list(network)) {
  config_.validate();
  const auto& gens = network.generators;
  segments_.resize(gens.size());
  std::vector<Term> balance;
  for (const auto& g : gens) {
    for (std::size_t s = 0; s < g.segments.size(); ++s) {
      const auto& seg = g.segments[s];
      const VarId v = lp_.add_variable({"p_g" + std::to_string(g.id) + "_" + std::to_string(s), 0.0,
                                        seg.capacity_mw, seg.marginal_cost_per_mwh});
      segments_[g.id].push_back(v);
      balance.push_back({v, 1.0});
    }
  }
  for (const auto& d : network.demands) {
    const VarId v = lp_.add_variable({"u0_d" + std::to_string(d.id), 0.0, d.p_demand_mw, d.voll_per_mwh});
    pre_shed_.push_back(v);
    balance.push_back({v, 1.0});
  }
  add_row(ConstraintSpec::eq(std::move(balance), total_load_, "balance"), {RowKind::balance});
}

RowId ScopfModel::add_row(ConstraintSpec spec, RowTag tag) {
  const RowId r = lp_.add_constraint(std::move(spec));
  tags_.push_back(tag);
  return r;
}

const Contingency& ScopfModel::contingency(int branch) const {
  if (branch < 0 || branch >= static_cast<int>(contingencies_.size()))
    throw std::invalid_argument("unknown contingency " + std::to_string(branch));
  return contingencies_[branch];
}

double ScopfModel::weight(int k) const {
  return config_.probability_weighting ? contingency(k).probability : 1.0;
}

const StageBlock* ScopfModel::block(int k, Stage s) const {
  auto it = blocks_.find({k, s});
  return it == blocks_.end() ? nullptr : &it->second;
}

std::vector<bool> ScopfModel::isolated_mask(int k) const {
  std::vector<bool> mask(network_->bus_count(), false);
  if (k >= 0)
    for (int b : contingency(k).island_info.isolated_buses) mask[b] = true;
  return mask;
}

std::pair<const StageBlock*, bool> ScopfModel::add_block(int k, Stage s) {
  if (s == Stage::pre) throw std::invalid_argument("the base state has no corrective block");
  const Contingency& c = contingency(k);
  if (c.island_info.kind == IslandKind::multi_split)
    throw UnsupportedContingency("contingency " + std::to_string(k) + " splits the grid into several parts");
  if (auto it = blocks_.find({k, s}); it != blocks_.end()) return {&it->second, false};

  const Network& net = *network_;
  const auto iso = isolated_mask(k);
  const double w = weight(k);
  StageBlock blk;
  blk.contingency = k;
  blk.stage = s;
  blk.up.assign(net.generators.size(), VarId{});
  blk.down.assign(net.generators.size(), VarId{});
  blk.shed.assign(net.demands.size(), VarId{});

  std::vector<Term> balance;
  double surviving_load = 0.0;
  for (const auto& g : net.generators) {
    if (iso[g.bus]) continue;
    const double ramp = ramp_of(g, s);
    const std::string suffix = cat_name("", k, s, g.id);
    blk.up[g.id] = lp_.add_variable({"up" + suffix, 0.0, ramp, w * g.redispatch_cost_per_mwh});
    blk.down[g.id] = lp_.add_variable({"dn" + suffix, 0.0, ramp, w * g.redispatch_cost_per_mwh});
    std::vector<Term> link;
    for (VarId v : segments_[g.id]) {
      link.push_back({v, 1.0});
      balance.push_back({v, 1.0});
    }
    link.push_back({blk.up[g.id], 1.0});
    link.push_back({blk.down[g.id], -1.0});
    balance.push_back({blk.up[g.id], 1.0});
    balance.push_back({blk.down[g.id], -1.0});
    add_row(ConstraintSpec::range(std::move(link), 0.0, g.capacity_mw(), cat_name("link", k, s, g.id)),
            {RowKind::stage_link, k, s, g.id});
  }

  std::vector<Term> gamma;
  for (const auto& d : net.demands) {
    blk.shed[d.id] = lp_.add_variable({cat_name("shed", k, s, d.id), 0.0, d.p_demand_mw, w * d.voll_per_mwh});
    std::vector<Term> unserved{{pre_shed_[d.id], 1.0}, {blk.shed[d.id], 1.0}};
    gamma.insert(gamma.end(), unserved.begin(), unserved.end());
    if (iso[d.bus]) {
      // The island loses all of its load.
      add_row(ConstraintSpec::eq(std::move(unserved), d.p_demand_mw, cat_name("island", k, s, d.id)),
              {RowKind::stage_demand, k, s, d.id});
    } else {
      surviving_load += d.p_demand_mw;
      balance.insert(balance.end(), unserved.begin(), unserved.end());
      add_row(ConstraintSpec::le(std::move(unserved), d.p_demand_mw, cat_name("served", k, s, d.id)),
              {RowKind::stage_demand, k, s, d.id});
    }
  }
  blk.balance = add_row(ConstraintSpec::eq(std::move(balance), surviving_load, cat_name("balance", k, s, -1)),
                        {RowKind::stage_balance, k, s, -1});
  blk.gamma = add_row(ConstraintSpec::le(std::move(gamma), gamma_mw(), cat_name("gamma", k, s, -1)),
                      {RowKind::stage_gamma, k, s, -1});
  auto [it, inserted] = blocks_.emplace(std::make_pair(k, s), std::move(blk));
  return {&it->second, inserted};
}

std::pair<std::vector<Term>, double> ScopfModel::weighted_injection(int k, Stage s,
                                                                    std::span<const double> weights) const {
  const Network& net = *network_;
  const auto iso = isolated_mask(k);
  const StageBlock* blk = k >= 0 ? block(k, s) : nullptr;
  std::vector<Term> terms;
  double constant = 0.0;
  for (const auto& g : net.generators) {
    const double a = weights[g.bus];
    if (iso[g.bus] || a == 0.0) continue;
    for (VarId v : segments_[g.id]) terms.push_back({v, a});
    if (blk) {
      terms.push_back({blk->up[g.id], a});
      terms.push_back({blk->down[g.id], -a});
    }
  }
  for (const auto& d : net.demands) {
    const double a = weights[d.bus];
    if (iso[d.bus] || a == 0.0) continue;
    constant -= a * d.p_demand_mw;
    terms.push_back({pre_shed_[d.id], a});
    if (blk) terms.push_back({blk->shed[d.id], a});
  }
  return {std::move(terms), constant};
}

bool ScopfModel::has_cut(int k, Stage s, int monitored) const { return cuts_.count({k, s, monitored}) > 0; }

bool ScopfModel::add_flow_cut(int k, Stage s, int monitored, std::span<const double> ptdf_row, double limit_mw) {
  if (k >= 0 && monitored == k) throw std::invalid_argument("cannot cut the outaged branch");
  if (has_cut(k, s, monitored)) return false;
  Vector row(ptdf_row.begin(), ptdf_row.end());
  bool any = false;
  for (double& v : row) {
    if (!(std::abs(v) <= kPtdfBound))
      throw std::logic_error("PTDF entry " + std::to_string(v) + " outside [-1, 1] on branch " +
                             std::to_string(monitored));
    if (std::abs(v) < kCoefficientFloor) v = 0.0;
    any = any || v != 0.0;
  }
  if (!any) return false;  // the branch cannot carry flow in this state
  auto [terms, constant] = weighted_injection(k, s, row);
  const Stage stage = k >= 0 ? s : Stage::pre;
  add_row(ConstraintSpec::range(std::move(terms), -limit_mw - constant, limit_mw - constant,
                                cat_name("cut", k, stage, monitored)),
          {k >= 0 ? RowKind::stage_cut : RowKind::pre_cut, k, stage, monitored});
  cuts_.insert({k, s, monitored});
  if (k < 0) ++pre_cuts_;
  return true;
}

bool ScopfModel::add_gamma_base_row() {
  if (gamma_base_) return false;
  std::vector<Term> terms;
  for (VarId v : pre_shed_) terms.push_back({v, 1.0});
  gamma_base_ = add_row(ConstraintSpec::le(std::move(terms), gamma_mw(), "gamma_base"), {RowKind::gamma_base});
  return true;
}

Vector ScopfModel::base_injections(const LpSolution& s) const { return state_injections(s, -1, Stage::pre); }

Vector ScopfModel::state_injections(const LpSolution& sol, int k, Stage s) const {
  const Network& net = *network_;
  const auto iso = isolated_mask(k);
  const StageBlock* blk = k >= 0 ? block(k, s) : nullptr;
  Vector p(net.bus_count(), 0.0);
  for (const auto& g : net.generators) {
    if (iso[g.bus]) continue;
    double out = 0.0;
    for (VarId v : segments_[g.id]) out += sol.primal[v.index];
    if (blk) out += sol.primal[blk->up[g.id].index] - sol.primal[blk->down[g.id].index];
    p[g.bus] += out;
  }
  for (const auto& d : net.demands) {
    if (iso[d.bus]) continue;
    double served = d.p_demand_mw - sol.primal[pre_shed_[d.id].index];
    if (blk) served -= sol.primal[blk->shed[d.id].index];
    p[d.bus] -= served;
  }
  return p;
}

// ---------------------------------------------------------------------------
// Building blocks of the algorithm

ScopfModel build_main_problem(const Network& network, const ScopfConfig& config) {
  return ScopfModel(network, config);
}

namespace {

std::vector<int> overloaded_branches(const Network& net, const Vector& flows, int outaged, Variant v, Stage s,
                                     double tol) {
  std::vector<std::pair<double, int>> over;
  for (const auto& br : net.branches) {
    if (br.id == outaged) continue;
    const double limit = limit_of(br, v, s);
    const double f = std::abs(flows[br.id]);
    if (f > limit * (1.0 + tol)) over.push_back({f / limit, br.id});
  }
  std::sort(over.begin(), over.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::vector<int> out;
  for (const auto& o : over) out.push_back(o.second);
  return out;
}

}  // namespace

int add_pre_contingency_cuts(ScopfModel& model, const SystemMatrices& m, const LpSolution& solution) {
  const Network& net = model.network();
  const Vector p = model.base_injections(solution);
  const Vector flows = base_flows(m, solve_angles(m, p));
  int added = 0;
  for (int l : overloaded_branches(net, flows, -1, model.config().variant, Stage::pre,
                                   model.config().overload_tolerance))
    added += model.add_flow_cut(-1, Stage::pre, l, ptdf_row(m, l), net.branches[l].limit_normal_mw);
  return added;
}

const StageBlock& add_contingency_stage(ScopfModel& model, int k, Stage s) { return *model.add_block(k, s).first; }

PreIterationResult pre_iteration(ScopfModel& model, const SystemMatrices& m, const LpSolution& current) {
  PreIterationResult r;
  const Variant v = model.config().variant;
  for (const auto& c : model.contingencies()) {
    if (!c.is_island() || !model.config().considers(c)) continue;
    for (Stage s : post_contingency_stages(v, true)) r.island_blocks += model.add_block(c.outaged_branch, s).second;
  }
  r.ranking = screen_and_rank(model.network(), m, model.base_injections(current),
                              {FlowMethod::imml, model.config().threads});
  r.screened = static_cast<int>(r.ranking.size());
  r.solution = solve_lp(model.lp(), model.config().lp);
  return r;
}

// ---------------------------------------------------------------------------
// Solutions

const StageAction* ScopfSolution::action(int k, Stage s) const {
  auto it = std::lower_bound(actions.begin(), actions.end(), std::make_pair(k, s),
                             [](const StageAction& a, const std::pair<int, Stage>& key) {
                               return std::make_pair(a.contingency, a.stage) < key;
                             });
  if (it == actions.end() || it->contingency != k || it->stage != s) return nullptr;
  return &*it;
}

std::vector<double> ScopfSolution::objective_trajectory() const {
  std::vector<double> out;
  for (const auto& r : log) out.push_back(r.objective);
  return out;
}

ScopfSolution extract_solution(const ScopfModel& model, const LpSolution& lp) {
  const Network& net = model.network();
  ScopfSolution sol;
  sol.variant = model.config().variant;
  sol.objective = lp.objective;
  const auto value = [&](VarId v) { return v.index >= 0 ? lp.primal[v.index] : 0.0; };

  CostBreakdown& c = sol.costs;
  sol.segment_mw.resize(net.generators.size());
  sol.dispatch_mw.assign(net.generators.size(), 0.0);
  for (const auto& g : net.generators) {
    for (std::size_t s = 0; s < g.segments.size(); ++s) {
      const double x = value(model.segments()[g.id][s]);
      sol.segment_mw[g.id].push_back(x);
      sol.dispatch_mw[g.id] += x;
      c.base_generation_cost += g.segments[s].marginal_cost_per_mwh * x;
    }
  }
  for (const auto& d : net.demands) {
    sol.pre_shed_mw.push_back(value(model.pre_shed()[d.id]));
    c.base_cens += d.voll_per_mwh * sol.pre_shed_mw.back();
  }
  for (const auto& [key, blk] : model.blocks()) {
    StageAction a;
    a.contingency = key.first;
    a.stage = key.second;
    const double w = model.weight(key.first);
    const double pi = model.contingency(key.first).probability;
    for (const auto& g : net.generators) {
      a.up_mw.push_back(value(blk.up[g.id]));
      a.down_mw.push_back(value(blk.down[g.id]));
      c.expected_redispatch_cost += w * g.redispatch_cost_per_mwh * (a.up_mw.back() + a.down_mw.back());
    }
    double cens = 0.0, ens = 0.0;
    for (const auto& d : net.demands) {
      a.shed_mw.push_back(value(blk.shed[d.id]));
      cens += d.voll_per_mwh * a.shed_mw.back();
      ens += a.shed_mw.back();
    }
    if (a.stage == Stage::short_term) {
      c.expected_cens_short += w * cens;
      c.expected_ens_short += pi * ens;
    } else {
      c.expected_cens_long += w * cens;
      c.expected_ens_long += pi * ens;
    }
    sol.actions.push_back(std::move(a));
  }
  c.eoc_total = c.base_generation_cost + c.base_cens + c.expected_redispatch_cost + c.expected_cens_short +
                c.expected_cens_long;

  sol.stats.variables = model.lp().variable_count();
  sol.stats.constraints = model.lp().constraint_count();
  sol.stats.pre_cuts = static_cast<int>(model.pre_cut_count());
  sol.stats.post_cuts = static_cast<int>(model.cut_count() - model.pre_cut_count());
  sol.stats.blocks = static_cast<int>(model.blocks().size());
  return sol;
}

namespace {

ScopfSolution failed_solution(const ScopfModel& model, ScopfStatus status, Diagnosis diagnosis) {
  ScopfSolution sol;
  sol.status = status;
  sol.variant = model.config().variant;
  sol.diagnosis = std::move(diagnosis);
  sol.stats.variables = model.lp().variable_count();
  sol.stats.constraints = model.lp().constraint_count();
  sol.stats.pre_cuts = static_cast<int>(model.pre_cut_count());
  sol.stats.post_cuts = static_cast<int>(model.cut_count() - model.pre_cut_count());
  sol.stats.blocks = static_cast<int>(model.blocks().size());
  return sol;
}

}  // namespace

// ---------------------------------------------------------------------------
// Cutting-plane loop

ScopfSolution solve_scopf(const Network& network, const ScopfConfig& config) {
  config.validate();
  require_valid(network);

  PhaseTimes times;
  PhaseClock clock;
  const auto started = PhaseClock::clock::now();
  clock.enter(&times.initialize_pre_contingency);

  SystemMatrices m(network, config.column_cache_capacity);
  ScopfModel model = build_main_problem(network, config);
  const Variant variant = config.variant;
  const double tol = config.overload_tolerance;

  std::vector<IterationRecord> log;
  ModelStats stats;
  LpSolution sol;

  auto solve = [&](const char* phase, int iteration, int cuts, int blocks) {
    ScopedPhase scope(clock, &times.lp_solve);
    sol = solve_lp(model.lp(), config.lp);
    ++stats.lp_solves;
    if (sol.status != LpStatus::optimal) throw LpInfeasible{sol};
    log.push_back({phase, iteration, cuts, blocks, sol.objective, sol.iterations});
  };

  auto finish = [&](ScopfSolution out) {
    clock.enter(nullptr);
    times.total = std::chrono::duration<double>(PhaseClock::clock::now() - started).count();
    out.log = log;
    out.times = times;
    stats.variables = out.stats.variables;
    stats.constraints = out.stats.constraints;
    stats.pre_cuts = out.stats.pre_cuts;
    stats.post_cuts = out.stats.post_cuts;
    stats.blocks = out.stats.blocks;
    out.stats = stats;
    return out;
  };

  try {
    solve("initial", 0, 0, 0);

    std::vector<Contingency> order;
    if (variant != Variant::scopf) {
      clock.enter(&times.pre_iteration);
      // Same steps as pre_iteration(), with the re-solve booked to the LP phase.
      int island_blocks = 0;
      for (const auto& c : model.contingencies()) {
        if (!c.is_island() || !config.considers(c)) continue;
        for (Stage s : post_contingency_stages(variant, true))
          island_blocks += model.add_block(c.outaged_branch, s).second;
      }
      const auto ranking =
          screen_and_rank(network, m, model.base_injections(sol), {FlowMethod::imml, config.threads});
      stats.screened_contingencies += static_cast<int>(ranking.size());
      for (const auto& r : ranking)
        if (r.contingency.island_info.kind != IslandKind::multi_split && config.considers(r.contingency))
          order.push_back(r.contingency);
      solve("pre_iteration", 0, 0, island_blocks);
    }

    bool converged = false;
    for (int it = 1; it <= config.max_iterations && !converged; ++it) {
      stats.iterations = it;
      int pass_cuts = 0, pass_blocks = 0;

      // Base state.
      {
        clock.enter(&times.contingency_power_flow);
        const Vector p0 = model.base_injections(sol);
        const Vector flows = base_flows(m, solve_angles(m, p0));
        const auto over = overloaded_branches(network, flows, -1, variant, Stage::pre, tol);
        clock.enter(&times.cut_management);
        int cuts = 0;
        for (int l : over) cuts += model.add_flow_cut(-1, Stage::pre, l, ptdf_row(m, l), network.branches[l].limit_normal_mw);
        int gamma_rows = 0;
        if (variant != Variant::scopf) {
          const double pre_shed =
              std::accumulate(model.pre_shed().begin(), model.pre_shed().end(), 0.0,
                              [&](double acc, VarId v) { return acc + sol.primal[v.index]; });
          if (pre_shed > model.gamma_mw() + tol * model.total_load_mw()) gamma_rows += model.add_gamma_base_row();
        }
        if (cuts + gamma_rows > 0) {
          pass_cuts += cuts + gamma_rows;
          solve("main", it, cuts + gamma_rows, 0);
        }
      }

      clock.enter(&times.contingency_power_flow);
      std::optional<BaseCase> base;
      for (const Contingency& c : order) {
        const int k = c.outaged_branch;
        if (!base) {
          ScopedPhase scope(clock, &times.contingency_power_flow);
          base = BaseCase::from_injections(m, model.base_injections(sol));
        }
        int cuts = 0, blocks = 0;
        for (Stage s : post_contingency_stages(variant, c.is_island())) {
          clock.enter(&times.contingency_power_flow);
          const Vector pk = model.state_injections(sol, k, s);
          const Vector theta = method1_theta(m, c, pk, &*base);
          const Vector flows = contingency_branch_flows(m, k, theta);
          std::vector<int> over = overloaded_branches(network, flows, k, variant, s, tol);
          if (over.empty()) continue;

          clock.enter(&times.cut_management);
          if (variant == Variant::c_scopf) blocks += model.add_block(k, s).second;
          if (config.cuts_per_contingency_per_iteration > 0 &&
              static_cast<int>(over.size()) > config.cuts_per_contingency_per_iteration)
            over.resize(config.cuts_per_contingency_per_iteration);
          for (int l : over)
            cuts += model.add_flow_cut(k, s, l, method3_ptdf_row(m, c, l), limit_of(network.branches[l], variant, s));
        }
        if (cuts + blocks > 0) {
          pass_cuts += cuts;
          pass_blocks += blocks;
          solve("main", it, cuts, blocks);
          base.reset();
        }
      }
      converged = pass_cuts == 0 && pass_blocks == 0;
    }

    clock.enter(&times.cut_management);
    ScopfSolution out = extract_solution(model, sol);
    if (!converged) {
      out.status = ScopfStatus::not_converged;
      out.diagnosis = Diagnosis{"iteration limit of " + std::to_string(config.max_iterations) + " passes reached",
                                {}, {}};
    }
    return finish(std::move(out));
  } catch (const LpInfeasible& e) {
    return finish(failed_solution(model, ScopfStatus::infeasible, diagnose(model, e.solution)));
  } catch (const IterationLimitExceeded& e) {
    return finish(failed_solution(
        model, ScopfStatus::not_converged,
        {"LP iteration limit exceeded after " + std::to_string(e.iterations()) + " iterations", {}, {}}));
  }
}

// ---------------------------------------------------------------------------
// Monolithic oracle

ScopfModel build_monolithic(const Network& network, const ScopfConfig& config) {
  config.validate();
  if (network.bus_count() > config.monolithic_bus_limit)
    throw ModelTooLarge("monolithic model refused: " + std::to_string(network.bus_count()) +
                        " buses exceeds the limit of " + std::to_string(config.monolithic_bus_limit));
  require_valid(network);
  SystemMatrices m(network);
  ScopfModel model(network, config);

  const ContingencySystem intact(m, Contingency{});
  for (const auto& br : network.branches)
    model.add_flow_cut(-1, Stage::pre, br.id, intact.ptdf_row(br.id), br.limit_normal_mw);

  const Variant v = config.variant;
  if (v == Variant::scopf) return model;
  bool blockless = false;
  for (const auto& c : model.contingencies()) {
    if (!config.considers(c)) continue;
    if (c.island_info.kind == IslandKind::multi_split)
      throw UnsupportedContingency("contingency " + std::to_string(c.outaged_branch) + " splits the grid");
    const ContingencySystem sys(m, c);
    for (Stage s : post_contingency_stages(v, c.is_island())) {
      if (v == Variant::c_scopf || c.is_island())
        model.add_block(c.outaged_branch, s);
      else
        blockless = true;
      for (const auto& br : network.branches) {
        if (br.id == c.outaged_branch) continue;
        model.add_flow_cut(c.outaged_branch, s, br.id, sys.ptdf_row(br.id), limit_of(br, v, s));
      }
    }
  }
  if (blockless) model.add_gamma_base_row();
  return model;
}

ScopfSolution solve_monolithic(const Network& network, const ScopfConfig& config) {
  const auto started = std::chrono::steady_clock::now();
  ScopfModel model = build_monolithic(network, config);
  ScopfSolution out;
  try {
    const LpSolution lp = solve_lp(model.lp(), config.lp);
    if (lp.status != LpStatus::optimal) {
      out = failed_solution(model, ScopfStatus::infeasible, diagnose(model, lp));
    } else {
      out = extract_solution(model, lp);
      out.log.push_back({"monolithic", 0, static_cast<int>(model.cut_count()),
                         static_cast<int>(model.blocks().size()), lp.objective, lp.iterations});
    }
  } catch (const IterationLimitExceeded& e) {
    out = failed_solution(model, ScopfStatus::not_converged,
                          {"LP iteration limit exceeded after " + std::to_string(e.iterations()) + " iterations",
                           {}, {}});
  }
  out.stats.lp_solves = 1;
  out.times.lp_solve = out.times.total =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return out;
}

// ---------------------------------------------------------------------------
// Verification by enumeration

namespace {

struct Checker {
  const Network& net;
  const ScopfConfig& config;
  VerificationReport& report;
  double load;

  void issue(const char* kind, int k, Stage s, int element, double excess, double scale) {
    if (!(excess > 0.0)) return;
    const double rel = excess / std::max(scale, 1e-12);
    double* slot = nullptr;
    const std::string kd = kind;
    if (kd == "flow") slot = &report.max_flow_violation;
    else if (kd == "bound" || kd == "island_shed") slot = &report.max_bound_violation;
    else if (kd == "ramp") slot = &report.max_ramp_violation;
    else if (kd == "balance") slot = &report.max_balance_violation;
    else slot = &report.max_gamma_violation;
    *slot = std::max(*slot, rel);
    if (rel > config.overload_tolerance) {
      report.issues.push_back({kind, k, s, element, excess, rel});
      report.passed = false;
    }
  }

  void check_flows(const ContingencySystem& sys, int k, Stage s, Vector p, const SystemMatrices& m) {
    // Put any residual imbalance on the reference so the solve is defined;
    // the imbalance itself is reported separately.
    const double residual = std::accumulate(p.begin(), p.end(), 0.0);
    p[m.reference_bus()] -= residual;
    const Vector flows = contingency_branch_flows(m, k, sys.theta(p));
    for (const auto& br : net.branches) {
      if (br.id == k) continue;
      const double limit = limit_of(br, config.variant, s);
      const double f = std::abs(flows[br.id]);
      issue("flow", k, s, br.id, f - limit, limit);
      const double loading = f / limit;
      if (loading > report.worst_loading) {
        report.worst_loading = loading;
        report.worst_contingency = k;
        report.worst_stage = s;
        report.worst_branch = br.id;
      }
    }
    ++report.states_checked;
  }
};

}  // namespace

VerificationReport verify_solution(const Network& network, const SystemMatrices& m, const ScopfSolution& solution,
                                   const ScopfConfig& config) {
  VerificationReport report;
  const double load = network.total_demand_mw();
  Checker chk{network, config, report, load};
  const double gamma = config.gamma_fraction * load;
  const auto& gens = network.generators;
  const auto& dems = network.demands;
  if (solution.dispatch_mw.size() != gens.size() || solution.pre_shed_mw.size() != dems.size()) {
    report.passed = false;
    report.issues.push_back({"bound", -1, Stage::pre, -1, 0.0, 0.0});
    return report;
  }

  // Base state.
  Vector p0(network.bus_count(), 0.0);
  for (const auto& g : gens) {
    double sum = 0.0;
    for (std::size_t s = 0; s < g.segments.size() && s < solution.segment_mw[g.id].size(); ++s) {
      const double x = solution.segment_mw[g.id][s];
      chk.issue("bound", -1, Stage::pre, g.id, -x, std::max(1.0, g.segments[s].capacity_mw));
      chk.issue("bound", -1, Stage::pre, g.id, x - g.segments[s].capacity_mw,
                std::max(1.0, g.segments[s].capacity_mw));
      sum += x;
    }
    const double p = solution.dispatch_mw[g.id];
    chk.issue("bound", -1, Stage::pre, g.id, std::abs(sum - p), std::max(1.0, g.capacity_mw()));
    chk.issue("bound", -1, Stage::pre, g.id, -p, std::max(1.0, g.capacity_mw()));
    chk.issue("bound", -1, Stage::pre, g.id, p - g.capacity_mw(), std::max(1.0, g.capacity_mw()));
    p0[g.bus] += p;
  }
  for (const auto& d : dems) {
    const double u = solution.pre_shed_mw[d.id];
    chk.issue("bound", -1, Stage::pre, d.id, -u, std::max(1.0, d.p_demand_mw));
    chk.issue("bound", -1, Stage::pre, d.id, u - d.p_demand_mw, std::max(1.0, d.p_demand_mw));
    p0[d.bus] -= d.p_demand_mw - u;
  }
  chk.issue("balance", -1, Stage::pre, -1, std::abs(std::accumulate(p0.begin(), p0.end(), 0.0)), load);
  chk.check_flows(ContingencySystem(m, Contingency{}), -1, Stage::pre, p0, m);

  if (config.variant == Variant::scopf) return report;

  for (const auto& c : contingency_list(network)) {
    if (c.island_info.kind == IslandKind::multi_split || !config.considers(c)) continue;
    const int k = c.outaged_branch;
    std::vector<bool> iso(network.bus_count(), false);
    for (int b : c.island_info.isolated_buses) iso[b] = true;
    const ContingencySystem sys(m, c);
    for (Stage s : post_contingency_stages(config.variant, c.is_island())) {
      const StageAction* a = solution.action(k, s);
      // Preventive-only states may not move anything unless islanding forces it.
      const bool corrective = config.variant == Variant::c_scopf || c.is_island();
      Vector p(network.bus_count(), 0.0);
      double unserved = 0.0;
      for (const auto& g : gens) {
        if (iso[g.bus]) continue;
        const double up = a ? a->up_mw[g.id] : 0.0;
        const double dn = a ? a->down_mw[g.id] : 0.0;
        const double ramp = corrective ? ramp_of(g, s) : 0.0;
        const double scale = std::max(1.0, g.capacity_mw());
        chk.issue("bound", k, s, g.id, -up, scale);
        chk.issue("bound", k, s, g.id, -dn, scale);
        chk.issue("ramp", k, s, g.id, std::abs(up - dn) - ramp, scale);
        const double out = solution.dispatch_mw[g.id] + up - dn;
        chk.issue("bound", k, s, g.id, -out, scale);
        chk.issue("bound", k, s, g.id, out - g.capacity_mw(), scale);
        p[g.bus] += out;
      }
      for (const auto& d : dems) {
        const double shed = a ? a->shed_mw[d.id] : 0.0;
        const double u = solution.pre_shed_mw[d.id] + shed;
        const double scale = std::max(1.0, d.p_demand_mw);
        chk.issue("bound", k, s, d.id, -shed, scale);
        if (!corrective) chk.issue("bound", k, s, d.id, shed, scale);
        chk.issue("bound", k, s, d.id, u - d.p_demand_mw, scale);
        if (iso[d.bus]) {
          chk.issue("island_shed", k, s, d.id, d.p_demand_mw - u, scale);
          unserved += d.p_demand_mw;
          continue;
        }
        unserved += u;
        p[d.bus] -= d.p_demand_mw - u;
      }
      chk.issue("gamma", k, s, -1, unserved - gamma, load);
      chk.issue("balance", k, s, -1, std::abs(std::accumulate(p.begin(), p.end(), 0.0)), load);
      chk.check_flows(sys, k, s, p, m);
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// JSON

nlohmann::json to_json(const ScopfSolution& s, bool include_timings) {
  using nlohmann::json;
  json j;
  j["format"] = "pcscopf-solution";
  j["version"] = 1;
  j["status"] = to_string(s.status);
  j["variant"] = to_string(s.variant);
  j["objective"] = s.objective;
  j["costs"] = {{"base_generation_cost", s.costs.base_generation_cost},
                {"base_cens", s.costs.base_cens},
                {"expected_redispatch_cost", s.costs.expected_redispatch_cost},
                {"expected_cens_short", s.costs.expected_cens_short},
                {"expected_cens_long", s.costs.expected_cens_long},
                {"eoc_total", s.costs.eoc_total},
                {"expected_ens_short", s.costs.expected_ens_short},
                {"expected_ens_long", s.costs.expected_ens_long}};
  j["dispatch_mw"] = s.dispatch_mw;
  j["segment_mw"] = s.segment_mw;
  j["pre_shed_mw"] = s.pre_shed_mw;
  json actions = json::array();
  for (const auto& a : s.actions) {
    std::vector<double> delta(a.up_mw.size());
    for (std::size_t g = 0; g < delta.size(); ++g) delta[g] = a.delta_mw(static_cast<int>(g));
    actions.push_back({{"contingency", a.contingency},
                       {"stage", to_string(a.stage)},
                       {"delta_mw", delta},
                       {"up_mw", a.up_mw},
                       {"down_mw", a.down_mw},
                       {"shed_mw", a.shed_mw}});
  }
  j["actions"] = std::move(actions);
  json log = json::array();
  for (const auto& r : s.log)
    log.push_back({{"phase", r.phase},
                   {"iteration", r.iteration},
                   {"cuts_added", r.cuts_added},
                   {"blocks_added", r.blocks_added},
                   {"objective", r.objective},
                   {"lp_iterations", r.lp_iterations}});
  j["iterations"] = std::move(log);
  j["stats"] = {{"variables", s.stats.variables},     {"constraints", s.stats.constraints},
                {"pre_cuts", s.stats.pre_cuts},       {"post_cuts", s.stats.post_cuts},
                {"blocks", s.stats.blocks},           {"lp_solves", s.stats.lp_solves},
                {"screened", s.stats.screened_contingencies}, {"passes", s.stats.iterations}};
  if (s.diagnosis)
    j["diagnosis"] = {{"message", s.diagnosis->message},
                      {"contingencies", s.diagnosis->contingencies},
                      {"rows", s.diagnosis->rows}};
  if (include_timings)
    j["timings_s"] = {{"initialize_pre_contingency", s.times.initialize_pre_contingency},
                      {"pre_iteration", s.times.pre_iteration},
                      {"contingency_power_flow", s.times.contingency_power_flow},
                      {"lp_solve", s.times.lp_solve},
                      {"cut_management", s.times.cut_management},
                      {"unattributed", s.times.unattributed()},
                      {"total", s.times.total}};
  return j;
}

nlohmann::json to_json(const VerificationReport& r) {
  using nlohmann::json;
  json issues = json::array();
  for (const auto& i : r.issues)
    issues.push_back({{"kind", i.kind},
                      {"contingency", i.contingency},
                      {"stage", to_string(i.stage)},
                      {"element", i.element},
                      {"excess_mw", i.excess_mw},
                      {"relative", i.relative}});
  return {{"passed", r.passed},
          {"states_checked", r.states_checked},
          {"max_flow_violation", r.max_flow_violation},
          {"max_bound_violation", r.max_bound_violation},
          {"max_ramp_violation", r.max_ramp_violation},
          {"max_balance_violation", r.max_balance_violation},
          {"max_gamma_violation", r.max_gamma_violation},
          {"worst_loading", r.worst_loading},
          {"worst_contingency", r.worst_contingency},
          {"worst_stage", to_string(r.worst_stage)},
          {"worst_branch", r.worst_branch},
          {"issues", std::move(issues)}};
}

void write_solution_json(const ScopfSolution& solution, std::ostream& out, bool include_timings) {
  out << to_json(solution, include_timings).dump(2) << '\n';
}

ScopfSolution solution_from_json(const nlohmann::json& j) {
  try {
    if (j.value("format", std::string()) != "pcscopf-solution")
      throw std::invalid_argument("not a solution document (format field missing or wrong)");
    if (j.at("version").get<int>() != 1)
      throw std::invalid_argument("unsupported solution version " + j.at("version").dump());
    ScopfSolution s;
    const std::string status = j.at("status").get<std::string>();
    if (status == "optimal")
      s.status = ScopfStatus::optimal;
    else if (status == "infeasible")
      s.status = ScopfStatus::infeasible;
    else if (status == "not_converged")
      s.status = ScopfStatus::not_converged;
    else
      throw std::invalid_argument("unknown status '" + status + "'");
    s.variant = parse_variant(j.at("variant").get<std::string>());
    s.objective = j.at("objective").get<double>();
    const auto& c = j.at("costs");
    s.costs.base_generation_cost = c.at("base_generation_cost").get<double>();
    s.costs.base_cens = c.at("base_cens").get<double>();
    s.costs.expected_redispatch_cost = c.at("expected_redispatch_cost").get<double>();
    s.costs.expected_cens_short = c.at("expected_cens_short").get<double>();
    s.costs.expected_cens_long = c.at("expected_cens_long").get<double>();
    s.costs.eoc_total = c.at("eoc_total").get<double>();
    s.costs.expected_ens_short = c.at("expected_ens_short").get<double>();
    s.costs.expected_ens_long = c.at("expected_ens_long").get<double>();
    s.dispatch_mw = j.at("dispatch_mw").get<std::vector<double>>();
    s.segment_mw = j.at("segment_mw").get<std::vector<std::vector<double>>>();
    s.pre_shed_mw = j.at("pre_shed_mw").get<std::vector<double>>();
    for (const auto& a : j.at("actions")) {
      StageAction act;
      act.contingency = a.at("contingency").get<int>();
      const std::string stage = a.at("stage").get<std::string>();
      if (stage == "short")
        act.stage = Stage::short_term;
      else if (stage == "long")
        act.stage = Stage::long_term;
      else
        throw std::invalid_argument("unknown action stage '" + stage + "'");
      act.up_mw = a.at("up_mw").get<std::vector<double>>();
      act.down_mw = a.at("down_mw").get<std::vector<double>>();
      act.shed_mw = a.at("shed_mw").get<std::vector<double>>();
      s.actions.push_back(std::move(act));
    }
    if (j.contains("diagnosis")) {
      const auto& d = j.at("diagnosis");
      s.diagnosis = Diagnosis{d.at("message").get<std::string>(), d.at("contingencies").get<std::vector<int>>(),
                              d.at("rows").get<std::vector<std::string>>()};
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("malformed solution document: ") + e.what());
  }
}

}  // namespace pcscopf
