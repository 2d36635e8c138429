#include <algorithm>
#include <cmath>
#include <map>
#include <tuple>
#include <numeric>
#include <sstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "pcscopf/rng.hpp"
#include "pcscopf/scopf.hpp"
#include "pcscopf/synthetic.hpp"

using namespace pcscopf;

namespace {

double rel_gap(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

/// Congested but N-1 secure random grid; every variant is feasible on it.
Network small_grid(std::uint64_t seed = 1) {
  return random_grid({.core_buses = 30, .chords = 15, .leaf_buses = 3, .radial_pairs = 1, .generators = 6,
                      .limit_factor_min = 1.0, .seed = seed});
}

/// Triangle plus a 5 MW leaf hanging off bus 2 (branch 3 isolates it).
Network triangle_with_leaf() {
  return fixtures::make_network(4, {{0, 1, 0.5, 100}, {1, 2, 0.5, 100}, {0, 2, 0.5, 100}, {2, 3, 0.2, 50}},
                                {{0, 150, 10}, {1, 100, 20}}, {{1, 60}, {2, 90}, {3, 5}});
}

ScopfConfig config_for(Variant v, double gamma = 0.02) {
  ScopfConfig c;
  c.variant = v;
  c.gamma_fraction = gamma;
  return c;
}

int branch_between(const Network& net, int ext_a, int ext_b) {
  for (const auto& br : net.branches) {
    const int f = net.buses[br.from_bus].external_id, t = net.buses[br.to_bus].external_id;
    if ((f == ext_a && t == ext_b) || (f == ext_b && t == ext_a)) return br.id;
  }
  return -1;
}

/// Stacks every generator segment in cost order until the load is covered.
double merit_order_cost(const Network& net) {
  std::vector<CostSegment> segs;
  for (const auto& g : net.generators) segs.insert(segs.end(), g.segments.begin(), g.segments.end());
  std::stable_sort(segs.begin(), segs.end(), [](const auto& a, const auto& b) {
    return a.marginal_cost_per_mwh < b.marginal_cost_per_mwh;
  });
  double remaining = net.total_demand_mw(), cost = 0.0;
  for (const auto& s : segs) {
    const double take = std::min(remaining, s.capacity_mw);
    cost += take * s.marginal_cost_per_mwh;
    remaining -= take;
  }
  return cost;
}

}  // namespace

TEST_SUITE("scopf") {
  TEST_CASE("variant names parse both spellings") {
    CHECK(parse_variant("C-SCOPF") == Variant::c_scopf);
    CHECK(parse_variant("p_scopf") == Variant::p_scopf);
    CHECK(parse_variant("scopf") == Variant::scopf);
    CHECK_THROWS(parse_variant("n-2"));
    ScopfConfig bad;
    bad.gamma_fraction = 0.0;
    CHECK_THROWS(bad.validate());
    bad.gamma_fraction = 1.5;
    CHECK_THROWS(bad.validate());
  }

  TEST_CASE("main problem on one generator and one load") {
    const Network net = fixtures::two_bus();
    ScopfModel model = build_main_problem(net, {});
    CHECK(model.lp().variable_count() == 2);
    CHECK(model.lp().constraint_count() == 1);
    const LpSolution sol = solve_lp(model.lp());
    REQUIRE(sol.status == LpStatus::optimal);
    const ScopfSolution s = extract_solution(model, sol);
    CHECK(s.dispatch_mw[0] == doctest::Approx(100.0));
    CHECK(s.pre_shed_mw[0] == 0.0);
    CHECK(s.objective == doctest::Approx(1000.0));
  }

  TEST_CASE("capacity shortfall is shed at VOLL") {
    Network net = fixtures::make_network(2, {{0, 1, 0.1, 200}}, {{0, 80, 10}}, {{1, 100}});
    ScopfModel model = build_main_problem(net, {});
    const LpSolution sol = solve_lp(model.lp());
    REQUIRE(sol.status == LpStatus::optimal);
    const ScopfSolution s = extract_solution(model, sol);
    CHECK(s.pre_shed_mw[0] == doctest::Approx(20.0));
    CHECK(s.objective == doctest::Approx(80 * 10.0 + 20 * 10000.0));
    CHECK(s.costs.base_cens == doctest::Approx(200000.0));
  }

  TEST_CASE("RTS-24 economic dispatch equals merit-order stacking") {
    const Network net = fixtures::rts24();
    ScopfModel model = build_main_problem(net, {});
    const LpSolution sol = solve_lp(model.lp());
    REQUIRE(sol.status == LpStatus::optimal);
    CHECK(rel_gap(sol.objective, merit_order_cost(net)) < 1e-9);
  }

  TEST_CASE("base-state cuts remove overloads and are idempotent") {
    Network net = fixtures::triangle();
    // Unconstrained flows are 70, 10 and 80 MW; branch 2 gets a 60 MW rating.
    net.branches[2].limit_normal_mw = 60.0;
    SystemMatrices m(net);
    ScopfModel model = build_main_problem(net, config_for(Variant::scopf));
    LpSolution sol = solve_lp(model.lp());
    CHECK(add_pre_contingency_cuts(model, m, sol) == 1);
    CHECK(model.has_cut(-1, Stage::pre, 2));

    // The reference bus carries no coefficient in the cut.
    const auto& cut = model.lp().constraint(model.lp().constraint_count() - 1);
    for (const Term& t : cut.terms)
      for (VarId v : model.segments()[0]) CHECK(t.var.index != v.index);

    CHECK_FALSE(model.add_flow_cut(-1, Stage::pre, 2, ptdf_row(m, 2), 60.0));
    sol = solve_lp(model.lp());
    REQUIRE(sol.status == LpStatus::optimal);
    const Vector flows = base_flows(m, solve_angles(m, model.base_injections(sol)));
    CHECK(std::abs(flows[2]) <= 60.0 + 1e-6);
    CHECK(add_pre_contingency_cuts(model, m, sol) == 0);
  }

  TEST_CASE("uncongested network needs no cuts") {
    const Network net = fixtures::two_bus();
    SystemMatrices m(net);
    ScopfModel model = build_main_problem(net, {});
    CHECK(add_pre_contingency_cuts(model, m, solve_lp(model.lp())) == 0);
  }

  TEST_CASE("stage blocks are idempotent and reject the base state") {
    const Network net = triangle_with_leaf();
    ScopfModel model = build_main_problem(net, config_for(Variant::c_scopf, 0.05));
    const int before = model.lp().variable_count();
    const auto [blk, created] = model.add_block(1, Stage::long_term);
    CHECK(created);
    CHECK(blk->up.size() == 2);
    CHECK(model.lp().variable_count() == before + 2 * 2 + 3);
    CHECK_FALSE(model.add_block(1, Stage::long_term).second);
    CHECK(model.lp().variable_count() == before + 7);
    CHECK_THROWS_AS(model.add_block(1, Stage::pre), std::invalid_argument);
    CHECK_THROWS_AS(model.add_block(99, Stage::long_term), std::invalid_argument);
  }

  TEST_CASE("uncongested contingency leaves its block idle") {
    const Network net = triangle_with_leaf();
    ScopfModel model = build_main_problem(net, config_for(Variant::c_scopf, 0.05));
    const StageBlock& blk = add_contingency_stage(model, 1, Stage::short_term);
    const LpSolution sol = solve_lp(model.lp());
    REQUIRE(sol.status == LpStatus::optimal);
    for (VarId v : blk.up) CHECK(sol.primal[v.index] == 0.0);
    for (VarId v : blk.down) CHECK(sol.primal[v.index] == 0.0);
    for (VarId v : blk.shed) CHECK(sol.primal[v.index] == 0.0);
  }

  TEST_CASE("island contingency forces the isolated load off") {
    const Network net = triangle_with_leaf();
    for (Variant v : {Variant::p_scopf, Variant::c_scopf}) {
      const ScopfConfig cfg = config_for(v, 0.05);
      const ScopfSolution s = solve_scopf(net, cfg);
      REQUIRE(s.status == ScopfStatus::optimal);
      for (Stage st : {Stage::short_term, Stage::long_term}) {
        const StageAction* a = s.action(3, st);
        REQUIRE(a != nullptr);
        CHECK(a->shed_mw[2] + s.pre_shed_mw[2] == doctest::Approx(5.0));
        CHECK(a->shed_mw[0] == doctest::Approx(0.0));
        // The surviving network rebalances by backing generation off.
        const double delta = a->delta_mw(0) + a->delta_mw(1);
        CHECK(delta == doctest::Approx(-5.0));
      }
      SystemMatrices m(net);
      CHECK(verify_solution(net, m, s, cfg).passed);
    }
  }

  TEST_CASE("pre-iteration adds island blocks and ranks every contingency") {
    const Network net = small_grid();
    SystemMatrices m(net);
    ScopfModel model = build_main_problem(net, config_for(Variant::c_scopf));
    const LpSolution initial = solve_lp(model.lp());
    const auto result = pre_iteration(model, m, initial);
    int islands = 0;
    for (const auto& c : model.contingencies()) islands += c.is_island();
    CHECK(islands > 0);
    CHECK(result.island_blocks == 2 * islands);
    CHECK(result.screened == net.branch_count());
    CHECK(result.solution.status == LpStatus::optimal);
  }

  TEST_CASE("pre-iteration on a connected uncongested grid only re-solves") {
    const Network net = fixtures::parallel_pair();
    SystemMatrices m(net);
    ScopfModel model = build_main_problem(net, config_for(Variant::c_scopf));
    const LpSolution initial = solve_lp(model.lp());
    const int rows = model.lp().constraint_count();
    const auto result = pre_iteration(model, m, initial);
    CHECK(result.island_blocks == 0);
    CHECK(model.lp().constraint_count() == rows);
    for (const auto& r : result.ranking) CHECK(r.max_overload_ratio_short <= 1.0);
    CHECK(result.solution.objective == doctest::Approx(initial.objective));
  }

  TEST_CASE("island load above the cap is diagnosed by contingency") {
    const Network net = fixtures::rts24();
    const int k = branch_between(net, 7, 8);
    REQUIRE(k >= 0);
    const ScopfSolution s = solve_scopf(net, config_for(Variant::c_scopf, 0.02));
    CHECK(s.status == ScopfStatus::infeasible);
    REQUIRE(s.diagnosis.has_value());
    CHECK(s.diagnosis->message.find("islanded load exceeds") != std::string::npos);
    CHECK(std::find(s.diagnosis->contingencies.begin(), s.diagnosis->contingencies.end(), k) !=
          s.diagnosis->contingencies.end());
    const ScopfSolution mono = solve_monolithic(net, config_for(Variant::c_scopf, 0.02));
    CHECK(mono.status == ScopfStatus::infeasible);
  }

  TEST_CASE("SCOPF variant is dispatch with base cuts only") {
    const Network net = small_grid();
    const ScopfSolution s = solve_scopf(net, config_for(Variant::scopf));
    REQUIRE(s.status == ScopfStatus::optimal);
    CHECK(s.actions.empty());
    CHECK(s.stats.post_cuts == 0);
    CHECK(s.times.pre_iteration == 0.0);
    const ScopfSolution mono = solve_monolithic(net, config_for(Variant::scopf));
    CHECK(rel_gap(s.objective, mono.objective) <= 1e-6);
    // Monolithic SCOPF: main problem plus one row per branch.
    CHECK(mono.stats.constraints == 1 + net.branch_count());
  }

  TEST_CASE("iterative objective equals the monolithic oracle") {
    struct Case {
      Network net;
      double gamma;
    };
    const Case cases[] = {{fixtures::rts24(), 0.05}, {small_grid(1), 0.02}, {small_grid(2), 0.02}};
    for (const auto& c : cases)
      for (Variant v : {Variant::scopf, Variant::p_scopf, Variant::c_scopf}) {
        CAPTURE(to_string(v));
        const ScopfConfig cfg = config_for(v, c.gamma);
        const ScopfSolution it = solve_scopf(c.net, cfg);
        const ScopfSolution mono = solve_monolithic(c.net, cfg);
        REQUIRE(it.status == ScopfStatus::optimal);
        REQUIRE(mono.status == ScopfStatus::optimal);
        CHECK(rel_gap(it.objective, mono.objective) <= 1e-6);
      }
  }

  TEST_CASE("objective trajectory never decreases") {
    for (Variant v : {Variant::p_scopf, Variant::c_scopf}) {
      const ScopfSolution s = solve_scopf(small_grid(3), config_for(v));
      REQUIRE(s.status == ScopfStatus::optimal);
      const auto traj = s.objective_trajectory();
      REQUIRE(traj.size() >= 2);
      for (std::size_t i = 1; i < traj.size(); ++i) CHECK(traj[i] >= traj[i - 1] - 1e-9 * std::abs(traj[i - 1]));
      CHECK(traj.back() == s.objective);
    }
  }

  TEST_CASE("lazy model stays smaller than the monolithic one") {
    const Network net = small_grid();
    const ScopfSolution it = solve_scopf(net, config_for(Variant::c_scopf));
    const ScopfSolution mono = solve_monolithic(net, config_for(Variant::c_scopf));
    CHECK(it.stats.variables < mono.stats.variables);
    CHECK(it.stats.constraints < mono.stats.constraints);
    for (Variant v : {Variant::scopf, Variant::p_scopf}) {
      const ScopfSolution a = solve_scopf(net, config_for(v));
      const ScopfSolution b = solve_monolithic(net, config_for(v));
      CHECK(a.stats.variables <= b.stats.variables);
      CHECK(a.stats.constraints < b.stats.constraints);
    }
  }

  TEST_CASE("corrective freedom orders the variant costs") {
    struct Case {
      Network net;
      double gamma;
    };
    const Case cases[] = {{fixtures::rts24(), 0.05}, {small_grid(4), 0.02}, {small_grid(5), 0.02}};
    for (const auto& c : cases) {
      const double s = solve_scopf(c.net, config_for(Variant::scopf, c.gamma)).objective;
      const ScopfSolution cs = solve_scopf(c.net, config_for(Variant::c_scopf, c.gamma));
      const ScopfSolution ps = solve_scopf(c.net, config_for(Variant::p_scopf, c.gamma));
      REQUIRE(cs.status == ScopfStatus::optimal);
      REQUIRE(ps.status == ScopfStatus::optimal);
      CHECK(s <= cs.objective * (1 + 1e-9));
      CHECK(cs.objective <= ps.objective * (1 + 1e-9));
    }
  }

  TEST_CASE("verified solutions respect the shedding cap in every state") {
    const Network net = small_grid(6);
    const ScopfConfig cfg = config_for(Variant::c_scopf);
    const ScopfSolution s = solve_scopf(net, cfg);
    REQUIRE(s.status == ScopfStatus::optimal);
    SystemMatrices m(net);
    const VerificationReport rep = verify_solution(net, m, s, cfg);
    CHECK(rep.passed);
    CHECK(rep.max_flow_violation <= 1e-6);
    CHECK(rep.max_gamma_violation <= 1e-6);
    const double cap = cfg.gamma_fraction * net.total_demand_mw();
    const double u0 = std::accumulate(s.pre_shed_mw.begin(), s.pre_shed_mw.end(), 0.0);
    for (const auto& a : s.actions)
      CHECK(u0 + std::accumulate(a.shed_mw.begin(), a.shed_mw.end(), 0.0) <= cap + 1e-6 * net.total_demand_mw());
    CHECK(rep.states_checked == 1 + 2 * net.branch_count());
  }

  TEST_CASE("corrupted dispatch is reported") {
    const Network net = small_grid();
    const ScopfConfig cfg = config_for(Variant::c_scopf);
    ScopfSolution s = solve_scopf(net, cfg);
    REQUIRE(s.status == ScopfStatus::optimal);
    const double cap = net.generators[0].capacity_mw();
    s.dispatch_mw[0] = cap + 50.0;
    SystemMatrices m(net);
    const VerificationReport rep = verify_solution(net, m, s, cfg);
    CHECK_FALSE(rep.passed);
    auto has = [&](const std::string& kind, int k, int element) {
      return std::any_of(rep.issues.begin(), rep.issues.end(), [&](const VerificationIssue& i) {
        return i.kind == kind && i.contingency == k && i.element == element;
      });
    };
    CHECK(has("bound", -1, 0));
    CHECK(has("balance", -1, -1));
  }

  TEST_CASE("worst loading matches a dense brute force") {
    const Network net = small_grid(2);
    const ScopfConfig cfg = config_for(Variant::c_scopf);
    const ScopfSolution s = solve_scopf(net, cfg);
    REQUIRE(s.status == ScopfStatus::optimal);
    SystemMatrices m(net);
    const VerificationReport rep = verify_solution(net, m, s, cfg);

    double worst = 0.0;
    std::map<std::tuple<int, Stage, int>, double> loading;
    auto scan = [&](int k, Stage st, const StageAction* a, const std::vector<int>& iso) {
      std::vector<double> p(net.bus_count(), 0.0);
      auto isolated = [&](int b) { return std::find(iso.begin(), iso.end(), b) != iso.end(); };
      for (const auto& g : net.generators)
        if (!isolated(g.bus)) p[g.bus] += s.dispatch_mw[g.id] + (a ? a->delta_mw(g.id) : 0.0);
      for (const auto& d : net.demands)
        if (!isolated(d.bus)) p[d.bus] -= d.p_demand_mw - s.pre_shed_mw[d.id] - (a ? a->shed_mw[d.id] : 0.0);
      const auto theta = fixtures::dense_theta(net, k, p, iso);
      for (const auto& br : net.branches) {
        if (br.id == k) continue;
        const double f = std::abs((theta[br.from_bus] - theta[br.to_bus]) / br.reactance_pu * net.base_mva);
        const double limit = st == Stage::pre ? br.limit_normal_mw
                             : st == Stage::short_term ? br.limit_short_mw
                                                       : br.limit_long_mw;
        loading[{k, st, br.id}] = f / limit;
        worst = std::max(worst, f / limit);
      }
    };
    scan(-1, Stage::pre, nullptr, {});
    for (const auto& br : net.branches) {
      const auto iso = fixtures::brute_force_isolated(net, br.id);
      for (Stage st : {Stage::short_term, Stage::long_term}) scan(br.id, st, s.action(br.id, st), iso);
    }
    CHECK(rep.worst_loading == doctest::Approx(worst).epsilon(1e-9));
    // Binding cuts can tie at exactly the limit; the reported state must attain the maximum.
    const auto it = loading.find({rep.worst_contingency, rep.worst_stage, rep.worst_branch});
    REQUIRE(it != loading.end());
    CHECK(it->second == doctest::Approx(worst).epsilon(1e-9));
  }

  TEST_CASE("cuts hold at every sampled monolithic-feasible point") {
    const Network net = fixtures::rts24();
    const ScopfConfig cfg = config_for(Variant::c_scopf, 0.05);
    SystemMatrices m(net);

    // Every state, every monitored branch, with the Method III rows of the lazy loop.
    ScopfModel lazy = build_main_problem(net, cfg);
    for (const auto& br : net.branches) lazy.add_flow_cut(-1, Stage::pre, br.id, ptdf_row(m, br.id), br.limit_normal_mw);
    for (const auto& c : lazy.contingencies())
      for (Stage st : {Stage::short_term, Stage::long_term}) {
        lazy.add_block(c.outaged_branch, st);
        for (const auto& br : net.branches) {
          if (br.id == c.outaged_branch) continue;
          const double limit = st == Stage::short_term ? br.limit_short_mw : br.limit_long_mw;
          lazy.add_flow_cut(c.outaged_branch, st, br.id, method3_ptdf_row(m, c, br.id), limit);
        }
      }

    ScopfModel mono = build_monolithic(net, cfg);
    Rng rng(17);
    for (int sample = 0; sample < 5; ++sample) {
      for (int j = 0; j < mono.lp().variable_count(); ++j)
        mono.lp().set_cost(VarId{j, mono.lp().serial()}, rng.uniform(-1.0, 1.0));
      mono.lp().clear_basis();
      const LpSolution point = solve_lp(mono.lp());
      REQUIRE(point.status == LpStatus::optimal);
      std::map<std::string, double> value;
      for (int j = 0; j < mono.lp().variable_count(); ++j) value[mono.lp().variable(j).name] = point.primal[j];

      int checked = 0;
      for (int r = 0; r < lazy.lp().constraint_count(); ++r) {
        const RowKind kind = lazy.row_tags()[r].kind;
        if (kind != RowKind::pre_cut && kind != RowKind::stage_cut) continue;
        const auto& row = lazy.lp().constraint(r);
        double activity = 0.0;
        for (const Term& t : row.terms) activity += t.coef * value.at(lazy.lp().variable(t.var.index).name);
        const double slack = 1e-6 * std::max(1.0, std::abs(row.upper));
        CHECK(activity >= row.lower - slack);
        CHECK(activity <= row.upper + slack);
        ++checked;
      }
      CHECK(checked > 2000);
    }
  }

  TEST_CASE("monolithic variable count follows the block formula") {
    const Network net = fixtures::rts24();
    const ScopfConfig cfg = config_for(Variant::c_scopf, 0.05);
    const ScopfModel model = build_monolithic(net, cfg);
    int base = net.demands.size();
    for (const auto& g : net.generators) base += g.segments.size();
    int expected = base;
    for (const auto& c : contingency_list(net)) {
      int movable = 0;
      for (const auto& g : net.generators)
        movable += !std::binary_search(c.island_info.isolated_buses.begin(), c.island_info.isolated_buses.end(), g.bus);
      expected += 2 * (2 * movable + static_cast<int>(net.demands.size()));
    }
    CHECK(model.lp().variable_count() == expected);
    CHECK(model.blocks().size() == 2 * 38);
  }

  TEST_CASE("monolithic model refuses large systems") {
    const Network big = random_grid({.core_buses = 300, .chords = 100, .leaf_buses = 0, .generators = 20, .seed = 9});
    CHECK_THROWS_AS(build_monolithic(big, {}), ModelTooLarge);
    ScopfConfig tight;
    tight.monolithic_bus_limit = 20;
    CHECK_THROWS_WITH_AS(build_monolithic(fixtures::rts24(), tight), doctest::Contains("24 buses"), ModelTooLarge);
  }

  TEST_CASE("cost breakdown adds up to the objective") {
    for (Variant v : {Variant::p_scopf, Variant::c_scopf}) {
      const ScopfSolution s = solve_scopf(small_grid(7), config_for(v));
      REQUIRE(s.status == ScopfStatus::optimal);
      const auto& c = s.costs;
      const double parts = c.base_generation_cost + c.base_cens + c.expected_redispatch_cost + c.expected_cens_short +
                           c.expected_cens_long;
      CHECK(rel_gap(c.eoc_total, parts) <= 1e-12);
      CHECK(rel_gap(c.eoc_total, s.objective) <= 1e-6);
    }
  }

  TEST_CASE("single-threaded solves serialize identically") {
    const Network net = small_grid(8);
    const ScopfConfig cfg = config_for(Variant::c_scopf);
    std::ostringstream a, b;
    write_solution_json(solve_scopf(net, cfg), a);
    write_solution_json(solve_scopf(net, cfg), b);
    CHECK(a.str() == b.str());
    CHECK(a.str().find("timings_s") == std::string::npos);
  }

  TEST_CASE("solution JSON reads back and re-verifies") {
    const Network net = small_grid(3);
    const ScopfConfig cfg = config_for(Variant::c_scopf);
    const ScopfSolution s = solve_scopf(net, cfg);
    REQUIRE(s.status == ScopfStatus::optimal);
    const auto text = to_json(s).dump();
    const ScopfSolution back = solution_from_json(nlohmann::json::parse(text));
    CHECK(back.dispatch_mw == s.dispatch_mw);
    CHECK(back.objective == s.objective);
    CHECK(back.actions.size() == s.actions.size());
    CHECK(to_json(back).at("actions") == to_json(s).at("actions"));
    const SystemMatrices m(net);
    CHECK(verify_solution(net, m, back, cfg).passed);

    auto broken = nlohmann::json::parse(text);
    broken["format"] = "something-else";
    CHECK_THROWS_AS(solution_from_json(broken), std::invalid_argument);
    broken = nlohmann::json::parse(text);
    broken.erase("dispatch_mw");
    CHECK_THROWS_AS(solution_from_json(broken), std::invalid_argument);
  }

  TEST_CASE("screening threads do not change the solution") {
    const Network net = small_grid(9);
    ScopfConfig cfg = config_for(Variant::c_scopf);
    const ScopfSolution one = solve_scopf(net, cfg);
    cfg.threads = 4;
    cfg.column_cache_capacity = 8;
    const ScopfSolution four = solve_scopf(net, cfg);
    CHECK(to_json(one).dump() == to_json(four).dump());
  }

  TEST_CASE("phase times account for the total") {
    const ScopfSolution s = solve_scopf(small_grid(), config_for(Variant::c_scopf));
    const auto& t = s.times;
    CHECK(t.total > 0.0);
    CHECK(t.attributed() <= t.total * (1 + 1e-9));
    CHECK(t.unattributed() <= 0.02 * t.total + 1e-4);
  }

  TEST_CASE("iteration cap yields a flagged partial solution") {
    ScopfConfig cfg = config_for(Variant::c_scopf);
    cfg.max_iterations = 1;
    const ScopfSolution s = solve_scopf(small_grid(), cfg);
    if (s.status == ScopfStatus::not_converged) {
      REQUIRE(s.diagnosis.has_value());
      CHECK(s.diagnosis->message.find("iteration limit") != std::string::npos);
    } else {
      CHECK(s.stats.iterations == 1);
    }
  }
}
