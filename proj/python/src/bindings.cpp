#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <optional>
#include <sstream>
#include <string>

#include "pcscopf/bench.hpp"
#include "pcscopf/case_io.hpp"
#include "pcscopf/contingency.hpp"
#include "pcscopf/linalg.hpp"
#include "pcscopf/network.hpp"
#include "pcscopf/scopf.hpp"
#include "pcscopf/sensitivity.hpp"
#include "pcscopf/synthetic.hpp"

namespace py = pybind11;
using namespace pcscopf;

namespace {

// Long solves run without the GIL so other Python threads keep going.
template <class F>
auto unlocked(F&& f) {
  py::gil_scoped_release release;
  return f();
}

std::string network_to_json(const Network& n) {
  std::ostringstream out;
  write_native_json(n, out);
  return out.str();
}

Network network_from_json(const std::string& text) {
  std::istringstream in(text);
  return parse_native_json(in, "<string>");
}

Network load(const std::filesystem::path& path, std::optional<std::filesystem::path> reliability,
             std::optional<std::filesystem::path> voll) {
  LoadOptions opt;
  opt.reliability_csv = std::move(reliability);
  opt.voll_csv = std::move(voll);
  return load_case(path, opt);
}

VerificationReport verify(const Network& n, const ScopfSolution& s, const ScopfConfig& config) {
  ScopfConfig c = config;
  c.variant = s.variant;
  SystemMatrices m = build_matrices(n);
  return verify_solution(n, m, s, c);
}

std::vector<RankedContingency> screen(const Network& n, const std::vector<double>& generation_mw,
                                      FlowMethod method, int threads) {
  if (static_cast<int>(generation_mw.size()) != static_cast<int>(n.generators.size()))
    throw std::invalid_argument("screen: need one generation value per generator");
  std::vector<double> demand;
  for (const auto& d : n.demands) demand.push_back(d.p_demand_mw);
  SystemMatrices m = build_matrices(n);
  Vector inj = bus_injections_mw(n, generation_mw, demand);
  ScreenOptions opt;
  opt.method = method;
  opt.threads = threads;
  return screen_and_rank(n, m, inj, opt);
}

}  // namespace

PYBIND11_MODULE(_core, mod) {
  mod.doc() = "DC security-constrained optimal power flow engine";

  py::register_exception<CaseParseError>(mod, "CaseParseError", PyExc_ValueError);
  py::register_exception<InvalidNetwork>(mod, "InvalidNetwork", PyExc_ValueError);
  py::register_exception<ModelTooLarge>(mod, "ModelTooLarge", PyExc_RuntimeError);

  py::enum_<Variant>(mod, "Variant")
      .value("SCOPF", Variant::scopf)
      .value("P_SCOPF", Variant::p_scopf)
      .value("C_SCOPF", Variant::c_scopf);
  py::enum_<Stage>(mod, "Stage")
      .value("PRE", Stage::pre)
      .value("SHORT", Stage::short_term)
      .value("LONG", Stage::long_term);
  py::enum_<IslandKind>(mod, "IslandKind")
      .value("CONNECTED", IslandKind::connected)
      .value("RADIAL_ISOLATION", IslandKind::radial_isolation)
      .value("MULTI_SPLIT", IslandKind::multi_split);
  py::enum_<ScopfStatus>(mod, "Status")
      .value("OPTIMAL", ScopfStatus::optimal)
      .value("INFEASIBLE", ScopfStatus::infeasible)
      .value("NOT_CONVERGED", ScopfStatus::not_converged);
  py::enum_<FlowMethod>(mod, "FlowMethod")
      .value("IMML", FlowMethod::imml)
      .value("REFACTORIZE", FlowMethod::refactorize);

  mod.def("parse_variant", &parse_variant, py::arg("text"));

  // Network data. Nested lists are copied across the boundary, so edit an
  // element list by assigning the whole list back.
  py::class_<Bus>(mod, "Bus")
      .def(py::init<>())
      .def_readwrite("id", &Bus::id)
      .def_readwrite("is_reference", &Bus::is_reference)
      .def_readwrite("external_id", &Bus::external_id);
  py::class_<Branch>(mod, "Branch")
      .def(py::init<>())
      .def_readwrite("id", &Branch::id)
      .def_readwrite("from_bus", &Branch::from_bus)
      .def_readwrite("to_bus", &Branch::to_bus)
      .def_readwrite("reactance_pu", &Branch::reactance_pu)
      .def_readwrite("limit_normal_mw", &Branch::limit_normal_mw)
      .def_readwrite("limit_short_mw", &Branch::limit_short_mw)
      .def_readwrite("limit_long_mw", &Branch::limit_long_mw)
      .def_readwrite("outage_probability", &Branch::outage_probability);
  py::class_<CostSegment>(mod, "CostSegment")
      .def(py::init<>())
      .def(py::init([](double cap, double cost) { return CostSegment{cap, cost}; }), py::arg("capacity_mw"),
           py::arg("marginal_cost_per_mwh"))
      .def_readwrite("capacity_mw", &CostSegment::capacity_mw)
      .def_readwrite("marginal_cost_per_mwh", &CostSegment::marginal_cost_per_mwh);
  py::class_<Generator>(mod, "Generator")
      .def(py::init<>())
      .def_readwrite("id", &Generator::id)
      .def_readwrite("bus", &Generator::bus)
      .def_readwrite("segments", &Generator::segments)
      .def_readwrite("ramp_short_mw", &Generator::ramp_short_mw)
      .def_readwrite("ramp_long_mw", &Generator::ramp_long_mw)
      .def_readwrite("redispatch_cost_per_mwh", &Generator::redispatch_cost_per_mwh)
      .def_property_readonly("capacity_mw", &Generator::capacity_mw);
  py::class_<Demand>(mod, "Demand")
      .def(py::init<>())
      .def_readwrite("id", &Demand::id)
      .def_readwrite("bus", &Demand::bus)
      .def_readwrite("p_demand_mw", &Demand::p_demand_mw)
      .def_readwrite("voll_per_mwh", &Demand::voll_per_mwh);
  py::class_<Network>(mod, "Network")
      .def(py::init<>())
      .def_readwrite("base_mva", &Network::base_mva)
      .def_readwrite("buses", &Network::buses)
      .def_readwrite("branches", &Network::branches)
      .def_readwrite("generators", &Network::generators)
      .def_readwrite("demands", &Network::demands)
      .def_property_readonly("bus_count", &Network::bus_count)
      .def_property_readonly("branch_count", &Network::branch_count)
      .def_property_readonly("reference_bus", &Network::reference_bus)
      .def_property_readonly("total_demand_mw", &Network::total_demand_mw)
      .def_property_readonly("total_capacity_mw", &Network::total_capacity_mw)
      .def("to_json", &network_to_json)
      .def_static("from_json", &network_from_json, py::arg("text"))
      .def(py::self == py::self)
      .def("__repr__", [](const Network& n) {
        return "<Network buses=" + std::to_string(n.bus_count()) + " branches=" + std::to_string(n.branch_count()) +
               " generators=" + std::to_string(n.generators.size()) + ">";
      });

  py::class_<Violation>(mod, "Violation")
      .def_property_readonly("is_error", [](const Violation& v) { return v.severity == Severity::error; })
      .def_readonly("code", &Violation::code)
      .def_readonly("message", &Violation::message)
      .def_readonly("element", &Violation::element);
  mod.def("validate", &validate, py::arg("network"));

  mod.def("load_case", &load, py::arg("path"), py::arg("reliability_csv") = py::none(),
          py::arg("voll_csv") = py::none(),
          "Read a MATPOWER-subset (.m) or native JSON case. Side files next to the case are picked up "
          "automatically when not given.");

  py::class_<IslandInfo>(mod, "IslandInfo")
      .def_readonly("kind", &IslandInfo::kind)
      .def_readonly("isolated_buses", &IslandInfo::isolated_buses);
  py::class_<Contingency>(mod, "Contingency")
      .def_readonly("outaged_branch", &Contingency::outaged_branch)
      .def_readonly("probability", &Contingency::probability)
      .def_readonly("island_info", &Contingency::island_info)
      .def_property_readonly("is_island", &Contingency::is_island);
  mod.def("contingency_list", &contingency_list, py::arg("network"));
  mod.def("classify_islanding", &classify_islanding, py::arg("network"));

  py::class_<RankedContingency>(mod, "RankedContingency")
      .def_readonly("contingency", &RankedContingency::contingency)
      .def_readonly("max_overload_ratio_short", &RankedContingency::max_overload_ratio_short);
  mod.def("screen", &screen, py::arg("network"), py::arg("generation_mw"), py::arg("method") = FlowMethod::imml,
          py::arg("threads") = 1, "Rank every branch outage by short-term overload at a generator dispatch.");

  py::class_<ReliabilityDefaults>(mod, "ReliabilityDefaults")
      .def(py::init<>())
      .def_readwrite("short_rating_factor", &ReliabilityDefaults::short_rating_factor)
      .def_readwrite("long_rating_factor", &ReliabilityDefaults::long_rating_factor)
      .def_readwrite("outage_probability", &ReliabilityDefaults::outage_probability)
      .def_readwrite("voll_per_mwh", &ReliabilityDefaults::voll_per_mwh);
  py::class_<GridOptions>(mod, "GridOptions")
      .def(py::init<>())
      .def_readwrite("core_buses", &GridOptions::core_buses)
      .def_readwrite("chords", &GridOptions::chords)
      .def_readwrite("leaf_buses", &GridOptions::leaf_buses)
      .def_readwrite("radial_pairs", &GridOptions::radial_pairs)
      .def_readwrite("generators", &GridOptions::generators)
      .def_readwrite("leaf_generators", &GridOptions::leaf_generators)
      .def_readwrite("mean_load_mw", &GridOptions::mean_load_mw)
      .def_readwrite("capacity_margin", &GridOptions::capacity_margin)
      .def_readwrite("limit_factor_min", &GridOptions::limit_factor_min)
      .def_readwrite("limit_factor_max", &GridOptions::limit_factor_max)
      .def_readwrite("seed", &GridOptions::seed)
      .def_readwrite("defaults", &GridOptions::defaults);
  mod.def("random_grid", &random_grid, py::arg("options"));

  py::class_<ScopfConfig>(mod, "ScopfConfig")
      .def(py::init<>())
      .def(py::init([](Variant v, double gamma) {
             ScopfConfig c;
             c.variant = v;
             c.gamma_fraction = gamma;
             return c;
           }),
           py::arg("variant"), py::arg("gamma_fraction") = 0.02)
      .def_readwrite("variant", &ScopfConfig::variant)
      .def_readwrite("gamma_fraction", &ScopfConfig::gamma_fraction)
      .def_readwrite("overload_tolerance", &ScopfConfig::overload_tolerance)
      .def_readwrite("max_iterations", &ScopfConfig::max_iterations)
      .def_readwrite("probability_weighting", &ScopfConfig::probability_weighting)
      .def_readwrite("threads", &ScopfConfig::threads)
      .def_readwrite("monolithic_bus_limit", &ScopfConfig::monolithic_bus_limit)
      .def_readwrite("include_islanding", &ScopfConfig::include_islanding);

  py::class_<CostBreakdown>(mod, "CostBreakdown")
      .def_readonly("base_generation_cost", &CostBreakdown::base_generation_cost)
      .def_readonly("base_cens", &CostBreakdown::base_cens)
      .def_readonly("expected_redispatch_cost", &CostBreakdown::expected_redispatch_cost)
      .def_readonly("expected_cens_short", &CostBreakdown::expected_cens_short)
      .def_readonly("expected_cens_long", &CostBreakdown::expected_cens_long)
      .def_readonly("eoc_total", &CostBreakdown::eoc_total)
      .def_readonly("expected_ens_short", &CostBreakdown::expected_ens_short)
      .def_readonly("expected_ens_long", &CostBreakdown::expected_ens_long)
      .def_property_readonly("base_cost", &CostBreakdown::base_cost);
  py::class_<StageAction>(mod, "StageAction")
      .def_readonly("contingency", &StageAction::contingency)
      .def_readonly("stage", &StageAction::stage)
      .def_readonly("up_mw", &StageAction::up_mw)
      .def_readonly("down_mw", &StageAction::down_mw)
      .def_readonly("shed_mw", &StageAction::shed_mw);
  py::class_<ModelStats>(mod, "ModelStats")
      .def_readonly("variables", &ModelStats::variables)
      .def_readonly("constraints", &ModelStats::constraints)
      .def_readonly("pre_cuts", &ModelStats::pre_cuts)
      .def_readonly("post_cuts", &ModelStats::post_cuts)
      .def_readonly("blocks", &ModelStats::blocks)
      .def_readonly("lp_solves", &ModelStats::lp_solves)
      .def_readonly("iterations", &ModelStats::iterations);
  py::class_<Diagnosis>(mod, "Diagnosis")
      .def_readonly("message", &Diagnosis::message)
      .def_readonly("contingencies", &Diagnosis::contingencies)
      .def_readonly("rows", &Diagnosis::rows);
  py::class_<ScopfSolution>(mod, "ScopfSolution")
      .def_readonly("status", &ScopfSolution::status)
      .def_readonly("variant", &ScopfSolution::variant)
      .def_readonly("objective", &ScopfSolution::objective)
      .def_readonly("dispatch_mw", &ScopfSolution::dispatch_mw)
      .def_readonly("segment_mw", &ScopfSolution::segment_mw)
      .def_readonly("pre_shed_mw", &ScopfSolution::pre_shed_mw)
      .def_readonly("actions", &ScopfSolution::actions)
      .def_readonly("costs", &ScopfSolution::costs)
      .def_readonly("stats", &ScopfSolution::stats)
      .def_readonly("diagnosis", &ScopfSolution::diagnosis)
      .def("objective_trajectory", &ScopfSolution::objective_trajectory)
      .def(
          "to_json", [](const ScopfSolution& s, bool timings) { return to_json(s, timings).dump(); },
          py::arg("include_timings") = false)
      .def_static(
          "from_json", [](const std::string& text) { return solution_from_json(nlohmann::json::parse(text)); },
          py::arg("text"));

  mod.def(
      "solve", [](const Network& n, const ScopfConfig& c) { return unlocked([&] { return solve_scopf(n, c); }); },
      py::arg("network"), py::arg("config") = ScopfConfig{}, "Cutting-plane SCOPF.");
  mod.def(
      "solve_monolithic",
      [](const Network& n, const ScopfConfig& c) { return unlocked([&] { return solve_monolithic(n, c); }); },
      py::arg("network"), py::arg("config") = ScopfConfig{},
      "Every state and every flow row in one LP; small systems only.");

  py::class_<VerificationIssue>(mod, "VerificationIssue")
      .def_readonly("kind", &VerificationIssue::kind)
      .def_readonly("contingency", &VerificationIssue::contingency)
      .def_readonly("stage", &VerificationIssue::stage)
      .def_readonly("element", &VerificationIssue::element)
      .def_readonly("excess_mw", &VerificationIssue::excess_mw)
      .def_readonly("relative", &VerificationIssue::relative);
  py::class_<VerificationReport>(mod, "VerificationReport")
      .def_readonly("passed", &VerificationReport::passed)
      .def_readonly("issues", &VerificationReport::issues)
      .def_readonly("max_flow_violation", &VerificationReport::max_flow_violation)
      .def_readonly("worst_loading", &VerificationReport::worst_loading)
      .def_readonly("states_checked", &VerificationReport::states_checked);
  mod.def(
      "verify",
      [](const Network& n, const ScopfSolution& s, const ScopfConfig& c) {
        return unlocked([&] { return verify(n, s, c); });
      },
      py::arg("network"), py::arg("solution"), py::arg("config") = ScopfConfig{},
      "Re-check a solution state by state with refactorized matrices. The variant comes from the solution.");

  py::class_<MethodTiming>(mod, "MethodTiming")
      .def_readonly("method", &MethodTiming::method)
      .def_readonly("median_ns", &MethodTiming::median_ns)
      .def_readonly("p10_ns", &MethodTiming::p10_ns)
      .def_readonly("p90_ns", &MethodTiming::p90_ns);
  py::class_<BenchReport>(mod, "BenchReport")
      .def_readonly("contingencies", &BenchReport::contingencies)
      .def_readonly("island_contingencies", &BenchReport::island_contingencies)
      .def_readonly("methods", &BenchReport::methods)
      .def_readonly("max_theta_deviation", &BenchReport::max_theta_deviation)
      .def_readonly("max_ptdf_deviation", &BenchReport::max_ptdf_deviation)
      .def_property_readonly("sample_count", [](const BenchReport& r) { return r.samples.size(); });
  mod.def(
      "bench",
      [](const Network& n, int trials, int warmup, std::uint64_t seed) {
        BenchOptions o;
        o.trials = trials;
        o.warmup_trials = warmup;
        o.seed = seed;
        return unlocked([&] { return bench_methods(n, o); });
      },
      py::arg("network"), py::arg("trials") = 10, py::arg("warmup") = 2, py::arg("seed") = 1);

  py::class_<ParameterSample>(mod, "ParameterSample")
      .def_readonly("index", &ParameterSample::index)
      .def_readonly("voll", &ParameterSample::voll)
      .def_readonly("pi", &ParameterSample::pi)
      .def_readonly("gamma", &ParameterSample::gamma)
      .def_readonly("redispatch", &ParameterSample::redispatch)
      .def_readonly("b_short", &ParameterSample::b_short)
      .def_readonly("b_long", &ParameterSample::b_long);
  py::class_<SampleRecord>(mod, "SampleRecord")
      .def_readonly("sample", &SampleRecord::sample)
      .def_readonly("status", &SampleRecord::status)
      .def_readonly("base_cost", &SampleRecord::base_cost)
      .def_readonly("ens_short", &SampleRecord::ens_short)
      .def_readonly("ens_long", &SampleRecord::ens_long)
      .def_readonly("expected_ens_short", &SampleRecord::expected_ens_short)
      .def_readonly("expected_ens_long", &SampleRecord::expected_ens_long)
      .def_readonly("eoc", &SampleRecord::eoc)
      .def_readonly("objective", &SampleRecord::objective)
      .def_property_readonly("converged", &SampleRecord::converged);
  mod.def(
      "sample_and_run",
      [](const Network& n, int count, std::uint64_t seed, double gamma_base, int threads) {
        SensitivityOptions o;
        o.gamma_base_fraction = gamma_base;
        o.threads = threads;
        return unlocked([&] { return sample_and_run(n, count, SensitivityRanges{}, seed, o); });
      },
      py::arg("network"), py::arg("n"), py::arg("seed") = 1, py::arg("gamma_base") = 0.02, py::arg("threads") = 1);

  py::class_<CorrelationMatrix>(mod, "CorrelationMatrix")
      .def_readonly("names", &CorrelationMatrix::names)
      .def_readonly("r", &CorrelationMatrix::r)
      .def_readonly("records_used", &CorrelationMatrix::records_used)
      .def("at", &CorrelationMatrix::at)
      .def("is_degenerate", &CorrelationMatrix::is_degenerate);
  mod.def("correlations", &correlations, py::arg("records"));

  py::class_<SweepPoint>(mod, "SweepPoint")
      .def_readonly("parameter", &SweepPoint::parameter)
      .def_readonly("variant", &SweepPoint::variant)
      .def_readonly("status", &SweepPoint::status)
      .def_readonly("base_cost", &SweepPoint::base_cost)
      .def_readonly("objective", &SweepPoint::objective)
      .def_readonly("diagnosis", &SweepPoint::diagnosis);
  mod.def(
      "voll_sweep",
      [](const Network& n, const std::vector<double>& mults, const std::vector<Variant>& variants,
         const ScopfConfig& c) {
        return unlocked([&] { return voll_sweep(n, mults, variants, c).points; });
      },
      py::arg("network"), py::arg("multipliers"),
      py::arg("variants") = std::vector<Variant>{Variant::scopf, Variant::p_scopf, Variant::c_scopf},
      py::arg("config") = ScopfConfig{});
  mod.def(
      "gamma_sweep",
      [](const Network& n, const std::vector<double>& gammas, const ScopfConfig& c) {
        GammaSweep g = unlocked([&] { return gamma_sweep(n, gammas, c); });
        return py::make_tuple(g.points, g.saturation_gamma);
      },
      py::arg("network"), py::arg("gamma_fractions"), py::arg("config") = ScopfConfig{},
      "Returns (points, saturation_gamma).");
}
