#include <fstream>
#include <numeric>
#include <sstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "pcscopf/case_io.hpp"
#include "pcscopf/contingency.hpp"
#include "pcscopf/synthetic.hpp"

using namespace pcscopf;

namespace {

bool has_code(const std::vector<Violation>& v, const std::string& code) {
  return std::any_of(v.begin(), v.end(), [&](const Violation& x) { return x.code == code; });
}

const char* kSingleBus = R"(
mpc.baseMVA = 100;
mpc.bus = [
  1 3 50 0 0 0 1 1 0 138 1 1.05 0.95;
];
mpc.gen = [
  1 0 0 0 0 1 100 1 80 0;
];
mpc.branch = [
];
mpc.gencost = [
  2 0 0 2 20 0;
];
)";

const char* kRing4 = R"(
mpc.baseMVA = 100;
mpc.bus = [
  1 3 0 0 0 0 1 1 0 138 1 1.05 0.95;
  2 1 40 0 0 0 1 1 0 138 1 1.05 0.95;
  3 1 30 0 0 0 1 1 0 138 1 1.05 0.95;
  4 1 20 0 0 0 1 1 0 138 1 1.05 0.95;
];
mpc.gen = [
  1 0 0 0 0 1 100 1 150 0;
];
mpc.branch = [
  1 2 0 0.1 0 100 0 0 0 0 1;
  2 3 0 0.1 0 100 0 0 0 0 1;
  3 4 0 0.1 0 100 0 0 0 0 1;
  4 1 0 0.1 0 100 0 0 0 0 1;
];
mpc.gencost = [
  2 0 0 3 0.01 10 0;
];
)";

}  // namespace

TEST_SUITE("case_io") {
  TEST_CASE("RTS-24 loads with 24 buses and 38 branches") {
    const Network net = fixtures::rts24();
    CHECK(net.bus_count() == 24);
    CHECK(net.branch_count() == 38);
    CHECK(net.generators.size() == 33);
    CHECK(net.total_demand_mw() == doctest::Approx(2850.0));
    CHECK(net.total_capacity_mw() == doctest::Approx(3405.0));
    CHECK(net.reference_bus() == 12);
    CHECK(net.buses[12].external_id == 13);
    for (const auto& br : net.branches) {
      CHECK(br.limit_short_mw == doctest::Approx(1.3 * br.limit_normal_mw));
      CHECK(br.limit_long_mw == doctest::Approx(1.1 * br.limit_normal_mw));
      CHECK(br.outage_probability == 1e-4);
    }
    for (const auto& d : net.demands) CHECK(d.voll_per_mwh == 10000.0);
  }

  TEST_CASE("quadratic costs become convex segments over [0, pmax]") {
    const Network net = fixtures::rts24();
    const Generator& u76 = net.generators[2];
    REQUIRE(u76.segments.size() == 3);
    CHECK(u76.capacity_mw() == doctest::Approx(76.0));
    for (std::size_t s = 1; s < u76.segments.size(); ++s)
      CHECK(u76.segments[s].marginal_cost_per_mwh > u76.segments[s - 1].marginal_cost_per_mwh);
    // Segment slopes are secants of c2 p^2 + c1 p: c1 + c2 (a + b).
    const double w = 76.0 / 3.0;
    CHECK(u76.segments[0].marginal_cost_per_mwh == doctest::Approx(16.0811 + 0.014142 * w));
    CHECK(u76.redispatch_cost_per_mwh == u76.segments.back().marginal_cost_per_mwh);
    CHECK(u76.ramp_long_mw == doctest::Approx(76.0));
    CHECK(u76.ramp_short_mw == doctest::Approx(7.6));
  }

  TEST_CASE("single-bus case has no branches and only a warning") {
    std::istringstream in(kSingleBus);
    const Network net = parse_matpower(in);
    CHECK(net.bus_count() == 1);
    CHECK(net.branch_count() == 0);
    const auto v = validate(net);
    CHECK_FALSE(has_errors(v));
    REQUIRE(v.size() == 1);
    CHECK(v[0].message == "no branches");
    CHECK(v[0].severity == Severity::warning);
    CHECK(contingency_list(net).empty());
  }

  TEST_CASE("reliability CSV overrides branch data exactly") {
    const auto dir = fixtures::temp_dir("ring4");
    {
      std::ofstream(dir / "ring4.m") << kRing4;
      std::ofstream csv(dir / "ring4.reliability.csv");
      csv << "branch_id,pi,limit_short_mw,limit_long_mw\n"
          << "0,0.000123,140,120\n1,2.5e-05,130,110\n2,0.00031,150,101\n3,7e-05,135,115\n";
    }
    const Network net = load_case(dir / "ring4.m");
    REQUIRE(net.branch_count() == 4);
    CHECK(net.branches[0].outage_probability == 0.000123);
    CHECK(net.branches[1].outage_probability == 2.5e-05);
    CHECK(net.branches[2].outage_probability == 0.00031);
    CHECK(net.branches[3].outage_probability == 7e-05);
    CHECK(net.branches[2].limit_long_mw == 101.0);

    LoadOptions no_side;
    no_side.use_companion_files = false;
    CHECK(load_case(dir / "ring4.m", no_side).branches[0].outage_probability == 1e-4);
  }

  TEST_CASE("VOLL CSV overrides demand values") {
    std::istringstream in(kRing4);
    Network net = parse_matpower(in);
    std::istringstream voll("demand_id,voll\n0,5000\n2,12000\n");
    apply_voll_csv(net, voll);
    CHECK(net.demands[0].voll_per_mwh == 5000.0);
    CHECK(net.demands[1].voll_per_mwh == 10000.0);
    CHECK(net.demands[2].voll_per_mwh == 12000.0);
  }

  TEST_CASE("parse errors carry line and field") {
    std::string text = kRing4;
    text.replace(text.find("2 3 0 0.1"), 9, "2 3 0 -0.1");
    std::istringstream in(text);
    try {
      parse_matpower(in, {}, "bad.m");
      FAIL("expected a parse error");
    } catch (const CaseParseError& e) {
      CHECK(e.line() == 14);
      CHECK(e.field() == "branch.x");
      CHECK(std::string(e.what()).find("bad.m") != std::string::npos);
    }

    std::string noref = kRing4;
    noref.replace(noref.find("1 3 0 0"), 7, "1 2 0 0");
    std::istringstream in2(noref);
    CHECK_THROWS_WITH_AS(parse_matpower(in2), doctest::Contains("missing reference bus"), CaseParseError);

    std::istringstream bad_csv("branch,pi\n");
    Network net = fixtures::two_bus();
    CHECK_THROWS_AS(apply_reliability_csv(net, bad_csv), CaseParseError);
  }

  TEST_CASE("native JSON round trip reproduces the network") {
    for (const Network& net : {fixtures::rts24(), random_grid({.core_buses = 30, .chords = 10, .leaf_buses = 3,
                                                               .radial_pairs = 1, .generators = 5, .seed = 4})}) {
      std::stringstream ss;
      write_native_json(net, ss);
      const Network back = parse_native_json(ss);
      CHECK(back == net);
    }
  }

  TEST_CASE("native JSON reports the failing field path") {
    std::stringstream ss;
    write_native_json(fixtures::two_bus(), ss);
    std::string text = ss.str();
    text.replace(text.find("\"reactance_pu\""), 14, "\"reactance_xx\"");
    std::istringstream in(text);
    try {
      parse_native_json(in);
      FAIL("expected a parse error");
    } catch (const CaseParseError& e) {
      CHECK(e.field() == "branches[0].reactance_pu");
    }
  }
}

TEST_SUITE("network") {
  TEST_CASE("valid RTS-24 has no violations") { CHECK(validate(fixtures::rts24()).empty()); }

  TEST_CASE("two reference buses are reported once") {
    Network net = fixtures::triangle();
    net.buses[2].is_reference = true;
    const auto v = validate(net);
    REQUIRE(v.size() == 1);
    CHECK(v[0].message == "multiple reference buses");
  }

  TEST_CASE("limit ordering breach names the branch") {
    Network net = fixtures::rts24();
    net.branches[3].limit_long_mw = net.branches[3].limit_short_mw + 1.0;
    const auto v = validate(net);
    REQUIRE(v.size() == 1);
    CHECK(v[0].element == 3);
    CHECK(v[0].message.find("branch 3") != std::string::npos);
    CHECK_THROWS_AS(require_valid(net), InvalidNetwork);
  }

  TEST_CASE("each data invariant is checked") {
    auto broken = [](auto mutate) {
      Network net = fixtures::triangle();
      mutate(net);
      return validate(net);
    };
    CHECK(has_code(broken([](Network& n) { n.branches[0].reactance_pu = 0.0; }), "branch_reactance"));
    CHECK(has_code(broken([](Network& n) { n.branches[0].to_bus = n.branches[0].from_bus; }), "branch_loop"));
    CHECK(has_code(broken([](Network& n) { n.branches[1].outage_probability = 1.0; }), "branch_probability"));
    CHECK(has_code(broken([](Network& n) { n.branches[1].limit_long_mw = 50.0; }), "branch_limit_order"));
    CHECK(has_code(broken([](Network& n) { n.demands[0].voll_per_mwh = 0.0; }), "demand_voll"));
    CHECK(has_code(broken([](Network& n) { n.demands[0].p_demand_mw = -1.0; }), "demand_negative"));
    CHECK(has_code(broken([](Network& n) { n.generators[0].ramp_short_mw = -1.0; }), "generator_ramp"));
    CHECK(has_code(broken([](Network& n) {
                     n.generators[0].segments = {{10, 30}, {10, 20}};
                   }),
                   "generator_cost_order"));
    CHECK(has_code(broken([](Network& n) { n.buses[0].is_reference = false; }), "missing_reference"));
    CHECK(has_code(broken([](Network& n) { n.generators[0].segments = {{1, 10}}; }), "capacity_shortfall"));
    CHECK_FALSE(has_errors(broken([](Network& n) { n.generators[0].segments = {{1, 10}}; })));
  }

  TEST_CASE("disconnected network lists unreachable buses") {
    Network net = fixtures::make_network(4, {{0, 1, 0.1, 100}, {2, 3, 0.1, 100}}, {{0, 100, 10}}, {{1, 10}});
    const auto v = validate(net);
    REQUIRE(has_code(v, "disconnected"));
    const auto& msg = std::find_if(v.begin(), v.end(), [](auto& x) { return x.code == "disconnected"; })->message;
    CHECK(msg.find(" 2 3") != std::string::npos);
  }

  TEST_CASE("contingency list is one entry per branch") {
    const Network net = fixtures::rts24();
    const auto list = contingency_list(net);
    REQUIRE(list.size() == 38);
    double sum = 0.0, expected = 0.0;
    for (std::size_t k = 0; k < list.size(); ++k) {
      CHECK(list[k].outaged_branch == static_cast<int>(k));
      CHECK(list[k].probability == net.branches[k].outage_probability);
      sum += list[k].probability;
      expected += net.branches[k].outage_probability;
    }
    CHECK(sum == expected);
  }

  TEST_CASE("parallel circuits stay distinct") {
    const Network net = fixtures::parallel_pair();
    CHECK(validate(net).empty());
    const auto list = contingency_list(net);
    REQUIRE(list.size() == 2);
    CHECK(list[0].island_info.kind == IslandKind::connected);
    CHECK(list[1].island_info.kind == IslandKind::connected);
  }
}
