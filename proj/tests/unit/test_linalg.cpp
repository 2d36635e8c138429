#include <cmath>
#include <numeric>
#include <thread>

#include "doctest.h"
#include "fixtures.hpp"
#include "pcscopf/linalg.hpp"
#include "pcscopf/rng.hpp"
#include "pcscopf/synthetic.hpp"

using namespace pcscopf;

namespace {

/// Random balanced injections: every bus gets a draw, the reference absorbs the sum.
Vector random_injections(const Network& net, std::uint64_t seed, double scale = 100.0) {
  Rng rng(seed);
  Vector p(net.bus_count());
  double sum = 0.0;
  for (int b = 0; b < net.bus_count(); ++b) {
    if (b == net.reference_bus()) continue;
    p[b] = rng.uniform(-scale, scale);
    sum += p[b];
  }
  p[net.reference_bus()] = -sum;
  return p;
}

double max_abs_diff(const Vector& a, const Vector& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_SUITE("linalg") {
  TEST_CASE("two-bus system") {
    const Network net = fixtures::two_bus();
    SystemMatrices m(net);
    REQUIRE(m.reduced_susceptance().rows() == 1);
    CHECK(m.reduced_susceptance().coeff(0, 0) == doctest::Approx(10.0));

    const Vector theta = solve_angles(m, std::vector<double>{100.0, -100.0});
    CHECK(theta[0] == 0.0);
    CHECK(theta[1] == doctest::Approx(-0.1));
    const Vector flows = base_flows(m, theta);
    CHECK(flows[0] == doctest::Approx(100.0));

    const Vector row = ptdf_row(m, 0);
    CHECK(row[0] == 0.0);
    CHECK(row[1] == doctest::Approx(-1.0));
  }

  TEST_CASE("triangle reduced matrix") {
    const Network net = fixtures::triangle();
    SystemMatrices m(net);
    Eigen::MatrixXd h(m.reduced_susceptance());
    REQUIRE(h.rows() == 2);
    CHECK(h(0, 0) == doctest::Approx(4.0));
    CHECK(h(1, 1) == doctest::Approx(4.0));
    CHECK(h(0, 1) == doctest::Approx(-2.0));
    CHECK(h(1, 0) == doctest::Approx(-2.0));
  }

  TEST_CASE("unbalanced injections are rejected") {
    const Network net = fixtures::two_bus();
    SystemMatrices m(net);
    CHECK_THROWS_AS(solve_angles(m, std::vector<double>{100.0, -90.0}), UnbalancedInjections);
    CHECK_NOTHROW(solve_angles(m, std::vector<double>{100.0, -100.0 + 5e-7}));
  }

  TEST_CASE("disconnected network cannot be factorized") {
    Network net = fixtures::make_network(4, {{0, 1, 0.1, 100}, {2, 3, 0.1, 100}}, {{0, 100, 10}}, {{1, 10}});
    try {
      SystemMatrices m(net);
      FAIL("expected SingularMatrix");
    } catch (const SingularMatrix& e) {
      CHECK(e.buses() == std::vector<int>{2, 3});
    }
  }

  TEST_CASE("angles match a dense solve and satisfy the residual bound") {
    const Network nets[] = {fixtures::rts24(), random_grid({.core_buses = 120, .chords = 60, .leaf_buses = 20,
                                                            .generators = 20, .seed = 11})};
    for (const Network& net : nets) {
      SystemMatrices m(net);
      for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const Vector p = random_injections(net, seed);
        const Vector theta = solve_angles(m, p);
        const Vector ref = fixtures::dense_theta(net, -1, p);
        CHECK(max_abs_diff(theta, ref) < 1e-9);

        // ||H theta - P|| / ||P|| on the reduced system
        Eigen::VectorXd t(m.reduced_susceptance().rows()), rhs(t.size());
        for (int r = 0; r < t.size(); ++r) {
          t[r] = theta[m.bus_of_reduced(r)];
          rhs[r] = p[m.bus_of_reduced(r)] / net.base_mva;
        }
        const double rel = (m.reduced_susceptance() * t - rhs).norm() / rhs.norm();
        CHECK(rel <= 1e-10);
      }
    }
  }

  TEST_CASE("inverse columns are symmetric and cached") {
    const Network net = fixtures::rts24();
    SystemMatrices m(net);
    const std::size_t before = m.solve_count();
    std::vector<Column> cols;
    for (int b = 0; b < net.bus_count(); ++b) cols.push_back(m.inverse_column(b));
    CHECK(m.solve_count() - before == 23);  // the reference column is free
    for (int b = 0; b < net.bus_count(); ++b) m.inverse_column(b);
    CHECK(m.solve_count() - before == 23);
    CHECK(m.cached_columns() == 23);

    for (int i = 0; i < net.bus_count(); ++i)
      for (int j = 0; j < net.bus_count(); ++j) CHECK(std::abs((*cols[i])[j] - (*cols[j])[i]) < 1e-9);
    for (double v : *cols[net.reference_bus()]) CHECK(v == 0.0);
  }

  TEST_CASE("capped cache never exceeds its capacity") {
    const Network net = fixtures::rts24();
    SystemMatrices m(net, 4);
    for (int round = 0; round < 3; ++round)
      for (int b = 0; b < net.bus_count(); ++b) m.inverse_column(b);
    CHECK(m.peak_cached_columns() <= 4);
    CHECK(m.cached_columns() <= 4);
    // Evicted columns are recomputed identically.
    SystemMatrices full(net);
    for (int b = 0; b < net.bus_count(); ++b) CHECK(*m.inverse_column(b) == *full.inverse_column(b));
  }

  TEST_CASE("concurrent column requests solve each column once") {
    const Network net = random_grid({.core_buses = 80, .chords = 40, .leaf_buses = 10, .generators = 10, .seed = 3});
    SystemMatrices m(net);
    std::vector<std::thread> pool;
    for (int t = 0; t < 8; ++t)
      pool.emplace_back([&] {
        for (int b = 0; b < net.bus_count(); ++b) m.inverse_column(b);
      });
    for (auto& t : pool) t.join();
    CHECK(m.solve_count() == static_cast<std::size_t>(net.bus_count() - 1));
  }

  TEST_CASE("PTDF rows reproduce base flows") {
    const Network net = fixtures::rts24();
    SystemMatrices m(net);
    const Vector p = random_injections(net, 42);
    const Vector flows = base_flows(m, solve_angles(m, p));
    for (int l = 0; l < net.branch_count(); ++l) {
      const Vector row = ptdf_row(m, l);
      CHECK(row[net.reference_bus()] == 0.0);
      const double f = std::inner_product(row.begin(), row.end(), p.begin(), 0.0);
      CHECK(std::abs(f - flows[l]) < 1e-8 * std::max(1.0, std::abs(flows[l])));
    }
  }

  TEST_CASE("injection vector sums generation and served demand per bus") {
    const Network net = fixtures::triangle();
    const Vector p = bus_injections_mw(net, std::vector<double>{120.0, 30.0}, std::vector<double>{60.0, 90.0});
    CHECK(p == Vector{120.0, -30.0, -90.0});
  }

  TEST_CASE("balance tolerance scales with the injection magnitude") {
    CHECK(balance_tolerance(std::vector<double>{1.0, -1.0}) == 1e-6);
    CHECK(balance_tolerance(std::vector<double>{1e8, -1e8}) == doctest::Approx(2e-2));
  }
}
