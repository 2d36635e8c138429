#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "lp_oracle.hpp"
#include "pcscopf/lp.hpp"

using namespace pcscopf;

namespace {

oracle::DenseLp random_dense_lp(std::mt19937_64& rng, int n, int m) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  oracle::DenseLp lp;
  lp.n = n;
  for (int j = 0; j < n; ++j) {
    lp.cost.push_back(std::round(u(rng) * 10.0));
    const double lo = std::round(u(rng) * 3.0);
    lp.lower.push_back(lo);
    lp.upper.push_back(lo + std::round((u(rng) + 1.0) * 3.0));
  }
  for (int i = 0; i < m; ++i) {
    std::vector<double> row(n);
    for (double& a : row) a = std::round(u(rng) * 4.0);
    lp.rows.push_back(row);
    const double center = std::round(u(rng) * 5.0);
    const int kind = static_cast<int>((u(rng) + 1.0) * 2.0);  // 0..3
    switch (kind) {
      case 0: lp.row_lower.push_back(-kInf); lp.row_upper.push_back(center); break;
      case 1: lp.row_lower.push_back(center); lp.row_upper.push_back(kInf); break;
      case 2: lp.row_lower.push_back(center); lp.row_upper.push_back(center); break;
      default: lp.row_lower.push_back(center - 2.0); lp.row_upper.push_back(center + 2.0); break;
    }
  }
  return lp;
}

/// Same shape as random_dense_lp, but every row is built around a point
/// inside the box, so the program is always feasible.
oracle::DenseLp feasible_dense_lp(std::mt19937_64& rng, int n, int m) {
  oracle::DenseLp lp = random_dense_lp(rng, n, m);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> x(n);
  for (int j = 0; j < n; ++j) x[j] = lp.lower[j] + u(rng) * (lp.upper[j] - lp.lower[j]);
  for (int i = 0; i < m; ++i) {
    double ax = 0.0;
    for (int j = 0; j < n; ++j) ax += lp.rows[i][j] * x[j];
    const double slack = std::round(u(rng) * 3.0);
    if (std::isfinite(lp.row_lower[i])) lp.row_lower[i] = std::floor(ax) - slack;
    if (std::isfinite(lp.row_upper[i])) lp.row_upper[i] = std::ceil(ax) + slack;
    if (lp.row_lower[i] == -kInf && lp.row_upper[i] == kInf) lp.row_upper[i] = std::ceil(ax);
  }
  return lp;
}

LinearProgram to_lp(const oracle::DenseLp& d, std::vector<VarId>* ids = nullptr) {
  LinearProgram lp;
  std::vector<VarId> v;
  for (int j = 0; j < d.n; ++j) v.push_back(lp.add_variable({"", d.lower[j], d.upper[j], d.cost[j]}));
  for (std::size_t i = 0; i < d.rows.size(); ++i) {
    ConstraintSpec c;
    for (int j = 0; j < d.n; ++j) c.terms.push_back({v[j], d.rows[i][j]});
    c.lower = d.row_lower[i];
    c.upper = d.row_upper[i];
    lp.add_constraint(c);
  }
  if (ids) *ids = v;
  return lp;
}

// Objective of the dual built from bounds only; equals the primal optimum
// when the duals are optimal.
double dual_objective(const LinearProgram& lp, const LpSolution& s) {
  double obj = 0.0;
  for (int i = 0; i < lp.constraint_count(); ++i) {
    const double y = s.duals[i];
    if (std::abs(y) < 1e-12) continue;
    obj += y * (y > 0 ? lp.constraint(i).lower : lp.constraint(i).upper);
  }
  for (int j = 0; j < lp.variable_count(); ++j) {
    const double d = s.reduced_costs[j];
    if (std::abs(d) < 1e-12) continue;
    obj += d * (d > 0 ? lp.variable(j).lower : lp.variable(j).upper);
  }
  return obj;
}

void check_primal_feasible(const LinearProgram& lp, const LpSolution& s) {
  for (int j = 0; j < lp.variable_count(); ++j) {
    CHECK(s.primal[j] >= lp.variable(j).lower - 1e-9);
    CHECK(s.primal[j] <= lp.variable(j).upper + 1e-9);
  }
  for (int i = 0; i < lp.constraint_count(); ++i) {
    const double scale = 1.0 + std::abs(s.row_activity[i]);
    CHECK(s.row_activity[i] >= lp.constraint(i).lower - 1e-7 * scale);
    CHECK(s.row_activity[i] <= lp.constraint(i).upper + 1e-7 * scale);
  }
}

}  // namespace

TEST_SUITE("lp") {
  TEST_CASE("counts after adding variables and constraints") {
    LinearProgram lp;
    const auto v = lp.add_variables(std::vector<VariableSpec>{{"a", 0, 1, 1}, {"b", 0, 1, 1}, {"c", 0, 1, 1}});
    lp.add_constraint(ConstraintSpec::le({{v[0], 1}, {v[1], 1}}, 1));
    lp.add_constraint(ConstraintSpec::ge({{v[2], 1}}, 0.5));
    CHECK(lp.variable_count() == 3);
    CHECK(lp.constraint_count() == 2);
    CHECK(lp.nonzero_count() == 3);
  }

  TEST_CASE("min x subject to x >= 3") {
    LinearProgram lp;
    const VarId x = lp.add_variable({"x", -kInf, kInf, 1.0});
    lp.add_constraint(ConstraintSpec::ge({{x, 1.0}}, 3.0));
    const auto s = solve_lp(lp);
    REQUIRE(s.status == LpStatus::optimal);
    CHECK(s.primal[0] == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(s.objective == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(s.duals[0] == doctest::Approx(1.0));
  }

  TEST_CASE("contradictory rows are infeasible") {
    LinearProgram lp;
    const VarId x = lp.add_variable({"x", -kInf, kInf, 0.0});
    lp.add_constraint(ConstraintSpec::le({{x, 1.0}}, 0.0));
    lp.add_constraint(ConstraintSpec::ge({{x, 1.0}}, 1.0));
    const auto s = solve_lp(lp);
    CHECK(s.status == LpStatus::infeasible);
    CHECK(s.infeasible_rows == std::vector<int>{0, 1});
  }

  TEST_CASE("row met exactly by both upper bounds is feasible") {
    // 0.4 - 0.1 - 0.3 rounds to +5.6e-17, which once made every bound
    // flip look insufficient.
    LinearProgram lp;
    const VarId a = lp.add_variable({"a", 0.0, 0.1, 1.0});
    const VarId b = lp.add_variable({"b", 0.0, 0.3, 1.0});
    lp.add_constraint(ConstraintSpec::ge({{a, 1.0}, {b, 1.0}}, 0.4));
    const auto s = solve_lp(lp);
    REQUIRE(s.status == LpStatus::optimal);
    CHECK(s.objective == doctest::Approx(0.4));
  }

  TEST_CASE("unbounded objective is detected") {
    LinearProgram lp;
    const VarId x = lp.add_variable({"x", 0.0, kInf, -1.0});
    const VarId y = lp.add_variable({"y", 0.0, 1.0, 0.0});
    lp.add_constraint(ConstraintSpec::ge({{x, 1.0}, {y, -1.0}}, 0.0));
    CHECK(solve_lp(lp).status == LpStatus::unbounded);
  }

  TEST_CASE("handles from another program are rejected") {
    LinearProgram a, b;
    const VarId x = a.add_variable({"x", 0, 1, 0});
    b.add_variable({"y", 0, 1, 0});
    CHECK_THROWS_AS(b.add_constraint(ConstraintSpec::le({{x, 1.0}}, 1.0)), LpError);
    CHECK_THROWS_AS(b.set_cost(VarId{5, b.serial()}, 1.0), LpError);
  }

  TEST_CASE("bound inversion is rejected") {
    LinearProgram lp;
    CHECK_THROWS_AS(lp.add_variable({"x", 2.0, 1.0, 0.0}), LpError);
    const VarId x = lp.add_variable({"x", 0.0, 1.0, 0.0});
    CHECK_THROWS_AS(lp.add_constraint(ConstraintSpec::range({{x, 1.0}}, 1.0, 0.0)), LpError);
  }

  TEST_CASE("transport problem matches vertex enumeration") {
    // Two plants (supply 30, 25) to three markets (demand 10, 20, 15).
    oracle::DenseLp d;
    d.n = 6;
    d.cost = {4, 6, 9, 5, 3, 7};
    d.lower.assign(6, 0.0);
    d.upper.assign(6, 40.0);
    d.rows = {{1, 1, 1, 0, 0, 0}, {0, 0, 0, 1, 1, 1}, {1, 0, 0, 1, 0, 0}, {0, 1, 0, 0, 1, 0}, {0, 0, 1, 0, 0, 1}};
    d.row_lower = {-kInf, -kInf, 10, 20, 15};
    d.row_upper = {30, 25, 10, 20, 15};
    const auto expected = oracle::brute_force(d);
    REQUIRE(expected);
    LinearProgram lp = to_lp(d);
    const auto s = solve_lp(lp);
    REQUIRE(s.status == LpStatus::optimal);
    CHECK(s.objective == doctest::Approx(expected->objective).epsilon(1e-10));
    check_primal_feasible(lp, s);
  }

  TEST_CASE("random small programs agree with vertex enumeration") {
    std::mt19937_64 rng(20240611);
    int optimal = 0, infeasible = 0;
    for (int trial = 0; trial < 400; ++trial) {
      const int n = 2 + static_cast<int>(rng() % 4);
      const int m = 1 + static_cast<int>(rng() % 4);
      const auto d = random_dense_lp(rng, n, m);
      const auto expected = oracle::brute_force(d);
      LinearProgram lp = to_lp(d);
      const auto s = solve_lp(lp);
      CAPTURE(trial);
      if (!expected) {
        CHECK(s.status == LpStatus::infeasible);
        ++infeasible;
        continue;
      }
      REQUIRE(s.status == LpStatus::optimal);
      ++optimal;
      CHECK(s.objective == doctest::Approx(expected->objective).epsilon(1e-8));
      check_primal_feasible(lp, s);
      CHECK(dual_objective(lp, s) == doctest::Approx(s.objective).epsilon(1e-6));
    }
    CHECK(optimal > 50);
    CHECK(infeasible > 10);
  }

  TEST_CASE("larger random programs satisfy strong duality") {
    std::mt19937_64 rng(99);
    int optimal = 0;
    for (int trial = 0; trial < 20; ++trial) {
      const auto d = feasible_dense_lp(rng, 60, 40);
      LinearProgram lp = to_lp(d);
      const auto s = solve_lp(lp);
      if (s.status != LpStatus::optimal) continue;
      ++optimal;
      check_primal_feasible(lp, s);
      CHECK(dual_objective(lp, s) == doctest::Approx(s.objective).epsilon(1e-6));
    }
    CHECK(optimal == 20);
  }

  TEST_CASE("re-solving an unmodified program is deterministic") {
    std::mt19937_64 rng(5);
    oracle::DenseLp d;
    do {
      d = random_dense_lp(rng, 30, 20);
    } while (!([&] {
      LinearProgram probe = to_lp(d);
      return solve_lp(probe).status == LpStatus::optimal;
    })());
    LinearProgram a = to_lp(d);
    LinearProgram b = to_lp(d);
    const auto s1 = solve_lp(a);
    REQUIRE(s1.status == LpStatus::optimal);
    const auto s2 = solve_lp(a);
    const auto s3 = solve_lp(b);
    CHECK(s1.status == s2.status);
    CHECK(s1.objective == s2.objective);
    CHECK(s1.objective == s3.objective);
    CHECK(s1.primal == s3.primal);
  }

  TEST_CASE("appending keeps the previous basis as a warm start") {
    std::mt19937_64 rng(11);
    oracle::DenseLp d;
    do {
      d = random_dense_lp(rng, 40, 30);
    } while (!([&] {
      LinearProgram probe = to_lp(d);
      return solve_lp(probe).status == LpStatus::optimal;
    })());
    std::vector<VarId> ids;
    LinearProgram lp = to_lp(d, &ids);
    const auto first = solve_lp(lp);
    REQUIRE(first.status == LpStatus::optimal);
    const auto before = lp.variable_status();

    // A cut that removes the current optimum.
    std::vector<Term> terms;
    double activity = 0.0;
    for (int j = 0; j < 5; ++j) {
      terms.push_back({ids[j], 1.0});
      activity += first.primal[j];
    }
    const RowId cut = lp.add_constraint(ConstraintSpec::le(terms, activity - 0.5));
    CHECK(lp.constraint(cut).upper == doctest::Approx(activity - 0.5));
    const VarId extra = lp.add_variable({"extra", 0.0, 1.0, 1.0});
    CHECK(extra.index == 40);
    for (int j = 0; j < 40; ++j) CHECK(lp.variable_status()[j] == before[j]);

    const auto warm = solve_lp(lp);
    LinearProgram cold_lp = lp;
    cold_lp.clear_basis();
    const auto cold = solve_lp(cold_lp);
    REQUIRE(warm.status == cold.status);
    if (warm.status == LpStatus::optimal) {
      CHECK(warm.objective == doctest::Approx(cold.objective).epsilon(1e-9));
      CHECK(warm.objective >= first.objective - 1e-9);
      CHECK(warm.iterations <= cold.iterations);
    }
  }

  TEST_CASE("iteration limit raises") {
    std::mt19937_64 rng(3);
    const auto d = random_dense_lp(rng, 40, 30);
    LinearProgram lp = to_lp(d);
    SolverOptions opt;
    opt.max_iterations = 1;
    CHECK_THROWS_AS(solve_lp(lp, opt), IterationLimitExceeded);
  }

  TEST_CASE("MPS export has fixed layout") {
    LinearProgram lp;
    const VarId x = lp.add_variable({"x", 0.0, 4.0, 1.5});
    const VarId y = lp.add_variable({"y", -kInf, kInf, -1.0});
    const VarId z = lp.add_variable({"z", 2.0, 2.0, 0.0});
    lp.add_constraint(ConstraintSpec::le({{x, 1.0}, {y, 2.0}}, 3.0, "cap"));
    lp.add_constraint(ConstraintSpec::range({{y, 1.0}, {z, -1.0}}, -1.0, 0.25, "band"));
    lp.add_constraint(ConstraintSpec::eq({{x, 1.0}, {z, 1.0}}, 0.1, "bal"));
    std::ostringstream os;
    write_mps(lp, os, "T");
    CHECK(os.str() ==
          "NAME T\nROWS\n N obj\n L cap\n G band\n E bal\nCOLUMNS\n"
          " x obj 1.5\n x cap 1\n x bal 1\n"
          " y obj -1\n y cap 2\n y band 1\n"
          " z band -1\n z bal 1\n"
          "RHS\n rhs cap 3\n rhs band -1\n rhs bal 0.10000000000000001\n"
          "RANGES\n rng band 1.25\n"
          "BOUNDS\n UP bnd x 4\n FR bnd y\n FX bnd z 2\nENDATA\n");
  }
}
