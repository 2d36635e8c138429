#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pcscopf {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Handle to an LP column. Handles stay valid while the program grows; using
/// one with a different program is an error.
struct VarId {
  int index = -1;
  std::uint64_t owner = 0;
  bool operator==(const VarId&) const = default;
};

struct RowId {
  int index = -1;
  std::uint64_t owner = 0;
  bool operator==(const RowId&) const = default;
};

struct VariableSpec {
  std::string name;
  double lower = 0.0;
  double upper = kInf;
  double cost = 0.0;
};

struct Term {
  VarId var;
  double coef = 0.0;
};

enum class Sense { le, ge, eq, range, free };

/// lower <= sum(coef * var) <= upper. Use the factories for one-sided rows.
struct ConstraintSpec {
  std::string name;
  std::vector<Term> terms;
  double lower = -kInf;
  double upper = kInf;

  static ConstraintSpec le(std::vector<Term> terms, double rhs, std::string name = {});
  static ConstraintSpec ge(std::vector<Term> terms, double rhs, std::string name = {});
  static ConstraintSpec eq(std::vector<Term> terms, double rhs, std::string name = {});
  static ConstraintSpec range(std::vector<Term> terms, double lower, double upper, std::string name = {});
  Sense sense() const;
};

class LpError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class IterationLimitExceeded : public std::runtime_error {
 public:
  explicit IterationLimitExceeded(long iterations);
  long iterations() const { return iterations_; }

 private:
  long iterations_;
};

enum class BasisStatus : std::uint8_t { basic, at_lower, at_upper, unset };

class LinearProgram {
 public:
  LinearProgram();

  VarId add_variable(VariableSpec spec);
  std::vector<VarId> add_variables(std::span<const VariableSpec> specs);
  RowId add_constraint(ConstraintSpec spec);
  std::vector<RowId> add_constraints(std::span<const ConstraintSpec> specs);

  void set_variable_bounds(VarId v, double lower, double upper);
  void set_cost(VarId v, double cost);

  int variable_count() const { return static_cast<int>(vars_.size()); }
  int constraint_count() const { return static_cast<int>(rows_.size()); }
  std::size_t nonzero_count() const { return nonzeros_; }
  /// Bumped on every structural or data change.
  std::uint64_t revision() const { return revision_; }
  std::uint64_t serial() const { return serial_; }

  const VariableSpec& variable(int index) const { return vars_.at(index); }
  const ConstraintSpec& constraint(int index) const { return rows_.at(index); }
  const VariableSpec& variable(VarId v) const { return vars_[check(v)]; }
  const ConstraintSpec& constraint(RowId r) const;

  /// Basis from the last optimal solve, extended for anything added since;
  /// used to warm-start the next solve.
  const std::vector<BasisStatus>& variable_status() const { return var_status_; }
  const std::vector<BasisStatus>& row_status() const { return row_status_; }
  void set_basis(std::vector<BasisStatus> vars, std::vector<BasisStatus> rows);
  void clear_basis();

  int check(VarId v) const;

 private:
  std::uint64_t serial_;
  std::uint64_t revision_ = 0;
  std::size_t nonzeros_ = 0;
  std::vector<VariableSpec> vars_;
  std::vector<ConstraintSpec> rows_;
  std::vector<BasisStatus> var_status_;
  std::vector<BasisStatus> row_status_;
};

enum class LpStatus { optimal, infeasible, unbounded };

const char* to_string(LpStatus status);

struct LpSolution {
  LpStatus status = LpStatus::infeasible;
  std::vector<double> primal;
  double objective = 0.0;
  /// d objective / d (active bound) per row; zero for inactive rows.
  std::vector<double> duals;
  std::vector<double> reduced_costs;
  std::vector<double> row_activity;
  /// Rows carrying the infeasibility certificate, when infeasible.
  std::vector<int> infeasible_rows;
  long iterations = 0;
};

struct SolverOptions {
  /// 0 selects 100 * (variables + constraints).
  long max_iterations = 0;
  double primal_tolerance = 1e-9;
  double dual_tolerance = 1e-9;
  int refactor_interval = 100;
  bool warm_start = true;
};

/// Bounded dual simplex. Deterministic for identical input and options.
/// Stores the final basis back into `lp` for the next warm start.
LpSolution solve_lp(LinearProgram& lp, const SolverOptions& options = {});

/// Free-format MPS with RANGES and BOUNDS. Rows and columns appear in index
/// order; numbers use 17 significant digits.
void write_mps(const LinearProgram& lp, std::ostream& out, const std::string& name = "PCSCOPF");

}  // namespace pcscopf
