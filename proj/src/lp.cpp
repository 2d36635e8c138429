#include "pcscopf/lp.hpp"

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <memory>
#include <numeric>
#include <ostream>
#include <sstream>

namespace pcscopf {

namespace {
std::atomic<std::uint64_t> next_serial{1};
}

ConstraintSpec ConstraintSpec::le(std::vector<Term> terms, double rhs, std::string name) {
  return {std::move(name), std::move(terms), -kInf, rhs};
}
ConstraintSpec ConstraintSpec::ge(std::vector<Term> terms, double rhs, std::string name) {
  return {std::move(name), std::move(terms), rhs, kInf};
}
ConstraintSpec ConstraintSpec::eq(std::vector<Term> terms, double rhs, std::string name) {
  return {std::move(name), std::move(terms), rhs, rhs};
}
ConstraintSpec ConstraintSpec::range(std::vector<Term> terms, double lower, double upper, std::string name) {
  return {std::move(name), std::move(terms), lower, upper};
}

Sense ConstraintSpec::sense() const {
  const bool lo = std::isfinite(lower), up = std::isfinite(upper);
  if (lo && up) return lower == upper ? Sense::eq : Sense::range;
  if (lo) return Sense::ge;
  if (up) return Sense::le;
  return Sense::free;
}

IterationLimitExceeded::IterationLimitExceeded(long iterations)
    : std::runtime_error("simplex iteration limit exceeded after " + std::to_string(iterations) + " iterations"),
      iterations_(iterations) {}

const char* to_string(LpStatus status) {
  switch (status) {
    case LpStatus::optimal: return "optimal";
    case LpStatus::infeasible: return "infeasible";
    case LpStatus::unbounded: return "unbounded";
  }
  return "unknown";
}

LinearProgram::LinearProgram() : serial_(next_serial++) {}

int LinearProgram::check(VarId v) const {
  if (v.owner != serial_ || v.index < 0 || v.index >= variable_count())
    throw LpError("stale or foreign variable handle");
  return v.index;
}

const ConstraintSpec& LinearProgram::constraint(RowId r) const {
  if (r.owner != serial_ || r.index < 0 || r.index >= constraint_count())
    throw LpError("stale or foreign constraint handle");
  return rows_[r.index];
}

namespace {
void check_bounds(double lower, double upper, const std::string& what) {
  if (std::isnan(lower) || std::isnan(upper) || lower > upper || lower == kInf || upper == -kInf)
    throw LpError("invalid bounds on " + what + ": [" + std::to_string(lower) + ", " + std::to_string(upper) + "]");
}
}  // namespace

VarId LinearProgram::add_variable(VariableSpec spec) {
  check_bounds(spec.lower, spec.upper, spec.name.empty() ? "variable" : spec.name);
  if (!std::isfinite(spec.cost)) throw LpError("nonfinite objective coefficient");
  vars_.push_back(std::move(spec));
  var_status_.push_back(BasisStatus::unset);
  ++revision_;
  return {variable_count() - 1, serial_};
}

std::vector<VarId> LinearProgram::add_variables(std::span<const VariableSpec> specs) {
  std::vector<VarId> out;
  out.reserve(specs.size());
  for (const auto& s : specs) out.push_back(add_variable(s));
  return out;
}

RowId LinearProgram::add_constraint(ConstraintSpec spec) {
  check_bounds(spec.lower, spec.upper, spec.name.empty() ? "constraint" : spec.name);
  for (const Term& t : spec.terms) {
    check(t.var);
    if (!std::isfinite(t.coef)) throw LpError("nonfinite constraint coefficient");
  }
  // Merge repeated variables and drop zeros so the stored row is canonical.
  std::stable_sort(spec.terms.begin(), spec.terms.end(),
                   [](const Term& a, const Term& b) { return a.var.index < b.var.index; });
  std::vector<Term> merged;
  for (const Term& t : spec.terms) {
    if (!merged.empty() && merged.back().var.index == t.var.index)
      merged.back().coef += t.coef;
    else
      merged.push_back(t);
  }
  std::erase_if(merged, [](const Term& t) { return t.coef == 0.0; });
  spec.terms = std::move(merged);
  nonzeros_ += spec.terms.size();
  rows_.push_back(std::move(spec));
  row_status_.push_back(BasisStatus::basic);
  ++revision_;
  return {constraint_count() - 1, serial_};
}

std::vector<RowId> LinearProgram::add_constraints(std::span<const ConstraintSpec> specs) {
  std::vector<RowId> out;
  out.reserve(specs.size());
  for (const auto& s : specs) out.push_back(add_constraint(s));
  return out;
}

void LinearProgram::set_variable_bounds(VarId v, double lower, double upper) {
  const int j = check(v);
  check_bounds(lower, upper, vars_[j].name.empty() ? "variable" : vars_[j].name);
  vars_[j].lower = lower;
  vars_[j].upper = upper;
  ++revision_;
}

void LinearProgram::set_cost(VarId v, double cost) {
  vars_[check(v)].cost = cost;
  ++revision_;
}

void LinearProgram::set_basis(std::vector<BasisStatus> vars, std::vector<BasisStatus> rows) {
  if (vars.size() != vars_.size() || rows.size() != rows_.size()) throw LpError("basis size mismatch");
  var_status_ = std::move(vars);
  row_status_ = std::move(rows);
}

void LinearProgram::clear_basis() {
  std::fill(var_status_.begin(), var_status_.end(), BasisStatus::unset);
  std::fill(row_status_.begin(), row_status_.end(), BasisStatus::basic);
}

namespace {

using SpMat = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;
using Lu = Eigen::SparseLU<SpMat, Eigen::COLAMDOrdering<int>>;

struct Eta {
  int r = 0;
  double pivot = 1.0;
  std::vector<int> idx;
  std::vector<double> val;
};

class DualSimplex {
 public:
  DualSimplex(LinearProgram& lp, const SolverOptions& options);
  LpSolution run();

 private:
  enum class Outcome { optimal, infeasible, unbounded };

  bool is_fixed(int j) const { return ub_[j] - lb_[j] <= 0.0; }
  bool artificial_at_bound(int j) const {
    return (status_[j] == BasisStatus::at_lower && art_lo_[j]) ||
           (status_[j] == BasisStatus::at_upper && art_up_[j]);
  }
  void place_nonbasic(int j);
  void slack_basis();
  bool load_warm_basis();
  bool refactor();
  Eigen::VectorXd solve_basis(const Eigen::VectorXd& v) const;
  Eigen::VectorXd solve_basis_transpose(const Eigen::VectorXd& c) const;
  Eigen::VectorXd ftran(Eigen::VectorXd v) const;
  Eigen::VectorXd btran(Eigen::VectorXd v) const;
  void add_column(Eigen::VectorXd& v, int j, double scale) const;
  double dot_column(const Eigen::VectorXd& y, int j) const;
  void compute_primal();
  void compute_duals();
  bool repair_dual_infeasibility();
  void make_artificial(int j, bool upper);
  bool enlarge_box();
  void refresh();
  Outcome iterate();
  LpSolution finish(Outcome outcome);

  LinearProgram& lp_;
  SolverOptions opt_;
  int n_ = 0, m_ = 0, total_ = 0;
  std::vector<int> cs_, ci_;
  std::vector<double> cv_;
  std::vector<int> rs_, rj_;
  std::vector<double> rv_;
  std::vector<double> lb_, ub_, cost_;
  std::vector<char> art_lo_, art_up_;
  double big_ = 1e7;
  std::vector<BasisStatus> status_;
  std::vector<int> head_, pos_;
  std::vector<double> x_, d_, w_;
  // Kernel factorization: basic logicals are unit columns, so only the
  // structural basic columns on rows whose logical is nonbasic are factored.
  std::unique_ptr<Lu> lu_;
  bool factored_ = false;
  int structural_basic_ = 0;
  std::vector<int> factor_head_;   // basis at the last refactor
  std::vector<int> kernel_rows_;   // kernel index -> row
  std::vector<int> kernel_of_row_; // row -> kernel index or -1
  std::vector<Eta> etas_;
  long iterations_ = 0;
  long max_iterations_ = 0;
  int degenerate_run_ = 0;
  Eigen::VectorXd last_rho_;
  std::vector<int> farkas_rows_;
};

DualSimplex::DualSimplex(LinearProgram& lp, const SolverOptions& options) : lp_(lp), opt_(options) {
  n_ = lp.variable_count();
  m_ = lp.constraint_count();
  total_ = n_ + m_;
  max_iterations_ = opt_.max_iterations > 0 ? opt_.max_iterations : 100L * std::max(1, total_);

  rs_.assign(m_ + 1, 0);
  std::vector<int> col_count(n_ + 1, 0);
  for (int i = 0; i < m_; ++i) {
    const auto& row = lp.constraint(i);
    rs_[i + 1] = rs_[i] + static_cast<int>(row.terms.size());
    for (const Term& t : row.terms) {
      rj_.push_back(t.var.index);
      rv_.push_back(t.coef);
      ++col_count[t.var.index + 1];
    }
  }
  cs_.assign(n_ + 1, 0);
  for (int j = 0; j < n_; ++j) cs_[j + 1] = cs_[j] + col_count[j + 1];
  ci_.resize(rj_.size());
  cv_.resize(rj_.size());
  std::vector<int> fill(cs_.begin(), cs_.end() - 1);
  for (int i = 0; i < m_; ++i)
    for (int k = rs_[i]; k < rs_[i + 1]; ++k) {
      const int j = rj_[k];
      ci_[fill[j]] = i;
      cv_[fill[j]++] = rv_[k];
    }

  lb_.resize(total_);
  ub_.resize(total_);
  cost_.assign(total_, 0.0);
  art_lo_.assign(total_, 0);
  art_up_.assign(total_, 0);
  for (int j = 0; j < n_; ++j) {
    const auto& v = lp.variable(j);
    lb_[j] = v.lower;
    ub_[j] = v.upper;
    cost_[j] = v.cost;
    if (!std::isfinite(lb_[j])) {
      art_lo_[j] = 1;
      lb_[j] = std::min(std::isfinite(ub_[j]) ? ub_[j] : 0.0, 0.0) - big_;
    }
    if (!std::isfinite(ub_[j])) {
      art_up_[j] = 1;
      ub_[j] = std::max(lb_[j], 0.0) + big_;
    }
  }
  for (int i = 0; i < m_; ++i) {
    lb_[n_ + i] = lp.constraint(i).lower;
    ub_[n_ + i] = lp.constraint(i).upper;
  }
  status_.assign(total_, BasisStatus::unset);
  x_.assign(total_, 0.0);
  d_.assign(total_, 0.0);
  w_.assign(m_, 1.0);
  head_.assign(m_, -1);
  pos_.assign(total_, -1);
}

void DualSimplex::place_nonbasic(int j) {
  BasisStatus s = status_[j];
  const bool lo_ok = std::isfinite(lb_[j]);
  const bool up_ok = std::isfinite(ub_[j]);
  if (s != BasisStatus::at_lower && s != BasisStatus::at_upper) {
    if (cost_[j] > 0.0)
      s = BasisStatus::at_lower;
    else if (cost_[j] < 0.0)
      s = BasisStatus::at_upper;
    else
      s = (j < n_ && art_lo_[j] && !art_up_[j]) ? BasisStatus::at_upper : BasisStatus::at_lower;
  }
  if (s == BasisStatus::at_lower && !lo_ok) s = BasisStatus::at_upper;
  if (s == BasisStatus::at_upper && !up_ok) s = BasisStatus::at_lower;
  if (s == BasisStatus::at_lower && !lo_ok) make_artificial(j, false);
  status_[j] = s;
  x_[j] = s == BasisStatus::at_lower ? lb_[j] : ub_[j];
}

void DualSimplex::make_artificial(int j, bool upper) {
  if (upper) {
    art_up_[j] = 1;
    ub_[j] = std::max(std::isfinite(lb_[j]) ? lb_[j] : 0.0, 0.0) + big_;
  } else {
    art_lo_[j] = 1;
    lb_[j] = std::min(std::isfinite(ub_[j]) ? ub_[j] : 0.0, 0.0) - big_;
  }
}

void DualSimplex::slack_basis() {
  std::fill(pos_.begin(), pos_.end(), -1);
  for (int i = 0; i < m_; ++i) {
    head_[i] = n_ + i;
    pos_[n_ + i] = i;
    status_[n_ + i] = BasisStatus::basic;
  }
  for (int j = 0; j < n_; ++j) {
    if (status_[j] == BasisStatus::basic) status_[j] = BasisStatus::unset;
    place_nonbasic(j);
  }
  std::fill(w_.begin(), w_.end(), 1.0);
}

bool DualSimplex::load_warm_basis() {
  const auto& vs = lp_.variable_status();
  const auto& rs = lp_.row_status();
  if (static_cast<int>(vs.size()) != n_ || static_cast<int>(rs.size()) != m_) return false;
  int basic = 0;
  for (auto s : vs) basic += s == BasisStatus::basic;
  for (auto s : rs) basic += s == BasisStatus::basic;
  if (basic != m_) return false;
  int p = 0;
  std::fill(pos_.begin(), pos_.end(), -1);
  for (int j = 0; j < total_; ++j) {
    const BasisStatus s = j < n_ ? vs[j] : rs[j - n_];
    status_[j] = s;
    if (s == BasisStatus::basic) {
      head_[p] = j;
      pos_[j] = p++;
    } else {
      place_nonbasic(j);
    }
  }
  return true;
}

bool DualSimplex::refactor() {
  etas_.clear();
  if (m_ == 0) return true;
  // Canonical column order: the factorization, and so every value derived
  // from it, depends only on the basis set.
  std::vector<int> head(m_);
  std::vector<double> w(m_);
  int p = 0;
  for (int j = 0; j < total_; ++j) {
    if (pos_[j] < 0) continue;
    head[p] = j;
    w[p] = w_[pos_[j]];
    pos_[j] = p++;
  }
  head_ = std::move(head);
  w_ = std::move(w);
  // After the sort structural columns occupy positions [0, structural_basic_)
  // and logicals follow in row order.
  structural_basic_ = 0;
  while (structural_basic_ < m_ && head_[structural_basic_] < n_) ++structural_basic_;
  kernel_of_row_.assign(m_, 0);
  for (int p = structural_basic_; p < m_; ++p) kernel_of_row_[head_[p] - n_] = -1;
  kernel_rows_.clear();
  for (int i = 0; i < m_; ++i)
    if (kernel_of_row_[i] == 0) {
      kernel_of_row_[i] = static_cast<int>(kernel_rows_.size());
      kernel_rows_.push_back(i);
    }
  const int nk = structural_basic_;
  factor_head_ = head_;
  factored_ = true;
  if (nk == 0) {
    lu_.reset();
    return true;
  }
  std::vector<Eigen::Triplet<double, int>> t;
  for (int p = 0; p < nk; ++p) {
    const int j = head_[p];
    for (int k = cs_[j]; k < cs_[j + 1]; ++k)
      if (kernel_of_row_[ci_[k]] >= 0) t.emplace_back(kernel_of_row_[ci_[k]], p, cv_[k]);
  }
  SpMat b(nk, nk);
  b.setFromTriplets(t.begin(), t.end());
  b.makeCompressed();
  auto lu = std::make_unique<Lu>();
  lu->analyzePattern(b);
  lu->factorize(b);
  if (lu->info() != Eigen::Success) {
    factored_ = false;
    return false;
  }
  lu_ = std::move(lu);
  return true;
}

Eigen::VectorXd DualSimplex::solve_basis(const Eigen::VectorXd& v) const {
  const int nk = structural_basic_;
  Eigen::VectorXd z(m_);
  std::vector<double> acc;
  if (nk > 0) {
    Eigen::VectorXd rhs(nk);
    for (int t = 0; t < nk; ++t) rhs[t] = v[kernel_rows_[t]];
    const Eigen::VectorXd zs = lu_->solve(rhs);
    acc.assign(m_, 0.0);
    for (int p = 0; p < nk; ++p) {
      z[p] = zs[p];
      if (zs[p] == 0.0) continue;
      const int j = factor_head_[p];
      for (int k = cs_[j]; k < cs_[j + 1]; ++k) acc[ci_[k]] += cv_[k] * zs[p];
    }
  }
  for (int p = nk; p < m_; ++p) {
    const int i = factor_head_[p] - n_;
    z[p] = (nk > 0 ? acc[i] : 0.0) - v[i];
  }
  return z;
}

Eigen::VectorXd DualSimplex::solve_basis_transpose(const Eigen::VectorXd& c) const {
  const int nk = structural_basic_;
  Eigen::VectorXd y = Eigen::VectorXd::Zero(m_);
  for (int p = nk; p < m_; ++p) y[factor_head_[p] - n_] = -c[p];
  if (nk > 0) {
    Eigen::VectorXd rhs(nk);
    for (int p = 0; p < nk; ++p) {
      const int j = factor_head_[p];
      double s = c[p];
      for (int k = cs_[j]; k < cs_[j + 1]; ++k)
        if (kernel_of_row_[ci_[k]] < 0) s -= cv_[k] * y[ci_[k]];
      rhs[p] = s;
    }
    const Eigen::VectorXd yr = lu_->transpose().solve(rhs);
    for (int t = 0; t < nk; ++t) y[kernel_rows_[t]] = yr[t];
  }
  return y;
}

Eigen::VectorXd DualSimplex::ftran(Eigen::VectorXd v) const {
  if (m_ == 0) return v;
  Eigen::VectorXd z = solve_basis(v);
  for (const Eta& e : etas_) {
    const double zr = z[e.r] / e.pivot;
    if (zr != 0.0)
      for (std::size_t k = 0; k < e.idx.size(); ++k) z[e.idx[k]] -= e.val[k] * zr;
    z[e.r] = zr;
  }
  return z;
}

Eigen::VectorXd DualSimplex::btran(Eigen::VectorXd v) const {
  if (m_ == 0) return v;
  for (auto it = etas_.rbegin(); it != etas_.rend(); ++it) {
    double s = v[it->r];
    for (std::size_t k = 0; k < it->idx.size(); ++k) s -= it->val[k] * v[it->idx[k]];
    v[it->r] = s / it->pivot;
  }
  return solve_basis_transpose(v);
}

void DualSimplex::add_column(Eigen::VectorXd& v, int j, double scale) const {
  if (j >= n_) {
    v[j - n_] -= scale;
    return;
  }
  for (int k = cs_[j]; k < cs_[j + 1]; ++k) v[ci_[k]] += cv_[k] * scale;
}

double DualSimplex::dot_column(const Eigen::VectorXd& y, int j) const {
  if (j >= n_) return -y[j - n_];
  double s = 0.0;
  for (int k = cs_[j]; k < cs_[j + 1]; ++k) s += y[ci_[k]] * cv_[k];
  return s;
}

void DualSimplex::compute_primal() {
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m_);
  for (int j = 0; j < total_; ++j)
    if (status_[j] != BasisStatus::basic && x_[j] != 0.0) add_column(rhs, j, -x_[j]);
  const Eigen::VectorXd xb = ftran(rhs);
  for (int p = 0; p < m_; ++p) x_[head_[p]] = xb[p];
}

void DualSimplex::compute_duals() {
  Eigen::VectorXd cb(m_);
  for (int p = 0; p < m_; ++p) cb[p] = cost_[head_[p]];
  const Eigen::VectorXd y = btran(cb);
  for (int j = 0; j < total_; ++j)
    d_[j] = status_[j] == BasisStatus::basic ? 0.0 : cost_[j] - dot_column(y, j);
}

bool DualSimplex::repair_dual_infeasibility() {
  bool flipped = false;
  for (int j = 0; j < total_; ++j) {
    if (status_[j] == BasisStatus::basic || is_fixed(j)) continue;
    if (status_[j] == BasisStatus::at_lower && d_[j] < -opt_.dual_tolerance) {
      if (!std::isfinite(ub_[j])) make_artificial(j, true);
      status_[j] = BasisStatus::at_upper;
      x_[j] = ub_[j];
      flipped = true;
    } else if (status_[j] == BasisStatus::at_upper && d_[j] > opt_.dual_tolerance) {
      if (!std::isfinite(lb_[j])) make_artificial(j, false);
      status_[j] = BasisStatus::at_lower;
      x_[j] = lb_[j];
      flipped = true;
    }
  }
  return flipped;
}

void DualSimplex::refresh() {
  if (!refactor()) {
    slack_basis();
    refactor();
  }
  compute_duals();
  repair_dual_infeasibility();
  compute_primal();
}

bool DualSimplex::enlarge_box() {
  if (big_ >= 1e15) return false;
  const double old = big_;
  big_ *= 100.0;
  for (int j = 0; j < total_; ++j) {
    if (art_lo_[j]) lb_[j] -= big_ - old;
    if (art_up_[j]) ub_[j] += big_ - old;
    if (status_[j] == BasisStatus::at_lower) x_[j] = lb_[j];
    if (status_[j] == BasisStatus::at_upper) x_[j] = ub_[j];
  }
  compute_primal();
  return true;
}

DualSimplex::Outcome DualSimplex::iterate() {
  const double tol_p = opt_.primal_tolerance;
  const double tol_d = opt_.dual_tolerance;
  constexpr double kPivotTol = 1e-9;
  std::vector<double> alpha(total_, 0.0);
  std::vector<char> marked(total_, 0);
  std::vector<int> touched;

  while (true) {
    if (static_cast<int>(etas_.size()) >= opt_.refactor_interval) refresh();

    // Pricing: dual steepest edge, or lowest variable index in Bland mode.
    const bool bland = degenerate_run_ > 50;
    int r = -1;
    double best = 0.0;
    for (int p = 0; p < m_; ++p) {
      const int j = head_[p];
      double infeas = 0.0;
      if (x_[j] < lb_[j] - tol_p)
        infeas = lb_[j] - x_[j];
      else if (x_[j] > ub_[j] + tol_p)
        infeas = x_[j] - ub_[j];
      if (infeas <= 0.0) continue;
      if (bland) {
        if (r < 0 || j < head_[r]) r = p;
      } else {
        const double score = infeas * infeas / w_[p];
        if (score > best) {
          best = score;
          r = p;
        }
      }
    }

    if (r < 0) {
      if (!etas_.empty()) {
        refresh();
        continue;
      }
      compute_duals();
      if (repair_dual_infeasibility()) {
        compute_primal();
        continue;
      }
      bool box_binding = false;
      for (int j = 0; j < total_; ++j)
        if (status_[j] != BasisStatus::basic && artificial_at_bound(j) && std::abs(d_[j]) > tol_d)
          box_binding = true;
      if (box_binding) {
        if (!enlarge_box()) return Outcome::unbounded;
        continue;
      }
      return Outcome::optimal;
    }

    if (iterations_ >= max_iterations_) throw IterationLimitExceeded(iterations_);
    ++iterations_;

    const int leave = head_[r];
    const bool to_lower = x_[leave] < lb_[leave];
    const double delta = to_lower ? lb_[leave] - x_[leave] : x_[leave] - ub_[leave];

    Eigen::VectorXd er = Eigen::VectorXd::Zero(m_);
    er[r] = 1.0;
    const Eigen::VectorXd rho = btran(er);

    for (int j : touched) {
      alpha[j] = 0.0;
      marked[j] = 0;
    }
    touched.clear();
    for (int i = 0; i < m_; ++i) {
      const double ri = rho[i];
      if (std::abs(ri) < 1e-14) continue;
      for (int k = rs_[i]; k < rs_[i + 1]; ++k) {
        const int j = rj_[k];
        if (!marked[j]) {
          marked[j] = 1;
          touched.push_back(j);
        }
        alpha[j] += ri * rv_[k];
      }
      alpha[n_ + i] = -ri;
      marked[n_ + i] = 1;
      touched.push_back(n_ + i);
    }

    struct Cand {
      int j;
      double ratio;
      double abar;
    };
    std::vector<Cand> cands;
    for (int j : touched) {
      if (status_[j] == BasisStatus::basic || is_fixed(j)) continue;
      const double abar = to_lower ? -alpha[j] : alpha[j];
      if (status_[j] == BasisStatus::at_lower && abar > kPivotTol)
        cands.push_back({j, std::max(d_[j], 0.0) / abar, abar});
      else if (status_[j] == BasisStatus::at_upper && abar < -kPivotTol)
        cands.push_back({j, std::max(-d_[j], 0.0) / -abar, abar});
    }
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
      return a.ratio != b.ratio ? a.ratio < b.ratio : a.j < b.j;
    });

    std::vector<int> flips;
    std::size_t k = 0;
    if (!bland) {
      double slope = delta;
      while (k < cands.size()) {
        const int j = cands[k].j;
        if (art_lo_[j] || art_up_[j] || !std::isfinite(ub_[j] - lb_[j])) break;
        const double next = slope - std::abs(cands[k].abar) * (ub_[j] - lb_[j]);
        // Stop one short when the flips would only just cover the infeasibility,
        // so a boundary-feasible row is pivoted on rather than declared a ray.
        if (next <= tol_p) break;
        slope = next;
        flips.push_back(j);
        ++k;
      }
    }
    if (k == cands.size()) {
      bool artificial_involved = false;
      for (int j : touched)
        if (status_[j] != BasisStatus::basic && artificial_at_bound(j) && std::abs(alpha[j]) > kPivotTol)
          artificial_involved = true;
      if (artificial_involved && enlarge_box()) continue;
      if (!etas_.empty()) {
        refresh();
        continue;
      }
      farkas_rows_.clear();
      for (int i = 0; i < m_; ++i)
        if (std::abs(rho[i]) > 1e-9) farkas_rows_.push_back(i);
      last_rho_ = rho;
      return Outcome::infeasible;
    }

    std::size_t chosen = k;
    if (bland) {
      for (std::size_t c = k + 1; c < cands.size() && cands[c].ratio == cands[k].ratio; ++c)
        if (cands[c].j < cands[chosen].j) chosen = c;
    } else {
      double theta_max = kInf;
      for (std::size_t c = k; c < cands.size(); ++c) {
        const int j = cands[c].j;
        const double dj = cands[c].abar > 0 ? std::max(d_[j], 0.0) : std::max(-d_[j], 0.0);
        theta_max = std::min(theta_max, (dj + tol_d) / std::abs(cands[c].abar));
      }
      for (std::size_t c = k; c < cands.size() && cands[c].ratio <= theta_max; ++c)
        if (std::abs(cands[c].abar) > std::abs(cands[chosen].abar)) chosen = c;
    }
    const int q = cands[chosen].j;
    const double t = cands[chosen].ratio;

    Eigen::VectorXd aq = Eigen::VectorXd::Zero(m_);
    add_column(aq, q, 1.0);
    const Eigen::VectorXd col = ftran(aq);
    if (std::abs(col[r] - alpha[q]) > 1e-7 * (1.0 + std::abs(col[r])) && !etas_.empty()) {
      refresh();
      continue;
    }
    if (std::abs(col[r]) < 1e-11) {
      refresh();
      continue;
    }
    degenerate_run_ = t <= 1e-12 ? degenerate_run_ + 1 : 0;

    const Eigen::VectorXd tau = ftran(rho);
    const double wr = rho.squaredNorm();

    const double theta_d = to_lower ? -t : t;
    if (theta_d != 0.0)
      for (int j : touched)
        if (status_[j] != BasisStatus::basic) d_[j] -= theta_d * alpha[j];

    if (!flips.empty()) {
      Eigen::VectorXd v = Eigen::VectorXd::Zero(m_);
      for (int j : flips) {
        const double old = x_[j];
        if (status_[j] == BasisStatus::at_lower) {
          status_[j] = BasisStatus::at_upper;
          x_[j] = ub_[j];
        } else {
          status_[j] = BasisStatus::at_lower;
          x_[j] = lb_[j];
        }
        add_column(v, j, x_[j] - old);
      }
      const Eigen::VectorXd dx = ftran(v);
      for (int p = 0; p < m_; ++p) x_[head_[p]] -= dx[p];
    }

    const double target = to_lower ? lb_[leave] : ub_[leave];
    const double theta_p = (x_[leave] - target) / col[r];
    for (int p = 0; p < m_; ++p) x_[head_[p]] -= theta_p * col[p];
    x_[q] += theta_p;
    x_[leave] = target;

    const double pr = col[r];
    for (int p = 0; p < m_; ++p) {
      if (p == r || col[p] == 0.0) continue;
      const double ratio = col[p] / pr;
      w_[p] = std::max(w_[p] - 2.0 * ratio * tau[p] + ratio * ratio * wr, 1e-8);
    }
    w_[r] = std::max(wr / (pr * pr), 1e-8);

    Eta eta;
    eta.r = r;
    eta.pivot = pr;
    for (int p = 0; p < m_; ++p)
      if (p != r && std::abs(col[p]) > 1e-14) {
        eta.idx.push_back(p);
        eta.val.push_back(col[p]);
      }
    etas_.push_back(std::move(eta));

    head_[r] = q;
    pos_[q] = r;
    pos_[leave] = -1;
    status_[q] = BasisStatus::basic;
    d_[q] = 0.0;
    status_[leave] = to_lower ? BasisStatus::at_lower : BasisStatus::at_upper;
    d_[leave] = -theta_d;
  }
}

LpSolution DualSimplex::finish(Outcome outcome) {
  LpSolution sol;
  sol.iterations = iterations_;
  sol.status = outcome == Outcome::optimal    ? LpStatus::optimal
               : outcome == Outcome::infeasible ? LpStatus::infeasible
                                                : LpStatus::unbounded;
  sol.primal.assign(x_.begin(), x_.begin() + n_);
  for (int j = 0; j < n_; ++j) sol.objective += cost_[j] * sol.primal[j];
  sol.row_activity.assign(m_, 0.0);
  for (int i = 0; i < m_; ++i)
    for (int k = rs_[i]; k < rs_[i + 1]; ++k) sol.row_activity[i] += rv_[k] * sol.primal[rj_[k]];

  if (m_ > 0 && factored_) {
    if (!etas_.empty()) refactor();
    Eigen::VectorXd cb(m_);
    for (int p = 0; p < m_; ++p) cb[p] = cost_[head_[p]];
    const Eigen::VectorXd y = btran(cb);
    sol.duals.assign(y.data(), y.data() + m_);
    sol.reduced_costs.resize(n_);
    for (int j = 0; j < n_; ++j) sol.reduced_costs[j] = cost_[j] - dot_column(y, j);
  } else {
    sol.duals.assign(m_, 0.0);
    sol.reduced_costs.assign(cost_.begin(), cost_.begin() + n_);
  }
  if (outcome == Outcome::infeasible) sol.infeasible_rows = farkas_rows_;

  std::vector<BasisStatus> vs(status_.begin(), status_.begin() + n_);
  std::vector<BasisStatus> rs(status_.begin() + n_, status_.end());
  lp_.set_basis(std::move(vs), std::move(rs));
  return sol;
}

LpSolution DualSimplex::run() {
  if (!(opt_.warm_start && load_warm_basis())) slack_basis();
  refresh();
  return finish(iterate());
}

void write_number(std::ostream& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out << buf;
}

}  // namespace

LpSolution solve_lp(LinearProgram& lp, const SolverOptions& options) {
  DualSimplex simplex(lp, options);
  return simplex.run();
}

void write_mps(const LinearProgram& lp, std::ostream& out, const std::string& name) {
  auto col_name = [&](int j) {
    const auto& n = lp.variable(j).name;
    return n.empty() ? "C" + std::to_string(j) : n;
  };
  auto row_name = [&](int i) {
    const auto& n = lp.constraint(i).name;
    return n.empty() ? "R" + std::to_string(i) : n;
  };
  const int n = lp.variable_count(), m = lp.constraint_count();

  out << "NAME " << name << "\nROWS\n N obj\n";
  for (int i = 0; i < m; ++i) {
    const char* type = "N";
    switch (lp.constraint(i).sense()) {
      case Sense::le: type = "L"; break;
      case Sense::ge: type = "G"; break;
      case Sense::eq: type = "E"; break;
      case Sense::range: type = "G"; break;
      case Sense::free: type = "N"; break;
    }
    out << ' ' << type << ' ' << row_name(i) << '\n';
  }

  std::vector<std::vector<std::pair<int, double>>> cols(n);
  for (int i = 0; i < m; ++i)
    for (const Term& t : lp.constraint(i).terms) cols[t.var.index].push_back({i, t.coef});
  out << "COLUMNS\n";
  for (int j = 0; j < n; ++j) {
    const std::string cname = col_name(j);
    if (lp.variable(j).cost != 0.0 || cols[j].empty()) {
      out << ' ' << cname << " obj ";
      write_number(out, lp.variable(j).cost);
      out << '\n';
    }
    for (auto [i, v] : cols[j]) {
      out << ' ' << cname << ' ' << row_name(i) << ' ';
      write_number(out, v);
      out << '\n';
    }
  }

  out << "RHS\n";
  for (int i = 0; i < m; ++i) {
    const auto& row = lp.constraint(i);
    double rhs = 0.0;
    switch (row.sense()) {
      case Sense::le: rhs = row.upper; break;
      case Sense::ge:
      case Sense::eq:
      case Sense::range: rhs = row.lower; break;
      case Sense::free: continue;
    }
    if (rhs == 0.0) continue;
    out << " rhs " << row_name(i) << ' ';
    write_number(out, rhs);
    out << '\n';
  }

  bool ranges_header = false;
  for (int i = 0; i < m; ++i) {
    const auto& row = lp.constraint(i);
    if (row.sense() != Sense::range) continue;
    if (!ranges_header) {
      out << "RANGES\n";
      ranges_header = true;
    }
    out << " rng " << row_name(i) << ' ';
    write_number(out, row.upper - row.lower);
    out << '\n';
  }

  out << "BOUNDS\n";
  for (int j = 0; j < n; ++j) {
    const auto& v = lp.variable(j);
    const std::string cname = col_name(j);
    auto line = [&](const char* type, double value, bool with_value) {
      out << ' ' << type << " bnd " << cname;
      if (with_value) {
        out << ' ';
        write_number(out, value);
      }
      out << '\n';
    };
    if (v.lower == v.upper) {
      line("FX", v.lower, true);
      continue;
    }
    if (!std::isfinite(v.lower) && !std::isfinite(v.upper)) {
      line("FR", 0.0, false);
      continue;
    }
    if (!std::isfinite(v.lower))
      line("MI", 0.0, false);
    else if (v.lower != 0.0)
      line("LO", v.lower, true);
    if (std::isfinite(v.upper))
      line("UP", v.upper, true);
  }
  out << "ENDATA\n";
}

}  // namespace pcscopf
