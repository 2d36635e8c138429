#pragma once

// Vertex enumeration for tiny LPs: every basic solution is the intersection
// of n active constraints chosen from the row bounds and variable bounds.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <optional>
#include <vector>

namespace oracle {

struct DenseLp {
  int n = 0;
  std::vector<double> cost, lower, upper;  // variable data, finite bounds only
  std::vector<std::vector<double>> rows;
  std::vector<double> row_lower, row_upper;  // may be +-inf
};

struct VertexOptimum {
  double objective;
  std::vector<double> x;
};

inline bool feasible(const DenseLp& lp, const std::vector<double>& x, double tol = 1e-7) {
  for (int j = 0; j < lp.n; ++j)
    if (x[j] < lp.lower[j] - tol || x[j] > lp.upper[j] + tol) return false;
  for (std::size_t i = 0; i < lp.rows.size(); ++i) {
    double a = 0.0;
    for (int j = 0; j < lp.n; ++j) a += lp.rows[i][j] * x[j];
    if (a < lp.row_lower[i] - tol || a > lp.row_upper[i] + tol) return false;
  }
  return true;
}

/// Minimum over all feasible vertices; nullopt when none exists.
inline std::optional<VertexOptimum> brute_force(const DenseLp& lp) {
  struct Hyper {
    std::vector<double> a;
    double b;
  };
  std::vector<Hyper> planes;
  for (int j = 0; j < lp.n; ++j) {
    std::vector<double> e(lp.n, 0.0);
    e[j] = 1.0;
    planes.push_back({e, lp.lower[j]});
    if (lp.upper[j] != lp.lower[j]) planes.push_back({e, lp.upper[j]});
  }
  for (std::size_t i = 0; i < lp.rows.size(); ++i) {
    if (std::isfinite(lp.row_lower[i])) planes.push_back({lp.rows[i], lp.row_lower[i]});
    if (std::isfinite(lp.row_upper[i]) && lp.row_upper[i] != lp.row_lower[i])
      planes.push_back({lp.rows[i], lp.row_upper[i]});
  }
  const int p = static_cast<int>(planes.size());
  std::optional<VertexOptimum> best;
  std::vector<int> pick(lp.n);
  // Iterate over all n-subsets of the planes.
  std::vector<int> idx(lp.n);
  for (int k = 0; k < lp.n; ++k) idx[k] = k;
  if (lp.n > p) return best;
  while (true) {
    Eigen::MatrixXd a(lp.n, lp.n);
    Eigen::VectorXd b(lp.n);
    for (int r = 0; r < lp.n; ++r) {
      for (int c = 0; c < lp.n; ++c) a(r, c) = planes[idx[r]].a[c];
      b[r] = planes[idx[r]].b;
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
    if (lu.rank() == lp.n) {
      const Eigen::VectorXd x = lu.solve(b);
      std::vector<double> xv(x.data(), x.data() + lp.n);
      if (feasible(lp, xv)) {
        double obj = 0.0;
        for (int j = 0; j < lp.n; ++j) obj += lp.cost[j] * xv[j];
        if (!best || obj < best->objective) best = VertexOptimum{obj, xv};
      }
    }
    int k = lp.n - 1;
    while (k >= 0 && idx[k] == p - lp.n + k) --k;
    if (k < 0) break;
    ++idx[k];
    for (int r = k + 1; r < lp.n; ++r) idx[r] = idx[r - 1] + 1;
  }
  return best;
}

}  // namespace oracle
