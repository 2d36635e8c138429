#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <Eigen/SparseCholesky>

#include <atomic>
#include <future>
#include <cstddef>
#include <list>
#include <memory>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "pcscopf/network.hpp"

namespace pcscopf {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;
using Vector = std::vector<double>;
/// Shared, immutable column of X = H^-1 (reference-extended, per unit).
using Column = std::shared_ptr<const Vector>;

class SingularMatrix : public std::runtime_error {
 public:
  explicit SingularMatrix(const std::string& what, std::vector<int> buses = {})
      : std::runtime_error(what), buses_(std::move(buses)) {}
  /// Buses implicated by the failure (e.g. unreachable from the reference).
  const std::vector<int>& buses() const { return buses_; }

 private:
  std::vector<int> buses_;
};

class UnbalancedInjections : public std::runtime_error {
 public:
  UnbalancedInjections(double residual_mw);
  double residual_mw() const { return residual_; }

 private:
  double residual_;
};

struct LinalgTolerances {
  double residual = 1e-10;
  double inverse_column = 1e-9;
  double ptdf = 1e-8;
  double balance_mw = 1e-6;
};

/// Reusable sparse LDL^T factorization of a symmetric positive definite
/// matrix (every reduced susceptance matrix of a connected grid is one).
/// Solve count is shared with the owner through `counter` when one is supplied.
class SparseFactor {
 public:
  SparseFactor() = default;
  explicit SparseFactor(const SparseMatrix& matrix, std::atomic<std::size_t>* counter = nullptr);

  void factorize(const SparseMatrix& matrix);
  Eigen::VectorXd resolve(const Eigen::VectorXd& rhs) const;
  int size() const { return size_; }

 private:
  std::shared_ptr<Eigen::SimplicialLDLT<SparseMatrix>> lu_;
  std::atomic<std::size_t>* counter_ = nullptr;
  int size_ = 0;
};

/// DC power-flow matrices of a connected network. Bus-indexed vectors have
/// length N and carry 0 at the reference position; the reduced system drops
/// the reference row and column.
class IslandInverse;

class SystemMatrices {
 public:
  /// `column_cache_capacity` of 0 keeps every requested column of X.
  explicit SystemMatrices(const Network& network, std::size_t column_cache_capacity = 0);

  const Network& network() const { return *network_; }
  int bus_count() const { return bus_count_; }
  int branch_count() const { return static_cast<int>(susceptance_.size()); }
  int reference_bus() const { return reference_; }
  double base_mva() const { return base_mva_; }

  /// Position of `bus` in the reduced system, -1 for the reference.
  int reduced_index(int bus) const { return reduced_index_[bus]; }
  int bus_of_reduced(int r) const { return reduced_bus_[r]; }

  const SparseMatrix& reduced_susceptance() const { return h_; }
  /// B x N incidence: +1 at from_bus, -1 at to_bus.
  const SparseMatrix& incidence() const { return incidence_; }
  /// Per-branch 1/x in per unit.
  const Vector& branch_susceptance() const { return susceptance_; }
  const SparseFactor& lu() const { return lu_; }

  /// X[:, bus], computed once and cached. Reference column is all zeros and
  /// never triggers a solve.
  Column inverse_column(int bus) const;

  /// Solves H * theta = P for a bus-indexed per-unit vector; the reference
  /// entry of `injections_pu` is ignored and the result has 0 there.
  Vector solve_reduced(std::span<const double> injections_pu) const;

  std::size_t solve_count() const { return solves_.load(); }
  std::size_t cached_columns() const;
  std::size_t peak_cached_columns() const { return peak_cached_.load(); }
  std::size_t column_cache_capacity() const { return capacity_; }

  std::atomic<std::size_t>& solve_counter() const { return solves_; }

  /// Inverse of H with the `isolated` buses cut off, cached per bus set.
  std::shared_ptr<const IslandInverse> island_inverse(const std::vector<int>& isolated) const;

 private:
  struct CacheEntry {
    Column column;
    std::list<int>::iterator lru;
  };

  const Network* network_;
  int bus_count_ = 0;
  int reference_ = -1;
  double base_mva_ = 100.0;
  std::vector<int> reduced_index_;
  std::vector<int> reduced_bus_;
  SparseMatrix h_;
  SparseMatrix incidence_;
  Vector susceptance_;
  mutable std::atomic<std::size_t> solves_{0};
  SparseFactor lu_;

  std::size_t capacity_ = 0;
  mutable std::mutex cache_mutex_;
  mutable std::unordered_map<int, CacheEntry> cache_;
  mutable std::list<int> lru_order_;
  mutable std::unordered_map<int, std::shared_future<Column>> pending_;
  Column zero_column_;
  mutable std::atomic<std::size_t> peak_cached_{0};

  mutable std::mutex island_mutex_;
  mutable std::map<std::vector<int>, std::shared_ptr<const IslandInverse>> islands_;
};

/// X' = inverse of the reduced susceptance matrix with the rows and columns
/// of a cut-off bus set removed. The bridge branch still contributes to the
/// surviving diagonal, so X' is the starting point for the rank-one removal
/// of that bridge. Small sets use the Schur complement of the cached base
/// columns; large ones factorize the surviving matrix directly.
class IslandInverse {
 public:
  static constexpr std::size_t kSchurLimit = 64;

  IslandInverse(const SystemMatrices& m, std::vector<int> isolated);

  const std::vector<int>& isolated() const { return isolated_; }
  bool is_isolated(int bus) const { return mask_[bus]; }
  const std::vector<bool>& mask() const { return mask_; }

  /// X'[:, bus]; zero at the reference and at isolated buses.
  Vector column(int bus) const;
  /// X' * P (one solve-equivalent). Isolated entries of P are ignored.
  Vector solve(std::span<const double> injections_pu) const;
  /// X' * P_S from theta0 = X * P without a solve. Whatever P holds on the
  /// isolated buses drops out of the projection.
  Vector from_base_theta(std::span<const double> theta0) const;

 private:
  Vector project(Vector z) const;

  const SystemMatrices* m_;
  std::vector<int> isolated_;
  std::vector<bool> mask_;
  std::vector<Column> isolated_columns_;
  Eigen::MatrixXd schur_;  // (X_II)^-1
  std::optional<SparseFactor> direct_;
  std::vector<int> direct_index_;
};

SystemMatrices build_matrices(const Network& network);

/// Assembles the reduced susceptance matrix for the branches flagged in
/// `in_service` restricted to the buses flagged in `keep_bus`; `index` maps
/// bus id to its row (-1 if dropped).
SparseMatrix assemble_reduced_susceptance(const Network& network, const std::vector<bool>& in_service,
                                          const std::vector<int>& index, int size);

/// Allowed |sum of injections|: balance_mw, or 1e-10 of the total absolute
/// injection when that is larger (LP dispatches carry relative roundoff).
double balance_tolerance(std::span<const double> injections_mw, const LinalgTolerances& tol = {});

/// theta (radians, bus-indexed) for balanced MW injections.
Vector solve_angles(const SystemMatrices& m, std::span<const double> injections_mw,
                    const LinalgTolerances& tol = {});

/// Per-branch MW flow for bus angles in radians.
Vector base_flows(const SystemMatrices& m, std::span<const double> theta);

/// Row of the PTDF matrix (MW per MW), built from two cached columns of X.
Vector ptdf_row(const SystemMatrices& m, int branch);

/// Convenience: MW injection vector per bus from generator outputs and
/// served demand.
Vector bus_injections_mw(const Network& network, std::span<const double> generation_mw,
                         std::span<const double> served_demand_mw);

}  // namespace pcscopf
