#include "pcscopf/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace pcscopf {

UnbalancedInjections::UnbalancedInjections(double residual_mw)
    : std::runtime_error([&] {
        std::ostringstream os;
        os << "injections are not balanced: residual " << residual_mw << " MW";
        return os.str();
      }()),
      residual_(residual_mw) {}

SparseFactor::SparseFactor(const SparseMatrix& matrix, std::atomic<std::size_t>* counter) : counter_(counter) {
  factorize(matrix);
}

void SparseFactor::factorize(const SparseMatrix& matrix) {
  if (matrix.rows() != matrix.cols()) throw SingularMatrix("matrix is not square");
  size_ = static_cast<int>(matrix.rows());
  auto lu = std::make_shared<Eigen::SimplicialLDLT<SparseMatrix>>();
  if (size_ == 0) {
    lu_ = std::move(lu);
    return;
  }
  SparseMatrix compressed = matrix;
  compressed.makeCompressed();
  lu->compute(compressed);
  if (lu->info() != Eigen::Success) throw SingularMatrix("sparse factorization failed: zero or negative pivot");
  // Numerical singularity shows up as a non-finite or inaccurate probe solve.
  const Eigen::VectorXd probe = Eigen::VectorXd::Ones(size_);
  const Eigen::VectorXd x = lu->solve(probe);
  const double scale = compressed.cwiseAbs().sum() / size_ * x.cwiseAbs().maxCoeff() + 1.0;
  if (!x.allFinite() || (compressed * x - probe).cwiseAbs().maxCoeff() > 1e-6 * scale)
    throw SingularMatrix("matrix is numerically singular");
  lu_ = std::move(lu);
}

Eigen::VectorXd SparseFactor::resolve(const Eigen::VectorXd& rhs) const {
  if (!lu_) throw std::logic_error("SparseFactor used before factorize");
  if (rhs.size() != size_) throw std::invalid_argument("rhs size mismatch");
  if (counter_) ++*counter_;
  if (size_ == 0) return rhs;
  return lu_->solve(rhs);
}

SparseMatrix assemble_reduced_susceptance(const Network& network, const std::vector<bool>& in_service,
                                          const std::vector<int>& index, int size) {
  std::vector<Eigen::Triplet<double, int>> t;
  t.reserve(network.branches.size() * 4);
  for (const auto& br : network.branches) {
    if (!in_service.empty() && !in_service[br.id]) continue;
    const double b = br.susceptance_pu();
    const int f = index[br.from_bus];
    const int o = index[br.to_bus];
    if (f >= 0) t.emplace_back(f, f, b);
    if (o >= 0) t.emplace_back(o, o, b);
    if (f >= 0 && o >= 0) {
      t.emplace_back(f, o, -b);
      t.emplace_back(o, f, -b);
    }
  }
  SparseMatrix h(size, size);
  h.setFromTriplets(t.begin(), t.end());
  h.makeCompressed();
  return h;
}

SystemMatrices::SystemMatrices(const Network& network, std::size_t column_cache_capacity)
    : network_(&network),
      bus_count_(network.bus_count()),
      reference_(network.reference_bus()),
      base_mva_(network.base_mva),
      capacity_(column_cache_capacity) {
  if (reference_ < 0) throw SingularMatrix("network has no reference bus");
  const int n = bus_count_;
  reduced_index_.assign(n, -1);
  for (int b = 0, r = 0; b < n; ++b) {
    if (b == reference_) continue;
    reduced_index_[b] = r++;
    reduced_bus_.push_back(b);
  }

  susceptance_.reserve(network.branches.size());
  std::vector<Eigen::Triplet<double, int>> inc;
  for (const auto& br : network.branches) {
    susceptance_.push_back(br.susceptance_pu());
    inc.emplace_back(br.id, br.from_bus, 1.0);
    inc.emplace_back(br.id, br.to_bus, -1.0);
  }
  incidence_.resize(network.branch_count(), n);
  incidence_.setFromTriplets(inc.begin(), inc.end());
  incidence_.makeCompressed();

  const auto seen = reachable_buses(network, reference_);
  std::vector<int> unreachable;
  for (int b = 0; b < n; ++b)
    if (!seen[b]) unreachable.push_back(b);
  if (!unreachable.empty()) {
    std::ostringstream os;
    os << "susceptance matrix is singular; buses unreachable from the reference:";
    for (int b : unreachable) os << ' ' << b;
    throw SingularMatrix(os.str(), unreachable);
  }

  h_ = assemble_reduced_susceptance(network, {}, reduced_index_, n - 1);
  lu_ = SparseFactor(h_, &solves_);
  zero_column_ = std::make_shared<const Vector>(n, 0.0);
}

SystemMatrices build_matrices(const Network& network) { return SystemMatrices(network); }

Vector SystemMatrices::solve_reduced(std::span<const double> injections_pu) const {
  if (static_cast<int>(injections_pu.size()) != bus_count_)
    throw std::invalid_argument("injection vector length must equal bus count");
  Eigen::VectorXd rhs(bus_count_ - 1);
  for (int r = 0; r < bus_count_ - 1; ++r) rhs[r] = injections_pu[reduced_bus_[r]];
  const Eigen::VectorXd x = lu_.resolve(rhs);
  Vector out(bus_count_, 0.0);
  for (int r = 0; r < bus_count_ - 1; ++r) out[reduced_bus_[r]] = x[r];
  return out;
}

Column SystemMatrices::inverse_column(int bus) const {
  if (bus < 0 || bus >= bus_count_) throw std::out_of_range("bus id out of range");
  if (bus == reference_) return zero_column_;

  std::promise<Column> promise;
  std::shared_future<Column> waiting;
  {
    std::lock_guard lock(cache_mutex_);
    if (auto it = cache_.find(bus); it != cache_.end()) {
      lru_order_.splice(lru_order_.begin(), lru_order_, it->second.lru);
      return it->second.column;
    }
    if (auto it = pending_.find(bus); it != pending_.end()) {
      waiting = it->second;
    } else {
      pending_.emplace(bus, promise.get_future().share());
    }
  }
  if (waiting.valid()) return waiting.get();

  Vector e(bus_count_, 0.0);
  e[bus] = 1.0;
  Column column;
  try {
    column = std::make_shared<const Vector>(solve_reduced(e));
  } catch (...) {
    std::lock_guard lock(cache_mutex_);
    pending_.erase(bus);
    promise.set_exception(std::current_exception());
    throw;
  }
  {
    std::lock_guard lock(cache_mutex_);
    pending_.erase(bus);
    lru_order_.push_front(bus);
    cache_.emplace(bus, CacheEntry{column, lru_order_.begin()});
    if (capacity_ > 0) {
      while (cache_.size() > capacity_) {
        cache_.erase(lru_order_.back());
        lru_order_.pop_back();
      }
    }
    std::size_t peak = peak_cached_.load();
    while (cache_.size() > peak && !peak_cached_.compare_exchange_weak(peak, cache_.size())) {
    }
  }
  promise.set_value(column);
  return column;
}

std::size_t SystemMatrices::cached_columns() const {
  std::lock_guard lock(cache_mutex_);
  return cache_.size();
}

std::shared_ptr<const IslandInverse> SystemMatrices::island_inverse(const std::vector<int>& isolated) const {
  {
    std::lock_guard lock(island_mutex_);
    if (auto it = islands_.find(isolated); it != islands_.end()) return it->second;
  }
  auto built = std::make_shared<const IslandInverse>(*this, isolated);
  std::lock_guard lock(island_mutex_);
  return islands_.emplace(isolated, std::move(built)).first->second;
}

IslandInverse::IslandInverse(const SystemMatrices& m, std::vector<int> isolated)
    : m_(&m), isolated_(std::move(isolated)), mask_(m.bus_count(), false) {
  std::sort(isolated_.begin(), isolated_.end());
  for (int b : isolated_) {
    if (b < 0 || b >= m.bus_count()) throw std::out_of_range("isolated bus out of range");
    if (b == m.reference_bus()) throw std::invalid_argument("reference bus cannot be isolated");
    mask_[b] = true;
  }
  const std::size_t k = isolated_.size();
  if (k <= kSchurLimit) {
    for (int b : isolated_) isolated_columns_.push_back(m.inverse_column(b));
    Eigen::MatrixXd xii(k, k);
    for (std::size_t p = 0; p < k; ++p)
      for (std::size_t q = 0; q < k; ++q) xii(p, q) = (*isolated_columns_[q])[isolated_[p]];
    schur_ = xii.llt().solve(Eigen::MatrixXd::Identity(k, k));
  } else {
    const int n = m.bus_count();
    direct_index_.assign(n, -1);
    int size = 0;
    for (int b = 0; b < n; ++b)
      if (b != m.reference_bus() && !mask_[b]) direct_index_[b] = size++;
    direct_.emplace(assemble_reduced_susceptance(m.network(), {}, direct_index_, size),
                    &m.solve_counter());
  }
}

Vector IslandInverse::project(Vector z) const {
  if (!isolated_.empty()) {
    const std::size_t k = isolated_.size();
    Eigen::VectorXd zi(k);
    for (std::size_t p = 0; p < k; ++p) zi[p] = z[isolated_[p]];
    const Eigen::VectorXd coef = schur_ * zi;
    for (std::size_t p = 0; p < k; ++p) {
      const Vector& col = *isolated_columns_[p];
      const double c = coef[p];
      if (c == 0.0) continue;
      for (std::size_t i = 0; i < z.size(); ++i) z[i] -= col[i] * c;
    }
  }
  for (int b : isolated_) z[b] = 0.0;
  z[m_->reference_bus()] = 0.0;
  return z;
}

Vector IslandInverse::column(int bus) const {
  if (mask_[bus] || bus == m_->reference_bus()) return Vector(m_->bus_count(), 0.0);
  if (direct_) {
    Vector e(m_->bus_count(), 0.0);
    e[bus] = 1.0;
    return solve(e);
  }
  return project(*m_->inverse_column(bus));
}

Vector IslandInverse::solve(std::span<const double> injections_pu) const {
  const int n = m_->bus_count();
  if (direct_) {
    Eigen::VectorXd rhs(direct_->size());
    for (int b = 0; b < n; ++b)
      if (direct_index_[b] >= 0) rhs[direct_index_[b]] = injections_pu[b];
    const Eigen::VectorXd x = direct_->resolve(rhs);
    Vector out(n, 0.0);
    for (int b = 0; b < n; ++b)
      if (direct_index_[b] >= 0) out[b] = x[direct_index_[b]];
    return out;
  }
  Vector masked(injections_pu.begin(), injections_pu.end());
  for (int b : isolated_) masked[b] = 0.0;
  return project(m_->solve_reduced(masked));
}

Vector IslandInverse::from_base_theta(std::span<const double> theta0) const {
  if (direct_) throw std::logic_error("from_base_theta needs the Schur representation");
  return project(Vector(theta0.begin(), theta0.end()));
}

double balance_tolerance(std::span<const double> injections_mw, const LinalgTolerances& tol) {
  double scale = 0.0;
  for (double v : injections_mw) scale += std::abs(v);
  return std::max(tol.balance_mw, 1e-10 * scale);
}

Vector solve_angles(const SystemMatrices& m, std::span<const double> injections_mw,
                    const LinalgTolerances& tol) {
  const double sum = std::accumulate(injections_mw.begin(), injections_mw.end(), 0.0);
  if (std::abs(sum) > balance_tolerance(injections_mw, tol)) throw UnbalancedInjections(sum);
  Vector pu(injections_mw.begin(), injections_mw.end());
  for (double& v : pu) v /= m.base_mva();
  return m.solve_reduced(pu);
}

Vector base_flows(const SystemMatrices& m, std::span<const double> theta) {
  const Network& net = m.network();
  Vector flows(net.branches.size());
  for (const auto& br : net.branches)
    flows[br.id] = m.branch_susceptance()[br.id] * (theta[br.from_bus] - theta[br.to_bus]) * m.base_mva();
  return flows;
}

Vector ptdf_row(const SystemMatrices& m, int branch) {
  const Branch& br = m.network().branches.at(branch);
  const Column xf = m.inverse_column(br.from_bus);
  const Column xt = m.inverse_column(br.to_bus);
  const double b = m.branch_susceptance()[branch];
  Vector row(m.bus_count());
  for (int i = 0; i < m.bus_count(); ++i) row[i] = b * ((*xf)[i] - (*xt)[i]);
  row[m.reference_bus()] = 0.0;
  return row;
}

Vector bus_injections_mw(const Network& network, std::span<const double> generation_mw,
                         std::span<const double> served_demand_mw) {
  Vector p(network.bus_count(), 0.0);
  for (const auto& g : network.generators) p[g.bus] += generation_mw[g.id];
  for (const auto& d : network.demands) p[d.bus] -= served_demand_mw[d.id];
  return p;
}

}  // namespace pcscopf
