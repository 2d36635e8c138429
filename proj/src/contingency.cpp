#include "pcscopf/contingency.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <thread>

namespace pcscopf {

SingularUpdate::SingularUpdate(int branch, double denominator)
    : std::runtime_error([&] {
        std::ostringstream os;
        os << "rank-one update for branch " << branch << " is singular (denominator " << denominator
           << "); the outage separates the grid but was classified as connected";
        return os.str();
      }()),
      branch_(branch),
      denominator_(denominator) {}

namespace {

std::vector<std::vector<std::pair<int, int>>> adjacency(const Network& network) {
  std::vector<std::vector<std::pair<int, int>>> adj(network.bus_count());
  for (const auto& br : network.branches) {
    adj[br.from_bus].push_back({br.to_bus, br.id});
    adj[br.to_bus].push_back({br.from_bus, br.id});
  }
  return adj;
}

}  // namespace

std::vector<IslandInfo> classify_islanding(const Network& network) {
  const int n = network.bus_count();
  std::vector<IslandInfo> out(network.branches.size());
  const int root = network.reference_bus();
  if (n == 0 || root < 0) return out;

  const auto adj = adjacency(network);
  std::vector<int> tin(n, -1), low(n, 0), tout(n, 0), order;
  order.reserve(n);
  struct Frame {
    int bus;
    int parent_edge;
    std::size_t next;
  };
  std::vector<Frame> stack{{root, -1, 0}};
  tin[root] = low[root] = 0;
  order.push_back(root);
  std::vector<std::pair<int, int>> bridges;  // (branch, child bus)

  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next < adj[f.bus].size()) {
      auto [next, edge] = adj[f.bus][f.next++];
      if (edge == f.parent_edge) continue;
      if (tin[next] >= 0) {
        low[f.bus] = std::min(low[f.bus], tin[next]);
      } else {
        tin[next] = low[next] = static_cast<int>(order.size());
        order.push_back(next);
        stack.push_back({next, edge, 0});
      }
      continue;
    }
    const Frame done = f;
    stack.pop_back();
    tout[done.bus] = static_cast<int>(order.size());
    if (!stack.empty()) {
      const int parent = stack.back().bus;
      low[parent] = std::min(low[parent], low[done.bus]);
      if (low[done.bus] > tin[parent]) bridges.push_back({done.parent_edge, done.bus});
    }
  }

  for (auto [edge, child] : bridges) {
    IslandInfo& info = out[edge];
    info.kind = IslandKind::radial_isolation;
    info.isolated_buses.assign(order.begin() + tin[child], order.begin() + tout[child]);
    std::sort(info.isolated_buses.begin(), info.isolated_buses.end());
  }
  return out;
}

IslandInfo detect_islanding(const Network& network, std::span<const int> branches) {
  std::vector<bool> removed(network.branches.size(), false);
  for (int l : branches) removed.at(l) = true;
  const int root = network.reference_bus();
  const auto seen = reachable_buses(network, root, removed);
  IslandInfo info;
  std::vector<int> cut_off;
  for (int b = 0; b < network.bus_count(); ++b)
    if (!seen[b]) cut_off.push_back(b);
  if (cut_off.empty()) return info;
  if (branches.size() == 1) {
    info.kind = IslandKind::radial_isolation;
    info.isolated_buses = std::move(cut_off);
  } else {
    info.kind = IslandKind::multi_split;
  }
  return info;
}

IslandInfo detect_islanding(const Network& network, int branch) {
  const int one[] = {branch};
  return detect_islanding(network, std::span<const int>(one));
}

BaseCase BaseCase::from_injections(const SystemMatrices& m, std::span<const double> injections_mw) {
  BaseCase base;
  base.theta = solve_angles(m, injections_mw);
  base.injections_pu.assign(injections_mw.begin(), injections_mw.end());
  for (double& v : base.injections_pu) v /= m.base_mva();
  return base;
}

namespace {

void require_supported(const Contingency& c) {
  if (c.island_info.kind == IslandKind::multi_split)
    throw UnsupportedContingency("contingency on branch " + std::to_string(c.outaged_branch) +
                                 " splits the grid into several parts; only radial isolation is supported");
}

// The surviving bus where the rank-one removal acts. For a connected outage
// the update vector is e_i - e_j; for a bridge only the surviving end remains.
struct UpdateVector {
  int plus = -1;
  int minus = -1;
};

UpdateVector update_vector(const SystemMatrices& m, const Contingency& c,
                           const IslandInverse* island) {
  const Branch& br = m.network().branches.at(c.outaged_branch);
  UpdateVector u{br.from_bus, br.to_bus};
  if (island) {
    if (island->is_isolated(u.plus)) u.plus = -1;
    if (island->is_isolated(u.minus)) u.minus = -1;
    if (u.plus < 0 && u.minus < 0)
      throw std::logic_error("outaged branch lies entirely inside its own island");
  }
  return u;
}

double component(const Vector& v, const UpdateVector& u) {
  double r = 0.0;
  if (u.plus >= 0) r += v[u.plus];
  if (u.minus >= 0) r -= v[u.minus];
  return r;
}

// Starting inverse for the update: the base X or the island-reduced X'.
struct StartInverse {
  const SystemMatrices* m;
  std::shared_ptr<const IslandInverse> island;

  Vector column(int bus) const {
    if (island) return island->column(bus);
    return *m->inverse_column(bus);
  }
};

StartInverse start_inverse(const SystemMatrices& m, const Contingency& c) {
  StartInverse s{&m, nullptr};
  if (c.is_island()) s.island = m.island_inverse(c.island_info.isolated_buses);
  return s;
}

Vector difference_column(const StartInverse& s, const UpdateVector& u) {
  Vector w(s.m->bus_count(), 0.0);
  if (u.plus >= 0) {
    const Vector col = s.column(u.plus);
    for (std::size_t i = 0; i < w.size(); ++i) w[i] += col[i];
  }
  if (u.minus >= 0) {
    const Vector col = s.column(u.minus);
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= col[i];
  }
  return w;
}

double update_denominator(const SystemMatrices& m, const Contingency& c, const Vector& w,
                          const UpdateVector& u) {
  const double x = m.network().branches[c.outaged_branch].reactance_pu;
  const double den = x - component(w, u);
  if (std::abs(den) < 1e-12 * x) throw SingularUpdate(c.outaged_branch, den);
  return den;
}

bool matches_base(const SystemMatrices& m, const BaseCase& base, std::span<const double> injections_mw,
                  const IslandInverse* island) {
  if (base.injections_pu.size() != injections_mw.size()) return false;
  for (int b = 0; b < m.bus_count(); ++b) {
    if (b == m.reference_bus() || (island && island->is_isolated(b))) continue;
    if (injections_mw[b] / m.base_mva() != base.injections_pu[b]) return false;
  }
  return true;
}

Vector to_pu(const SystemMatrices& m, std::span<const double> mw) {
  Vector pu(mw.begin(), mw.end());
  for (double& v : pu) v /= m.base_mva();
  return pu;
}

void check_injections(const SystemMatrices& m, const Contingency& c, std::span<const double> injections_mw) {
  if (static_cast<int>(injections_mw.size()) != m.bus_count())
    throw std::invalid_argument("injection vector length must equal bus count");
  double sum = 0.0;
  for (int b = 0; b < m.bus_count(); ++b) sum += injections_mw[b];
  const double tol = balance_tolerance(injections_mw);
  for (int b : c.island_info.isolated_buses) {
    if (std::abs(injections_mw[b]) > tol)
      throw std::invalid_argument("nonzero injection on isolated bus " + std::to_string(b));
    sum -= injections_mw[b];
  }
  if (std::abs(sum) > tol) throw UnbalancedInjections(sum);
}

}  // namespace

Vector method1_theta(const SystemMatrices& m, const Contingency& c, std::span<const double> injections_mw,
                     const BaseCase* base) {
  require_supported(c);
  check_injections(m, c, injections_mw);
  const StartInverse start = start_inverse(m, c);
  const IslandInverse* island = start.island.get();

  Vector theta;
  const bool schur = !island || island->isolated().size() <= IslandInverse::kSchurLimit;
  if (base && schur && matches_base(m, *base, injections_mw, island)) {
    theta = island ? island->from_base_theta(base->theta) : base->theta;
  } else {
    const Vector pu = to_pu(m, injections_mw);
    theta = island ? island->solve(pu) : m.solve_reduced(pu);
  }
  if (c.outaged_branch < 0) return theta;

  const UpdateVector u = update_vector(m, c, island);
  const Vector w = difference_column(start, u);
  const double den = update_denominator(m, c, w, u);
  const double scale = component(theta, u) / den;
  if (scale != 0.0)
    for (std::size_t i = 0; i < theta.size(); ++i) theta[i] += w[i] * scale;
  return theta;
}

Vector method3_ptdf_row(const SystemMatrices& m, const Contingency& c, int monitored) {
  require_supported(c);
  if (monitored == c.outaged_branch) throw std::invalid_argument("monitored branch is the outaged branch");
  const Branch& mon = m.network().branches.at(monitored);
  const StartInverse start = start_inverse(m, c);
  const IslandInverse* island = start.island.get();
  Vector row(m.bus_count(), 0.0);
  if (island && island->is_isolated(mon.from_bus) && island->is_isolated(mon.to_bus)) return row;

  const UpdateVector mu{mon.from_bus, mon.to_bus};
  const Vector base_diff = difference_column(start, mu);
  const double bm = m.branch_susceptance()[monitored];
  if (c.outaged_branch < 0) {
    for (std::size_t i = 0; i < row.size(); ++i) row[i] = bm * base_diff[i];
    return row;
  }
  const UpdateVector u = update_vector(m, c, island);
  const Vector w = difference_column(start, u);
  const double den = update_denominator(m, c, w, u);
  const double alpha = component(w, mu) / den;
  for (std::size_t i = 0; i < row.size(); ++i) row[i] = bm * (base_diff[i] + alpha * w[i]);
  row[m.reference_bus()] = 0.0;
  if (island)
    for (int b : island->isolated()) row[b] = 0.0;
  return row;
}

ContingencySystem::ContingencySystem(const SystemMatrices& m, const Contingency& c)
    : m_(&m), c_(c), isolated_(m.bus_count(), false), index_(m.bus_count(), -1) {
  for (int b : c.island_info.isolated_buses) isolated_[b] = true;
  if (c.island_info.kind == IslandKind::multi_split) {
    // The refactorized path copes with any separation; recover the cut-off
    // set by graph search.
    std::vector<bool> removed(m.network().branches.size(), false);
    removed[c.outaged_branch] = true;
    const auto seen = reachable_buses(m.network(), m.reference_bus(), removed);
    for (int b = 0; b < m.bus_count(); ++b) isolated_[b] = !seen[b];
  }
  int size = 0;
  for (int b = 0; b < m.bus_count(); ++b)
    if (b != m.reference_bus() && !isolated_[b]) index_[b] = size++;
  std::vector<bool> in_service(m.network().branches.size(), true);
  if (c.outaged_branch >= 0) in_service.at(c.outaged_branch) = false;
  lu_ = SparseFactor(assemble_reduced_susceptance(m.network(), in_service, index_, size), &m.solve_counter());
}

Vector ContingencySystem::theta(std::span<const double> injections_mw) const {
  if (static_cast<int>(injections_mw.size()) != m_->bus_count())
    throw std::invalid_argument("injection vector length must equal bus count");
  Eigen::VectorXd rhs(lu_.size());
  for (int b = 0; b < m_->bus_count(); ++b)
    if (index_[b] >= 0) rhs[index_[b]] = injections_mw[b] / m_->base_mva();
  const Eigen::VectorXd x = lu_.resolve(rhs);
  Vector theta(m_->bus_count(), 0.0);
  for (int b = 0; b < m_->bus_count(); ++b)
    if (index_[b] >= 0) theta[b] = x[index_[b]];
  return theta;
}

Vector ContingencySystem::ptdf_row(int monitored) const {
  if (monitored == c_.outaged_branch) throw std::invalid_argument("monitored branch is the outaged branch");
  const Branch& mon = m_->network().branches.at(monitored);
  Vector row(m_->bus_count(), 0.0);
  const int f = index_[mon.from_bus];
  const int t = index_[mon.to_bus];
  if (f < 0 && t < 0) return row;
  const double bm = m_->branch_susceptance()[monitored];
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(lu_.size());
  if (f >= 0) rhs[f] += bm;
  if (t >= 0) rhs[t] -= bm;
  // H^k is symmetric, so the row b_m (e_f - e_t)^T X^k is a single solve.
  const Eigen::VectorXd x = lu_.resolve(rhs);
  for (int b = 0; b < m_->bus_count(); ++b)
    if (index_[b] >= 0) row[b] = x[index_[b]];
  return row;
}

Vector method2_theta(const SystemMatrices& m, const Contingency& c, std::span<const double> injections_mw) {
  return ContingencySystem(m, c).theta(injections_mw);
}

Vector method4_ptdf_row(const SystemMatrices& m, const Contingency& c, int monitored) {
  return ContingencySystem(m, c).ptdf_row(monitored);
}

Vector contingency_branch_flows(const SystemMatrices& m, int outaged_branch, std::span<const double> theta) {
  Vector flows = base_flows(m, theta);
  if (outaged_branch >= 0) flows.at(outaged_branch) = 0.0;
  return flows;
}

ContingencyFlowResult contingency_flows(const SystemMatrices& m, const Contingency& c,
                                        std::span<const double> injections_mw, FlowMethod method,
                                        const BaseCase* base) {
  ContingencyFlowResult r;
  r.outaged_branch = c.outaged_branch;
  r.angles = method == FlowMethod::imml ? method1_theta(m, c, injections_mw, base)
                                        : method2_theta(m, c, injections_mw);
  r.flows_mw = contingency_branch_flows(m, c.outaged_branch, r.angles);
  const auto& branches = m.network().branches;
  r.overload_short.assign(branches.size(), 0.0);
  r.overload_long.assign(branches.size(), 0.0);
  for (const auto& br : branches) {
    const double f = std::abs(r.flows_mw[br.id]);
    r.overload_short[br.id] = std::max(f - br.limit_short_mw, 0.0);
    r.overload_long[br.id] = std::max(f - br.limit_long_mw, 0.0);
    r.max_overload_ratio_short = std::max(r.max_overload_ratio_short, f / br.limit_short_mw);
    r.max_overload_ratio_long = std::max(r.max_overload_ratio_long, f / br.limit_long_mw);
  }
  return r;
}

Vector surviving_injections(const SystemMatrices& m, const Contingency& c, std::span<const double> injections_mw) {
  Vector p(injections_mw.begin(), injections_mw.end());
  double lost = 0.0;
  for (int b : c.island_info.isolated_buses) {
    lost += p[b];
    p[b] = 0.0;
  }
  p[m.reference_bus()] += lost;
  return p;
}

std::vector<RankedContingency> screen_and_rank(const Network& network, const SystemMatrices& m,
                                               std::span<const double> injections_mw,
                                               const ScreenOptions& options) {
  const auto contingencies = contingency_list(network);
  const BaseCase base = BaseCase::from_injections(m, injections_mw);
  std::vector<RankedContingency> ranked(contingencies.size());

  auto evaluate = [&](std::size_t idx) {
    const Contingency& c = contingencies[idx];
    ranked[idx].contingency = c;
    const Vector p = c.is_island() ? surviving_injections(m, c, injections_mw)
                                   : Vector(injections_mw.begin(), injections_mw.end());
    ranked[idx].max_overload_ratio_short =
        contingency_flows(m, c, p, options.method, &base).max_overload_ratio_short;
  };

  const int threads = std::max(1, options.threads);
  if (threads == 1 || contingencies.size() < 2) {
    for (std::size_t i = 0; i < contingencies.size(); ++i) evaluate(i);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    for (int t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          for (std::size_t i = t; i < contingencies.size(); i += threads) evaluate(i);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  // Ratios are compared on a 1e-9 grid so that values equal up to roundoff
  // (parallel paths, or Method I against Method II) tie and fall back to
  // branch order instead of ranking on noise.
  auto key = [](const RankedContingency& r) { return std::round(r.max_overload_ratio_short * 1e9); };
  std::stable_sort(ranked.begin(), ranked.end(), [&](const RankedContingency& a, const RankedContingency& b) {
    const double ka = key(a), kb = key(b);
    if (ka != kb) return ka > kb;
    return a.contingency.outaged_branch < b.contingency.outaged_branch;
  });
  return ranked;
}

}  // namespace pcscopf
