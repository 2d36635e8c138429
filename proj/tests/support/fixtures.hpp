#pragma once

// Small hand-built networks and independent dense reference computations.

#include <Eigen/Dense>

#include <deque>
#include <filesystem>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "pcscopf/case_io.hpp"
#include "pcscopf/network.hpp"

namespace fixtures {

using pcscopf::Network;

struct BranchDef {
  int from, to;
  double x, limit;
};
struct GenDef {
  int bus;
  double capacity, cost;
};
struct LoadDef {
  int bus;
  double mw;
};

inline Network make_network(int buses, const std::vector<BranchDef>& branches, const std::vector<GenDef>& gens,
                            const std::vector<LoadDef>& loads, int reference = 0) {
  Network net;
  net.base_mva = 100.0;
  for (int b = 0; b < buses; ++b) net.buses.push_back({b, b == reference, b + 1});
  for (const auto& d : branches) {
    pcscopf::Branch br;
    br.id = net.branch_count();
    br.from_bus = d.from;
    br.to_bus = d.to;
    br.reactance_pu = d.x;
    br.limit_normal_mw = d.limit;
    br.limit_short_mw = 1.3 * d.limit;
    br.limit_long_mw = 1.1 * d.limit;
    br.outage_probability = 1e-4;
    net.branches.push_back(br);
  }
  for (const auto& g : gens) {
    pcscopf::Generator gen;
    gen.id = static_cast<int>(net.generators.size());
    gen.bus = g.bus;
    gen.segments = {{g.capacity, g.cost}};
    gen.ramp_long_mw = g.capacity;
    gen.ramp_short_mw = g.capacity / 10.0;
    gen.redispatch_cost_per_mwh = g.cost;
    net.generators.push_back(gen);
  }
  for (const auto& l : loads)
    net.demands.push_back({static_cast<int>(net.demands.size()), l.bus, l.mw, 10000.0});
  return net;
}

inline Network two_bus() { return make_network(2, {{0, 1, 0.1, 200}}, {{0, 200, 10}}, {{1, 100}}); }

inline Network triangle() {
  return make_network(3, {{0, 1, 0.5, 100}, {1, 2, 0.5, 100}, {0, 2, 0.5, 100}}, {{0, 150, 10}, {1, 100, 20}},
                      {{1, 60}, {2, 90}});
}

inline Network parallel_pair() {
  return make_network(2, {{0, 1, 0.2, 200}, {0, 1, 0.2, 200}}, {{0, 200, 10}}, {{1, 100}});
}

/// Independent angle solve on a dense matrix: the outaged branch is dropped
/// and `isolated` buses are removed together with the reference.
inline std::vector<double> dense_theta(const Network& net, int outaged, const std::vector<double>& p_mw,
                                       const std::vector<int>& isolated = {}) {
  const int n = net.bus_count();
  std::vector<int> idx(n, -1);
  std::set<int> iso(isolated.begin(), isolated.end());
  int k = 0;
  for (int b = 0; b < n; ++b)
    if (!net.buses[b].is_reference && !iso.count(b)) idx[b] = k++;
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(k, k);
  for (const auto& br : net.branches) {
    if (br.id == outaged) continue;
    const double b = 1.0 / br.reactance_pu;
    const int f = idx[br.from_bus], t = idx[br.to_bus];
    if (f >= 0) h(f, f) += b;
    if (t >= 0) h(t, t) += b;
    if (f >= 0 && t >= 0) {
      h(f, t) -= b;
      h(t, f) -= b;
    }
  }
  Eigen::VectorXd rhs(k);
  for (int b = 0; b < n; ++b)
    if (idx[b] >= 0) rhs[idx[b]] = p_mw[b] / net.base_mva;
  const Eigen::VectorXd x = h.fullPivLu().solve(rhs);
  std::vector<double> theta(n, 0.0);
  for (int b = 0; b < n; ++b)
    if (idx[b] >= 0) theta[b] = x[idx[b]];
  return theta;
}

/// Buses cut off from the reference when `outaged` is removed, by plain BFS.
inline std::vector<int> brute_force_isolated(const Network& net, int outaged) {
  const int n = net.bus_count();
  std::vector<bool> seen(n, false);
  std::deque<int> q{net.reference_bus()};
  seen[net.reference_bus()] = true;
  while (!q.empty()) {
    const int b = q.front();
    q.pop_front();
    for (const auto& br : net.branches) {
      if (br.id == outaged) continue;
      int other = -1;
      if (br.from_bus == b) other = br.to_bus;
      if (br.to_bus == b) other = br.from_bus;
      if (other >= 0 && !seen[other]) {
        seen[other] = true;
        q.push_back(other);
      }
    }
  }
  std::vector<int> out;
  for (int b = 0; b < n; ++b)
    if (!seen[b]) out.push_back(b);
  return out;
}

inline std::filesystem::path data_dir() { return PCSCOPF_DATA_DIR; }

inline Network rts24() { return pcscopf::load_case(data_dir() / "ieee_rts24.m"); }

/// The 24-bus case with ratings cut to 80% and corrective ramping left only
/// to the six hydro units sharing bus 22. Moving power between units on one
/// bus does not change any flow, so post-contingency relief has to come from
/// shedding, which makes the corrective schedule depend on VOLL.
inline Network rts24_hydro_only_ramping() {
  Network net = rts24();
  for (auto& br : net.branches) {
    br.limit_normal_mw *= 0.8;
    br.limit_short_mw *= 0.8;
    br.limit_long_mw *= 0.8;
  }
  for (auto& g : net.generators)
    if (net.buses[g.bus].external_id != 22) g.ramp_short_mw = g.ramp_long_mw = 0.0;
  return net;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("pcscopf_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace fixtures
