#include "pcscopf/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "pcscopf/contingency.hpp"
#include "pcscopf/linalg.hpp"
#include "pcscopf/rng.hpp"

namespace pcscopf {

namespace {

void add_branch(Network& net, int from, int to, double x) {
  Branch br;
  br.id = net.branch_count();
  br.from_bus = from;
  br.to_bus = to;
  br.reactance_pu = x;
  net.branches.push_back(br);
}

Generator make_generator(Rng& rng, int id, int bus, double capacity, const ReliabilityDefaults& d) {
  Generator g;
  g.id = id;
  g.bus = bus;
  const int pieces = 1 + rng.index(3);
  double cost = rng.uniform(10.0, 50.0);
  std::vector<double> share(pieces);
  for (double& s : share) s = rng.uniform(0.5, 1.5);
  const double total = std::accumulate(share.begin(), share.end(), 0.0);
  for (int p = 0; p < pieces; ++p) {
    g.segments.push_back({capacity * share[p] / total, cost});
    cost += rng.uniform(3.0, 15.0);
  }
  g.redispatch_cost_per_mwh = g.segments.back().marginal_cost_per_mwh;
  g.ramp_long_mw = capacity * d.long_ramp_capacity_factor;
  g.ramp_short_mw = g.ramp_long_mw / d.short_ramp_divisor;
  return g;
}

// Sets ratings from the worst flows of a dispatch where every generator
// runs at the same fraction of its capacity.
void size_ratings(Network& net, Rng& rng, const GridOptions& o) {
  const double load = net.total_demand_mw();
  const double cap = net.total_capacity_mw();
  std::vector<double> gen(net.generators.size());
  for (const auto& g : net.generators) gen[g.id] = g.capacity_mw() * load / cap;
  std::vector<double> served(net.demands.size());
  for (const auto& d : net.demands) served[d.id] = d.p_demand_mw;
  const Vector p = bus_injections_mw(net, gen, served);

  for (auto& br : net.branches) br.limit_normal_mw = br.limit_short_mw = br.limit_long_mw = 1.0;
  const SystemMatrices m(net);
  const Vector f0 = base_flows(m, solve_angles(m, p));
  std::vector<double> worst(net.branches.size());
  for (std::size_t l = 0; l < worst.size(); ++l) worst[l] = std::abs(f0[l]);

  for (const auto& c : contingency_list(net)) {
    if (c.is_island()) continue;
    const Vector fk = contingency_branch_flows(m, c.outaged_branch, ContingencySystem(m, c).theta(p));
    for (std::size_t l = 0; l < worst.size(); ++l)
      worst[l] = std::max(worst[l], std::abs(fk[l]) / o.defaults.long_rating_factor);
  }

  const auto islands = classify_islanding(net);
  const double floor_mw = 0.25 * o.mean_load_mw;
  for (auto& br : net.branches) {
    double limit;
    if (islands[br.id].kind == IslandKind::radial_isolation) {
      limit = std::max(2.0 * worst[br.id], floor_mw);
    } else {
      limit = std::max(worst[br.id] * rng.uniform(o.limit_factor_min, o.limit_factor_max), floor_mw);
    }
    limit = std::round(limit * 100.0) / 100.0;
    br.limit_normal_mw = limit;
    br.limit_short_mw = limit * o.defaults.short_rating_factor;
    br.limit_long_mw = limit * o.defaults.long_rating_factor;
  }
}

}  // namespace

Network random_grid(const GridOptions& o) {
  Rng rng(o.seed);
  Network net;
  net.base_mva = 100.0;
  const int core = std::max(1, o.core_buses);
  const int total = core + o.leaf_buses + 2 * o.radial_pairs;
  for (int b = 0; b < total; ++b) net.buses.push_back({b, b == 0, b + 1});

  if (core == 2) add_branch(net, 0, 1, rng.uniform(0.02, 0.25));
  if (core >= 3)
    for (int b = 0; b < core; ++b) add_branch(net, b, (b + 1) % core, rng.uniform(0.02, 0.25));
  std::set<std::pair<int, int>> used;
  for (const auto& br : net.branches) used.insert(std::minmax(br.from_bus, br.to_bus));
  for (int k = 0, guard = 0; k < o.chords && core >= 4 && guard < 100 * (o.chords + 1); ++guard) {
    const int a = rng.index(core), b = rng.index(core);
    if (a == b || !used.insert(std::minmax(a, b)).second) continue;
    add_branch(net, a, b, rng.uniform(0.02, 0.25));
    ++k;
  }

  std::vector<int> spur_buses;
  for (int k = 0; k < o.leaf_buses; ++k) {
    const int leaf = core + k;
    add_branch(net, rng.index(core), leaf, rng.uniform(0.02, 0.1));
    spur_buses.push_back(leaf);
  }
  for (int k = 0; k < o.radial_pairs; ++k) {
    const int first = core + o.leaf_buses + 2 * k;
    add_branch(net, rng.index(core), first, rng.uniform(0.02, 0.1));
    add_branch(net, first, first + 1, rng.uniform(0.02, 0.1));
    spur_buses.push_back(first);
    spur_buses.push_back(first + 1);
  }

  for (int b = 0; b < core; ++b) {
    if (rng.uniform() >= o.load_share) continue;
    const double mw = std::round(o.mean_load_mw * rng.uniform(0.5, 1.5) * 10.0) / 10.0;
    net.demands.push_back({static_cast<int>(net.demands.size()), b, mw, o.defaults.voll_per_mwh});
  }
  if (net.demands.empty()) net.demands.push_back({0, 0, o.mean_load_mw, o.defaults.voll_per_mwh});
  const double core_load = net.total_demand_mw();
  for (int b : spur_buses) {
    const double mw = std::round(o.leaf_load_share * core_load * rng.uniform(0.2, 1.0) * 10.0) / 10.0;
    if (mw > 0.0) net.demands.push_back({static_cast<int>(net.demands.size()), b, mw, o.defaults.voll_per_mwh});
  }

  const double load = net.total_demand_mw();
  const int leaf_gens = std::min(o.leaf_generators, static_cast<int>(spur_buses.size()));
  std::vector<double> weight(std::max(1, o.generators));
  for (double& w : weight) w = rng.uniform(0.3, 1.7);
  const double wsum = std::accumulate(weight.begin(), weight.end(), 0.0);
  for (std::size_t k = 0; k < weight.size(); ++k) {
    const int bus = rng.index(core);
    const double capacity = std::round(o.capacity_margin * load * weight[k] / wsum * 10.0) / 10.0;
    net.generators.push_back(make_generator(rng, static_cast<int>(k), bus, capacity, o.defaults));
  }
  for (int k = 0; k < leaf_gens; ++k) {
    const double capacity = std::round(o.leaf_load_share * core_load * 10.0) / 10.0 + 1.0;
    net.generators.push_back(make_generator(rng, net.generators.size(), spur_buses[k], capacity, o.defaults));
  }

  for (auto& br : net.branches)
    br.outage_probability = o.defaults.outage_probability * rng.uniform(0.5, 2.0);
  size_ratings(net, rng, o);
  require_valid(net);
  return net;
}

Network leafy_500_bus_grid(std::uint64_t seed) {
  GridOptions o;
  o.core_buses = 246;
  o.chords = 97;
  o.leaf_buses = 254;
  o.generators = 60;
  o.mean_load_mw = 30.0;
  o.leaf_load_share = 0.0005;
  o.seed = seed;
  return random_grid(o);
}

}  // namespace pcscopf
