#include "pcscopf/network.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <sstream>

#include "pcscopf/contingency.hpp"

namespace pcscopf {

double Generator::capacity_mw() const {
  double total = 0.0;
  for (const auto& s : segments) total += s.capacity_mw;
  return total;
}

int Network::reference_bus() const {
  for (const auto& b : buses)
    if (b.is_reference) return b.id;
  return -1;
}

double Network::total_demand_mw() const {
  double total = 0.0;
  for (const auto& d : demands) total += d.p_demand_mw;
  return total;
}

double Network::total_capacity_mw() const {
  double total = 0.0;
  for (const auto& g : generators) total += g.capacity_mw();
  return total;
}

namespace {

void add(std::vector<Violation>& out, Severity severity, std::string code,
         std::string message, int element = -1) {
  out.push_back({severity, std::move(code), std::move(message), element});
}

template <typename... Args>
std::string cat(const Args&... args) {
  std::ostringstream os;
  (os << ... << args);
  return os.str();
}

}  // namespace

std::vector<Violation> validate(const Network& network) {
  std::vector<Violation> out;
  const int n = network.bus_count();
  auto bus_ok = [n](int b) { return b >= 0 && b < n; };

  if (!(network.base_mva > 0.0))
    add(out, Severity::error, "base_mva", "base_mva must be positive");
  if (n == 0) {
    add(out, Severity::error, "no_buses", "network has no buses");
    return out;
  }

  int references = 0;
  for (int i = 0; i < n; ++i) {
    const Bus& b = network.buses[i];
    if (b.id != i)
      add(out, Severity::error, "bus_id", cat("bus at position ", i, " has id ", b.id), i);
    if (b.is_reference) ++references;
  }
  if (references == 0)
    add(out, Severity::error, "missing_reference", "missing reference bus");
  else if (references > 1)
    add(out, Severity::error, "multiple_reference", "multiple reference buses");

  if (network.branches.empty())
    add(out, Severity::warning, "no_branches", "no branches");

  for (int l = 0; l < network.branch_count(); ++l) {
    const Branch& br = network.branches[l];
    if (br.id != l)
      add(out, Severity::error, "branch_id", cat("branch at position ", l, " has id ", br.id), l);
    if (!bus_ok(br.from_bus) || !bus_ok(br.to_bus)) {
      add(out, Severity::error, "branch_bus", cat("branch ", l, " references an unknown bus"), l);
      continue;
    }
    if (br.from_bus == br.to_bus)
      add(out, Severity::error, "branch_loop", cat("branch ", l, " has from_bus == to_bus"), l);
    if (!(br.reactance_pu > 0.0))
      add(out, Severity::error, "branch_reactance",
          cat("branch ", l, " has nonpositive reactance ", br.reactance_pu), l);
    if (!(br.limit_normal_mw > 0.0))
      add(out, Severity::error, "branch_limit",
          cat("branch ", l, " has nonpositive normal limit"), l);
    if (br.limit_long_mw < br.limit_normal_mw)
      add(out, Severity::error, "branch_limit_order",
          cat("branch ", l, " has limit_long < limit_normal"), l);
    if (br.limit_long_mw > br.limit_short_mw)
      add(out, Severity::error, "branch_limit_order",
          cat("branch ", l, " has limit_long > limit_short"), l);
    if (!(br.outage_probability >= 0.0 && br.outage_probability < 1.0))
      add(out, Severity::error, "branch_probability",
          cat("branch ", l, " has outage probability outside [0, 1)"), l);
  }

  for (int g = 0; g < static_cast<int>(network.generators.size()); ++g) {
    const Generator& gen = network.generators[g];
    if (gen.id != g)
      add(out, Severity::error, "generator_id", cat("generator at position ", g, " has id ", gen.id), g);
    if (!bus_ok(gen.bus))
      add(out, Severity::error, "generator_bus", cat("generator ", g, " references an unknown bus"), g);
    for (std::size_t s = 0; s < gen.segments.size(); ++s) {
      if (gen.segments[s].capacity_mw < 0.0)
        add(out, Severity::error, "generator_capacity",
            cat("generator ", g, " segment ", s, " has negative capacity"), g);
      if (s > 0 && gen.segments[s].marginal_cost_per_mwh < gen.segments[s - 1].marginal_cost_per_mwh)
        add(out, Severity::error, "generator_cost_order",
            cat("generator ", g, " has decreasing segment costs (nonconvex)"), g);
    }
    if (gen.ramp_short_mw < 0.0 || gen.ramp_long_mw < 0.0)
      add(out, Severity::error, "generator_ramp", cat("generator ", g, " has a negative ramp"), g);
    if (gen.redispatch_cost_per_mwh < 0.0)
      add(out, Severity::error, "generator_redispatch_cost",
          cat("generator ", g, " has negative redispatch cost"), g);
  }

  for (int d = 0; d < static_cast<int>(network.demands.size()); ++d) {
    const Demand& dem = network.demands[d];
    if (dem.id != d)
      add(out, Severity::error, "demand_id", cat("demand at position ", d, " has id ", dem.id), d);
    if (!bus_ok(dem.bus))
      add(out, Severity::error, "demand_bus", cat("demand ", d, " references an unknown bus"), d);
    if (dem.p_demand_mw < 0.0)
      add(out, Severity::error, "demand_negative", cat("demand ", d, " is negative"), d);
    if (!(dem.voll_per_mwh > 0.0))
      add(out, Severity::error, "demand_voll", cat("demand ", d, " has nonpositive VOLL"), d);
  }

  if (network.total_capacity_mw() < network.total_demand_mw())
    add(out, Severity::warning, "capacity_shortfall",
        "total generator capacity is below total demand; shedding will be priced");

  const bool endpoints_ok = std::none_of(out.begin(), out.end(), [](const Violation& v) {
    return v.code == "branch_bus";
  });
  const int start = std::max(0, network.reference_bus());
  if (endpoints_ok) {
    const auto seen = reachable_buses(network, start);
    std::vector<int> unreachable;
    for (int i = 0; i < n; ++i)
      if (!seen[i]) unreachable.push_back(i);
    if (!unreachable.empty()) {
      std::ostringstream os;
      os << "network is disconnected; unreachable buses:";
      for (int b : unreachable) os << ' ' << b;
      add(out, Severity::error, "disconnected", os.str());
    }
  }
  return out;
}

bool has_errors(const std::vector<Violation>& violations) {
  return std::any_of(violations.begin(), violations.end(),
                     [](const Violation& v) { return v.severity == Severity::error; });
}

namespace {
std::string summarize(const std::vector<Violation>& violations) {
  std::ostringstream os;
  os << "invalid network:";
  for (const auto& v : violations)
    if (v.severity == Severity::error) os << "\n  " << v.message;
  return os.str();
}
}  // namespace

InvalidNetwork::InvalidNetwork(std::vector<Violation> violations)
    : std::runtime_error(summarize(violations)), violations_(std::move(violations)) {}

void require_valid(const Network& network) {
  auto violations = validate(network);
  if (has_errors(violations)) throw InvalidNetwork(std::move(violations));
}

std::vector<bool> reachable_buses(const Network& network, int start,
                                  const std::vector<bool>& removed) {
  const int n = network.bus_count();
  std::vector<std::vector<std::pair<int, int>>> adj(n);
  for (const auto& br : network.branches) {
    adj[br.from_bus].push_back({br.to_bus, br.id});
    adj[br.to_bus].push_back({br.from_bus, br.id});
  }
  std::vector<bool> seen(n, false);
  if (start < 0 || start >= n) return seen;
  std::deque<int> queue{start};
  seen[start] = true;
  while (!queue.empty()) {
    const int b = queue.front();
    queue.pop_front();
    for (auto [next, l] : adj[b]) {
      if (!removed.empty() && removed[l]) continue;
      if (!seen[next]) {
        seen[next] = true;
        queue.push_back(next);
      }
    }
  }
  return seen;
}

std::vector<Contingency> contingency_list(const Network& network) {
  const auto islands = classify_islanding(network);
  std::vector<Contingency> out;
  out.reserve(network.branches.size());
  for (const auto& br : network.branches)
    out.push_back({br.id, br.outage_probability, islands[br.id]});
  return out;
}

}  // namespace pcscopf
