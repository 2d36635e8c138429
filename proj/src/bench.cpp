#include "pcscopf/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>

#include "pcscopf/contingency.hpp"
#include "pcscopf/linalg.hpp"
#include "pcscopf/rng.hpp"

namespace pcscopf {

namespace {

using Clock = std::chrono::steady_clock;

double quantile(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

template <class T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) std::swap(v[i], v[rng.index(i + 1)]);
}

std::vector<Contingency> pick_contingencies(const Network& net, const BenchOptions& o, Rng& rng) {
  std::vector<Contingency> islands, others;
  for (auto& c : contingency_list(net)) {
    if (c.island_info.kind == IslandKind::multi_split) continue;
    (c.is_island() ? islands : others).push_back(std::move(c));
  }
  if (o.max_contingencies <= 0 ||
      o.max_contingencies >= static_cast<int>(islands.size() + others.size())) {
    std::vector<Contingency> all = islands;
    all.insert(all.end(), others.begin(), others.end());
    std::sort(all.begin(), all.end(), [](auto& a, auto& b) { return a.outaged_branch < b.outaged_branch; });
    return all;
  }
  shuffle(islands, rng);
  shuffle(others, rng);
  const std::size_t want = static_cast<std::size_t>(o.max_contingencies);
  std::size_t take_islands = std::min(islands.size(), std::max<std::size_t>(1, want / 4));
  std::size_t take_others = std::min(others.size(), want - take_islands);
  take_islands = std::min(islands.size(), want - take_others);
  std::vector<Contingency> out(islands.begin(), islands.begin() + take_islands);
  out.insert(out.end(), others.begin(), others.begin() + take_others);
  std::sort(out.begin(), out.end(), [](auto& a, auto& b) { return a.outaged_branch < b.outaged_branch; });
  return out;
}

template <class F>
std::int64_t time_ns(F&& f) {
  const auto t0 = Clock::now();
  f();
  return std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - t0).count();
}

}  // namespace

const MethodTiming& BenchReport::method(const std::string& name) const {
  for (const auto& m : methods)
    if (m.method == name) return m;
  throw std::out_of_range("no timing for method " + name);
}

BenchReport bench_methods(const Network& network, const BenchOptions& options) {
  if (options.trials < 1) throw std::invalid_argument("trials must be positive");
  require_valid(network);
  Rng rng(options.seed);
  SystemMatrices m(network);
  const int n = network.bus_count();

  BenchReport report;
  report.system = options.system_name;
  report.buses = n;
  report.branches = network.branch_count();
  report.trials = options.trials;

  const auto list = pick_contingencies(network, options, rng);
  report.contingencies = static_cast<int>(list.size());

  // Base injections: a random balanced pattern scaled to the system load.
  const double scale = std::max(1.0, network.total_demand_mw() / std::max(1, n));
  Vector p0(n, 0.0);
  double sum = 0.0;
  for (int b = 0; b < n; ++b) {
    if (b == m.reference_bus()) continue;
    p0[b] = rng.uniform(-scale, scale);
    sum += p0[b];
  }
  p0[m.reference_bus()] = -sum;
  const BaseCase base = BaseCase::from_injections(m, p0);

  struct Work {
    Contingency c;
    Vector pk;
    int monitored = -1;
  };
  std::vector<Work> work;
  for (const auto& c : list) {
    Work w{c, {}, -1};
    // Move a few MW between two random buses so dP != 0, then drop the island.
    Vector p = p0;
    const int a = rng.index(n), b = rng.index(n);
    const double shift = rng.uniform(0.1, 1.0) * scale;
    p[a] += shift;
    p[b] -= shift;
    w.pk = surviving_injections(m, c, p);
    std::vector<bool> iso(n, false);
    for (int bus : c.island_info.isolated_buses) iso[bus] = true;
    for (int tries = 0; tries < 4 * network.branch_count() && w.monitored < 0; ++tries) {
      const auto& br = network.branches[rng.index(network.branch_count())];
      if (br.id != c.outaged_branch && !iso[br.from_bus] && !iso[br.to_bus]) w.monitored = br.id;
    }
    if (w.monitored < 0) w.monitored = c.outaged_branch == 0 ? std::min(1, network.branch_count() - 1) : 0;
    report.island_contingencies += c.is_island();
    work.push_back(std::move(w));
  }

  static const char* kNames[] = {"I", "II", "III", "IV"};
  std::vector<std::vector<std::vector<double>>> per(4, std::vector<std::vector<double>>(work.size()));
  Vector t1, t2, r3, r4;
  const int total_trials = options.warmup_trials + options.trials;
  for (int trial = 0; trial < total_trials; ++trial) {
    const bool record = trial >= options.warmup_trials;
    const bool last = trial == total_trials - 1;
    for (std::size_t i = 0; i < work.size(); ++i) {
      const Work& w = work[i];
      const std::int64_t ns[4] = {
          time_ns([&] { t1 = method1_theta(m, w.c, w.pk, &base); }),
          time_ns([&] { t2 = method2_theta(m, w.c, w.pk); }),
          time_ns([&] { r3 = method3_ptdf_row(m, w.c, w.monitored); }),
          time_ns([&] { r4 = method4_ptdf_row(m, w.c, w.monitored); }),
      };
      if (record)
        for (int k = 0; k < 4; ++k) {
          per[k][i].push_back(static_cast<double>(ns[k]));
          report.samples.push_back({kNames[k], w.c.outaged_branch, trial - options.warmup_trials, ns[k]});
        }
      if (last) {
        for (int b = 0; b < n; ++b) {
          report.max_theta_deviation = std::max(report.max_theta_deviation, std::abs(t1[b] - t2[b]));
          report.max_ptdf_deviation = std::max(report.max_ptdf_deviation, std::abs(r3[b] - r4[b]));
          report.value_checksum += t1[b] + t2[b] + r3[b] + r4[b];
        }
      }
    }
  }

  for (int k = 0; k < 4; ++k) {
    std::vector<double> medians;
    for (auto& v : per[k]) medians.push_back(quantile(v, 0.5));
    report.methods.push_back({kNames[k], quantile(medians, 0.5), quantile(medians, 0.1), quantile(medians, 0.9)});
  }
  return report;
}

void write_bench_csv(const BenchReport& report, std::ostream& out) {
  out << "method,system,contingency_id,trial,nanos\n";
  for (const auto& s : report.samples)
    out << s.method << ',' << report.system << ',' << s.contingency << ',' << s.trial << ',' << s.nanos << '\n';
}

void write_method_summary_csv(const BenchReport& report, std::ostream& out) {
  char buf[160];
  out << "method,system,buses,contingencies,trials,median_ns,p10_ns,p90_ns\n";
  for (const auto& m : report.methods) {
    std::snprintf(buf, sizeof buf, "%s,%s,%d,%d,%d,%.17g,%.17g,%.17g\n", m.method.c_str(), report.system.c_str(),
                  report.buses, report.contingencies, report.trials, m.median_ns, m.p10_ns, m.p90_ns);
    out << buf;
  }
}

double TimeBreakdown::share(const std::string& phase) const {
  for (const auto& p : phases)
    if (p.phase == phase) return p.share;
  throw std::out_of_range("unknown phase " + phase);
}

TimeBreakdown time_breakdown(const ScopfSolution& solution) {
  const PhaseTimes& t = solution.times;
  TimeBreakdown b;
  b.total = t.total;
  b.unattributed = t.unattributed();
  const std::pair<const char*, double> phases[] = {
      {"initialize_pre_contingency", t.initialize_pre_contingency},
      {"pre_iteration", t.pre_iteration},
      {"contingency_power_flow", t.contingency_power_flow},
      {"lp_solve", t.lp_solve},
      {"cut_management", t.cut_management},
      {"unattributed", t.unattributed()},
  };
  for (const auto& [name, seconds] : phases)
    b.phases.push_back({name, seconds, t.total > 0.0 ? seconds / t.total : 0.0});
  for (const auto& r : solution.log) {
    auto bump = [&](std::vector<std::pair<std::string, int>>& v, int n) {
      auto it = std::find_if(v.begin(), v.end(), [&](auto& e) { return e.first == r.phase; });
      if (it == v.end())
        v.push_back({r.phase, n});
      else
        it->second += n;
    };
    bump(b.cuts_per_phase, r.cuts_added);
    bump(b.blocks_per_phase, r.blocks_added);
  }
  return b;
}

void write_phase_csv(const TimeBreakdown& breakdown, std::ostream& out) {
  char buf[160];
  out << "phase,seconds,share\n";
  for (const auto& p : breakdown.phases) {
    std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g\n", p.phase.c_str(), p.seconds, p.share);
    out << buf;
  }
  std::snprintf(buf, sizeof buf, "total,%.17g,1\n", breakdown.total);
  out << buf;
}

}  // namespace pcscopf
