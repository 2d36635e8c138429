#include "pcscopf/sensitivity.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <thread>

#include "pcscopf/rng.hpp"

namespace pcscopf {

namespace {

void check_range(const MultiplierRange& r, const char* name) {
  if (!(std::isfinite(r.low) && std::isfinite(r.high)) || r.low <= 0.0 || r.low > r.high)
    throw std::invalid_argument(std::string("sensitivity range ") + name + " must satisfy 0 < low <= high");
}

const char* const kColumns[] = {"voll", "pi", "gamma", "redispatch", "b_short", "b_long",
                                "base_cost", "ens_short", "ens_long", "eoc"};
constexpr int kColumnCount = 10;

double column_value(const SampleRecord& r, int c) {
  switch (c) {
    case 0: return r.sample.voll;
    case 1: return r.sample.pi;
    case 2: return r.sample.gamma;
    case 3: return r.sample.redispatch;
    case 4: return r.sample.b_short.value_or(std::numeric_limits<double>::quiet_NaN());
    case 5: return r.sample.b_long.value_or(std::numeric_limits<double>::quiet_NaN());
    case 6: return r.base_cost;
    case 7: return r.ens_short;
    case 8: return r.ens_long;
    default: return r.eoc;
  }
}

int column_index(const CorrelationMatrix& m, const std::string& name) {
  for (std::size_t i = 0; i < m.names.size(); ++i)
    if (m.names[i] == name) return static_cast<int>(i);
  throw std::out_of_range("no correlation column " + name);
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

SweepPoint run_point(const Network& network, const ScopfConfig& config, double parameter) {
  const ScopfSolution s = solve_scopf(network, config);
  SweepPoint p;
  p.parameter = parameter;
  p.variant = config.variant;
  p.status = s.status;
  if (s.status == ScopfStatus::optimal) {
    p.base_cost = s.costs.base_cost();
    p.objective = s.objective;
  } else {
    p.base_cost = p.objective = std::numeric_limits<double>::quiet_NaN();
    if (s.diagnosis) p.diagnosis = s.diagnosis->message;
  }
  return p;
}

}  // namespace

void SensitivityRanges::validate() const {
  check_range(voll, "voll");
  check_range(pi, "pi");
  check_range(gamma, "gamma");
  check_range(redispatch, "redispatch");
  check_range(b_short, "b_short");
  check_range(b_long, "b_long");
  if (b_long.low < 1.0) throw std::invalid_argument("b_long below 1 would tighten the long-term rating below normal");
  if (b_short.low < b_long.high)
    throw std::invalid_argument("b_short range must lie above the b_long range so short limits stay >= long limits");
}

std::vector<ParameterSample> draw_samples(int n, const SensitivityRanges& ranges, std::uint64_t seed) {
  if (n < 0) throw std::invalid_argument("sample count must be non-negative");
  ranges.validate();
  Rng rng(seed);
  std::vector<ParameterSample> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    ParameterSample s;
    s.index = i;
    s.seed = seed;
    s.voll = rng.uniform(ranges.voll.low, ranges.voll.high);
    s.pi = rng.uniform(ranges.pi.low, ranges.pi.high);
    s.gamma = rng.uniform(ranges.gamma.low, ranges.gamma.high);
    s.redispatch = rng.uniform(ranges.redispatch.low, ranges.redispatch.high);
    s.b_short = rng.uniform(ranges.b_short.low, ranges.b_short.high);
    s.b_long = rng.uniform(ranges.b_long.low, ranges.b_long.high);
    out.push_back(s);
  }
  return out;
}

Network apply_sample(const Network& network, const ParameterSample& sample) {
  Network net = network;
  for (auto& d : net.demands) d.voll_per_mwh *= sample.voll;
  for (auto& g : net.generators) g.redispatch_cost_per_mwh *= sample.redispatch;
  for (auto& br : net.branches) {
    br.outage_probability *= sample.pi;
    if (sample.b_short) br.limit_short_mw = *sample.b_short * br.limit_normal_mw;
    if (sample.b_long) br.limit_long_mw = *sample.b_long * br.limit_normal_mw;
  }
  return net;
}

double sample_gamma_fraction(const ParameterSample& sample, double gamma_base_fraction) {
  return std::min(1.0, gamma_base_fraction * sample.gamma);
}

SampleRecord run_sample(const Network& network, const ParameterSample& sample, const SensitivityOptions& options) {
  ScopfConfig config = options.config;
  config.gamma_fraction = sample_gamma_fraction(sample, options.gamma_base_fraction);
  const ScopfSolution s = solve_scopf(apply_sample(network, sample), config);
  SampleRecord r;
  r.sample = sample;
  r.status = s.status;
  if (s.status == ScopfStatus::optimal) {
    r.base_cost = s.costs.base_cost();
    for (const auto& a : s.actions) {
      double shed = 0.0;
      for (double v : a.shed_mw) shed += v;
      (a.stage == Stage::short_term ? r.ens_short : r.ens_long) += shed;
    }
    r.expected_ens_short = s.costs.expected_ens_short;
    r.expected_ens_long = s.costs.expected_ens_long;
    r.eoc = s.costs.eoc_total;
    r.objective = s.objective;
  } else {
    r.base_cost = r.ens_short = r.ens_long = r.eoc = r.objective = std::numeric_limits<double>::quiet_NaN();
    r.expected_ens_short = r.expected_ens_long = r.ens_short;
  }
  return r;
}

std::vector<SampleRecord> sample_and_run(const Network& network, int n, const SensitivityRanges& ranges,
                                         std::uint64_t seed, const SensitivityOptions& options) {
  options.config.validate();
  if (!(options.gamma_base_fraction > 0.0)) throw std::invalid_argument("gamma_base_fraction must be positive");
  require_valid(network);
  const auto samples = draw_samples(n, ranges, seed);
  std::vector<SampleRecord> records(samples.size());

  const int workers = std::max(1, std::min<int>(options.threads, static_cast<int>(samples.size())));
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(workers);
  auto work = [&](int w) {
    try {
      for (std::size_t i = next++; i < samples.size(); i = next++) records[i] = run_sample(network, samples[i], options);
    } catch (...) {
      errors[w] = std::current_exception();
      next = samples.size();
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work, w);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return records;
}

double CorrelationMatrix::at(const std::string& a, const std::string& b) const {
  return r[column_index(*this, a)][column_index(*this, b)];
}

bool CorrelationMatrix::is_degenerate(const std::string& a, const std::string& b) const {
  return degenerate[column_index(*this, a)][column_index(*this, b)];
}

CorrelationMatrix correlations(const std::vector<SampleRecord>& records) {
  std::vector<const SampleRecord*> used;
  for (const auto& r : records)
    if (r.converged()) used.push_back(&r);
  if (used.size() < 3)
    throw std::invalid_argument("correlations need at least three converged records, got " +
                                std::to_string(used.size()));

  // Rating factors only take part when every used record carries them.
  std::vector<int> cols;
  for (int c = 0; c < kColumnCount; ++c) {
    if (c == 4 || c == 5) {
      const bool all = std::all_of(used.begin(), used.end(), [&](auto* r) {
        return c == 4 ? r->sample.b_short.has_value() : r->sample.b_long.has_value();
      });
      if (!all) continue;
    }
    cols.push_back(c);
  }

  const std::size_t n = used.size(), k = cols.size();
  std::vector<std::vector<double>> centered(k, std::vector<double>(n));
  std::vector<double> norm(k, 0.0);
  for (std::size_t a = 0; a < k; ++a) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += column_value(*used[i], cols[a]);
    mean /= static_cast<double>(n);
    double scale = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      centered[a][i] = column_value(*used[i], cols[a]) - mean;
      scale = std::max(scale, std::abs(column_value(*used[i], cols[a])));
    }
    double ss = 0.0;
    for (double v : centered[a]) ss += v * v;
    // Spread below rounding noise of the column's magnitude counts as constant.
    const double noise = 1e-12 * std::max(1.0, scale);
    norm[a] = std::sqrt(ss) > noise * std::sqrt(static_cast<double>(n)) ? std::sqrt(ss) : 0.0;
  }

  CorrelationMatrix m;
  m.records_used = static_cast<int>(n);
  m.records_total = static_cast<int>(records.size());
  for (int c : cols) m.names.emplace_back(kColumns[c]);
  m.r.assign(k, std::vector<double>(k, 0.0));
  m.degenerate.assign(k, std::vector<bool>(k, false));
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = 0; b < k; ++b) {
      if (norm[a] == 0.0 || norm[b] == 0.0) {
        m.degenerate[a][b] = true;
        continue;
      }
      double dot = 0.0;
      for (std::size_t i = 0; i < n; ++i) dot += centered[a][i] * centered[b][i];
      m.r[a][b] = std::clamp(dot / (norm[a] * norm[b]), -1.0, 1.0);
    }
  return m;
}

std::vector<double> VollSweep::curve(Variant v) const {
  std::vector<double> out;
  for (const auto& p : points)
    if (p.variant == v) out.push_back(p.status == ScopfStatus::optimal ? p.base_cost : std::nan(""));
  return out;
}

VollSweep voll_sweep(const Network& network, const std::vector<double>& multipliers,
                     const std::vector<Variant>& variants, const ScopfConfig& config) {
  for (double m : multipliers)
    if (!(m > 0.0) || !std::isfinite(m)) throw std::invalid_argument("VOLL multipliers must be positive");
  VollSweep sweep;
  for (double mult : multipliers) {
    ParameterSample s;
    s.voll = mult;
    const Network net = apply_sample(network, s);
    for (Variant v : variants) {
      ScopfConfig c = config;
      c.variant = v;
      c.include_islanding = false;
      sweep.points.push_back(run_point(net, c, mult));
    }
  }
  return sweep;
}

GammaSweep gamma_sweep(const Network& network, const std::vector<double>& gamma_fractions,
                       const ScopfConfig& config) {
  if (!std::is_sorted(gamma_fractions.begin(), gamma_fractions.end()))
    throw std::invalid_argument("gamma sweep values must be sorted ascending");
  GammaSweep sweep;
  for (double g : gamma_fractions) {
    ScopfConfig c = config;
    c.gamma_fraction = g;
    sweep.points.push_back(run_point(network, c, g));
  }
  // Walk back from the largest Gamma while the objective stays put.
  const auto& pts = sweep.points;
  if (pts.size() >= 2 && pts.back().status == ScopfStatus::optimal) {
    const double last = pts.back().objective;
    const double tol = 1e-9 * std::max(1.0, std::abs(last));
    std::size_t first = pts.size() - 1;
    while (first > 0 && pts[first - 1].status == ScopfStatus::optimal &&
           std::abs(pts[first - 1].objective - last) <= tol)
      --first;
    if (first < pts.size() - 1) sweep.saturation_gamma = pts[first].parameter;
  }
  return sweep;
}

void write_samples_csv(const std::vector<SampleRecord>& records, std::ostream& out) {
  out << "index,seed,voll,pi,gamma,redispatch,b_short,b_long,status,base_cost,ens_short,ens_long,expected_ens_short,"
         "expected_ens_long,eoc,objective\n";
  auto opt = [](const std::optional<double>& v) { return v ? fmt(*v) : std::string(); };
  for (const auto& r : records) {
    const auto& s = r.sample;
    out << s.index << ',' << s.seed << ',' << fmt(s.voll) << ',' << fmt(s.pi) << ',' << fmt(s.gamma) << ',' << fmt(s.redispatch) << ','
        << opt(s.b_short) << ',' << opt(s.b_long) << ',' << to_string(r.status);
    for (double v : {r.base_cost, r.ens_short, r.ens_long, r.expected_ens_short, r.expected_ens_long, r.eoc, r.objective})
      out << ',' << (std::isnan(v) ? std::string() : fmt(v));
    out << '\n';
  }
}

void write_correlation_csv(const CorrelationMatrix& matrix, std::ostream& out) {
  out << "row,column,r,degenerate,records_used\n";
  for (std::size_t a = 0; a < matrix.names.size(); ++a)
    for (std::size_t b = 0; b < matrix.names.size(); ++b)
      out << matrix.names[a] << ',' << matrix.names[b] << ',' << fmt(matrix.r[a][b]) << ','
          << (matrix.degenerate[a][b] ? 1 : 0) << ',' << matrix.records_used << '\n';
}

void write_sweep_csv(const std::vector<SweepPoint>& points, const std::string& parameter_name, std::ostream& out) {
  out << parameter_name << ",variant,status,base_cost,objective,diagnosis\n";
  for (const auto& p : points) {
    std::string diag = p.diagnosis;
    std::replace(diag.begin(), diag.end(), ',', ';');
    std::replace(diag.begin(), diag.end(), '\n', ' ');
    out << fmt(p.parameter) << ',' << to_string(p.variant) << ',' << to_string(p.status) << ','
        << (std::isnan(p.base_cost) ? std::string() : fmt(p.base_cost)) << ','
        << (std::isnan(p.objective) ? std::string() : fmt(p.objective)) << ',' << diag << '\n';
  }
}

}  // namespace pcscopf
