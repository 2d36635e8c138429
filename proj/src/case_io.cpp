#include "pcscopf/case_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

namespace pcscopf {

namespace {

constexpr double kUnlimitedRatingMw = 1e5;

std::string location(const std::string& source, int line, const std::string& field) {
  std::ostringstream os;
  os << source;
  if (line > 0) os << ':' << line;
  if (!field.empty()) os << " [" << field << ']';
  return os.str();
}

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct MatRow {
  int line = 0;
  std::vector<double> values;
};

/// Collects the numeric rows of every `mpc.<name> = [ ... ];` block plus the
/// scalar `mpc.baseMVA`.
struct MatpowerTables {
  double base_mva = 100.0;
  std::map<std::string, std::vector<MatRow>> tables;
};

MatpowerTables read_matpower_tables(std::istream& in, const std::string& source) {
  MatpowerTables out;
  std::string raw;
  int line_no = 0;
  std::string current;  // table being read, empty when outside
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = raw.substr(0, raw.find('%'));
    line = trim(line);
    if (line.empty()) continue;
    if (current.empty()) {
      const auto pos = line.find("mpc.");
      if (pos == std::string::npos) continue;
      const auto eq = line.find('=', pos);
      if (eq == std::string::npos) continue;
      const std::string name = trim(line.substr(pos + 4, eq - pos - 4));
      std::string rhs = trim(line.substr(eq + 1));
      if (name == "baseMVA") {
        if (!rhs.empty() && rhs.back() == ';') rhs.pop_back();
        try {
          out.base_mva = std::stod(rhs);
        } catch (const std::exception&) {
          throw CaseParseError(source, line_no, "baseMVA", "cannot parse baseMVA");
        }
        continue;
      }
      if (rhs.empty() || rhs.front() != '[') continue;  // version strings etc.
      current = name;
      out.tables[current];
      line = trim(rhs.substr(1));
      if (line.empty()) continue;
    }
    // Inside a table: split on ';' so one-line tables also work.
    bool closes = false;
    const auto close = line.find(']');
    if (close != std::string::npos) {
      closes = true;
      line = line.substr(0, close);
    }
    std::stringstream rows(line);
    std::string row;
    while (std::getline(rows, row, ';')) {
      row = trim(row);
      if (row.empty()) continue;
      for (char& c : row)
        if (c == ',' || c == '\t') c = ' ';
      std::istringstream fields(row);
      MatRow parsed{line_no, {}};
      std::string tok;
      while (fields >> tok) {
        try {
          std::size_t used = 0;
          parsed.values.push_back(std::stod(tok, &used));
          if (used != tok.size()) throw std::invalid_argument(tok);
        } catch (const std::exception&) {
          throw CaseParseError(source, line_no, current,
                               "non-numeric field '" + tok + "'");
        }
      }
      out.tables[current].push_back(std::move(parsed));
    }
    if (closes) current.clear();
  }
  if (!current.empty())
    throw CaseParseError(source, line_no, current, "unterminated table");
  return out;
}

void require_columns(const MatRow& row, std::size_t n, const std::string& table,
                     const std::string& source) {
  if (row.values.size() < n)
    throw CaseParseError(source, row.line, table,
                         "expected at least " + std::to_string(n) + " columns, got " +
                             std::to_string(row.values.size()));
}

std::vector<CostSegment> segments_from_gencost(const MatRow& row, double pmax,
                                               int quadratic_segments,
                                               const std::string& source) {
  require_columns(row, 4, "gencost", source);
  const int model = static_cast<int>(row.values[0]);
  const int n = static_cast<int>(row.values[3]);
  std::vector<CostSegment> segs;
  if (model == 1) {
    require_columns(row, 4 + 2 * static_cast<std::size_t>(n), "gencost", source);
    if (n < 2) throw CaseParseError(source, row.line, "gencost", "piecewise cost needs >= 2 points");
    std::vector<std::pair<double, double>> pts;
    for (int k = 0; k < n; ++k) pts.push_back({row.values[4 + 2 * k], row.values[5 + 2 * k]});
    for (int k = 0; k + 1 < n; ++k) {
      const double dx = pts[k + 1].first - pts[k].first;
      if (!(dx > 0.0))
        throw CaseParseError(source, row.line, "gencost", "piecewise x points must increase");
      segs.push_back({dx, (pts[k + 1].second - pts[k].second) / dx});
    }
    // Fit the curve to [0, pmax]: the first slope covers any gap below the
    // first point, the last slope covers any gap above the final point.
    segs.front().capacity_mw += std::max(0.0, pts.front().first);
    double remaining = pmax;
    std::vector<CostSegment> fitted;
    for (const auto& s : segs) {
      if (remaining <= 0.0) break;
      fitted.push_back({std::min(s.capacity_mw, remaining), s.marginal_cost_per_mwh});
      remaining -= fitted.back().capacity_mw;
    }
    if (remaining > 0.0) {
      if (fitted.empty()) fitted.push_back({0.0, segs.back().marginal_cost_per_mwh});
      fitted.back().capacity_mw += remaining;
    }
    segs = std::move(fitted);
  } else if (model == 2) {
    require_columns(row, 4 + static_cast<std::size_t>(n), "gencost", source);
    if (n > 3)
      throw CaseParseError(source, row.line, "gencost", "polynomial costs above quadratic unsupported");
    const double c2 = n == 3 ? row.values[4] : 0.0;
    const double c1 = n >= 2 ? row.values[4 + n - 2] : 0.0;
    const int pieces = (c2 != 0.0 && pmax > 0.0) ? std::max(1, quadratic_segments) : 1;
    const double width = pmax / pieces;
    for (int k = 0; k < pieces; ++k) {
      const double a = k * width;
      const double b = (k + 1) * width;
      segs.push_back({width, c1 + c2 * (a + b)});
    }
  } else {
    throw CaseParseError(source, row.line, "gencost", "unknown cost model " + std::to_string(model));
  }
  return segs;
}

void apply_defaults(Network& net, const ReliabilityDefaults& d) {
  for (auto& br : net.branches) {
    br.limit_short_mw = d.short_rating_factor * br.limit_normal_mw;
    br.limit_long_mw = d.long_rating_factor * br.limit_normal_mw;
    br.outage_probability = d.outage_probability;
  }
  for (auto& g : net.generators) {
    g.ramp_long_mw = d.long_ramp_capacity_factor * g.capacity_mw();
    g.ramp_short_mw = g.ramp_long_mw / d.short_ramp_divisor;
    g.redispatch_cost_per_mwh = g.segments.empty() ? 0.0 : g.segments.back().marginal_cost_per_mwh;
  }
  for (auto& dem : net.demands) dem.voll_per_mwh = d.voll_per_mwh;
}

std::vector<std::vector<std::string>> read_csv(std::istream& in, const std::string& source,
                                               const std::vector<std::string>& header,
                                               std::vector<int>& lines) {
  std::string raw;
  int line_no = 0;
  bool have_header = false;
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
    if (!have_header) {
      if (cells != header) {
        std::string expected;
        for (const auto& h : header) expected += (expected.empty() ? "" : ",") + h;
        throw CaseParseError(source, line_no, "header", "expected header '" + expected + "'");
      }
      have_header = true;
      continue;
    }
    if (cells.size() != header.size())
      throw CaseParseError(source, line_no, "", "expected " + std::to_string(header.size()) + " fields");
    rows.push_back(std::move(cells));
    lines.push_back(line_no);
  }
  if (!have_header) throw CaseParseError(source, 0, "header", "missing header");
  return rows;
}

double csv_number(const std::string& cell, const std::string& source, int line,
                  const std::string& field) {
  try {
    std::size_t used = 0;
    const double v = std::stod(cell, &used);
    if (used != cell.size()) throw std::invalid_argument(cell);
    return v;
  } catch (const std::exception&) {
    throw CaseParseError(source, line, field, "cannot parse '" + cell + "'");
  }
}

}  // namespace

CaseParseError::CaseParseError(const std::string& source, int line, std::string field,
                               const std::string& what)
    : std::runtime_error(location(source, line, field) + ": " + what),
      line_(line),
      field_(std::move(field)) {}

Network parse_matpower(std::istream& in, const LoadOptions& options, const std::string& source) {
  const MatpowerTables t = read_matpower_tables(in, source);
  auto table = [&](const std::string& name) -> const std::vector<MatRow>& {
    auto it = t.tables.find(name);
    if (it == t.tables.end()) throw CaseParseError(source, 0, name, "missing table mpc." + name);
    return it->second;
  };

  Network net;
  net.base_mva = t.base_mva;
  if (!(net.base_mva > 0.0)) throw CaseParseError(source, 0, "baseMVA", "baseMVA must be positive");

  std::map<long, int> index;  // external bus number -> dense id
  std::vector<std::pair<long, double>> loads;
  std::vector<int> load_lines;
  for (const MatRow& row : table("bus")) {
    require_columns(row, 3, "bus", source);
    const long ext = std::lround(row.values[0]);
    const int type = static_cast<int>(row.values[1]);
    if (type == 4) continue;  // isolated in the source case
    if (index.count(ext)) throw CaseParseError(source, row.line, "bus", "duplicate bus number");
    const int id = net.bus_count();
    index[ext] = id;
    net.buses.push_back({id, type == 3, ext});
    if (row.values[2] != 0.0) {
      if (row.values[2] < 0.0)
        throw CaseParseError(source, row.line, "bus.Pd", "negative load is not supported");
      loads.push_back({ext, row.values[2]});
      load_lines.push_back(row.line);
    }
  }
  if (net.reference_bus() < 0) throw CaseParseError(source, 0, "bus", "missing reference bus");
  for (const auto& [ext, pd] : loads)
    net.demands.push_back({static_cast<int>(net.demands.size()), index.at(ext), pd, 0.0});

  auto bus_of = [&](double v) -> int {
    auto it = index.find(std::lround(v));
    return it == index.end() ? -1 : it->second;
  };

  for (const MatRow& row : table("branch")) {
    require_columns(row, 6, "branch", source);
    const int f = bus_of(row.values[0]);
    const int to = bus_of(row.values[1]);
    const bool in_service = row.values.size() < 11 || row.values[10] != 0.0;
    if (!in_service) continue;
    if (f < 0 || to < 0) {
      // attached to a dropped isolated bus or unknown
      if (index.count(std::lround(row.values[0])) == 0 && index.count(std::lround(row.values[1])) == 0)
        throw CaseParseError(source, row.line, "branch", "unknown bus");
      continue;
    }
    const double x = row.values[3];
    if (!(x > 0.0))
      throw CaseParseError(source, row.line, "branch.x", "nonpositive reactance");
    const double rate = row.values[5] > 0.0 ? row.values[5] : kUnlimitedRatingMw;
    Branch br;
    br.id = net.branch_count();
    br.from_bus = f;
    br.to_bus = to;
    br.reactance_pu = x;
    br.limit_normal_mw = rate;
    net.branches.push_back(br);
  }

  const auto& gens = table("gen");
  const std::vector<MatRow>* costs = nullptr;
  if (auto it = t.tables.find("gencost"); it != t.tables.end()) costs = &it->second;
  if (costs && costs->size() < gens.size())
    throw CaseParseError(source, 0, "gencost", "fewer gencost rows than generators");
  for (std::size_t k = 0; k < gens.size(); ++k) {
    const MatRow& row = gens[k];
    require_columns(row, 10, "gen", source);
    if (row.values[7] == 0.0) continue;
    const int bus = bus_of(row.values[0]);
    if (bus < 0) {
      if (index.count(std::lround(row.values[0])) == 0)
        throw CaseParseError(source, row.line, "gen.bus", "unknown bus");
      continue;
    }
    const double pmax = std::max(0.0, row.values[8]);
    Generator g;
    g.id = static_cast<int>(net.generators.size());
    g.bus = bus;
    if (costs)
      g.segments = segments_from_gencost((*costs)[k], pmax, options.quadratic_segments, source);
    else
      g.segments = {{pmax, 0.0}};
    net.generators.push_back(std::move(g));
  }

  apply_defaults(net, options.defaults);
  return net;
}

Network parse_native_json(std::istream& in, const std::string& source) {
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw CaseParseError(source, 0, "", e.what());
  }
  auto field = [&](const nlohmann::json& obj, const std::string& key,
                   const std::string& path) -> const nlohmann::json& {
    if (!obj.is_object() || !obj.contains(key))
      throw CaseParseError(source, 0, path + "." + key, "missing field");
    return obj.at(key);
  };
  auto number = [&](const nlohmann::json& obj, const std::string& key, const std::string& path) {
    const auto& v = field(obj, key, path);
    if (!v.is_number()) throw CaseParseError(source, 0, path + "." + key, "expected a number");
    return v.get<double>();
  };
  auto integer = [&](const nlohmann::json& obj, const std::string& key, const std::string& path) {
    const auto& v = field(obj, key, path);
    if (!v.is_number_integer()) throw CaseParseError(source, 0, path + "." + key, "expected an integer");
    return v.get<int>();
  };

  if (!j.is_object() || j.value("format", "") != "pcscopf-network")
    throw CaseParseError(source, 0, "format", "not a pcscopf-network document");
  const int version = integer(j, "version", "$");
  if (version != kNativeJsonVersion)
    throw CaseParseError(source, 0, "version", "unsupported version " + std::to_string(version));

  Network net;
  net.base_mva = number(j, "base_mva", "$");
  const auto& buses = field(j, "buses", "$");
  for (std::size_t i = 0; i < buses.size(); ++i) {
    const std::string p = "buses[" + std::to_string(i) + "]";
    Bus b;
    b.id = integer(buses[i], "id", p);
    b.is_reference = field(buses[i], "is_reference", p).get<bool>();
    b.external_id = buses[i].value("external_id", -1L);
    net.buses.push_back(b);
  }
  const auto& branches = field(j, "branches", "$");
  for (std::size_t i = 0; i < branches.size(); ++i) {
    const std::string p = "branches[" + std::to_string(i) + "]";
    const auto& o = branches[i];
    Branch br;
    br.id = integer(o, "id", p);
    br.from_bus = integer(o, "from_bus", p);
    br.to_bus = integer(o, "to_bus", p);
    br.reactance_pu = number(o, "reactance_pu", p);
    if (!(br.reactance_pu > 0.0))
      throw CaseParseError(source, 0, p + ".reactance_pu", "nonpositive reactance");
    br.limit_normal_mw = number(o, "limit_normal_mw", p);
    br.limit_short_mw = number(o, "limit_short_mw", p);
    br.limit_long_mw = number(o, "limit_long_mw", p);
    br.outage_probability = number(o, "outage_probability", p);
    net.branches.push_back(br);
  }
  const auto& gens = field(j, "generators", "$");
  for (std::size_t i = 0; i < gens.size(); ++i) {
    const std::string p = "generators[" + std::to_string(i) + "]";
    const auto& o = gens[i];
    Generator g;
    g.id = integer(o, "id", p);
    g.bus = integer(o, "bus", p);
    const auto& segs = field(o, "segments", p);
    for (std::size_t s = 0; s < segs.size(); ++s) {
      const std::string ps = p + ".segments[" + std::to_string(s) + "]";
      g.segments.push_back({number(segs[s], "capacity_mw", ps),
                            number(segs[s], "marginal_cost_per_mwh", ps)});
    }
    g.ramp_short_mw = number(o, "ramp_short_mw", p);
    g.ramp_long_mw = number(o, "ramp_long_mw", p);
    g.redispatch_cost_per_mwh = number(o, "redispatch_cost_per_mwh", p);
    net.generators.push_back(std::move(g));
  }
  const auto& dems = field(j, "demands", "$");
  for (std::size_t i = 0; i < dems.size(); ++i) {
    const std::string p = "demands[" + std::to_string(i) + "]";
    const auto& o = dems[i];
    net.demands.push_back({integer(o, "id", p), integer(o, "bus", p), number(o, "p_demand_mw", p),
                           number(o, "voll_per_mwh", p)});
  }
  if (net.reference_bus() < 0) throw CaseParseError(source, 0, "buses", "missing reference bus");
  return net;
}

void write_native_json(const Network& net, std::ostream& out) {
  nlohmann::ordered_json j;
  j["format"] = "pcscopf-network";
  j["version"] = kNativeJsonVersion;
  j["base_mva"] = net.base_mva;
  auto& buses = j["buses"] = nlohmann::ordered_json::array();
  for (const auto& b : net.buses)
    buses.push_back({{"id", b.id}, {"is_reference", b.is_reference}, {"external_id", b.external_id}});
  auto& branches = j["branches"] = nlohmann::ordered_json::array();
  for (const auto& br : net.branches)
    branches.push_back({{"id", br.id},
                        {"from_bus", br.from_bus},
                        {"to_bus", br.to_bus},
                        {"reactance_pu", br.reactance_pu},
                        {"limit_normal_mw", br.limit_normal_mw},
                        {"limit_short_mw", br.limit_short_mw},
                        {"limit_long_mw", br.limit_long_mw},
                        {"outage_probability", br.outage_probability}});
  auto& gens = j["generators"] = nlohmann::ordered_json::array();
  for (const auto& g : net.generators) {
    auto segs = nlohmann::ordered_json::array();
    for (const auto& s : g.segments)
      segs.push_back({{"capacity_mw", s.capacity_mw}, {"marginal_cost_per_mwh", s.marginal_cost_per_mwh}});
    gens.push_back({{"id", g.id},
                    {"bus", g.bus},
                    {"segments", segs},
                    {"ramp_short_mw", g.ramp_short_mw},
                    {"ramp_long_mw", g.ramp_long_mw},
                    {"redispatch_cost_per_mwh", g.redispatch_cost_per_mwh}});
  }
  auto& dems = j["demands"] = nlohmann::ordered_json::array();
  for (const auto& d : net.demands)
    dems.push_back({{"id", d.id}, {"bus", d.bus}, {"p_demand_mw", d.p_demand_mw}, {"voll_per_mwh", d.voll_per_mwh}});
  out << j.dump(2) << '\n';
}

void write_native_json(const Network& network, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_native_json(network, out);
}

void apply_reliability_csv(Network& net, std::istream& in, const std::string& source) {
  std::vector<int> lines;
  const auto rows = read_csv(in, source, {"branch_id", "pi", "limit_short_mw", "limit_long_mw"}, lines);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const int line = lines[r];
    const double id = csv_number(rows[r][0], source, line, "branch_id");
    const int l = static_cast<int>(id);
    if (id != l || l < 0 || l >= net.branch_count())
      throw CaseParseError(source, line, "branch_id", "unknown branch " + rows[r][0]);
    auto& br = net.branches[l];
    br.outage_probability = csv_number(rows[r][1], source, line, "pi");
    br.limit_short_mw = csv_number(rows[r][2], source, line, "limit_short_mw");
    br.limit_long_mw = csv_number(rows[r][3], source, line, "limit_long_mw");
  }
}

void apply_voll_csv(Network& net, std::istream& in, const std::string& source) {
  std::vector<int> lines;
  const auto rows = read_csv(in, source, {"demand_id", "voll"}, lines);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const int line = lines[r];
    const double id = csv_number(rows[r][0], source, line, "demand_id");
    const int d = static_cast<int>(id);
    if (id != d || d < 0 || d >= static_cast<int>(net.demands.size()))
      throw CaseParseError(source, line, "demand_id", "unknown demand " + rows[r][0]);
    net.demands[d].voll_per_mwh = csv_number(rows[r][1], source, line, "voll");
  }
}

void write_reliability_csv(const Network& net, std::ostream& out) {
  out << "branch_id,pi,limit_short_mw,limit_long_mw\n";
  for (const auto& br : net.branches)
    out << br.id << ',' << format_double(br.outage_probability) << ','
        << format_double(br.limit_short_mw) << ',' << format_double(br.limit_long_mw) << '\n';
}

void write_voll_csv(const Network& net, std::ostream& out) {
  out << "demand_id,voll\n";
  for (const auto& d : net.demands) out << d.id << ',' << format_double(d.voll_per_mwh) << '\n';
}

Network load_case(const std::filesystem::path& path, CaseFormat format, const LoadOptions& options) {
  std::ifstream in(path);
  if (!in) throw CaseParseError(path.string(), 0, "", "cannot open file");
  Network net = format == CaseFormat::native_json ? parse_native_json(in, path.string())
                                                  : parse_matpower(in, options, path.string());

  auto side = [&](const std::optional<std::filesystem::path>& explicit_path,
                  const char* suffix) -> std::optional<std::filesystem::path> {
    if (explicit_path) return explicit_path;
    if (!options.use_companion_files) return std::nullopt;
    auto candidate = path.parent_path() / (path.stem().string() + suffix);
    if (std::filesystem::exists(candidate)) return candidate;
    return std::nullopt;
  };
  if (auto rel = side(options.reliability_csv, ".reliability.csv")) {
    std::ifstream f(*rel);
    if (!f) throw CaseParseError(rel->string(), 0, "", "cannot open file");
    apply_reliability_csv(net, f, rel->string());
  }
  if (auto voll = side(options.voll_csv, ".voll.csv")) {
    std::ifstream f(*voll);
    if (!f) throw CaseParseError(voll->string(), 0, "", "cannot open file");
    apply_voll_csv(net, f, voll->string());
  }
  return net;
}

Network load_case(const std::filesystem::path& path, const LoadOptions& options) {
  const auto ext = path.extension().string();
  return load_case(path, ext == ".json" ? CaseFormat::native_json : CaseFormat::matpower_subset, options);
}

}  // namespace pcscopf
