// Command-line front end. Exit codes:
//   0  success (converged optimal solve, verification passed)
//   1  internal error, or a verification that found violations
//   2  the cutting-plane loop hit its iteration cap
//   3  the problem is infeasible (diagnosis.json written)
//   64 usage error: bad flags, missing or unreadable input
//
// Every run writes manifest.json into --out next to its other outputs.

#include <openssl/evp.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "pcscopf/bench.hpp"
#include "pcscopf/case_io.hpp"
#include "pcscopf/contingency.hpp"
#include "pcscopf/linalg.hpp"
#include "pcscopf/scopf.hpp"
#include "pcscopf/sensitivity.hpp"

#ifndef PCSCOPF_VERSION
#define PCSCOPF_VERSION "unknown"
#endif

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace pcscopf;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitNotConverged = 2;
constexpr int kExitInfeasible = 3;
constexpr int kExitUsage = 64;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read " + path.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
    EVP_MD_CTX_free(ctx);
    throw std::runtime_error("SHA-256 unavailable");
  }
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  std::string hex;
  char byte[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(byte, sizeof byte, "%02x", digest[i]);
    hex += byte;
  }
  return hex;
}

/// Collects what a run read and wrote; written last as manifest.json.
class Run {
 public:
  Run(std::string command, fs::path out_dir, int argc, char** argv)
      : command_(std::move(command)), out_(std::move(out_dir)), started_(std::chrono::steady_clock::now()) {
    for (int i = 0; i < argc; ++i) argv_.push_back(argv[i]);
  }

  void input(const fs::path& p) {
    if (!fs::exists(p)) throw UsageError("input file not found: " + p.string());
    inputs_.push_back({{"path", p.string()}, {"sha256", sha256_file(p)}});
  }

  fs::path output(const std::string& name) {
    fs::create_directories(out_);
    const fs::path p = out_ / name;
    outputs_.push_back(p);
    return p;
  }

  std::ofstream open(const std::string& name) {
    const fs::path p = output(name);
    std::ofstream f(p);
    if (!f) throw std::runtime_error("cannot write " + p.string());
    f.precision(17);
    return f;
  }

  json config = json::object();
  std::optional<std::uint64_t> seed;

  void write_manifest(int exit_code) {
    json m;
    m["format"] = "pcscopf-manifest";
    m["artifact_version"] = PCSCOPF_VERSION;
    m["command"] = command_;
    m["argv"] = argv_;
    m["config"] = config;
    m["inputs"] = inputs_;
    m["seed"] = seed ? json(*seed) : json(nullptr);
    json outs = json::array();
    for (const auto& p : outputs_)
      if (fs::exists(p)) outs.push_back({{"path", p.string()}, {"sha256", sha256_file(p)}});
    m["outputs"] = outs;
    m["exit_code"] = exit_code;
    m["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
    fs::create_directories(out_);
    std::ofstream f(out_ / "manifest.json");
    f << m.dump(2) << '\n';
  }

 private:
  std::string command_;
  fs::path out_;
  std::vector<std::string> argv_;
  json inputs_ = json::array();
  std::vector<fs::path> outputs_;
  std::chrono::steady_clock::time_point started_;
};

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : fallback;
}

template <class T>
T env_number(const char* name, T fallback) {
  const char* v = std::getenv(name);
  if (!v || !*v) return fallback;
  std::istringstream in(v);
  T x{};
  if (!(in >> x) || !in.eof()) throw UsageError(std::string("environment variable ") + name + " is not a number: " + v);
  return x;
}

struct CaseArgs {
  std::string path;
  std::string reliability;
  std::string voll;

  void add_to(CLI::App* cmd) {
    cmd->add_option("case", path, "MATPOWER-subset (.m) or native JSON case file")->required();
    cmd->add_option("--reliability", reliability, "branch_id,pi,limit_short_mw,limit_long_mw CSV");
    cmd->add_option("--voll", voll, "demand_id,voll CSV");
  }

  Network load(Run& run) const {
    run.input(path);
    LoadOptions opt;
    if (!reliability.empty()) {
      run.input(reliability);
      opt.reliability_csv = reliability;
    }
    if (!voll.empty()) {
      run.input(voll);
      opt.voll_csv = voll;
    }
    try {
      return load_case(path, opt);
    } catch (const CaseParseError& e) {
      throw UsageError(e.what());
    }
  }
};

struct SolveArgs {
  std::string variant = "c-scopf";
  double gamma = 0.02;
  int max_iter = 200;
  bool no_islanding = false;

  void from_env() {
    variant = env_or("PCSCOPF_VARIANT", variant);
    gamma = env_number("PCSCOPF_GAMMA", gamma);
    max_iter = env_number("PCSCOPF_MAX_ITER", max_iter);
  }

  void add_to(CLI::App* cmd) {
    cmd->add_option("--variant", variant, "scopf, p-scopf or c-scopf (env PCSCOPF_VARIANT)")->capture_default_str();
    cmd->add_option("--gamma", gamma, "shedding cap per state as a fraction of load (env PCSCOPF_GAMMA)")
        ->capture_default_str();
    cmd->add_option("--max-iter", max_iter, "cap on passes over the contingency list (env PCSCOPF_MAX_ITER)")
        ->capture_default_str();
    cmd->add_flag("--no-islanding", no_islanding, "leave out contingencies that split the system");
  }

  ScopfConfig config(int threads) const {
    ScopfConfig c;
    try {
      c.variant = parse_variant(variant);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    c.gamma_fraction = gamma;
    c.max_iterations = max_iter;
    c.include_islanding = !no_islanding;
    c.threads = threads;
    try {
      c.validate();
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    return c;
  }
};

json config_json(const ScopfConfig& c) {
  return {{"variant", to_string(c.variant)},
          {"gamma_fraction", c.gamma_fraction},
          {"max_iterations", c.max_iterations},
          {"overload_tolerance", c.overload_tolerance},
          {"include_islanding", c.include_islanding},
          {"threads", c.threads}};
}

void write_json(Run& run, const std::string& name, const json& j) { run.open(name) << j.dump(2) << '\n'; }

std::vector<double> parse_list(const std::string& text, const char* what) {
  std::vector<double> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError(std::string("bad number in ") + what + ": '" + item + "'");
    }
  }
  return out;
}

/// Generator outputs and served demand from either a solution JSON or a
/// `generator_id,mw` CSV (served demand is then the full demand).
Vector read_dispatch(const Network& net, const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read dispatch file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) throw UsageError("dispatch file is empty");

  std::vector<double> gen(net.generators.size(), 0.0), served;
  for (const auto& d : net.demands) served.push_back(d.p_demand_mw);

  if (path.extension() == ".json") {
    ScopfSolution s;
    try {
      s = solution_from_json(json::parse(text));
    } catch (const std::exception& e) {
      throw UsageError(std::string("dispatch file: ") + e.what());
    }
    if (s.dispatch_mw.size() != gen.size() || s.pre_shed_mw.size() != served.size())
      throw UsageError("dispatch file does not match the case dimensions");
    gen = s.dispatch_mw;
    for (std::size_t d = 0; d < served.size(); ++d) served[d] -= s.pre_shed_mw[d];
  } else {
    std::istringstream lines(text);
    std::string line;
    int n = 0;
    while (std::getline(lines, line)) {
      if (line.empty() || line[0] == '#' || line.rfind("generator_id", 0) == 0) continue;
      std::istringstream row(line);
      std::string id, mw;
      if (!std::getline(row, id, ',') || !std::getline(row, mw))
        throw UsageError("dispatch line '" + line + "' is not generator_id,mw");
      int g = -1;
      double p = 0.0;
      try {
        g = std::stoi(id);
        p = std::stod(mw);
      } catch (const std::exception&) {
        throw UsageError("dispatch line '" + line + "' is not generator_id,mw");
      }
      if (g < 0 || g >= static_cast<int>(gen.size())) throw UsageError("unknown generator id " + id);
      gen[g] = p;
      ++n;
    }
    if (n == 0) throw UsageError("dispatch file has no rows");
  }
  return bus_injections_mw(net, gen, served);
}

const char* island_kind_name(IslandKind k) {
  switch (k) {
    case IslandKind::connected: return "connected";
    case IslandKind::radial_isolation: return "radial_isolation";
    case IslandKind::multi_split: return "multi_split";
  }
  return "?";
}

// ---------------------------------------------------------------------------

int cmd_solve(Run& run, const CaseArgs& ca, const SolveArgs& sa, bool monolithic, bool timings, int threads) {
  const Network net = ca.load(run);
  const ScopfConfig cfg = sa.config(threads);
  run.config = config_json(cfg);
  run.config["monolithic"] = monolithic;

  ScopfSolution s;
  try {
    s = monolithic ? solve_monolithic(net, cfg) : solve_scopf(net, cfg);
  } catch (const ModelTooLarge& e) {
    throw UsageError(e.what());
  }
  write_json(run, "solution.json", to_json(s, timings));

  if (s.status == ScopfStatus::infeasible) {
    json d = {{"status", "infeasible"}};
    if (s.diagnosis)
      d.update({{"message", s.diagnosis->message},
                {"contingencies", s.diagnosis->contingencies},
                {"rows", s.diagnosis->rows}});
    write_json(run, "diagnosis.json", d);
    std::cerr << "infeasible: " << (s.diagnosis ? s.diagnosis->message : "no diagnosis") << '\n';
    return kExitInfeasible;
  }
  if (s.status == ScopfStatus::not_converged) {
    std::cerr << "not converged: " << (s.diagnosis ? s.diagnosis->message : "") << '\n';
    return kExitNotConverged;
  }

  const SystemMatrices m(net);
  const VerificationReport rep = verify_solution(net, m, s, cfg);
  write_json(run, "verification.json", to_json(rep));
  std::printf("%s objective %.17g, base cost %.17g, verification %s\n", to_string(s.variant), s.objective,
              s.costs.base_cost(), rep.passed ? "passed" : "FAILED");
  return rep.passed ? kExitOk : kExitFailure;
}

int cmd_verify(Run& run, const CaseArgs& ca, const SolveArgs& sa, const std::string& solution_path, int threads) {
  const Network net = ca.load(run);
  run.input(solution_path);
  std::ifstream in(solution_path);
  ScopfSolution s;
  try {
    s = solution_from_json(json::parse(in));
  } catch (const std::exception& e) {
    throw UsageError(std::string("solution file: ") + e.what());
  }
  ScopfConfig cfg = sa.config(threads);
  cfg.variant = s.variant;  // the document knows which states it covers
  run.config = config_json(cfg);
  const SystemMatrices m(net);
  const VerificationReport rep = verify_solution(net, m, s, cfg);
  write_json(run, "verification.json", to_json(rep));
  std::printf("verification %s: %d states, worst loading %.6f, %zu issues\n", rep.passed ? "passed" : "FAILED",
              rep.states_checked, rep.worst_loading, rep.issues.size());
  return rep.passed ? kExitOk : kExitFailure;
}

int cmd_screen(Run& run, const CaseArgs& ca, const std::string& dispatch, const std::string& method, int threads) {
  const Network net = ca.load(run);
  run.input(dispatch);
  FlowMethod fm;
  if (method == "I" || method == "imml")
    fm = FlowMethod::imml;
  else if (method == "II" || method == "refactorize")
    fm = FlowMethod::refactorize;
  else
    throw UsageError("--method must be I or II");
  run.config = {{"method", method}, {"threads", threads}};
  const Vector p = read_dispatch(net, dispatch);
  const SystemMatrices m(net);
  std::vector<RankedContingency> ranked;
  try {
    ranked = screen_and_rank(net, m, p, {fm, threads});
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("dispatch: ") + e.what());
  }
  auto f = run.open("ranking.csv");
  f << "rank,branch_id,from_bus,to_bus,island_kind,max_overload_ratio_short\n";
  char buf[64];
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    const auto& c = ranked[i].contingency;
    const auto& br = net.branches[c.outaged_branch];
    std::snprintf(buf, sizeof buf, "%.17g", ranked[i].max_overload_ratio_short);
    f << i + 1 << ',' << c.outaged_branch << ',' << net.buses[br.from_bus].external_id << ','
      << net.buses[br.to_bus].external_id << ',' << island_kind_name(c.island_info.kind) << ',' << buf << '\n';
  }
  std::printf("ranked %zu contingencies\n", ranked.size());
  return kExitOk;
}

int cmd_bench(Run& run, const CaseArgs& ca, BenchOptions opt) {
  const Network net = ca.load(run);
  if (opt.system_name.empty()) opt.system_name = fs::path(ca.path).stem().string();
  if (opt.trials < 1 || opt.warmup_trials < 0 || opt.max_contingencies < 0) throw UsageError("bad bench counts");
  run.seed = opt.seed;
  run.config = {{"trials", opt.trials},
                {"warmup_trials", opt.warmup_trials},
                {"max_contingencies", opt.max_contingencies},
                {"system", opt.system_name}};
  const BenchReport rep = bench_methods(net, opt);
  {
    auto f = run.open("bench.csv");
    write_bench_csv(rep, f);
  }
  {
    auto f = run.open("bench_summary.csv");
    write_method_summary_csv(rep, f);
  }
  for (const auto& m : rep.methods)
    std::printf("method %-3s median %.0f ns (p10 %.0f, p90 %.0f)\n", m.method.c_str(), m.median_ns, m.p10_ns,
                m.p90_ns);
  std::printf("max |theta I - II| %.3g, max |row III - IV| %.3g\n", rep.max_theta_deviation,
              rep.max_ptdf_deviation);
  return kExitOk;
}

struct SensitivityArgs {
  int n = 100;
  std::uint64_t seed = 1;
  double gamma_base = 0.02;
  std::string voll_sweep;
  std::string gamma_sweep;
};

int cmd_sensitivity(Run& run, const CaseArgs& ca, const SolveArgs& sa, const SensitivityArgs& args, int threads) {
  const Network net = ca.load(run);
  if (args.n < 1) throw UsageError("--n must be at least 1");
  if (!(args.gamma_base > 0.0)) throw UsageError("--gamma-base must be positive");
  SensitivityOptions opt;
  opt.config = sa.config(1);
  opt.config.variant = Variant::c_scopf;
  opt.gamma_base_fraction = args.gamma_base;
  opt.threads = threads;
  run.seed = args.seed;
  run.config = config_json(opt.config);
  run.config["samples"] = args.n;
  run.config["gamma_base_fraction"] = args.gamma_base;
  run.config["sample_threads"] = threads;

  const auto records = sample_and_run(net, args.n, {}, args.seed, opt);
  {
    auto f = run.open("samples.csv");
    write_samples_csv(records, f);
  }
  int converged = 0;
  for (const auto& r : records) converged += r.converged();
  std::printf("%d of %d samples converged\n", converged, args.n);
  if (converged >= 3) {
    const auto m = correlations(records);
    auto f = run.open("correlations.csv");
    write_correlation_csv(m, f);
  } else {
    std::printf("fewer than three converged samples, no correlation matrix\n");
  }

  if (!args.voll_sweep.empty()) {
    const auto mult = parse_list(args.voll_sweep, "--voll-sweep");
    const auto sweep = pcscopf::voll_sweep(net, mult, {Variant::scopf, Variant::c_scopf, Variant::p_scopf},
                                           sa.config(1));
    auto f = run.open("voll_sweep.csv");
    write_sweep_csv(sweep.points, "voll_multiplier", f);
  }
  if (!args.gamma_sweep.empty()) {
    auto gammas = parse_list(args.gamma_sweep, "--gamma-sweep");
    std::sort(gammas.begin(), gammas.end());
    for (double g : gammas)
      if (!(g > 0.0 && g <= 1.0)) throw UsageError("--gamma-sweep values must lie in (0, 1]");
    ScopfConfig c = sa.config(1);
    c.variant = Variant::c_scopf;
    const auto sweep = pcscopf::gamma_sweep(net, gammas, c);
    auto f = run.open("gamma_sweep.csv");
    write_sweep_csv(sweep.points, "gamma_fraction", f);
    if (sweep.saturation_gamma) std::printf("objective flat from gamma %.6g\n", *sweep.saturation_gamma);
  }
  return kExitOk;
}

int cmd_convert(Run& run, const CaseArgs& ca, const std::string& name, bool side_files) {
  const Network net = ca.load(run);
  const fs::path target(name);
  if (target.has_parent_path() || target.is_absolute()) throw UsageError("--name must be a plain file name");
  write_native_json(net, run.output(name));
  if (side_files) {
    const std::string stem = target.stem().string();
    {
      auto f = run.open(stem + ".reliability.csv");
      write_reliability_csv(net, f);
    }
    auto f = run.open(stem + ".voll.csv");
    write_voll_csv(net, f);
  }
  std::printf("%d buses, %d branches, %zu generators, %zu demands\n", net.bus_count(), net.branch_count(),
              net.generators.size(), net.demands.size());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Probabilistic corrective security-constrained DC OPF"};
  app.set_version_flag("--version", PCSCOPF_VERSION);
  app.require_subcommand(1);

  std::string out_dir;
  int threads = 1;
  CaseArgs ca;
  SolveArgs sa;
  bool monolithic = false, timings = false;
  std::string solution_path, dispatch_path, method = "I", convert_name;
  bool side_files = false;
  BenchOptions bench;
  bench.system_name.clear();
  SensitivityArgs sens;

  try {
    out_dir = env_or("PCSCOPF_OUT", "pcscopf-out");
    threads = env_number("PCSCOPF_THREADS", 1);
    sa.from_env();
    sens.seed = env_number<std::uint64_t>("PCSCOPF_SEED", sens.seed);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  app.add_option("--out", out_dir, "directory for every output file (env PCSCOPF_OUT)")->capture_default_str();
  app.add_option("--threads", threads, "worker threads where a command can use them (env PCSCOPF_THREADS)")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);

  auto* solve = app.add_subcommand("solve", "run the cutting-plane SCOPF and verify the result");
  ca.add_to(solve);
  sa.add_to(solve);
  solve->add_flag("--monolithic", monolithic, "solve the full formulation in one LP (small systems only)");
  solve->add_flag("--timings", timings, "include phase timings in solution.json");

  auto* verify = app.add_subcommand("verify", "re-check a solution file against a case");
  ca.add_to(verify);
  sa.add_to(verify);
  verify->add_option("--solution", solution_path, "solution.json from a solve")->required();

  auto* screen = app.add_subcommand("screen", "rank contingencies by short-term overload at a dispatch");
  ca.add_to(screen);
  screen->add_option("--dispatch", dispatch_path, "generator_id,mw CSV or a solution.json")->required();
  screen->add_option("--method", method, "I (rank-one update) or II (refactorize)")->capture_default_str();

  auto* bench_cmd = app.add_subcommand("bench", "time the four contingency power flow methods");
  ca.add_to(bench_cmd);
  bench_cmd->add_option("--trials", bench.trials)->capture_default_str();
  bench_cmd->add_option("--warmup", bench.warmup_trials)->capture_default_str();
  bench_cmd->add_option("--seed", bench.seed, "(env PCSCOPF_SEED)")->capture_default_str();
  bench_cmd->add_option("--max-contingencies", bench.max_contingencies, "0 times all of them")
      ->capture_default_str();
  bench_cmd->add_option("--system", bench.system_name, "name written to the CSV (default: case file stem)");

  auto* sens_cmd = app.add_subcommand("sensitivity", "random parameter study and VOLL/Gamma sweeps");
  ca.add_to(sens_cmd);
  sa.add_to(sens_cmd);
  sens_cmd->add_option("--n", sens.n, "number of samples")->capture_default_str();
  sens_cmd->add_option("--seed", sens.seed, "(env PCSCOPF_SEED)")->capture_default_str();
  sens_cmd->add_option("--gamma-base", sens.gamma_base, "load fraction the Gamma multiplier applies to")
      ->capture_default_str();
  sens_cmd->add_option("--voll-sweep", sens.voll_sweep, "comma-separated VOLL multipliers");
  sens_cmd->add_option("--gamma-sweep", sens.gamma_sweep, "comma-separated Gamma fractions");

  auto* convert = app.add_subcommand("convert", "write a case as native JSON");
  ca.add_to(convert);
  convert->add_option("--name", convert_name, "output file name inside --out")->required();
  convert->add_flag("--side-files", side_files, "also write <stem>.reliability.csv and <stem>.voll.csv");

  bench.seed = sens.seed;
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  CLI::App* chosen = app.get_subcommands().front();
  Run run(chosen->get_name(), out_dir, argc, argv);
  int code = kExitFailure;
  try {
    if (chosen == solve)
      code = cmd_solve(run, ca, sa, monolithic, timings, threads);
    else if (chosen == verify)
      code = cmd_verify(run, ca, sa, solution_path, threads);
    else if (chosen == screen)
      code = cmd_screen(run, ca, dispatch_path, method, threads);
    else if (chosen == bench_cmd)
      code = cmd_bench(run, ca, bench);
    else if (chosen == sens_cmd)
      code = cmd_sensitivity(run, ca, sa, sens, threads);
    else
      code = cmd_convert(run, ca, convert_name, side_files);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    code = kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    code = kExitFailure;
  }
  try {
    run.write_manifest(code);
  } catch (const std::exception& e) {
    std::cerr << "error: could not write manifest: " << e.what() << '\n';
    if (code == kExitOk) code = kExitFailure;
  }
  return code;
}
