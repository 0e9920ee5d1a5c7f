#pragma once

// Command-line front end: solve, certify, sweep, partition, pricing-demo.
// Exit codes: 0 success, 2 validation error, 3 resource-cap refusal,
// 1 numerical failure.

#include <chrono>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hmfg/bounds.hpp"
#include "hmfg/io.hpp"
#include "hmfg/mfg_solver.hpp"
#include "hmfg/nplayer_eval.hpp"
#include "hmfg/partition.hpp"
#include "hmfg/pricing.hpp"
#include "hmfg/scenario.hpp"

namespace hmfg::cli {

inline constexpr const char* kVersion = "1.0.0";

namespace fs = std::filesystem;

struct Options {
  std::string command;
  std::string scenario;
  std::string out = "out";
  std::uint64_t seed = 0;
  int threads = 0;
  std::string partition;
  int iters = 200;
  double tol = 1e-10;
  bool nashconv = false;
  int rollouts = 200;
  std::string bound = "explicit";
  std::string vary;
  std::string grid;
};

/// Files written by one command, in write order.
class OutputDir {
 public:
  explicit OutputDir(fs::path root) : root_(std::move(root)) { fs::create_directories(root_); }

  void json_file(const std::string& name, const json& j) {
    write_json(root_ / name, j);
    files_.push_back(name);
  }
  void csv_file(const std::string& name, const CsvTable& t) {
    write_text(root_ / name, t.str());
    files_.push_back(name);
  }
  const std::vector<std::string>& files() const { return files_; }
  const fs::path& root() const { return root_; }

 private:
  fs::path root_;
  std::vector<std::string> files_;
};

inline std::vector<double> parse_grid(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ValidationError("--grid: cannot parse '" + item + "'");
    }
  }
  require(!out.empty(), "--grid must list at least one value");
  return out;
}

// ---------------------------------------------------------------------------
// Partition sources

inline int parse_int_arg(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    int v = std::stoi(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ValidationError(what + ": expected an integer, got '" + s + "'");
  }
}

inline GroupPartition read_partition_file(const std::string& path, int N) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open partition file " + path);
  try {
    json j = json::parse(in);
    GroupPartition p(j.at("assignment").get<std::vector<int>>(), j.at("K").get<int>());
    p.validate_for(N, false);
    return p;
  } catch (const json::exception& e) {
    throw ValidationError("partition file " + path + ": " + e.what());
  }
}

/// kmeans:K | exact[:K_max] | local[:K_max] | file:path
inline PartitionSolution resolve_partition(const std::string& spec, const PartitionInput& in, std::uint64_t seed) {
  const int N = static_cast<int>(in.thetas.size() / in.d);
  const auto colon = spec.find(':');
  const std::string kind = spec.substr(0, colon);
  const std::string arg = colon == std::string::npos ? "" : spec.substr(colon + 1);
  const MicpWeights w = micp_weights(in.aggregate, in.spaces, N);
  PartitionSolution sol;
  if (kind == "kmeans") {
    require(!arg.empty(), "--partition kmeans needs a group count, e.g. kmeans:2");
    const int K = parse_int_arg(arg, "--partition kmeans");
    require(K >= 1 && K <= N, "--partition kmeans:K needs 1 <= K <= N");
    sol = kmeans(in.thetas, in.d, K, seed);
    sol.partition = sol.partition.without_empty_groups();
    const double heter = sol.heter_term;
    detail::fill_micp(sol, in.thetas, in.d, w);
    sol.method = PartitionMethod::kmeans;
    sol.heter_term = heter;
    sol.mf_term = 0.0;
    sol.objective = heter;
  } else if (kind == "exact" || kind == "local") {
    int K_max = kind == "exact" ? N : std::min(N, std::max(2, 2 * suggest_k(N)));
    if (!arg.empty()) K_max = parse_int_arg(arg, "--partition " + kind);
    require(K_max >= 1, "--partition: K_max must be >= 1");
    sol = kind == "exact" ? solve_exact(in.thetas, in.d, K_max, w) : solve_local(in.thetas, in.d, K_max, w, seed);
  } else if (kind == "file") {
    require(!arg.empty(), "--partition file needs a path, e.g. file:groups.json");
    sol.partition = read_partition_file(arg, N);
    sol.method = PartitionMethod::user;
    detail::fill_micp(sol, in.thetas, in.d, w);
  } else {
    throw ValidationError("unknown partition source '" + spec + "' (expected kmeans:K, exact, local or file:path)");
  }
  return sol;
}

// ---------------------------------------------------------------------------
// Pipeline

struct SolveOutcome {
  PartitionSolution partition;
  MeanFieldTypeGame hat;
  MPMFG mpmfg;
  SolveReport report;
};

inline ScenarioModel require_model(const Scenario& sc, const std::string& cmd) {
  auto m = model_of(sc);
  if (!m) throw ValidationError(cmd + " needs a game scenario (type parametric or pricing)");
  return *m;
}

inline SolveOutcome run_solve(const Scenario& sc, const ScenarioModel& model, const Options& o) {
  SolveOutcome r;
  const std::string spec = o.partition.empty() ? sc.default_partition : o.partition;
  r.partition = resolve_partition(spec, partition_input(sc), o.seed);
  r.hat = model.homogenize(r.partition.partition);
  r.mpmfg = build_mpmfg(r.hat);
  r.report = solve_fictitious_play(r.mpmfg, o.iters, o.tol);
  return r;
}

struct CertifyOutcome {
  SolveOutcome solve;
  LipschitzProfile lipschitz;
  ConstantTable table;
  BoundReport bound;
  std::optional<JointEvaluation> joint;
  std::optional<EmpiricalFlowSample> flow_sample;
};

inline CertifyOutcome run_certify(const Scenario& sc, const ScenarioModel& model, const Options& o) {
  require(o.bound == "explicit" || o.bound == "generic", "--bound must be explicit or generic");
  CertifyOutcome c;
  c.solve = run_solve(sc, model, o);
  const auto& part = c.solve.partition.partition;
  const auto sizes = part.sizes();
  const auto& sp = model.spaces;
  c.lipschitz = model.lipschitz(part);
  c.table = constant_table(sp, c.lipschitz, part.K);
  const EpsMfResult mf = eps_mf_bound(sp, c.lipschitz, sizes);
  const NPlayerGame G = model.n_player_game();
  const HeterogeneityProbe probe = model.probe(part);
  const HeterResult heter = eps_heter_generic(G, c.solve.hat, HeterMode::analytic, &probe);
  double eps_solver = 0.0;
  for (double e : c.solve.report.per_group_expl) eps_solver = std::max(eps_solver, e);
  auto rhs = flow_deviation_bound(c.table, c.lipschitz, sizes, false, sp.S, sp.A);
  c.bound = assemble(eps_solver, mf,
                     o.bound == "explicit" ? MfProvenance::explicit_recursion : MfProvenance::generic_rate, heter,
                     std::move(rhs));
  const StrategyProfile expanded = expand_policy(c.solve.report.profile, part);
  if (o.rollouts > 0) {
    MeanFieldFlow flow = forward_flow(c.solve.mpmfg, c.solve.report.profile);
    c.flow_sample = simulate(c.solve.hat, expanded, o.rollouts, o.seed, flow);
  }
  if (o.nashconv) c.joint = nashconv(G, expanded);
  return c;
}

inline json certificate_json(const CertifyOutcome& c) {
  json j{{"eps_solver", c.bound.eps_solver},
         {"eps_mf", c.bound.eps_mf},
         {"eps_heter", c.bound.eps_heter},
         {"total", c.bound.total}};
  if (c.joint) j["nashconv_exact"] = c.joint->nashconv;
  return j;
}

inline json bound_report_json(const Scenario& sc, const CertifyOutcome& c) {
  json j = to_json(c.bound);
  j["scenario"] = sc.name;
  j["partition"] = to_json(c.solve.partition);
  j["lipschitz"] = to_json(c.lipschitz);
  j["constant_table"] = to_json(c.table);
  j["flow_deviation_rhs"] = c.bound.flow_deviation_rhs;
  j["solver"] = json{{"iterations", c.solve.report.iterations},
                     {"weighted_exploitability", c.solve.report.weighted_expl},
                     {"per_group_exploitability", c.solve.report.per_group_expl}};
  if (c.joint) j["joint_evaluation"] = to_json(*c.joint);
  return j;
}

// ---------------------------------------------------------------------------
// Commands

inline void cmd_solve(const Options& o, OutputDir& dir) {
  Scenario sc = load_scenario(o.scenario);
  ScenarioModel model = require_model(sc, "solve");
  SolveOutcome r = run_solve(sc, model, o);
  json j = to_json(r.report);
  j["scenario"] = sc.name;
  j["partition"] = to_json(r.partition);
  j["solver"] = json{{"method", "fictitious_play"}, {"iters", o.iters}, {"tol", o.tol}};
  dir.json_file("solve_report.json", j);
  dir.csv_file("exploitability.csv", exploitability_csv(r.report));
}

inline void cmd_certify(const Options& o, OutputDir& dir) {
  Scenario sc = load_scenario(o.scenario);
  ScenarioModel model = require_model(sc, "certify");
  CertifyOutcome c = run_certify(sc, model, o);
  dir.json_file("certificate.json", certificate_json(c));
  dir.json_file("bound_report.json", bound_report_json(sc, c));
  dir.csv_file("exploitability.csv", exploitability_csv(c.solve.report));
  dir.csv_file("eps_t.csv", eps_t_csv(c.bound));
  if (c.flow_sample) dir.csv_file("flow_deviation.csv", flow_deviation_csv(*c.flow_sample, c.bound.flow_deviation_rhs));
}

inline int fixed_kmeans_k(const Options& o, const Scenario& sc) {
  const std::string spec = o.partition.empty() ? sc.default_partition : o.partition;
  require(spec.rfind("kmeans:", 0) == 0, "sweep --vary N uses a kmeans:K partition");
  return parse_int_arg(spec.substr(7), "--partition kmeans");
}

/// One row of the partition trade-off for a kmeans partition with K groups.
inline std::vector<double> partition_row(const PartitionInput& in, int K, std::uint64_t seed) {
  const int N = static_cast<int>(in.thetas.size() / in.d);
  require(K >= 1 && K <= N, "sweep: K must lie in [1, N]");
  auto sol = kmeans(in.thetas, in.d, K, seed);
  const GroupPartition part = sol.partition.without_empty_groups();
  const double heter = eps_heter_parametric(in.thetas, in.d, part, in.aggregate, in.spaces.T);
  const double mf = eps_mf_partition(part, in.aggregate, in.spaces);
  const double micp = micp_objective(part, in.thetas, in.d, micp_weights(in.aggregate, in.spaces, N));
  return {double(N), double(K), sol.heter_term, heter, mf, heter + mf, micp};
}

inline const std::vector<std::string> kPartitionColumns = {"N",      "K",     "within_sse_mean", "eps_heter",
                                                           "eps_mf", "total", "micp_objective"};

inline std::vector<double> two_type_row(const PricingParams& p, double N, double alpha, double c2a, double c2b) {
  const auto th = representative_threshold(p, alpha, c2a, c2b);
  const double mf1 = pricing_eps_mf_one(p, N), mf2 = pricing_eps_mf_two(p, N, alpha);
  const double h1 = pricing_eps_heter_one(p, alpha, c2a, c2b);
  const double t1 = mf1 + h1, t2 = mf2;
  return {N, alpha, std::abs(c2a - c2b), mf1, h1, t1, mf2, 0.0, t2, th.N_star, t1 <= t2 ? 1.0 : 2.0};
}

inline const std::vector<std::string> kTwoTypeColumns = {"N",       "alpha",       "c2gap",   "eps_mf_1",
                                                         "eps_heter_1", "total_1", "eps_mf_2", "eps_heter_2",
                                                         "total_2", "N_star",      "better_model"};

inline void cmd_sweep(const Options& o, OutputDir& dir) {
  Scenario sc = load_scenario(o.scenario);
  const auto grid = parse_grid(o.grid);
  CsvTable t;
  if (sc.two_type && (o.vary == "N" || o.vary == "alpha" || o.vary == "c2gap")) {
    const auto& tt = *sc.two_type;
    t.header = kTwoTypeColumns;
    for (double g : grid) {
      if (o.vary == "N") {
        require(g >= 1.0, "sweep: N must be >= 1");
        t.rows.push_back(two_type_row(*sc.pricing, g, tt.alpha, tt.c2a, tt.c2b));
      } else if (o.vary == "alpha") {
        require(g > 0.0 && g < 1.0, "sweep: alpha must lie in (0, 1)");
        t.rows.push_back(two_type_row(*sc.pricing, tt.N, g, tt.c2a, tt.c2b));
      } else {
        require(g > 0.0, "sweep: c2gap must be > 0");
        t.rows.push_back(two_type_row(*sc.pricing, tt.N, tt.alpha, tt.c2a, tt.c2a + g));
      }
    }
  } else if (o.vary == "K") {
    const PartitionInput in = partition_input(sc);
    t.header = kPartitionColumns;
    for (double g : grid) t.rows.push_back(partition_row(in, static_cast<int>(std::lround(g)), o.seed));
  } else if (o.vary == "N") {
    const int K = fixed_kmeans_k(o, sc);
    t.header = kPartitionColumns;
    for (double g : grid) {
      const int N = static_cast<int>(std::lround(g));
      require(N >= 1, "sweep: N must be >= 1");
      t.rows.push_back(partition_row(partition_input(with_n_players(sc, N)), K, o.seed));
    }
  } else if (o.vary == "alpha" || o.vary == "c2gap") {
    throw ValidationError("sweep --vary " + o.vary + " needs a two_type pricing scenario");
  } else {
    throw ValidationError("--vary must be one of N, K, alpha, c2gap");
  }
  dir.csv_file("sweep_" + o.vary + ".csv", t);
}

inline void cmd_partition(const Options& o, OutputDir& dir) {
  Scenario sc = load_scenario(o.scenario);
  const PartitionInput in = partition_input(sc);
  const std::string spec = o.partition.empty() ? sc.default_partition : o.partition;
  PartitionSolution sol = resolve_partition(spec, in, o.seed);
  const int N = static_cast<int>(in.thetas.size() / in.d);
  const MicpWeights w = micp_weights(in.aggregate, in.spaces, N);
  json j = to_json(sol);
  j["scenario"] = sc.name;
  j["micp_weights"] = json{{"heter_weight", w.heter_weight}, {"mf_weight", w.mf_weight}};
  j["micp_objective"] = micp_objective(sol.partition, in.thetas, in.d, w);
  j["eps_heter"] = eps_heter_parametric(in.thetas, in.d, sol.partition, in.aggregate, in.spaces.T);
  j["eps_mf"] = eps_mf_partition(sol.partition, in.aggregate, in.spaces);
  dir.json_file("partition.json", j);
}

inline void cmd_pricing_demo(const Options& o, OutputDir& dir) {
  Scenario sc = load_scenario(o.scenario);
  if (!sc.two_type) throw ValidationError("pricing-demo needs a pricing scenario with a two_type block");
  const auto& tt = *sc.two_type;
  const PricingParams& p = *sc.pricing;
  std::vector<double> grid;
  if (!o.grid.empty()) {
    grid = parse_grid(o.grid);
  } else {
    for (int e = 1; e <= 12; ++e) grid.push_back(std::pow(10.0, e));
  }
  TwoTypeStudy st = two_type_study(tt.alpha, tt.c2a, tt.c2b, p, grid);
  dir.csv_file("two_type.csv", two_type_csv(st));

  json desk = json::array();
  ScenarioModel model = model_of(p);
  for (const auto& [label, part] : {std::pair<std::string, GroupPartition>{"representative", GroupPartition::single(p.n_firms())},
                                    std::pair<std::string, GroupPartition>{"two_population", two_type_partition(p)}}) {
    SolveOutcome r;
    r.partition.partition = part;
    r.partition.method = PartitionMethod::user;
    r.hat = model.homogenize(part);
    r.mpmfg = build_mpmfg(r.hat);
    r.report = solve_fictitious_play(r.mpmfg, o.iters, o.tol);
    const auto lip = model.lipschitz(part);
    const auto mf = eps_mf_bound(p.spaces(), lip, part.sizes());
    const auto probe = model.probe(part);
    const auto heter = eps_heter_generic(model.n_player_game(), r.hat, HeterMode::analytic, &probe);
    json row{{"model", label},
             {"K", part.K},
             {"exploitability", r.report.weighted_expl},
             {"eps_mf_explicit", mf.explicit_value},
             {"eps_mf_generic", mf.generic_value},
             {"eps_heter", heter.eps_heter}};
    if (o.nashconv) row["nashconv_exact"] = nashconv(model.n_player_game(), expand_policy(r.report.profile, part)).nashconv;
    desk.push_back(row);
  }
  const double big = 1e8;
  json j{{"scenario", sc.name},
         {"alpha", tt.alpha},
         {"c2", {tt.c2a, tt.c2b}},
         {"generic_constant", pricing_generic_constant(p)},
         {"ctilde", pricing_ctilde(p)},
         {"w", pricing_w(p)},
         {"threshold", to_json(st.threshold)},
         {"eps_heter_1", pricing_eps_heter_one(p, tt.alpha, tt.c2a, tt.c2b)},
         {"mf_ratio_at_1e8", pricing_eps_mf_two(p, big, tt.alpha) / pricing_eps_mf_one(p, big)},
         {"mf_ratio_limit", std::sqrt(tt.alpha) + std::sqrt(1.0 - tt.alpha)},
         {"desk", desk}};
  j["crossing"] = st.crossing ? json(*st.crossing) : json(nullptr);
  dir.json_file("pricing_demo.json", j);
}

// ---------------------------------------------------------------------------
// Entry point

inline json manifest_json(const Options& o, const OutputDir& dir, double seconds) {
  return json{{"tool", "hmfg"},
              {"version", kVersion},
              {"command", o.command},
              {"scenario", o.scenario},
              {"seed", o.seed},
              {"output_directory", o.out},
              {"overrides",
               {{"threads", o.threads},
                {"partition", o.partition},
                {"iters", o.iters},
                {"tol", o.tol},
                {"nashconv", o.nashconv},
                {"rollouts", o.rollouts},
                {"bound", o.bound},
                {"vary", o.vary},
                {"grid", o.grid}}},
              {"files", dir.files()},
              {"wall_clock_seconds", seconds}};
}

inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  Options o;
  CLI::App app{"Heterogeneous mean-field game solver and error certificates", "hmfg"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  auto common = [&](CLI::App* c) {
    c->add_option("scenario", o.scenario, "scenario JSON file")->required();
    c->add_option("--out", o.out, "output directory");
    c->add_option("--seed", o.seed, "seed for every random draw");
    c->add_option("--threads", o.threads, "worker threads (0 = hardware)")->check(CLI::NonNegativeNumber);
    c->add_option("--partition", o.partition, "kmeans:K | exact[:K_max] | local[:K_max] | file:path");
  };
  auto solver = [&](CLI::App* c) {
    c->add_option("--iters", o.iters, "fictitious-play iterations")->check(CLI::PositiveNumber);
    c->add_option("--tol", o.tol, "stop once weighted exploitability <= tol")->check(CLI::NonNegativeNumber);
    c->add_flag("--nashconv", o.nashconv, "exact NashConv of the expanded policy (joint state cap applies)");
  };
  auto* solve = app.add_subcommand("solve", "solve the partitioned mean-field game by fictitious play");
  common(solve);
  solver(solve);
  auto* certify = app.add_subcommand("certify", "solve, expand and bound the N-player exploitability");
  common(certify);
  solver(certify);
  certify->add_option("--rollouts", o.rollouts, "Monte Carlo rollouts for the flow deviation CSV (0 = skip)")
      ->check(CLI::NonNegativeNumber);
  certify->add_option("--bound", o.bound, "mean-field term: explicit or generic");
  auto* sweep = app.add_subcommand("sweep", "error components over a parameter grid");
  common(sweep);
  sweep->add_option("--vary", o.vary, "N | K | alpha | c2gap")->required();
  sweep->add_option("--grid", o.grid, "comma-separated grid values")->required();
  auto* partition = app.add_subcommand("partition", "group players by parameter");
  common(partition);
  auto* demo = app.add_subcommand("pricing-demo", "representative versus two-population pricing study");
  common(demo);
  solver(demo);
  demo->add_option("--grid", o.grid, "comma-separated N values");

  std::vector<std::string> argv_store{"hmfg"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_store) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }
  for (auto* c : app.get_subcommands()) o.command = c->get_name();

  const auto start = std::chrono::steady_clock::now();
  try {
    set_num_threads(o.threads);
    OutputDir dir(o.out);
    if (o.command == "solve") cmd_solve(o, dir);
    else if (o.command == "certify") cmd_certify(o, dir);
    else if (o.command == "sweep") cmd_sweep(o, dir);
    else if (o.command == "partition") cmd_partition(o, dir);
    else cmd_pricing_demo(o, dir);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_json(dir.root() / "manifest.json", manifest_json(o, dir, secs));
    out << "wrote " << dir.files().size() + 1 << " files to " << o.out << "\n";
    return 0;
  } catch (const CapExceeded& e) {
    err << "error: " << e.what() << "\n"
        << "hint: requested size " << e.required() << " exceeds the joint-state cap; raise HMFG_JOINT_STATE_CAP"
        << " or drop --nashconv / use a local partition search\n";
    return 3;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const Unsupported& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const json::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace hmfg::cli
