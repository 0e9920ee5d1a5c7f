// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>

#include "helpers.hpp"
#include "oracles.hpp"
#include "hmfg/cli.hpp"

using namespace hmfg;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string num(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3g", x);
  return buf;
}

// 1 ------------------------------------------------------------------------
Outcome bound_validity() {
  Outcome o;
  double worst_ratio = 0.0;
  int held = 0;
  for (int i = 0; i < 20; ++i) {
    CounterRng rng(i, 0xacc1);
    const int N = 4 + static_cast<int>(rng.below(5));
    const int S = N <= 6 ? 2 + static_cast<int>(rng.below(2)) : 2;
    const int A = 1 + static_cast<int>(rng.below(2));
    const int T = 1 + static_cast<int>(rng.below(3));
    const int K = 1 + static_cast<int>(rng.below(2));
    json j{{"type", "parametric"},
           {"name", "random_" + std::to_string(i)},
           {"S", S},
           {"A", A},
           {"T", T},
           {"generate",
            {{"N", N},
             {"seed", 1000 + i},
             {"d", 1 + static_cast<int>(rng.below(2))},
             {"theta_spread", rng.uniform(0.1, 1.0)},
             {"lambda_R", rng.uniform(0.0, 0.8)},
             {"lambda_P", rng.uniform(0.0, 0.8)}}},
           {"partition", "kmeans:" + std::to_string(K)}};
    Scenario sc = parse_scenario(j);
    ScenarioModel model = *model_of(sc);
    cli::Options opt;
    opt.seed = i;
    opt.nashconv = true;
    opt.rollouts = 0;
    auto c = cli::run_certify(sc, model, opt);
    const double nc = c.joint->nashconv, total = c.bound.total;
    if (nc <= total) ++held;
    else o.detail += " case " + std::to_string(i) + ": nashconv " + num(nc) + " > " + num(total) + ";";
    worst_ratio = std::max(worst_ratio, nc / total);
  }
  o.pass = held == 20;
  o.detail = std::to_string(held) + "/20 certificates hold, max nashconv/total " + num(worst_ratio) + o.detail;
  return o;
}

// 2 ------------------------------------------------------------------------
Outcome kmeans_uniform() {
  Outcome o;
  const int N = 100000;
  CounterRng rng(2024, 0);
  std::vector<double> th(N);
  for (auto& x : th) x = rng.uniform();
  for (int K : {1, 2, 4}) {
    auto s = kmeans(th, 1, K, 7);
    const double want = 1.0 / (12.0 * K * K);
    const double rel = std::abs(s.objective - want) / want;
    const bool ok = rel <= (K == 1 ? 0.02 : 0.10);
    o.pass = o.pass && ok;
    o.detail += "K=" + std::to_string(K) + " rel err " + num(rel) + "; ";
    if (K == 2) {
      std::vector<double> c = s.centroids;
      std::sort(c.begin(), c.end());
      const double e = std::max(std::abs(c[0] - 0.25), std::abs(c[1] - 0.75));
      o.pass = o.pass && e <= 0.02;
      o.detail += "centroid err " + num(e) + "; ";
    }
  }
  o.detail.resize(o.detail.size() - 2);
  return o;
}

// 3 ------------------------------------------------------------------------
Outcome partition_oracle() {
  Outcome o;
  int matched = 0;
  double worst = 0.0;
  bool local_never_better = true;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    CounterRng rng(seed, 0xacc3);
    const int n = 4 + static_cast<int>(rng.below(5));
    const int d = 1 + static_cast<int>(rng.below(2));
    const int K_max = 2 + static_cast<int>(rng.below(3));
    std::vector<double> th(static_cast<std::size_t>(n) * d);
    for (auto& x : th) x = rng.uniform();
    MicpWeights w{1.0, rng.uniform(0.02, 0.2)};
    auto ex = solve_exact(th, d, K_max, w);
    double best = std::numeric_limits<double>::infinity();
    for (const auto& a : oracle::all_partitions(n, K_max))
      best = std::min(best, oracle::partition_objective(a, th, d, w.heter_weight, w.mf_weight));
    worst = std::max(worst, std::abs(ex.objective - best));
    auto lo = solve_local(th, d, K_max, w, seed);
    if (lo.objective < ex.objective - 1e-9) local_never_better = false;
    if (std::abs(lo.objective - ex.objective) <= 1e-9) ++matched;
  }
  o.pass = worst <= 1e-9 && local_never_better && matched >= 19;
  o.detail = "max |exact - oracle| " + num(worst) + ", local matched " + std::to_string(matched) + "/20" +
             (local_never_better ? "" : ", local beat exact");
  return o;
}

// 4 ------------------------------------------------------------------------
Outcome best_response_enumeration() {
  Outcome o;
  const Spaces sp{2, 2, 2};
  double gap = 0.0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    auto g = testing_helpers::random_mpmfg(sp, 4, 1, seed + 4000, 0.7, 0.7);
    CounterRng rng(seed, 0xacc4);
    StrategyProfile pi{testing_helpers::random_policy(sp, rng)};
    auto f = forward_flow(g, pi);
    GroupMdp m = group_mdp(g, f, 0);
    // random initial law so both states matter
    const double p = rng.uniform();
    std::vector<double> mu0{p, 1.0 - p};
    auto br = best_response(m, mu0);
    gap = std::max(gap, std::abs(br.value - oracle::brute_force_best_value(m, mu0)));
  }
  o.pass = gap < 1e-12;
  o.detail = "50 MDPs, max value gap " + num(gap);
  return o;
}

// 5 ------------------------------------------------------------------------
Outcome flow_conservation() {
  Outcome o;
  double mass = 0.0, mix_err = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    CounterRng rng(seed, 0xacc5);
    const Spaces sp{1 + static_cast<int>(rng.below(4)), 1 + static_cast<int>(rng.below(3)),
                    1 + static_cast<int>(rng.below(4))};
    const int K = 1 + static_cast<int>(rng.below(3));
    const int N = K + static_cast<int>(rng.below(6));
    auto g = testing_helpers::random_mpmfg(sp, N, K, seed + 5000);
    StrategyProfile pi;
    for (int k = 0; k < K; ++k) pi.push_back(testing_helpers::random_policy(sp, rng));
    auto f = forward_flow(g, pi);
    for (int t = 0; t <= sp.T; ++t)
      for (int k = 0; k < K; ++k) {
        double m = 0.0;
        for (double x : f.group(t, k)) m += x;
        mass = std::max(mass, std::abs(m - 1.0));
      }
    for (int k = 0; k < K; ++k) {
      std::vector<double> mix(static_cast<std::size_t>(sp.periods()) * sp.S * sp.A, 0.0);
      for (int s0 = 0; s0 < sp.S; ++s0) {
        if (g.mu0(k)[s0] == 0.0) continue;
        auto d = agent_flow(g, f, k, s0, pi[k]);
        for (std::size_t i = 0; i < mix.size(); ++i) mix[i] += g.mu0(k)[s0] * d[i];
      }
      for (int t = 0; t <= sp.T; ++t)
        for (int s = 0; s < sp.S; ++s)
          for (int a = 0; a < sp.A; ++a)
            mix_err = std::max(mix_err, std::abs(mix[(t * sp.S + s) * sp.A + a] - f.l(t, k, s, a)));
    }
  }
  o.pass = mass < 1e-10 && mix_err < 1e-10;
  o.detail = "100 games, max mass error " + num(mass) + ", max mixture error " + num(mix_err);
  return o;
}

// 6 ------------------------------------------------------------------------
PricingParams market(double alpha, double c2a, double c2b) {
  PricingParams b;
  b.S_cap = 2;
  b.Q_cap = 1;
  b.H_cap = 1;
  b.T = 2;
  b.Q0 = 1.0;
  b.d = 1.0;
  b.sigma = 0.5;
  b.C = 1.0;
  return two_type_params(b, 10, alpha, c2a, c2b, {0.1, 0.1, 0.0, 0.1, 0.1});
}

Outcome pricing_closed_forms() {
  Outcome o;
  double heter_err = 0.0;
  for (double alpha : {0.1, 0.3, 0.5, 0.7})
    for (auto [a, b] : {std::pair{0.1, 0.4}, std::pair{0.0, 1.0}, std::pair{0.6, 0.2}}) {
      auto p = market(alpha, a, b);
      auto part = GroupPartition::single(p.n_firms());
      auto probe = pricing_heterogeneity_probe(p, part);
      auto h = eps_heter_generic(build_n_player(p), build_pricing_mftype(p, part), HeterMode::analytic, &probe);
      const double want = 2.0 * (p.H_cap + p.Q_cap) * (p.T + 1) * std::sqrt(alpha * (1 - alpha)) * std::abs(a - b);
      heter_err = std::max(heter_err, std::abs(h.eps_heter - want));
    }
  double ratio_err = 0.0;
  for (double alpha : {0.1, 0.3, 0.5}) {
    auto p = market(alpha, 0.2, 0.6);
    const double r = pricing_eps_mf_two(p, 1e8, alpha) / pricing_eps_mf_one(p, 1e8);
    ratio_err = std::max(ratio_err, std::abs(r - (std::sqrt(alpha) + std::sqrt(1 - alpha))));
  }
  // ordering on a log grid from well below the crossing to well above N*
  bool ordering_ok = true;
  std::string flips_s;
  for (double alpha : {0.3, 0.5}) {
    auto p = market(alpha, 0.2, 0.6);
    auto th = representative_threshold(p, alpha, 0.2, 0.6);
    auto probe = two_type_study(alpha, 0.2, 0.6, p, {1.0});
    const double n0 = *probe.crossing;
    std::vector<double> grid;
    const double lo = std::log(std::max(1.0, n0 / 10.0)), hi = std::log(th.N_star * 10.0);
    for (int i = 0; i <= 60; ++i) grid.push_back(std::exp(lo + (hi - lo) * i / 60.0));
    auto st = two_type_study(alpha, 0.2, 0.6, p, grid);
    int flips = 0;
    for (std::size_t i = 0; i < st.rows.size(); ++i) {
      const auto& r = st.rows[i];
      const bool two_better = r.total_1 > r.total_2;
      if (r.N >= th.N_star && !two_better) ordering_ok = false;
      if (r.N < n0 && two_better) ordering_ok = false;
      if (i > 0 && two_better != (st.rows[i - 1].total_1 > st.rows[i - 1].total_2)) ++flips;
    }
    ordering_ok = ordering_ok && flips == 1 && n0 <= th.N_star;
    flips_s += " alpha=" + num(alpha) + ": crossing " + num(n0) + " <= N* " + num(th.N_star) + ", " +
               std::to_string(flips) + " flip;";
  }
  o.pass = heter_err <= 1e-12 && ratio_err <= 1e-3 && ordering_ok;
  o.detail = "heter err " + num(heter_err) + ", ratio err " + num(ratio_err) + ";" + flips_s;
  return o;
}

// 7 ------------------------------------------------------------------------
Outcome flow_deviation() {
  Outcome o;
  int violations = 0, decayed = 0;
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    CounterRng rng(seed, 0xacc7);
    const Spaces sp{2 + static_cast<int>(rng.below(2)), 1 + static_cast<int>(rng.below(2)),
                    1 + static_cast<int>(rng.below(3))};
    const int K = 1 + static_cast<int>(rng.below(2));
    RandomFamilyOptions opt;
    opt.n_types = 1;
    opt.lambda_R = rng.uniform(0.0, 0.8);
    opt.lambda_P = rng.uniform(0.0, 0.8);
    StrategyProfile pibar;
    for (int k = 0; k < K; ++k) pibar.push_back(testing_helpers::random_policy(sp, rng));
    double first = 0.0, last = 0.0;
    for (int N : {10, 100, 1000}) {
      auto fam = random_family(sp, N, seed + 7000, opt);
      auto part = testing_helpers::blocks(N, K);
      auto hat = build_mptype_from_partition(fam, part);
      auto g = build_mpmfg(hat);
      auto sample = simulate(hat, expand_policy(pibar, part), 200, seed, forward_flow(g, pibar));
      auto lip = fam.lipschitz(part);
      auto rhs = flow_deviation_bound(constant_table(sp, lip, K), lip, part.sizes(), false, sp.S, sp.A);
      double sum = 0.0;
      for (std::size_t c = 0; c < rhs.size(); ++c) {
        if (sample.deviation_l1[c] > rhs[c]) ++violations;
        if (rhs[c] > 0.0) worst = std::max(worst, sample.deviation_l1[c] / rhs[c]);
        sum += sample.deviation_l1[c];
      }
      if (N == 10) first = sum;
      if (N == 1000) last = sum;
    }
    if (last < first) ++decayed;
  }
  o.pass = violations == 0 && decayed == 20;
  o.detail = "20 instances x N in {10,100,1000}: " + std::to_string(violations) +
             " bound violations, max empirical/bound " + num(worst) + ", decay N=1000 < N=10 in " +
             std::to_string(decayed) + "/20";
  return o;
}

// 8 ------------------------------------------------------------------------
Outcome constant_tables() {
  Outcome o;
  long compared = 0, mismatched = 0;
  for (int T = 0; T <= 10; ++T)
    for (int K = 1; K <= 4; ++K) {
      CounterRng rng(T * 10 + K, 0xacc8);
      const int S = 1 + static_cast<int>(rng.below(4)), A = 1 + static_cast<int>(rng.below(3));
      std::vector<double> wr(K), wp(K);
      for (int k = 0; k < K; ++k) {
        wr[k] = rng.uniform(0.0, 0.6);
        wp[k] = rng.uniform(0.0, 0.6);
      }
      auto lip = LipschitzProfile::make(wr, wp, 1.5);
      auto tb = constant_table({S, A, T}, lip, K);
      auto ref = oracle::recursion_tables(S, A, T, lip.w_P);
      for (int t = 0; t <= T; ++t)
        for (int k = 0; k < K; ++k) {
          mismatched += tb.ck(t, k) != ref.Ck[t][k];
          mismatched += tb.ctk(t, k) != ref.Ctk[t][k];
          compared += 2;
          for (int j = 0; j < K; ++j) {
            mismatched += tb.c(t, k, j) != ref.C[t][k][j];
            mismatched += tb.ct(t, k, j) != ref.Ct[t][k][j];
            compared += 2;
          }
        }
    }
  o.pass = mismatched == 0;
  o.detail = std::to_string(compared) + " entries compared, " + std::to_string(mismatched) + " differ";
  return o;
}

// 9 ------------------------------------------------------------------------
struct DeskCase {
  NPlayerGame game;
  StrategyProfile profile;
};

DeskCase desk_case(int i) {
  CounterRng rng(i, 0xacc9);
  DeskCase c;
  if (i % 2 == 0) {
    PricingParams p;
    p.S_cap = 2;
    p.Q_cap = 1;
    p.H_cap = 1;
    p.T = 2;
    p.Q0 = 1.0;
    p.d = rng.uniform(0.5, 2.0);
    p.sigma = rng.uniform(0.3, 0.9);
    p.C = 1.0;
    const int firms = 2 + static_cast<int>(rng.below(2));
    for (int f = 0; f < firms; ++f)
      for (int m = 0; m < 5; ++m) p.coeffs.push_back(rng.uniform(0.0, 0.5));
    for (int f = 0; f < firms; ++f) p.initial_states.push_back(static_cast<int>(rng.below(3)));
    c.game = build_n_player(p);
  } else {
    const Spaces sp{2, 2, 2};
    c.game = testing_helpers::dense_game(sp, 3, 900 + i);
  }
  for (int k = 0; k < c.game.n_players; ++k) c.profile.push_back(testing_helpers::random_policy(c.game.spaces, rng));
  return c;
}

bool within_three_se(const DeskCase& c, std::uint64_t seed) {
  auto sim = simulate(c.game, c.profile, 4000, seed);
  auto ex = exact_value(c.game, c.profile);
  for (int i = 0; i < c.game.n_players; ++i)
    if (std::abs(sim.value_mean[i] - ex[i]) > 3.0 * sim.value_se[i]) return false;
  return true;
}

// Re-run policy: an instance outside 3 SE is re-run once at seed + 1000;
// one such first-pass failure is tolerated if its re-run agrees.
Outcome monte_carlo_consistency() {
  Outcome o;
  int first_fail = 0, rerun_fail = 0;
  for (int i = 0; i < 20; ++i) {
    auto c = desk_case(i);
    if (within_three_se(c, i)) continue;
    ++first_fail;
    if (!within_three_se(c, i + 1000)) ++rerun_fail;
  }
  o.pass = first_fail <= 1 && rerun_fail == 0;
  o.detail = "20 instances, " + std::to_string(first_fail) + " outside 3 SE on first pass, " +
             std::to_string(rerun_fail) + " after re-run";
  return o;
}

// 10 -----------------------------------------------------------------------
std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism() {
  Outcome o;
  const std::string dir = HMFG_SCENARIO_DIR;
  const fs::path root = fs::temp_directory_path() / "hmfg_acceptance_determinism";
  int compared = 0, differ = 0;
  for (const char* cmd : {"solve", "certify"})
    for (const char* name : {"parametric_mixed", "homogeneous", "pricing_desk", "pricing_table"}) {
      std::vector<fs::path> outs;
      for (const char* th : {"1", "8"}) {
        const fs::path out = root / (std::string(cmd) + "_" + name + "_" + th);
        fs::remove_all(out);
        std::vector<std::string> args{cmd, dir + "/" + name + ".json", "--out", out.string(), "--seed", "5",
                                      "--threads", th};
        if (std::string(cmd) == "certify") args.insert(args.end(), {"--nashconv", "--rollouts", "100"});
        std::ostringstream so, se;
        if (cli::run(args, so, se) != 0) {
          o.pass = false;
          o.detail += std::string(" ") + cmd + " " + name + " failed: " + se.str();
        }
        outs.push_back(out);
      }
      for (const auto& e : fs::directory_iterator(outs[0])) {
        const auto f = e.path().filename();
        if (f == "manifest.json") {
          // wall clock and output directory are the only run-specific fields
          auto a = json::parse(slurp(outs[0] / f)), b = json::parse(slurp(outs[1] / f));
          for (auto* m : {&a, &b}) {
            m->erase("wall_clock_seconds");
            m->erase("output_directory");
            (*m)["overrides"].erase("threads");
          }
          differ += a != b;
        } else {
          differ += slurp(e.path()) != slurp(outs[1] / f);
        }
        ++compared;
      }
    }
  set_num_threads(0);
  o.pass = o.pass && differ == 0 && compared > 0;
  o.detail = std::to_string(compared) + " files compared across 1 and 8 threads, " + std::to_string(differ) +
             " differ" + o.detail;
  return o;
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<Outcome()> run;
    double budget_s;  // 0 = no runtime requirement
  };
  const std::vector<Criterion> all = {
      {"bound validity on random mean-field-type games", bound_validity, 300.0},
      {"k-means on a uniform population", kmeans_uniform, 10.0},
      {"partition search against exhaustive enumeration", partition_oracle, 0.0},
      {"best response against policy enumeration", best_response_enumeration, 0.0},
      {"flow conservation and mixture identity", flow_conservation, 0.0},
      {"pricing closed forms and representative threshold", pricing_closed_forms, 0.0},
      {"empirical flow deviation below its bound", flow_deviation, 0.0},
      {"constant tables against their recursions", constant_tables, 0.0},
      {"Monte Carlo values against exact values", monte_carlo_consistency, 0.0},
      {"byte-identical outputs across thread counts", determinism, 0.0},
  };
  int failed = 0;
  for (std::size_t i = 0; i < all.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = all[i].run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (all[i].budget_s > 0.0 && secs > all[i].budget_s) {
      o.pass = false;
      o.detail += " (over the " + num(all[i].budget_s) + " s budget)";
    }
    failed += !o.pass;
    std::printf("%s %zu %s: %s [%.2f s]\n", o.pass ? "PASS" : "FAIL", i + 1, all[i].name, o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
