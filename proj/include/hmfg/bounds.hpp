#pragma once

// Certified error quantities: the recursive flow-deviation constants, the
// mean-field approximation error, the heterogeneity error and their sum.

#include <array>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hmfg/common.hpp"
#include "hmfg/game_model.hpp"

namespace hmfg {

/// Weighted Lipschitz constants and reward/parameter bounds feeding every
/// certificate.
struct LipschitzProfile {
  std::vector<double> w_R;
  std::vector<double> w_P;
  double w_max = 0.0;
  double rbar_max = 0.0;
  double w_D = 0.0;
  double D = 0.0;

  static LipschitzProfile make(std::vector<double> w_R, std::vector<double> w_P, double rbar_max, double w_D = 0.0,
                               double D = 0.0) {
    LipschitzProfile l;
    l.w_R = std::move(w_R);
    l.w_P = std::move(w_P);
    l.rbar_max = rbar_max;
    l.w_D = w_D;
    l.D = D;
    double sr = 0.0, sp = 0.0;
    for (double v : l.w_R) sr += v;
    for (double v : l.w_P) sp += v;
    l.w_max = std::max(sr, sp);
    l.validate();
    return l;
  }

  int K() const { return static_cast<int>(w_R.size()); }

  void validate() const {
    require(!w_R.empty() && w_R.size() == w_P.size(), "LipschitzProfile: w_R and w_P must have K entries");
    double sr = 0.0, sp = 0.0;
    for (double v : w_R) {
      require(v >= 0.0, "LipschitzProfile: negative w_R");
      sr += v;
    }
    for (double v : w_P) {
      require(v >= 0.0, "LipschitzProfile: negative w_P");
      sp += v;
    }
    require(std::abs(w_max - std::max(sr, sp)) <= 1e-12 * std::max(1.0, w_max), "LipschitzProfile: w_max mismatch");
    require(rbar_max >= 0.0 && w_D >= 0.0 && D >= 0.0, "LipschitzProfile: negative bound");
  }
};

struct ConstantTable {
  int T = 0;
  int K = 1;
  std::vector<double> C;    // (T+1) x K x K
  std::vector<double> Ck;   // (T+1) x K
  std::vector<double> Ct;   // (T+1) x K x K
  std::vector<double> Ctk;  // (T+1) x K
  std::array<double, 5> f{};
  std::array<double, 6> barC{};

  double c(int t, int k, int j) const { return C[(static_cast<std::size_t>(t) * K + k) * K + j]; }
  double ck(int t, int k) const { return Ck[static_cast<std::size_t>(t) * K + k]; }
  double ct(int t, int k, int j) const { return Ct[(static_cast<std::size_t>(t) * K + k) * K + j]; }
  double ctk(int t, int k) const { return Ctk[static_cast<std::size_t>(t) * K + k]; }
};

inline double sqrt_2s_ln2(int S) { return std::sqrt(2.0 * S * std::log(2.0)); }
inline double sqrt_2sa_ln2(int S, int A) { return std::sqrt(2.0 * S * A * std::log(2.0)); }

inline ConstantTable constant_table(const Spaces& spaces, const LipschitzProfile& lip, int K) {
  spaces.validate();
  lip.validate();
  require(lip.K() == K, "constant_table: Lipschitz profile has the wrong number of groups");
  const int T = spaces.T;
  const double a_sa = sqrt_2sa_ln2(spaces.S, spaces.A);
  const double a_s = sqrt_2s_ln2(spaces.S);
  ConstantTable tb;
  tb.T = T;
  tb.K = K;
  const std::size_t kk = static_cast<std::size_t>(K) * K;
  tb.C.assign((T + 1) * kk, 0.0);
  tb.Ct.assign((T + 1) * kk, 0.0);
  tb.Ck.assign(static_cast<std::size_t>(T + 1) * K, 0.0);
  tb.Ctk.assign(static_cast<std::size_t>(T + 1) * K, 0.0);
  for (int k = 0; k < K; ++k) tb.Ctk[k] = 2.0;
  for (int t = 0; t < T; ++t) {
    for (int k = 0; k < K; ++k) {
      for (int j = 0; j < K; ++j) {
        double s = 0.0, st = 0.0;
        for (int l = 0; l < K; ++l) {
          s += lip.w_P[l] * tb.c(t, l, j);
          st += lip.w_P[l] * tb.ct(t, l, j);
        }
        tb.C[((t + 1) * K + k) * K + j] = 2.0 * a_sa + tb.c(t, k, j) + tb.ck(t, j) + s;
        tb.Ct[((t + 1) * K + k) * K + j] = 2.0 + tb.ct(t, k, j) + tb.ctk(t, j) + st;
      }
      tb.Ck[(t + 1) * K + k] = tb.ck(t, k) + 4.0 * a_s;
      tb.Ctk[(t + 1) * K + k] = tb.ctk(t, k) + 4.0;
    }
  }

  const double T1 = T + 1.0, T2 = T + 2.0;
  const double cubic = T * T1 * (2.0 * T + 4.0) / 3.0;
  tb.f[0] = 2.0 * T1 * T2 * a_s + 2.0 * T1 * a_sa;
  tb.f[1] = cubic * a_s + T1 * T2 * a_sa;
  tb.f[2] = cubic + T1 * T2;
  tb.f[3] = tb.f[0];
  tb.f[4] = 2.0 * T1 * T2 + 2.0 * T1;

  double b1 = 0.0, b2 = 0.0, b3 = 0.0, b4 = 0.0, b5 = 0.0, b6 = 0.0;
  for (int k = 0; k < K; ++k)
    for (int j = 0; j < K; ++j) {
      double s = 0.0;
      for (int t = 0; t <= T; ++t) s += tb.c(t, k, j);
      b1 = std::max(b1, s);
    }
  for (int j = 0; j < K; ++j) {
    double s2 = 0.0;
    for (int t = 0; t <= T; ++t)
      for (int i = 0; i < K; ++i) s2 += tb.c(t, i, j) * lip.w_R[i];
    b2 = std::max(b2, s2);
  }
  for (int k = 0; k < K; ++k) {
    double s3 = 0.0, s4 = 0.0, s5 = 0.0, s6 = 0.0;
    for (int t = 0; t <= T; ++t) {
      for (int l = 0; l <= t; ++l)
        for (int j = 0; j < K; ++j) {
          s3 += lip.w_P[j] * tb.c(l, j, k);
          s4 += lip.w_P[j] * tb.ct(l, j, k);
        }
      for (int j = 0; j < K; ++j) {
        s5 += lip.w_R[j] * tb.c(t, j, k);
        s6 += lip.w_R[j] * tb.ct(t, j, k);
      }
    }
    b3 = std::max(b3, s3);
    b4 = std::max(b4, s4);
    b5 = std::max(b5, s5);
    b6 = std::max(b6, s6);
  }
  tb.barC = {b1, b2, b3, b4, b5, b6};
  return tb;
}

/// Right-hand side of the expected L1 deviation between the empirical and
/// limit flows, (T+1) x K. The unilateral variant covers one deviating player.
inline std::vector<double> flow_deviation_bound(const ConstantTable& tb, const LipschitzProfile& lip,
                                                std::span<const int> group_sizes, bool unilateral, int S, int A) {
  require(static_cast<int>(group_sizes.size()) == tb.K, "flow_deviation_bound: need K group sizes");
  for (int n : group_sizes) require(n >= 1, "flow_deviation_bound: group sizes must be >= 1");
  const double a_sa = sqrt_2sa_ln2(S, A);
  std::vector<double> out(static_cast<std::size_t>(tb.T + 1) * tb.K, 0.0);
  for (int t = 0; t <= tb.T; ++t)
    for (int k = 0; k < tb.K; ++k) {
      double v = 0.0;
      for (int j = 0; j < tb.K; ++j) v += tb.c(t, k, j) * lip.w_P[j] / std::sqrt(double(group_sizes[j]));
      v += (tb.ck(t, k) + 2.0 * a_sa) / std::sqrt(double(group_sizes[k]));
      if (unilateral) {
        for (int j = 0; j < tb.K; ++j) v += tb.ct(t, k, j) * lip.w_P[j] / group_sizes[j];
        v += (tb.ctk(t, k) + 2.0) / group_sizes[k];
      }
      out[static_cast<std::size_t>(t) * tb.K + k] = v;
    }
  return out;
}

enum class MfProvenance { explicit_recursion, generic_rate };

inline std::string to_string(MfProvenance p) {
  return p == MfProvenance::explicit_recursion ? "explicit_recursion" : "generic_rate";
}

/// Scalar realization of C(T, W_max) * sqrt(SA): the largest collected
/// coefficient of the explicit two-term assembly on each basis term of the
/// generic display, so the generic value dominates the explicit one.
inline double generic_constant(const ConstantTable& tb) {
  const auto& b = tb.barC;
  const auto& f = tb.f;
  const double on_sqrt = b[0] + b[2] + f[1] + b[1] + b[4] + f[0] + f[3];
  const double on_lin = b[3] + f[2] + b[5] + f[4];
  const double on_size = f[0];
  return std::max({on_sqrt, on_lin, on_size});
}

/// generic_constant evaluated on a single population with w_P = w_R = W_max,
/// which dominates any K-group table with the same W_max.
inline double generic_constant(const Spaces& spaces, double w_max, double rbar_max = 0.0) {
  auto lip = LipschitzProfile::make({w_max}, {w_max}, rbar_max);
  return generic_constant(constant_table(spaces, lip, 1));
}

struct EpsMfResult {
  double explicit_value = 0.0;
  double generic_value = 0.0;
  double generic_constant = 0.0;  // C(T, W_max) * sqrt(SA)
  double term_I = 0.0;
  double term_II = 0.0;
};

inline double eps_mf_generic(double rbar_max, double cgen, std::span<const double> w_R, std::span<const double> w_P,
                             std::span<const int> sizes) {
  double n = 0.0;
  for (int x : sizes) n += x;
  double sum = 0.0, size_term = 0.0;
  for (std::size_t j = 0; j < sizes.size(); ++j) {
    const double nj = sizes[j];
    sum += (w_P[j] + w_R[j]) * (1.0 / nj + 1.0 / std::sqrt(nj));
    size_term += std::sqrt(nj) / n;
  }
  return std::max(rbar_max, 1.0) * cgen * (sum + size_term);
}

inline EpsMfResult eps_mf_bound(const Spaces& spaces, const LipschitzProfile& lip, std::span<const int> sizes) {
  const int K = lip.K();
  require(static_cast<int>(sizes.size()) == K, "eps_mf_bound: need K group sizes");
  for (int n : sizes) require(n >= 1, "eps_mf_bound: group sizes must be >= 1");
  ConstantTable tb = constant_table(spaces, lip, K);
  double N = 0.0, A_sqrt = 0.0, A_lin = 0.0, B_sqrt = 0.0, B_lin = 0.0;
  for (int j = 0; j < K; ++j) {
    const double nj = sizes[j];
    N += nj;
    A_sqrt += lip.w_P[j] / std::sqrt(nj);
    A_lin += lip.w_P[j] / nj;
    B_sqrt += lip.w_R[j] / std::sqrt(nj);
    B_lin += lip.w_R[j] / nj;
  }
  const auto& b = tb.barC;
  const auto& f = tb.f;
  const double R = lip.rbar_max;
  EpsMfResult r;
  for (int k = 0; k < K; ++k) {
    const double nk = sizes[k];
    const double II = nk * (R * (b[0] * A_sqrt + f[0] / std::sqrt(nk)) + b[1] * A_sqrt + f[0] * B_sqrt);
    const double I = nk * (R * (b[2] * A_sqrt + b[3] * A_lin + f[1] * A_sqrt + f[2] * A_lin) + b[4] * A_sqrt +
                           b[5] * A_lin + f[3] * B_sqrt + f[4] * B_lin);
    r.term_I += I / N;
    r.term_II += II / N;
  }
  r.explicit_value = r.term_I + r.term_II;
  r.generic_constant = generic_constant(spaces, lip.w_max);
  r.generic_value = eps_mf_generic(lip.rbar_max, r.generic_constant, lip.w_R, lip.w_P, sizes);
  return r;
}

// ---------------------------------------------------------------------------
// Heterogeneity error

/// Closed-form maxima over profile space supplied by a scenario.
struct HeterogeneityProbe {
  /// max over (s, a) profiles of |R_t^i - Rhat_t^i|
  std::function<double(int t, int i)> reward_gap;
  /// max over (s, a) profiles of sum_i ||P_t^i - Phat_t^i||_1
  std::function<double(int t)> transition_gap;
};

enum class HeterMode { analytic, sampled };

struct HeterResult {
  std::vector<double> eps_t_R;  // t = 0..T
  std::vector<double> eps_t_P;  // t = 0..T-1
  double eps_heter = 0.0;
  bool lower_bound = false;  // sampled maxima underestimate the true maxima
};

inline HeterResult eps_heter_from_gaps(const std::vector<std::vector<double>>& reward_gaps,
                                       const std::vector<double>& transition_gaps, int T, double r_max) {
  HeterResult h;
  h.eps_t_R.assign(T + 1, 0.0);
  h.eps_t_P = transition_gaps;
  h.eps_t_P.resize(T, 0.0);
  for (int t = 0; t <= T; ++t) {
    const auto& g = reward_gaps[t];
    double s = 0.0;
    for (double x : g) s += x * x;
    h.eps_t_R[t] = std::sqrt(s / static_cast<double>(g.size()));
  }
  double sr = 0.0, sp = 0.0;
  for (double v : h.eps_t_R) sr += v;
  for (double v : h.eps_t_P) sp += v;
  h.eps_heter = 2.0 * sr + 2.0 * T * r_max * sp;
  return h;
}

inline HeterResult eps_heter_generic(const NPlayerGame& game, const MeanFieldTypeGame& hat, HeterMode mode,
                                     const HeterogeneityProbe* probe, int samples = 0, std::uint64_t seed = 0) {
  game.validate();
  hat.validate();
  require(hat.n_players() == game.n_players && hat.spaces == game.spaces,
          "eps_heter_generic: games have different shapes");
  const int T = game.spaces.T, n = game.n_players, S = game.spaces.S;
  std::vector<std::vector<double>> rg(T + 1, std::vector<double>(n, 0.0));
  std::vector<double> pg(T, 0.0);
  if (mode == HeterMode::analytic) {
    if (probe == nullptr || !probe->reward_gap || !probe->transition_gap)
      throw Unsupported("eps_heter_generic: scenario provides no closed-form heterogeneity maxima; use sampled mode");
    for (int t = 0; t <= T; ++t)
      for (int i = 0; i < n; ++i) rg[t][i] = probe->reward_gap(t, i);
    for (int t = 0; t < T; ++t) pg[t] = probe->transition_gap(t);
    return eps_heter_from_gaps(rg, pg, T, game.r_max);
  }
  require(samples >= 1, "eps_heter_generic: sampled mode needs a positive sample budget");
  NPlayerGame hg = as_nplayer_game(hat);
  // One substream per (t, chunk); max-reductions are order independent.
  constexpr std::size_t kChunks = 16;
  const auto chunks = fixed_chunks(static_cast<std::size_t>(samples), kChunks);
  for (int t = 0; t <= T; ++t) {
    std::vector<std::vector<double>> part_r(chunks.size(), std::vector<double>(n, 0.0));
    std::vector<double> part_p(chunks.size(), 0.0);
    parallel_for(chunks.size(), [&](std::size_t c) {
      CounterRng rng(seed, (static_cast<std::uint64_t>(t) << 32) | c);
      std::vector<int> s(n), a(n);
      std::vector<double> r1(n), r2(n), p1(static_cast<std::size_t>(n) * S), p2(p1.size());
      for (std::size_t q = chunks[c].begin; q < chunks[c].end; ++q) {
        for (int i = 0; i < n; ++i) {
          s[i] = static_cast<int>(rng.below(S));
          a[i] = static_cast<int>(rng.below(game.spaces.A));
        }
        game.step(t, s, a, r1, p1);
        hg.step(t, s, a, r2, p2);
        for (int i = 0; i < n; ++i) part_r[c][i] = std::max(part_r[c][i], std::abs(r1[i] - r2[i]));
        if (t < T) part_p[c] = std::max(part_p[c], l1_distance(p1, p2));
      }
    });
    for (std::size_t c = 0; c < chunks.size(); ++c) {
      for (int i = 0; i < n; ++i) rg[t][i] = std::max(rg[t][i], part_r[c][i]);
      if (t < T) pg[t] = std::max(pg[t], part_p[c]);
    }
  }
  HeterResult h = eps_heter_from_gaps(rg, pg, T, game.r_max);
  h.lower_bound = true;
  return h;
}

/// Within-group sum of squared distances to the group means (N x d input).
inline double within_group_sse(std::span<const double> thetas, int d, const GroupPartition& p) {
  const int n = p.n_players();
  require(thetas.size() == static_cast<std::size_t>(n) * d, "within_group_sse: thetas must be N x d");
  auto sz = p.sizes();
  std::vector<double> mean(static_cast<std::size_t>(p.K) * d, 0.0);
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < d; ++c) mean[p.assignment[i] * d + c] += thetas[i * d + c];
  for (int k = 0; k < p.K; ++k)
    if (sz[k] > 0)
      for (int c = 0; c < d; ++c) mean[k * d + c] /= sz[k];
  double sse = 0.0;
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < d; ++c) {
      const double e = thetas[i * d + c] - mean[p.assignment[i] * d + c];
      sse += e * e;
    }
  return sse;
}

inline void check_ball(std::span<const double> thetas, int d, double D) {
  for (std::size_t i = 0; i < thetas.size() / d; ++i) {
    double s = 0.0;
    for (int c = 0; c < d; ++c) s += thetas[i * d + c] * thetas[i * d + c];
    require(std::sqrt(s) <= D * (1.0 + 1e-12) + 1e-12,
            "parameter of player " + std::to_string(i) + " lies outside the ball of radius D");
  }
}

/// 2 w_D T sqrt((1/N) sum_k sum_{i in I_k} ||theta^i - thetahat^k||^2).
inline double eps_heter_parametric(std::span<const double> thetas, int d, const GroupPartition& partition,
                                   const LipschitzProfile& lip, int T) {
  require(d >= 1, "eps_heter_parametric: d must be >= 1");
  check_ball(thetas, d, lip.D);
  const double n = partition.n_players();
  return 2.0 * lip.w_D * T * std::sqrt(within_group_sse(thetas, d, partition) / n);
}

// ---------------------------------------------------------------------------
// Report

struct BoundReport {
  double eps_mf = 0.0;
  double eps_heter = 0.0;
  double eps_solver = 0.0;
  double total = 0.0;
  std::vector<double> eps_t_R;
  std::vector<double> eps_t_P;
  std::vector<double> flow_deviation_rhs;  // (T+1) x K
  MfProvenance provenance = MfProvenance::explicit_recursion;
  double eps_mf_explicit = 0.0;
  double eps_mf_generic = 0.0;
  double generic_constant = 0.0;
  bool heter_lower_bound = false;
};

inline BoundReport assemble(double eps_solver, const EpsMfResult& mf, MfProvenance provenance,
                            const HeterResult& heter, std::vector<double> flow_rhs) {
  require(eps_solver >= 0.0, "assemble: eps_solver must be >= 0");
  BoundReport r;
  r.eps_solver = eps_solver;
  r.provenance = provenance;
  r.eps_mf_explicit = mf.explicit_value;
  r.eps_mf_generic = mf.generic_value;
  r.generic_constant = mf.generic_constant;
  r.eps_mf = provenance == MfProvenance::explicit_recursion ? mf.explicit_value : mf.generic_value;
  r.eps_heter = heter.eps_heter;
  r.eps_t_R = heter.eps_t_R;
  r.eps_t_P = heter.eps_t_P;
  r.heter_lower_bound = heter.lower_bound;
  r.flow_deviation_rhs = std::move(flow_rhs);
  r.total = r.eps_solver + r.eps_mf + r.eps_heter;
  return r;
}

// ---------------------------------------------------------------------------
// Diagnostics

struct LipschitzEstimate {
  std::vector<double> w_R;  // lower bounds, per perturbed group
  std::vector<double> w_P;
};

namespace detail {
inline std::vector<double> random_simplex(CounterRng& rng, std::size_t n) {
  std::vector<double> v(n);
  double s = 0.0;
  for (auto& x : v) s += (x = -std::log(1.0 - rng.uniform()));
  for (auto& x : v) x /= s;
  return v;
}
}  // namespace detail

/// Black-box lower bounds on the weighted Lipschitz constants from random
/// pairs of mean-field arguments that differ in one group only. Never used in
/// a certificate.
inline LipschitzEstimate estimate_lipschitz(const MPMFG& g, int samples, std::uint64_t seed) {
  g.validate();
  const auto& sp = g.spaces;
  const std::size_t block = static_cast<std::size_t>(sp.S) * sp.A;
  LipschitzEstimate est{std::vector<double>(g.K, 0.0), std::vector<double>(g.K, 0.0)};
  CounterRng rng(seed, 0x11);
  std::vector<double> p1(sp.S), p2(sp.S);
  for (int q = 0; q < samples; ++q) {
    std::vector<double> L(g.K * block);
    for (int k = 0; k < g.K; ++k) {
      auto v = detail::random_simplex(rng, block);
      std::copy(v.begin(), v.end(), L.begin() + k * block);
    }
    const int j = static_cast<int>(rng.below(g.K));
    std::vector<double> L2 = L;
    auto v = detail::random_simplex(rng, block);
    std::copy(v.begin(), v.end(), L2.begin() + j * block);
    const double dist = l1_distance(std::span<const double>(L).subspan(j * block, block),
                                    std::span<const double>(L2).subspan(j * block, block));
    if (dist <= 0.0) continue;
    MeanFieldView a{L, g.K, sp.S, sp.A}, b{L2, g.K, sp.S, sp.A};
    const int t = static_cast<int>(rng.below(sp.periods()));
    const int k = static_cast<int>(rng.below(g.K));
    const int s = static_cast<int>(rng.below(sp.S));
    const int act = static_cast<int>(rng.below(sp.A));
    est.w_R[j] = std::max(est.w_R[j], std::abs(g.group_reward(t, k, s, act, a) - g.group_reward(t, k, s, act, b)) / dist);
    if (t < sp.T) {
      g.group_transition(t, k, s, act, a, p1);
      g.group_transition(t, k, s, act, b, p2);
      est.w_P[j] = std::max(est.w_P[j], l1_distance(p1, p2) / dist);
    }
  }
  return est;
}

}  // namespace hmfg
