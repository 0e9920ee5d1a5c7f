#pragma once

// Equilibrium pricing game: N firms choose production q and replenishment h,
// the price clears supply against demand, inventories follow
// s' = min(S, s - min(q, s) + h). Includes the two-type closed forms comparing
// a representative-firm model with a two-population model.

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "hmfg/bounds.hpp"
#include "hmfg/common.hpp"
#include "hmfg/game_model.hpp"

namespace hmfg {

struct PricingParams {
  int S_cap = 1;
  int Q_cap = 1;
  int H_cap = 1;
  int T = 1;
  double Q0 = 1.0;
  double d = 1.0;
  double sigma = 1.0;
  double C = 1.0;               // coefficients are normalized to [0, C]
  std::vector<double> coeffs;   // N x 5: c0..c4
  std::vector<int> initial_states;

  int n_firms() const { return static_cast<int>(coeffs.size() / 5); }
  int n_actions() const { return (Q_cap + 1) * (H_cap + 1); }
  Spaces spaces() const { return Spaces{S_cap + 1, n_actions(), T}; }
  int q_of(int a) const { return a / (H_cap + 1); }
  int h_of(int a) const { return a % (H_cap + 1); }
  int action(int q, int h) const { return q * (H_cap + 1) + h; }

  /// Warnings for admitted but unusual settings.
  std::vector<std::string> warnings() const {
    std::vector<std::string> w;
    if (sigma == 1.0) w.push_back("sigma = 1 lies on the boundary of the analysed range (0, 1)");
    return w;
  }

  void validate() const {
    require(S_cap >= 1 && Q_cap >= 1 && H_cap >= 1, "PricingParams: caps must be positive");
    require(T >= 0, "PricingParams: T must be >= 0");
    require(Q0 > 0.0, "PricingParams: Q0 must be > 0");
    require(d > 0.0, "PricingParams: d must be > 0");
    require(sigma > 0.0 && sigma <= 1.0, "PricingParams: sigma must lie in (0, 1]");
    require(C > 0.0, "PricingParams: C must be > 0");
    require(!coeffs.empty() && coeffs.size() % 5 == 0, "PricingParams: coefficient table must be N x 5");
    for (double c : coeffs) require(c >= 0.0 && c <= C, "PricingParams: coefficients must lie in [0, C]");
    require(static_cast<int>(initial_states.size()) == n_firms(), "PricingParams: need one initial state per firm");
    for (int s : initial_states) require(s >= 0 && s <= S_cap, "PricingParams: initial state out of range");
  }
};

inline double clearing_price(double mean_q, const PricingParams& p) {
  require(mean_q >= 0.0, "clearing_price: mean production must be >= 0");
  return std::pow(p.d / (p.Q0 + mean_q), 1.0 / p.sigma);
}

/// Feature vector multiplying (c0..c4) with a minus sign in the reward.
inline std::array<double, 5> pricing_features(int s, int q, int h) {
  const double e = std::max(q - s, 0);
  return {double(q), double(q) * q, double(h) + e, e, double(s)};
}

inline double pricing_reward(double price, const double* c, int s, int q, int h) {
  const double e = std::max(q - s, 0);
  return (price - c[0]) * q - c[1] * q * q - c[2] * h - (c[2] + c[3]) * e - c[4] * s;
}

inline int pricing_next_state(int s, int q, int h, int S_cap) { return std::min(S_cap, s - std::min(q, s) + h); }

/// R_max = max{(d/Q0)^{1/sigma} Q, C (Q + Q^2 + H + 2Q + S)}.
inline double pricing_rbar_max(const PricingParams& p) {
  return std::max(std::pow(p.d / p.Q0, 1.0 / p.sigma) * p.Q_cap,
                  p.C * (p.Q_cap + double(p.Q_cap) * p.Q_cap + p.H_cap + 2.0 * p.Q_cap + p.S_cap));
}

/// (Q^2/sigma)(d/Q0)^{1/sigma - 1}, the single-population reward constant.
inline double pricing_w(const PricingParams& p) {
  return double(p.Q_cap) * p.Q_cap / p.sigma * std::pow(p.d / p.Q0, 1.0 / p.sigma - 1.0);
}

/// Closed-form constants with population shares `alphas` (w_P = 0).
inline LipschitzProfile pricing_constants(const PricingParams& p, const std::vector<double>& alphas = {1.0}) {
  require(p.sigma > 0.0, "pricing_constants: sigma must be > 0");
  require(p.Q0 > 0.0 && p.d > 0.0, "pricing_constants: Q0 and d must be > 0");
  std::vector<double> wr(alphas.size()), wp(alphas.size(), 0.0);
  for (std::size_t j = 0; j < alphas.size(); ++j) wr[j] = alphas[j] * pricing_w(p);
  return LipschitzProfile::make(std::move(wr), std::move(wp), pricing_rbar_max(p));
}

/// Constants used in certificates. The price map x -> (d/(Q0+x))^{1/sigma}
/// has slope at most (1/(sigma Q0)) (d/Q0)^{1/sigma}, which exceeds the
/// closed-form constant by the factor d/Q0^2 when d > Q0^2.
inline LipschitzProfile pricing_certified_constants(const PricingParams& p, const std::vector<double>& alphas) {
  LipschitzProfile l = pricing_constants(p, alphas);
  const double factor = std::max(1.0, p.d / (p.Q0 * p.Q0));
  for (double& w : l.w_R) w *= factor;
  return LipschitzProfile::make(l.w_R, l.w_P, l.rbar_max);
}

/// Heterogeneous N-firm game; the price clears against the profile's mean
/// production.
inline NPlayerGame build_n_player(const PricingParams& params) {
  params.validate();
  auto p = std::make_shared<const PricingParams>(params);
  NPlayerGame g;
  g.spaces = params.spaces();
  g.n_players = params.n_firms();
  g.initial_states = params.initial_states;
  g.r_max = pricing_rbar_max(params);
  g.step = [p](int, std::span<const int> states, std::span<const int> actions, std::span<double> rewards,
               std::span<double> next) {
    const int n = static_cast<int>(states.size()), S = p->S_cap + 1;
    double total_q = 0.0;
    for (int i = 0; i < n; ++i) total_q += p->q_of(actions[i]);
    const double price = clearing_price(total_q / n, *p);
    for (int i = 0; i < n; ++i) {
      const int q = p->q_of(actions[i]), h = p->h_of(actions[i]);
      rewards[i] = pricing_reward(price, p->coeffs.data() + 5 * i, states[i], q, h);
      auto row = next.subspan(static_cast<std::size_t>(i) * S, S);
      std::fill(row.begin(), row.end(), 0.0);
      row[pricing_next_state(states[i], q, h, p->S_cap)] = 1.0;
    }
  };
  return g;
}

/// Group-averaged coefficients (K x 5).
inline std::vector<double> pricing_group_coeffs(const PricingParams& p, const GroupPartition& partition) {
  return group_means(p.coeffs, 5, partition);
}

/// Mean-field-type game with averaged coefficients; the price uses the
/// weighted mixture of group flows.
inline MeanFieldTypeGame build_pricing_mftype(const PricingParams& params, const GroupPartition& partition) {
  params.validate();
  partition.validate_for(params.n_firms(), false);
  auto p = std::make_shared<const PricingParams>(params);
  auto cbar = std::make_shared<const std::vector<double>>(pricing_group_coeffs(params, partition));
  auto w = std::make_shared<const std::vector<double>>(partition.weights());
  MeanFieldTypeGame g;
  g.spaces = params.spaces();
  g.partition = partition;
  g.initial_states = params.initial_states;
  g.rbar_max = pricing_rbar_max(params);
  g.group_reward = [p, cbar, w](int, int k, int s, int a, const MeanFieldView& L) {
    double mean_q = 0.0;
    for (int j = 0; j < L.K; ++j) {
      double mj = 0.0;
      for (int s2 = 0; s2 < L.S; ++s2)
        for (int a2 = 0; a2 < L.A; ++a2) mj += p->q_of(a2) * L(j, s2, a2);
      mean_q += (*w)[j] * mj;
    }
    return pricing_reward(clearing_price(std::max(0.0, mean_q), *p), cbar->data() + 5 * k, s, p->q_of(a), p->h_of(a));
  };
  g.group_transition = [p](int, int, int s, int a, const MeanFieldView&, std::span<double> next) {
    std::fill(next.begin(), next.end(), 0.0);
    next[pricing_next_state(s, p->q_of(a), p->h_of(a), p->S_cap)] = 1.0;
  };
  return g;
}

struct PricingModel {
  MeanFieldTypeGame mftype;
  MPMFG mpmfg;
  LipschitzProfile lipschitz;  // certificate constants
};

inline PricingModel build_pricing_mpmfg(const PricingParams& params, const GroupPartition& partition) {
  PricingModel m;
  m.mftype = build_pricing_mftype(params, partition);
  m.mpmfg = build_mpmfg(m.mftype);
  m.lipschitz = pricing_certified_constants(params, m.mpmfg.weights);
  return m;
}

/// Closed-form heterogeneity maxima: the price is common to both models, so
/// the gap is |(c^i - cbar^k) . features| maximized over (s, q, h).
inline HeterogeneityProbe pricing_heterogeneity_probe(const PricingParams& params, const GroupPartition& partition) {
  auto cbar = pricing_group_coeffs(params, partition);
  auto p = std::make_shared<const PricingParams>(params);
  HeterogeneityProbe probe;
  probe.reward_gap = [p, cbar, assign = partition.assignment](int, int i) {
    double diff[5];
    for (int m = 0; m < 5; ++m) diff[m] = p->coeffs[5 * i + m] - cbar[5 * assign[i] + m];
    double best = 0.0;
    for (int s = 0; s <= p->S_cap; ++s)
      for (int q = 0; q <= p->Q_cap; ++q)
        for (int h = 0; h <= p->H_cap; ++h) {
          auto f = pricing_features(s, q, h);
          double v = 0.0;
          for (int m = 0; m < 5; ++m) v += diff[m] * f[m];
          best = std::max(best, std::abs(v));
        }
    return best;
  };
  probe.transition_gap = [](int) { return 0.0; };
  return probe;
}

// ---------------------------------------------------------------------------
// Two-type closed forms

/// C(T, W_max) sqrt((S+1)(Q+1)(H+1)) realized by generic_constant.
inline double pricing_generic_constant(const PricingParams& p) {
  return generic_constant(p.spaces(), pricing_w(p));
}

/// Ctilde = max{R_max, 1} C(T, W_max) sqrt((S+1)(Q+1)(H+1)).
inline double pricing_ctilde(const PricingParams& p) {
  return std::max(pricing_rbar_max(p), 1.0) * pricing_generic_constant(p);
}

/// Representative-firm model: Ctilde {w (1/N + 1/sqrt N) + 1/sqrt N}.
inline double pricing_eps_mf_one(const PricingParams& p, double N) {
  const double w = pricing_w(p);
  return pricing_ctilde(p) * (w * (1.0 / N + 1.0 / std::sqrt(N)) + 1.0 / std::sqrt(N));
}

/// Two-population model: Ctilde {w (2/N + r/sqrt N) + r/sqrt N}, r = sqrt(a) + sqrt(1-a).
inline double pricing_eps_mf_two(const PricingParams& p, double N, double alpha) {
  const double w = pricing_w(p);
  const double r = std::sqrt(alpha) + std::sqrt(1.0 - alpha);
  return pricing_ctilde(p) * (w * (2.0 / N + r / std::sqrt(N)) + r / std::sqrt(N));
}

/// 2 (H+Q)(T+1) sqrt(alpha (1-alpha)) |c2^1 - c2^2|.
inline double pricing_eps_heter_one(const PricingParams& p, double alpha, double c2a, double c2b) {
  return 2.0 * (p.H_cap + p.Q_cap) * (p.T + 1.0) * std::sqrt(alpha * (1.0 - alpha)) * std::abs(c2a - c2b);
}

struct ThresholdResult {
  double N_star = 0.0;
  double K_bar = 0.0;
  bool assumption_holds = false;  // C(Q+Q^2+H+2Q+S) >= (d/Q0)^{1/sigma} Q >= 1
};

/// N* = Kbar / (alpha (1 - alpha) |c2^1 - c2^2|^2 / C^2).
inline ThresholdResult representative_threshold(const PricingParams& p, double alpha, double c2a, double c2b) {
  require(alpha > 0.0 && alpha < 1.0, "representative_threshold: alpha must lie in (0, 1)");
  require(c2a != c2b, "representative_threshold: the two c2 values must differ");
  require(p.sigma > 0.0 && p.Q0 > 0.0 && p.d > 0.0, "representative_threshold: invalid market parameters");
  const double w = pricing_w(p);
  const double Q = p.Q_cap, H = p.H_cap, S = p.S_cap;
  const double poly = Q + Q * Q + H + 2.0 * Q + S;
  const double cgen = pricing_generic_constant(p);  // C(T,W) sqrt((S+1)(Q+1)(H+1))
  const double lead = (1.0 + 2.0 * w) / (2.0 * (H + Q) * (p.T + 1.0));
  ThresholdResult r;
  r.K_bar = lead * lead * poly * poly * cgen * cgen;
  const double gap = c2a - c2b;
  r.N_star = r.K_bar / (alpha * (1.0 - alpha) * gap * gap / (p.C * p.C));
  const double peak = std::pow(p.d / p.Q0, 1.0 / p.sigma) * Q;
  r.assumption_holds = p.C * poly >= peak && peak >= 1.0;
  return r;
}

struct TwoTypeRow {
  double N = 0.0;
  double eps_mf_1 = 0.0;
  double eps_mf_2 = 0.0;
  double eps_heter_1 = 0.0;
  double eps_heter_2 = 0.0;
  double total_1 = 0.0;
  double total_2 = 0.0;
};

struct TwoTypeStudy {
  std::vector<TwoTypeRow> rows;
  ThresholdResult threshold;
  /// Smallest N with total_1 = total_2 (bisection on the closed forms),
  /// absent when the totals never cross.
  std::optional<double> crossing;
};

inline TwoTypeStudy two_type_study(double alpha, double c2a, double c2b, const PricingParams& p,
                                   const std::vector<double>& N_grid) {
  require(alpha > 0.0 && alpha < 1.0, "two_type_study: alpha must lie in (0, 1)");
  require(!N_grid.empty(), "two_type_study: N grid must not be empty");
  TwoTypeStudy st;
  st.threshold = representative_threshold(p, alpha, c2a, c2b);
  const double heter = pricing_eps_heter_one(p, alpha, c2a, c2b);
  auto diff = [&](double N) { return pricing_eps_mf_one(p, N) + heter - pricing_eps_mf_two(p, N, alpha); };
  for (double N : N_grid) {
    require(N >= 1.0, "two_type_study: N must be >= 1");
    TwoTypeRow r;
    r.N = N;
    r.eps_mf_1 = pricing_eps_mf_one(p, N);
    r.eps_mf_2 = pricing_eps_mf_two(p, N, alpha);
    r.eps_heter_1 = heter;
    r.eps_heter_2 = 0.0;
    r.total_1 = r.eps_mf_1 + r.eps_heter_1;
    r.total_2 = r.eps_mf_2;
    st.rows.push_back(r);
  }
  // total_2 - eps_mf_1 decreases in N while heter is constant, so the sign of
  // diff changes at most once; bisect in log N.
  double lo = 1.0, hi = 1.0;
  if (diff(lo) < 0.0) {
    while (diff(hi) < 0.0 && hi < 1e300) hi *= 2.0;
    if (diff(hi) >= 0.0) {
      for (int it = 0; it < 200; ++it) {
        const double mid = std::sqrt(lo * hi);
        (diff(mid) < 0.0 ? lo : hi) = mid;
      }
      st.crossing = hi;
    }
  } else {
    st.crossing = 1.0;
  }
  return st;
}

/// Two-type coefficient table: the first round(alpha N) firms use c2a.
inline PricingParams two_type_params(PricingParams base, int N, double alpha, double c2a, double c2b,
                                     const std::array<double, 5>& shared) {
  require(N >= 2, "two_type_params: need at least two firms");
  int n1 = static_cast<int>(std::lround(alpha * N));
  n1 = std::clamp(n1, 1, N - 1);
  base.coeffs.assign(static_cast<std::size_t>(N) * 5, 0.0);
  for (int i = 0; i < N; ++i) {
    for (int m = 0; m < 5; ++m) base.coeffs[5 * i + m] = shared[m];
    base.coeffs[5 * i + 2] = i < n1 ? c2a : c2b;
  }
  if (static_cast<int>(base.initial_states.size()) != N) base.initial_states.assign(N, 0);
  return base;
}

inline GroupPartition two_type_partition(const PricingParams& p) {
  std::vector<int> a(p.n_firms());
  const double c2_first = p.coeffs[2];
  for (int i = 0; i < p.n_firms(); ++i) a[i] = p.coeffs[5 * i + 2] == c2_first ? 0 : 1;
  return GroupPartition(std::move(a), 2);
}

}  // namespace hmfg
