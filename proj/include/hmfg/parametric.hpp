#pragma once

// Tabular game family with reward heterogeneity through player parameters:
//   R_t^i(s, a, L) = base_t(s, a) + theta^i . phi_t(s, a) + lambda_R sum kernel(s,a;s',a') Lbar(s',a')
//   P_t(.|s, a, L) = (1 - m) P0_t(.|s, a) + m P1_t(.|s, a),  m = lambda_P <h, Lbar>
// where Lbar = sum_k (N_k/N) L^k is the aggregate state-action distribution.
// Transitions are homogeneous, so heterogeneity only enters through theta.

#include <string>
#include <vector>

#include "hmfg/bounds.hpp"
#include "hmfg/common.hpp"
#include "hmfg/game_model.hpp"

namespace hmfg {

struct ParametricFamily {
  Spaces spaces;
  int d = 1;
  std::vector<double> thetas;  // N x d
  std::vector<int> initial_states;
  std::vector<double> base;    // (T+1) x S x A
  std::vector<double> phi;     // (T+1) x S x A x d
  std::vector<double> kernel;  // (S*A) x (S*A)
  double lambda_R = 0.0;
  std::vector<double> P0;  // T x S x A x S
  std::vector<double> P1;  // T x S x A x S
  std::vector<double> h;   // S*A, entries in [0, 1]
  double lambda_P = 0.0;   // in [0, 1]

  int n_players() const { return static_cast<int>(initial_states.size()); }
  std::size_t sa() const { return static_cast<std::size_t>(spaces.S) * spaces.A; }

  void validate() const {
    spaces.validate();
    const std::size_t per = static_cast<std::size_t>(spaces.periods()) * sa();
    const std::size_t tr = static_cast<std::size_t>(spaces.T) * sa() * spaces.S;
    require(d >= 1, "ParametricFamily: d must be >= 1");
    require(n_players() >= 1, "ParametricFamily: need at least one player");
    require(thetas.size() == static_cast<std::size_t>(n_players()) * d, "ParametricFamily: thetas must be N x d");
    for (int s : initial_states) require(s >= 0 && s < spaces.S, "ParametricFamily: initial state out of range");
    require(base.size() == per, "ParametricFamily: base must be (T+1) x S x A");
    require(phi.size() == per * d, "ParametricFamily: phi must be (T+1) x S x A x d");
    require(kernel.size() == sa() * sa(), "ParametricFamily: kernel must be (S*A) x (S*A)");
    require(P0.size() == tr && P1.size() == tr, "ParametricFamily: transitions must be T x S x A x S");
    require(h.size() == sa(), "ParametricFamily: h must have S*A entries");
    for (double x : h) require(x >= 0.0 && x <= 1.0, "ParametricFamily: h entries must lie in [0, 1]");
    require(lambda_P >= 0.0 && lambda_P <= 1.0, "ParametricFamily: lambda_P must lie in [0, 1]");
    require(lambda_R >= 0.0, "ParametricFamily: lambda_R must be >= 0");
    for (const auto* P : {&P0, &P1})
      for (std::size_t r = 0; r < tr; r += spaces.S) {
        std::vector<double> row(P->begin() + r, P->begin() + r + spaces.S);
        check_simplex(row, kSimplexTol, "ParametricFamily transition row");
      }
  }

  double kappa() const {
    double m = 0.0;
    for (double x : kernel) m = std::max(m, std::abs(x));
    return m;
  }
  double h_max() const {
    double m = 0.0;
    for (double x : h) m = std::max(m, x);
    return m;
  }
  /// max over (t, s, a) of ||P1 - P0||_1
  double delta_P() const {
    double m = 0.0;
    for (std::size_t r = 0; r < P0.size(); r += spaces.S) {
      double s = 0.0;
      for (int x = 0; x < spaces.S; ++x) s += std::abs(P1[r + x] - P0[r + x]);
      m = std::max(m, s);
    }
    return m;
  }
  /// Parameter-Lipschitz constant w_D = max ||phi_t(s, a)||_2.
  double w_D() const {
    double m = 0.0;
    for (std::size_t r = 0; r < phi.size(); r += d) {
      double s = 0.0;
      for (int c = 0; c < d; ++c) s += phi[r + c] * phi[r + c];
      m = std::max(m, std::sqrt(s));
    }
    return m;
  }
  double radius() const {
    double m = 0.0;
    for (int i = 0; i < n_players(); ++i) {
      double s = 0.0;
      for (int c = 0; c < d; ++c) s += thetas[i * d + c] * thetas[i * d + c];
      m = std::max(m, std::sqrt(s));
    }
    return m;
  }
  /// Reward Lipschitz constant w.r.t. the aggregate Lbar.
  double w_R_aggregate() const { return lambda_R * kappa(); }
  /// Transition Lipschitz constant (L1 in s') w.r.t. the aggregate Lbar.
  double w_P_aggregate() const { return lambda_P * h_max() * delta_P(); }

  double theta_phi(const double* theta, int t, int s, int a) const {
    const double* f = phi.data() + ((static_cast<std::size_t>(t) * spaces.S + s) * spaces.A + a) * d;
    double v = 0.0;
    for (int c = 0; c < d; ++c) v += theta[c] * f[c];
    return v;
  }

  /// Bound on |reward| for parameter vectors in `ths` (rows of length d).
  double reward_bound(std::span<const double> ths) const {
    double m = 0.0;
    for (std::size_t r = 0; r < ths.size(); r += d)
      for (int t = 0; t <= spaces.T; ++t)
        for (int s = 0; s < spaces.S; ++s)
          for (int a = 0; a < spaces.A; ++a)
            m = std::max(m, std::abs(base[(static_cast<std::size_t>(t) * spaces.S + s) * spaces.A + a] +
                                     theta_phi(ths.data() + r, t, s, a)));
    return m + lambda_R * kappa();
  }

  MeanFieldTypeGame homogenize(const GroupPartition& partition) const {
    validate();
    partition.validate_for(n_players(), false);
    auto means = group_means(thetas, d, partition);
    auto fam = std::make_shared<const ParametricFamily>(*this);
    auto w = std::make_shared<const std::vector<double>>(partition.weights());
    auto th = std::make_shared<const std::vector<double>>(means);
    const int S = spaces.S, A = spaces.A;
    MeanFieldTypeGame g;
    g.spaces = spaces;
    g.partition = partition;
    g.initial_states = initial_states;
    g.rbar_max = reward_bound(means);
    g.group_reward = [fam, w, th, S, A](int t, int k, int s, int a, const MeanFieldView& L) {
      const auto& f = *fam;
      double v = f.base[(static_cast<std::size_t>(t) * S + s) * A + a] + f.theta_phi(th->data() + k * f.d, t, s, a);
      if (f.lambda_R != 0.0) {
        const double* row = f.kernel.data() + (static_cast<std::size_t>(s) * A + a) * S * A;
        double acc = 0.0;
        for (int s2 = 0; s2 < S; ++s2)
          for (int a2 = 0; a2 < A; ++a2) acc += row[s2 * A + a2] * L.aggregate(*w, s2, a2);
        v += f.lambda_R * acc;
      }
      return v;
    };
    g.group_transition = [fam, w, S, A](int t, int, int s, int a, const MeanFieldView& L, std::span<double> next) {
      const auto& f = *fam;
      double m = 0.0;
      if (f.lambda_P != 0.0) {
        for (int s2 = 0; s2 < S; ++s2)
          for (int a2 = 0; a2 < A; ++a2) m += f.h[s2 * A + a2] * L.aggregate(*w, s2, a2);
        m = std::clamp(f.lambda_P * m, 0.0, 1.0);
      }
      const std::size_t off = ((static_cast<std::size_t>(t) * S + s) * A + a) * S;
      for (int x = 0; x < S; ++x) next[x] = (1.0 - m) * f.P0[off + x] + m * f.P1[off + x];
    };
    return g;
  }

  /// The heterogeneous N-player game: every player keeps its own parameter.
  NPlayerGame build_n_player() const {
    NPlayerGame g = as_nplayer_game(homogenize(GroupPartition::singletons(n_players())));
    g.r_max = reward_bound(thetas);
    return g;
  }

  LipschitzProfile lipschitz(const GroupPartition& partition) const {
    auto w = partition.weights();
    std::vector<double> wr(partition.K), wp(partition.K);
    for (int k = 0; k < partition.K; ++k) {
      wr[k] = w_R_aggregate() * w[k];
      wp[k] = w_P_aggregate() * w[k];
    }
    return LipschitzProfile::make(std::move(wr), std::move(wp), reward_bound(group_means(thetas, d, partition)),
                                  w_D(), radius());
  }

  /// Closed-form heterogeneity maxima: |(theta^i - thetahat_k) . phi| over
  /// (s, a); transitions are homogeneous so the transition gap is zero.
  HeterogeneityProbe heterogeneity_probe(const GroupPartition& partition) const {
    auto means = group_means(thetas, d, partition);
    auto fam = std::make_shared<const ParametricFamily>(*this);
    HeterogeneityProbe p;
    p.reward_gap = [fam, means, assign = partition.assignment](int t, int i) {
      const auto& f = *fam;
      std::vector<double> diff(f.d);
      for (int c = 0; c < f.d; ++c) diff[c] = f.thetas[i * f.d + c] - means[assign[i] * f.d + c];
      double m = 0.0;
      for (int s = 0; s < f.spaces.S; ++s)
        for (int a = 0; a < f.spaces.A; ++a) m = std::max(m, std::abs(f.theta_phi(diff.data(), t, s, a)));
      return m;
    };
    p.transition_gap = [](int) { return 0.0; };
    return p;
  }
};

struct RandomFamilyOptions {
  int d = 1;
  double theta_spread = 1.0;  // thetas ~ U[-spread, spread]^d
  double lambda_R = 0.5;
  double lambda_P = 0.5;
  int n_types = 0;  // > 0: thetas drawn from this many distinct values
};

/// Random instance with rewards in a bounded range and Lipschitz constants
/// that follow from the construction.
inline ParametricFamily random_family(const Spaces& spaces, int n_players, std::uint64_t seed,
                                      const RandomFamilyOptions& opt = {}) {
  spaces.validate();
  require(n_players >= 1, "random_family: need at least one player");
  CounterRng rng(seed, 0xfa);
  ParametricFamily f;
  f.spaces = spaces;
  f.d = opt.d;
  const std::size_t sa = static_cast<std::size_t>(spaces.S) * spaces.A;
  const std::size_t per = static_cast<std::size_t>(spaces.periods()) * sa;
  f.base.resize(per);
  for (auto& x : f.base) x = rng.uniform(-1.0, 1.0);
  f.phi.resize(per * opt.d);
  for (auto& x : f.phi) x = rng.uniform(-1.0, 1.0);
  f.kernel.resize(sa * sa);
  for (auto& x : f.kernel) x = rng.uniform(-1.0, 1.0);
  f.lambda_R = opt.lambda_R;
  f.lambda_P = opt.lambda_P;
  f.h.resize(sa);
  for (auto& x : f.h) x = rng.uniform();
  const std::size_t tr = static_cast<std::size_t>(spaces.T) * sa;
  for (auto* P : {&f.P0, &f.P1}) {
    P->resize(tr * spaces.S);
    for (std::size_t r = 0; r < tr; ++r) {
      auto v = detail::random_simplex(rng, spaces.S);
      std::copy(v.begin(), v.end(), P->begin() + r * spaces.S);
    }
  }
  std::vector<double> types;
  if (opt.n_types > 0) {
    types.resize(static_cast<std::size_t>(opt.n_types) * opt.d);
    for (auto& x : types) x = rng.uniform(-opt.theta_spread, opt.theta_spread);
  }
  f.thetas.resize(static_cast<std::size_t>(n_players) * opt.d);
  for (int i = 0; i < n_players; ++i) {
    if (opt.n_types > 0) {
      const int ty = static_cast<int>(rng.below(opt.n_types));
      for (int c = 0; c < opt.d; ++c) f.thetas[i * opt.d + c] = types[ty * opt.d + c];
    } else {
      for (int c = 0; c < opt.d; ++c) f.thetas[i * opt.d + c] = rng.uniform(-opt.theta_spread, opt.theta_spread);
    }
  }
  f.initial_states.resize(n_players);
  for (auto& s : f.initial_states) s = static_cast<int>(rng.below(spaces.S));
  f.validate();
  return f;
}

}  // namespace hmfg
