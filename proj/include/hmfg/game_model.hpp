#pragma once

// The three game representations (heterogeneous N-player game, N-player game
// of mean-field type, multi-population mean-field game) and the policy and
// distribution objects they share.

#include <concepts>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hmfg/common.hpp"

namespace hmfg {

struct Spaces {
  int S = 1;  // number of states
  int A = 1;  // number of actions
  int T = 0;  // final period; periods are 0..T

  int periods() const { return T + 1; }

  void validate() const {
    require(S >= 1, "Spaces: S must be >= 1");
    require(A >= 1, "Spaces: A must be >= 1");
    require(T >= 0, "Spaces: T must be >= 0");
  }

  friend bool operator==(const Spaces&, const Spaces&) = default;
};

/// Time-indexed stochastic kernel pi_t(a|s), stored (T+1) x S x A.
class Policy {
 public:
  Policy() = default;

  Policy(const Spaces& spaces, std::vector<double> kernel)
      : spaces_(spaces), kernel_(std::move(kernel)) {
    spaces_.validate();
    require(kernel_.size() == size(), "Policy: kernel has wrong size");
    for (int t = 0; t <= spaces_.T; ++t)
      for (int s = 0; s < spaces_.S; ++s)
        check_simplex(row_mut(t, s), kSimplexTol, "Policy row");
  }

  static Policy uniform(const Spaces& spaces) {
    spaces.validate();
    return Policy(spaces, std::vector<double>(static_cast<std::size_t>(spaces.periods()) * spaces.S * spaces.A,
                                              1.0 / spaces.A));
  }

  /// actions[t*S + s] is the action played with certainty.
  static Policy deterministic(const Spaces& spaces, std::span<const int> actions) {
    spaces.validate();
    require(actions.size() == static_cast<std::size_t>(spaces.periods()) * spaces.S,
            "Policy::deterministic: need (T+1)*S actions");
    std::vector<double> k(static_cast<std::size_t>(spaces.periods()) * spaces.S * spaces.A, 0.0);
    for (std::size_t i = 0; i < actions.size(); ++i) {
      require(actions[i] >= 0 && actions[i] < spaces.A, "Policy::deterministic: action out of range");
      k[i * spaces.A + actions[i]] = 1.0;
    }
    return Policy(spaces, std::move(k));
  }

  const Spaces& spaces() const { return spaces_; }

  double operator()(int t, int s, int a) const {
    return kernel_[(static_cast<std::size_t>(t) * spaces_.S + s) * spaces_.A + a];
  }

  std::span<const double> row(int t, int s) const {
    return {kernel_.data() + (static_cast<std::size_t>(t) * spaces_.S + s) * spaces_.A,
            static_cast<std::size_t>(spaces_.A)};
  }

  const std::vector<double>& kernel() const { return kernel_; }

  friend bool operator==(const Policy&, const Policy&) = default;

 private:
  std::size_t size() const { return static_cast<std::size_t>(spaces_.periods()) * spaces_.S * spaces_.A; }
  std::span<double> row_mut(int t, int s) {
    return {kernel_.data() + (static_cast<std::size_t>(t) * spaces_.S + s) * spaces_.A,
            static_cast<std::size_t>(spaces_.A)};
  }

  Spaces spaces_;
  std::vector<double> kernel_;
};

/// N entries for an N-player profile, K entries for a mean-field profile.
using StrategyProfile = std::vector<Policy>;

struct GroupPartition {
  std::vector<int> assignment;  // player -> group in 0..K-1
  int K = 1;

  GroupPartition() = default;
  GroupPartition(std::vector<int> a, int k) : assignment(std::move(a)), K(k) {
    require(K >= 1, "GroupPartition: K must be >= 1");
    for (int g : assignment) require(g >= 0 && g < K, "GroupPartition: group index out of range");
  }

  static GroupPartition single(int n) { return GroupPartition(std::vector<int>(n, 0), 1); }

  static GroupPartition singletons(int n) {
    std::vector<int> a(n);
    for (int i = 0; i < n; ++i) a[i] = i;
    return GroupPartition(std::move(a), n);
  }

  int n_players() const { return static_cast<int>(assignment.size()); }

  std::vector<int> sizes() const {
    std::vector<int> n(K, 0);
    for (int g : assignment) ++n[g];
    return n;
  }

  std::vector<double> weights() const {
    std::vector<double> w(K, 0.0);
    const double n = static_cast<double>(assignment.size());
    auto sz = sizes();
    for (int k = 0; k < K; ++k) w[k] = sz[k] / n;
    return w;
  }

  std::vector<int> members(int k) const {
    std::vector<int> m;
    for (int i = 0; i < n_players(); ++i)
      if (assignment[i] == k) m.push_back(i);
    return m;
  }

  bool has_empty_group() const {
    for (int n : sizes())
      if (n == 0) return true;
    return false;
  }

  /// Drops empty groups, keeping the relative order of the remaining labels.
  GroupPartition without_empty_groups() const {
    auto sz = sizes();
    std::vector<int> relabel(K, -1);
    int next = 0;
    for (int k = 0; k < K; ++k)
      if (sz[k] > 0) relabel[k] = next++;
    std::vector<int> a(assignment.size());
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = relabel[assignment[i]];
    return GroupPartition(std::move(a), std::max(1, next));
  }

  /// Relabels groups in order of first appearance (restricted growth form).
  GroupPartition canonical() const {
    std::vector<int> relabel(K, -1);
    int next = 0;
    std::vector<int> a(assignment.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      int& r = relabel[assignment[i]];
      if (r < 0) r = next++;
      a[i] = r;
    }
    return GroupPartition(std::move(a), K);
  }

  void validate_for(int n_players_expected, bool allow_empty) const {
    require(n_players() == n_players_expected, "GroupPartition: assignment does not cover all players");
    require(K >= 1, "GroupPartition: K must be >= 1");
    for (int g : assignment) require(g >= 0 && g < K, "GroupPartition: group index out of range");
    if (!allow_empty) require(!has_empty_group(), "GroupPartition: group with zero members");
  }

  friend bool operator==(const GroupPartition&, const GroupPartition&) = default;
};

/// Read-only view of the K joint state-action distributions at one period.
struct MeanFieldView {
  std::span<const double> data;  // K x S x A
  int K = 1;
  int S = 1;
  int A = 1;

  double operator()(int k, int s, int a) const {
    return data[(static_cast<std::size_t>(k) * S + s) * A + a];
  }
  std::span<const double> group(int k) const {
    return data.subspan(static_cast<std::size_t>(k) * S * A, static_cast<std::size_t>(S) * A);
  }
  /// Aggregate sum_k w_k L^k(s, a).
  double aggregate(std::span<const double> w, int s, int a) const {
    double v = 0.0;
    for (int k = 0; k < K; ++k) v += w[k] * (*this)(k, s, a);
    return v;
  }
};

using GroupRewardFn = std::function<double(int t, int k, int s, int a, const MeanFieldView& L)>;
using GroupTransitionFn =
    std::function<void(int t, int k, int s, int a, const MeanFieldView& L, std::span<double> next)>;

/// General N-player Markov game. Rewards and transitions may depend on the
/// whole state and action profile; both come from one joint oracle so that
/// shared work (prices, empirical measures) is computed once per profile.
struct NPlayerGame {
  /// Fills rewards[i] and next[i*S + s'] for every player i. At t == T only
  /// the rewards are meaningful.
  using StepFn = std::function<void(int t, std::span<const int> states, std::span<const int> actions,
                                    std::span<double> rewards, std::span<double> next)>;

  Spaces spaces;
  int n_players = 1;
  std::vector<int> initial_states;
  StepFn step;
  double r_max = 0.0;

  double reward(int t, int i, std::span<const int> states, std::span<const int> actions) const {
    std::vector<double> r(n_players), nx(static_cast<std::size_t>(n_players) * spaces.S);
    step(t, states, actions, r, nx);
    return r[i];
  }

  std::vector<double> transition(int t, int i, std::span<const int> states, std::span<const int> actions) const {
    std::vector<double> r(n_players), nx(static_cast<std::size_t>(n_players) * spaces.S);
    step(t, states, actions, r, nx);
    return {nx.begin() + static_cast<std::ptrdiff_t>(i) * spaces.S,
            nx.begin() + static_cast<std::ptrdiff_t>(i + 1) * spaces.S};
  }

  void validate() const {
    spaces.validate();
    require(n_players >= 1, "NPlayerGame: need at least one player");
    require(static_cast<int>(initial_states.size()) == n_players, "NPlayerGame: initial_states size != N");
    for (int s : initial_states) require(s >= 0 && s < spaces.S, "NPlayerGame: initial state out of range");
    require(static_cast<bool>(step), "NPlayerGame: missing step oracle");
    require(r_max >= 0.0, "NPlayerGame: r_max must be >= 0");
  }
};

/// N-player game of mean-field type: player i in group k gets
/// R^k(s_i, a_i, L^{1,N}..L^{K,N}) and moves with P^k(.|s_i, a_i, L^{.,N}).
struct MeanFieldTypeGame {
  Spaces spaces;
  GroupPartition partition;
  GroupRewardFn group_reward;
  GroupTransitionFn group_transition;
  std::vector<int> initial_states;
  double rbar_max = 0.0;

  int n_players() const { return partition.n_players(); }

  void validate() const {
    spaces.validate();
    partition.validate_for(static_cast<int>(initial_states.size()), false);
    for (int s : initial_states) require(s >= 0 && s < spaces.S, "MeanFieldTypeGame: initial state out of range");
    require(static_cast<bool>(group_reward) && static_cast<bool>(group_transition),
            "MeanFieldTypeGame: missing oracle");
  }
};

/// K-population mean-field game with common state and action spaces.
struct MPMFG {
  Spaces spaces;
  int K = 1;
  std::vector<double> weights;        // N_k / N
  std::vector<double> initial_dists;  // K x S
  GroupRewardFn group_reward;
  GroupTransitionFn group_transition;

  std::span<const double> mu0(int k) const {
    return {initial_dists.data() + static_cast<std::size_t>(k) * spaces.S, static_cast<std::size_t>(spaces.S)};
  }

  void validate() const {
    spaces.validate();
    require(K >= 1, "MPMFG: K must be >= 1");
    require(static_cast<int>(weights.size()) == K, "MPMFG: weights size != K");
    require(initial_dists.size() == static_cast<std::size_t>(K) * spaces.S, "MPMFG: initial_dists size != K*S");
    double ws = 0.0;
    for (double w : weights) {
      require(w >= 0.0, "MPMFG: negative weight");
      ws += w;
    }
    require(std::abs(ws - 1.0) <= kSimplexTol, "MPMFG: weights do not sum to 1");
    for (int k = 0; k < K; ++k) {
      double m = 0.0;
      for (double x : mu0(k)) {
        require(x >= -kNegativeTol, "MPMFG: negative initial mass");
        m += x;
      }
      require(std::abs(m - 1.0) <= kSimplexTol, "MPMFG: initial distribution does not sum to 1");
    }
    require(static_cast<bool>(group_reward) && static_cast<bool>(group_transition), "MPMFG: missing oracle");
  }
};

/// Joint state-action flows L_t^k and state marginals mu_t^k.
struct MeanFieldFlow {
  Spaces spaces;
  int K = 1;
  std::vector<double> L;   // (T+1) x K x S x A
  std::vector<double> mu;  // (T+1) x K x S

  MeanFieldFlow() = default;
  MeanFieldFlow(const Spaces& sp, int k)
      : spaces(sp),
        K(k),
        L(static_cast<std::size_t>(sp.periods()) * k * sp.S * sp.A, 0.0),
        mu(static_cast<std::size_t>(sp.periods()) * k * sp.S, 0.0) {}

  std::size_t slice() const { return static_cast<std::size_t>(K) * spaces.S * spaces.A; }

  MeanFieldView at(int t) const {
    return {std::span<const double>(L.data() + t * slice(), slice()), K, spaces.S, spaces.A};
  }
  double& l(int t, int k, int s, int a) {
    return L[t * slice() + (static_cast<std::size_t>(k) * spaces.S + s) * spaces.A + a];
  }
  double l(int t, int k, int s, int a) const {
    return L[t * slice() + (static_cast<std::size_t>(k) * spaces.S + s) * spaces.A + a];
  }
  double& m(int t, int k, int s) { return mu[(static_cast<std::size_t>(t) * K + k) * spaces.S + s]; }
  double m(int t, int k, int s) const { return mu[(static_cast<std::size_t>(t) * K + k) * spaces.S + s]; }
  std::span<const double> group(int t, int k) const {
    return {L.data() + t * slice() + static_cast<std::size_t>(k) * spaces.S * spaces.A,
            static_cast<std::size_t>(spaces.S) * spaces.A};
  }
};

// ---------------------------------------------------------------------------
// Construction

/// Empirical joint state-action distribution per group: K x S x A.
inline std::vector<double> empirical_flow(std::span<const int> states, std::span<const int> actions,
                                          const GroupPartition& partition, const std::vector<int>& sizes, int S,
                                          int A) {
  std::vector<double> out(static_cast<std::size_t>(partition.K) * S * A, 0.0);
  for (std::size_t i = 0; i < states.size(); ++i) {
    int k = partition.assignment[i];
    out[(static_cast<std::size_t>(k) * S + states[i]) * A + actions[i]] += 1.0 / sizes[k];
  }
  return out;
}

/// Group means of row-major parameters (N x d): K x d. Empty groups are
/// rejected since they have no mean.
inline std::vector<double> group_means(std::span<const double> thetas, int d, const GroupPartition& partition) {
  const int n = partition.n_players();
  require(thetas.size() == static_cast<std::size_t>(n) * d, "group_means: thetas must be N x d");
  auto sz = partition.sizes();
  for (int k = 0; k < partition.K; ++k) require(sz[k] > 0, "group_means: group with zero members");
  // Deviations are summed about the group's first member, so a group of
  // identical rows has exactly that row as its mean.
  std::vector<int> first(partition.K, -1);
  for (int i = n - 1; i >= 0; --i) first[partition.assignment[i]] = i;
  std::vector<double> m(static_cast<std::size_t>(partition.K) * d, 0.0);
  for (int i = 0; i < n; ++i) {
    const int k = partition.assignment[i];
    for (int c = 0; c < d; ++c) m[k * d + c] += thetas[i * d + c] - thetas[first[k] * d + c];
  }
  for (int k = 0; k < partition.K; ++k)
    for (int c = 0; c < d; ++c) m[k * d + c] = thetas[first[k] * d + c] + m[k * d + c] / sz[k];
  return m;
}

/// A heterogeneous parametric game description that can be homogenized
/// along a partition (group-averaged parameters).
template <typename F>
concept HomogenizableFamily = requires(const F& f, const GroupPartition& p) {
  { f.homogenize(p) } -> std::same_as<MeanFieldTypeGame>;
  { f.n_players() } -> std::convertible_to<int>;
};

template <HomogenizableFamily F>
MeanFieldTypeGame build_mptype_from_partition(const F& family, const GroupPartition& partition) {
  partition.validate_for(family.n_players(), false);
  MeanFieldTypeGame g = family.homogenize(partition);
  g.validate();
  return g;
}

/// Limit game with group weights N_k/N and empirical initial laws.
inline MPMFG build_mpmfg(const MeanFieldTypeGame& g) {
  g.validate();
  MPMFG m;
  m.spaces = g.spaces;
  m.K = g.partition.K;
  m.weights = g.partition.weights();
  m.initial_dists.assign(static_cast<std::size_t>(m.K) * g.spaces.S, 0.0);
  auto sz = g.partition.sizes();
  for (int i = 0; i < g.n_players(); ++i) {
    int k = g.partition.assignment[i];
    m.initial_dists[static_cast<std::size_t>(k) * g.spaces.S + g.initial_states[i]] += 1.0 / sz[k];
  }
  m.group_reward = g.group_reward;
  m.group_transition = g.group_transition;
  m.validate();
  return m;
}

/// Player i in group k plays pibar[k].
inline StrategyProfile expand_policy(const StrategyProfile& pibar, const GroupPartition& partition) {
  require(static_cast<int>(pibar.size()) == partition.K, "expand_policy: profile must have K entries");
  StrategyProfile out;
  out.reserve(partition.assignment.size());
  for (int k : partition.assignment) out.push_back(pibar[k]);
  return out;
}

/// Views a mean-field-type game as a general N-player game by computing the
/// group empirical measures inside the joint oracle.
inline NPlayerGame as_nplayer_game(const MeanFieldTypeGame& g) {
  g.validate();
  NPlayerGame out;
  out.spaces = g.spaces;
  out.n_players = g.n_players();
  out.initial_states = g.initial_states;
  out.r_max = g.rbar_max;
  const auto sizes = g.partition.sizes();
  out.step = [g, sizes](int t, std::span<const int> states, std::span<const int> actions,
                        std::span<double> rewards, std::span<double> next) {
    const int S = g.spaces.S, A = g.spaces.A;
    auto L = empirical_flow(states, actions, g.partition, sizes, S, A);
    MeanFieldView view{L, g.partition.K, S, A};
    for (std::size_t i = 0; i < states.size(); ++i) {
      int k = g.partition.assignment[i];
      rewards[i] = g.group_reward(t, k, states[i], actions[i], view);
      if (t < g.spaces.T) g.group_transition(t, k, states[i], actions[i], view, next.subspan(i * S, S));
    }
  };
  return out;
}

/// Spot-checks the oracle invariants of an N-player game on random profiles:
/// transitions are probability vectors within 1e-12 and |reward| <= r_max.
inline void validate_sampled(const NPlayerGame& g, int samples, std::uint64_t seed) {
  g.validate();
  CounterRng rng(seed, 0x51);
  const int n = g.n_players, S = g.spaces.S;
  std::vector<int> s(n), a(n);
  std::vector<double> r(n), nx(static_cast<std::size_t>(n) * S);
  for (int q = 0; q < samples; ++q) {
    int t = static_cast<int>(rng.below(g.spaces.periods()));
    for (int i = 0; i < n; ++i) {
      s[i] = static_cast<int>(rng.below(S));
      a[i] = static_cast<int>(rng.below(g.spaces.A));
    }
    g.step(t, s, a, r, nx);
    for (int i = 0; i < n; ++i) {
      require(std::abs(r[i]) <= g.r_max * (1.0 + 1e-12) + 1e-12, "NPlayerGame: |reward| exceeds r_max");
      if (t == g.spaces.T) continue;
      double m = 0.0;
      for (int x = 0; x < S; ++x) {
        require(nx[i * S + x] >= -kNegativeTol, "NPlayerGame: negative transition probability");
        m += nx[i * S + x];
      }
      require(std::abs(m - 1.0) <= kSimplexTol, "NPlayerGame: transition does not sum to 1");
    }
  }
}

}  // namespace hmfg
