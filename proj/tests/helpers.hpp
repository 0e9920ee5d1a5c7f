#pragma once

#include <functional>
#include <vector>

#include "hmfg/game_model.hpp"
#include "hmfg/bounds.hpp"
#include "hmfg/parametric.hpp"

namespace testing_helpers {

using namespace hmfg;

/// K contiguous groups of nearly equal size.
inline GroupPartition blocks(int N, int K) {
  std::vector<int> a(N);
  for (int i = 0; i < N; ++i) a[i] = static_cast<int>(static_cast<long long>(i) * K / N);
  return GroupPartition(std::move(a), K);
}

/// Random MP-MFG from a random parametric family split into K blocks.
inline MPMFG random_mpmfg(const Spaces& sp, int N, int K, std::uint64_t seed, double lambda_R = 0.5,
                          double lambda_P = 0.5) {
  RandomFamilyOptions opt;
  opt.lambda_R = lambda_R;
  opt.lambda_P = lambda_P;
  auto fam = random_family(sp, N, seed, opt);
  return build_mpmfg(build_mptype_from_partition(fam, blocks(N, K)));
}

/// Random stochastic policy with rows bounded away from zero.
inline Policy random_policy(const Spaces& sp, CounterRng& rng) {
  std::vector<double> k(static_cast<std::size_t>(sp.periods()) * sp.S * sp.A);
  for (std::size_t r = 0; r < k.size(); r += sp.A) {
    double s = 0.0;
    for (int a = 0; a < sp.A; ++a) s += k[r + a] = 0.1 + rng.uniform();
    for (int a = 0; a < sp.A; ++a) k[r + a] /= s;
  }
  return Policy(sp, std::move(k));
}

/// MP-MFG given directly by reward and transition callbacks.
inline MPMFG callback_mpmfg(const Spaces& sp, std::vector<double> weights, std::vector<double> mu0, GroupRewardFn r,
                            GroupTransitionFn p) {
  MPMFG g;
  g.spaces = sp;
  g.K = static_cast<int>(weights.size());
  g.weights = std::move(weights);
  g.initial_dists = std::move(mu0);
  g.group_reward = std::move(r);
  g.group_transition = std::move(p);
  g.validate();
  return g;
}

/// N-player game whose rewards in [-1, 1] and transition rows depend on the
/// whole (t, state profile, action profile), drawn from a keyed generator.
inline NPlayerGame dense_game(const Spaces& sp, int n, std::uint64_t seed, std::vector<int> s0 = {}) {
  NPlayerGame g;
  g.spaces = sp;
  g.n_players = n;
  g.initial_states = s0.empty() ? std::vector<int>(n, 0) : std::move(s0);
  g.r_max = 1.0;
  g.step = [sp, seed](int t, std::span<const int> s, std::span<const int> a, std::span<double> r,
                      std::span<double> next) {
    std::uint64_t key = static_cast<std::uint64_t>(t);
    for (std::size_t i = 0; i < s.size(); ++i) key = key * 1000003ULL + s[i] * 131ULL + a[i];
    CounterRng rng(seed, key);
    for (std::size_t i = 0; i < s.size(); ++i) {
      r[i] = rng.uniform(-1.0, 1.0);
      auto row = hmfg::detail::random_simplex(rng, sp.S);
      std::copy(row.begin(), row.end(), next.begin() + i * sp.S);
    }
  };
  return g;
}

/// Game given by a per-player payoff on the joint action of a single-state
/// stage, repeated for T+1 periods.
inline NPlayerGame stage_game(int A, int T, int n, std::function<double(int, std::span<const int>)> payoff) {
  NPlayerGame g;
  g.spaces = {1, A, T};
  g.n_players = n;
  g.initial_states.assign(n, 0);
  g.r_max = 1e6;
  g.step = [payoff](int, std::span<const int>, std::span<const int> a, std::span<double> r, std::span<double> next) {
    for (std::size_t i = 0; i < a.size(); ++i) {
      r[i] = payoff(static_cast<int>(i), a);
      next[i] = 1.0;
    }
  };
  return g;
}

}  // namespace testing_helpers
