#include <gtest/gtest.h>

#include "helpers.hpp"
#include "oracles.hpp"
#include "hmfg/mfg_solver.hpp"
#include "hmfg/pricing.hpp"

using namespace hmfg;
using testing_helpers::callback_mpmfg;
using testing_helpers::random_mpmfg;
using testing_helpers::random_policy;

namespace {

MPMFG constant_game(const Spaces& sp, std::vector<double> r, std::vector<double> P) {
  auto rr = std::make_shared<std::vector<double>>(std::move(r));
  auto pp = std::make_shared<std::vector<double>>(std::move(P));
  const int S = sp.S, A = sp.A;
  std::vector<double> mu0(S, 0.0);
  mu0[0] = 1.0;
  return callback_mpmfg(
      sp, {1.0}, mu0,
      [rr, S, A](int t, int, int s, int a, const MeanFieldView&) { return (*rr)[(t * S + s) * A + a]; },
      [pp, S, A](int t, int, int s, int a, const MeanFieldView&, std::span<double> next) {
        for (int x = 0; x < S; ++x) next[x] = (*pp)[((t * S + s) * A + a) * S + x];
      });
}

double total_mass(const MeanFieldFlow& f, int t, int k) {
  double m = 0.0;
  for (double x : f.group(t, k)) m += x;
  return m;
}

}  // namespace

TEST(ForwardFlow, DegenerateSimplex) {
  Spaces sp{1, 1, 4};
  auto g = constant_game(sp, std::vector<double>(5, 1.0), std::vector<double>(4, 1.0));
  auto f = forward_flow(g, {Policy::uniform(sp)});
  for (int t = 0; t <= sp.T; ++t) EXPECT_EQ(f.l(t, 0, 0, 0), 1.0);
}

TEST(ForwardFlow, HalfHalfTransition) {
  Spaces sp{2, 1, 1};
  auto g = constant_game(sp, std::vector<double>(4, 0.0), {0.5, 0.5, 0.5, 0.5});
  auto f = forward_flow(g, {Policy::uniform(sp)});
  EXPECT_EQ(f.l(0, 0, 0, 0), 1.0);
  EXPECT_EQ(f.l(1, 0, 0, 0), 0.5);
  EXPECT_EQ(f.l(1, 0, 1, 0), 0.5);
}

TEST(ForwardFlow, PricingInventoryRecursionByHand) {
  PricingParams p;
  p.S_cap = 3;
  p.Q_cap = 1;
  p.H_cap = 2;
  p.T = 3;
  p.coeffs = {0.1, 0.1, 0.2, 0.1, 0.1, 0.3, 0.1, 0.4, 0.1, 0.2};
  p.initial_states = {0, 2};
  auto m = build_pricing_mpmfg(p, GroupPartition::single(2));
  CounterRng rng(21, 0);
  Policy pi = random_policy(p.spaces(), rng);
  auto f = forward_flow(m.mpmfg, {pi});
  const int S = p.S_cap + 1;
  std::vector<double> mu{0.5, 0.0, 0.5, 0.0};
  for (int t = 0; t < 3; ++t) {
    std::vector<double> next(S, 0.0);
    for (int s = 0; s < S; ++s)
      for (int q = 0; q <= p.Q_cap; ++q)
        for (int h = 0; h <= p.H_cap; ++h) {
          int s2 = std::min(p.S_cap, s - std::min(q, s) + h);
          next[s2] += mu[s] * pi(t, s, p.action(q, h));
        }
    mu = next;
    for (int s = 0; s < S; ++s) EXPECT_NEAR(f.m(t + 1, 0, s), mu[s], 1e-14) << "t=" << t + 1 << " s=" << s;
  }
}

TEST(ForwardFlow, MassAndMarginalsOnRandomGames) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Spaces sp{3, 2, 3};
    auto g = random_mpmfg(sp, 6, 2, seed);
    CounterRng rng(seed, 7);
    StrategyProfile pi{random_policy(sp, rng), random_policy(sp, rng)};
    auto f = forward_flow(g, pi);
    for (int t = 0; t <= sp.T; ++t)
      for (int k = 0; k < 2; ++k) {
        EXPECT_NEAR(total_mass(f, t, k), 1.0, 1e-10);
        for (int s = 0; s < sp.S; ++s) {
          double marg = 0.0;
          for (int a = 0; a < sp.A; ++a) marg += f.l(t, k, s, a);
          EXPECT_NEAR(marg, f.m(t, k, s), 1e-10);
        }
      }
  }
}

TEST(ForwardFlow, RejectsSubstochasticTransition) {
  Spaces sp{2, 1, 1};
  auto g = constant_game(sp, std::vector<double>(4, 0.0), {0.5, 0.4, 0.5, 0.5});
  EXPECT_THROW(forward_flow(g, {Policy::uniform(sp)}), ValidationError);
}

TEST(AgentFlow, MixtureIdentity) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Spaces sp{3, 2, 3};
    auto g = random_mpmfg(sp, 5, 2, seed + 100);
    CounterRng rng(seed, 3);
    StrategyProfile pi{random_policy(sp, rng), random_policy(sp, rng)};
    auto f = forward_flow(g, pi);
    for (int k = 0; k < 2; ++k) {
      std::vector<double> mix(static_cast<std::size_t>(sp.periods()) * sp.S * sp.A, 0.0);
      for (int s0 = 0; s0 < sp.S; ++s0) {
        if (g.mu0(k)[s0] == 0.0) continue;
        auto d = agent_flow(g, f, k, s0, pi[k]);
        for (std::size_t i = 0; i < mix.size(); ++i) mix[i] += g.mu0(k)[s0] * d[i];
      }
      for (int t = 0; t <= sp.T; ++t)
        for (int s = 0; s < sp.S; ++s)
          for (int a = 0; a < sp.A; ++a)
            EXPECT_NEAR(mix[(t * sp.S + s) * sp.A + a], f.l(t, k, s, a), 1e-10);
    }
  }
}

TEST(AgentFlow, SingleStateFollowsPolicy) {
  Spaces sp{1, 3, 2};
  auto g = constant_game(sp, std::vector<double>(9, 0.0), std::vector<double>(6, 1.0));
  CounterRng rng(2, 2);
  Policy dev = random_policy(sp, rng);
  auto f = forward_flow(g, {Policy::uniform(sp)});
  auto d = agent_flow(g, f, 0, 0, dev);
  for (int t = 0; t <= 2; ++t)
    for (int a = 0; a < 3; ++a) EXPECT_NEAR(d[t * 3 + a], dev(t, 0, a), 1e-15);
}

TEST(AgentFlow, TwoStateChainMatchesMatrixProduct) {
  // Action 0 stays, action 1 switches state; the policy switches with
  // probability 0.25 from state 0 and 0.5 from state 1.
  Spaces sp{2, 2, 2};
  std::vector<double> P;
  for (int t = 0; t < 2; ++t)
    for (int s = 0; s < 2; ++s)
      for (int a = 0; a < 2; ++a) {
        int to = a == 0 ? s : 1 - s;
        P.push_back(to == 0 ? 1.0 : 0.0);
        P.push_back(to == 1 ? 1.0 : 0.0);
      }
  auto g = constant_game(sp, std::vector<double>(12, 0.0), P);
  std::vector<double> k;
  for (int t = 0; t <= 2; ++t) {
    k.insert(k.end(), {0.75, 0.25});
    k.insert(k.end(), {0.5, 0.5});
  }
  Policy pi(sp, k);
  auto f = forward_flow(g, {pi});
  auto d = agent_flow(g, f, 0, 0, pi);
  // state chain M = [[0.75, 0.25], [0.5, 0.5]]: mu1 = (0.75, 0.25), mu2 = mu1 M
  const double mu2_0 = 0.75 * 0.75 + 0.25 * 0.5, mu2_1 = 0.75 * 0.25 + 0.25 * 0.5;
  EXPECT_NEAR(d[1 * 4 + 0] + d[1 * 4 + 1], 0.75, 1e-15);
  EXPECT_NEAR(d[2 * 4 + 0] + d[2 * 4 + 1], mu2_0, 1e-15);
  EXPECT_NEAR(d[2 * 4 + 2] + d[2 * 4 + 3], mu2_1, 1e-15);
  EXPECT_NEAR(d[2 * 4 + 3], mu2_1 * 0.5, 1e-15);
}

TEST(BestResponse, TiesGoToLowestAction) {
  Spaces sp{2, 3, 2};
  auto g = constant_game(sp, std::vector<double>(18, 1.0), std::vector<double>(24, 0.5));
  auto f = forward_flow(g, {Policy::uniform(sp)});
  auto br = best_response(g, f, 0);
  EXPECT_NEAR(br.value, 3.0, 1e-15);
  for (int t = 0; t <= 2; ++t)
    for (int s = 0; s < 2; ++s) EXPECT_EQ(br.policy(t, s, 0), 1.0);
}

TEST(BestResponse, SingleStateMyopic) {
  Spaces sp{1, 3, 2};
  std::vector<double> r;
  for (int t = 0; t <= 2; ++t) r.insert(r.end(), {0.0, 1.0, 2.0});
  auto g = constant_game(sp, r, std::vector<double>(6, 1.0));
  auto f = forward_flow(g, {Policy::uniform(sp)});
  auto br = best_response(g, f, 0);
  // three decision periods t = 0, 1, 2
  EXPECT_DOUBLE_EQ(br.value, 6.0);
  for (int t = 0; t <= 2; ++t) EXPECT_EQ(br.policy(t, 0, 2), 1.0);
}

TEST(BestResponse, MatchesEnumerationOnSmallMdps) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    Spaces sp{2, 2, 1 + static_cast<int>(seed % 3)};
    auto g = random_mpmfg(sp, 4, 1 + static_cast<int>(seed % 2), seed + 500);
    CounterRng rng(seed, 11);
    StrategyProfile pi;
    for (int k = 0; k < g.K; ++k) pi.push_back(random_policy(sp, rng));
    auto f = forward_flow(g, pi);
    for (int k = 0; k < g.K; ++k) {
      GroupMdp m = group_mdp(g, f, k);
      std::vector<double> mu0(g.mu0(k).begin(), g.mu0(k).end());
      auto br = best_response(m, g.mu0(k));
      EXPECT_NEAR(br.value, oracle::brute_force_best_value(m, mu0), 1e-12);
      EXPECT_NEAR(br.value, policy_value(m, g.mu0(k), br.policy), 1e-10);
      for (int s = 0; s < sp.S; ++s) {
        std::vector<double> delta(sp.S, 0.0);
        delta[s] = 1.0;
        EXPECT_NEAR(br.value_by_state[s], oracle::brute_force_best_value(m, delta), 1e-12);
      }
    }
  }
}

TEST(Exploitability, TrivialGameIsZero) {
  Spaces sp{1, 1, 3};
  auto g = constant_game(sp, std::vector<double>(4, 2.0), std::vector<double>(3, 1.0));
  auto ex = exploitability(g, {Policy::uniform(sp)});
  EXPECT_EQ(ex.weighted_expl, 0.0);
}

TEST(Exploitability, WeightedSumRecomputedIndependently) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Spaces sp{2, 2, 2};
    auto g = random_mpmfg(sp, 5, 2, seed + 40);
    CounterRng rng(seed, 5);
    StrategyProfile pi{random_policy(sp, rng), random_policy(sp, rng)};
    auto ex = exploitability(g, pi);
    auto f = forward_flow(g, pi);
    double weighted = 0.0;
    for (int k = 0; k < 2; ++k) {
      GroupMdp m = group_mdp(g, f, k);
      std::vector<double> mu0(g.mu0(k).begin(), g.mu0(k).end());
      // value of the stochastic policy by expanding over its deterministic mixtures
      double v = 0.0;
      oracle::for_each_deterministic(sp, [&](const std::vector<int>& a) {
        double w = 1.0;
        for (int c = 0; c < sp.periods() * sp.S; ++c) w *= pi[k](c / sp.S, c % sp.S, a[c]);
        v += w * oracle::forward_value(m, mu0, a);
      });
      const double e = oracle::brute_force_best_value(m, mu0) - v;
      EXPECT_NEAR(ex.per_group_expl[k], e, 1e-12);
      weighted += g.weights[k] * e;
    }
    EXPECT_NEAR(ex.weighted_expl, weighted, 1e-12);
  }
}

TEST(Exploitability, InvariantUnderActionRelabeling) {
  Spaces sp{2, 3, 2};
  auto g = random_mpmfg(sp, 4, 2, 77);
  const std::array<int, 3> perm{2, 0, 1};  // new action b plays old action perm[b]
  MPMFG h = g;
  h.group_reward = [g, perm](int t, int k, int s, int a, const MeanFieldView& L) {
    std::vector<double> Lp(L.data.size());
    const std::size_t block = static_cast<std::size_t>(L.S) * L.A;
    for (int j = 0; j < L.K; ++j)
      for (int s2 = 0; s2 < L.S; ++s2)
        for (int b = 0; b < L.A; ++b) Lp[j * block + s2 * L.A + perm[b]] = L(j, s2, b);
    return g.group_reward(t, k, s, perm[a], MeanFieldView{Lp, L.K, L.S, L.A});
  };
  h.group_transition = [g, perm](int t, int k, int s, int a, const MeanFieldView& L, std::span<double> nx) {
    std::vector<double> Lp(L.data.size());
    const std::size_t block = static_cast<std::size_t>(L.S) * L.A;
    for (int j = 0; j < L.K; ++j)
      for (int s2 = 0; s2 < L.S; ++s2)
        for (int b = 0; b < L.A; ++b) Lp[j * block + s2 * L.A + perm[b]] = L(j, s2, b);
    g.group_transition(t, k, s, perm[a], MeanFieldView{Lp, L.K, L.S, L.A}, nx);
  };
  CounterRng rng(1, 1);
  StrategyProfile pi{random_policy(sp, rng), random_policy(sp, rng)}, pj;
  for (const auto& p : pi) {
    std::vector<double> k(p.kernel().size());
    for (int t = 0; t <= sp.T; ++t)
      for (int s = 0; s < sp.S; ++s)
        for (int b = 0; b < sp.A; ++b) k[(t * sp.S + s) * sp.A + b] = p(t, s, perm[b]);
    pj.emplace_back(sp, k);
  }
  auto e1 = exploitability(g, pi), e2 = exploitability(h, pj);
  for (int k = 0; k < 2; ++k) EXPECT_NEAR(e1.per_group_expl[k], e2.per_group_expl[k], 1e-12);
}

TEST(Exploitability, ClampsOnlyRoundingNoise) {
  EXPECT_EQ(detail::clamp_expl(-5e-10, 0), 0.0);
  EXPECT_THROW(detail::clamp_expl(-1e-8, 0), NumericalError);
}

TEST(FictitiousPlay, TrivialGameStopsAtFirstIteration) {
  Spaces sp{1, 1, 2};
  auto g = constant_game(sp, std::vector<double>(3, 1.0), std::vector<double>(2, 1.0));
  auto rep = solve_fictitious_play(g, 50, 0.0);
  EXPECT_EQ(rep.iterations, 1);
  EXPECT_EQ(rep.weighted_expl, 0.0);
}

TEST(FictitiousPlay, DecoupledGameSolvedAfterOneStep) {
  Spaces sp{2, 2, 2};
  auto g = random_mpmfg(sp, 4, 2, 9, 0.0, 0.0);
  auto rep = solve_fictitious_play(g, 50, 0.0);
  EXPECT_EQ(rep.iterations, 2);
  EXPECT_GT(rep.expl_history[0], 0.0);
  EXPECT_EQ(rep.weighted_expl, 0.0);
}

TEST(FictitiousPlay, ReportsAreBitIdentical) {
  Spaces sp{3, 2, 3};
  auto g = random_mpmfg(sp, 6, 2, 12);
  auto a = solve_fictitious_play(g, 60, 1e-12);
  auto b = solve_fictitious_play(g, 60, 1e-12);
  EXPECT_EQ(a.expl_history, b.expl_history);
  for (int k = 0; k < 2; ++k) EXPECT_EQ(a.profile[k], b.profile[k]);
  double w = 0.0;
  for (int k = 0; k < 2; ++k) w += g.weights[k] * a.per_group_expl[k];
  EXPECT_NEAR(a.weighted_expl, w, 1e-12);
}

TEST(FictitiousPlay, PricingDeskExploitabilityDecreases) {
  PricingParams p;
  p.S_cap = 4;
  p.Q_cap = 2;
  p.H_cap = 2;
  p.T = 3;
  p.Q0 = 1.0;
  p.d = 1.0;
  p.sigma = 0.5;
  p = two_type_params(p, 6, 0.5, 0.2, 0.4, {0.1, 0.1, 0.0, 0.1, 0.1});
  auto m = build_pricing_mpmfg(p, two_type_partition(p));
  auto rep = solve_fictitious_play(m.mpmfg, 200, 0.0);
  const auto& h = rep.expl_history;
  ASSERT_EQ(h.size(), 200u);
  auto window = [&](std::size_t start) {
    double s = 0.0;
    for (std::size_t i = start; i < start + 10; ++i) s += h[i];
    return s / 10.0;
  };
  // block averages over consecutive windows of 10
  for (std::size_t b = 10; b + 10 <= h.size(); b += 10) EXPECT_LE(window(b), window(b - 10) * (1.0 + 1e-9)) << b;
  EXPECT_LT(h.back(), 0.05 * h.front());
}
