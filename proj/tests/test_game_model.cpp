#include <gtest/gtest.h>

#include "helpers.hpp"
#include "hmfg/bounds.hpp"
#include "hmfg/game_model.hpp"
#include "hmfg/mfg_solver.hpp"
#include "hmfg/parametric.hpp"
#include "hmfg/pricing.hpp"

using namespace hmfg;
using testing_helpers::blocks;

namespace {

ParametricFamily scalar_family(std::vector<double> thetas, int S = 1, int A = 1, int T = 0) {
  ParametricFamily f;
  f.spaces = {S, A, T};
  f.d = 1;
  f.thetas = std::move(thetas);
  f.initial_states.assign(f.thetas.size(), 0);
  const std::size_t per = static_cast<std::size_t>(T + 1) * S * A;
  f.base.assign(per, 0.0);
  f.phi.assign(per, 1.0);
  f.kernel.assign(static_cast<std::size_t>(S * A) * S * A, 0.0);
  f.P0.assign(static_cast<std::size_t>(T) * S * A * S, 1.0 / S);
  f.P1 = f.P0;
  f.h.assign(static_cast<std::size_t>(S) * A, 0.0);
  return f;
}

}  // namespace

TEST(Spaces, RejectsEmptySpaces) {
  EXPECT_THROW((Spaces{0, 1, 1}.validate()), ValidationError);
  EXPECT_THROW((Spaces{1, 0, 1}.validate()), ValidationError);
  EXPECT_THROW((Spaces{1, 1, -1}.validate()), ValidationError);
  EXPECT_NO_THROW((Spaces{1, 1, 0}.validate()));
}

TEST(Policy, RowsMustBeProbabilityVectors) {
  Spaces sp{1, 2, 0};
  EXPECT_THROW(Policy(sp, {0.5, 0.4}), ValidationError);
  EXPECT_THROW(Policy(sp, {1.0 + 1e-10, -1e-10}), ValidationError);
  Policy p(sp, {0.5 + 4e-13, 0.5});
  EXPECT_NEAR(p(0, 0, 0) + p(0, 0, 1), 1.0, 1e-15);
}

TEST(Policy, DeterministicAndUniform) {
  Spaces sp{2, 3, 1};
  std::vector<int> acts{2, 0, 1, 1};
  Policy d = Policy::deterministic(sp, acts);
  EXPECT_EQ(d(0, 0, 2), 1.0);
  EXPECT_EQ(d(1, 1, 1), 1.0);
  EXPECT_EQ(d(0, 1, 1), 0.0);
  Policy u = Policy::uniform(sp);
  EXPECT_DOUBLE_EQ(u(1, 0, 2), 1.0 / 3.0);
}

TEST(GroupPartition, SizesAndWeights) {
  GroupPartition p({0, 1, 0, 2, 2, 2}, 3);
  EXPECT_EQ(p.sizes(), (std::vector<int>{2, 1, 3}));
  auto w = p.weights();
  EXPECT_NEAR(w[0] + w[1] + w[2], 1.0, 1e-15);
  EXPECT_EQ(p.members(2), (std::vector<int>{3, 4, 5}));
  EXPECT_THROW(GroupPartition({0, 3}, 2), ValidationError);
}

TEST(GroupPartition, EmptyGroupsOnlyWhenAllowed) {
  GroupPartition p({0, 0, 2}, 3);
  EXPECT_TRUE(p.has_empty_group());
  EXPECT_NO_THROW(p.validate_for(3, true));
  EXPECT_THROW(p.validate_for(3, false), ValidationError);
  auto q = p.without_empty_groups();
  EXPECT_EQ(q.K, 2);
  EXPECT_EQ(q.assignment, (std::vector<int>{0, 0, 1}));
  EXPECT_EQ(GroupPartition({2, 0, 2}, 3).canonical().assignment, (std::vector<int>{0, 1, 0}));
}

TEST(BuildMpmfg, InitialLawOfTwoPlayerGroup) {
  auto fam = scalar_family({0.0, 0.0}, 2, 1, 1);
  fam.initial_states = {0, 1};
  auto g = build_mpmfg(build_mptype_from_partition(fam, GroupPartition::single(2)));
  EXPECT_DOUBLE_EQ(g.mu0(0)[0], 0.5);
  EXPECT_DOUBLE_EQ(g.mu0(0)[1], 0.5);
}

TEST(BuildMpmfg, AllStartAtZeroGivesPointMass) {
  auto fam = scalar_family({0.0, 1.0, 2.0}, 3, 1, 1);
  auto g = build_mpmfg(build_mptype_from_partition(fam, GroupPartition::single(3)));
  EXPECT_EQ(g.mu0(0)[0], 1.0);
  EXPECT_EQ(g.mu0(0)[1], 0.0);
  EXPECT_EQ(g.mu0(0)[2], 0.0);
}

TEST(BuildMpmfg, FourPlayersTwoGroups) {
  auto fam = scalar_family({0.0, 0.0, 1.0, 1.0}, 2, 1, 1);
  fam.initial_states = {0, 0, 1, 0};
  auto g = build_mpmfg(build_mptype_from_partition(fam, GroupPartition({0, 0, 1, 1}, 2)));
  EXPECT_EQ(g.weights, (std::vector<double>{0.5, 0.5}));
  EXPECT_EQ(g.mu0(0)[0], 1.0);
  EXPECT_EQ(g.mu0(0)[1], 0.0);
  EXPECT_EQ(g.mu0(1)[0], 0.5);
  EXPECT_EQ(g.mu0(1)[1], 0.5);
  double mass = 0.0;
  for (int k = 0; k < g.K; ++k)
    for (double x : g.mu0(k)) mass += g.weights[k] * x;
  EXPECT_NEAR(mass, 1.0, 1e-15);
}

TEST(BuildMpmfg, RejectsEmptyGroup) {
  auto fam = scalar_family({0.0, 1.0});
  EXPECT_THROW(build_mptype_from_partition(fam, GroupPartition({0, 0}, 2)), ValidationError);
}

TEST(Homogenize, GroupMeanParameter) {
  auto fam = scalar_family({0.0, 1.0});
  auto g = build_mptype_from_partition(fam, GroupPartition::single(2));
  std::vector<double> L{1.0};
  MeanFieldView v{L, 1, 1, 1};
  EXPECT_DOUBLE_EQ(g.group_reward(0, 0, 0, 0, v), 0.5);
}

TEST(Homogenize, IdenticalPlayersKeepTheirOracle) {
  Spaces sp{2, 2, 2};
  RandomFamilyOptions opt;
  opt.n_types = 1;
  auto fam = random_family(sp, 2, 3, opt);
  ASSERT_EQ(fam.thetas[0], fam.thetas[1]);
  auto pooled = build_mptype_from_partition(fam, GroupPartition::single(2));
  auto single = build_mptype_from_partition(fam, GroupPartition::singletons(2));
  CounterRng rng(9, 0);
  for (int q = 0; q < 20; ++q) {
    std::vector<double> L1 = hmfg::detail::random_simplex(rng, 4);
    std::vector<double> L2{L1};
    L2.insert(L2.end(), L1.begin(), L1.end());
    MeanFieldView v1{L1, 1, 2, 2}, v2{L2, 2, 2, 2};
    const int t = q % 3, s = q % 2, a = (q / 2) % 2;
    EXPECT_NEAR(pooled.group_reward(t, 0, s, a, v1), single.group_reward(t, 0, s, a, v2), 1e-12);
    EXPECT_NEAR(pooled.group_reward(t, 0, s, a, v1), single.group_reward(t, 1, s, a, v2), 1e-12);
    if (t < sp.T) {
      std::vector<double> n1(2), n2(2);
      pooled.group_transition(t, 0, s, a, v1, n1);
      single.group_transition(t, 1, s, a, v2, n2);
      EXPECT_NEAR(n1[0], n2[0], 1e-12);
    }
  }
}

TEST(Homogenize, PricingAveragesCoefficients) {
  PricingParams p;
  p.S_cap = 2;
  p.Q_cap = 1;
  p.H_cap = 1;
  p.T = 1;
  p.coeffs = {0.1, 0.1, 0.2, 0.1, 0.1, 0.1, 0.1, 0.4, 0.1, 0.1};
  p.initial_states = {0, 0};
  auto c = pricing_group_coeffs(p, GroupPartition::single(2));
  EXPECT_NEAR(c[2], 0.3, 1e-15);
  EXPECT_NEAR(c[0], 0.1, 1e-15);
}

TEST(ExpandPolicy, Indexing) {
  Spaces sp{1, 2, 0};
  Policy a(sp, {1.0, 0.0}), b(sp, {0.0, 1.0});
  auto out = expand_policy({a, b}, GroupPartition({0, 1, 0}, 2));
  ASSERT_EQ(out.size(), 3u);
  EXPECT_EQ(out[0], a);
  EXPECT_EQ(out[1], b);
  EXPECT_EQ(out[2], a);
  auto one = expand_policy({b}, GroupPartition::single(4));
  for (const auto& p : one) EXPECT_EQ(p, b);
  auto id = expand_policy({a, b, a}, GroupPartition::singletons(3));
  EXPECT_EQ(id[1], b);
}

TEST(ExpandPolicy, RestrictionReproducesGroupPolicyBitEqual) {
  Spaces sp{3, 2, 2};
  CounterRng rng(4, 1);
  StrategyProfile pibar{testing_helpers::random_policy(sp, rng), testing_helpers::random_policy(sp, rng)};
  auto part = GroupPartition({1, 0, 1, 1, 0}, 2);
  auto out = expand_policy(pibar, part);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(out[i].kernel(), pibar[part.assignment[i]].kernel());
}

TEST(NPlayerGame, SampledValidationCatchesBadTransition) {
  Spaces sp{2, 2, 1};
  auto fam = random_family(sp, 3, 1);
  auto g = fam.build_n_player();
  EXPECT_NO_THROW(validate_sampled(g, 200, 1));
  NPlayerGame bad = g;
  bad.step = [g](int t, std::span<const int> s, std::span<const int> a, std::span<double> r, std::span<double> nx) {
    g.step(t, s, a, r, nx);
    nx[0] *= 0.5;
  };
  EXPECT_THROW(validate_sampled(bad, 200, 1), ValidationError);
  NPlayerGame loud = g;
  loud.r_max = 1e-6;
  EXPECT_THROW(validate_sampled(loud, 200, 1), ValidationError);
}

TEST(EmpiricalFlow, GroupSlicesSumToOne) {
  std::vector<int> s{0, 1, 1, 0, 2}, a{1, 0, 1, 1, 0};
  GroupPartition p({0, 1, 0, 1, 1}, 2);
  auto L = empirical_flow(s, a, p, p.sizes(), 3, 2);
  for (int k = 0; k < 2; ++k) {
    double m = 0.0;
    for (int x = 0; x < 6; ++x) m += L[k * 6 + x];
    EXPECT_NEAR(m, 1.0, 1e-12);
  }
  EXPECT_DOUBLE_EQ(L[0 * 6 + 0 * 2 + 1], 0.5);
  EXPECT_DOUBLE_EQ(L[0 * 6 + 1 * 2 + 1], 0.5);
}

TEST(GroupMeans, RejectEmptyGroups) {
  std::vector<double> th{0.0, 1.0, 3.0};
  auto m = group_means(th, 1, GroupPartition({0, 1, 1}, 2));
  EXPECT_EQ(m, (std::vector<double>{0.0, 2.0}));
  EXPECT_THROW(group_means(th, 1, GroupPartition({0, 0, 0}, 2)), ValidationError);
}
