#pragma once

// Exact and Monte Carlo evaluation of N-player games: values, unilateral
// best responses, NashConv and empirical mean-field flows.

#include <cstdlib>
#include <string>
#include <vector>

#include "hmfg/common.hpp"
#include "hmfg/game_model.hpp"

namespace hmfg {

inline constexpr std::uint64_t kDefaultJointStateCap = 200000;

/// Joint-state cap, overridable with HMFG_JOINT_STATE_CAP.
inline std::uint64_t joint_state_cap() {
  if (const char* env = std::getenv("HMFG_JOINT_STATE_CAP")) {
    char* end = nullptr;
    unsigned long long v = std::strtoull(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return v;
  }
  return kDefaultJointStateCap;
}

struct JointEvaluation {
  std::vector<double> values;
  double nashconv = 0.0;
  std::vector<double> br_values;
};

namespace detail {

/// S^N with saturation at max+1 to avoid overflow.
inline std::uint64_t joint_size(int S, int n) {
  std::uint64_t j = 1;
  for (int i = 0; i < n; ++i) {
    if (j > std::numeric_limits<std::uint64_t>::max() / static_cast<std::uint64_t>(S))
      return std::numeric_limits<std::uint64_t>::max();
    j *= static_cast<std::uint64_t>(S);
  }
  return j;
}

inline std::size_t checked_joint_size(const NPlayerGame& g, std::uint64_t cap) {
  std::uint64_t j = joint_size(g.spaces.S, g.n_players);
  if (j > cap)
    throw CapExceeded("joint state space S^N = " +
                          (j == std::numeric_limits<std::uint64_t>::max() ? std::string("overflow")
                                                                          : std::to_string(j)) +
                          " exceeds the cap " + std::to_string(cap) +
                          "; raise HMFG_JOINT_STATE_CAP to at least this value",
                      j);
  return static_cast<std::size_t>(j);
}

inline void check_profile(const NPlayerGame& g, const StrategyProfile& profile) {
  require(static_cast<int>(profile.size()) == g.n_players, "profile must have one policy per player");
  for (const auto& p : profile) require(p.spaces() == g.spaces, "policy dimensions do not match the game");
}

/// Player 0 is the least significant digit.
inline void decode(std::size_t x, int S, std::span<int> states) {
  for (auto& s : states) {
    s = static_cast<int>(x % S);
    x /= S;
  }
}

inline std::size_t encode(std::span<const int> states, int S) {
  std::size_t x = 0;
  for (std::size_t i = states.size(); i-- > 0;) x = x * S + states[i];
  return x;
}

struct Support {
  std::vector<int> idx;
  std::vector<double> prob;
};

/// Odometer over a product of finite supports; calls body(indices, weight).
template <typename Body>
void for_each_product(const std::vector<Support>& sup, std::vector<int>& choice, Body&& body) {
  const std::size_t n = sup.size();
  for (const auto& s : sup)
    if (s.idx.empty()) return;
  std::vector<std::size_t> pos(n, 0);
  for (std::size_t i = 0; i < n; ++i) choice[i] = sup[i].idx[0];
  for (;;) {
    double w = 1.0;
    for (std::size_t i = 0; i < n; ++i) w *= sup[i].prob[pos[i]];
    body(choice, w);
    std::size_t i = 0;
    while (i < n) {
      if (++pos[i] < sup[i].idx.size()) {
        choice[i] = sup[i].idx[pos[i]];
        break;
      }
      pos[i] = 0;
      choice[i] = sup[i].idx[0];
      ++i;
    }
    if (i == n) return;
  }
}

inline Support policy_support(const Policy& p, int t, int s) {
  Support out;
  auto row = p.row(t, s);
  for (std::size_t a = 0; a < row.size(); ++a)
    if (row[a] > 0.0) {
      out.idx.push_back(static_cast<int>(a));
      out.prob.push_back(row[a]);
    }
  return out;
}

/// E[V(x')] for x' drawn from the product of the per-player rows of `next`
/// (N x S); contracts the most significant player first.
inline double expect_product(std::span<const double> V, std::span<const double> next, int n, int S,
                             std::vector<double>& buf_a, std::vector<double>& buf_b) {
  if (n == 0) return V[0];
  std::size_t stride = V.size() / S;
  const double* cur = V.data();
  for (int j = n - 1; j >= 0; --j) {
    auto& out = (j % 2 == 0) ? buf_a : buf_b;
    out.assign(stride, 0.0);
    for (int s = 0; s < S; ++s) {
      const double p = next[static_cast<std::size_t>(j) * S + s];
      if (p == 0.0) continue;
      const double* src = cur + s * stride;
      for (std::size_t r = 0; r < stride; ++r) out[r] += p * src[r];
    }
    cur = out.data();
    stride /= S;
  }
  return cur[0];
}

// Chunk count is fixed so reductions do not depend on the thread count.
inline constexpr std::size_t kExactChunks = 8;

inline std::vector<ChunkRange> fixed_chunks_for(std::size_t J) { return fixed_chunks(J, kExactChunks); }

}  // namespace detail

/// Exact values of every player by forward propagation of the joint
/// occupancy over S^N.
inline std::vector<double> exact_value(const NPlayerGame& g, const StrategyProfile& profile,
                                       std::uint64_t cap = joint_state_cap()) {
  g.validate();
  detail::check_profile(g, profile);
  const std::size_t J = detail::checked_joint_size(g, cap);
  const int n = g.n_players, S = g.spaces.S;
  std::vector<double> d(J, 0.0), dnext(J);
  d[detail::encode(g.initial_states, S)] = 1.0;
  std::vector<double> values(n, 0.0);
  const auto chunks = detail::fixed_chunks_for(J);
  for (int t = 0; t <= g.spaces.T; ++t) {
    const bool last = t == g.spaces.T;
    std::vector<std::vector<double>> part_next(chunks.size());
    std::vector<std::vector<double>> part_val(chunks.size(), std::vector<double>(n, 0.0));
    parallel_for(chunks.size(), [&](std::size_t c) {
      std::vector<int> xs(n), choice(n), nxt(n);
      std::vector<double> r(n), nx(static_cast<std::size_t>(n) * S);
      std::vector<detail::Support> asup(n), ssup(n);
      if (!last) part_next[c].assign(J, 0.0);
      for (std::size_t x = chunks[c].begin; x < chunks[c].end; ++x) {
        const double px = d[x];
        if (px == 0.0) continue;
        detail::decode(x, S, xs);
        for (int i = 0; i < n; ++i) asup[i] = detail::policy_support(profile[i], t, xs[i]);
        detail::for_each_product(asup, choice, [&](const std::vector<int>& acts, double pa) {
          g.step(t, xs, acts, r, nx);
          const double w = px * pa;
          for (int i = 0; i < n; ++i) part_val[c][i] += w * r[i];
          if (last) return;
          for (int i = 0; i < n; ++i) {
            ssup[i].idx.clear();
            ssup[i].prob.clear();
            for (int s = 0; s < S; ++s)
              if (nx[i * S + s] > 0.0) {
                ssup[i].idx.push_back(s);
                ssup[i].prob.push_back(nx[i * S + s]);
              }
          }
          detail::for_each_product(ssup, nxt, [&](const std::vector<int>& ns, double ps) {
            part_next[c][detail::encode(ns, S)] += w * ps;
          });
        });
      }
    });
    for (std::size_t c = 0; c < chunks.size(); ++c)
      for (int i = 0; i < n; ++i) values[i] += part_val[c][i];
    if (last) break;
    std::fill(dnext.begin(), dnext.end(), 0.0);
    for (std::size_t c = 0; c < chunks.size(); ++c)
      for (std::size_t x = 0; x < J; ++x) dnext[x] += part_next[c][x];
    double mass = 0.0;
    for (double v : dnext) mass += v;
    if (std::abs(mass - 1.0) > kFlowTol) throw NumericalError("exact_value: joint occupancy mass drift");
    std::swap(d, dnext);
  }
  return values;
}

/// Optimal value of player i against the fixed policies of the others, by
/// backward induction on S^N with the others' actions marginalized.
inline double exact_best_response(const NPlayerGame& g, const StrategyProfile& profile, int i,
                                  std::uint64_t cap = joint_state_cap()) {
  g.validate();
  detail::check_profile(g, profile);
  require(i >= 0 && i < g.n_players, "exact_best_response: player index out of range");
  const std::size_t J = detail::checked_joint_size(g, cap);
  const int n = g.n_players, S = g.spaces.S, A = g.spaces.A;
  std::vector<double> V(J, 0.0), Vnext(J, 0.0);
  const auto chunks = detail::fixed_chunks_for(J);
  for (int t = g.spaces.T; t >= 0; --t) {
    const bool last = t == g.spaces.T;
    parallel_for(chunks.size(), [&](std::size_t c) {
      std::vector<int> xs(n), choice(n);
      std::vector<double> r(n), nx(static_cast<std::size_t>(n) * S), ba, bb, q(A);
      std::vector<detail::Support> asup(n);
      for (std::size_t x = chunks[c].begin; x < chunks[c].end; ++x) {
        detail::decode(x, S, xs);
        for (int j = 0; j < n; ++j) {
          if (j == i) {
            asup[j].idx.resize(A);
            asup[j].prob.assign(A, 1.0);
            for (int a = 0; a < A; ++a) asup[j].idx[a] = a;
          } else {
            asup[j] = detail::policy_support(profile[j], t, xs[j]);
          }
        }
        std::fill(q.begin(), q.end(), 0.0);
        detail::for_each_product(asup, choice, [&](const std::vector<int>& acts, double pa) {
          g.step(t, xs, acts, r, nx);
          double v = r[i];
          if (!last) v += detail::expect_product(Vnext, nx, n, S, ba, bb);
          q[acts[i]] += pa * v;
        });
        double best = q[0];
        for (int a = 1; a < A; ++a) best = std::max(best, q[a]);
        V[x] = best;
      }
    });
    std::swap(V, Vnext);
  }
  return Vnext[detail::encode(g.initial_states, S)];
}

inline JointEvaluation nashconv(const NPlayerGame& g, const StrategyProfile& profile,
                                std::uint64_t cap = joint_state_cap()) {
  JointEvaluation ev;
  ev.values = exact_value(g, profile, cap);
  ev.br_values.resize(g.n_players);
  double gap = 0.0;
  for (int i = 0; i < g.n_players; ++i) {
    ev.br_values[i] = exact_best_response(g, profile, i, cap);
    const double d = ev.br_values[i] - ev.values[i];
    if (d < -kExplClampTol)
      throw NumericalError("nashconv: best response of player " + std::to_string(i) + " below its value");
    gap += d;
  }
  ev.nashconv = std::max(0.0, gap / g.n_players);
  return ev;
}

// ---------------------------------------------------------------------------
// Monte Carlo

struct SimulationResult {
  std::vector<double> value_mean;  // per player
  std::vector<double> value_se;    // standard error of the mean
  int rollouts = 0;
};

struct EmpiricalFlowSample {
  Spaces spaces;
  int K = 1;
  std::vector<double> L_emp;         // (T+1) x K x S x A, mean over rollouts
  std::vector<double> deviation_l1;  // (T+1) x K, mean of ||L_t^{k,N} - L_t^k||_1
  std::vector<double> deviation_se;  // (T+1) x K
  SimulationResult values;
};

namespace detail {

struct Rollout {
  std::vector<double> returns;
  std::vector<double> emp;  // (T+1) x K x S x A, only for mean-field-type games
};

inline Rollout run_rollout(const NPlayerGame& g, const StrategyProfile& profile, std::uint64_t seed, std::uint64_t r,
                           const GroupPartition* partition) {
  const int n = g.n_players, S = g.spaces.S, A = g.spaces.A;
  CounterRng rng(seed, r);
  std::vector<int> s(g.initial_states), a(n);
  std::vector<double> rew(n), nx(static_cast<std::size_t>(n) * S);
  Rollout out{std::vector<double>(n, 0.0), {}};
  std::vector<int> sizes;
  if (partition) {
    sizes = partition->sizes();
    out.emp.assign(static_cast<std::size_t>(g.spaces.periods()) * partition->K * S * A, 0.0);
  }
  for (int t = 0; t <= g.spaces.T; ++t) {
    for (int i = 0; i < n; ++i) a[i] = rng.categorical(profile[i].row(t, s[i]));
    if (partition) {
      auto L = empirical_flow(s, a, *partition, sizes, S, A);
      std::copy(L.begin(), L.end(), out.emp.begin() + static_cast<std::ptrdiff_t>(t * L.size()));
    }
    g.step(t, s, a, rew, nx);
    for (int i = 0; i < n; ++i) out.returns[i] += rew[i];
    if (t < g.spaces.T)
      for (int i = 0; i < n; ++i)
        s[i] = rng.categorical(std::span<const double>(nx.data() + static_cast<std::size_t>(i) * S, S));
  }
  return out;
}

inline SimulationResult summarize(const std::vector<Rollout>& rs, int n) {
  SimulationResult out;
  out.rollouts = static_cast<int>(rs.size());
  out.value_mean.assign(n, 0.0);
  out.value_se.assign(n, 0.0);
  const double R = static_cast<double>(rs.size());
  // Moments are taken about the first rollout so equal samples give exact zeros.
  std::vector<double> shift(rs.front().returns.begin(), rs.front().returns.begin() + n), m1(n, 0.0);
  for (const auto& r : rs)
    for (int i = 0; i < n; ++i) m1[i] += r.returns[i] - shift[i];
  for (int i = 0; i < n; ++i) {
    m1[i] /= R;
    out.value_mean[i] = shift[i] + m1[i];
  }
  if (rs.size() > 1) {
    for (const auto& r : rs)
      for (int i = 0; i < n; ++i) {
        const double e = r.returns[i] - shift[i] - m1[i];
        out.value_se[i] += e * e;
      }
    for (int i = 0; i < n; ++i) out.value_se[i] = std::sqrt(out.value_se[i] / (R - 1.0) / R);
  }
  return out;
}

}  // namespace detail

/// Seeded rollouts; rollout r draws from substream r.
inline SimulationResult simulate(const NPlayerGame& g, const StrategyProfile& profile, int rollouts,
                                 std::uint64_t seed) {
  g.validate();
  detail::check_profile(g, profile);
  require(rollouts >= 1, "simulate: rollouts must be >= 1");
  std::vector<detail::Rollout> rs(rollouts);
  parallel_for(rs.size(), [&](std::size_t r) { rs[r] = detail::run_rollout(g, profile, seed, r, nullptr); });
  return detail::summarize(rs, g.n_players);
}

/// Rollouts of a mean-field-type game, recording the group empirical
/// state-action distributions and their L1 distance to `reference`.
inline EmpiricalFlowSample simulate(const MeanFieldTypeGame& g, const StrategyProfile& profile, int rollouts,
                                    std::uint64_t seed, const MeanFieldFlow& reference) {
  NPlayerGame ng = as_nplayer_game(g);
  detail::check_profile(ng, profile);
  require(rollouts >= 1, "simulate: rollouts must be >= 1");
  require(reference.K == g.partition.K && reference.spaces == g.spaces, "simulate: reference flow does not match");
  std::vector<detail::Rollout> rs(rollouts);
  parallel_for(rs.size(), [&](std::size_t r) { rs[r] = detail::run_rollout(ng, profile, seed, r, &g.partition); });

  const auto& sp = g.spaces;
  const int K = g.partition.K;
  const std::size_t block = static_cast<std::size_t>(sp.S) * sp.A;
  EmpiricalFlowSample out;
  out.spaces = sp;
  out.K = K;
  out.L_emp.assign(static_cast<std::size_t>(sp.periods()) * K * block, 0.0);
  out.deviation_l1.assign(static_cast<std::size_t>(sp.periods()) * K, 0.0);
  out.deviation_se.assign(out.deviation_l1.size(), 0.0);
  std::vector<double> dev(rs.size() * out.deviation_l1.size());
  for (std::size_t r = 0; r < rs.size(); ++r) {
    for (std::size_t x = 0; x < out.L_emp.size(); ++x) out.L_emp[x] += rs[r].emp[x];
    for (int t = 0; t <= sp.T; ++t)
      for (int k = 0; k < K; ++k) {
        const std::size_t off = (static_cast<std::size_t>(t) * K + k) * block;
        std::span<const double> e(rs[r].emp.data() + off, block);
        std::span<const double> ref(reference.L.data() + off, block);
        double mass = 0.0;
        for (double v : e) mass += v;
        if (std::abs(mass - 1.0) > kSimplexTol) throw NumericalError("simulate: empirical flow mass drift");
        const double d = l1_distance(e, ref);
        dev[r * out.deviation_l1.size() + t * K + k] = d;
        out.deviation_l1[t * K + k] += d;
      }
  }
  const double R = static_cast<double>(rs.size());
  for (double& v : out.L_emp) v /= R;
  for (double& v : out.deviation_l1) v /= R;
  if (rs.size() > 1) {
    for (std::size_t r = 0; r < rs.size(); ++r)
      for (std::size_t c = 0; c < out.deviation_l1.size(); ++c) {
        const double e = dev[r * out.deviation_l1.size() + c] - out.deviation_l1[c];
        out.deviation_se[c] += e * e;
      }
    for (double& v : out.deviation_se) v = std::sqrt(v / (R - 1.0) / R);
  }
  out.values = detail::summarize(rs, ng.n_players);
  return out;
}

}  // namespace hmfg
