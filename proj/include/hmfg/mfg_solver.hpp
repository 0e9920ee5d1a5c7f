#pragma once

// Mean-field flows, best responses against a frozen flow, exploitability and
// a fictitious-play solver for multi-population mean-field games.

#include <string>
#include <vector>

#include "hmfg/common.hpp"
#include "hmfg/game_model.hpp"

namespace hmfg {

struct BestResponseResult {
  Policy policy;
  std::vector<double> value_by_state;  // optimal value from each initial state
  double value = 0.0;                  // expectation under mu_0^k
};

struct SolveReport {
  StrategyProfile profile;
  double weighted_expl = 0.0;
  std::vector<double> per_group_expl;
  int iterations = 0;
  std::vector<double> expl_history;                    // weighted, one entry per iteration
  std::vector<std::vector<double>> group_expl_history;  // per iteration, K entries
};

namespace detail {

inline void check_profile(const MPMFG& g, const StrategyProfile& pibar) {
  require(static_cast<int>(pibar.size()) == g.K, "profile must have one policy per group");
  for (const auto& p : pibar) require(p.spaces() == g.spaces, "policy dimensions do not match the game");
}

inline void check_transition(std::span<double> next) { check_simplex(next, kSimplexTol, "transition output"); }

}  // namespace detail

/// Single-agent MDP faced by a member of group k once the flow is frozen:
/// rewards (T+1) x S x A and transitions T x S x A x S.
struct GroupMdp {
  Spaces spaces;
  std::vector<double> reward;
  std::vector<double> transition;

  double r(int t, int s, int a) const {
    return reward[(static_cast<std::size_t>(t) * spaces.S + s) * spaces.A + a];
  }
  std::span<const double> p(int t, int s, int a) const {
    return {transition.data() + ((static_cast<std::size_t>(t) * spaces.S + s) * spaces.A + a) * spaces.S,
            static_cast<std::size_t>(spaces.S)};
  }
};

inline GroupMdp group_mdp(const MPMFG& g, const MeanFieldFlow& flow, int k) {
  const auto& sp = g.spaces;
  require(k >= 0 && k < g.K, "group index out of range");
  require(flow.K == g.K && flow.spaces == sp, "flow does not match the game");
  GroupMdp m{sp, std::vector<double>(static_cast<std::size_t>(sp.periods()) * sp.S * sp.A),
             std::vector<double>(static_cast<std::size_t>(sp.T) * sp.S * sp.A * sp.S)};
  for (int t = 0; t <= sp.T; ++t) {
    MeanFieldView L = flow.at(t);
    for (int s = 0; s < sp.S; ++s)
      for (int a = 0; a < sp.A; ++a) {
        m.reward[(static_cast<std::size_t>(t) * sp.S + s) * sp.A + a] = g.group_reward(t, k, s, a, L);
        if (t < sp.T) {
          std::span<double> nx(m.transition.data() + ((static_cast<std::size_t>(t) * sp.S + s) * sp.A + a) * sp.S,
                               sp.S);
          g.group_transition(t, k, s, a, L, nx);
          detail::check_transition(nx);
        }
      }
  }
  return m;
}

/// Forward (Fokker-Planck) recursion for all groups under pibar.
inline MeanFieldFlow forward_flow(const MPMFG& g, const StrategyProfile& pibar) {
  g.validate();
  detail::check_profile(g, pibar);
  const auto& sp = g.spaces;
  const int S = sp.S, A = sp.A;
  MeanFieldFlow f(sp, g.K);
  for (int k = 0; k < g.K; ++k)
    for (int s = 0; s < S; ++s) {
      f.m(0, k, s) = g.mu0(k)[s];
      for (int a = 0; a < A; ++a) f.l(0, k, s, a) = g.mu0(k)[s] * pibar[k](0, s, a);
    }
  std::vector<double> nx(S);
  for (int t = 0; t < sp.T; ++t) {
    MeanFieldView L = f.at(t);
    for (int k = 0; k < g.K; ++k) {
      for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) {
          const double w = f.l(t, k, s, a);
          if (w == 0.0) continue;
          g.group_transition(t, k, s, a, L, nx);
          detail::check_transition(nx);
          for (int s2 = 0; s2 < S; ++s2) f.m(t + 1, k, s2) += w * nx[s2];
        }
      for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) f.l(t + 1, k, s, a) = f.m(t + 1, k, s) * pibar[k](t + 1, s, a);
    }
  }
  for (int t = 0; t <= sp.T; ++t)
    for (int k = 0; k < g.K; ++k) {
      double mass = 0.0;
      for (double x : f.group(t, k)) mass += x;
      if (std::abs(mass - 1.0) > kFlowTol)
        throw NumericalError("forward_flow: mass " + std::to_string(mass) + " at t=" + std::to_string(t));
    }
  return f;
}

/// State-action occupancy of one agent of group k starting at s0 and playing
/// `deviant` while the population flow stays frozen: (T+1) x S x A.
inline std::vector<double> agent_flow(const GroupMdp& m, int s0, const Policy& deviant) {
  const auto& sp = m.spaces;
  require(s0 >= 0 && s0 < sp.S, "agent_flow: s0 out of range");
  require(deviant.spaces() == sp, "agent_flow: policy dimensions do not match");
  const std::size_t slice = static_cast<std::size_t>(sp.S) * sp.A;
  std::vector<double> d(sp.periods() * slice, 0.0);
  for (int a = 0; a < sp.A; ++a) d[s0 * sp.A + a] = deviant(0, s0, a);
  std::vector<double> mu(sp.S);
  for (int t = 0; t < sp.T; ++t) {
    std::fill(mu.begin(), mu.end(), 0.0);
    for (int s = 0; s < sp.S; ++s)
      for (int a = 0; a < sp.A; ++a) {
        const double w = d[t * slice + s * sp.A + a];
        if (w == 0.0) continue;
        auto p = m.p(t, s, a);
        for (int s2 = 0; s2 < sp.S; ++s2) mu[s2] += w * p[s2];
      }
    for (int s = 0; s < sp.S; ++s)
      for (int a = 0; a < sp.A; ++a) d[(t + 1) * slice + s * sp.A + a] = mu[s] * deviant(t + 1, s, a);
  }
  double mass = 0.0;
  for (std::size_t i = sp.T * slice; i < d.size(); ++i) mass += d[i];
  if (std::abs(mass - 1.0) > kFlowTol) throw NumericalError("agent_flow: mass drift");
  return d;
}

inline std::vector<double> agent_flow(const MPMFG& g, const MeanFieldFlow& flow, int k, int s0,
                                      const Policy& deviant) {
  return agent_flow(group_mdp(g, flow, k), s0, deviant);
}

/// Backward induction; ties go to the lowest action index.
inline BestResponseResult best_response(const GroupMdp& m, std::span<const double> mu0) {
  const auto& sp = m.spaces;
  const int S = sp.S, A = sp.A;
  std::vector<int> greedy(static_cast<std::size_t>(sp.periods()) * S, 0);
  std::vector<double> v(S, 0.0), vnext(S, 0.0);
  for (int t = sp.T; t >= 0; --t) {
    for (int s = 0; s < S; ++s) {
      double best = 0.0;
      int arg = 0;
      for (int a = 0; a < A; ++a) {
        double q = m.r(t, s, a);
        if (t < sp.T) {
          auto p = m.p(t, s, a);
          for (int s2 = 0; s2 < S; ++s2) q += p[s2] * vnext[s2];
        }
        if (a == 0 || q > best) {
          best = q;
          arg = a;
        }
      }
      v[s] = best;
      greedy[static_cast<std::size_t>(t) * S + s] = arg;
    }
    std::swap(v, vnext);
  }
  BestResponseResult r{Policy::deterministic(sp, greedy), vnext, 0.0};
  for (int s = 0; s < S; ++s) r.value += mu0[s] * r.value_by_state[s];
  return r;
}

inline BestResponseResult best_response(const MPMFG& g, const MeanFieldFlow& flow, int k) {
  return best_response(group_mdp(g, flow, k), g.mu0(k));
}

/// Value of `policy` from each initial state by backward evaluation.
inline std::vector<double> policy_value_by_state(const GroupMdp& m, const Policy& policy) {
  const auto& sp = m.spaces;
  const int S = sp.S, A = sp.A;
  require(policy.spaces() == sp, "policy dimensions do not match");
  std::vector<double> v(S, 0.0), vnext(S, 0.0);
  for (int t = sp.T; t >= 0; --t) {
    for (int s = 0; s < S; ++s) {
      double acc = 0.0;
      for (int a = 0; a < A; ++a) {
        const double pa = policy(t, s, a);
        if (pa == 0.0) continue;
        double q = m.r(t, s, a);
        if (t < sp.T) {
          auto p = m.p(t, s, a);
          for (int s2 = 0; s2 < S; ++s2) q += p[s2] * vnext[s2];
        }
        acc += pa * q;
      }
      v[s] = acc;
    }
    std::swap(v, vnext);
  }
  return vnext;
}

inline double policy_value(const GroupMdp& m, std::span<const double> mu0, const Policy& policy) {
  auto v = policy_value_by_state(m, policy);
  double out = 0.0;
  for (std::size_t s = 0; s < v.size(); ++s) out += mu0[s] * v[s];
  return out;
}

struct ExploitabilityResult {
  std::vector<double> per_group_expl;
  double weighted_expl = 0.0;
  std::vector<BestResponseResult> best_responses;
};

namespace detail {

inline double clamp_expl(double e, int k) {
  if (e < -kExplClampTol)
    throw NumericalError("exploitability of group " + std::to_string(k) + " is " + std::to_string(e) +
                         ": best response does not dominate");
  return std::max(0.0, e);
}

inline ExploitabilityResult exploitability_on_flow(const MPMFG& g, const StrategyProfile& pibar,
                                                   const MeanFieldFlow& flow) {
  ExploitabilityResult out;
  out.per_group_expl.assign(g.K, 0.0);
  out.best_responses.resize(g.K);
  parallel_for(static_cast<std::size_t>(g.K), [&](std::size_t kk) {
    const int k = static_cast<int>(kk);
    GroupMdp m = group_mdp(g, flow, k);
    out.best_responses[k] = best_response(m, g.mu0(k));
    out.per_group_expl[k] = clamp_expl(out.best_responses[k].value - policy_value(m, g.mu0(k), pibar[k]), k);
  });
  for (int k = 0; k < g.K; ++k) out.weighted_expl += g.weights[k] * out.per_group_expl[k];
  return out;
}

}  // namespace detail

inline ExploitabilityResult exploitability(const MPMFG& g, const StrategyProfile& pibar) {
  MeanFieldFlow flow = forward_flow(g, pibar);
  return detail::exploitability_on_flow(g, pibar, flow);
}

/// Fictitious play from the uniform profile. Iteration n evaluates the
/// average of the first n-1 best responses.
inline SolveReport solve_fictitious_play(const MPMFG& g, int iters, double tol) {
  g.validate();
  require(iters >= 1, "solve_fictitious_play: iters must be >= 1");
  require(tol >= 0.0, "solve_fictitious_play: tol must be >= 0");
  StrategyProfile pi(g.K, Policy::uniform(g.spaces));
  SolveReport rep;
  for (int it = 1;; ++it) {
    MeanFieldFlow flow = forward_flow(g, pi);
    ExploitabilityResult ex = detail::exploitability_on_flow(g, pi, flow);
    rep.expl_history.push_back(ex.weighted_expl);
    rep.group_expl_history.push_back(ex.per_group_expl);
    if (ex.weighted_expl <= tol || it == iters) {
      rep.profile = std::move(pi);
      rep.weighted_expl = ex.weighted_expl;
      rep.per_group_expl = std::move(ex.per_group_expl);
      rep.iterations = it;
      return rep;
    }
    const double step = 1.0 / it;
    for (int k = 0; k < g.K; ++k) {
      std::vector<double> kern = pi[k].kernel();
      const auto& br = ex.best_responses[k].policy.kernel();
      for (std::size_t i = 0; i < kern.size(); ++i) kern[i] += step * (br[i] - kern[i]);
      pi[k] = Policy(g.spaces, std::move(kern));
    }
  }
}

}  // namespace hmfg
