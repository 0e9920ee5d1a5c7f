#pragma once

// Choosing the player-to-group assignment: K-means on the parameters for the
// heterogeneity term alone, and exact enumeration or local search for the
// combined heterogeneity plus mean-field objective.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "hmfg/bounds.hpp"
#include "hmfg/common.hpp"
#include "hmfg/game_model.hpp"

namespace hmfg {

enum class PartitionMethod { kmeans, exact_enum, local_search, user };

inline std::string to_string(PartitionMethod m) {
  switch (m) {
    case PartitionMethod::kmeans: return "kmeans";
    case PartitionMethod::exact_enum: return "exact_enum";
    case PartitionMethod::local_search: return "local_search";
    case PartitionMethod::user: return "user";
  }
  return "unknown";
}

struct PartitionSolution {
  GroupPartition partition;
  std::vector<double> centroids;  // K x d
  double objective = 0.0;
  double heter_term = 0.0;
  double mf_term = 0.0;
  PartitionMethod method = PartitionMethod::kmeans;
};

/// Scalar weights of the reduced mixed-integer objective
///   heter_weight * sqrt(SSE) + mf_weight * sum_k sqrt(N_k)
/// with heter_weight = 2 w_D T and
/// mf_weight = max{R_max, 1} C(T,W) sqrt(SA) ((w_P + w_R)/N + 1/sqrt N).
struct MicpWeights {
  double heter_weight = 0.0;
  double mf_weight = 0.0;
};

/// `lip` carries the aggregate (unweighted) constants in its single entry.
inline MicpWeights micp_weights(const LipschitzProfile& lip, const Spaces& spaces, int N) {
  require(lip.K() == 1, "micp_weights: expects the aggregate constants as a one-group profile");
  require(N >= 1, "micp_weights: N must be >= 1");
  const double cgen = generic_constant(spaces, lip.w_max);
  MicpWeights w;
  w.heter_weight = 2.0 * lip.w_D * spaces.T;
  w.mf_weight = std::max(lip.rbar_max, 1.0) * cgen * ((lip.w_P[0] + lip.w_R[0]) / N + 1.0 / std::sqrt(double(N)));
  return w;
}

namespace detail {

inline std::vector<double> centroids_of(std::span<const double> thetas, int d, const GroupPartition& p) {
  auto sz = p.sizes();
  std::vector<double> c(static_cast<std::size_t>(p.K) * d, 0.0);
  for (int i = 0; i < p.n_players(); ++i)
    for (int x = 0; x < d; ++x) c[p.assignment[i] * d + x] += thetas[i * d + x];
  for (int k = 0; k < p.K; ++k)
    if (sz[k] > 0)
      for (int x = 0; x < d; ++x) c[k * d + x] /= sz[k];
  return c;
}

inline double size_term(const GroupPartition& p) {
  double s = 0.0;
  for (int n : p.sizes())
    if (n > 0) s += std::sqrt(double(n));
  return s;
}

inline void fill_micp(PartitionSolution& sol, std::span<const double> thetas, int d, const MicpWeights& w) {
  sol.heter_term = w.heter_weight * std::sqrt(within_group_sse(thetas, d, sol.partition));
  sol.mf_term = w.mf_weight * size_term(sol.partition);
  sol.objective = sol.heter_term + sol.mf_term;
  sol.centroids = centroids_of(thetas, d, sol.partition);
}

inline double sq_dist(const double* a, const double* b, int d) {
  double s = 0.0;
  for (int x = 0; x < d; ++x) {
    const double e = a[x] - b[x];
    s += e * e;
  }
  return s;
}

struct LloydRun {
  std::vector<int> assignment;
  double sse = 0.0;
};

inline LloydRun lloyd(std::span<const double> th, int n, int d, int K, CounterRng& rng, int max_iter) {
  // k-means++ seeding
  std::vector<double> cent(static_cast<std::size_t>(K) * d);
  std::vector<double> dist(n, std::numeric_limits<double>::infinity());
  int first = static_cast<int>(rng.below(n));
  std::copy_n(th.data() + static_cast<std::size_t>(first) * d, d, cent.begin());
  for (int k = 1; k < K; ++k) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      dist[i] = std::min(dist[i], sq_dist(th.data() + i * d, cent.data() + (k - 1) * d, d));
      total += dist[i];
    }
    int pick = 0;
    if (total > 0.0) {
      double u = rng.uniform() * total, acc = 0.0;
      pick = n - 1;
      for (int i = 0; i < n; ++i) {
        acc += dist[i];
        if (u < acc) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<int>(rng.below(n));
    }
    std::copy_n(th.data() + static_cast<std::size_t>(pick) * d, d, cent.begin() + k * d);
  }

  LloydRun run{std::vector<int>(n, -1), std::numeric_limits<double>::infinity()};
  std::vector<double> sums(static_cast<std::size_t>(K) * d);
  std::vector<int> counts(K);
  // rounding slack for the monotonicity checks, relative to the data scale
  double slack = 0.0;
  for (int i = 0; i < n * d; ++i) slack += th[i] * th[i];
  slack = 1e-15 * slack + 1e-300;
  for (int it = 0; it < max_iter; ++it) {
    bool changed = false;
    double sse = 0.0;
    for (int i = 0; i < n; ++i) {
      int best = 0;
      double bd = sq_dist(th.data() + i * d, cent.data(), d);
      for (int k = 1; k < K; ++k) {
        double dk = sq_dist(th.data() + i * d, cent.data() + k * d, d);
        if (dk < bd) {
          bd = dk;
          best = k;
        }
      }
      if (run.assignment[i] != best) changed = true;
      run.assignment[i] = best;
      sse += bd;
    }
    // Assignment against the current centroids can only lower the SSE.
    if (sse > run.sse * (1.0 + 1e-12) + slack)
      throw NumericalError("kmeans: SSE increased across a Lloyd iteration");
    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (int i = 0; i < n; ++i) {
      ++counts[run.assignment[i]];
      for (int x = 0; x < d; ++x) sums[run.assignment[i] * d + x] += th[i * d + x];
    }
    for (int k = 0; k < K; ++k)
      if (counts[k] > 0)
        for (int x = 0; x < d; ++x) cent[k * d + x] = sums[k * d + x] / counts[k];
    for (int k = 0; k < K; ++k) {
      if (counts[k] > 0) continue;
      // Reseed an empty cluster with the point farthest from its centroid;
      // the donor cluster's mean is recomputed without it.
      int far = -1;
      double fd = -1.0;
      for (int i = 0; i < n; ++i) {
        if (counts[run.assignment[i]] <= 1) continue;
        double di = sq_dist(th.data() + i * d, cent.data() + run.assignment[i] * d, d);
        if (di > fd) {
          fd = di;
          far = i;
        }
      }
      if (far < 0) continue;
      const int j = run.assignment[far];
      --counts[j];
      for (int x = 0; x < d; ++x) {
        sums[j * d + x] -= th[far * d + x];
        cent[j * d + x] = sums[j * d + x] / counts[j];
        sums[k * d + x] = th[far * d + x];
      }
      run.assignment[far] = k;
      counts[k] = 1;
      std::copy_n(th.data() + static_cast<std::size_t>(far) * d, d, cent.begin() + k * d);
      changed = true;
    }
    // SSE of the updated centroids, the reference for the next iteration.
    double after = 0.0;
    for (int i = 0; i < n; ++i) after += sq_dist(th.data() + i * d, cent.data() + run.assignment[i] * d, d);
    if (after > sse * (1.0 + 1e-12) + slack) {
      // Means and reseeded singletons can only lower the SSE.
      throw NumericalError("kmeans: SSE increased after the centroid update");
    }
    run.sse = after;
    if (!changed) break;
  }
  return run;
}

}  // namespace detail

/// Lloyd iterations from k-means++ seeding; best of `restarts` runs. The
/// objective is the within-cluster mean SSE (1/N) sum ||theta - c_k||^2.
inline PartitionSolution kmeans(std::span<const double> thetas, int d, int K, std::uint64_t seed, int restarts = 10,
                                int max_iter = 300) {
  require(d >= 1 && thetas.size() % d == 0 && !thetas.empty(), "kmeans: thetas must be N x d with N >= 1");
  const int n = static_cast<int>(thetas.size() / d);
  require(K >= 1 && K <= n, "kmeans: need 1 <= K <= N");
  require(restarts >= 1, "kmeans: restarts must be >= 1");
  std::vector<detail::LloydRun> runs(restarts);
  parallel_for(runs.size(), [&](std::size_t r) {
    CounterRng rng(seed, 0x6b6d0000ULL + r);
    runs[r] = detail::lloyd(thetas, n, d, K, rng, max_iter);
  });
  std::size_t best = 0;
  for (std::size_t r = 1; r < runs.size(); ++r)
    if (runs[r].sse < runs[best].sse) best = r;
  PartitionSolution sol;
  sol.method = PartitionMethod::kmeans;
  sol.partition = GroupPartition(runs[best].assignment, K);
  sol.centroids = detail::centroids_of(thetas, d, sol.partition);
  sol.heter_term = within_group_sse(thetas, d, sol.partition) / n;
  sol.mf_term = 0.0;
  sol.objective = sol.heter_term;
  return sol;
}

/// Reduced mixed-integer objective; empty groups contribute nothing.
inline double micp_objective(const GroupPartition& partition, std::span<const double> thetas, int d,
                             const MicpWeights& w) {
  require(thetas.size() == static_cast<std::size_t>(partition.n_players()) * d, "micp_objective: thetas must be N x d");
  return w.heter_weight * std::sqrt(within_group_sse(thetas, d, partition)) + w.mf_weight * detail::size_term(partition);
}

inline double micp_objective(const GroupPartition& partition, std::span<const double> thetas, int d,
                             const LipschitzProfile& lip, const Spaces& spaces, int N) {
  return micp_objective(partition, thetas, d, micp_weights(lip, spaces, N));
}

/// Mean-field error of the partitioned model in the per-group aggregate form
///   max{R,1} C sqrt(SA) { sum_k (w_P + w_R)(1/N + sqrt(N_k)/sqrt(N)) + sum_k sqrt(N_k)/N }.
inline double eps_mf_partition(const GroupPartition& partition, const LipschitzProfile& lip, const Spaces& spaces) {
  require(lip.K() == 1, "eps_mf_partition: expects the aggregate constants as a one-group profile");
  const double N = partition.n_players();
  double s = 0.0, sizes = 0.0;
  for (int nk : partition.sizes()) {
    if (nk == 0) continue;
    s += (lip.w_P[0] + lip.w_R[0]) * (1.0 / N + std::sqrt(double(nk)) / std::sqrt(N));
    sizes += std::sqrt(double(nk)) / N;
  }
  return std::max(lip.rbar_max, 1.0) * generic_constant(spaces, lip.w_max) * (s + sizes);
}

inline constexpr int kExactPartitionCap = 12;

/// Exhaustive search over all partitions of [N] into at most K_max blocks
/// (restricted growth strings, visited in lexicographic order).
inline PartitionSolution solve_exact(std::span<const double> thetas, int d, int K_max, const MicpWeights& w) {
  require(d >= 1 && thetas.size() % d == 0 && !thetas.empty(), "solve_exact: thetas must be N x d with N >= 1");
  const int n = static_cast<int>(thetas.size() / d);
  require(K_max >= 1, "solve_exact: K_max must be >= 1");
  if (n > kExactPartitionCap)
    throw CapExceeded("solve_exact: N = " + std::to_string(n) + " exceeds the enumeration cap of " +
                          std::to_string(kExactPartitionCap) + "; use local search",
                      static_cast<std::uint64_t>(n));
  std::vector<int> a(n, 0), best_a;
  std::vector<int> maxp(n, 0);  // max label in a[0..i]
  double best = std::numeric_limits<double>::infinity();
  const int kcap = std::min(K_max, n);
  for (;;) {
    int blocks = maxp[n - 1] + 1;
    double obj = micp_objective(GroupPartition(a, blocks), thetas, d, w);
    if (best_a.empty() || obj < best - 1e-12 * std::max(1.0, std::abs(best))) {
      best = obj;
      best_a = a;
    }
    // next restricted growth string with labels < kcap
    int i = n - 1;
    while (i > 0 && (a[i] == maxp[i - 1] + 1 || a[i] == kcap - 1)) --i;
    if (i == 0) break;
    ++a[i];
    maxp[i] = std::max(maxp[i - 1], a[i]);
    for (int j = i + 1; j < n; ++j) {
      a[j] = 0;
      maxp[j] = maxp[i];
    }
  }
  PartitionSolution sol;
  sol.method = PartitionMethod::exact_enum;
  int blocks = *std::max_element(best_a.begin(), best_a.end()) + 1;
  sol.partition = GroupPartition(best_a, blocks);
  detail::fill_micp(sol, thetas, d, w);
  return sol;
}

inline PartitionSolution solve_exact(std::span<const double> thetas, int d, int K_max, const LipschitzProfile& lip,
                                     const Spaces& spaces, int N) {
  return solve_exact(thetas, d, K_max, micp_weights(lip, spaces, N));
}

namespace detail {

/// Incremental group statistics for local moves.
struct GroupStats {
  int d;
  std::vector<double> sum;  // K x d
  std::vector<double> sq;   // K
  std::vector<int> count;   // K

  GroupStats(std::span<const double> th, int d_, const std::vector<int>& a, int K)
      : d(d_), sum(static_cast<std::size_t>(K) * d_, 0.0), sq(K, 0.0), count(K, 0) {
    for (std::size_t i = 0; i < a.size(); ++i) add(th.data() + i * d, a[i], 1);
  }
  void add(const double* x, int k, int sign) {
    count[k] += sign;
    for (int c = 0; c < d; ++c) {
      sum[k * d + c] += sign * x[c];
      sq[k] += sign * x[c] * x[c];
    }
  }
  double sse(int k) const {
    if (count[k] == 0) return 0.0;
    double s2 = 0.0;
    for (int c = 0; c < d; ++c) s2 += sum[k * d + c] * sum[k * d + c];
    return std::max(0.0, sq[k] - s2 / count[k]);
  }
  double total_sse() const {
    double s = 0.0;
    for (std::size_t k = 0; k < count.size(); ++k) s += sse(static_cast<int>(k));
    return s;
  }
  double sizes() const {
    double s = 0.0;
    for (int c : count)
      if (c > 0) s += std::sqrt(double(c));
    return s;
  }
};

inline std::vector<int> descend(std::span<const double> th, int d, std::vector<int> a, int K, const MicpWeights& w) {
  const int n = static_cast<int>(a.size());
  GroupStats st(th, d, a, K);
  auto value = [&] { return w.heter_weight * std::sqrt(st.total_sse()) + w.mf_weight * st.sizes(); };
  double cur = value();
  for (int guard = 0; guard < 100000; ++guard) {
    double best = cur;
    int bi = -1, bj = -1, bk = -1;
    for (int i = 0; i < n; ++i) {
      const double* x = th.data() + i * d;
      for (int k = 0; k < K; ++k) {
        if (k == a[i]) continue;
        st.add(x, a[i], -1);
        st.add(x, k, 1);
        double v = value();
        st.add(x, k, -1);
        st.add(x, a[i], 1);
        if (v < best - 1e-12 * std::max(1.0, std::abs(best))) {
          best = v;
          bi = i;
          bk = k;
          bj = -1;
        }
      }
    }
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) {
        if (a[i] == a[j]) continue;
        const double* x = th.data() + i * d;
        const double* y = th.data() + j * d;
        st.add(x, a[i], -1);
        st.add(y, a[j], -1);
        st.add(x, a[j], 1);
        st.add(y, a[i], 1);
        double v = value();
        st.add(x, a[j], -1);
        st.add(y, a[i], -1);
        st.add(x, a[i], 1);
        st.add(y, a[j], 1);
        if (v < best - 1e-12 * std::max(1.0, std::abs(best))) {
          best = v;
          bi = i;
          bj = j;
          bk = -1;
        }
      }
    if (bi < 0) break;
    if (bj < 0) {
      st.add(th.data() + bi * d, a[bi], -1);
      st.add(th.data() + bi * d, bk, 1);
      a[bi] = bk;
    } else {
      st.add(th.data() + bi * d, a[bi], -1);
      st.add(th.data() + bj * d, a[bj], -1);
      std::swap(a[bi], a[bj]);
      st.add(th.data() + bi * d, a[bi], 1);
      st.add(th.data() + bj * d, a[bj], 1);
    }
    cur = value();
  }
  return a;
}

/// Canonical labels in order of first appearance; empty groups dropped.
inline GroupPartition compact(const std::vector<int>& a, int K) {
  return GroupPartition(a, K).without_empty_groups().canonical();
}

}  // namespace detail

/// Multi-start descent: k-means seeds for K = 1..K_max, then single-player
/// relocations and pairwise swaps until no move improves the objective.
inline PartitionSolution solve_local(std::span<const double> thetas, int d, int K_max, const MicpWeights& w,
                                     std::uint64_t seed) {
  require(d >= 1 && thetas.size() % d == 0 && !thetas.empty(), "solve_local: thetas must be N x d with N >= 1");
  const int n = static_cast<int>(thetas.size() / d);
  require(K_max >= 1, "solve_local: K_max must be >= 1");
  const int kcap = std::min(K_max, n);
  std::vector<GroupPartition> cand(kcap);
  parallel_for(static_cast<std::size_t>(kcap), [&](std::size_t kk) {
    const int K = static_cast<int>(kk) + 1;
    auto km = kmeans(thetas, d, K, seed + kk, 10);
    cand[kk] = detail::compact(detail::descend(thetas, d, km.partition.assignment, kcap, w), kcap);
  });
  std::size_t best = 0;
  double best_obj = micp_objective(cand[0], thetas, d, w);
  for (std::size_t c = 1; c < cand.size(); ++c) {
    const double o = micp_objective(cand[c], thetas, d, w);
    const bool tie = std::abs(o - best_obj) <= 1e-12 * std::max(1.0, std::abs(best_obj));
    if ((!tie && o < best_obj) || (tie && cand[c].assignment < cand[best].assignment)) {
      best = c;
      best_obj = o;
    }
  }
  PartitionSolution sol;
  sol.method = PartitionMethod::local_search;
  sol.partition = cand[best];
  detail::fill_micp(sol, thetas, d, w);
  return sol;
}

inline PartitionSolution solve_local(std::span<const double> thetas, int d, int K_max, const LipschitzProfile& lip,
                                     const Spaces& spaces, int N, std::uint64_t seed) {
  return solve_local(thetas, d, K_max, micp_weights(lip, spaces, N), seed);
}

/// round(N^{1/3}) clamped to [1, N].
inline int suggest_k(int N) {
  require(N >= 1, "suggest_k: N must be >= 1");
  int k = static_cast<int>(std::lround(std::cbrt(static_cast<double>(N))));
  return std::clamp(k, 1, N);
}

}  // namespace hmfg
