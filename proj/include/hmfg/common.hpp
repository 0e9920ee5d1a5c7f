#pragma once

// Shared plumbing: error types, tolerances, deterministic parallel loops and
// the counter-based random generator used by every stochastic routine.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace hmfg {

// Tolerances for constructed simplexes and for flows propagated over T steps.
inline constexpr double kSimplexTol = 1e-12;
inline constexpr double kFlowTol = 1e-10;
inline constexpr double kNegativeTol = 1e-14;
inline constexpr double kExplClampTol = 1e-9;

/// Input that violates a documented precondition (bad shapes, empty groups,
/// non-stochastic rows, out-of-range parameters).
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A computation refused because it would exceed a configured resource cap.
class CapExceeded : public std::runtime_error {
 public:
  CapExceeded(const std::string& what, std::uint64_t required)
      : std::runtime_error(what), required_(required) {}
  std::uint64_t required() const { return required_; }

 private:
  std::uint64_t required_;
};

/// Floating point drift beyond the documented tolerances.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A quantity that needs information the scenario does not provide.
class Unsupported : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ValidationError(msg);
}

// ---------------------------------------------------------------------------
// Threads

namespace detail {
inline std::atomic<int>& thread_setting() {
  static std::atomic<int> n{0};
  return n;
}
}  // namespace detail

/// Caps worker parallelism; 0 means hardware concurrency.
inline void set_num_threads(int n) { detail::thread_setting().store(std::max(0, n)); }

inline int num_threads() {
  int n = detail::thread_setting().load();
  if (n > 0) return n;
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Runs body(i) for i in [0, n). Each index must only write state owned by
/// that index; results are then independent of the worker count.
template <typename Body>
void parallel_for(std::size_t n, Body&& body) {
  const std::size_t workers = std::min<std::size_t>(num_threads(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  auto run = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= n || failed.load()) return;
      try {
        body(i);
      } catch (...) {
        if (!failed.exchange(true)) failure = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(run);
  run();
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

/// Splits [0, n) into a fixed number of contiguous chunks, independent of the
/// thread count, so chunk-local reductions can be combined in a fixed order.
struct ChunkRange {
  std::size_t begin;
  std::size_t end;
};

inline std::vector<ChunkRange> fixed_chunks(std::size_t n, std::size_t max_chunks) {
  std::vector<ChunkRange> out;
  if (n == 0) return out;
  std::size_t chunks = std::min(n, std::max<std::size_t>(1, max_chunks));
  std::size_t base = n / chunks, extra = n % chunks, pos = 0;
  for (std::size_t c = 0; c < chunks; ++c) {
    std::size_t len = base + (c < extra ? 1 : 0);
    out.push_back({pos, pos + len});
    pos += len;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Random numbers

inline constexpr std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Counter-based generator: the n-th draw of stream s under seed k is a pure
/// function of (k, s, n). Substreams never overlap in practice and do not
/// depend on the order in which they are consumed.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  CounterRng(std::uint64_t seed, std::uint64_t stream = 0)
      : key_(splitmix64(seed ^ splitmix64(stream + 0x632be59bd9b4e019ULL))) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return splitmix64(key_ + 0x9e3779b97f4a7c15ULL * (++counter_)); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    // Lemire-style rejection keeps the draw unbiased.
    if (n == 0) return 0;
    std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      std::uint64_t r = (*this)();
      if (r >= threshold) return r % n;
    }
  }

  /// Standard normal via Box-Muller.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  /// Index drawn from a probability vector (entries may carry rounding).
  int categorical(std::span<const double> probs) {
    double u = uniform();
    double acc = 0.0;
    int last_positive = 0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      if (probs[i] > 0.0) last_positive = static_cast<int>(i);
      acc += probs[i];
      if (u < acc) return static_cast<int>(i);
    }
    return last_positive;
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

// ---------------------------------------------------------------------------
// Small numeric helpers

inline double l1_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s;
}

/// Checks that v is a probability vector within tol and renormalizes it in
/// place; larger deviations are hard errors.
inline void check_simplex(std::span<double> v, double tol, const std::string& what) {
  double sum = 0.0;
  for (double x : v) {
    if (!(x >= -kNegativeTol)) throw ValidationError(what + ": negative or NaN entry");
    sum += x;
  }
  if (std::abs(sum - 1.0) > tol)
    throw ValidationError(what + ": mass " + std::to_string(sum) + " is not 1");
  double clamped = 0.0;
  for (double& x : v) clamped += (x = std::max(0.0, x));
  for (double& x : v) x /= clamped;
}

}  // namespace hmfg
