#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "slt/error.hpp"
#include "slt/rng.hpp"

namespace slt {

enum class SubsetStrategy { trivial, small_subset, greedy, restart, meet_in_middle, failed };

struct SubsetSumOptions {
  int restarts = 64;
  /// Exact fallback is only attempted for pools up to this size.
  std::size_t mitm_max_pool = 24;
  bool use_mitm = true;
  std::uint64_t seed = 0;
  /// Exhaustive search over subsets of at most this many elements, run first
  /// so that the sparsest solution is preferred; 0 disables it.
  int small_max_size = 6;
  /// Cap on the number of half-subsets enumerated per size.
  std::size_t small_budget = 200000;
};

struct SubsetSumResult {
  std::vector<std::size_t> subset;  // sorted pool indices
  double achieved = 0.0;
  double residual = 0.0;  // |target - achieved|
  bool success = false;
  SubsetStrategy strategy = SubsetStrategy::failed;
};

namespace detail {

struct DescentState {
  std::vector<char> in;
  double sum = 0.0;
};

// Toggle single elements, then swap pairs, while |target - sum| shrinks.
// Stops as soon as the residual is within tolerance.
inline void residual_descent(std::span<const double> pool, double target, double tol,
                             DescentState& st) {
  const std::size_t n = pool.size();
  for (;;) {
    const double r = target - st.sum;
    if (std::abs(r) <= tol) return;
    double best = std::abs(r);
    std::size_t best_k = n;
    for (std::size_t k = 0; k < n; ++k) {
      const double cand = std::abs(st.in[k] ? r + pool[k] : r - pool[k]);
      if (cand < best) {
        best = cand;
        best_k = k;
      }
    }
    if (best_k < n) {
      st.sum += st.in[best_k] ? -pool[best_k] : pool[best_k];
      st.in[best_k] = !st.in[best_k];
      continue;
    }
    std::size_t ba = n, bb = n;
    for (std::size_t a = 0; a < n; ++a) {
      if (!st.in[a]) continue;
      for (std::size_t b = 0; b < n; ++b) {
        if (st.in[b]) continue;
        const double cand = std::abs(r + pool[a] - pool[b]);
        if (cand < best) {
          best = cand;
          ba = a;
          bb = b;
        }
      }
    }
    if (ba == n) return;
    st.sum += pool[bb] - pool[ba];
    st.in[ba] = 0;
    st.in[bb] = 1;
  }
}

inline SubsetSumResult make_result(std::span<const double> pool, const std::vector<char>& in,
                                   double target, double tol, SubsetStrategy how) {
  SubsetSumResult res;
  for (std::size_t k = 0; k < pool.size(); ++k)
    if (in[k]) {
      res.subset.push_back(k);
      res.achieved += pool[k];
    }
  res.residual = std::abs(target - res.achieved);
  res.success = res.residual <= tol;
  res.strategy = res.success ? how : SubsetStrategy::failed;
  return res;
}

inline double binomial(std::size_t n, std::size_t k) {
  double c = 1.0;
  for (std::size_t i = 0; i < k; ++i) c = c * static_cast<double>(n - i) / static_cast<double>(i + 1);
  return c;
}

// Sums of all k-subsets, indices packed 16 bits each.
inline std::vector<std::pair<double, std::uint64_t>> k_subset_sums(std::span<const double> pool, std::size_t k) {
  std::vector<std::pair<double, std::uint64_t>> out;
  std::vector<std::size_t> idx(k);
  auto rec = [&](auto&& self, std::size_t depth, std::size_t from, double sum, std::uint64_t code) -> void {
    if (depth == k) {
      out.emplace_back(sum, code);
      return;
    }
    for (std::size_t i = from; i + (k - depth) <= pool.size(); ++i)
      self(self, depth + 1, i + 1, sum + pool[i], code | (static_cast<std::uint64_t>(i + 1) << (16 * depth)));
  };
  rec(rec, 0, 0, 0.0, 0);
  return out;
}

inline std::vector<char> unpack_subset(std::uint64_t a, std::uint64_t b, std::size_t n) {
  std::vector<char> in(n, 0);
  for (std::uint64_t c : {a, b})
    for (; c; c >>= 16)
      if (c & 0xFFFF) in[(c & 0xFFFF) - 1] = 1;
  return in;
}

inline bool disjoint(std::uint64_t a, std::uint64_t b) {
  for (std::uint64_t x = a; x; x >>= 16)
    for (std::uint64_t y = b; y; y >>= 16)
      if ((x & 0xFFFF) == (y & 0xFFFF)) return false;
  return true;
}

// Smallest subset (size <= max_size) within tol of target, by pairing
// half-size subsets. Sizes whose enumeration exceeds the budget are skipped.
inline std::optional<std::vector<char>> smallest_subset(std::span<const double> pool, double target, double tol,
                                                        int max_size, std::size_t budget) {
  const std::size_t n = pool.size();
  if (n >= 0xFFFF) return std::nullopt;
  for (int k = 1; k <= std::min<int>(max_size, static_cast<int>(n)); ++k) {
    const auto b = static_cast<std::size_t>(k) / 2, a = static_cast<std::size_t>(k) - b;
    if (binomial(n, a) > static_cast<double>(budget)) break;
    auto left = k_subset_sums(pool, a);
    std::sort(left.begin(), left.end());
    const auto right = b ? k_subset_sums(pool, b) : std::vector<std::pair<double, std::uint64_t>>{{0.0, 0}};
    for (const auto& [s, code] : right) {
      const double want = target - s;
      auto it = std::lower_bound(left.begin(), left.end(), std::make_pair(want - tol, std::uint64_t{0}));
      for (; it != left.end() && it->first <= want + tol; ++it)
        if (disjoint(it->second, code)) return unpack_subset(it->second, code, n);
    }
  }
  return std::nullopt;
}

// Exact closest subset sum by meet-in-the-middle (pool size <= ~40).
inline std::vector<char> closest_subset_mitm(std::span<const double> pool, double target) {
  const std::size_t n = pool.size();
  const std::size_t h = n / 2;
  auto sums = [&](std::size_t off, std::size_t len) {
    std::vector<std::pair<double, std::uint32_t>> out(std::size_t{1} << len);
    out[0] = {0.0, 0u};
    for (std::size_t k = 0; k < len; ++k) {
      const std::size_t half = std::size_t{1} << k;
      for (std::size_t m = 0; m < half; ++m)
        out[half + m] = {out[m].first + pool[off + k], out[m].second | (1u << k)};
    }
    return out;
  };
  const auto left = sums(0, h);
  auto right = sums(h, n - h);
  std::sort(right.begin(), right.end());
  double best = std::numeric_limits<double>::infinity();
  std::uint32_t bl = 0, br = 0;
  for (const auto& [s, m] : left) {
    const double want = target - s;
    auto it = std::lower_bound(right.begin(), right.end(), std::make_pair(want, 0u),
                               [](const auto& a, const auto& b) { return a.first < b.first; });
    for (auto cand : {it, it == right.begin() ? it : std::prev(it)}) {
      if (cand == right.end()) continue;
      const double err = std::abs(want - cand->first);
      if (err < best) {
        best = err;
        bl = m;
        br = cand->second;
      }
    }
  }
  std::vector<char> in(n, 0);
  for (std::size_t k = 0; k < h; ++k) in[k] = (bl >> k) & 1u;
  for (std::size_t k = h; k < n; ++k) in[k] = (br >> (k - h)) & 1u;
  return in;
}

}  // namespace detail

/// Find S with |target - sum_{i in S} pool[i]| <= tol.
///
/// Smallest-subset search first, then greedy residual descent from the empty set, then
/// randomized restarts, then an exact meet-in-the-middle search for small
/// pools. On failure the best subset seen is returned with success = false.
inline SubsetSumResult solve_subset_sum(std::span<const double> pool, double target, double tol,
                                        const SubsetSumOptions& opt = {}) {
  detail::require_config(tol >= 0.0, "tolerance must be non-negative");
  const std::size_t n = pool.size();
  if (std::abs(target) <= tol) {
    SubsetSumResult r;
    r.residual = std::abs(target);
    r.success = true;
    r.strategy = SubsetStrategy::trivial;
    return r;
  }
  detail::require_config(n > 0, "subset-sum pool must be nonempty");

  if (opt.small_max_size > 0)
    if (auto in = detail::smallest_subset(pool, target, tol, opt.small_max_size, opt.small_budget)) {
      auto r = detail::make_result(pool, *in, target, tol, SubsetStrategy::small_subset);
      if (r.success) return r;
    }

  detail::DescentState st{std::vector<char>(n, 0), 0.0};
  detail::residual_descent(pool, target, tol, st);
  auto best = detail::make_result(pool, st.in, target, tol, SubsetStrategy::greedy);
  if (best.success) return best;

  for (int r = 0; r < opt.restarts; ++r) {
    auto rng = make_rng(opt.seed, {0x5B5E7, static_cast<std::uint64_t>(r)});
    std::bernoulli_distribution coin(0.5);
    detail::DescentState rs{std::vector<char>(n, 0), 0.0};
    for (std::size_t k = 0; k < n; ++k)
      if (coin(rng)) {
        rs.in[k] = 1;
        rs.sum += pool[k];
      }
    detail::residual_descent(pool, target, tol, rs);
    auto cand = detail::make_result(pool, rs.in, target, tol, SubsetStrategy::restart);
    if (cand.success) return cand;
    if (cand.residual < best.residual) best = std::move(cand);
  }

  if (opt.use_mitm && n <= opt.mitm_max_pool) {
    auto cand = detail::make_result(pool, detail::closest_subset_mitm(pool, target), target, tol,
                                    SubsetStrategy::meet_in_middle);
    if (cand.residual < best.residual) best = std::move(cand);
  }
  return best;
}

}  // namespace slt
