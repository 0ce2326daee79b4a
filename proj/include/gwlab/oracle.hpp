#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "gwlab/enumerate.hpp"
#include "gwlab/laws.hpp"
#include "gwlab/series.hpp"
#include "gwlab/tree.hpp"

namespace gwlab {

// ---------------------------------------------------------------------------
// Bivariate series restricted by tree size.
//
// Grading by Card makes the generating-function fixed point terminate exactly:
// the coefficient of y^c only ever depends on coefficients of smaller c, so
// n_max iterations from zero reach stationarity, which is asserted. These
// tables are the quarantine gate for the univariate series recursions: they
// must agree exactly with brute-force enumeration before any series-backed
// experiment runs.
// ---------------------------------------------------------------------------

namespace detail {

// table[c][m], m <= c; multiply two such tables truncated at cmax.
template <class R>
using SizeGraded = std::vector<std::vector<R>>;

template <class R>
SizeGraded<R> graded_zero(std::size_t cmax) {
  SizeGraded<R> t(cmax + 1);
  for (std::size_t c = 0; c <= cmax; ++c) t[c].assign(c + 1, R(0));
  return t;
}

template <class R>
SizeGraded<R> graded_mul(const SizeGraded<R>& a, const SizeGraded<R>& b, std::size_t cmax) {
  auto out = graded_zero<R>(cmax);
  for (std::size_t ca = 0; ca <= cmax; ++ca)
    for (std::size_t cb = 0; ca + cb <= cmax; ++cb)
      for (std::size_t ma = 0; ma < a[ca].size(); ++ma) {
        if (a[ca][ma] == R(0)) continue;
        for (std::size_t mb = 0; mb < b[cb].size(); ++mb) {
          if (b[cb][mb] == R(0)) continue;
          out[ca + cb][ma + mb] += a[ca][ma] * b[cb][mb];
        }
      }
  return out;
}

}  // namespace detail

// P(M = m, Card = c) for c <= cmax, from the size-graded fixed point of
//   F = sum_k p(k) (q(k) x + 1 - q(k)) y F^k.
template <class R>
detail::SizeGraded<R> mark_count_by_size(const OffspringLaw<R>& p, const MarkFunction<R>& q,
                                         std::size_t cmax) {
  auto cur = detail::graded_zero<R>(cmax);
  for (std::size_t it = 0; it <= cmax + 1; ++it) {
    auto next = detail::graded_zero<R>(cmax);
    for (const auto& [k, w] : p.weights()) {
      auto pw = detail::graded_zero<R>(cmax);
      pw[0][0] = R(1);
      for (std::int32_t j = 0; j < k; ++j) pw = detail::graded_mul(pw, cur, cmax);
      R qk = q.q(k);
      for (std::size_t c = 0; c + 1 <= cmax; ++c)
        for (std::size_t m = 0; m < pw[c].size(); ++m) {
          if (pw[c][m] == R(0)) continue;
          next[c + 1][m] += w * (R(1) - qk) * pw[c][m];
          next[c + 1][m + 1] += w * qk * pw[c][m];
        }
    }
    if (it == cmax + 1 && next != cur)
      throw SeriesError("mark_count_by_size: fixed point not stationary");
    cur = std::move(next);
  }
  return cur;
}

// P(A = a, Card = c) for c <= cmax via H = sum_{k>=1} p(k) y [x H^k +
// (p(0) y + H)^k - H^k] and F = p(0) y + H.
template <class R>
detail::SizeGraded<R> protected_count_by_size(const OffspringLaw<R>& p, std::size_t cmax) {
  R p0 = p.pmf(0);
  auto cur = detail::graded_zero<R>(cmax);
  auto leaf = detail::graded_zero<R>(cmax);
  if (cmax >= 1) leaf[1][0] = p0;
  for (std::size_t it = 0; it <= cmax + 1; ++it) {
    auto next = detail::graded_zero<R>(cmax);
    for (const auto& [k, w] : p.weights()) {
      if (k == 0) continue;
      auto hk = detail::graded_zero<R>(cmax);
      auto gk = detail::graded_zero<R>(cmax);  // (leaf + H)^k
      hk[0][0] = R(1);
      gk[0][0] = R(1);
      auto sum = cur;
      for (std::size_t c = 0; c <= cmax && c < leaf.size(); ++c)
        for (std::size_t m = 0; m < leaf[c].size(); ++m) sum[c][m] += leaf[c][m];
      for (std::int32_t j = 0; j < k; ++j) {
        hk = detail::graded_mul(hk, cur, cmax);
        gk = detail::graded_mul(gk, sum, cmax);
      }
      for (std::size_t c = 0; c + 1 <= cmax; ++c) {
        for (std::size_t m = 0; m < hk[c].size(); ++m) {
          if (hk[c][m] != R(0)) {
            if (m + 1 < next[c + 1].size()) next[c + 1][m + 1] += w * hk[c][m];
            next[c + 1][m] -= w * hk[c][m];
          }
        }
        for (std::size_t m = 0; m < gk[c].size(); ++m)
          if (gk[c][m] != R(0)) next[c + 1][m] += w * gk[c][m];
      }
    }
    if (it == cmax + 1 && next != cur)
      throw SeriesError("protected_count_by_size: fixed point not stationary");
    cur = std::move(next);
  }
  for (std::size_t c = 0; c < cur.size() && c < leaf.size(); ++c)
    for (std::size_t m = 0; m < leaf[c].size(); ++m) cur[c][m] += leaf[c][m];
  return cur;
}

// ---------------------------------------------------------------------------
// Validation gates
// ---------------------------------------------------------------------------

struct GateReport {
  std::string name;
  bool pass = false;
  std::string detail;
};

namespace detail {

template <class R>
bool tables_agree(const SizeGraded<R>& a, const SizeGraded<R>& b, std::string& why) {
  R tol = arith<R>::exact ? R(0) : R(1e-12);
  for (std::size_t c = 0; c < std::min(a.size(), b.size()); ++c)
    for (std::size_t m = 0; m < std::min(a[c].size(), b[c].size()); ++m)
      if (abs_value(a[c][m] - b[c][m]) > tol) {
        why = "mismatch at Card=" + std::to_string(c) + ", count=" + std::to_string(m) +
              ": series " + format_number(a[c][m]) + " vs enumeration " +
              format_number(b[c][m]);
        return false;
      }
  return true;
}

}  // namespace detail

// Gate: the size-graded mark-count series must match enumeration exactly on
// every tree of Card <= n_max, and the univariate series must sandwich the
// graded partial sums within the enumerated tail mass.
template <class R>
GateReport mark_series_gate(const OffspringLaw<R>& p, const MarkFunction<R>& q,
                            std::size_t n_max, std::size_t uni_order = 32) {
  GateReport g{"mark-series vs enumeration (Card <= " + std::to_string(n_max) + ")", false, ""};
  auto graded = mark_count_by_size(p, q, n_max);
  auto enumerated = enumerated_mark_table(p, q, n_max);
  if (!detail::tables_agree(graded, enumerated, g.detail)) return g;

  auto uni = mark_count_series(p, q, uni_order, /*verify=*/true);
  R enum_mass(0);
  for (const auto& row : enumerated)
    for (const auto& x : row) enum_mass += x;
  R size_tail = R(1) - enum_mass;  // P(Card > n_max), exact from enumeration
  for (std::size_t m = 0; m < uni.probs.size(); ++m) {
    R partial(0);
    for (std::size_t c = 0; c < enumerated.size(); ++c)
      if (m < enumerated[c].size()) partial += enumerated[c][m];
    R tol = arith<R>::exact ? R(0) : R(1e-12);
    if (uni.probs[m] + tol < partial || uni.probs[m] > partial + size_tail + tol) {
      g.detail = "univariate coefficient " + std::to_string(m) + " = " +
                 format_number(uni.probs[m]) + " outside enumeration sandwich [" +
                 format_number(partial) + ", " + format_number(partial + size_tail) + "]";
      return g;
    }
  }
  g.pass = true;
  g.detail = "exact agreement on " + std::to_string(enumerated.size()) + " size classes";
  return g;
}

template <class R>
GateReport protected_series_gate(const OffspringLaw<R>& p, std::size_t n_max,
                                 std::size_t uni_order = 32) {
  GateReport g{"protected-series vs enumeration (Card <= " + std::to_string(n_max) + ")", false,
               ""};
  auto graded = protected_count_by_size(p, n_max);
  auto enumerated = enumerated_protected_table(p, n_max);
  if (!detail::tables_agree(graded, enumerated, g.detail)) return g;

  auto uni = protected_count_series(p, uni_order, /*verify=*/true);
  R enum_mass(0);
  for (const auto& row : enumerated)
    for (const auto& x : row) enum_mass += x;
  R size_tail = R(1) - enum_mass;
  for (std::size_t a = 0; a < uni.probs.size(); ++a) {
    R partial(0);
    for (std::size_t c = 0; c < enumerated.size(); ++c)
      if (a < enumerated[c].size()) partial += enumerated[c][a];
    R tol = arith<R>::exact ? R(0) : R(1e-12);
    if (uni.probs[a] + tol < partial || uni.probs[a] > partial + size_tail + tol) {
      g.detail = "univariate coefficient " + std::to_string(a) + " outside enumeration sandwich";
      return g;
    }
  }
  g.pass = true;
  g.detail = "exact agreement on " + std::to_string(enumerated.size()) + " size classes";
  return g;
}

// Gate for the protected-node reduction: the mark-count series of the reduced
// law under the protected mark function must equal the protected-count series
// of the original law conditioned on a non-leaf root.
template <class R>
GateReport protected_identity_gate(const OffspringLaw<R>& p, std::size_t order = 64) {
  GateReport g{"protected-count vs reduced-law mark-count series", false, ""};
  auto core = reduced_law(p);
  auto q = protected_mark_function(p);
  auto lhs = mark_count_series(core, q, order, /*verify=*/true);
  auto rhs = protected_count_series(p, order, /*verify=*/true);
  R p0 = p.pmf(0);
  R tol = arith<R>::exact ? R(0) : R(1e-10);
  for (std::size_t n = 0; n < order; ++n) {
    R conditioned = (rhs.probs[n] - (n == 0 ? p0 : R(0))) / (R(1) - p0);
    if (abs_value(lhs.probs[n] - conditioned) > tol) {
      g.detail = "mismatch at n = " + std::to_string(n) + ": " + format_number(lhs.probs[n]) +
                 " vs " + format_number(conditioned);
      return g;
    }
  }
  g.pass = true;
  g.detail = "coefficients agree to order " + std::to_string(order);
  return g;
}

// ---------------------------------------------------------------------------
// Ball probabilities
// ---------------------------------------------------------------------------

// P(size-biased tree in T(t, x)) = P(tree = t) / (mu^{|x|} p(0)).
template <class R>
R kesten_ball_probability(const OffspringLaw<R>& p, const BallEvent& e) {
  R pt = tree_probability(p, e.base);
  R mu_pow = pow_nonneg(p.mean(), static_cast<unsigned>(e.base.address_of(e.leaf_index).size()));
  return pt / (mu_pow * p.pmf(0));
}

template <class R>
struct ConditionedBallResult {
  R joint;         // P(tree in T(t,x), M in window)
  R window_mass;   // P(M in window)
  R conditional;   // joint / window_mass
  R tail_bound;    // series-truncation slack affecting the window sums
};

// P(tree in T(t,x) | M in [n, n+n0)) from the ball decomposition: the mark
// count of a grafted tree splits as an independent copy on the graft plus
// D(t,x) = M(t) - 1{x marked} on the finite base.
template <class R>
ConditionedBallResult<R> conditioned_ball_probability(const OffspringLaw<R>& p,
                                                      const MarkFunction<R>& q,
                                                      const BallEvent& e, std::int64_t n,
                                                      std::int64_t n0,
                                                      const SeriesDist<R>& mseries) {
  if (n0 <= 0) throw SeriesError("conditioned ball: empty window");
  ConditionedBallResult<R> out{R(0), R(0), R(0), R(0)};
  auto dlaw = mark_count_polynomial(e.base, q, static_cast<std::ptrdiff_t>(e.leaf_index));
  R ball = tree_probability(p, e.base) / p.pmf(0);
  if (n + n0 > static_cast<std::int64_t>(mseries.probs.size())) out.tail_bound = mseries.tail;
  R acc(0);
  for (std::size_t d = 0; d < dlaw.size(); ++d)
    acc += dlaw[d] * mseries.window(n - static_cast<std::int64_t>(d),
                                    n + n0 - static_cast<std::int64_t>(d));
  out.joint = ball * acc;
  out.window_mass = mseries.window(n, n + n0);
  if (!(out.window_mass > out.tail_bound))
    throw SeriesError("conditioned ball: window mass below the tail bound at n = " +
                      std::to_string(n));
  out.conditional = out.joint / out.window_mass;
  return out;
}

// P(tree in T(t,x) | A in [n, n+n0)) via the protected-count additivity
// A(t graft t') = A(t) + A(t') + D(t,x) for non-trivial grafts; the trivial
// graft contributes the base tree itself.
template <class R>
ConditionedBallResult<R> conditioned_protected_ball_probability(const OffspringLaw<R>& p,
                                                                const BallEvent& e,
                                                                std::int64_t n, std::int64_t n0,
                                                                const SeriesDist<R>& aseries) {
  if (n0 <= 0) throw SeriesError("conditioned ball: empty window");
  ConditionedBallResult<R> out{R(0), R(0), R(0), R(0)};
  R p0 = p.pmf(0);
  std::int64_t base_a = static_cast<std::int64_t>(protected_count(e.base));
  std::int64_t shift = base_a + protected_graft_increment_at(e.base, e.leaf_index);
  if (n + n0 > static_cast<std::int64_t>(aseries.probs.size())) out.tail_bound = aseries.tail;
  // P(A(graft) in window, graft non-trivial): subtract the leaf atom at 0
  R graft_mass = aseries.window(n - shift, n + n0 - shift);
  if (n - shift <= 0 && n + n0 - shift > 0) graft_mass -= p0;
  R base_atom = (base_a >= n && base_a < n + n0) ? p0 : R(0);
  out.joint = tree_probability(p, e.base) / p0 * (graft_mass + base_atom);
  out.window_mass = aseries.window(n, n + n0);
  if (!(out.window_mass > out.tail_bound))
    throw SeriesError("conditioned ball: window mass below the tail bound at n = " +
                      std::to_string(n));
  out.conditional = out.joint / out.window_mass;
  return out;
}

// Ratio table for the protected count, with the support-positivity note
// checked over the truncation.
template <class R>
struct ProtectedRatios {
  std::vector<RatioEntry<R>> ratios;
  bool support_positive = true;
  int d = 1;
};

template <class R>
ProtectedRatios<R> protected_ratio_check(const OffspringLaw<R>& p, std::int64_t n_max) {
  p.require_critical("protected_ratio_check");
  auto s = protected_count_series(p, static_cast<std::size_t>(n_max) + 3);
  ProtectedRatios<R> out;
  for (std::int64_t n = 0; n <= n_max + 1; ++n)
    if (!(s.probs[static_cast<std::size_t>(n)] > arith<R>::positive_threshold())) {
      out.support_positive = false;
      break;
    }
  out.d = span_minus_one(s);
  out.ratios = ratio_table(s, 1, n_max);
  return out;
}

}  // namespace gwlab
