#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "gwlab/laws.hpp"
#include "gwlab/rational.hpp"

namespace gwlab {

struct SeriesError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace pgf {

// Sum of shifted powers  S(s) = sum_j a_j (s + d_j)^{k_j}.
// The generating-function equations solved here all have the shape
//   f(x) = U(f(x)) + x V(f(x))
// with U, V of this form; coefficients of f are then uniquely determined by
// f(0), which must be the smallest fixed point of U on [0, 1].
template <class R>
struct PowerForm {
  struct Term {
    R coeff;
    R shift;
    std::int32_t power;
  };
  std::vector<Term> terms;

  void add(R coeff, R shift, std::int32_t power) {
    if (!(coeff == R(0))) terms.push_back({std::move(coeff), std::move(shift), power});
  }

  R eval(const R& s) const {
    R out(0);
    for (const auto& t : terms)
      out += t.coeff * pow_nonneg(s + t.shift, static_cast<unsigned>(t.power));
    return out;
  }

  R derivative(const R& s) const {
    R out(0);
    for (const auto& t : terms)
      if (t.power > 0)
        out += t.coeff * R(t.power) *
               pow_nonneg(s + t.shift, static_cast<unsigned>(t.power - 1));
    return out;
  }

  std::int32_t max_power() const {
    std::int32_t m = 0;
    for (const auto& t : terms) m = std::max(m, t.power);
    return m;
  }

  // Monomial coefficients of S(s) as a polynomial in s.
  std::vector<R> monomials() const {
    std::vector<R> c(static_cast<std::size_t>(max_power()) + 1, R(0));
    for (const auto& t : terms)
      for (std::int32_t j = 0; j <= t.power; ++j)
        c[static_cast<std::size_t>(j)] +=
            t.coeff *
            binomial<R>(static_cast<unsigned>(t.power), static_cast<unsigned>(j)) *
            pow_nonneg(t.shift, static_cast<unsigned>(t.power - j));
    while (c.size() > 1 && c.back() == R(0)) c.pop_back();
    return c;
  }
};

// Smallest fixed point of s = U(s) on [0, 1].
//
// Float mode: Newton from 0. For the convex offspring-generating maps used
// here the iteration increases monotonically to the smallest root.
inline double smallest_fixed_point(const PowerForm<double>& u) {
  double s = 0.0;
  for (int it = 0; it < 200; ++it) {
    double g = u.eval(s) - s;
    double gp = u.derivative(s) - 1.0;
    if (gp >= 0.0) throw SeriesError("fixed point: derivative reached 1 before the root");
    double step = -g / gp;
    s += step;
    if (std::abs(step) < 1e-17) break;
  }
  if (s < 0.0) s = 0.0;
  if (s > 1.0) throw SeriesError("fixed point: root escaped [0, 1]");
  return s;
}

// Exact mode: closed forms for polynomial degree <= 2 (after cancellation);
// degrees beyond that generally have irrational roots, which exact mode
// refuses rather than approximates.
inline Rational smallest_fixed_point(const PowerForm<Rational>& u) {
  auto c = u.monomials();  // U(s) = c0 + c1 s + c2 s^2 + ...
  while (c.size() > 1 && c.back() == 0) c.pop_back();
  if (c.size() <= 1) return c.empty() ? Rational(0) : c[0];
  if (c.size() == 2) {
    if (c[1] == 1) throw SeriesError("fixed point: degenerate linear equation");
    Rational root = c[0] / (1 - c[1]);
    if (root < 0 || root > 1) throw SeriesError("fixed point: linear root outside [0, 1]");
    return root;
  }
  if (c.size() == 3) {
    // c2 s^2 + (c1 - 1) s + c0 = 0, smallest root
    Rational a = c[2], b = c[1] - 1, cc = c[0];
    Rational disc = b * b - 4 * a * cc;
    Rational sq;
    if (!rational_sqrt(disc, sq))
      throw SeriesError(
          "fixed point: exact mode needs a rational root; use float arithmetic for this law");
    Rational r1 = (-b - sq) / (2 * a), r2 = (-b + sq) / (2 * a);
    Rational lo = std::min(r1, r2), hi = std::max(r1, r2);
    Rational root = lo >= 0 ? lo : hi;
    if (root < 0 || root > 1) throw SeriesError("fixed point: quadratic roots outside [0, 1]");
    return root;
  }
  throw SeriesError(
      "fixed point: exact mode supports polynomial degree <= 2; use float arithmetic");
}

// Solve f(x) = U(f(x)) + x V(f(x)) for the power-series coefficients
// f_0..f_{order-1}, given f_0. Coefficient m is pinned linearly by the lower
// ones:  f_m (1 - U'(f_0)) = [x^m] U(f_<m) + [x^{m-1}] V(f_<m).
//
// Power tables for each distinct shift are filled column by column; a column
// is first computed with f_m = 0 and then fixed up by the linear response
// k (f_0 + d)^{k-1} f_m once f_m is known.
template <class R>
std::vector<R> solve_series(const PowerForm<R>& u_form, const PowerForm<R>& v_form,
                            const R& f0, std::size_t order) {
  if (order == 0) return {};
  struct Table {
    R shift;
    std::int32_t max_pow;
    std::vector<std::vector<R>> p;  // p[k][m] = [x^m] (f + shift)^k
    std::vector<R> base_pow;        // (f0 + shift)^k
  };
  std::vector<Table> tables;
  auto table_for = [&](const R& shift, std::int32_t pow) -> std::size_t {
    for (std::size_t i = 0; i < tables.size(); ++i)
      if (tables[i].shift == shift) {
        tables[i].max_pow = std::max(tables[i].max_pow, pow);
        return i;
      }
    tables.push_back(Table{shift, pow, {}, {}});
    return tables.size() - 1;
  };
  struct Ref {
    std::size_t table;
    std::int32_t power;
    R coeff;
  };
  std::vector<Ref> u_refs, v_refs;
  for (const auto& t : u_form.terms) u_refs.push_back({table_for(t.shift, t.power), t.power, t.coeff});
  for (const auto& t : v_form.terms) v_refs.push_back({table_for(t.shift, t.power), t.power, t.coeff});

  R denom = R(1) - u_form.derivative(f0);
  if (!(denom > R(0)))
    throw SeriesError("series: 1 - U'(f0) is not positive; wrong fixed point?");

  std::vector<R> f(order, R(0));
  f[0] = f0;

  for (auto& tb : tables) {
    tb.p.assign(static_cast<std::size_t>(tb.max_pow) + 1, std::vector<R>(order, R(0)));
    tb.base_pow.resize(static_cast<std::size_t>(tb.max_pow) + 1);
    R g0 = f0 + tb.shift;
    tb.base_pow[0] = R(1);
    for (std::int32_t k = 1; k <= tb.max_pow; ++k) tb.base_pow[static_cast<std::size_t>(k)] = tb.base_pow[static_cast<std::size_t>(k - 1)] * g0;
    tb.p[0][0] = R(1);
    for (std::int32_t k = 1; k <= tb.max_pow; ++k) tb.p[static_cast<std::size_t>(k)][0] = tb.base_pow[static_cast<std::size_t>(k)];
  }

  for (std::size_t m = 1; m < order; ++m) {
    // column m of every power table, with f_m treated as 0
    for (auto& tb : tables) {
      R g0 = f0 + tb.shift;
      for (std::int32_t k = 2; k <= tb.max_pow; ++k) {
        R acc = tb.p[static_cast<std::size_t>(k - 1)][m] * g0;
        for (std::size_t i = 1; i < m; ++i)
          acc += tb.p[static_cast<std::size_t>(k - 1)][m - i] * f[i];
        tb.p[static_cast<std::size_t>(k)][m] = acc;
      }
    }
    R rhs(0);
    for (const auto& r : u_refs) {
      if (r.power == 0) continue;
      rhs += r.coeff * (r.power == 1 ? R(0) : tables[r.table].p[static_cast<std::size_t>(r.power)][m]);
    }
    for (const auto& r : v_refs) {
      const auto& col = tables[r.table].p[static_cast<std::size_t>(r.power)];
      rhs += r.coeff * (r.power == 0 ? (m == 1 ? R(1) : R(0)) : col[m - 1]);
    }
    f[m] = rhs / denom;
    for (auto& tb : tables)
      for (std::int32_t k = 1; k <= tb.max_pow; ++k)
        tb.p[static_cast<std::size_t>(k)][m] += R(k) * tb.base_pow[static_cast<std::size_t>(k - 1)] * f[m];
  }
  return f;
}

// Substitute the solved series back into f = U(f) + x V(f) and return the
// largest coefficient residual over [0, order); 0 in exact arithmetic.
template <class R>
R equation_residual(const PowerForm<R>& u_form, const PowerForm<R>& v_form,
                    const std::vector<R>& f) {
  std::size_t order = f.size();
  auto mul = [&](const std::vector<R>& a, const std::vector<R>& b) {
    std::vector<R> out(order, R(0));
    for (std::size_t i = 0; i < order; ++i) {
      if (a[i] == R(0)) continue;
      for (std::size_t j = 0; i + j < order; ++j) out[i + j] += a[i] * b[j];
    }
    return out;
  };
  auto power_of = [&](const R& shift, std::int32_t k) {
    std::vector<R> base = f;
    base[0] += shift;
    std::vector<R> acc(order, R(0));
    acc[0] = R(1);
    for (std::int32_t i = 0; i < k; ++i) acc = mul(acc, base);
    return acc;
  };
  std::vector<R> rhs(order, R(0));
  for (const auto& t : u_form.terms) {
    auto p = power_of(t.shift, t.power);
    for (std::size_t m = 0; m < order; ++m) rhs[m] += t.coeff * p[m];
  }
  for (const auto& t : v_form.terms) {
    auto p = power_of(t.shift, t.power);
    for (std::size_t m = 1; m < order; ++m) rhs[m] += t.coeff * p[m - 1];
  }
  R worst(0);
  for (std::size_t m = 0; m < order; ++m) worst = std::max(worst, abs_value(rhs[m] - f[m]));
  return worst;
}

template <class R>
void mark_forms(const OffspringLaw<R>& p, const MarkFunction<R>& q, PowerForm<R>& u,
                PowerForm<R>& v) {
  for (const auto& [k, w] : p.weights()) {
    u.add(w * (R(1) - q.q(k)), R(0), k);
    v.add(w * q.q(k), R(0), k);
  }
}

// The protected-count series tracks H(x) = E[x^A ; tree is not a leaf]:
//   H = sum_{k>=1} p(k) [ x H^k + (p(0) + H)^k - H^k ].
template <class R>
void protected_forms(const OffspringLaw<R>& p, PowerForm<R>& u, PowerForm<R>& v) {
  R p0 = p.pmf(0);
  for (const auto& [k, w] : p.weights()) {
    if (k == 0) continue;
    u.add(w, p0, k);
    u.add(-w, R(0), k);
    v.add(w, R(0), k);
  }
}

}  // namespace pgf

// Law of the number of marked vertices M of a marked GW tree, to order N.
template <class R>
SeriesDist<R> mark_count_series(const OffspringLaw<R>& p, const MarkFunction<R>& q,
                                std::size_t order, bool verify = false) {
  require_markable(p, q);
  pgf::PowerForm<R> u, v;
  pgf::mark_forms(p, q, u, v);
  R f0 = pgf::smallest_fixed_point(u);
  SeriesDist<R> out;
  out.probs = pgf::solve_series(u, v, f0, order);
  if (verify) {
    R res = pgf::equation_residual(u, v, out.probs);
    R allowed = arith<R>::exact ? R(0) : R(1e-10);
    if (res > allowed)
      throw SeriesError("mark_count_series: residual " + format_number(res));
  }
  out.tail = R(1) - out.sum();
  return out;
}

// Law of Card(tree) = mark count under q == 1.
template <class R>
SeriesDist<R> size_series(const OffspringLaw<R>& p, std::size_t order, bool verify = false) {
  return mark_count_series(p, MarkFunction<R>::constant(R(1)), order, verify);
}

// Law of the number of protected vertices A, to order N.
template <class R>
SeriesDist<R> protected_count_series(const OffspringLaw<R>& p, std::size_t order,
                                     bool verify = false) {
  pgf::PowerForm<R> u, v;
  pgf::protected_forms(p, u, v);
  R h0 = pgf::smallest_fixed_point(u);
  auto h = pgf::solve_series(u, v, h0, order);
  if (verify) {
    R res = pgf::equation_residual(u, v, h);
    R allowed = arith<R>::exact ? R(0) : R(1e-10);
    if (res > allowed)
      throw SeriesError("protected_count_series: residual " + format_number(res));
  }
  SeriesDist<R> out;
  out.probs = std::move(h);
  if (!out.probs.empty()) out.probs[0] += p.pmf(0);
  out.tail = R(1) - out.sum();
  return out;
}

// gamma = P(M > 0) = 1 - P(M = 0); P(M = 0) is the smallest fixed point of
// the markless branch of the generating map.
template <class R>
R mark_probability(const OffspringLaw<R>& p, const MarkFunction<R>& q) {
  require_markable(p, q);
  pgf::PowerForm<R> u, v;
  pgf::mark_forms(p, q, u, v);
  return R(1) - pgf::smallest_fixed_point(u);
}

// Window-ratio table r(n) = P(X in [n+1, n+1+d)) / P(X in [n, n+d)).
template <class R>
struct RatioEntry {
  std::int64_t n;
  R value;
  bool skipped;  // zero-mass denominator window
};

template <class R>
std::vector<RatioEntry<R>> ratio_table(const SeriesDist<R>& s, int d, std::int64_t n_max) {
  if (d <= 0) throw SeriesError("ratio_table: window width must be positive");
  if (n_max + 1 + d > static_cast<std::int64_t>(s.probs.size()))
    throw SeriesError("ratio_table: window extends past the series truncation");
  std::vector<RatioEntry<R>> out;
  out.reserve(static_cast<std::size_t>(n_max + 1));
  for (std::int64_t n = 0; n <= n_max; ++n) {
    R den = s.window(n, n + d);
    if (!(den > arith<R>::positive_threshold())) {
      out.push_back({n, R(0), true});
      continue;
    }
    out.push_back({n, s.window(n + 1, n + 1 + d) / den, false});
  }
  return out;
}

}  // namespace gwlab
