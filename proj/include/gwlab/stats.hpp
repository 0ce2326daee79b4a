#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace gwlab {

struct StatsError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

// Regularized incomplete gamma P(a, x) by series, Q(a, x) by Lentz continued
// fraction; the usual split at x = a + 1.
inline double gamma_p_series(double a, double x) {
  double ap = a, sum = 1.0 / a, del = sum;
  for (int i = 0; i < 10000; ++i) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::fabs(del) < std::fabs(sum) * 1e-16) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

inline double gamma_q_continued_fraction(double a, double x) {
  const double tiny = 1e-300;
  double b = x + 1.0 - a, c = 1.0 / tiny, d = 1.0 / b, h = d;
  for (int i = 1; i < 10000; ++i) {
    double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < 1e-16) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace detail

inline double regularized_gamma_q(double a, double x) {
  if (x < 0.0 || a <= 0.0) throw StatsError("regularized_gamma_q: bad arguments");
  if (x == 0.0) return 1.0;
  if (x < a + 1.0) return 1.0 - detail::gamma_p_series(a, x);
  return detail::gamma_q_continued_fraction(a, x);
}

// Upper-tail p-value of the chi-square distribution.
inline double chi_square_pvalue(double stat, int df) {
  if (df <= 0) throw StatsError("chi_square_pvalue: df must be positive");
  return regularized_gamma_q(df / 2.0, stat / 2.0);
}

// Acklam's rational approximation to the standard normal quantile (abs error
// ~1e-9), good enough for confidence-level z-scores.
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw StatsError("normal_quantile: p outside (0,1)");
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425, phigh = 1 - plow;
  double q, r;
  if (p < plow) {
    q = std::sqrt(-2 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }
  if (p > phigh) {
    q = std::sqrt(-2 * std::log(1 - p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }
  q = p - 0.5;
  r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
}

struct WilsonInterval {
  double low = 0.0;
  double high = 1.0;
  double center = 0.0;
  double halfwidth = 0.0;
};

inline WilsonInterval wilson_interval(std::uint64_t successes, std::uint64_t n,
                                      double confidence = 0.99) {
  if (n == 0) throw StatsError("wilson_interval: n = 0");
  double z = normal_quantile(0.5 + confidence / 2.0);
  double phat = static_cast<double>(successes) / static_cast<double>(n);
  double z2 = z * z, nn = static_cast<double>(n);
  double denom = 1.0 + z2 / nn;
  double center = (phat + z2 / (2 * nn)) / denom;
  double half = z * std::sqrt(phat * (1 - phat) / nn + z2 / (4 * nn * nn)) / denom;
  return {std::max(0.0, center - half), std::min(1.0, center + half), center, half};
}

// Goodness-of-fit chi-square against expected cell probabilities. Cells with
// expected count below min_expected are pooled into the trailing cell (the
// caller's "everything else" bucket), preserving input order.
struct ChiSquareResult {
  double statistic = 0.0;
  int df = 0;
  double p_value = 1.0;
  std::size_t cells_used = 0;
  std::size_t cells_pooled = 0;
};

inline ChiSquareResult chi_square_gof(const std::vector<double>& expected_probs,
                                      const std::vector<std::uint64_t>& observed,
                                      double min_expected = 5.0) {
  if (expected_probs.size() != observed.size() || observed.empty())
    throw StatsError("chi_square_gof: size mismatch");
  std::uint64_t n = 0;
  for (auto c : observed) n += c;
  if (n == 0) throw StatsError("chi_square_gof: no observations");
  double pooled_exp = 0.0;
  std::uint64_t pooled_obs = 0;
  std::vector<std::pair<double, std::uint64_t>> cells;
  for (std::size_t i = 0; i < expected_probs.size(); ++i) {
    double e = expected_probs[i] * static_cast<double>(n);
    if (e < min_expected || i + 1 == expected_probs.size()) {
      pooled_exp += e;
      pooled_obs += observed[i];
    } else {
      cells.emplace_back(e, observed[i]);
    }
  }
  if (pooled_exp < min_expected && !cells.empty()) {
    // fold an undersized pool into the last kept cell
    cells.back().first += pooled_exp;
    cells.back().second += pooled_obs;
  } else {
    cells.emplace_back(pooled_exp, pooled_obs);
  }
  if (cells.size() < 2)
    throw StatsError("chi_square_gof: insufficient effective samples after pooling");
  ChiSquareResult out;
  out.cells_used = cells.size();
  out.cells_pooled = expected_probs.size() - cells.size() + 1;
  for (const auto& [e, o] : cells) {
    double diff = static_cast<double>(o) - e;
    out.statistic += diff * diff / e;
  }
  out.df = static_cast<int>(cells.size()) - 1;
  out.p_value = chi_square_pvalue(out.statistic, out.df);
  return out;
}

// Two-sample homogeneity chi-square over a common cell list; cells whose
// combined expectation is small are pooled into the trailing cell.
inline ChiSquareResult chi_square_two_sample(const std::vector<std::uint64_t>& a,
                                             const std::vector<std::uint64_t>& b,
                                             double min_expected = 5.0) {
  if (a.size() != b.size() || a.empty()) throw StatsError("chi_square_two_sample: size mismatch");
  double na = 0, nb = 0;
  for (auto c : a) na += static_cast<double>(c);
  for (auto c : b) nb += static_cast<double>(c);
  if (na == 0 || nb == 0) throw StatsError("chi_square_two_sample: empty sample");
  std::vector<std::pair<double, double>> cells;  // (obs_a, obs_b) after pooling
  double pa = 0, pb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double tot = static_cast<double>(a[i] + b[i]);
    double ea = tot * na / (na + nb), eb = tot * nb / (na + nb);
    if (ea < min_expected || eb < min_expected || i + 1 == a.size()) {
      pa += static_cast<double>(a[i]);
      pb += static_cast<double>(b[i]);
    } else {
      cells.emplace_back(static_cast<double>(a[i]), static_cast<double>(b[i]));
    }
  }
  cells.emplace_back(pa, pb);
  ChiSquareResult out;
  out.cells_used = cells.size();
  if (cells.size() < 2) throw StatsError("chi_square_two_sample: nothing left after pooling");
  for (const auto& [oa, ob] : cells) {
    double tot = oa + ob;
    if (tot == 0) continue;
    double ea = tot * na / (na + nb), eb = tot * nb / (na + nb);
    out.statistic += (oa - ea) * (oa - ea) / ea + (ob - eb) * (ob - eb) / eb;
  }
  out.df = static_cast<int>(cells.size()) - 1;
  out.p_value = chi_square_pvalue(out.statistic, out.df);
  return out;
}

// Total variation distance between two finite distributions over a common
// outcome space (union of supports).
template <class Key>
double tv_distance(const std::map<Key, double>& d1, const std::map<Key, double>& d2) {
  double sum = 0.0;
  auto it1 = d1.begin();
  auto it2 = d2.begin();
  while (it1 != d1.end() || it2 != d2.end()) {
    if (it2 == d2.end() || (it1 != d1.end() && it1->first < it2->first)) {
      sum += std::fabs(it1->second);
      ++it1;
    } else if (it1 == d1.end() || it2->first < it1->first) {
      sum += std::fabs(it2->second);
      ++it2;
    } else {
      sum += std::fabs(it1->second - it2->second);
      ++it1;
      ++it2;
    }
  }
  return sum / 2.0;
}

inline double least_squares_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size() || xs.size() < 2) throw StatsError("least_squares_slope: bad input");
  double n = static_cast<double>(xs.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
  }
  double denom = n * sxx - sx * sx;
  if (denom == 0) throw StatsError("least_squares_slope: degenerate abscissae");
  return (n * sxy - sx * sy) / denom;
}

}  // namespace gwlab
