#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "gwlab/rational.hpp"

namespace gwlab {

struct LawError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Criticality { subcritical, critical, supercritical };

inline const char* to_string(Criticality c) {
  switch (c) {
    case Criticality::subcritical: return "sub-critical";
    case Criticality::critical: return "critical";
    default: return "super-critical";
  }
}

// Plain finite distribution on non-negative integers (no structural
// assumptions); used for size-biased and graft-count laws and as sampler
// input.
template <class R>
struct DiscreteLaw {
  std::vector<std::pair<std::int32_t, R>> weights;  // sorted by value, entries > 0

  R pmf(std::int32_t k) const {
    for (const auto& [v, w] : weights)
      if (v == k) return w;
    return R(0);
  }
  R total() const {
    R s(0);
    for (const auto& [v, w] : weights) s += w;
    return s;
  }
  R mean() const {
    R s(0);
    for (const auto& [v, w] : weights) s += R(v) * w;
    return s;
  }
  std::int32_t max_value() const { return weights.empty() ? 0 : weights.back().first; }
};

// Offspring distribution p on N with the standing assumption
// p(0) > 0, p(0) + p(1) < 1, finite mean. Finite support (infinite-support
// laws enter via truncate_offspring_law below).
template <class R>
class OffspringLaw {
 public:
  // Validation reports each violated clause by name.
  static OffspringLaw validate(const std::map<std::int32_t, R>& pmf) {
    DiscreteLaw<R> d;
    R sum(0);
    for (const auto& [k, w] : pmf) {
      if (k < 0) throw LawError("offspring law: negative degree " + std::to_string(k));
      if (w < R(0)) throw LawError("offspring law: negative probability at degree " +
                                   std::to_string(k));
      if (w > R(0)) d.weights.emplace_back(k, w);
      sum += w;
    }
    if (abs_value(sum - R(1)) > arith<R>::sum_tolerance())
      throw LawError("offspring law: not normalized (sum = " + format_number(sum) + ")");
    R p0 = d.pmf(0), p1 = d.pmf(1);
    if (!(p0 > R(0))) throw LawError("offspring law: p(0) = 0");
    if (!(p0 + p1 < R(1))) throw LawError("offspring law: p(0) + p(1) >= 1");
    return OffspringLaw(std::move(d));
  }

  const DiscreteLaw<R>& distribution() const { return dist_; }
  const std::vector<std::pair<std::int32_t, R>>& weights() const { return dist_.weights; }
  R pmf(std::int32_t k) const { return dist_.pmf(k); }
  const R& mean() const { return mean_; }
  std::int32_t max_degree() const { return dist_.max_value(); }

  Criticality criticality() const {
    R gap = mean_ - R(1);
    if (abs_value(gap) <= arith<R>::critical_tolerance()) return Criticality::critical;
    return gap < R(0) ? Criticality::subcritical : Criticality::supercritical;
  }
  bool is_critical() const { return criticality() == Criticality::critical; }

  void require_critical(const char* who) const {
    if (!is_critical())
      throw LawError(std::string(who) + ": law is " + to_string(criticality()) +
                     " (mean " + format_number(mean_) + "), critical law required");
  }

  OffspringLaw<double> to_float() const {
    DiscreteLaw<double> d;
    for (const auto& [k, w] : dist_.weights) d.weights.emplace_back(k, to_double(w));
    return OffspringLaw<double>(std::move(d));
  }

  explicit OffspringLaw(DiscreteLaw<R> d) : dist_(std::move(d)), mean_(dist_.mean()) {}

 private:
  DiscreteLaw<R> dist_;
  R mean_;
};

// Truncate an infinite-support pmf at `cap` and renormalize, reporting the
// discarded mass.
template <class R>
struct TruncatedLaw {
  OffspringLaw<R> law;
  R discarded_mass;
};

template <class R, class PmfFn>
TruncatedLaw<R> truncate_offspring_law(PmfFn pmf, std::int32_t cap) {
  std::map<std::int32_t, R> table;
  R mass(0);
  for (std::int32_t k = 0; k <= cap; ++k) {
    R w = pmf(k);
    if (w > R(0)) table[k] = w;
    mass += w;
  }
  if (!(mass > R(0))) throw LawError("truncation left no mass");
  for (auto& [k, w] : table) w /= mass;
  return {OffspringLaw<R>::validate(table), R(1) - mass};
}

// Mark function q : degree -> [0, 1], a finite table plus a default for
// degrees beyond it.
template <class R>
class MarkFunction {
 public:
  MarkFunction(std::map<std::int32_t, R> table, R default_value)
      : table_(std::move(table)), default_(std::move(default_value)) {
    auto check = [](std::int32_t k, const R& v) {
      if (v < R(0) || v > R(1))
        throw LawError("mark function: q(" + std::to_string(k) + ") = " + format_number(v) +
                       " outside [0,1]");
    };
    for (const auto& [k, v] : table_) check(k, v);
    check(-1, default_);
  }

  static MarkFunction constant(R v) { return MarkFunction({}, std::move(v)); }

  R q(std::int32_t k) const {
    auto it = table_.find(k);
    return it == table_.end() ? default_ : it->second;
  }

  const std::map<std::int32_t, R>& table() const { return table_; }
  const R& default_value() const { return default_; }

  MarkFunction<double> to_float() const {
    std::map<std::int32_t, double> t;
    for (const auto& [k, v] : table_) t[k] = to_double(v);
    return MarkFunction<double>(std::move(t), to_double(default_));
  }

 private:
  std::map<std::int32_t, R> table_;
  R default_;
};

// Hypothesis of the conditioning theorem: some degree is both reachable and
// markable.
template <class R>
bool has_markable_degree(const OffspringLaw<R>& p, const MarkFunction<R>& q) {
  for (const auto& [k, w] : p.weights())
    if (w * q.q(k) > R(0)) return true;
  return false;
}

template <class R>
void require_markable(const OffspringLaw<R>& p, const MarkFunction<R>& q) {
  if (!has_markable_degree(p, q))
    throw LawError("mark function: p(k)q(k) = 0 for every degree k");
}

// Size-biased law p*(n) = n p(n) / mu. Not an offspring law in the standing
// sense (p*(0) = 0); it drives the spine of the size-biased tree.
template <class R>
DiscreteLaw<R> size_biased(const OffspringLaw<R>& p) {
  DiscreteLaw<R> out;
  for (const auto& [k, w] : p.weights())
    if (k > 0) out.weights.emplace_back(k, R(k) * w / p.mean());
  return out;
}

// Truncated law of an integer random variable: P(X = 0..N-1) plus an upper
// bound on the missing tail mass.
template <class R>
struct SeriesDist {
  std::vector<R> probs;
  R tail{};

  R sum() const {
    R s(0);
    for (const auto& x : probs) s += x;
    return s;
  }
  R window(std::int64_t lo, std::int64_t hi) const {  // P(X in [lo, hi)), clipped at 0
    R s(0);
    for (std::int64_t n = std::max<std::int64_t>(lo, 0);
         n < hi && n < static_cast<std::int64_t>(probs.size()); ++n)
      s += probs[static_cast<std::size_t>(n)];
    return s;
  }
  R mean_truncated() const {
    R s(0);
    for (std::size_t n = 0; n < probs.size(); ++n) s += R(static_cast<std::int64_t>(n)) * probs[n];
    return s;
  }
  SeriesDist<double> to_float() const {
    SeriesDist<double> out;
    out.probs.reserve(probs.size());
    for (const auto& x : probs) out.probs.push_back(to_double(x));
    out.tail = to_double(tail);
    return out;
  }
};

inline int gcd_int(int a, int b) { return std::gcd(a, b); }

inline int span_of_support(const std::vector<std::int32_t>& values) {
  int g = 0;
  for (auto v : values)
    if (v > 0) g = std::gcd(g, static_cast<int>(v));
  if (g == 0) throw LawError("span: empty positive support");
  return g;
}

// Span of X given its truncated law: gcd of {n > 0 : P(X = n) > threshold}.
template <class R>
int span(const SeriesDist<R>& s) {
  int g = 0;
  for (std::size_t n = 1; n < s.probs.size(); ++n)
    if (s.probs[n] > arith<R>::positive_threshold()) g = std::gcd(g, static_cast<int>(n));
  if (g == 0) throw LawError("span: empty positive support within truncation");
  return g;
}

// Span of X-1 given the law of X; this is the window width d in the ratio
// limits (taken on the count minus one).
template <class R>
int span_minus_one(const SeriesDist<R>& s) {
  int g = 0;
  for (std::size_t n = 2; n < s.probs.size(); ++n)
    if (s.probs[n] > arith<R>::positive_threshold()) g = std::gcd(g, static_cast<int>(n) - 1);
  if (g == 0) throw LawError("span: empty positive support within truncation");
  return g;
}

template <class R>
int span_shifted(const SeriesDist<R>& s) {
  return span_minus_one(s);
}

// Offspring law of the leafless core of a critical tree:
// p_core(k) = sum_{n >= max(k,1)} p(n) C(n,k) p(0)^{n-k} (1-p(0))^{k-1}.
template <class R>
OffspringLaw<R> reduced_law(const OffspringLaw<R>& p) {
  p.require_critical("reduced_law");
  R p0 = p.pmf(0);
  std::map<std::int32_t, R> table;
  for (std::int32_t k = 0; k <= p.max_degree(); ++k) {
    R acc(0);
    for (const auto& [n, pn] : p.weights()) {
      if (n < std::max(k, 1)) continue;
      acc += pn * binomial<R>(static_cast<unsigned>(n), static_cast<unsigned>(k)) *
             pow_nonneg(p0, static_cast<unsigned>(n - k));
    }
    if (k >= 1)
      acc *= pow_nonneg(R(1) - p0, static_cast<unsigned>(k - 1));
    else
      acc /= R(1) - p0;
    if (acc > R(0)) table[k] = acc;
  }
  try {
    auto out = OffspringLaw<R>::validate(table);
    if (!out.is_critical())
      throw LawError("reduced_law: output mean " + format_number(out.mean()) +
                     " is not critical");
    return out;
  } catch (const LawError& e) {
    throw LawError(std::string("reduced_law: derived law failed validation: ") + e.what());
  }
}

// Mark function for which marked vertices of the leafless core correspond to
// protected vertices of the rebuilt tree:
// q(k) = p(k) (1-p(0))^{k-1} / p_core(k) for k >= 1, q(0) = 0.
template <class R>
MarkFunction<R> protected_mark_function(const OffspringLaw<R>& p) {
  auto core = reduced_law(p);
  R p0 = p.pmf(0);
  std::map<std::int32_t, R> table;
  table[0] = R(0);
  for (std::int32_t k = 1; k <= p.max_degree(); ++k) {
    R pk = p.pmf(k);
    if (!(pk > R(0))) {
      table[k] = R(0);
      continue;
    }
    R denom = core.pmf(k);
    if (!(denom > R(0)))
      throw LawError("protected_mark_function: p_core(" + std::to_string(k) +
                     ") = 0 while p(" + std::to_string(k) + ") > 0");
    table[k] = pk * pow_nonneg(R(1) - p0, static_cast<unsigned>(k - 1)) / denom;
  }
  return MarkFunction<R>(std::move(table), R(0));
}

// Law of the number of leaves grafted onto a core vertex of out-degree k:
// P(W = n) = p(k+n)/p_core(k) C(k+n, n) p(0)^n (1-p(0))^{k-1}, with W >= 1
// when k = 0 (a core leaf always regains at least one grafted leaf).
template <class R>
SeriesDist<R> graft_count_law(const OffspringLaw<R>& p, std::int32_t k) {
  auto core = reduced_law(p);
  R denom = core.pmf(k);
  if (!(denom > R(0)))
    throw LawError("graft_count_law: degree " + std::to_string(k) +
                   " outside the reduced support");
  R p0 = p.pmf(0);
  std::int32_t n_max = p.max_degree() - k;
  SeriesDist<R> out;
  out.probs.assign(static_cast<std::size_t>(std::max(n_max + 1, 1)), R(0));
  for (std::int32_t n = (k == 0 ? 1 : 0); n <= n_max; ++n) {
    R pkn = p.pmf(k + n);
    if (!(pkn > R(0))) continue;
    R term = pkn / denom *
             binomial<R>(static_cast<unsigned>(k + n), static_cast<unsigned>(n)) *
             pow_nonneg(p0, static_cast<unsigned>(n));
    if (k >= 1)
      term *= pow_nonneg(R(1) - p0, static_cast<unsigned>(k - 1));
    else
      term /= R(1) - p0;
    out.probs[static_cast<std::size_t>(n)] = term;
  }
  out.tail = R(1) - out.sum();
  if (abs_value(out.tail) > arith<R>::sum_tolerance())
    throw LawError("graft_count_law: law at degree " + std::to_string(k) +
                   " not normalized (defect " + format_number(out.tail) + ")");
  out.tail = R(0);
  return out;
}

}  // namespace gwlab
