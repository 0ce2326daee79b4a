#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "gwlab/laws.hpp"
#include "gwlab/series.hpp"

namespace gwlab {

// Exact dynamic program over the marked depth-first walk. A path state is the
// current partial sum s = sum (X_i - 1) >= 0 of an alive path: no mark seen
// yet and -1 not yet hit. Each step either absorbs with a mark (N <= G,
// recording X-tilde = s + X_N), dies by stepping to -1 unmarked (N > G),
// keeps walking, or escapes the state cap / horizon into the reported
// unresolved mass.
struct WalkOptions {
  std::uint64_t horizon = 10'000;
  std::int32_t state_cap = 512;
};

template <class R>
struct WalkLaw {
  SeriesDist<R> xtilde;  // law of X-tilde conditioned on acceptance (within resolution)
  R accept_mass{};       // P(N <= G) resolved within the horizon
  R reject_mass{};       // P(N > G) resolved within the horizon
  R unresolved{};        // escaped mass: upper bound on everything unaccounted
  std::uint64_t steps = 0;
};

template <class R>
WalkLaw<R> walk_conditional_law(const OffspringLaw<R>& p, const MarkFunction<R>& q,
                                const WalkOptions& opt = {}) {
  require_markable(p, q);
  const std::size_t smax = static_cast<std::size_t>(opt.state_cap);
  const std::size_t xmax = smax + static_cast<std::size_t>(p.max_degree());
  std::vector<R> cur(smax + 1, R(0)), next(smax + 1, R(0));
  std::vector<R> absorbed(xmax + 1, R(0));
  WalkLaw<R> out;
  cur[0] = R(1);
  R alive(1);
  for (std::uint64_t step = 1; step <= opt.horizon && alive > R(0); ++step) {
    std::fill(next.begin(), next.end(), R(0));
    for (std::size_t s = 0; s <= smax; ++s) {
      if (!(cur[s] > R(0))) continue;
      for (const auto& [k, w] : p.weights()) {
        R qk = q.q(k);
        R marked = cur[s] * w * qk;
        if (marked > R(0)) absorbed[s + static_cast<std::size_t>(k)] += marked;
        R unmarked = cur[s] * w * (R(1) - qk);
        if (!(unmarked > R(0))) continue;
        std::int64_t s2 = static_cast<std::int64_t>(s) + k - 1;
        if (s2 < 0)
          out.reject_mass += unmarked;
        else if (s2 > static_cast<std::int64_t>(smax))
          out.unresolved += unmarked;
        else
          next[static_cast<std::size_t>(s2)] += unmarked;
      }
    }
    cur.swap(next);
    alive = R(0);
    for (const auto& x : cur) alive += x;
    out.steps = step;
  }
  out.unresolved += alive;
  for (const auto& x : absorbed) out.accept_mass += x;
  if (!(out.accept_mass > R(0)))
    throw SeriesError("walk: no acceptance mass resolved within the horizon");
  out.xtilde.probs.resize(absorbed.size());
  for (std::size_t x = 0; x < absorbed.size(); ++x) out.xtilde.probs[x] = absorbed[x] / out.accept_mass;
  out.xtilde.tail = out.unresolved / out.accept_mass;
  return out;
}

// Offspring law of the collapsed marked tree: Y is Binomial(X-tilde, gamma).
template <class R>
struct CollapsedLawResult {
  SeriesDist<R> y;
  R gamma;
  R mean_estimate;     // E[Y] over the resolved mass
  R mean_error_bound;  // 0 when the walk resolved completely
  WalkLaw<R> walk;
};

template <class R>
CollapsedLawResult<R> collapsed_offspring_law(const OffspringLaw<R>& p,
                                              const MarkFunction<R>& q,
                                              const WalkOptions& opt = {}) {
  CollapsedLawResult<R> out;
  out.walk = walk_conditional_law(p, q, opt);
  out.gamma = mark_probability(p, q);
  const auto& xt = out.walk.xtilde.probs;
  out.y.probs.assign(xt.size(), R(0));
  for (std::size_t x = 0; x < xt.size(); ++x) {
    if (!(xt[x] > R(0))) continue;
    for (std::size_t yv = 0; yv <= x; ++yv)
      out.y.probs[yv] += xt[x] *
                         binomial<R>(static_cast<unsigned>(x), static_cast<unsigned>(yv)) *
                         pow_nonneg(out.gamma, static_cast<unsigned>(yv)) *
                         pow_nonneg(R(1) - out.gamma, static_cast<unsigned>(x - yv));
  }
  while (out.y.probs.size() > 1 && out.y.probs.back() == R(0)) out.y.probs.pop_back();
  out.y.tail = out.walk.xtilde.tail;
  out.mean_estimate = out.gamma * out.walk.xtilde.mean_truncated();
  if (out.walk.unresolved == R(0)) {
    out.mean_error_bound = R(0);
  } else {
    // crude but honest: unresolved paths could have carried any X-tilde value
    // up to the state cap plus one step
    R xbound = R(opt.state_cap + p.max_degree());
    out.mean_error_bound = out.walk.xtilde.tail * xbound * out.gamma * R(2);
  }
  return out;
}

// Validate Y against the standing offspring assumption (it must satisfy it by
// construction; exposed so callers can assert it).
template <class R>
OffspringLaw<R> collapsed_law_as_offspring(const CollapsedLawResult<R>& c) {
  if (c.y.tail > arith<R>::sum_tolerance())
    throw LawError("collapsed law: unresolved walk mass " + format_number(c.y.tail) +
                   " too large to validate");
  std::map<std::int32_t, R> table;
  for (std::size_t yv = 0; yv < c.y.probs.size(); ++yv)
    if (c.y.probs[yv] > R(0)) table[static_cast<std::int32_t>(yv)] = c.y.probs[yv];
  return OffspringLaw<R>::validate(table);
}

}  // namespace gwlab
