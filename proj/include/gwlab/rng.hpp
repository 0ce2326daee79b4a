#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "gwlab/laws.hpp"

namespace gwlab {

// Reproducibility handle: identical (seed, stream) gives an identical draw
// sequence; parallel workers take distinct streams.
struct RngHandle {
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;

  RngHandle with_stream(std::uint64_t s) const { return {seed, s}; }
};

class Rng {
 public:
  explicit Rng(RngHandle h) {
    std::seed_seq seq{static_cast<std::uint32_t>(h.seed), static_cast<std::uint32_t>(h.seed >> 32),
                      static_cast<std::uint32_t>(h.stream),
                      static_cast<std::uint32_t>(h.stream >> 32)};
    engine_.seed(seq);
  }

  std::uint64_t next() { return engine_(); }

  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return uniform01() < p; }

  // unbiased integer in [0, n)
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("Rng::below(0)");
    std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v;
    do {
      v = next();
    } while (v >= limit);
    return v % n;
  }

 private:
  std::mt19937_64 engine_;
};

// CDF-inversion sampler over a finite integer law; consumes exactly one
// uniform per draw.
class DiscreteSampler {
 public:
  template <class R>
  explicit DiscreteSampler(const DiscreteLaw<R>& law) {
    double acc = 0.0;
    for (const auto& [v, w] : law.weights) {
      acc += to_double(w);
      cdf_.push_back(acc);
      values_.push_back(v);
    }
    if (cdf_.empty()) throw std::invalid_argument("DiscreteSampler: empty law");
    cdf_.back() = 1.0 + 1e-9;  // guard against rounding at the top
  }

  template <class R>
  explicit DiscreteSampler(const OffspringLaw<R>& law) : DiscreteSampler(law.distribution()) {}

  std::int32_t draw(Rng& rng) const {
    double u = rng.uniform01();
    std::size_t lo = 0, hi = cdf_.size() - 1;
    while (lo < hi) {
      std::size_t mid = (lo + hi) / 2;
      if (u < cdf_[mid])
        hi = mid;
      else
        lo = mid + 1;
    }
    return values_[lo];
  }

  std::int32_t max_value() const { return values_.back(); }

 private:
  std::vector<double> cdf_;
  std::vector<std::int32_t> values_;
};

// Dense per-degree mark probabilities, built once from a mark function.
class MarkTable {
 public:
  template <class R>
  MarkTable(const MarkFunction<R>& q, std::int32_t max_degree) {
    probs_.reserve(static_cast<std::size_t>(max_degree) + 1);
    for (std::int32_t k = 0; k <= max_degree; ++k) probs_.push_back(to_double(q.q(k)));
    default_ = to_double(q.default_value());
  }

  double operator()(std::int32_t k) const {
    return k < static_cast<std::int32_t>(probs_.size()) ? probs_[static_cast<std::size_t>(k)]
                                                        : default_;
  }

 private:
  std::vector<double> probs_;
  double default_ = 0.0;
};

}  // namespace gwlab
