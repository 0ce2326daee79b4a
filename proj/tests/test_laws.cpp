#include <catch2/catch_amalgamated.hpp>

#include "gwlab/laws.hpp"

using namespace gwlab;

namespace {

OffspringLaw<Rational> binary_exact() {
  return OffspringLaw<Rational>::validate({{0, Rational(1, 2)}, {2, Rational(1, 2)}});
}

// p(k) = 2^-(k+1), truncated and renormalized
template <class R>
TruncatedLaw<R> geometric_half(std::int32_t cap) {
  return truncate_offspring_law<R>(
      [](std::int32_t k) { return pow_nonneg(R(1) / R(2), static_cast<unsigned>(k) + 1); }, cap);
}

}  // namespace

TEST_CASE("offspring law validation") {
  auto p = binary_exact();
  CHECK(p.mean() == 1);
  CHECK(p.criticality() == Criticality::critical);

  auto geo = geometric_half<Rational>(40);
  CHECK(to_double(geo.law.mean()) == Catch::Approx(1.0).margin(1e-9));
  CHECK(to_double(geo.discarded_mass) == Catch::Approx(std::pow(2.0, -41)).epsilon(1e-12));
  CHECK(geo.law.criticality() == Criticality::critical);  // within declared tolerance

  CHECK_THROWS_WITH(
      (OffspringLaw<double>::validate({{0, 0.3}, {1, 0.8}})),
      Catch::Matchers::ContainsSubstring("not normalized"));
  CHECK_THROWS_WITH((OffspringLaw<Rational>::validate(
                        {{1, Rational(1, 2)}, {2, Rational(1, 2)}})),
                    Catch::Matchers::ContainsSubstring("p(0) = 0"));
  CHECK_THROWS_WITH((OffspringLaw<Rational>::validate(
                        {{0, Rational(1, 2)}, {1, Rational(1, 2)}})),
                    Catch::Matchers::ContainsSubstring("p(0) + p(1) >= 1"));
  CHECK_THROWS_WITH(
      (OffspringLaw<double>::validate({{0, 0.5}, {2, -0.1}, {3, 0.6}})),
      Catch::Matchers::ContainsSubstring("negative"));
}

TEST_CASE("criticality classes") {
  auto sub = OffspringLaw<Rational>::validate({{0, Rational(3, 5)}, {2, Rational(2, 5)}});
  CHECK(sub.criticality() == Criticality::subcritical);
  auto super = OffspringLaw<Rational>::validate({{0, Rational(2, 5)}, {2, Rational(3, 5)}});
  CHECK(super.criticality() == Criticality::supercritical);
  CHECK_THROWS_AS(sub.require_critical("test"), LawError);
}

TEST_CASE("size-biased law") {
  auto star = size_biased(binary_exact());
  CHECK(star.pmf(0) == 0);
  CHECK(star.pmf(2) == 1);
  CHECK(star.total() == 1);

  auto geo = geometric_half<double>(40);
  auto gstar = size_biased(geo.law);
  CHECK(gstar.total() == Catch::Approx(1.0).margin(1e-12));
  // p*(n) ~ n 2^-(n+1) up to the truncation normalizer
  CHECK(gstar.pmf(3) == Catch::Approx(3.0 / 16.0).epsilon(1e-9));
  CHECK(gstar.pmf(0) == 0.0);
}

TEST_CASE("span helpers") {
  CHECK(span_of_support({2, 4, 6}) == 2);
  CHECK(span_of_support({3, 5}) == 1);
  CHECK_THROWS_AS(span_of_support({}), LawError);

  SeriesDist<double> card;  // binary tree sizes: odd support
  card.probs = {0, 0.5, 0, 0.125, 0, 0.0625};
  CHECK(span(card) == 1);            // support {1,3,5}
  CHECK(span_minus_one(card) == 2);  // support of X-1 is {2,4}
  CHECK(span_shifted(card) == 2);

  SeriesDist<double> dense;
  dense.probs = {0.2, 0.3, 0.3, 0.2};
  CHECK(span_minus_one(dense) == 1);

  SeriesDist<double> empty;
  empty.probs = {1.0};
  CHECK_THROWS_AS(span(empty), LawError);
}

TEST_CASE("reduced law of the binary critical law") {
  auto core = reduced_law(binary_exact());
  CHECK(core.pmf(0) == Rational(1, 4));
  CHECK(core.pmf(1) == Rational(1, 2));
  CHECK(core.pmf(2) == Rational(1, 4));
  CHECK(core.mean() == 1);
}

TEST_CASE("reduced law of the truncated geometric is a critical law") {
  auto geo = geometric_half<Rational>(40);
  auto core = reduced_law(geo.law);
  Rational total(0);
  for (const auto& [k, w] : core.weights()) total += w;
  CHECK(total == 1);  // validated laws renormalize exactly in rational mode
  CHECK(std::abs(to_double(core.mean()) - 1.0) < 1e-8);
  CHECK(core.pmf(0) > 0);
}

TEST_CASE("protected mark function") {
  auto q = protected_mark_function(binary_exact());
  CHECK(q.q(0) == 0);
  CHECK(q.q(1) == 0);  // p(1) = 0
  CHECK(q.q(2) == 1);

  auto geo = geometric_half<Rational>(40);
  auto qg = protected_mark_function(geo.law);
  for (std::int32_t k = 0; k <= 40; ++k) {
    CHECK(qg.q(k) >= 0);
    CHECK(qg.q(k) <= 1);
  }
  CHECK_THROWS_AS((MarkFunction<double>({{1, 1.5}}, 0.0)), LawError);
}

TEST_CASE("markable-degree hypothesis") {
  auto p = binary_exact();
  CHECK(has_markable_degree(p, MarkFunction<Rational>::constant(Rational(1))));
  CHECK_FALSE(has_markable_degree(p, MarkFunction<Rational>::constant(Rational(0))));
  // q supported only on a degree the law never produces
  MarkFunction<Rational> q1({{1, Rational(1)}}, Rational(0));
  CHECK_FALSE(has_markable_degree(p, q1));
  CHECK_THROWS_AS(require_markable(p, q1), LawError);
}

TEST_CASE("graft count law for the binary law") {
  auto p = binary_exact();
  auto w2 = graft_count_law(p, 2);
  CHECK(w2.probs[0] == 1);  // degree-2 vertices regain no leaves
  auto w1 = graft_count_law(p, 1);
  CHECK(w1.probs[0] == 0);
  CHECK(w1.probs[1] == 1);  // degree-1 vertices regain exactly one leaf
  auto w0 = graft_count_law(p, 0);
  CHECK(w0.probs[0] == 0);  // core leaves always regain at least one
  CHECK(w0.probs.size() > 2);
  CHECK(w0.probs[2] == 1);  // and for binary, exactly two

  CHECK_THROWS_AS(graft_count_law(p, 5), LawError);
}

TEST_CASE("graft count laws normalize for the truncated geometric") {
  auto geo = geometric_half<Rational>(40);
  auto core = reduced_law(geo.law);
  for (const auto& [k, w] : core.weights()) {
    (void)w;
    auto wk = graft_count_law(geo.law, k);
    CHECK(wk.sum() == 1);
    if (k == 0) CHECK(wk.probs[0] == 0);
  }
}
