#include <catch2/catch_amalgamated.hpp>

#include "gwlab/walk.hpp"

using namespace gwlab;

namespace {

OffspringLaw<Rational> binary_exact() {
  return OffspringLaw<Rational>::validate({{0, Rational(1, 2)}, {2, Rational(1, 2)}});
}

MarkFunction<Rational> mark_internal() {
  return MarkFunction<Rational>({{0, Rational(0)}}, Rational(1));
}

}  // namespace

TEST_CASE("walk DP collapses immediately when every vertex is marked") {
  auto p = binary_exact();
  auto r = collapsed_offspring_law(p, MarkFunction<Rational>::constant(Rational(1)));
  CHECK(r.walk.unresolved == 0);
  CHECK(r.walk.accept_mass == 1);
  CHECK(r.gamma == 1);
  // N = 1, X-tilde = X_1, Y = Binomial(X_1, 1) = X_1 distributed as p
  CHECK(r.y.probs[0] == Rational(1, 2));
  CHECK(r.y.probs[2] == Rational(1, 2));
  CHECK(r.mean_estimate == 1);
  CHECK(r.mean_error_bound == 0);
}

TEST_CASE("walk DP for internal marking of the binary law") {
  auto p = binary_exact();
  auto r = collapsed_offspring_law(p, mark_internal());
  CHECK(r.gamma == Rational(1, 2));
  CHECK(r.walk.unresolved == 0);
  CHECK(r.walk.accept_mass == Rational(1, 2));  // gamma = P(N <= G), resolved exactly
  CHECK(r.walk.reject_mass == Rational(1, 2));
  // X-tilde = 2 a.s.; Y = Binomial(2, 1/2)
  CHECK(r.walk.xtilde.probs[2] == 1);
  CHECK(r.y.probs[0] == Rational(1, 4));
  CHECK(r.y.probs[1] == Rational(1, 2));
  CHECK(r.y.probs[2] == Rational(1, 4));
  CHECK(r.mean_estimate == 1);
  CHECK(r.mean_error_bound == 0);
}

TEST_CASE("collapsed law satisfies the offspring assumption") {
  auto p = binary_exact();
  for (const auto& q : {MarkFunction<Rational>::constant(Rational(1)), mark_internal()}) {
    auto r = collapsed_offspring_law(p, q);
    auto y = collapsed_law_as_offspring(r);
    CHECK(y.pmf(0) > 0);
    CHECK(y.pmf(0) + y.pmf(1) < 1);
    CHECK(y.mean() == 1);  // criticality of the collapsed tree
  }
}

TEST_CASE("collapsed law is aperiodic when gamma < 1") {
  auto p = binary_exact();
  auto r = collapsed_offspring_law(p, mark_internal());
  CHECK(r.gamma < 1);
  std::vector<std::int32_t> support;
  for (std::size_t y = 1; y < r.y.probs.size(); ++y)
    if (r.y.probs[y] > 0) support.push_back(static_cast<std::int32_t>(y));
  CHECK(span_of_support(support) == 1);
}

TEST_CASE("walk DP reports honest tails on slow laws") {
  // leaf-only marking in float mode: the walk is absorbed at the first leaf,
  // which is step 1 with probability p(0); everything resolves fast
  auto p = binary_exact().to_float();
  MarkFunction<double> leaf_only({{0, 1.0}}, 0.0);
  auto r = collapsed_offspring_law(p, leaf_only, WalkOptions{100, 64});
  CHECK(r.gamma == 1.0);
  CHECK(r.walk.accept_mass + r.walk.reject_mass + r.walk.unresolved ==
        Catch::Approx(1.0).margin(1e-12));
  CHECK(r.walk.reject_mass == 0.0);  // a mark always falls at or before G
  // with a short horizon some mass is left unresolved and must be reported
  auto short_run = walk_conditional_law(p, leaf_only, WalkOptions{3, 64});
  CHECK(short_run.unresolved > 0.0);
  CHECK(short_run.accept_mass + short_run.reject_mass + short_run.unresolved ==
        Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("Y mean stays near 1 for a geometric law in float mode") {
  auto geo = truncate_offspring_law<double>(
      [](std::int32_t k) { return std::pow(0.5, k + 1); }, 32);
  auto q = MarkFunction<double>::constant(0.5);
  auto r = collapsed_offspring_law(geo.law, q, WalkOptions{20000, 256});
  CHECK(r.walk.unresolved < 1e-3);
  CHECK(std::abs(r.mean_estimate - 1.0) <= r.mean_error_bound + 1e-2);
}
