// Cross-law coverage: the critical ternary law p(0) = 2/3, p(3) = 1/3 has
// size support {1, 4, 7, ...} (span 3 windows) and rational fixed points in
// exact mode, and the truncated geometric exercises the float path end to
// end.

#include <catch2/catch_amalgamated.hpp>

#include "gwlab/experiments.hpp"

using namespace gwlab;

namespace {

OffspringLaw<Rational> ternary_exact() {
  return OffspringLaw<Rational>::validate({{0, Rational(2, 3)}, {3, Rational(1, 3)}});
}

MarkFunction<Rational> mark_internal() {
  return MarkFunction<Rational>({{0, Rational(0)}}, Rational(1));
}

}  // namespace

TEST_CASE("ternary law: size support lives on 1 mod 3") {
  auto p = ternary_exact();
  CHECK(p.mean() == 1);
  auto s = size_series(p, 40, /*verify=*/true);
  for (std::size_t n = 0; n < 40; ++n)
    CHECK((s.probs[n] > 0) == (n % 3 == 1));
  CHECK(span_minus_one(s) == 3);
  CHECK(s.sum() + s.tail == 1);

  // P(Card = 4) = 3 p0^3 p3... exactly one tree shape of size 4
  CHECK(s.probs[4] == pow_nonneg(Rational(2, 3), 3) * Rational(1, 3));
}

TEST_CASE("ternary law: series gates against enumeration") {
  auto p = ternary_exact();
  auto g1 = mark_series_gate(p, MarkFunction<Rational>::constant(Rational(1)), 8);
  INFO(g1.detail);
  CHECK(g1.pass);
  auto g2 = mark_series_gate(p, mark_internal(), 8);
  INFO(g2.detail);
  CHECK(g2.pass);
  auto g3 = protected_series_gate(p, 8);
  INFO(g3.detail);
  CHECK(g3.pass);
  auto g4 = protected_identity_gate(p, 48);
  INFO(g4.detail);
  CHECK(g4.pass);
}

TEST_CASE("ternary law: reduced law and graft counts") {
  auto p = ternary_exact();
  auto core = reduced_law(p);
  CHECK(core.mean() == 1);
  Rational total(0);
  for (const auto& [k, w] : core.weights()) total += w;
  CHECK(total == 1);
  auto q = protected_mark_function(p);
  for (std::int32_t k = 0; k <= 3; ++k) {
    CHECK(q.q(k) >= 0);
    CHECK(q.q(k) <= 1);
  }
  for (std::int32_t k = 0; k <= 3; ++k) {
    if (!(core.pmf(k) > 0)) continue;
    auto w = graft_count_law(p, k);
    CHECK(w.sum() == 1);
  }
}

TEST_CASE("ternary law: walk collapse stays critical") {
  auto p = ternary_exact();
  auto r = collapsed_offspring_law(p, mark_internal());
  CHECK(r.walk.unresolved == 0);  // marks fall on every internal step
  CHECK(r.mean_estimate == 1);
  auto y = collapsed_law_as_offspring(r);
  CHECK(y.mean() == 1);
  CHECK(r.gamma == Rational(1, 3));  // root is internal with probability 1/3
}

TEST_CASE("ternary law: conditioned ball probabilities against brute force") {
  auto p = ternary_exact();
  auto q = MarkFunction<Rational>::constant(Rational(1));
  auto mseries = mark_count_series(p, q, 16);
  BallEvent e(parse_tree("3 0 0 0"), Address{2});
  Rational joint(0), mass(0);
  for (const auto& wt : enumerate_trees(p, 7)) {
    if (wt.tree.size() != 7) continue;
    mass += wt.prob;
    if (ball_member(wt.tree, e)) joint += wt.prob;
  }
  auto r = conditioned_ball_probability(p, q, e, 7, 1, mseries);
  CHECK(r.joint == joint);
  CHECK(r.window_mass == mass);
}

TEST_CASE("ternary law: small local-limit run under size conditioning") {
  auto p = ternary_exact();
  ExperimentOptions opts;
  opts.node_cap = 5000;
  opts.final_gap_slack = 0.06;  // loose: small samples, coarse n
  auto rep = run_local_limit_check<Rational>(
      p, MarkFunction<Rational>::constant(Rational(1)), ConditionTarget::marks, {4, 10, 19},
      {20000, 10000, 8000}, {23, 0}, opts);
  for (const auto& c : rep.checks) INFO(c.name << ": " << c.detail);
  CHECK(rep.pass);
}

TEST_CASE("ternary law: kesten slices hit the panel at the exact rates") {
  auto p = ternary_exact();
  auto panel = default_event_panel(p);
  REQUIRE(panel.size() == 5);
  DiscreteSampler off(p.to_float());
  DiscreteSampler spine(size_biased(p.to_float()));
  Rng rng({24, 0});
  const std::uint64_t n = 100000;
  std::vector<std::uint64_t> hits(panel.size(), 0);
  for (std::uint64_t i = 0; i < n; ++i) {
    auto slice = sample_kesten(off, spine, 4, rng);
    for (std::size_t e = 0; e < panel.size(); ++e)
      if (slice_ball_member(slice, panel[e])) ++hits[e];
  }
  for (std::size_t e = 0; e < panel.size(); ++e) {
    double target = to_double(kesten_ball_probability(p, panel[e]));
    auto ci = wilson_interval(hits[e], n, 0.999);
    INFO("event " << serialize_tree(panel[e].base) << " target " << target);
    CHECK(target >= ci.low);
    CHECK(target <= ci.high);
  }
}

TEST_CASE("geometric float law: full pipeline smoke") {
  auto geo = truncate_offspring_law<double>(
      [](std::int32_t k) { return std::pow(0.5, k + 1); }, 64);
  auto p = geo.law;
  REQUIRE(p.is_critical());

  ExperimentOptions opts;
  opts.node_cap = 5000;
  auto rep =
      run_collapse_law_check(p, MarkFunction<double>::constant(0.5), 30000, {25, 0}, opts, 4);
  for (const auto& c : rep.checks) INFO(c.name << ": " << c.detail);
  for (const auto& g : rep.gates) INFO(g.name << ": " << g.detail);
  CHECK(rep.pass);

  auto ratio = run_ratio_check<double>(p, MarkFunction<double>::constant(0.5),
                                       RatioMode::marks, 201, opts);
  for (const auto& c : ratio.checks) INFO(c.name << ": " << c.detail);
  CHECK(ratio.pass);

  auto graft = run_graft_identity_check(p, 30000, {26, 0}, opts, 5);
  for (const auto& c : graft.checks) INFO(c.name << ": " << c.detail);
  CHECK(graft.pass);
}
