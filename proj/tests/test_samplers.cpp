#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>

#include "gwlab/oracle.hpp"
#include "gwlab/samplers.hpp"
#include "gwlab/stats.hpp"
#include "gwlab/transforms.hpp"
#include "gwlab/walk.hpp"

using namespace gwlab;

namespace {

OffspringLaw<Rational> binary_exact() {
  return OffspringLaw<Rational>::validate({{0, Rational(1, 2)}, {2, Rational(1, 2)}});
}

MarkFunction<Rational> mark_internal() {
  return MarkFunction<Rational>({{0, Rational(0)}}, Rational(1));
}

bool within_3_sigma(double phat, double p, std::uint64_t n) {
  return std::fabs(phat - p) <= 3.0 * std::sqrt(p * (1 - p) / static_cast<double>(n));
}

}  // namespace

TEST_CASE("GW sampler frequencies") {
  DiscreteSampler s(binary_exact().to_float());
  Rng rng({2024, 0});
  const std::uint64_t n = 200000;
  std::uint64_t card1 = 0, card3 = 0, overflow = 0;
  for (std::uint64_t i = 0; i < n; ++i) {
    auto d = sample_gw(s, 100000, rng);
    if (d.overflow) {
      ++overflow;
      continue;
    }
    if (d.tree->size() == 1) ++card1;
    if (d.tree->size() == 3) ++card3;
  }
  CHECK(within_3_sigma(static_cast<double>(card1) / n, 0.5, n));
  CHECK(within_3_sigma(static_cast<double>(card3) / n, 0.125, n));
  CHECK(overflow < n / 100);  // surfaced, never silently dropped
}

TEST_CASE("samplers are reproducible under a fixed handle") {
  DiscreteSampler s(binary_exact().to_float());
  Rng a({7, 3}), b({7, 3}), c({7, 4});
  bool same_stream_equal = true, other_stream_differs = false;
  for (int i = 0; i < 50; ++i) {
    auto x = sample_gw(s, 100000, a);
    auto y = sample_gw(s, 100000, b);
    auto z = sample_gw(s, 100000, c);
    if (!(x.tree == y.tree)) same_stream_equal = false;
    if (!(x.tree == z.tree)) other_stream_differs = true;
  }
  CHECK(same_stream_equal);
  CHECK(other_stream_differs);
}

TEST_CASE("mark sampler degenerate cases") {
  Tree t = parse_tree("2 2 0 0 0");
  MarkTable all(MarkFunction<double>::constant(1.0), 4);
  MarkTable none(MarkFunction<double>::constant(0.0), 4);
  MarkTable leaves_only(MarkFunction<double>({{0, 1.0}}, 0.0), 4);
  Rng rng({1, 1});
  CHECK(sample_marks(t, all, rng).mark_count() == t.size());
  CHECK(sample_marks(t, none, rng).mark_count() == 0);
  auto lm = sample_marks(t, leaves_only, rng);
  CHECK(lm.mark_addresses() == leaves(t));
}

TEST_CASE("size-biased slice sampler") {
  auto p = binary_exact();
  DiscreteSampler off(p.to_float());
  DiscreteSampler spine(size_biased(p.to_float()));
  Rng rng({42, 0});

  // spine degree at the root is size-biased: always 2 for the binary law
  for (int i = 0; i < 20; ++i) {
    auto slice = sample_kesten(off, spine, 3, rng);
    REQUIRE(slice.spine.size() == 3);
    CHECK(slice.restriction.degrees.at(Address{}) == 2);
    // spine addresses nest and their child indices fit the recorded degrees
    for (std::size_t d = 0; d < 3; ++d) {
      const Address& v = slice.spine[d];
      REQUIRE(v.size() == d + 1);
      Address parent(v.begin(), v.end() - 1);
      CHECK(v.back() >= 1);
      CHECK(v.back() <= slice.restriction.degrees.at(parent));
    }
    // every tree lies in the full ball
    CHECK(slice_ball_member(slice, BallEvent(parse_tree("0"), Address{})));
  }

  // ball frequency against the exact value P(tree = t) / p(0)
  const std::uint64_t n = 200000;
  std::uint64_t hits = 0;
  BallEvent e(parse_tree("2 0 0"), Address{1});
  for (std::uint64_t i = 0; i < n; ++i) {
    auto slice = sample_kesten(off, spine, 3, rng);
    if (slice_ball_member(slice, e)) ++hits;
  }
  CHECK(within_3_sigma(static_cast<double>(hits) / n, 0.25, n));
}

TEST_CASE("slice ball membership needs enough height") {
  auto p = binary_exact();
  DiscreteSampler off(p.to_float());
  DiscreteSampler spine(size_biased(p.to_float()));
  Rng rng({43, 0});
  auto slice = sample_kesten(off, spine, 1, rng);
  CHECK_THROWS_AS(slice_ball_member(slice, BallEvent(parse_tree("2 0 0"), Address{1})),
                  SamplerError);
}

TEST_CASE("rejection sampling conditioned on the mark count") {
  auto p = binary_exact();
  DiscreteSampler off(p.to_float());
  MarkTable q(mark_internal().to_float(), 2);
  Rng rng({5, 0});

  // q == 1 on internal vertices, n = 1: the only accepted shape is "2 0 0"
  // marked at the root... n = 1 means exactly one internal vertex
  auto d = sample_conditioned_marks(off, q, 1, {10000, 1000000}, rng);
  REQUIRE(d.sample.has_value());
  CHECK(serialize_tree(d.sample->tree) == "2 0 0");
  CHECK(d.sample->marks == std::vector<std::size_t>{0});

  // acceptance rate approximates P(M = n)
  const std::uint64_t runs = 2000;
  std::uint64_t attempts = 0;
  for (std::uint64_t i = 0; i < runs; ++i) {
    auto s = sample_conditioned_marks(off, q, 2, {10000, 1000000}, rng);
    REQUIRE(s.sample.has_value());
    CHECK(s.sample->mark_count() == 2);
    attempts += s.attempts;
  }
  auto mseries = mark_count_series(p, mark_internal(), 8);
  double target = to_double(mseries.probs[2]);  // P(M = 2) = P(Card = 5) = 1/16
  double rate = static_cast<double>(runs) / static_cast<double>(attempts);
  CHECK(std::fabs(rate - target) < 3.0 * std::sqrt(target * (1 - target) / static_cast<double>(attempts)));
}

TEST_CASE("rejection sampling conditioned on the protected count") {
  auto p = binary_exact();
  DiscreteSampler off(p.to_float());
  Rng rng({6, 0});

  // n = 0 accepts the single-vertex tree
  auto d0 = sample_conditioned_protected(off, 0, {10000, 1000000}, rng);
  REQUIRE(d0.sample.has_value());
  CHECK(protected_count(d0.sample->tree) == 0);

  // the smallest binary tree with one protected vertex has 7 vertices
  std::size_t smallest = SIZE_MAX;
  for (int i = 0; i < 300; ++i) {
    auto d1 = sample_conditioned_protected(off, 1, {10000, 1000000}, rng);
    REQUIRE(d1.sample.has_value());
    REQUIRE(protected_count(d1.sample->tree) == 1);
    smallest = std::min(smallest, d1.sample->tree.size());
  }
  CHECK(smallest == 7);

  // acceptance rate approximates P(A = 1) = 1/16
  std::uint64_t attempts = 0;
  const std::uint64_t runs = 2000;
  for (std::uint64_t i = 0; i < runs; ++i)
    attempts += sample_conditioned_protected(off, 1, {10000, 1000000}, rng).attempts;
  double rate = static_cast<double>(runs) / static_cast<double>(attempts);
  CHECK(std::fabs(rate - 1.0 / 16) < 3.0 * std::sqrt((1.0 / 16) * (15.0 / 16) / static_cast<double>(attempts)));
}

TEST_CASE("budget exhaustion is reported, not thrown") {
  auto p = binary_exact();
  DiscreteSampler off(p.to_float());
  MarkTable q(mark_internal().to_float(), 2);
  Rng rng({8, 0});
  auto d = sample_conditioned_marks(off, q, 500, {64, 200}, rng);
  CHECK_FALSE(d.sample.has_value());
  CHECK(d.attempts == 200);
  CHECK(d.overflow_draws + d.aborted_draws <= d.attempts);
}

TEST_CASE("walk sampler matches the exact walk law") {
  auto p = binary_exact();
  DiscreteSampler off(p.to_float());
  MarkTable q(mark_internal().to_float(), 2);
  double gamma = to_double(mark_probability(p, mark_internal()));
  Rng rng({9, 0});
  const std::uint64_t n = 200000;
  std::uint64_t accepted = 0, censored = 0;
  double ysum = 0;
  for (std::uint64_t i = 0; i < n; ++i) {
    auto w = sample_walk(off, q, gamma, 1 << 20, rng);
    if (w.censored) {
      ++censored;
      continue;
    }
    if (w.accepted) {
      ++accepted;
      CHECK(w.xtilde == 2);  // binary internal marking forces X-tilde = 2
      ysum += static_cast<double>(w.y);
    }
  }
  CHECK(censored == 0);
  CHECK(within_3_sigma(static_cast<double>(accepted) / n, gamma, n));
  double ymean = ysum / static_cast<double>(accepted);
  // E[Y] = 1, sd(Y) = sqrt(1/2)
  CHECK(std::fabs(ymean - 1.0) <= 3.0 * std::sqrt(0.5 / static_cast<double>(accepted)));

  // q == 1: first step always marks
  MarkTable q1(MarkFunction<double>::constant(1.0), 2);
  for (int i = 0; i < 100; ++i) {
    auto w = sample_walk(off, q1, 1.0, 1 << 20, rng);
    CHECK(w.accepted);
    CHECK(w.n_first_mark == 1);
  }
}

TEST_CASE("leaf-graft sampler rebuilds full binary trees") {
  auto p = binary_exact();
  auto core_law = reduced_law(p);
  DiscreteSampler core(core_law.to_float());
  auto wsamplers = graft_count_samplers(p);
  Rng rng({10, 0});
  const int runs = 2000;
  for (int i = 0; i < runs; ++i) {
    auto d = sample_leaf_graft(core, wsamplers, 100000, rng);
    if (!d.sample) continue;
    const auto& s = *d.sample;
    for (std::size_t j = 0; j < s.tree.size(); ++j)
      REQUIRE((s.tree.degree(j) == 0 || s.tree.degree(j) == 2));  // full binary
    // marks are exactly the protected vertices of the rebuilt tree
    REQUIRE(s.tree_marks.size() == protected_count(s.tree));
    REQUIRE(s.core_marks.size() == s.tree_marks.size());
    for (std::size_t m : s.tree_marks) {
      bool leaf_child = false;
      auto sizes = s.tree.subtree_sizes();
      std::size_t c = m + 1;
      for (std::int32_t k = 0; k < s.tree.degree(m); ++k) {
        if (s.tree.is_leaf(c)) leaf_child = true;
        c += static_cast<std::size_t>(sizes[c]);
      }
      REQUIRE((s.tree.degree(m) > 0 && !leaf_child));
    }
    // the core is recoverable: stripping leaves undoes the graft
    if (s.tree.size() > 1) REQUIRE(strip_leaves(s.tree) == s.core);
  }
}

TEST_CASE("uniform slot placement in the leaf graft") {
  // ternary-ish law so a core degree 1 vertex can receive W = 1 with two
  // possible placements; check the placement counts with a chi-square
  auto p = OffspringLaw<double>::validate({{0, 0.5}, {1, 0.1}, {2, 0.3}, {3, 0.1}});
  // not critical; build the placement test directly on the sampler primitive:
  // draw many degree-1-core grafts via a hand-made graft sampler
  DiscreteLaw<double> w_one{{{1, 1.0}}};  // always one grafted leaf
  std::vector<DiscreteSampler> ws{DiscreteSampler(w_one), DiscreteSampler(w_one)};
  DiscreteLaw<double> chain{{{0, 0.5}, {1, 0.5}}};
  DiscreteSampler core(chain);
  Rng rng({11, 0});
  std::map<std::string, std::uint64_t> shapes;
  const std::uint64_t n = 100000;
  for (std::uint64_t i = 0; i < n; ++i) {
    auto d = sample_leaf_graft(core, ws, 1000, rng);
    if (!d.sample || d.sample->core.size() != 2) continue;
    shapes[serialize_tree(d.sample->tree)] += 1;
  }
  // core "1 0" with one grafted leaf on each vertex: the root slot pattern
  // has C(2,1) = 2 placements, each equally likely
  std::uint64_t left = shapes["2 2 0 0 0"] + shapes["2 1 0 0"];  // core child first
  std::uint64_t right = shapes["2 0 2 0 0"] + shapes["2 0 1 0"];
  (void)p;
  REQUIRE(left + right > 0);
  double tot = static_cast<double>(left + right);
  CHECK(std::fabs(static_cast<double>(left) / tot - 0.5) <= 3.0 * std::sqrt(0.25 / tot));
}

TEST_CASE("uniform slot placement: all six placements of 2 among 4") {
  // a degree-2 core root receiving W = 2 leaves spreads the two original
  // children over C(4,2) = 6 slot patterns uniformly
  DiscreteLaw<double> deg2{{{0, 0.75}, {2, 0.25}}};
  DiscreteSampler core(deg2);
  DiscreteLaw<double> w_zero{{{0, 1.0}}}, w_two{{{2, 1.0}}};
  std::vector<DiscreteSampler> ws{DiscreteSampler(w_zero), DiscreteSampler(w_zero),
                                  DiscreteSampler(w_two)};
  Rng rng({21, 0});
  std::map<std::string, std::uint64_t> pattern;
  const std::uint64_t n = 100000;
  std::uint64_t used = 0;
  for (std::uint64_t i = 0; i < n; ++i) {
    auto d = sample_leaf_graft(core, ws, 1000, rng);
    if (!d.sample || serialize_tree(d.sample->core) != "2 0 0") continue;
    // root has 4 slots; record which hold the (degree-0, W=0) core children
    const Tree& t = d.sample->tree;
    REQUIRE(t.degree(0) == 4);
    std::string key;
    auto sizes = t.subtree_sizes();
    std::size_t c = 1;
    for (int slot = 0; slot < 4; ++slot) {
      bool is_core_child =
          std::find(d.sample->tree_marks.begin(), d.sample->tree_marks.end(), c) !=
          d.sample->tree_marks.end();
      key += is_core_child ? '1' : '0';
      c += static_cast<std::size_t>(sizes[c]);
    }
    ++pattern[key];
    ++used;
  }
  REQUIRE(pattern.size() == 6);
  std::vector<double> expected(6, 1.0 / 6.0);
  std::vector<std::uint64_t> counts;
  for (const auto& [k, v] : pattern) counts.push_back(v);
  auto chi = chi_square_gof(expected, counts);
  INFO("stat=" << chi.statistic << " p=" << chi.p_value);
  CHECK(chi.p_value > 1e-3);
}
