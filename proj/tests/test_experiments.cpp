#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "gwlab/experiments.hpp"

using namespace gwlab;

namespace {

OffspringLaw<Rational> binary_exact() {
  return OffspringLaw<Rational>::validate({{0, Rational(1, 2)}, {2, Rational(1, 2)}});
}

MarkFunction<Rational> mark_internal() {
  return MarkFunction<Rational>({{0, Rational(0)}}, Rational(1));
}

json strip_runtime(ExperimentReport& rep) { return rep.to_json(/*include_runtime=*/false); }

}  // namespace

TEST_CASE("default event panel over the binary law") {
  auto panel = default_event_panel(binary_exact());
  REQUIRE(panel.size() == 5);
  CHECK(serialize_tree(panel[0].base) == "0");
  CHECK(serialize_tree(panel[1].base) == "2 0 0");
  CHECK(serialize_tree(panel[2].base) == "2 0 0");
  CHECK(serialize_tree(panel[3].base) == "2 0 2 0 0");
  CHECK(serialize_tree(panel[4].base) == "2 0 2 0 0");
  // targets named in the acceptance sheet: 1, 1/4, 1/16 all present
  auto p = binary_exact();
  CHECK(kesten_ball_probability(p, panel[0]) == 1);
  CHECK(kesten_ball_probability(p, panel[1]) == Rational(1, 4));
  CHECK(kesten_ball_probability(p, panel[3]) == Rational(1, 16));
}

TEST_CASE("phi-law check passes for the identity marking") {
  auto p = binary_exact();
  ExperimentOptions opts;
  opts.node_cap = 2000;
  auto rep = run_collapse_law_check(p, MarkFunction<Rational>::constant(Rational(1)), 40000,
                                    {101, 0}, opts);
  for (const auto& c : rep.checks) INFO(c.name << ": " << c.detail);
  CHECK(rep.pass);
}

TEST_CASE("phi-law check passes for internal marking and is deterministic") {
  auto p = binary_exact();
  ExperimentOptions opts;
  opts.node_cap = 2000;
  auto rep1 = run_collapse_law_check(p, mark_internal(), 40000, {7, 2}, opts);
  auto rep2 = run_collapse_law_check(p, mark_internal(), 40000, {7, 2}, opts);
  for (const auto& c : rep1.checks) INFO(c.name << ": " << c.detail);
  CHECK(rep1.pass);
  CHECK(strip_runtime(rep1) == strip_runtime(rep2));
  auto rep3 = run_collapse_law_check(p, mark_internal(), 40000, {8, 2}, opts);
  CHECK(strip_runtime(rep1) != strip_runtime(rep3));  // seed is load-bearing
}

TEST_CASE("graft identity check") {
  auto p = binary_exact();
  ExperimentOptions opts;
  opts.node_cap = 2000;
  auto rep = run_graft_identity_check(p, 40000, {55, 0}, opts);
  for (const auto& c : rep.checks) INFO(c.name << ": " << c.detail);
  CHECK(rep.pass);
}

TEST_CASE("ratio check: size windows for the binary law") {
  auto p = binary_exact();
  ExperimentOptions opts;
  opts.trend_lo = 50;
  opts.trend_hi = 200;
  auto rep = run_ratio_check<Rational>(p, std::nullopt, RatioMode::size, 401, opts);
  for (const auto& c : rep.checks) INFO(c.name << ": " << c.detail);
  CHECK(rep.pass);
}

TEST_CASE("ratio check: protected count") {
  auto p = binary_exact();
  ExperimentOptions opts;
  auto rep = run_ratio_check<Rational>(p, std::nullopt, RatioMode::protected_count, 201, opts);
  for (const auto& c : rep.checks) INFO(c.name << ": " << c.detail);
  CHECK(rep.pass);
}

TEST_CASE("local limit check at small scale") {
  auto p = binary_exact();
  ExperimentOptions opts;
  opts.node_cap = 5000;
  opts.final_gap_slack = 0.05;  // loose at unit-test sample sizes
  auto rep = run_local_limit_check<Rational>(p, mark_internal(), ConditionTarget::marks,
                                             {2, 6, 12}, {20000, 10000, 5000}, {13, 0}, opts);
  for (const auto& c : rep.checks) INFO(c.name << ": " << c.detail);
  CHECK(rep.pass);
}

TEST_CASE("local limit rejects off-support targets") {
  auto p = binary_exact();
  auto q = MarkFunction<Rational>::constant(Rational(1));
  // Card is odd for the binary law; conditioning on Card = 4 is empty
  CHECK_THROWS_WITH((run_local_limit_check<Rational>(p, q, ConditionTarget::marks, {4}, {100},
                                                     {1, 0}, {})),
                    Catch::Matchers::ContainsSubstring("outside the support"));
}

TEST_CASE("protected pipeline at small scale") {
  auto p = binary_exact();
  ExperimentOptions opts;
  opts.node_cap = 5000;
  opts.final_gap_slack = 0.05;
  auto rep = run_protected_pipeline_check(p, 60000, {17, 0}, opts, {2, 4, 8},
                                          {20000, 10000, 6000});
  for (const auto& c : rep.checks) INFO(c.name << ": " << c.detail);
  for (const auto& g : rep.gates) INFO(g.name << ": " << g.detail);
  CHECK(rep.pass);
  CHECK(rep.gates.size() >= 3);  // protected, reduced-mark, identity gates all embedded
}

TEST_CASE("stripped conditioned trees follow the reduced law") {
  // dist(strip_leaves(tree | non-leaf root)) = GW(reduced law), chi-square on
  // outputs with at most 5 vertices
  auto p = binary_exact();
  auto core_law = reduced_law(p);
  auto cells = enumerate_trees(core_law, 5);
  std::sort(cells.begin(), cells.end(), [](const auto& a, const auto& b) {
    if (a.tree.size() != b.tree.size()) return a.tree.size() < b.tree.size();
    return a.tree < b.tree;
  });
  std::vector<double> expected;
  std::map<Tree, std::size_t> index;
  double mass = 0;
  for (const auto& e : cells) {
    index[e.tree] = expected.size();
    expected.push_back(to_double(e.prob));
    mass += expected.back();
  }
  expected.push_back(1.0 - mass);
  std::vector<std::uint64_t> counts(expected.size(), 0);
  DiscreteSampler off(p.to_float());
  Rng rng({19, 0});
  const std::uint64_t n = 100000;
  for (std::uint64_t got = 0; got < n;) {
    auto d = sample_gw(off, 100000, rng);
    if (!d.tree || d.tree->degree(0) == 0) continue;
    ++got;
    Tree stripped = strip_leaves(*d.tree);
    auto it = index.find(stripped);
    ++counts[it == index.end() ? expected.size() - 1 : it->second];
  }
  auto chi = chi_square_gof(expected, counts);
  INFO("stat=" << chi.statistic << " df=" << chi.df << " p=" << chi.p_value);
  CHECK(chi.p_value > 1e-4);
}

TEST_CASE("report serialization") {
  ExperimentReport rep;
  rep.name = "demo";
  rep.parameters = {{"law", "binary"}};
  rep.add_check("alpha", true, "ok");
  json row;
  row["cell"] = "0";
  row["observed"] = 5;
  rep.rows.push_back(row);
  auto j = rep.to_json();
  CHECK(j["name"] == "demo");
  CHECK(j["pass"] == true);
  std::ostringstream csv;
  rep.write_csv(csv);
  CHECK(csv.str() == "cell,observed\n0,5\n");

  rep.add_check("beta", false, "boom");
  CHECK_FALSE(rep.pass);
}
