#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "gwlab/oracle.hpp"
#include "gwlab/samplers.hpp"
#include "gwlab/stats.hpp"
#include "gwlab/transforms.hpp"
#include "gwlab/walk.hpp"

namespace gwlab {

using json = nlohmann::json;

struct ExperimentError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Declared statistical thresholds; every pass/fail verdict is a pure function
// of the metrics and these values.
struct ExperimentOptions {
  std::uint64_t node_cap = 10'000;
  int workers = 4;  // fixed default, part of the config key, never hardware-derived
  double chi_square_alpha = 1e-3;
  double confidence = 0.99;
  double min_expected = 5.0;
  double final_gap_slack = 0.02;
  double ratio_bound = 0.008;
  std::int64_t trend_lo = 50;
  std::int64_t trend_hi = 200;
  std::size_t gate_size = 8;
  std::size_t series_order = 64;
  RejectionBudget budget{};
};

struct CheckRow {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct ExperimentReport {
  std::string name;
  json parameters = json::object();
  std::vector<GateReport> gates;
  json rows = json::array();
  std::vector<CheckRow> checks;
  bool pass = true;
  double runtime_seconds = 0.0;

  void add_gate(GateReport g) {
    pass = pass && g.pass;
    gates.push_back(std::move(g));
  }
  void add_check(std::string check_name, bool ok, std::string detail = "") {
    pass = pass && ok;
    checks.push_back({std::move(check_name), ok, std::move(detail)});
  }

  // runtime is reported but excluded from the determinism contract; reruns
  // with the same config and seed are byte-identical apart from it
  json to_json(bool include_runtime = true) const {
    json j;
    j["name"] = name;
    j["parameters"] = parameters;
    j["gates"] = json::array();
    for (const auto& g : gates) j["gates"].push_back({{"name", g.name}, {"pass", g.pass}, {"detail", g.detail}});
    j["rows"] = rows;
    j["checks"] = json::array();
    for (const auto& c : checks) j["checks"].push_back({{"name", c.name}, {"pass", c.pass}, {"detail", c.detail}});
    j["pass"] = pass;
    if (include_runtime) j["runtime_seconds"] = runtime_seconds;
    return j;
  }

  void write_csv(std::ostream& os) const {
    std::vector<std::string> cols;
    for (const auto& row : rows)
      for (auto it = row.begin(); it != row.end(); ++it)
        if (std::find(cols.begin(), cols.end(), it.key()) == cols.end()) cols.push_back(it.key());
    for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
    os << "\n";
    for (const auto& row : rows) {
      for (std::size_t i = 0; i < cols.size(); ++i) {
        if (i) os << ",";
        if (row.contains(cols[i])) {
          const auto& v = row[cols[i]];
          if (v.is_string())
            os << v.get<std::string>();
          else
            os << v.dump();
        }
      }
      os << "\n";
    }
  }
};

namespace detail {

template <class R>
json law_to_json(const OffspringLaw<R>& p) {
  json j = json::object();
  for (const auto& [k, w] : p.weights()) j[std::to_string(k)] = format_number(w);
  return j;
}

template <class R>
json mark_to_json(const MarkFunction<R>& q) {
  json j = json::object();
  j["default"] = format_number(q.default_value());
  for (const auto& [k, v] : q.table()) j[std::to_string(k)] = format_number(v);
  return j;
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

// Fan out sampling across workers keyed by stream id; merging in worker order
// keeps the result independent of scheduling.
template <class Collector, class Fn>
std::vector<Collector> parallel_collect(std::uint64_t total, RngHandle base, int workers,
                                        Fn fn) {
  if (workers < 1) workers = 1;
  std::vector<Collector> outs(static_cast<std::size_t>(workers));
  std::vector<std::thread> threads;
  std::uint64_t per = total / static_cast<std::uint64_t>(workers);
  std::uint64_t rem = total % static_cast<std::uint64_t>(workers);
  for (int w = 0; w < workers; ++w) {
    std::uint64_t count = per + (static_cast<std::uint64_t>(w) < rem ? 1 : 0);
    threads.emplace_back([&, w, count] {
      Rng rng(base.with_stream(base.stream + static_cast<std::uint64_t>(w)));
      fn(rng, count, outs[static_cast<std::size_t>(w)]);
    });
  }
  for (auto& t : threads) t.join();
  return outs;
}

// Cells for a tree-valued chi-square: the enumerated trees (sorted by size
// then degree sequence) plus a trailing everything-else bucket.
template <class R>
struct TreeCells {
  std::vector<Tree> trees;           // cell order
  std::vector<double> expected;      // includes the trailing bucket
  std::map<Tree, std::size_t> index;

  template <class ProbFn>
  TreeCells(std::vector<WeightedTree<R>> table, ProbFn prob) {
    std::sort(table.begin(), table.end(), [](const auto& a, const auto& b) {
      if (a.tree.size() != b.tree.size()) return a.tree.size() < b.tree.size();
      return a.tree < b.tree;
    });
    double mass = 0.0;
    for (auto& e : table) {
      double pr = prob(e);
      index.emplace(e.tree, trees.size());
      trees.push_back(std::move(e.tree));
      expected.push_back(pr);
      mass += pr;
    }
    expected.push_back(1.0 - mass);
  }

  std::size_t cell_of(const Tree& t) const {
    auto it = index.find(t);
    return it == index.end() ? trees.size() : it->second;
  }
  std::size_t bucket() const { return trees.size(); }
};

}  // namespace detail

// ---------------------------------------------------------------------------
// phi-law check: the collapse of a marked tree conditioned on at least one
// mark is a GW tree with the collapsed offspring law.
// ---------------------------------------------------------------------------

template <class R>
ExperimentReport run_collapse_law_check(const OffspringLaw<R>& p, const MarkFunction<R>& q,
                                        std::uint64_t samples, RngHandle handle,
                                        const ExperimentOptions& opts = {},
                                        std::size_t cell_max_nodes = 6) {
  detail::Stopwatch clock;
  ExperimentReport rep;
  rep.name = "phi-law";
  rep.parameters = {{"law", detail::law_to_json(p)},     {"q", detail::mark_to_json(q)},
                    {"samples", samples},                {"seed", handle.seed},
                    {"stream", handle.stream},           {"workers", opts.workers},
                    {"arith", arith<R>::name},           {"node_cap", opts.node_cap},
                    {"cell_max_nodes", cell_max_nodes}};

  rep.add_gate(mark_series_gate(p, q, opts.gate_size));
  if (!rep.pass) {
    rep.runtime_seconds = clock.seconds();
    return rep;
  }

  auto collapsed = collapsed_offspring_law(p, q);
  auto ylaw = collapsed_law_as_offspring(collapsed);
  detail::TreeCells<R> cells(enumerate_trees(ylaw, cell_max_nodes),
                             [&](const WeightedTree<R>& e) { return to_double(e.prob); });

  struct Collector {
    std::vector<std::uint64_t> counts;
    std::uint64_t overflow = 0;
    std::uint64_t draws = 0;
  };
  DiscreteSampler off(p.to_float());
  MarkTable qt(q.to_float(), p.max_degree());
  auto parts = detail::parallel_collect<Collector>(
      samples, handle, opts.workers, [&](Rng& rng, std::uint64_t want, Collector& c) {
        c.counts.assign(cells.expected.size(), 0);
        for (std::uint64_t got = 0; got < want;) {
          ++c.draws;
          auto d = sample_gw(off, opts.node_cap, rng);
          if (d.overflow) {
            // an overflowing draw cannot land in an enumerated cell: its mark
            // count exceeds every enumerated output size for the laws checked
            // here (see report row); counted into the bucket
            ++c.overflow;
            ++c.counts[cells.bucket()];
            ++got;
            continue;
          }
          auto marked = sample_marks(*d.tree, qt, rng);
          if (marked.mark_count() == 0) continue;  // conditioning on a mark
          ++c.counts[cells.cell_of(collapse_marked(marked))];
          ++got;
        }
      });
  std::vector<std::uint64_t> counts(cells.expected.size(), 0);
  std::uint64_t overflow = 0, draws = 0;
  for (const auto& part : parts) {
    for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += part.counts[i];
    overflow += part.overflow;
    draws += part.draws;
  }

  for (std::size_t i = 0; i < cells.expected.size(); ++i) {
    json row;
    row["cell"] = i < cells.trees.size() ? serialize_tree(cells.trees[i]) : "other";
    row["expected_prob"] = cells.expected[i];
    row["observed"] = counts[i];
    row["expected"] = cells.expected[i] * static_cast<double>(samples);
    rep.rows.push_back(row);
  }
  auto chi = chi_square_gof(cells.expected, counts, opts.min_expected);
  rep.add_check("chi-square p-value > alpha", chi.p_value > opts.chi_square_alpha,
                "stat=" + std::to_string(chi.statistic) + " df=" + std::to_string(chi.df) +
                    " p=" + std::to_string(chi.p_value));
  rep.add_check("overflow draws surfaced", true,
                std::to_string(overflow) + " of " + std::to_string(draws) + " draws");

  // exact route: Card of the collapsed GW tree vs the conditioned mark count;
  // whatever mass the walk DP failed to resolve widens the tolerance
  double unresolved = to_double(collapsed.walk.unresolved);
  if (unresolved <= 1e-12) {
    auto lhs = size_series(ylaw, opts.series_order);
    auto rhs = mark_count_series(p, q, opts.series_order);
    R gamma = collapsed.gamma;
    R tv(0);
    for (std::size_t m = 1; m < opts.series_order; ++m)
      tv += abs_value(lhs.probs[m] - rhs.probs[m] / gamma);
    tv = tv / R(2);
    double allowed = 1e-9 + 2.0 * unresolved / to_double(gamma);
    rep.add_check("series TV(dist(Card of collapsed), dist(M | M>0)) < 1e-9",
                  to_double(tv) < allowed, "tv=" + format_number(tv));
  } else {
    rep.add_check("series TV cross-check", false,
                  "walk left unresolved mass " + format_number(collapsed.walk.unresolved));
  }
  rep.runtime_seconds = clock.seconds();
  return rep;
}

// ---------------------------------------------------------------------------
// hat-tau check: rebuilding a conditioned tree from its leafless core.
// ---------------------------------------------------------------------------

template <class R>
ExperimentReport run_graft_identity_check(const OffspringLaw<R>& p, std::uint64_t samples,
                                          RngHandle handle, const ExperimentOptions& opts = {},
                                          std::size_t cell_max_nodes = 7) {
  detail::Stopwatch clock;
  ExperimentReport rep;
  rep.name = "hat-tau";
  rep.parameters = {{"law", detail::law_to_json(p)}, {"samples", samples},
                    {"seed", handle.seed},           {"stream", handle.stream},
                    {"workers", opts.workers},       {"arith", arith<R>::name},
                    {"node_cap", opts.node_cap},     {"cell_max_nodes", cell_max_nodes}};

  auto core_law = reduced_law(p);
  rep.add_check("reduced law is critical", core_law.is_critical(),
                "mean=" + format_number(core_law.mean()));
  R p0 = p.pmf(0);
  std::vector<WeightedTree<R>> table;
  for (auto& e : enumerate_trees(p, cell_max_nodes))
    if (e.tree.degree(0) > 0) table.push_back(std::move(e));
  detail::TreeCells<R> cells(std::move(table), [&](const WeightedTree<R>& e) {
    return to_double(e.prob / (R(1) - p0));
  });

  struct Collector {
    std::vector<std::uint64_t> counts;
    std::uint64_t overflow = 0;
    std::uint64_t identity_violations = 0;
    std::uint64_t support_violations = 0;
  };
  DiscreteSampler core_sampler(core_law.to_float());
  auto wsamplers = graft_count_samplers(p);
  std::vector<bool> in_support(static_cast<std::size_t>(p.max_degree()) + 1, false);
  for (const auto& [k, w] : p.weights()) {
    (void)w;
    in_support[static_cast<std::size_t>(k)] = true;
  }
  auto parts = detail::parallel_collect<Collector>(
      samples, handle, opts.workers, [&](Rng& rng, std::uint64_t want, Collector& c) {
        c.counts.assign(cells.expected.size(), 0);
        for (std::uint64_t got = 0; got < want; ++got) {
          auto d = sample_leaf_graft(core_sampler, wsamplers, opts.node_cap, rng);
          if (d.overflow) {
            // overflow means the rebuilt tree has more vertices than the cap,
            // in particular more than any enumerated cell: bucket, exactly
            ++c.overflow;
            ++c.counts[cells.bucket()];
            continue;
          }
          const auto& s = *d.sample;
          ++c.counts[cells.cell_of(s.tree)];
          // the marked core vertices must be exactly the protected vertices
          auto sizes = s.tree.subtree_sizes();
          std::vector<std::size_t> prot;
          for (std::size_t i = 0; i < s.tree.size(); ++i) {
            if (s.tree.is_leaf(i)) continue;
            bool leaf_child = false;
            std::size_t ch = i + 1;
            for (std::int32_t k = 0; k < s.tree.degree(i); ++k) {
              if (s.tree.is_leaf(ch)) leaf_child = true;
              ch += static_cast<std::size_t>(sizes[ch]);
            }
            if (!leaf_child) prot.push_back(i);
          }
          if (prot != s.tree_marks || s.core_marks.size() != s.tree_marks.size())
            ++c.identity_violations;
          for (std::size_t i = 0; i < s.tree.size(); ++i) {
            auto deg = static_cast<std::size_t>(s.tree.degree(i));
            if (deg >= in_support.size() || !in_support[deg]) {
              ++c.support_violations;
              break;
            }
          }
        }
      });
  std::vector<std::uint64_t> counts(cells.expected.size(), 0);
  std::uint64_t overflow = 0, violations = 0, support_violations = 0;
  for (const auto& part : parts) {
    for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += part.counts[i];
    overflow += part.overflow;
    violations += part.identity_violations;
    support_violations += part.support_violations;
  }

  for (std::size_t i = 0; i < cells.expected.size(); ++i) {
    json row;
    row["cell"] = i < cells.trees.size() ? serialize_tree(cells.trees[i]) : "other";
    row["expected_prob"] = cells.expected[i];
    row["observed"] = counts[i];
    rep.rows.push_back(row);
  }
  rep.add_check("marks equal protected vertices on every draw", violations == 0,
                std::to_string(violations) + " violations");
  rep.add_check("rebuilt degrees stay in the offspring support", support_violations == 0,
                std::to_string(support_violations) + " violations");
  auto chi = chi_square_gof(cells.expected, counts, opts.min_expected);
  rep.add_check("chi-square p-value > alpha", chi.p_value > opts.chi_square_alpha,
                "stat=" + std::to_string(chi.statistic) + " df=" + std::to_string(chi.df) +
                    " p=" + std::to_string(chi.p_value));
  rep.add_check("overflow draws surfaced", true, std::to_string(overflow) + " draws");
  rep.runtime_seconds = clock.seconds();
  return rep;
}

// ---------------------------------------------------------------------------
// Ratio tables
// ---------------------------------------------------------------------------

enum class RatioMode { size, marks, protected_count };

inline const char* to_string(RatioMode m) {
  switch (m) {
    case RatioMode::size: return "card";
    case RatioMode::marks: return "m";
    default: return "a";
  }
}

template <class R>
ExperimentReport run_ratio_check(const OffspringLaw<R>& p,
                                 const std::optional<MarkFunction<R>>& q, RatioMode mode,
                                 std::int64_t n_max, const ExperimentOptions& opts = {}) {
  detail::Stopwatch clock;
  ExperimentReport rep;
  rep.name = "ratio";
  rep.parameters = {{"law", detail::law_to_json(p)},
                    {"mode", to_string(mode)},
                    {"n_max", n_max},
                    {"arith", arith<R>::name},
                    {"trend_window", {opts.trend_lo, opts.trend_hi}},
                    {"ratio_bound", opts.ratio_bound}};
  if (q) rep.parameters["q"] = detail::mark_to_json(*q);

  SeriesDist<R> series;
  std::size_t order = static_cast<std::size_t>(n_max) + 8;
  if (mode == RatioMode::size) {
    rep.add_gate(mark_series_gate(p, MarkFunction<R>::constant(R(1)), opts.gate_size));
    if (rep.pass) series = size_series(p, order);
  } else if (mode == RatioMode::marks) {
    if (!q) throw ExperimentError("ratio check in mark mode needs a mark function");
    rep.add_gate(mark_series_gate(p, *q, opts.gate_size));
    if (rep.pass) series = mark_count_series(p, *q, order);
  } else {
    rep.add_gate(protected_series_gate(p, opts.gate_size));
    if (rep.pass) series = protected_count_series(p, order);
    if (rep.pass) {
      bool positive = true;
      for (std::int64_t n = 0; n <= n_max + 1; ++n)
        if (!(series.probs[static_cast<std::size_t>(n)] > arith<R>::positive_threshold()))
          positive = false;
      rep.add_check("support positive over the truncation", positive, "");
    }
  }
  if (!rep.pass) {
    rep.runtime_seconds = clock.seconds();
    return rep;
  }

  int d = span_minus_one(series);
  rep.parameters["d"] = d;
  // every support point above zero is congruent to 1 mod d (that is what the
  // span of X-1 means), so windows starting there hold one support point each
  std::int64_t support_class = 1 % d;
  auto table = ratio_table(series, d, n_max);
  std::vector<double> trend_n, trend_gap;
  double last_aligned_gap = -1.0;
  for (const auto& e : table) {
    bool aligned = e.n % d == support_class;
    json row;
    row["n"] = e.n;
    row["skipped"] = e.skipped;
    row["aligned"] = aligned;
    if (!e.skipped) {
      row["ratio"] = to_double(e.value);
      row["gap"] = std::fabs(to_double(e.value) - 1.0);
    }
    rep.rows.push_back(row);
    if (e.skipped || !aligned) continue;
    double gap = std::fabs(to_double(e.value) - 1.0);
    last_aligned_gap = gap;
    if (e.n >= opts.trend_lo && e.n <= opts.trend_hi) {
      trend_n.push_back(static_cast<double>(e.n));
      trend_gap.push_back(gap);
    }
  }
  rep.add_check("last aligned |r(n)-1| within bound",
                last_aligned_gap >= 0 && last_aligned_gap <= opts.ratio_bound,
                "gap=" + std::to_string(last_aligned_gap) +
                    " bound=" + std::to_string(opts.ratio_bound));
  if (trend_gap.size() >= 3) {
    bool strictly = true;
    for (std::size_t i = 1; i < trend_gap.size(); ++i)
      if (!(trend_gap[i] < trend_gap[i - 1])) strictly = false;
    double slope = least_squares_slope(trend_n, trend_gap);
    rep.add_check("|r(n)-1| decreasing over the trend window", strictly && slope < 0,
                  "strict=" + std::string(strictly ? "yes" : "no") +
                      " lsq_slope=" + std::to_string(slope));
  } else {
    rep.add_check("|r(n)-1| decreasing over the trend window", false,
                  "too few aligned entries in the trend window");
  }
  rep.runtime_seconds = clock.seconds();
  return rep;
}

// ---------------------------------------------------------------------------
// Local limit check
// ---------------------------------------------------------------------------

enum class ConditionTarget { marks, protected_count };

template <class R>
std::vector<BallEvent> default_event_panel(const OffspringLaw<R>& p, std::size_t count = 5) {
  std::vector<std::pair<Tree, Address>> pairs;
  auto table = enumerate_trees(p, 7);
  std::sort(table.begin(), table.end(), [](const auto& a, const auto& b) {
    if (a.tree.size() != b.tree.size()) return a.tree.size() < b.tree.size();
    return a.tree < b.tree;
  });
  for (const auto& e : table)
    for (const auto& x : leaves(e.tree)) pairs.emplace_back(e.tree, x);
  std::vector<BallEvent> out;
  for (std::size_t i = 0; i < pairs.size() && out.size() < count; ++i)
    out.emplace_back(pairs[i].first, pairs[i].second);
  return out;
}

template <class R>
ExperimentReport run_local_limit_check(const OffspringLaw<R>& p,
                                       const std::optional<MarkFunction<R>>& q,
                                       ConditionTarget target,
                                       const std::vector<std::int64_t>& n_list,
                                       const std::vector<std::uint64_t>& accepted_counts,
                                       RngHandle handle, const ExperimentOptions& opts = {},
                                       std::vector<BallEvent> events = {}) {
  detail::Stopwatch clock;
  ExperimentReport rep;
  rep.name = "local-limit";
  rep.parameters = {{"law", detail::law_to_json(p)},
                    {"target", target == ConditionTarget::marks ? "m" : "a"},
                    {"n_list", n_list},
                    {"accepted_counts", accepted_counts},
                    {"seed", handle.seed},
                    {"stream", handle.stream},
                    {"workers", opts.workers},
                    {"arith", arith<R>::name},
                    {"confidence", opts.confidence},
                    {"final_gap_slack", opts.final_gap_slack}};
  if (q) rep.parameters["q"] = detail::mark_to_json(*q);
  if (n_list.empty() || n_list.size() != accepted_counts.size())
    throw ExperimentError("local-limit: n_list and accepted_counts must align");

  // oracle series plus its quarantine gate
  SeriesDist<R> series;
  std::size_t order = static_cast<std::size_t>(*std::max_element(n_list.begin(), n_list.end())) +
                      static_cast<std::size_t>(p.max_degree()) + 16;
  if (target == ConditionTarget::marks) {
    if (!q) throw ExperimentError("local-limit on the mark count needs a mark function");
    rep.add_gate(mark_series_gate(p, *q, opts.gate_size));
    if (rep.pass) series = mark_count_series(p, *q, order);
  } else {
    rep.add_gate(protected_series_gate(p, opts.gate_size));
    if (rep.pass) series = protected_count_series(p, order);
  }
  if (!rep.pass) {
    rep.runtime_seconds = clock.seconds();
    return rep;
  }

  // conditioning support check, reporting the admissible congruence class
  for (std::int64_t n : n_list) {
    if (series.probs[static_cast<std::size_t>(n)] > arith<R>::positive_threshold()) continue;
    int d = span_minus_one(series);
    std::string near;
    for (std::size_t v = 0; v < series.probs.size() && near.size() < 40; ++v)
      if (series.probs[v] > arith<R>::positive_threshold() &&
          std::llabs(static_cast<std::int64_t>(v) - n) <= 2 * d)
        near += std::to_string(v) + " ";
    throw ExperimentError("local-limit: target " + std::to_string(n) +
                          " outside the support (span of count minus one is " +
                          std::to_string(d) + "; supported nearby: " + near + ")");
  }

  if (events.empty()) events = default_event_panel(p);

  struct Collector {
    std::vector<std::uint64_t> event_hits;  // per event
    std::vector<std::uint64_t> equals_base; // draws equal to the event base tree
    std::map<std::string, std::uint64_t> restriction_counts;
    std::uint64_t attempts = 0;
    std::uint64_t overflow = 0;
    std::uint64_t aborted = 0;
    std::uint64_t failed = 0;
  };

  DiscreteSampler off(p.to_float());
  std::optional<MarkTable> qt;
  if (q) qt.emplace(q->to_float(), p.max_degree());

  // gap matrices [event][n-index]
  std::vector<std::vector<double>> empirical(events.size()),
      ci_half(events.size()), exact_cond(events.size());
  std::vector<std::uint64_t> final_base_hits(events.size(), 0);
  std::map<std::string, double> final_restriction_law;
  std::uint64_t final_samples = 0;

  for (std::size_t ni = 0; ni < n_list.size(); ++ni) {
    std::int64_t n = n_list[ni];
    std::uint64_t want_total = accepted_counts[ni];
    auto parts = detail::parallel_collect<Collector>(
        want_total, handle.with_stream(handle.stream + 100 * (ni + 1)), opts.workers,
        [&](Rng& rng, std::uint64_t want, Collector& c) {
          c.event_hits.assign(events.size(), 0);
          c.equals_base.assign(events.size(), 0);
          for (std::uint64_t got = 0; got < want;) {
            ConditionedDraw d;
            if (target == ConditionTarget::marks)
              d = sample_conditioned_marks(off, *qt, static_cast<std::size_t>(n), opts.budget,
                                           rng);
            else
              d = sample_conditioned_protected(off, static_cast<std::size_t>(n), opts.budget,
                                               rng);
            c.attempts += d.attempts;
            c.overflow += d.overflow_draws;
            c.aborted += d.aborted_draws;
            if (!d.sample) {
              ++c.failed;
              break;  // budget exhausted; partial report flagged below
            }
            const Tree& t = d.sample->tree;
            for (std::size_t e = 0; e < events.size(); ++e) {
              if (ball_member(t, events[e])) ++c.event_hits[e];
              if (t == events[e].base) ++c.equals_base[e];
            }
            ++c.restriction_counts[restrict_to_height(t, 2).key()];
            ++got;
          }
        });
    Collector all;
    all.event_hits.assign(events.size(), 0);
    all.equals_base.assign(events.size(), 0);
    for (const auto& part : parts) {
      for (std::size_t e = 0; e < events.size(); ++e) {
        all.event_hits[e] += part.event_hits[e];
        all.equals_base[e] += part.equals_base[e];
      }
      for (const auto& [k, v] : part.restriction_counts) all.restriction_counts[k] += v;
      all.attempts += part.attempts;
      all.overflow += part.overflow;
      all.aborted += part.aborted;
      all.failed += part.failed;
    }
    if (all.failed > 0)
      rep.add_check("rejection budget at n=" + std::to_string(n), false,
                    "budget exhausted; partial results");
    std::uint64_t got_total = 0;
    for (const auto& [k, v] : all.restriction_counts) {
      (void)k;
      got_total += v;
    }

    for (std::size_t e = 0; e < events.size(); ++e) {
      double emp = static_cast<double>(all.event_hits[e]) / static_cast<double>(got_total);
      auto ci = wilson_interval(all.event_hits[e], got_total, opts.confidence);
      double target_prob = to_double(kesten_ball_probability(p, events[e]));
      ConditionedBallResult<R> cond =
          target == ConditionTarget::marks
              ? conditioned_ball_probability(p, *q, events[e], n, 1, series)
              : conditioned_protected_ball_probability(p, events[e], n, 1, series);
      empirical[e].push_back(emp);
      ci_half[e].push_back(ci.halfwidth);
      exact_cond[e].push_back(to_double(cond.conditional));
      if (ni + 1 == n_list.size()) final_base_hits[e] = all.equals_base[e];

      json row;
      row["event_base"] = serialize_tree(events[e].base);
      row["event_leaf"] = format_address(events[e].base.address_of(events[e].leaf_index));
      row["n"] = n;
      row["accepted"] = got_total;
      row["attempts"] = all.attempts;
      row["observed_hits"] = all.event_hits[e];
      row["empirical"] = emp;
      row["ci_low"] = ci.low;
      row["ci_high"] = ci.high;
      row["kesten_target"] = target_prob;
      row["exact_conditional"] = to_double(cond.conditional);
      row["gap_empirical"] = std::fabs(emp - target_prob);
      row["gap_exact"] = std::fabs(to_double(cond.conditional) - target_prob);
      rep.rows.push_back(row);
    }
    if (ni + 1 == n_list.size()) {
      final_samples = got_total;
      for (const auto& [k, v] : all.restriction_counts)
        final_restriction_law[k] = static_cast<double>(v) / static_cast<double>(got_total);
    }
  }

  // pass rules (declared): per event, the empirical gap trend must not grow
  // unless the gaps are statistically indistinguishable from the target, and
  // the largest-n gap must sit within CI + slack
  for (std::size_t e = 0; e < events.size(); ++e) {
    double target_prob = to_double(kesten_ball_probability(p, events[e]));
    std::vector<double> ns(n_list.size()), gaps(n_list.size());
    bool all_within_ci = true;
    for (std::size_t i = 0; i < n_list.size(); ++i) {
      ns[i] = static_cast<double>(n_list[i]);
      gaps[i] = std::fabs(empirical[e][i] - target_prob);
      if (gaps[i] > ci_half[e][i]) all_within_ci = false;
    }
    double slope = least_squares_slope(ns, gaps);
    bool trend_ok = slope <= 0.0 || all_within_ci;
    std::string label = serialize_tree(events[e].base) + " @ " +
                        format_address(events[e].base.address_of(events[e].leaf_index));
    rep.add_check("gap trend for [" + label + "]", trend_ok,
                  "lsq_slope=" + std::to_string(slope) +
                      (all_within_ci ? " (all gaps within CI)" : ""));
    double final_gap = gaps.back();
    rep.add_check("final gap for [" + label + "]",
                  final_gap <= ci_half[e].back() + opts.final_gap_slack,
                  "gap=" + std::to_string(final_gap) + " ci=" + std::to_string(ci_half[e].back()) +
                      " slack=" + std::to_string(opts.final_gap_slack));
    rep.add_check("P(tree = base) vanishes for [" + label + "]", final_base_hits[e] == 0,
                  std::to_string(final_base_hits[e]) + " exact hits at n=" +
                      std::to_string(n_list.back()));
  }

  // TV between the depth-2 restriction laws: conditioned samples at the
  // largest n against size-biased slices (report only)
  {
    std::map<std::string, double> kesten_law;
    DiscreteSampler spine(size_biased(p.to_float()));
    auto parts = detail::parallel_collect<std::map<std::string, std::uint64_t>>(
        final_samples, handle.with_stream(handle.stream + 7777), opts.workers,
        [&](Rng& rng, std::uint64_t want, std::map<std::string, std::uint64_t>& c) {
          for (std::uint64_t i = 0; i < want; ++i) {
            auto slice = sample_kesten(off, spine, 2, rng);
            ++c[slice.restriction.key()];
          }
        });
    std::uint64_t total = 0;
    std::map<std::string, std::uint64_t> merged;
    for (const auto& part : parts)
      for (const auto& [k, v] : part) {
        merged[k] += v;
        total += v;
      }
    for (const auto& [k, v] : merged)
      kesten_law[k] = static_cast<double>(v) / static_cast<double>(total);
    json row;
    row["event_base"] = "restriction-height-2";
    row["n"] = n_list.back();
    row["tv_empirical"] = tv_distance(final_restriction_law, kesten_law);
    rep.rows.push_back(row);
  }

  rep.runtime_seconds = clock.seconds();
  return rep;
}

// ---------------------------------------------------------------------------
// Protected-node pipeline: the whole reduction chain in one run.
// ---------------------------------------------------------------------------

template <class R>
ExperimentReport run_protected_pipeline_check(const OffspringLaw<R>& p, std::uint64_t samples,
                                              RngHandle handle,
                                              const ExperimentOptions& opts = {},
                                              std::vector<std::int64_t> n_list = {2, 5, 10},
                                              std::vector<std::uint64_t> accepted = {}) {
  detail::Stopwatch clock;
  ExperimentReport rep;
  rep.name = "protected-pipeline";
  rep.parameters = {{"law", detail::law_to_json(p)}, {"samples", samples},
                    {"seed", handle.seed},           {"stream", handle.stream},
                    {"workers", opts.workers},       {"arith", arith<R>::name}};

  // stage 1: derived laws
  OffspringLaw<R> core_law = reduced_law(p);
  MarkFunction<R> qprot = protected_mark_function(p);
  rep.add_check("stage laws: reduced law critical", core_law.is_critical(),
                "mean=" + format_number(core_law.mean()));
  bool qrange = true;
  for (std::int32_t k = 0; k <= p.max_degree(); ++k)
    if (qprot.q(k) < R(0) || qprot.q(k) > R(1)) qrange = false;
  rep.add_check("stage laws: mark function within [0,1]", qrange, "");

  // stage 2: series gates
  rep.add_gate(protected_series_gate(p, opts.gate_size));
  rep.add_gate(mark_series_gate(core_law, qprot, opts.gate_size));
  rep.add_gate(protected_identity_gate(p, opts.series_order));
  if (!rep.pass) {
    rep.runtime_seconds = clock.seconds();
    return rep;
  }

  // stage 3: sampled distribution equality of the marked-core count and the
  // protected count of the conditioned tree
  {
    const std::size_t cells = 11;  // 0..9 and >= 10
    struct Collector {
      std::vector<std::uint64_t> counts;
      std::uint64_t overflow = 0;
    };
    DiscreteSampler off(p.to_float());
    DiscreteSampler core_sampler(core_law.to_float());
    auto wsamplers = graft_count_samplers(p);
    auto a_parts = detail::parallel_collect<Collector>(
        samples, handle, opts.workers, [&](Rng& rng, std::uint64_t want, Collector& c) {
          c.counts.assign(cells, 0);
          for (std::uint64_t got = 0; got < want;) {
            auto d = sample_gw(off, opts.node_cap, rng);
            // a capped draw has > 10^4 vertices; its protected count exceeds
            // the last cell with overwhelming probability (a tree of that
            // size with fewer than 10 protected vertices has probability
            // below 2^-1000), so it lands in the >= 10 cell
            if (d.overflow) {
              ++c.overflow;
              ++c.counts[cells - 1];
              ++got;
              continue;
            }
            if (d.tree->degree(0) == 0) continue;  // condition on a non-leaf root
            std::size_t a = protected_count(*d.tree);
            ++c.counts[std::min<std::size_t>(a, cells - 1)];
            ++got;
          }
        });
    auto m_parts = detail::parallel_collect<Collector>(
        samples, handle.with_stream(handle.stream + 50), opts.workers,
        [&](Rng& rng, std::uint64_t want, Collector& c) {
          c.counts.assign(cells, 0);
          for (std::uint64_t got = 0; got < want; ++got) {
            auto d = sample_leaf_graft(core_sampler, wsamplers, opts.node_cap, rng);
            if (d.overflow) {
              ++c.overflow;
              ++c.counts[cells - 1];
              continue;
            }
            ++c.counts[std::min<std::size_t>(d.sample->core_marks.size(), cells - 1)];
          }
        });
    std::vector<std::uint64_t> a_counts(cells, 0), m_counts(cells, 0);
    for (const auto& part : a_parts)
      for (std::size_t i = 0; i < cells; ++i) a_counts[i] += part.counts[i];
    for (const auto& part : m_parts)
      for (std::size_t i = 0; i < cells; ++i) m_counts[i] += part.counts[i];
    for (std::size_t i = 0; i < cells; ++i) {
      json row;
      row["cell"] = i + 1 < cells ? std::to_string(i) : (">=" + std::to_string(cells - 1));
      row["protected_of_conditioned"] = a_counts[i];
      row["marked_core"] = m_counts[i];
      rep.rows.push_back(row);
    }
    auto chi = chi_square_two_sample(a_counts, m_counts, opts.min_expected);
    rep.add_check("stage equality: two-sample chi-square p-value > alpha",
                  chi.p_value > opts.chi_square_alpha,
                  "stat=" + std::to_string(chi.statistic) + " df=" + std::to_string(chi.df) +
                      " p=" + std::to_string(chi.p_value));
  }

  // stage 4: local limit under protected-count conditioning
  if (accepted.empty())
    accepted.assign(n_list.size(), std::max<std::uint64_t>(samples / 20, 2000));
  auto local = run_local_limit_check<R>(p, std::nullopt, ConditionTarget::protected_count,
                                        n_list, accepted, handle.with_stream(handle.stream + 90),
                                        opts);
  for (auto& g : local.gates) rep.add_gate(std::move(g));
  for (auto& c : local.checks) rep.add_check("stage local-limit: " + c.name, c.pass, c.detail);
  for (const auto& row : local.rows) rep.rows.push_back(row);

  rep.runtime_seconds = clock.seconds();
  return rep;
}

}  // namespace gwlab
