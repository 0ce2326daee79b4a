// Command-line front end: law validation, samplers, the subset collapse,
// series oracles, and the statistical check harness.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gwlab/config.hpp"
#include "gwlab/experiments.hpp"
#include "gwlab/oracle.hpp"
#include "gwlab/samplers.hpp"
#include "gwlab/series.hpp"
#include "gwlab/transforms.hpp"
#include "gwlab/walk.hpp"

namespace {

using namespace gwlab;

struct Options {
  std::string kind;
  std::string law_path;
  std::string q_path;
  std::string out_path;
  std::string arith;
  std::string target = "m";
  std::uint64_t samples = 100000;
  std::uint64_t seed = 1;
  std::uint64_t stream = 0;
  std::uint64_t cap = 10000;
  std::vector<std::int64_t> n_values;
  std::size_t height = 4;
  std::size_t order = 64;
  int workers = 4;
  std::string tree_text;
  std::string subset_text;
  bool strip = false;
};

std::ostream& open_out(const Options& opt, std::ofstream& file) {
  if (opt.out_path.empty()) return std::cout;
  file.open(opt.out_path);
  if (!file) throw ConfigError("cannot open output file '" + opt.out_path + "'");
  return file;
}

LawConfig load_configs(const Options& opt) {
  if (opt.law_path.empty()) throw ConfigError("--law <file> is required");
  LawConfig cfg = load_law_config(opt.law_path);
  if (!opt.q_path.empty()) {
    std::ifstream in(opt.q_path);
    if (!in) throw ConfigError("cannot open mark config '" + opt.q_path + "'");
    nlohmann::json j;
    in >> j;
    merge_mark_config(cfg, j);
  }
  if (!opt.arith.empty()) {
    if (opt.arith != "exact" && opt.arith != "float")
      throw ConfigError("--arith must be exact or float");
    cfg.arith = opt.arith;
  }
  return cfg;
}

json address_json(const Address& a) {
  json out = json::array();
  for (auto x : a) out.push_back(x);
  return out;
}

template <class R>
int run_validate(const LawConfig& cfg) {
  auto p = build_offspring_law<R>(cfg);
  json out;
  out["arith"] = arith<R>::name;
  out["mean"] = format_number(p.mean());
  out["criticality"] = to_string(p.criticality());
  out["support"] = json::array();
  for (const auto& [k, w] : p.weights())
    out["support"].push_back({{"degree", k}, {"prob", format_number(w)}});
  if (cfg.has_q) {
    auto q = build_mark_function<R>(cfg);
    out["markable"] = has_markable_degree(p, q);
    out["gamma"] = format_number(mark_probability(p, q));
  }
  std::cout << out.dump(2) << "\n";
  return 0;
}

template <class R>
int run_sample(const Options& opt, const LawConfig& cfg) {
  auto p = build_offspring_law<R>(cfg);
  DiscreteSampler off(p.to_float());
  Rng rng({opt.seed, opt.stream});
  std::ofstream file;
  std::ostream& os = open_out(opt, file);
  json trailer;
  trailer["kind"] = opt.kind;
  trailer["seed"] = opt.seed;
  trailer["stream"] = opt.stream;

  if (opt.kind == "gw") {
    std::uint64_t overflow = 0, nodes = 0;
    for (std::uint64_t i = 0; i < opt.samples; ++i) {
      auto d = sample_gw(off, opt.cap, rng);
      nodes += d.nodes;
      if (d.overflow) {
        ++overflow;
        continue;
      }
      os << serialize_tree(*d.tree) << "\n";
    }
    trailer["draws"] = opt.samples;
    trailer["overflow"] = overflow;
    trailer["overflow_rate"] = static_cast<double>(overflow) / static_cast<double>(opt.samples);
    trailer["nodes_generated"] = nodes;
  } else if (opt.kind == "kesten") {
    p.require_critical("sample kesten");
    DiscreteSampler spine(size_biased(p.to_float()));
    for (std::uint64_t i = 0; i < opt.samples; ++i) {
      auto slice = sample_kesten(off, spine, opt.height, rng);
      json rec;
      rec["degrees"] = json::array();
      for (const auto& [u, k] : slice.restriction.degrees)
        rec["degrees"].push_back({address_json(u), k});
      rec["frontier"] = json::array();
      for (const auto& u : slice.restriction.frontier) rec["frontier"].push_back(address_json(u));
      rec["spine"] = json::array();
      for (const auto& u : slice.spine) rec["spine"].push_back(address_json(u));
      os << rec.dump() << "\n";
    }
    trailer["height"] = opt.height;
  } else if (opt.kind == "conditioned") {
    if (opt.n_values.empty()) throw ConfigError("sample conditioned needs --n");
    std::size_t n = static_cast<std::size_t>(opt.n_values.front());
    RejectionBudget budget{opt.cap, 100'000'000};
    std::uint64_t attempts = 0, overflow = 0, aborted = 0, failures = 0;
    if (opt.target == "m") {
      auto q = cfg.has_q ? build_mark_function<R>(cfg) : MarkFunction<R>::constant(R(1));
      require_markable(p, q);
      auto series = mark_count_series(p, q, n + 2);
      if (!(series.probs[n] > arith<R>::positive_threshold())) {
        int d = span_minus_one(series);
        throw ConfigError("target " + std::to_string(n) +
                          " outside the mark-count support (span of M-1 is " +
                          std::to_string(d) + ")");
      }
      MarkTable qt(q.to_float(), p.max_degree());
      for (std::uint64_t i = 0; i < opt.samples; ++i) {
        auto d = sample_conditioned_marks(off, qt, n, budget, rng);
        attempts += d.attempts;
        overflow += d.overflow_draws;
        aborted += d.aborted_draws;
        if (d.sample)
          os << serialize_tree(d.sample->tree) << "\n";
        else
          ++failures;
      }
    } else if (opt.target == "a") {
      p.require_critical("sample conditioned on the protected count");
      for (std::uint64_t i = 0; i < opt.samples; ++i) {
        auto d = sample_conditioned_protected(off, n, budget, rng);
        attempts += d.attempts;
        overflow += d.overflow_draws;
        aborted += d.aborted_draws;
        if (d.sample)
          os << serialize_tree(d.sample->tree) << "\n";
        else
          ++failures;
      }
    } else {
      throw ConfigError("--target must be m or a");
    }
    trailer["n"] = n;
    trailer["target"] = opt.target;
    trailer["attempts"] = attempts;
    trailer["acceptance_rate"] =
        static_cast<double>(opt.samples - failures) / static_cast<double>(attempts);
    trailer["overflow_draws"] = overflow;
    trailer["aborted_draws"] = aborted;
    trailer["budget_failures"] = failures;
  } else if (opt.kind == "hat") {
    p.require_critical("sample hat");
    auto core_law = reduced_law(p);
    DiscreteSampler core(core_law.to_float());
    auto ws = graft_count_samplers(p);
    std::uint64_t overflow = 0, marks = 0;
    for (std::uint64_t i = 0; i < opt.samples; ++i) {
      auto d = sample_leaf_graft(core, ws, opt.cap, rng);
      if (d.overflow) {
        ++overflow;
        continue;
      }
      marks += d.sample->core_marks.size();
      os << serialize_tree(d.sample->tree) << "\n";
    }
    trailer["overflow"] = overflow;
    trailer["mean_marks"] =
        static_cast<double>(marks) / static_cast<double>(opt.samples - overflow);
  } else {
    throw ConfigError("sample kind must be gw, kesten, conditioned, or hat");
  }
  os << trailer.dump() << "\n";
  return 0;
}

int run_phi(const Options& opt) {
  if (opt.tree_text.empty()) throw ConfigError("phi needs --tree \"<degree sequence>\"");
  Tree t = parse_tree(opt.tree_text);
  Tree out = Tree::leaf();
  if (opt.strip) {
    out = strip_leaves(t);
  } else {
    if (opt.subset_text.empty())
      throw ConfigError("phi needs --subset \"i,j,...\" (preorder indices) or --strip-leaves");
    std::vector<std::size_t> subset;
    std::stringstream ss(opt.subset_text);
    std::string item;
    while (std::getline(ss, item, ',')) {
      std::size_t v = std::stoull(item);
      if (v >= t.size()) throw ConfigError("subset index " + item + " out of range");
      subset.push_back(v);
    }
    std::sort(subset.begin(), subset.end());
    subset.erase(std::unique(subset.begin(), subset.end()), subset.end());
    out = subset_to_tree_indices(t, subset);
  }
  std::cout << serialize_tree(out) << "\n";
  return 0;
}

template <class R>
int run_series(const Options& opt, const LawConfig& cfg) {
  auto p = build_offspring_law<R>(cfg);
  SeriesDist<R> s;
  if (opt.kind == "card") {
    s = size_series(p, opt.order, /*verify=*/true);
  } else if (opt.kind == "m") {
    auto q = cfg.has_q ? build_mark_function<R>(cfg) : MarkFunction<R>::constant(R(1));
    s = mark_count_series(p, q, opt.order, /*verify=*/true);
  } else if (opt.kind == "a") {
    s = protected_count_series(p, opt.order, /*verify=*/true);
  } else {
    throw ConfigError("series kind must be m, a, or card");
  }
  std::ofstream file;
  std::ostream& os = open_out(opt, file);
  os << "n,probability,probability_rational,tail_bound\n";
  for (std::size_t n = 0; n < s.probs.size(); ++n) {
    os << n << "," << to_double(s.probs[n]) << ",";
    if (arith<R>::exact) os << format_number(s.probs[n]);
    os << "," << (n + 1 == s.probs.size() ? to_double(s.tail) : 0.0) << "\n";
  }
  return 0;
}

template <class R>
int run_check(const Options& opt, const LawConfig& cfg) {
  auto p = build_offspring_law<R>(cfg);
  std::optional<MarkFunction<R>> q;
  if (cfg.has_q) q = build_mark_function<R>(cfg);
  ExperimentOptions eopts;
  eopts.node_cap = opt.cap;
  eopts.workers = opt.workers;
  RngHandle handle{opt.seed, opt.stream};

  ExperimentReport rep;
  if (opt.kind == "phi-law") {
    if (!q) throw ConfigError("check phi-law needs a mark function (\"q\" in the law file)");
    rep = run_collapse_law_check(p, *q, opt.samples, handle, eopts);
  } else if (opt.kind == "hat-tau") {
    rep = run_graft_identity_check(p, opt.samples, handle, eopts);
  } else if (opt.kind == "ratio") {
    RatioMode mode = opt.target == "card" ? RatioMode::size
                     : opt.target == "a"  ? RatioMode::protected_count
                                          : RatioMode::marks;
    std::int64_t n_max = opt.n_values.empty() ? 201 : opt.n_values.front();
    rep = run_ratio_check(p, q, mode, n_max, eopts);
  } else if (opt.kind == "local-limit") {
    ConditionTarget target =
        opt.target == "a" ? ConditionTarget::protected_count : ConditionTarget::marks;
    std::vector<std::int64_t> ns = opt.n_values;
    if (ns.empty()) ns = target == ConditionTarget::marks ? std::vector<std::int64_t>{5, 21, 51}
                                                          : std::vector<std::int64_t>{2, 5, 10};
    std::vector<std::uint64_t> accepted(ns.size(), opt.samples);
    rep = run_local_limit_check(p, q, target, ns, accepted, handle, eopts);
  } else if (opt.kind == "protected") {
    rep = run_protected_pipeline_check(p, opt.samples, handle, eopts);
  } else {
    throw ConfigError("check kind must be phi-law, hat-tau, ratio, local-limit, or protected");
  }

  std::ofstream file;
  std::ostream& os = open_out(opt, file);
  bool csv = opt.out_path.size() > 4 &&
             opt.out_path.compare(opt.out_path.size() - 4, 4, ".csv") == 0;
  if (csv)
    rep.write_csv(os);
  else
    os << rep.to_json().dump(2) << "\n";
  for (const auto& c : rep.checks)
    std::cerr << (c.pass ? "[pass] " : "[FAIL] ") << c.name
              << (c.detail.empty() ? "" : ": " + c.detail) << "\n";
  return rep.pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Critical Galton-Watson tree laboratory"};
  app.require_subcommand(1);
  Options opt;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--law", opt.law_path, "law config JSON")->required();
    cmd->add_option("--q", opt.q_path, "mark function JSON (overrides the law file's q)");
    cmd->add_option("--arith", opt.arith, "exact|float (overrides the config)");
    cmd->add_option("--out", opt.out_path, "output path (.csv for tables)");
  };

  auto* validate = app.add_subcommand("validate-law", "validate an offspring law config");
  add_common(validate);

  auto* sample = app.add_subcommand("sample", "draw trees: gw | kesten | conditioned | hat");
  sample->add_option("kind", opt.kind, "gw|kesten|conditioned|hat")->required();
  add_common(sample);
  sample->add_option("--samples", opt.samples, "number of draws");
  sample->add_option("--seed", opt.seed, "RNG seed");
  sample->add_option("--stream", opt.stream, "RNG stream id");
  sample->add_option("--height", opt.height, "slice height for kesten");
  sample->add_option("--n", opt.n_values, "conditioning target");
  sample->add_option("--target", opt.target, "m|a for conditioned sampling");
  sample->add_option("--cap", opt.cap, "node cap per draw");

  auto* phi = app.add_subcommand("phi", "collapse a vertex subset onto a tree");
  phi->add_option("--tree", opt.tree_text, "preorder degree sequence")->required();
  phi->add_option("--subset", opt.subset_text, "comma-separated preorder indices");
  phi->add_flag("--strip-leaves", opt.strip, "collapse the internal vertices");

  auto* series = app.add_subcommand("series", "count-distribution oracles: m | a | card");
  series->add_option("kind", opt.kind, "m|a|card")->required();
  add_common(series);
  series->add_option("--order", opt.order, "truncation order");

  auto* check = app.add_subcommand(
      "check", "verification runs: phi-law | hat-tau | ratio | local-limit | protected");
  check->add_option("kind", opt.kind, "phi-law|hat-tau|ratio|local-limit|protected")->required();
  add_common(check);
  check->add_option("--samples", opt.samples, "samples (accepted draws per n for local-limit)");
  check->add_option("--seed", opt.seed, "RNG seed");
  check->add_option("--stream", opt.stream, "RNG stream id");
  check->add_option("--n", opt.n_values, "conditioning targets / ratio n_max");
  check->add_option("--target", opt.target, "m|a|card");
  check->add_option("--cap", opt.cap, "node cap per draw");
  check->add_option("--workers", opt.workers, "sampling worker count");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand(phi)) return run_phi(opt);
    LawConfig cfg = load_configs(opt);
    bool exact = cfg.arith != "float";
    if (app.got_subcommand(validate))
      return exact ? run_validate<Rational>(cfg) : run_validate<double>(cfg);
    if (app.got_subcommand(sample))
      return exact ? run_sample<Rational>(opt, cfg) : run_sample<double>(opt, cfg);
    if (app.got_subcommand(series))
      return exact ? run_series<Rational>(opt, cfg) : run_series<double>(opt, cfg);
    return exact ? run_check<Rational>(opt, cfg) : run_check<double>(opt, cfg);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const NumberError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const LawError& e) {
    std::cerr << "law error: " << e.what() << "\n";
    return 2;
  } catch (const TreeError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 2;
  } catch (const ExperimentError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const SeriesError& e) {
    std::cerr << "oracle error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
