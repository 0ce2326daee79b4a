#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <vector>

#include "gwlab/laws.hpp"
#include "gwlab/tree.hpp"

namespace gwlab {

struct EnumerationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <class R>
struct WeightedTree {
  Tree tree;
  R prob;  // product of offspring weights over the vertices
};

// Every tree with degrees in support(p) and at most n_max vertices, with its
// exact GW probability. Trees are produced by preorder degree-sequence
// extension, so the output is unique by construction and sorted in degree
// sequence order.
template <class R>
std::vector<WeightedTree<R>> enumerate_trees(const OffspringLaw<R>& p, std::size_t n_max,
                                             std::size_t entry_budget = 10'000'000) {
  std::vector<WeightedTree<R>> out;
  std::vector<std::int32_t> seq;
  auto step = [&](auto&& self, std::size_t open, const R& prob) -> void {
    if (open == 0) {
      out.push_back({Tree::from_valid_degrees(seq), prob});
      if (out.size() > entry_budget)
        throw EnumerationError("enumerate_trees: entry budget exceeded");
      return;
    }
    if (seq.size() + open > n_max) return;  // cannot close within the size bound
    for (const auto& [k, w] : p.weights()) {
      seq.push_back(k);
      self(self, open + static_cast<std::size_t>(k) - 1, prob * w);
      seq.pop_back();
    }
  };
  step(step, 1, R(1));
  return out;
}

template <class R>
R total_mass(const std::vector<WeightedTree<R>>& table) {
  R s(0);
  for (const auto& e : table) s += e.prob;
  return s;
}

// Coefficients of prod_{u in t, u != skipped} ((1 - q(k_u)) + q(k_u) x):
// the exact law of the number of marked vertices of the fixed tree t
// (optionally excluding one vertex).
template <class R>
std::vector<R> mark_count_polynomial(const Tree& t, const MarkFunction<R>& q,
                                     std::ptrdiff_t skip_index = -1) {
  std::vector<R> poly{R(1)};
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (static_cast<std::ptrdiff_t>(i) == skip_index) continue;
    R qi = q.q(t.degree(i));
    std::vector<R> next(poly.size() + 1, R(0));
    for (std::size_t j = 0; j < poly.size(); ++j) {
      next[j] += poly[j] * (R(1) - qi);
      next[j + 1] += poly[j] * qi;
    }
    poly = std::move(next);
  }
  while (poly.size() > 1 && poly.back() == R(0)) poly.pop_back();
  return poly;
}

// Joint table P(M = m, Card = c) over all trees with Card <= n_max, derived
// purely from enumeration; ground truth for the series gates.
template <class R>
std::vector<std::vector<R>> enumerated_mark_table(const OffspringLaw<R>& p,
                                                  const MarkFunction<R>& q,
                                                  std::size_t n_max) {
  std::vector<std::vector<R>> table(n_max + 1);
  for (std::size_t c = 0; c <= n_max; ++c) table[c].assign(c + 1, R(0));
  for (const auto& e : enumerate_trees(p, n_max)) {
    auto poly = mark_count_polynomial(e.tree, q);
    auto& row = table[e.tree.size()];
    for (std::size_t m = 0; m < poly.size(); ++m) row[m] += e.prob * poly[m];
  }
  return table;
}

// Joint table P(A = a, Card = c) by direct protected-node counting.
template <class R>
std::vector<std::vector<R>> enumerated_protected_table(const OffspringLaw<R>& p,
                                                       std::size_t n_max) {
  std::vector<std::vector<R>> table(n_max + 1);
  for (std::size_t c = 0; c <= n_max; ++c) table[c].assign(c + 1, R(0));
  for (const auto& e : enumerate_trees(p, n_max))
    table[e.tree.size()][protected_count(e.tree)] += e.prob;
  return table;
}

// P(tree = t) under the GW law: product of the offspring weights.
template <class R>
R tree_probability(const OffspringLaw<R>& p, const Tree& t) {
  R out(1);
  for (std::size_t i = 0; i < t.size(); ++i) {
    R w = p.pmf(t.degree(i));
    if (!(w > R(0))) return R(0);
    out *= w;
  }
  return out;
}

}  // namespace gwlab
