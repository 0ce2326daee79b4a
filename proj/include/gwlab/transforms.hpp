#pragma once

#include <algorithm>
#include <cstdint>
#include <set>
#include <stdexcept>
#include <vector>

#include "gwlab/tree.hpp"

namespace gwlab {

// Children of u or of one of its ancestors that come after u in the
// lexicographic order; exactly the vertices whose fringe subtrees are still
// pending when a depth-first traversal stands at u.
inline std::vector<std::size_t> boundary_after_at(const Tree& t, std::size_t u,
                                                  const std::vector<std::int32_t>& sizes,
                                                  const std::vector<std::int32_t>& parents,
                                                  std::size_t stop_root = 0) {
  std::vector<std::size_t> out;
  std::size_t c = u + 1;
  for (std::int32_t k = 0; k < t.degree(u); ++k) {
    out.push_back(c);
    c += static_cast<std::size_t>(sizes[c]);
  }
  std::size_t w = u;
  while (w != stop_root) {
    std::size_t pw = static_cast<std::size_t>(parents[w]);
    std::size_t sib = w + static_cast<std::size_t>(sizes[w]);
    std::size_t end = pw + static_cast<std::size_t>(sizes[pw]);
    while (sib < end) {
      out.push_back(sib);
      sib += static_cast<std::size_t>(sizes[sib]);
    }
    w = pw;
  }
  return out;
}

inline std::set<Address> boundary_after(const Tree& t, const Address& u) {
  auto idx = t.index_of(u);
  if (!idx) throw TreeError("boundary_after: address not in tree");
  auto sizes = t.subtree_sizes();
  auto parents = t.parents();
  std::set<Address> out;
  for (std::size_t i : boundary_after_at(t, *idx, sizes, parents)) out.insert(t.address_of(i));
  return out;
}

// Collapse a non-empty subset of vertices onto a tree with exactly
// Card(subset) vertices: the root absorbs the smallest selected vertex, its
// children are the pending boundary vertices whose fringes still hold a
// selection, and the construction recurses into those fringes.
//
// Iterative with an explicit frontier; selected vertices arrive as sorted
// preorder indices, and "fringe contains a selection" is a range query on
// that sorted list.
inline Tree subset_to_tree_indices(const Tree& t, const std::vector<std::size_t>& sorted_subset) {
  if (sorted_subset.empty()) throw TreeError("subset_to_tree: empty subset");
  auto sizes = t.subtree_sizes();
  auto parents = t.parents();
  auto has_selected = [&](std::size_t lo, std::size_t hi) {  // any selected index in [lo, hi)
    auto it = std::lower_bound(sorted_subset.begin(), sorted_subset.end(), lo);
    return it != sorted_subset.end() && *it < hi;
  };
  std::vector<std::int32_t> out_degrees;
  out_degrees.reserve(sorted_subset.size());
  std::vector<std::size_t> frontier{0};
  while (!frontier.empty()) {
    std::size_t r = frontier.back();
    frontier.pop_back();
    auto it = std::lower_bound(sorted_subset.begin(), sorted_subset.end(), r);
    std::size_t u0 = *it;  // smallest selected vertex in this fringe
    std::vector<std::size_t> kids;
    for (std::size_t v : boundary_after_at(t, u0, sizes, parents, r))
      if (has_selected(v, v + static_cast<std::size_t>(sizes[v]))) kids.push_back(v);
    out_degrees.push_back(static_cast<std::int32_t>(kids.size()));
    for (auto k = kids.rbegin(); k != kids.rend(); ++k) frontier.push_back(*k);
  }
  if (out_degrees.size() != sorted_subset.size())
    throw TreeError("subset_to_tree: output size does not match the subset");
  return Tree::from_degrees(std::move(out_degrees));
}

inline Tree subset_to_tree(const Tree& t, const std::set<Address>& subset) {
  std::vector<std::size_t> idx;
  idx.reserve(subset.size());
  for (const auto& u : subset) {
    auto i = t.index_of(u);
    if (!i) throw TreeError("subset_to_tree: address " + format_address(u) + " not in tree");
    idx.push_back(*i);
  }
  std::sort(idx.begin(), idx.end());
  return subset_to_tree_indices(t, idx);
}

// The tree with all leaves removed; requires a non-leaf root.
inline Tree strip_leaves(const Tree& t) {
  if (t.size() == 1)
    throw TreeError("strip_leaves: the single-vertex tree has no internal vertices");
  std::vector<std::size_t> internal;
  for (std::size_t i = 0; i < t.size(); ++i)
    if (!t.is_leaf(i)) internal.push_back(i);
  return subset_to_tree_indices(t, internal);
}

}  // namespace gwlab
