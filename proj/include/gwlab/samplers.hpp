#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "gwlab/laws.hpp"
#include "gwlab/rng.hpp"
#include "gwlab/transforms.hpp"
#include "gwlab/tree.hpp"

namespace gwlab {

struct SamplerError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// GW trees
// ---------------------------------------------------------------------------

// A depth-first GW draw is exactly an i.i.d. degree sequence run until the
// walk sum hits -1; the node cap makes the sampler total, and an overflow is
// a documented outcome (callers surface its frequency), not an exception.
struct GwDraw {
  std::optional<Tree> tree;
  std::uint64_t nodes = 0;
  bool overflow = false;
};

inline GwDraw sample_gw(const DiscreteSampler& offspring, std::uint64_t node_cap, Rng& rng) {
  GwDraw out;
  std::vector<std::int32_t> degrees;
  std::int64_t open = 1;
  while (open > 0) {
    if (degrees.size() >= node_cap) {
      out.nodes = degrees.size();
      out.overflow = true;
      return out;
    }
    std::int32_t k = offspring.draw(rng);
    degrees.push_back(k);
    open += k - 1;
  }
  out.nodes = degrees.size();
  out.tree = Tree::from_valid_degrees(std::move(degrees));
  return out;
}

// ---------------------------------------------------------------------------
// Marks
// ---------------------------------------------------------------------------

struct MarkedTree {
  Tree tree;
  std::vector<std::size_t> marks;  // sorted preorder indices

  std::size_t mark_count() const { return marks.size(); }
  std::set<Address> mark_addresses() const {
    std::set<Address> out;
    for (std::size_t i : marks) out.insert(tree.address_of(i));
    return out;
  }
};

inline MarkedTree sample_marks(const Tree& t, const MarkTable& q, Rng& rng) {
  MarkedTree out{t, {}};
  for (std::size_t i = 0; i < t.size(); ++i)
    if (rng.bernoulli(q(t.degree(i)))) out.marks.push_back(i);
  return out;
}

// Collapse the marked vertices onto a tree of their own; callers must have
// conditioned on at least one mark.
inline Tree collapse_marked(const MarkedTree& mt) {
  if (mt.marks.empty())
    throw TreeError("collapse_marked: no marked vertices (condition on a mark first)");
  return subset_to_tree_indices(mt.tree, mt.marks);
}

// ---------------------------------------------------------------------------
// Size-biased (Kesten) tree, truncated at height h
// ---------------------------------------------------------------------------

struct KestenSlice {
  Restriction restriction;
  std::vector<Address> spine;  // spine vertices at depths 1..h
};

// Does the truncated size-biased tree lie in the ball T(t, x)? Decidable
// exactly when every vertex of the base other than x sits strictly below the
// cut (its degree is then recorded), which needs h > height(t) - 1 plus the
// leaf itself at depth <= h.
inline bool slice_ball_member(const KestenSlice& s, const BallEvent& e) {
  const Tree& t = e.base;
  std::vector<Address> addr(t.size());
  std::size_t h = 0;
  for (const auto& v : s.restriction.frontier) h = std::max(h, v.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    addr[i] = t.address_of(i);
    if (i != e.leaf_index && addr[i].size() >= h)
      throw SamplerError("slice_ball_member: slice height too small for the event");
  }
  const Address& x = addr[e.leaf_index];
  if (x.size() > h) throw SamplerError("slice_ball_member: slice height too small for the event");
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (i == e.leaf_index) continue;
    auto it = s.restriction.degrees.find(addr[i]);
    if (it == s.restriction.degrees.end() || it->second != t.degree(i)) return false;
  }
  if (s.restriction.degrees.count(x) == 0 && s.restriction.frontier.count(x) == 0) return false;
  // no vertices outside t except under x
  auto under = [](const Address& v, const Address& stem) {
    return v.size() >= stem.size() && std::equal(stem.begin(), stem.end(), v.begin());
  };
  auto in_base = [&](const Address& v) {
    return std::find(addr.begin(), addr.end(), v) != addr.end();
  };
  for (const auto& [v, k] : s.restriction.degrees) {
    (void)k;
    if (!under(v, x) && !in_base(v)) return false;
  }
  for (const auto& v : s.restriction.frontier)
    if (!under(v, x) && !in_base(v)) return false;
  return true;
}

// Spine vertices reproduce with the size-biased law, all others with p; the
// spine child is uniform among the children. Off-spine subtrees are
// materialized only down to the cut, matching restrict_to_height semantics.
inline KestenSlice sample_kesten(const DiscreteSampler& offspring,
                                 const DiscreteSampler& size_biased_offspring, std::size_t h,
                                 Rng& rng) {
  KestenSlice out;
  auto grow_plain = [&](const Address& root) {
    std::vector<Address> stack{root};
    while (!stack.empty()) {
      Address u = std::move(stack.back());
      stack.pop_back();
      if (u.size() == h) {
        out.restriction.frontier.insert(u);
        continue;
      }
      std::int32_t k = offspring.draw(rng);
      out.restriction.degrees.emplace(u, k);
      for (std::int32_t i = k; i >= 1; --i) {
        Address child = u;
        child.push_back(i);
        stack.push_back(std::move(child));
      }
    }
  };
  Address spine{};
  for (std::size_t depth = 0; depth < h; ++depth) {
    std::int32_t k = size_biased_offspring.draw(rng);
    out.restriction.degrees.emplace(spine, k);
    std::int32_t pick = static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(k))) + 1;
    for (std::int32_t i = 1; i <= k; ++i) {
      if (i == pick) continue;
      Address child = spine;
      child.push_back(i);
      grow_plain(child);
    }
    spine.push_back(pick);
    out.spine.push_back(spine);
  }
  out.restriction.frontier.insert(spine);
  return out;
}

// ---------------------------------------------------------------------------
// Rejection-conditioned trees
// ---------------------------------------------------------------------------

struct RejectionBudget {
  std::uint64_t node_cap = 1'000'000;
  std::uint64_t attempt_cap = 100'000'000;
};

struct ConditionedDraw {
  std::optional<MarkedTree> sample;
  std::uint64_t attempts = 0;        // draws consumed, including the accepted one
  std::uint64_t overflow_draws = 0;  // hit the node cap
  std::uint64_t aborted_draws = 0;   // statistic exceeded the target early
};

// Draw from dist(tree | M = n) by rejection. Generation aborts as soon as the
// running mark count exceeds n; such draws are certain rejections, so the
// accepted law is untouched.
inline ConditionedDraw sample_conditioned_marks(const DiscreteSampler& offspring,
                                                const MarkTable& q, std::size_t n,
                                                const RejectionBudget& budget, Rng& rng) {
  ConditionedDraw out;
  while (out.attempts < budget.attempt_cap) {
    ++out.attempts;
    std::vector<std::int32_t> degrees;
    std::vector<std::size_t> marks;
    std::int64_t open = 1;
    bool bad = false;
    while (open > 0) {
      if (degrees.size() >= budget.node_cap) {
        ++out.overflow_draws;
        bad = true;
        break;
      }
      std::int32_t k = offspring.draw(rng);
      degrees.push_back(k);
      open += k - 1;
      if (rng.bernoulli(q(k))) {
        marks.push_back(degrees.size() - 1);
        if (marks.size() > n) {
          ++out.aborted_draws;
          bad = true;
          break;
        }
      }
    }
    if (bad) continue;
    if (marks.size() == n) {
      out.sample = MarkedTree{Tree::from_valid_degrees(std::move(degrees)), std::move(marks)};
      return out;
    }
  }
  return out;
}

// Draw from dist(tree | A = n) by rejection. A vertex's protected status is
// settled once all its children have degrees, so the generator keeps a
// confirmed-protected counter and aborts when it exceeds n.
inline ConditionedDraw sample_conditioned_protected(const DiscreteSampler& offspring,
                                                    std::size_t n, const RejectionBudget& budget,
                                                    Rng& rng) {
  ConditionedDraw out;
  struct Frame {
    std::int32_t remaining;
    bool leaf_child;
  };
  std::vector<Frame> stack;
  while (out.attempts < budget.attempt_cap) {
    ++out.attempts;
    std::vector<std::int32_t> degrees;
    stack.clear();
    std::size_t confirmed = 0;
    bool bad = false;
    std::int64_t open = 1;
    while (open > 0) {
      if (degrees.size() >= budget.node_cap) {
        ++out.overflow_draws;
        bad = true;
        break;
      }
      std::int32_t k = offspring.draw(rng);
      degrees.push_back(k);
      open += k - 1;
      if (!stack.empty() && k == 0) stack.back().leaf_child = true;
      if (k > 0) {
        stack.push_back({k, false});
      } else {
        // closing cascade: pop every frame whose children are now complete
        while (!stack.empty() && --stack.back().remaining == 0) {
          if (!stack.back().leaf_child) ++confirmed;
          stack.pop_back();
          if (confirmed > n) break;
        }
        if (confirmed > n) {
          ++out.aborted_draws;
          bad = true;
          break;
        }
      }
    }
    if (bad) continue;
    if (confirmed == n) {
      out.sample = MarkedTree{Tree::from_valid_degrees(std::move(degrees)), {}};
      return out;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// The marked depth-first walk
// ---------------------------------------------------------------------------

struct WalkDraw {
  bool accepted = false;  // N <= G
  bool censored = false;  // horizon hit before G
  std::uint64_t g = 0;
  std::uint64_t n_first_mark = 0;  // 0 when no mark fell before the stop
  std::int64_t xtilde = 0;         // meaningful when accepted
  std::int64_t y = 0;              // Binomial(xtilde, gamma), when accepted
};

inline WalkDraw sample_walk(const DiscreteSampler& offspring, const MarkTable& q, double gamma,
                            std::uint64_t horizon, Rng& rng) {
  WalkDraw out;
  std::int64_t sum = 0;
  for (std::uint64_t step = 1; step <= horizon; ++step) {
    std::int32_t x = offspring.draw(rng);
    bool marked = rng.bernoulli(q(x));
    sum += x - 1;
    if (marked && out.n_first_mark == 0) {
      out.n_first_mark = step;
      out.xtilde = 1 + sum;
    }
    if (sum == -1) {
      out.g = step;
      out.accepted = out.n_first_mark != 0;
      break;
    }
    if (out.n_first_mark != 0) break;  // outcome decided: mark fell strictly before G
  }
  if (out.g == 0 && out.n_first_mark == 0) {
    out.censored = true;
    return out;
  }
  if (out.accepted || (out.g == 0 && out.n_first_mark != 0)) {
    out.accepted = true;
    std::int64_t y = 0;
    for (std::int64_t i = 0; i < out.xtilde; ++i)
      if (rng.bernoulli(gamma)) ++y;
    out.y = y;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Rebuilding a tree from its leafless core by uniform leaf grafting
// ---------------------------------------------------------------------------

struct LeafGraftSample {
  Tree core;                             // draw from the reduced law
  Tree tree;                             // core with grafted leaves
  std::vector<std::size_t> core_marks;   // core vertices with no grafted leaves
  std::vector<std::size_t> tree_marks;   // the same vertices in tree coordinates
};

struct LeafGraftDraw {
  std::optional<LeafGraftSample> sample;
  std::uint64_t nodes = 0;
  bool overflow = false;
};

// One graft-count sampler per core degree; degrees outside the reduced
// support get a never-drawn placeholder so the table stays dense.
template <class R>
std::vector<DiscreteSampler> graft_count_samplers(const OffspringLaw<R>& p) {
  auto core = reduced_law(p);
  std::vector<DiscreteSampler> out;
  for (std::int32_t k = 0; k <= core.max_degree(); ++k) {
    DiscreteLaw<double> d;
    if (core.pmf(k) > R(0)) {
      auto w = graft_count_law(p, k);
      for (std::size_t n = 0; n < w.probs.size(); ++n)
        if (w.probs[n] > R(0)) d.weights.emplace_back(static_cast<std::int32_t>(n), to_double(w.probs[n]));
    } else {
      d.weights.emplace_back(0, 1.0);
    }
    out.emplace_back(d);
  }
  return out;
}

// Grafts W(u) leaves onto every core vertex u, placing the original children
// uniformly among the k + W slots (a uniform k-subset of slot positions,
// drawn by selection sampling). Vertices with W(u) = 0 are returned as marks;
// they are exactly the protected vertices of the rebuilt tree.
inline LeafGraftDraw sample_leaf_graft(const DiscreteSampler& core_offspring,
                                       const std::vector<DiscreteSampler>& graft_count_by_degree,
                                       std::uint64_t node_cap, Rng& rng) {
  LeafGraftDraw out;
  GwDraw core = sample_gw(core_offspring, node_cap, rng);
  out.nodes = core.nodes;
  if (core.overflow) {
    out.overflow = true;
    return out;
  }
  const Tree& c = *core.tree;
  LeafGraftSample s{c, Tree::leaf(), {}, {}};

  std::vector<std::int32_t> degrees;
  struct Frame {
    std::size_t core_node;     // current core vertex being expanded
    std::int32_t slots_left;   // grafted-tree child slots still to emit
    std::int32_t internal_left;
    std::size_t next_child;    // next core child (preorder index) to descend into
  };
  auto sizes = c.subtree_sizes();
  std::vector<Frame> stack;

  auto open_vertex = [&](std::size_t u) -> bool {
    std::int32_t k = c.degree(u);
    std::int32_t w = graft_count_by_degree[static_cast<std::size_t>(k)].draw(rng);
    if (w == 0) {
      s.core_marks.push_back(u);
      s.tree_marks.push_back(degrees.size());
    }
    degrees.push_back(k + w);
    if (degrees.size() > node_cap) return false;
    stack.push_back({u, k + w, k, u + 1});
    return true;
  };

  if (!open_vertex(0)) {
    out.overflow = true;
    return out;
  }
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.slots_left == 0) {
      stack.pop_back();
      continue;
    }
    // include the next core child in this slot with prob internal_left/slots_left
    bool internal = f.internal_left > 0 &&
                    rng.uniform01() * f.slots_left < static_cast<double>(f.internal_left);
    --f.slots_left;
    if (internal) {
      --f.internal_left;
      std::size_t child = f.next_child;
      f.next_child += static_cast<std::size_t>(sizes[child]);
      if (!open_vertex(child)) {
        out.overflow = true;
        return out;
      }
    } else {
      degrees.push_back(0);
      if (degrees.size() > node_cap) {
        out.overflow = true;
        return out;
      }
    }
  }
  s.tree = Tree::from_valid_degrees(std::move(degrees));
  out.nodes = s.tree.size();
  out.sample = std::move(s);
  return out;
}

}  // namespace gwlab
