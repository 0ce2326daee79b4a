#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace gwlab {

// A vertex address: child indices from the root, 1-based; {} is the root.
// std::vector's lexicographic order coincides with the order on addresses
// (proper ancestors first, otherwise first differing index decides).
using Address = std::vector<std::int32_t>;

struct TreeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline bool lex_less(const Address& u, const Address& v) { return u < v; }

inline std::set<Address> ancestors(const Address& u) {
  std::set<Address> out;
  for (std::size_t i = 0; i <= u.size(); ++i)
    out.insert(Address(u.begin(), u.begin() + static_cast<std::ptrdiff_t>(i)));
  return out;
}

inline std::string format_address(const Address& u) {
  if (u.empty()) return "<root>";
  std::string s;
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (i) s += '.';
    s += std::to_string(u[i]);
  }
  return s;
}

// Position (if any) at which a preorder out-degree sequence fails to be a
// tree: the running sum of (degree - 1) must stay > -1 strictly before the
// last entry and equal -1 at the end.
inline std::optional<std::string> degree_sequence_defect(
    const std::vector<std::int32_t>& degrees) {
  if (degrees.empty()) return "empty sequence";
  std::int64_t sum = 0;
  for (std::size_t i = 0; i < degrees.size(); ++i) {
    if (degrees[i] < 0) return "negative out-degree at position " + std::to_string(i);
    sum += degrees[i] - 1;
    if (sum == -1 && i + 1 < degrees.size())
      return "sequence closes early at position " + std::to_string(i);
  }
  if (sum != -1) return "sequence never closes (open slots remain at the end)";
  return std::nullopt;
}

// Finite ordered rooted tree, stored canonically as the preorder sequence of
// out-degrees. Immutable; all transforms return new trees.
class Tree {
 public:
  static Tree leaf() { return Tree(std::vector<std::int32_t>{0}); }

  static Tree from_degrees(std::vector<std::int32_t> degrees) {
    if (auto defect = degree_sequence_defect(degrees))
      throw TreeError("invalid tree: " + *defect);
    return Tree(std::move(degrees));
  }

  // Trusted constructor for callers that built the sequence structurally.
  static Tree from_valid_degrees(std::vector<std::int32_t> degrees) {
    return Tree(std::move(degrees));
  }

  const std::vector<std::int32_t>& degrees() const { return degrees_; }
  std::size_t size() const { return degrees_.size(); }
  std::int32_t degree(std::size_t i) const { return degrees_[i]; }
  bool is_leaf(std::size_t i) const { return degrees_[i] == 0; }

  // subtree_sizes()[i] = number of vertices in the fringe subtree above i.
  std::vector<std::int32_t> subtree_sizes() const {
    std::vector<std::int32_t> sizes(degrees_.size());
    std::vector<std::int32_t> stack;
    for (std::size_t j = degrees_.size(); j-- > 0;) {
      std::int32_t s = 1;
      for (std::int32_t c = 0; c < degrees_[j]; ++c) {
        s += stack.back();
        stack.pop_back();
      }
      sizes[j] = s;
      stack.push_back(s);
    }
    return sizes;
  }

  // parents()[i] = preorder index of the parent, -1 for the root.
  std::vector<std::int32_t> parents() const {
    std::vector<std::int32_t> par(degrees_.size(), -1);
    std::vector<std::pair<std::int32_t, std::int32_t>> stack;  // (node, pending children)
    for (std::size_t i = 0; i < degrees_.size(); ++i) {
      if (!stack.empty()) {
        par[i] = stack.back().first;
        if (--stack.back().second == 0) stack.pop_back();
      }
      if (degrees_[i] > 0) stack.emplace_back(static_cast<std::int32_t>(i), degrees_[i]);
    }
    return par;
  }

  Address address_of(std::size_t i) const {
    auto par = parents();
    std::vector<std::int32_t> rank(degrees_.size(), 0);
    std::vector<std::int32_t> emitted(degrees_.size(), 0);
    for (std::size_t j = 1; j <= i; ++j) rank[j] = ++emitted[static_cast<std::size_t>(par[j])];
    Address out;
    for (std::int32_t v = static_cast<std::int32_t>(i); v > 0; v = par[static_cast<std::size_t>(v)])
      out.push_back(rank[static_cast<std::size_t>(v)]);
    std::reverse(out.begin(), out.end());
    return out;
  }

  std::optional<std::size_t> index_of(const Address& u) const {
    auto sizes = subtree_sizes();
    std::size_t idx = 0;
    for (std::int32_t step : u) {
      if (step < 1 || step > degrees_[idx]) return std::nullopt;
      std::size_t child = idx + 1;
      for (std::int32_t s = 1; s < step; ++s) child += static_cast<std::size_t>(sizes[child]);
      idx = child;
    }
    return idx;
  }

  bool contains(const Address& u) const { return index_of(u).has_value(); }

  bool operator==(const Tree& o) const = default;
  bool operator<(const Tree& o) const { return degrees_ < o.degrees_; }

 private:
  explicit Tree(std::vector<std::int32_t> d) : degrees_(std::move(d)) {}
  std::vector<std::int32_t> degrees_;
};

inline std::string serialize_tree(const Tree& t) {
  std::string s;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (i) s += ' ';
    s += std::to_string(t.degree(i));
  }
  return s;
}

inline Tree parse_tree(std::string_view text) {
  std::vector<std::int32_t> degrees;
  std::istringstream in{std::string(text)};
  long long v;
  while (in >> v) {
    if (v < 0) throw TreeError("parse error at position " + std::to_string(degrees.size()) +
                               ": negative out-degree");
    degrees.push_back(static_cast<std::int32_t>(v));
  }
  if (!in.eof()) {
    std::string junk;
    in.clear();
    in >> junk;
    throw TreeError("parse error at position " + std::to_string(degrees.size()) +
                    ": unexpected token '" + junk + "'");
  }
  if (auto defect = degree_sequence_defect(degrees))
    throw TreeError("parse error: " + *defect);
  return Tree::from_valid_degrees(std::move(degrees));
}

inline std::vector<std::size_t> leaf_indices(const Tree& t) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < t.size(); ++i)
    if (t.is_leaf(i)) out.push_back(i);
  return out;
}

inline std::set<Address> leaves(const Tree& t) {
  std::set<Address> out;
  for (std::size_t i : leaf_indices(t)) out.insert(t.address_of(i));
  return out;
}

inline Tree fringe_at(const Tree& t, std::size_t i, const std::vector<std::int32_t>& sizes) {
  auto first = t.degrees().begin() + static_cast<std::ptrdiff_t>(i);
  return Tree::from_valid_degrees(
      std::vector<std::int32_t>(first, first + sizes[i]));
}

inline Tree fringe(const Tree& t, const Address& u) {
  auto idx = t.index_of(u);
  if (!idx) throw TreeError("fringe: address " + format_address(u) + " not in tree");
  return fringe_at(t, *idx, t.subtree_sizes());
}

// Number of protected vertices: internal vertices none of whose children is
// a leaf.
inline std::size_t protected_count(const Tree& t) {
  auto sizes = t.subtree_sizes();
  std::size_t count = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t.is_leaf(i)) continue;
    bool leaf_child = false;
    std::size_t c = i + 1;
    for (std::int32_t k = 0; k < t.degree(i); ++k) {
      if (t.is_leaf(c)) {
        leaf_child = true;
        break;
      }
      c += static_cast<std::size_t>(sizes[c]);
    }
    if (!leaf_child) ++count;
  }
  return count;
}

// Grafting at a leaf replaces that leaf's single 0 entry by the whole
// preorder sequence of the grafted tree.
inline Tree graft_at(const Tree& t, std::size_t leaf_index, const Tree& t2) {
  if (leaf_index >= t.size() || !t.is_leaf(leaf_index))
    throw TreeError("graft: index " + std::to_string(leaf_index) + " is not a leaf");
  std::vector<std::int32_t> out;
  out.reserve(t.size() + t2.size() - 1);
  out.insert(out.end(), t.degrees().begin(),
             t.degrees().begin() + static_cast<std::ptrdiff_t>(leaf_index));
  out.insert(out.end(), t2.degrees().begin(), t2.degrees().end());
  out.insert(out.end(), t.degrees().begin() + static_cast<std::ptrdiff_t>(leaf_index) + 1,
             t.degrees().end());
  return Tree::from_valid_degrees(std::move(out));
}

inline Tree graft(const Tree& t, const Address& x, const Tree& t2) {
  auto idx = t.index_of(x);
  if (!idx) throw TreeError("graft: address " + format_address(x) + " not in tree");
  return graft_at(t, *idx, t2);
}

// The ball event T(t, x): all trees obtained by grafting some tree at leaf x
// of the finite base tree t.
struct BallEvent {
  Tree base;
  Address leaf;

  BallEvent(Tree base_tree, Address leaf_addr)
      : base(std::move(base_tree)), leaf(std::move(leaf_addr)) {
    auto idx = base.index_of(leaf);
    if (!idx || !base.is_leaf(*idx))
      throw TreeError("ball event: " + format_address(leaf) + " is not a leaf of the base");
    leaf_index = *idx;
  }

  std::size_t leaf_index;
};

inline bool ball_member(const Tree& s, const BallEvent& e) {
  const auto& t = e.base;
  if (s.size() < t.size()) return false;
  std::size_t i = e.leaf_index;
  for (std::size_t j = 0; j < i; ++j)
    if (s.degree(j) != t.degree(j)) return false;
  auto sizes = s.subtree_sizes();
  std::size_t block = static_cast<std::size_t>(sizes[i]);
  if (i + block + (t.size() - i - 1) != s.size()) return false;
  for (std::size_t j = i + 1; j < t.size(); ++j)
    if (s.degree(j + block - 1) != t.degree(j)) return false;
  return true;
}

// Unique tree t2 with s = graft(base, x, t2), when s lies in the ball.
inline std::optional<Tree> ball_decompose(const Tree& s, const BallEvent& e) {
  if (!ball_member(s, e)) return std::nullopt;
  auto sizes = s.subtree_sizes();
  return fringe_at(s, e.leaf_index, sizes);
}

// Height-h truncation record: out-degrees strictly below the cut plus bare
// membership on the cut. Local convergence compares exactly this data.
struct Restriction {
  std::map<Address, std::int32_t> degrees;
  std::set<Address> frontier;

  bool operator==(const Restriction&) const = default;

  std::string key() const {
    std::string s;
    for (const auto& [u, k] : degrees) s += format_address(u) + ":" + std::to_string(k) + ";";
    s += "|";
    for (const auto& u : frontier) s += format_address(u) + ";";
    return s;
  }
};

inline Restriction restrict_to_height(const Tree& t, std::size_t h) {
  Restriction out;
  // preorder walk carrying addresses
  std::vector<std::pair<std::size_t, Address>> stack;
  stack.emplace_back(0, Address{});
  auto sizes = t.subtree_sizes();
  while (!stack.empty()) {
    auto [i, addr] = std::move(stack.back());
    stack.pop_back();
    if (addr.size() == h) {
      out.frontier.insert(addr);
      continue;
    }
    out.degrees.emplace(addr, t.degree(i));
    std::size_t c = i + 1;
    for (std::int32_t k = 1; k <= t.degree(i); ++k) {
      Address child = addr;
      child.push_back(k);
      stack.emplace_back(c, std::move(child));
      c += static_cast<std::size_t>(sizes[c]);
    }
  }
  return out;
}

// D(t, x) for the protected-count additivity: 1 when x is the only leaf among
// the children of its parent (the parent turns protected once any non-trivial
// tree is grafted at x), else 0. The root leaf has no parent, so 0.
inline int protected_graft_increment_at(const Tree& t, std::size_t leaf_index) {
  if (leaf_index >= t.size() || !t.is_leaf(leaf_index))
    throw TreeError("protected_graft_increment: not a leaf");
  if (leaf_index == 0) return 0;
  auto par = t.parents();
  auto sizes = t.subtree_sizes();
  std::size_t p = static_cast<std::size_t>(par[leaf_index]);
  std::size_t c = p + 1;
  for (std::int32_t k = 0; k < t.degree(p); ++k) {
    if (c != leaf_index && t.is_leaf(c)) return 0;
    c += static_cast<std::size_t>(sizes[c]);
  }
  return 1;
}

inline int protected_graft_increment(const Tree& t, const Address& x) {
  auto idx = t.index_of(x);
  if (!idx) throw TreeError("protected_graft_increment: address not in tree");
  return protected_graft_increment_at(t, *idx);
}

}  // namespace gwlab
