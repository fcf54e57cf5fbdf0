#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "kr/path_measure.hpp"

namespace kr {

// Successive disintegration of a PathMeasure.
//
// Nodes live in a flat arena; node 0 is the root (depth 0, empty value). A
// node at depth k stands for a length-k prefix; its `value` is the state at
// step k and `children` are the support points of the step-(k+1) kernel given
// that prefix, sorted lexicographically. `mass` is the absolute probability
// of the prefix and `weight` the conditional probability given the parent.
struct KernelTree {
  struct Node {
    int depth = 0;
    std::vector<double> value;
    double mass = 1.0;
    double weight = 1.0;
    int parent = -1;
    std::vector<int> children;
    int atom = -1;  // source atom for leaves (exact grouping only)
  };

  int dim = 1;
  int steps = 1;
  std::vector<Node> nodes;

  const Node& root() const { return nodes.front(); }
  const Node& operator[](int i) const { return nodes[static_cast<std::size_t>(i)]; }

  std::vector<int> level(int depth) const {
    std::vector<int> out;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (nodes[i].depth == depth) out.push_back(static_cast<int>(i));
    }
    return out;
  }

  // Prefix path (depth*d values) of node i.
  std::vector<double> prefix(int i) const {
    std::vector<double> out(static_cast<std::size_t>(nodes[static_cast<std::size_t>(i)].depth) * dim);
    for (int n = i; n > 0; n = nodes[static_cast<std::size_t>(n)].parent) {
      const Node& node = nodes[static_cast<std::size_t>(n)];
      std::copy(node.value.begin(), node.value.end(),
                out.begin() + static_cast<std::ptrdiff_t>((node.depth - 1) * dim));
    }
    return out;
  }
};

namespace detail {

inline bool states_close(std::span<const double> a, std::span<const double> b, double tol) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::abs(a[i] - b[i]) > tol) return false;
  }
  return true;
}

inline void build_kernel_node(const PathMeasure& mu, KernelTree& tree, int node,
                              std::vector<std::size_t> idx, double tol) {
  const int depth = tree.nodes[static_cast<std::size_t>(node)].depth;
  if (depth == mu.steps()) {
    if (idx.size() == 1) tree.nodes[static_cast<std::size_t>(node)].atom = static_cast<int>(idx.front());
    return;
  }
  if (tol > 0.0) {
    // Tolerant grouping may interleave continuations; restore suffix order.
    const std::size_t from = static_cast<std::size_t>(depth) * mu.dim();
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return compare_coords(mu.atom(a).subspan(from), mu.atom(b).subspan(from)) < 0;
    });
  }
  std::size_t start = 0;
  while (start < idx.size()) {
    std::size_t end = start + 1;
    while (end < idx.size()) {
      auto prev = mu.state(idx[end - 1], depth);
      auto cur = mu.state(idx[end], depth);
      const bool same = tol > 0.0 ? states_close(prev, cur, tol) : compare_coords(prev, cur) == 0;
      if (!same) break;
      ++end;
    }
    KernelTree::Node child;
    child.depth = depth + 1;
    auto v = mu.state(idx[start], depth);
    child.value.assign(v.begin(), v.end());
    child.parent = node;
    child.mass = 0.0;
    for (std::size_t k = start; k < end; ++k) child.mass += mu.weight(idx[k]);
    child.weight = child.mass / tree.nodes[static_cast<std::size_t>(node)].mass;
    const int id = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back(std::move(child));
    tree.nodes[static_cast<std::size_t>(node)].children.push_back(id);
    build_kernel_node(mu, tree, id,
                      std::vector<std::size_t>(idx.begin() + static_cast<std::ptrdiff_t>(start),
                                               idx.begin() + static_cast<std::ptrdiff_t>(end)),
                      tol);
    start = end;
  }
}

}  // namespace detail

// Groups atoms by prefix, step by step. With prefix_tol == 0 prefixes are
// compared bit-exactly; otherwise consecutive sorted states within prefix_tol
// (max-norm) are chained into one group represented by its smallest state.
inline KernelTree disintegrate(const PathMeasure& mu, double prefix_tol = 0.0) {
  if (prefix_tol < 0.0) throw InvalidArgument("prefix_tol must be nonnegative");
  KernelTree tree;
  tree.dim = mu.dim();
  tree.steps = mu.steps();
  KernelTree::Node root;
  root.mass = 0.0;
  for (double w : mu.weights()) root.mass += w;
  tree.nodes.push_back(root);
  std::vector<std::size_t> idx(mu.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  detail::build_kernel_node(mu, tree, 0, std::move(idx), prefix_tol);
  return tree;
}

// Reassembles the path measure; each leaf contributes its prefix mass.
inline PathMeasure flatten(const KernelTree& tree) {
  std::vector<double> coords;
  std::vector<double> weights;
  for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
    if (tree.nodes[i].depth != tree.steps) continue;
    auto path = tree.prefix(static_cast<int>(i));
    coords.insert(coords.end(), path.begin(), path.end());
    weights.push_back(tree.nodes[i].mass);
  }
  return PathMeasure::from_flat(tree.dim, tree.steps, std::move(coords), std::move(weights));
}

}  // namespace kr
