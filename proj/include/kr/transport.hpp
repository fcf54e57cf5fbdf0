#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "kr/errors.hpp"

namespace kr {

inline constexpr double kMarginalTol = 1e-10;

// Dense row-major m x n matrix of reals.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t m, std::size_t n, double fill = 0.0) : rows(m), cols(n), data(m * n, fill) {}

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

using CostMatrix = Matrix;
// Transport plan with prescribed row and column sums.
using StagePlan = Matrix;

struct OtResult {
  StagePlan plan;
  double value = 0.0;
  // Dual potentials: cost(i,j) - u[i] - v[j] >= 0, with equality on the basis.
  std::vector<double> u;
  std::vector<double> v;
};

inline double plan_cost(const StagePlan& plan, const CostMatrix& cost) {
  double s = 0.0;
  for (std::size_t k = 0; k < plan.data.size(); ++k) {
    if (plan.data[k] != 0.0) s += plan.data[k] * cost.data[k];
  }
  return s;
}

// Comonotone (north-west corner on sorted supports) coupling of two discrete
// measures on R with cost |x - y|^p. Optimal for p >= 1. Rows and columns of
// the plan follow the input order.
inline OtResult ot_1d(std::span<const double> xs, std::span<const double> xw, std::span<const double> ys,
                      std::span<const double> yw, double p) {
  if (xs.size() != xw.size() || ys.size() != yw.size()) throw InvalidArgument("ot_1d: support/weight size mismatch");
  if (xs.empty() || ys.empty()) throw InvalidArgument("ot_1d: empty measure");
  if (!(p >= 1.0)) throw InvalidArgument("ot_1d: p must be >= 1");
  std::vector<std::size_t> ox(xs.size()), oy(ys.size());
  std::iota(ox.begin(), ox.end(), std::size_t{0});
  std::iota(oy.begin(), oy.end(), std::size_t{0});
  std::stable_sort(ox.begin(), ox.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  std::stable_sort(oy.begin(), oy.end(), [&](std::size_t a, std::size_t b) { return ys[a] < ys[b]; });
  OtResult r;
  r.plan = StagePlan(xs.size(), ys.size());
  std::size_t i = 0, j = 0;
  double ri = xw[ox[0]], cj = yw[oy[0]];
  while (true) {
    const double m = std::min(ri, cj);
    if (m > 0.0) {
      r.plan(ox[i], oy[j]) += m;
      r.value += m * std::pow(std::abs(xs[ox[i]] - ys[oy[j]]), p);
    }
    ri -= m;
    cj -= m;
    const bool last_i = i + 1 == xs.size(), last_j = j + 1 == ys.size();
    if (last_i && last_j) break;
    if ((ri <= cj && !last_i) || last_j) {
      ++i;
      ri = xw[ox[i]];
    } else {
      ++j;
      cj = yw[oy[j]];
    }
  }
  return r;
}

namespace detail {

// Transportation simplex on a spanning-tree basis.
class TransportSimplex {
 public:
  TransportSimplex(const CostMatrix& cost, std::span<const double> roww, std::span<const double> colw)
      : c_(cost), m_(cost.rows), n_(cost.cols), x_(cost.rows, cost.cols), basic_(m_ * n_, 0) {
    northwest_corner(roww, colw);
  }

  OtResult solve() {
    const std::size_t nodes = m_ + n_;
    double scale = 0.0;
    for (double v : c_.data) scale = std::max(scale, std::abs(v));
    const double eps = 1e-12 * (1.0 + scale);
    std::size_t degenerate_run = 0;
    bool bland = false;
    const std::size_t max_iter = 50 * (m_ * n_ + 10) + 10000;
    for (std::size_t iter = 0; iter < max_iter; ++iter) {
      potentials();
      // Entering cell: most negative reduced cost (lowest index on ties); Bland's
      // first-negative rule after a long streak of degenerate pivots.
      std::size_t enter = npos;
      double best = -eps;
      for (std::size_t k = 0; k < m_ * n_ && !(bland && enter != npos); ++k) {
        if (basic_[k]) continue;
        const double rc = c_.data[k] - u_[k / n_] - v_[k % n_];
        if (rc < best) {
          best = bland ? -eps : rc;
          enter = k;
        }
      }
      if (enter == npos) return finish();
      const std::vector<std::size_t> cycle = tree_path(enter / n_, m_ + enter % n_);
      // cycle holds basic cells on the path from the entering column back to its
      // row; they alternate -, +, -, ...
      std::size_t leave = npos;
      double theta = std::numeric_limits<double>::infinity();
      for (std::size_t q = 0; q < cycle.size(); q += 2) {
        const double f = x_.data[cycle[q]];
        if (f < theta || (f == theta && cycle[q] < leave)) {
          theta = f;
          leave = cycle[q];
        }
      }
      for (std::size_t q = 0; q < cycle.size(); ++q) x_.data[cycle[q]] += (q % 2 == 0 ? -theta : theta);
      x_.data[enter] = theta;
      x_.data[leave] = 0.0;
      basic_[enter] = 1;
      basic_[leave] = 0;
      degenerate_run = theta == 0.0 ? degenerate_run + 1 : 0;
      if (degenerate_run > 4 * nodes + 50) bland = true;
      if (theta > 0.0) bland = false;
    }
    throw Error("transportation simplex did not converge");
  }

 private:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  void northwest_corner(std::span<const double> roww, std::span<const double> colw) {
    std::vector<double> r(roww.begin(), roww.end()), c(colw.begin(), colw.end());
    std::size_t i = 0, j = 0;
    while (true) {
      const double f = std::min(r[i], c[j]);
      x_(i, j) = std::max(f, 0.0);
      basic_[i * n_ + j] = 1;
      r[i] -= f;
      c[j] -= f;
      if (i + 1 == m_ && j + 1 == n_) break;
      if ((r[i] <= c[j] && i + 1 < m_) || j + 1 == n_) ++i;
      else ++j;
    }
  }

  void build_adjacency() {
    adj_.assign(m_ + n_, {});
    for (std::size_t k = 0; k < m_ * n_; ++k) {
      if (!basic_[k]) continue;
      adj_[k / n_].push_back(k);
      adj_[m_ + k % n_].push_back(k);
    }
  }

  void potentials() {
    build_adjacency();
    u_.assign(m_, 0.0);
    v_.assign(n_, 0.0);
    std::vector<char> seen(m_ + n_, 0);
    std::vector<std::size_t> stack{0};
    seen[0] = 1;
    while (!stack.empty()) {
      const std::size_t node = stack.back();
      stack.pop_back();
      for (std::size_t k : adj_[node]) {
        const std::size_t i = k / n_, j = m_ + k % n_;
        const std::size_t other = node == i ? j : i;
        if (seen[other]) continue;
        seen[other] = 1;
        if (other >= m_) v_[other - m_] = c_.data[k] - u_[i];
        else u_[other] = c_.data[k] - v_[j - m_];
        stack.push_back(other);
      }
    }
  }

  // Basic cells on the tree path from node `to` (a column) to node `from` (a row).
  std::vector<std::size_t> tree_path(std::size_t from, std::size_t to) const {
    std::vector<std::size_t> parent_edge(m_ + n_, npos), parent(m_ + n_, npos);
    std::vector<char> seen(m_ + n_, 0);
    std::vector<std::size_t> queue{from};
    seen[from] = 1;
    for (std::size_t h = 0; h < queue.size(); ++h) {
      const std::size_t node = queue[h];
      if (node == to) break;
      for (std::size_t k : adj_[node]) {
        const std::size_t i = k / n_, j = m_ + k % n_;
        const std::size_t other = node == i ? j : i;
        if (seen[other]) continue;
        seen[other] = 1;
        parent[other] = node;
        parent_edge[other] = k;
        queue.push_back(other);
      }
    }
    std::vector<std::size_t> path;
    for (std::size_t node = to; node != from; node = parent[node]) path.push_back(parent_edge[node]);
    return path;
  }

  OtResult finish() {
    OtResult r;
    r.plan = std::move(x_);
    r.value = plan_cost(r.plan, c_);
    r.u = std::move(u_);
    r.v = std::move(v_);
    return r;
  }

  const CostMatrix& c_;
  std::size_t m_, n_;
  StagePlan x_;
  std::vector<char> basic_;
  std::vector<double> u_, v_;
  std::vector<std::vector<std::size_t>> adj_;
};

inline void check_marginals(const CostMatrix& cost, std::span<const double> roww, std::span<const double> colw) {
  if (cost.rows != roww.size() || cost.cols != colw.size() || roww.empty() || colw.empty()) {
    throw InvalidArgument("ot_exact: cost matrix does not match the marginals");
  }
  double sr = 0.0, sc = 0.0;
  for (double w : roww) {
    if (!(w >= 0.0)) throw InvalidArgument("ot_exact: negative marginal weight");
    sr += w;
  }
  for (double w : colw) {
    if (!(w >= 0.0)) throw InvalidArgument("ot_exact: negative marginal weight");
    sc += w;
  }
  if (std::abs(sr - sc) > kMarginalTol) {
    throw Infeasible("ot_exact: marginal masses differ (" + std::to_string(sr) + " vs " + std::to_string(sc) + ")");
  }
  for (double c : cost.data) {
    if (!std::isfinite(c)) throw InvalidArgument("ot_exact: cost entries must be finite");
  }
}

}  // namespace detail

// Exact optimal transport between two discrete marginals (transportation
// simplex; returns a vertex plan together with optimal dual potentials).
inline OtResult ot_exact(const CostMatrix& cost, std::span<const double> roww, std::span<const double> colw) {
  detail::check_marginals(cost, roww, colw);
  if (cost.rows == 1 || cost.cols == 1) {
    OtResult r;
    r.plan = StagePlan(cost.rows, cost.cols);
    r.u.assign(cost.rows, 0.0);
    r.v.assign(cost.cols, 0.0);
    if (cost.rows == 1) {
      for (std::size_t j = 0; j < cost.cols; ++j) {
        r.plan(0, j) = colw[j];
        r.v[j] = cost(0, j);
      }
    } else {
      for (std::size_t i = 0; i < cost.rows; ++i) {
        r.plan(i, 0) = roww[i];
        r.u[i] = cost(i, 0);
      }
    }
    r.value = plan_cost(r.plan, cost);
    return r;
  }
  return detail::TransportSimplex(cost, roww, colw).solve();
}

namespace detail {

// Flow on a spanning tree (edge list of cells) meeting the given supplies.
// Returns false when the tree flow is infeasible (negative beyond tol).
inline bool tree_flow(std::size_t m, std::size_t n, const std::vector<std::size_t>& cells,
                      std::span<const double> roww, std::span<const double> colw, std::vector<double>& flow,
                      double tol) {
  const std::size_t nodes = m + n;
  std::vector<double> rest(nodes);
  for (std::size_t i = 0; i < m; ++i) rest[i] = roww[i];
  for (std::size_t j = 0; j < n; ++j) rest[m + j] = colw[j];
  std::vector<std::vector<std::size_t>> inc(nodes);
  for (std::size_t e = 0; e < cells.size(); ++e) {
    inc[cells[e] / n].push_back(e);
    inc[m + cells[e] % n].push_back(e);
  }
  std::vector<std::size_t> degree(nodes);
  for (std::size_t v = 0; v < nodes; ++v) degree[v] = inc[v].size();
  std::vector<char> done(cells.size(), 0);
  flow.assign(cells.size(), 0.0);
  std::vector<std::size_t> leaves;
  for (std::size_t v = 0; v < nodes; ++v) {
    if (degree[v] == 1) leaves.push_back(v);
  }
  std::size_t assigned = 0;
  while (!leaves.empty()) {
    const std::size_t v = leaves.back();
    leaves.pop_back();
    if (degree[v] != 1) continue;
    std::size_t e = 0;
    for (std::size_t cand : inc[v]) {
      if (!done[cand]) e = cand;
    }
    const std::size_t i = cells[e] / n, j = m + cells[e] % n;
    const std::size_t other = v == i ? j : i;
    flow[e] = rest[v];
    if (flow[e] < -tol) return false;
    rest[other] -= flow[e];
    rest[v] = 0.0;
    done[e] = 1;
    ++assigned;
    --degree[v];
    if (--degree[other] == 1) leaves.push_back(other);
  }
  for (double& f : flow) f = std::max(f, 0.0);
  return assigned == cells.size();
}

// Number of spanning trees of the bipartite graph on `nodes` with edges
// `cells` (Matrix-Tree theorem; a double is enough to compare with caps).
inline double spanning_tree_count(std::size_t m, std::size_t n, const std::vector<std::size_t>& nodes,
                                  const std::vector<std::size_t>& cells) {
  const std::size_t k = nodes.size();
  if (k <= 1) return 1.0;
  std::vector<std::size_t> pos(m + n, 0);
  for (std::size_t a = 0; a < k; ++a) pos[nodes[a]] = a;
  std::vector<double> lap((k - 1) * (k - 1), 0.0);
  auto at = [&](std::size_t r, std::size_t c) -> double& { return lap[r * (k - 1) + c]; };
  for (std::size_t cell : cells) {
    const std::size_t a = pos[cell / n], b = pos[m + cell % n];
    if (a > 0) at(a - 1, a - 1) += 1.0;
    if (b > 0) at(b - 1, b - 1) += 1.0;
    if (a > 0 && b > 0) {
      at(a - 1, b - 1) -= 1.0;
      at(b - 1, a - 1) -= 1.0;
    }
  }
  double det = 1.0;
  const std::size_t d = k - 1;
  for (std::size_t c = 0; c < d; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < d; ++r) {
      if (std::abs(at(r, c)) > std::abs(at(piv, c))) piv = r;
    }
    if (at(piv, c) == 0.0) return 0.0;
    if (piv != c) {
      for (std::size_t x = 0; x < d; ++x) std::swap(at(c, x), at(piv, x));
    }
    det *= at(c, c);
    for (std::size_t r = c + 1; r < d; ++r) {
      const double f = at(r, c) / at(c, c);
      for (std::size_t x = c; x < d; ++x) at(r, x) -= f * at(c, x);
    }
  }
  return std::abs(det);
}

}  // namespace detail

// All vertices (basic feasible solutions) of the transportation polytope with
// support inside `allowed` (row-major mask; empty = every cell). The allowed
// cells are split into connected components, spanning trees of each component
// are enumerated, and distinct feasible tree flows are combined. Throws
// TooLarge when more than `max_trees` trees would be visited or more than
// `max_vertices` vertices result.
inline std::vector<StagePlan> enumerate_vertices(std::span<const double> roww, std::span<const double> colw,
                                                 std::vector<char> allowed = {}, std::size_t max_vertices = 1u << 20,
                                                 std::size_t max_trees = 20'000'000) {
  const std::size_t m = roww.size(), n = colw.size();
  if (allowed.empty()) allowed.assign(m * n, 1);
  const double tol = kMarginalTol;
  // Components over row nodes 0..m-1 and column nodes m..m+n-1.
  std::vector<std::size_t> comp(m + n);
  std::iota(comp.begin(), comp.end(), std::size_t{0});
  auto find = [&](std::size_t a) {
    while (comp[a] != a) a = comp[a] = comp[comp[a]];
    return a;
  };
  for (std::size_t k = 0; k < m * n; ++k) {
    if (allowed[k]) comp[find(k / n)] = find(m + k % n);
  }
  std::vector<std::vector<std::size_t>> groups;  // node lists
  std::vector<std::size_t> group_of(m + n, 0);
  {
    std::vector<std::size_t> index(m + n, static_cast<std::size_t>(-1));
    for (std::size_t v = 0; v < m + n; ++v) {
      const std::size_t r = find(v);
      if (index[r] == static_cast<std::size_t>(-1)) {
        index[r] = groups.size();
        groups.emplace_back();
      }
      groups[index[r]].push_back(v);
      group_of[v] = index[r];
    }
  }
  std::vector<std::vector<std::size_t>> group_cells(groups.size());
  for (std::size_t k = 0; k < m * n; ++k) {
    if (allowed[k]) group_cells[group_of[k / n]].push_back(k);
  }
  std::size_t trees_visited = 0;
  std::vector<std::vector<StagePlan>> per_group;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    double supply = 0.0;
    for (std::size_t v : groups[g]) supply += v < m ? roww[v] : -colw[v - m];
    if (std::abs(supply) > tol) return {};
    std::vector<StagePlan> found;
    if (groups[g].size() == 1) {
      // Isolated node: its marginal weight must vanish.
      const std::size_t v = groups[g][0];
      if ((v < m ? roww[v] : colw[v - m]) > tol) return {};
      per_group.push_back({StagePlan(m, n)});
      continue;
    }
    const auto& cells = group_cells[g];
    const std::size_t need = groups[g].size() - 1;
    // Every spanning tree gets visited, so refuse before starting.
    if (static_cast<double>(trees_visited) + detail::spanning_tree_count(m, n, groups[g], cells) >
        static_cast<double>(max_trees) + 0.5) {
      throw TooLarge("enumerate_vertices: too many spanning trees");
    }
    std::set<std::vector<std::size_t>> seen;  // a vertex is determined by its support
    std::vector<std::size_t> chosen;
    std::vector<std::size_t> uf(m + n);
    // Backtracking over cells with an undo-free union-find copy per level.
    std::function<void(std::size_t, std::vector<std::size_t>)> rec = [&](std::size_t pos,
                                                                         std::vector<std::size_t> parent) {
      if (chosen.size() == need) {
        if (++trees_visited > max_trees) throw TooLarge("enumerate_vertices: too many spanning trees");
        std::vector<double> flow;
        if (!detail::tree_flow(m, n, chosen, roww, colw, flow, tol)) return;
        StagePlan p(m, n);
        std::vector<std::size_t> support;
        for (std::size_t e = 0; e < chosen.size(); ++e) {
          p.data[chosen[e]] = flow[e];
          if (flow[e] > tol) support.push_back(chosen[e]);
        }
        std::sort(support.begin(), support.end());
        if (!seen.insert(std::move(support)).second) return;
        found.push_back(std::move(p));
        if (found.size() > max_vertices) throw TooLarge("enumerate_vertices: too many vertices");
        return;
      }
      if (cells.size() - pos < need - chosen.size()) return;
      auto root = [&](std::size_t a) {
        while (parent[a] != a) a = parent[a];
        return a;
      };
      const std::size_t k = cells[pos];
      const std::size_t a = root(k / n), b = root(m + k % n);
      if (a != b) {
        auto next = parent;
        next[a] = b;
        chosen.push_back(k);
        rec(pos + 1, std::move(next));
        chosen.pop_back();
      }
      rec(pos + 1, std::move(parent));
    };
    std::iota(uf.begin(), uf.end(), std::size_t{0});
    rec(0, uf);
    if (found.empty()) return {};
    per_group.push_back(std::move(found));
  }
  std::vector<StagePlan> out{StagePlan(m, n)};
  for (const auto& options : per_group) {
    std::vector<StagePlan> next;
    for (const auto& base : out) {
      for (const auto& opt : options) {
        StagePlan p = base;
        for (std::size_t k = 0; k < p.data.size(); ++k) p.data[k] += opt.data[k];
        next.push_back(std::move(p));
        if (next.size() > max_vertices) throw TooLarge("enumerate_vertices: too many vertices");
      }
    }
    out = std::move(next);
  }
  return out;
}

}  // namespace kr
