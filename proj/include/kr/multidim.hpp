#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <unordered_map>
#include <vector>

#include "kr/bicausal.hpp"
#include "kr/kernel_tree.hpp"
#include "kr/path_measure.hpp"
#include "kr/transport.hpp"

namespace kr {

// Uniform grid of M^d cell centres in (0,1)^d, lexicographic order.
struct GridReference {
  int dim = 1;
  int per_axis = 1;
  std::vector<std::vector<double>> points;

  GridReference(int d, int M) : dim(d), per_axis(M) {
    if (d < 1 || M < 1) throw InvalidArgument("grid: dimension and resolution must be positive");
    std::size_t total = 1;
    for (int j = 0; j < d; ++j) {
      total *= static_cast<std::size_t>(M);
      if (total > 1'000'000) throw TooLarge("grid: more than 1e6 points");
    }
    std::vector<int> idx(static_cast<std::size_t>(d), 0);
    for (std::size_t n = 0; n < total; ++n) {
      std::vector<double> pt(static_cast<std::size_t>(d));
      for (int j = 0; j < d; ++j) pt[static_cast<std::size_t>(j)] = (idx[static_cast<std::size_t>(j)] + 0.5) / M;
      points.push_back(std::move(pt));
      for (int j = d - 1; j >= 0; --j) {
        if (++idx[static_cast<std::size_t>(j)] < M) break;
        idx[static_cast<std::size_t>(j)] = 0;
      }
    }
  }

  std::size_t size() const noexcept { return points.size(); }
  double weight() const noexcept { return 1.0 / static_cast<double>(points.size()); }
  std::vector<double> weights() const { return std::vector<double>(points.size(), weight()); }
};

inline void check_p_multi(double p) {
  if (!(p > 1.0)) throw InvalidArgument("multi-dimensional quantile processes need p > 1");
}

// Discretised W_p-optimal map from the grid to the discrete law with the
// given support and weights (rows: grid points, columns: support points).
inline StagePlan optimal_map(const GridReference& grid, const std::vector<std::vector<double>>& support,
                             std::span<const double> weights, double p) {
  check_p_multi(p);
  if (support.size() != weights.size() || support.empty()) throw InvalidArgument("optimal_map: support/weight mismatch");
  CostMatrix cost(grid.size(), support.size());
  for (std::size_t g = 0; g < grid.size(); ++g) {
    if (support[0].size() != static_cast<std::size_t>(grid.dim)) throw DimensionMismatch("optimal_map: grid and measure dimension differ");
    for (std::size_t j = 0; j < support.size(); ++j) cost(g, j) = lp_pow(grid.points[g], support[j], p);
  }
  return ot_exact(cost, grid.weights(), weights).plan;
}

// One-step law overload.
inline StagePlan optimal_map(const GridReference& grid, const PathMeasure& rho, double p) {
  if (rho.steps() != 1) throw DimensionMismatch("optimal_map: expected a one-step measure");
  std::vector<std::vector<double>> support;
  for (std::size_t i = 0; i < rho.size(); ++i) support.emplace_back(rho.atom(i).begin(), rho.atom(i).end());
  return optimal_map(grid, support, rho.weights(), p);
}

// Stage-wise grid quantile process: one plan per internal kernel-tree node,
// mapping the grid onto that node's children. Equal values share a subtree
// because the children of a kernel node are distinct states.
struct MultiQuantileProcess {
  GridReference grid;
  KernelTree tree;
  std::vector<StagePlan> plans;  // indexed by kernel-tree node; empty for leaves

  // Value assigned at node `node` to grid point g: the target with the most
  // mass (lowest index on ties).
  int child_at(int node, std::size_t g) const {
    const StagePlan& pl = plans[static_cast<std::size_t>(node)];
    std::size_t best = 0;
    for (std::size_t j = 1; j < pl.cols; ++j) {
      if (pl(g, j) > pl(g, best)) best = j;
    }
    return tree[node].children[best];
  }

  // True when every stage plan sends each grid point to a single target.
  bool is_map() const {
    for (const auto& pl : plans) {
      for (std::size_t g = 0; g < pl.rows; ++g) {
        int charged = 0;
        for (std::size_t j = 0; j < pl.cols; ++j) charged += pl(g, j) > 0.0;
        if (charged > 1) return false;
      }
    }
    return true;
  }
};

inline MultiQuantileProcess multi_quantile_process(const PathMeasure& mu, const GridReference& grid, double p) {
  check_p_multi(p);
  if (mu.dim() != grid.dim) throw DimensionMismatch("multi_quantile_process: grid and measure dimension differ");
  MultiQuantileProcess q{grid, disintegrate(mu), {}};
  q.plans.resize(q.tree.nodes.size());
  for (std::size_t n = 0; n < q.tree.nodes.size(); ++n) {
    const auto& node = q.tree.nodes[n];
    if (node.children.empty()) continue;
    std::vector<std::vector<double>> support;
    std::vector<double> w;
    for (int c : node.children) {
      support.push_back(q.tree[c].value);
      w.push_back(q.tree[c].weight);
    }
    q.plans[n] = optimal_map(grid, support, w, p);
  }
  return q;
}

// Pushforward of the grid-product reference: each grid point splits its mass
// over targets as the plan prescribes.
inline PathMeasure pushforward(const MultiQuantileProcess& q) {
  std::vector<double> coords, weights;
  std::vector<double> path;
  std::function<void(int, double)> walk = [&](int node, double mass) {
    const auto& t = q.tree;
    if (t[node].children.empty()) {
      coords.insert(coords.end(), path.begin(), path.end());
      weights.push_back(mass);
      return;
    }
    const StagePlan& pl = q.plans[static_cast<std::size_t>(node)];
    for (std::size_t j = 0; j < pl.cols; ++j) {
      double col = 0.0;
      for (std::size_t g = 0; g < pl.rows; ++g) col += pl(g, j);
      const int c = t[node].children[j];
      path.insert(path.end(), t[c].value.begin(), t[c].value.end());
      walk(c, mass * col);
      path.resize(path.size() - t[c].value.size());
    }
  };
  walk(0, 1.0);
  return PathMeasure::from_flat(q.tree.dim, q.tree.steps, std::move(coords), std::move(weights));
}

// KR_p on the grid-product reference. Per grid cell the two plans' targets
// (sorted lexicographically) are paired by a north-west merge of the cell's
// mass; for d = 1 this is the exact quantile pairing.
inline double kr_distance_multi(const MultiQuantileProcess& a, const MultiQuantileProcess& b, double p) {
  check_p_multi(p);
  if (a.grid.dim != b.grid.dim || a.grid.per_axis != b.grid.per_axis) throw DimensionMismatch("kr_distance_multi: grids differ");
  if (a.tree.dim != b.tree.dim || a.tree.steps != b.tree.steps) throw DimensionMismatch("kr_distance_multi: measures differ in d or N");
  std::unordered_map<std::uint64_t, double> memo;
  std::function<double(int, int)> V = [&](int i, int j) -> double {
    if (a.tree[i].children.empty()) return 0.0;
    const std::uint64_t key = static_cast<std::uint64_t>(i) * b.tree.nodes.size() + static_cast<std::uint64_t>(j);
    if (auto it = memo.find(key); it != memo.end()) return it->second;
    const StagePlan& pa = a.plans[static_cast<std::size_t>(i)];
    const StagePlan& pb = b.plans[static_cast<std::size_t>(j)];
    const auto& ca = a.tree[i].children;
    const auto& cb = b.tree[j].children;
    std::vector<double> pair_mass(ca.size() * cb.size(), 0.0);
    for (std::size_t g = 0; g < pa.rows; ++g) {
      std::size_t r = 0, s = 0;
      double ra = pa(g, 0), sb = pb(g, 0);
      while (true) {
        while (ra <= 0.0 && r + 1 < pa.cols) ra = pa(g, ++r);
        while (sb <= 0.0 && s + 1 < pb.cols) sb = pb(g, ++s);
        const double m = std::min(ra, sb);
        if (!(m > 0.0)) break;
        pair_mass[r * cb.size() + s] += m;
        ra -= m;
        sb -= m;
      }
    }
    double v = 0.0;
    for (std::size_t r = 0; r < ca.size(); ++r) {
      for (std::size_t s = 0; s < cb.size(); ++s) {
        const double m = pair_mass[r * cb.size() + s];
        if (m <= 0.0) continue;
        v += m * (lp_pow(a.tree[ca[r]].value, b.tree[cb[s]].value, p) + V(ca[r], cb[s]));
      }
    }
    memo[key] = v;
    return v;
  };
  return std::pow(std::max(V(0, 0), 0.0), 1.0 / p);
}

inline double kr_distance_multi(const PathMeasure& mu, const PathMeasure& nu, const GridReference& grid, double p) {
  require_same_space(mu, nu, "kr_distance_multi");
  return kr_distance_multi(multi_quantile_process(mu, grid, p), multi_quantile_process(nu, grid, p), p);
}

inline constexpr std::size_t kMaxStageOptima = 64;

struct TildeKrResult {
  double value = 0.0;      // sup over triangular optimal couplings
  double min_value = 0.0;  // inf over the same set
  bool unique = true;      // every reachable stage problem had one optimal vertex
  std::size_t stage_problems = 0;
  std::size_t max_optima = 1;
};

// All optimal vertex plans of a stage problem: vertices supported on the cells
// of zero reduced cost with respect to the optimal duals.
inline std::vector<StagePlan> optimal_vertices(const CostMatrix& cost, std::span<const double> roww,
                                               std::span<const double> colw, std::size_t cap = kMaxStageOptima) {
  const OtResult r = ot_exact(cost, roww, colw);
  double scale = 0.0;
  for (double c : cost.data) scale = std::max(scale, std::abs(c));
  const double tol = 1e-9 * (1.0 + scale);
  std::vector<char> allowed(cost.data.size(), 0);
  for (std::size_t i = 0; i < cost.rows; ++i) {
    for (std::size_t j = 0; j < cost.cols; ++j) allowed[i * cost.cols + j] = cost(i, j) - r.u[i] - r.v[j] <= tol;
  }
  std::vector<StagePlan> out;
  try {
    out = enumerate_vertices(roww, colw, allowed, cap);
  } catch (const TooLarge&) {
    throw DegenerateExplosion("tilde_kr: more than " + std::to_string(cap) + " optimal stage plans");
  }
  if (out.size() > cap) throw DegenerateExplosion("tilde_kr: more than " + std::to_string(cap) + " optimal stage plans");
  if (out.empty()) out.push_back(r.plan);
  return out;
}

// Semimetric tilde-KR_p: extremes of the transport cost over compositions of
// stage-wise W_p-optimal couplings of the kernels.
inline TildeKrResult tilde_kr(const PathMeasure& mu, const PathMeasure& nu, double p) {
  require_same_space(mu, nu, "tilde_kr");
  if (!(p >= 1.0)) throw InvalidArgument("tilde_kr: p must be >= 1");
  const KernelTree ta = disintegrate(mu), tb = disintegrate(nu);
  struct Stage {
    std::vector<StagePlan> plans;
    CostMatrix cost;
  };
  std::unordered_map<std::uint64_t, Stage> stages;
  TildeKrResult res;
  auto stage = [&](int i, int j) -> const Stage& {
    const std::uint64_t key = static_cast<std::uint64_t>(i) * tb.nodes.size() + static_cast<std::uint64_t>(j);
    if (auto it = stages.find(key); it != stages.end()) return it->second;
    const auto& ca = ta[i].children;
    const auto& cb = tb[j].children;
    Stage s;
    s.cost = CostMatrix(ca.size(), cb.size());
    for (std::size_t r = 0; r < ca.size(); ++r) {
      for (std::size_t c = 0; c < cb.size(); ++c) s.cost(r, c) = lp_pow(ta[ca[r]].value, tb[cb[c]].value, p);
    }
    s.plans = optimal_vertices(s.cost, detail::child_weights(ta, i), detail::child_weights(tb, j));
    ++res.stage_problems;
    res.max_optima = std::max(res.max_optima, s.plans.size());
    if (s.plans.size() > 1) res.unique = false;
    return stages.emplace(key, std::move(s)).first->second;
  };
  auto solve = [&](bool maximize) {
    std::unordered_map<std::uint64_t, double> memo;
    std::function<double(int, int)> V = [&](int i, int j) -> double {
      if (ta[i].depth == ta.steps) return 0.0;
      const std::uint64_t key = static_cast<std::uint64_t>(i) * tb.nodes.size() + static_cast<std::uint64_t>(j);
      if (auto it = memo.find(key); it != memo.end()) return it->second;
      const Stage& s = stage(i, j);
      double best = maximize ? -std::numeric_limits<double>::infinity() : std::numeric_limits<double>::infinity();
      for (const auto& pl : s.plans) {
        double v = 0.0;
        for (std::size_t r = 0; r < pl.rows; ++r) {
          for (std::size_t c = 0; c < pl.cols; ++c) {
            if (pl(r, c) > 0.0) v += pl(r, c) * (s.cost(r, c) + V(ta[i].children[r], tb[j].children[c]));
          }
        }
        best = maximize ? std::max(best, v) : std::min(best, v);
      }
      memo[key] = best;
      return best;
    };
    return std::pow(std::max(V(0, 0), 0.0), 1.0 / p);
  };
  res.value = solve(true);
  res.min_value = solve(false);
  return res;
}

struct CounterexampleTriple {
  PathMeasure mu, nu, eta;
};

// Two-dimensional, two-step triple on which tilde-KR_p fails the triangle
// inequality.
inline CounterexampleTriple counterexample_measures(double eps) {
  if (!(eps > 0.0)) throw InvalidArgument("counterexample_measures: eps must be > 0");
  auto half = [](std::vector<double> a, std::vector<double> b) {
    return PathMeasure(2, 2, {std::move(a), std::move(b)}, {0.5, 0.5});
  };
  return {half({-1, 0, 2, 0}, {1, 0, -2, 0}), half({-eps, 1, 2, 0}, {eps, -1, -2, 0}),
          half({eps, 1, 2, 0}, {-eps, -1, -2, 0})};
}

}  // namespace kr
