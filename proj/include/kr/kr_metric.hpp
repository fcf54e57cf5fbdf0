#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "kr/kernel_tree.hpp"
#include "kr/measure_io.hpp"
#include "kr/path_measure.hpp"
#include "kr/quantile.hpp"

namespace kr {

inline constexpr double kCouplingTol = 1e-10;

struct CouplingEntry {
  std::size_t left = 0;
  std::size_t right = 0;
  double weight = 0.0;

  friend bool operator==(const CouplingEntry&, const CouplingEntry&) = default;
};

// Finitely supported coupling of two path measures, stored as weighted pairs
// of atom indices (sorted, duplicates merged).
class Coupling {
 public:
  Coupling(PathMeasure left, PathMeasure right, std::vector<CouplingEntry> entries)
      : left_(std::move(left)), right_(std::move(right)), entries_(std::move(entries)) {
    if (left_.steps() != right_.steps()) throw DimensionMismatch("coupling: measures have different N");
    std::sort(entries_.begin(), entries_.end(), [](const CouplingEntry& a, const CouplingEntry& b) {
      return a.left != b.left ? a.left < b.left : a.right < b.right;
    });
    std::vector<CouplingEntry> merged;
    for (const auto& e : entries_) {
      if (e.left >= left_.size() || e.right >= right_.size()) throw InvalidArgument("coupling: atom index out of range");
      if (!(e.weight > 0.0)) continue;
      if (!merged.empty() && merged.back().left == e.left && merged.back().right == e.right) {
        merged.back().weight += e.weight;
      } else {
        merged.push_back(e);
      }
    }
    entries_ = std::move(merged);
    std::vector<double> rows(left_.size(), 0.0), cols(right_.size(), 0.0);
    for (const auto& e : entries_) {
      rows[e.left] += e.weight;
      cols[e.right] += e.weight;
    }
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (std::abs(rows[i] - left_.weight(i)) > kCouplingTol) throw InvalidArgument("coupling: left marginal violated");
    }
    for (std::size_t j = 0; j < cols.size(); ++j) {
      if (std::abs(cols[j] - right_.weight(j)) > kCouplingTol) throw InvalidArgument("coupling: right marginal violated");
    }
  }

  const PathMeasure& left() const noexcept { return left_; }
  const PathMeasure& right() const noexcept { return right_; }
  const std::vector<CouplingEntry>& entries() const noexcept { return entries_; }

 private:
  PathMeasure left_;
  PathMeasure right_;
  std::vector<CouplingEntry> entries_;
};

// Integral of ||x - y||_p^p under the coupling; for p = 0 of min(||x - y||_1, 1).
inline double coupling_cost(const Coupling& pi, double p) {
  double s = 0.0;
  for (const auto& e : pi.entries()) {
    const double c = lp_pow(pi.left().atom(e.left), pi.right().atom(e.right), p);
    s += e.weight * (p == 0.0 ? std::min(c, 1.0) : c);
  }
  return s;
}

// CSV with header w,x_1..x_N,y_1..y_N (x_t_j / y_t_j when d > 1).
inline std::string coupling_csv(const Coupling& pi) {
  auto head = [&](char c, const PathMeasure& m) {
    std::string h;
    for (int t = 1; t <= m.steps(); ++t) {
      for (int j = 1; j <= m.dim(); ++j) {
        h += std::string(",") + c + "_" + std::to_string(t);
        if (m.dim() > 1) h += "_" + std::to_string(j);
      }
    }
    return h;
  };
  std::string out = "w" + head('x', pi.left()) + head('y', pi.right()) + "\n";
  for (const auto& e : pi.entries()) {
    out += format_double(e.weight);
    for (double x : pi.left().atom(e.left)) out += "," + format_double(x);
    for (double y : pi.right().atom(e.right)) out += "," + format_double(y);
    out += '\n';
  }
  return out;
}

// Knothe-Rosenblatt coupling (Q^mu, Q^nu)_# lambda^N: the two quantile trees
// are walked in lockstep and every nonempty overlap of their partitions
// carries mass to the matching pair of continuations.
inline Coupling kr_coupling(const PathMeasure& mu, const PathMeasure& nu) {
  require_same_space(mu, nu, "kr_coupling");
  if (mu.dim() != 1) throw DimensionMismatch("kr_coupling is defined for d = 1");
  const TriangularMap qm = quantile_process(mu), qn = quantile_process(nu);
  std::vector<CouplingEntry> entries;
  std::vector<double> x, y;
  std::function<void(int, int, double)> walk = [&](int a, int b, double mass) {
    detail::for_each_overlap(qm.node(a), qn.node(b), [&](double lo, double hi, std::size_t i, std::size_t j) {
      const Segment& s = qm.node(a).segments[i];
      const Segment& t = qn.node(b).segments[j];
      const double m = mass * (hi - lo);
      x.push_back(s.offset);
      y.push_back(t.offset);
      if (s.child >= 0) {
        walk(s.child, t.child, m);
      } else {
        entries.push_back({*mu.find(x), *nu.find(y), m});
      }
      x.pop_back();
      y.pop_back();
    });
  };
  walk(0, 0, 1.0);
  return Coupling(mu, nu, std::move(entries));
}

// KR_p: p-th root of the coupling cost for p >= 1, the truncated cost for p = 0.
inline double kr_distance(const PathMeasure& mu, const PathMeasure& nu, double p) {
  detail::check_p(p);
  const double c = coupling_cost(kr_coupling(mu, nu), p);
  return p == 0.0 ? c : std::pow(c, 1.0 / p);
}

inline void check_convex_weights(std::span<const double> coeffs) {
  double total = 0.0;
  for (double c : coeffs) {
    if (!(c >= 0.0)) throw InvalidArgument("coefficients must be nonnegative");
    total += c;
  }
  if (std::abs(total - 1.0) > kWeightSumTol) throw InvalidArgument("coefficients must sum to 1");
}

// KR_p barycenter: law of the averaged quantile processes.
inline PathMeasure barycenter(std::span<const PathMeasure> measures, std::span<const double> coeffs, double p) {
  if (!(p >= 1.0)) throw InvalidArgument("barycenter: p must be >= 1");
  if (measures.empty() || measures.size() != coeffs.size()) throw InvalidArgument("barycenter: need one coefficient per measure");
  check_convex_weights(coeffs);
  std::vector<TriangularMap> maps;
  for (const auto& m : measures) {
    require_same_space(measures.front(), m, "barycenter");
    maps.push_back(quantile_process(m));
  }
  return pushforward(convex_combine(maps, coeffs));
}

// Point at time t on the KR geodesic: ((1-t) x + t y)_# kr_{mu0,mu1}.
inline PathMeasure geodesic_point(const PathMeasure& mu0, const PathMeasure& mu1, double t, double p) {
  if (!(t >= 0.0 && t <= 1.0)) throw InvalidArgument("geodesic_point: t must lie in [0, 1]");
  if (!(p >= 1.0)) throw InvalidArgument("geodesic_point: p must be >= 1");
  const Coupling pi = kr_coupling(mu0, mu1);
  std::vector<double> coords, weights;
  for (const auto& e : pi.entries()) {
    auto x = mu0.atom(e.left);
    auto y = mu1.atom(e.right);
    for (std::size_t k = 0; k < x.size(); ++k) coords.push_back((1.0 - t) * x[k] + t * y[k]);
    weights.push_back(e.weight);
  }
  return PathMeasure::from_flat(mu0.dim(), mu0.steps(), std::move(coords), std::move(weights));
}

namespace detail {

using Law = std::map<std::vector<double>, double>;

inline Law child_law(const KernelTree& tree, int node) {
  Law law;
  for (int c : tree[node].children) law[tree[c].value] += tree[c].weight;
  return law;
}

inline double tv(const Law& a, const Law& b) {
  double s = 0.0;
  for (const auto& [v, w] : a) {
    auto it = b.find(v);
    s += std::abs(w - (it == b.end() ? 0.0 : it->second));
  }
  for (const auto& [v, w] : b) {
    if (!a.count(v)) s += w;
  }
  return 0.5 * s;
}

}  // namespace detail

// law(X_{k+1} | X_{1:k}) = law(X_{k+1} | X_k) for every k, up to `tol` in
// total variation per conditioning prefix.
inline bool is_markov(const PathMeasure& mu, double tol = 1e-9) {
  const KernelTree tree = disintegrate(mu);
  for (int k = 2; k < mu.steps(); ++k) {
    std::map<std::vector<double>, std::vector<int>> classes;
    for (int node : tree.level(k)) classes[tree[node].value].push_back(node);
    for (const auto& [state, nodes] : classes) {
      detail::Law pooled;
      double total = 0.0;
      for (int node : nodes) total += tree[node].mass;
      for (int node : nodes) {
        for (const auto& [v, w] : detail::child_law(tree, node)) pooled[v] += w * tree[node].mass / total;
      }
      for (int node : nodes) {
        if (detail::tv(detail::child_law(tree, node), pooled) > tol) return false;
      }
    }
  }
  return true;
}

// |E[X_{k+1} | X_{1:k}] - X_k| <= tol at every prefix (componentwise).
inline bool is_martingale(const PathMeasure& mu, double tol = 1e-9) {
  const KernelTree tree = disintegrate(mu);
  for (std::size_t n = 1; n < tree.nodes.size(); ++n) {
    const auto& node = tree.nodes[n];
    if (node.depth == tree.steps) continue;
    for (int j = 0; j < tree.dim; ++j) {
      double mean = 0.0;
      for (int c : node.children) mean += tree[c].weight * tree[c].value[static_cast<std::size_t>(j)];
      if (std::abs(mean - node.value[static_cast<std::size_t>(j)]) > tol) return false;
    }
  }
  return true;
}

// Per prefix pair, the stage coupling charges no crossing pairs
// (x < x' together with y > y').
inline bool is_stagewise_comonotone(const Coupling& pi) {
  const PathMeasure& mu = pi.left();
  const PathMeasure& nu = pi.right();
  if (mu.dim() != 1) throw DimensionMismatch("is_stagewise_comonotone is defined for d = 1");
  for (int k = 0; k < mu.steps(); ++k) {
    std::map<std::pair<std::vector<double>, std::vector<double>>, std::vector<std::pair<double, double>>> stage;
    for (const auto& e : pi.entries()) {
      auto x = mu.atom(e.left), y = nu.atom(e.right);
      std::vector<double> px(x.begin(), x.begin() + k), py(y.begin(), y.begin() + k);
      stage[{px, py}].emplace_back(x[static_cast<std::size_t>(k)], y[static_cast<std::size_t>(k)]);
    }
    for (const auto& [key, pts] : stage) {
      for (const auto& [x1, y1] : pts) {
        for (const auto& [x2, y2] : pts) {
          if (x1 < x2 && y1 > y2) return false;
        }
      }
    }
  }
  return true;
}

}  // namespace kr
