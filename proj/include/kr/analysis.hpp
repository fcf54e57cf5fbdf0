#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "kr/bicausal.hpp"
#include "kr/kernel_tree.hpp"
#include "kr/path_measure.hpp"
#include "kr/transport.hpp"

namespace kr {

struct ModulusQuery {
  PathMeasure mu;
  int split = 1;  // number of leading coordinates forming the A-part
  double delta = 0.0;
  double p = 1.0;
};

// max <B, pi> over pi in Pi(w, w) subject to <A, pi> <= budget, where A has a
// zero diagonal. Solved exactly through the Lagrangian
//   g(l) = max_pi <B - l A, pi>,
// whose minimizer l* is found by intersecting supporting lines (each line
// is a vertex plan returned by ot_exact). The value is attained by mixing the
// two vertices optimal at l*.
inline double budgeted_self_transport(const Matrix& A, const Matrix& B, std::span<const double> w, double budget,
                                      std::size_t max_atoms = 400) {
  const std::size_t n = w.size();
  if (A.rows != n || A.cols != n || B.rows != n || B.cols != n) throw InvalidArgument("modulus: matrix size mismatch");
  if (n > max_atoms) throw TooLarge("modulus: too many atoms for the exact LP");
  struct Line {
    double a, b;  // <A, pi>, <B, pi>
  };
  auto solve = [&](double lambda) {
    CostMatrix c(n, n);
    for (std::size_t k = 0; k < c.data.size(); ++k) c.data[k] = lambda * A.data[k] - B.data[k];
    const StagePlan pl = ot_exact(c, w, w).plan;
    return Line{plan_cost(pl, A), plan_cost(pl, B)};
  };
  double scale = 0.0;
  for (std::size_t k = 0; k < A.data.size(); ++k) scale = std::max({scale, std::abs(A.data[k]), std::abs(B.data[k])});
  const double tol = 1e-12 * (1.0 + scale);
  Line hi = solve(0.0);  // unconstrained maximum
  if (hi.a <= budget + tol) return hi.b;
  // Large multiplier: the A-cost of the optimal plan drops to the budget.
  double lambda = 1.0;
  double min_pos = std::numeric_limits<double>::infinity();
  for (double a : A.data) {
    if (a > 0.0) min_pos = std::min(min_pos, a);
  }
  double max_b = 0.0;
  for (double b : B.data) max_b = std::max(max_b, std::abs(b));
  if (std::isfinite(min_pos)) lambda = std::max(1.0, 4.0 * max_b / min_pos);
  Line lo = solve(lambda);
  for (int it = 0; lo.a > budget + tol; ++it) {
    if (it > 200) throw Error("modulus: multiplier search failed");
    lambda *= 4.0;
    lo = solve(lambda);
  }
  if (std::abs(lo.a - budget) <= tol) return lo.b;
  // hi: a > budget; lo: a <= budget. Chord steps on the concave envelope.
  for (int it = 0; it < 10000; ++it) {
    const double mid = (hi.b - lo.b) / (hi.a - lo.a);
    const Line m = solve(mid);
    const double on_chord = hi.b - mid * hi.a;
    if (m.b - mid * m.a <= on_chord + tol) break;
    if (m.a > budget + tol) {
      hi = m;
    } else if (m.a < budget - tol) {
      lo = m;
    } else {
      return m.b;
    }
  }
  const double theta = (budget - lo.a) / (hi.a - lo.a);
  return lo.b + theta * (hi.b - lo.b);
}

namespace detail {

inline Matrix pairwise_pow(const std::vector<std::vector<double>>& pts, double p) {
  Matrix m(pts.size(), pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (std::size_t j = 0; j < pts.size(); ++j) m(i, j) = i == j ? 0.0 : lp_pow(pts[i], pts[j], p);
  }
  return m;
}

inline double modulus_from(const Matrix& A, const Matrix& B, std::span<const double> w, double delta, double p) {
  if (!(delta >= 0.0)) throw InvalidArgument("modulus: delta must be >= 0");
  if (!(p >= 1.0)) throw InvalidArgument("modulus: p must be >= 1");
  const double budget = std::isinf(delta) ? std::numeric_limits<double>::infinity() : std::pow(delta, p);
  return std::pow(std::max(budgeted_self_transport(A, B, w, budget), 0.0), 1.0 / p);
}

}  // namespace detail

// Modulus of continuity of mu viewed as a law on A x B, where A holds the
// first `split` coordinates of a path (flattened, time-major).
inline double modulus(const ModulusQuery& q) {
  const PathMeasure& mu = q.mu;
  const int total = mu.dim() * mu.steps();
  if (q.split < 1 || q.split >= total || q.split % mu.dim() != 0) {
    throw InvalidArgument("modulus: split must be a whole number of time steps strictly inside the path");
  }
  std::vector<std::vector<double>> xa, xb;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    auto a = mu.atom(i);
    xa.emplace_back(a.begin(), a.begin() + q.split);
    xb.emplace_back(a.begin() + q.split, a.end());
  }
  return detail::modulus_from(detail::pairwise_pow(xa, q.p), detail::pairwise_pow(xb, q.p), mu.weights(), q.delta, q.p);
}

// Law of (x_{1:k-1}, K_k(x_{1:k-1})) with the prefix distance on the first
// factor and W_p between kernels on the second, as A/B matrices.
struct LiftedStage {
  std::vector<double> weights;
  Matrix prefix_cost;  // ||x - x'||_p^p
  Matrix kernel_cost;  // W_p^p(K(x), K(x'))
};

namespace detail {

inline double kernel_wpp(const KernelTree& t, int a, int b, double p) {
  const auto& ca = t[a].children;
  const auto& cb = t[b].children;
  CostMatrix c(ca.size(), cb.size());
  for (std::size_t r = 0; r < ca.size(); ++r) {
    for (std::size_t s = 0; s < cb.size(); ++s) c(r, s) = lp_pow(t[ca[r]].value, t[cb[s]].value, p);
  }
  return ot_exact(c, child_weights(t, a), child_weights(t, b)).value;
}

}  // namespace detail

inline LiftedStage lifted_stage(const PathMeasure& mu, int k, double p) {
  if (k < 2 || k > mu.steps()) throw InvalidArgument("stage index must satisfy 2 <= k <= N");
  if (!(p >= 1.0)) throw InvalidArgument("p must be >= 1");
  const KernelTree t = disintegrate(mu);
  const std::vector<int> nodes = t.level(k - 1);
  LiftedStage out;
  std::vector<std::vector<double>> prefixes;
  for (int n : nodes) {
    out.weights.push_back(t[n].mass);
    prefixes.push_back(t.prefix(n));
  }
  out.prefix_cost = detail::pairwise_pow(prefixes, p);
  out.kernel_cost = Matrix(nodes.size(), nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    for (std::size_t j = i + 1; j < nodes.size(); ++j) {
      const double c = detail::kernel_wpp(t, nodes[i], nodes[j], p);
      out.kernel_cost(i, j) = out.kernel_cost(j, i) = c;
    }
  }
  return out;
}

inline double stage_modulus(const LiftedStage& s, double delta, double p) {
  return detail::modulus_from(s.prefix_cost, s.kernel_cost, s.weights, delta, p);
}

// omega^k_mu(delta).
inline double stage_modulus(const PathMeasure& mu, int k, double delta, double p) {
  return stage_modulus(lifted_stage(mu, k, p), delta, p);
}

namespace detail {

template <class Omega>
double bound_sum(int N, double aw, Omega&& omega) {
  std::vector<double> f{aw};
  for (int k = 2; k <= N; ++k) {
    double arg = aw;
    for (double x : f) arg += x;
    f.push_back(omega(k, arg) + aw);
  }
  double s = 0.0;
  for (double x : f) s += x;
  return s;
}

}  // namespace detail

// sum_k f^k_mu(awdist) with f^1(d) = d, f^k(d) = omega^k(d + sum_{l<k} f^l(d)) + d.
// Every omega^k is evaluated exactly at the argument the recursion needs.
inline double equivalence_bound(const PathMeasure& mu, double awdist, double p) {
  if (!(awdist >= 0.0)) throw InvalidArgument("equivalence_bound: distance must be >= 0");
  std::vector<LiftedStage> stages;
  for (int k = 2; k <= mu.steps(); ++k) stages.push_back(lifted_stage(mu, k, p));
  return detail::bound_sum(mu.steps(), awdist, [&](int k, double d) {
    return stage_modulus(stages[static_cast<std::size_t>(k - 2)], d, p);
  });
}

// Same bound with omega^k tabulated on `delta_grid` (increasing). Between
// nodes the value at the next node up is used, which never undercuts the
// nondecreasing omega; beyond the grid the unconstrained maximum is used.
inline double equivalence_bound(const PathMeasure& mu, double awdist, double p, std::span<const double> delta_grid) {
  if (!(awdist >= 0.0)) throw InvalidArgument("equivalence_bound: distance must be >= 0");
  for (std::size_t i = 0; i < delta_grid.size(); ++i) {
    if (!(delta_grid[i] >= 0.0) || (i > 0 && !(delta_grid[i] > delta_grid[i - 1]))) {
      throw InvalidArgument("equivalence_bound: grid must be nonnegative and strictly increasing");
    }
  }
  std::vector<std::vector<double>> table;
  std::vector<double> cap;
  for (int k = 2; k <= mu.steps(); ++k) {
    const LiftedStage s = lifted_stage(mu, k, p);
    std::vector<double> row;
    for (double d : delta_grid) row.push_back(stage_modulus(s, d, p));
    table.push_back(std::move(row));
    cap.push_back(stage_modulus(s, std::numeric_limits<double>::infinity(), p));
  }
  return detail::bound_sum(mu.steps(), awdist, [&](int k, double d) {
    const auto idx = static_cast<std::size_t>(k - 2);
    auto it = std::lower_bound(delta_grid.begin(), delta_grid.end(), d);
    if (it == delta_grid.end()) return cap[idx];
    return table[idx][static_cast<std::size_t>(it - delta_grid.begin())];
  });
}

// Smallest L with W_p(K_k(x), K_k(x')) <= L ||x - x'||_p over all stages k
// and all pairs of distinct prefixes.
inline double lipschitz_constant(const PathMeasure& mu, double p) {
  if (!(p >= 1.0)) throw InvalidArgument("lipschitz_constant: p must be >= 1");
  const KernelTree t = disintegrate(mu);
  double L = 0.0;
  for (int k = 2; k <= mu.steps(); ++k) {
    const std::vector<int> nodes = t.level(k - 1);
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const auto xi = t.prefix(nodes[i]);
      for (std::size_t j = i + 1; j < nodes.size(); ++j) {
        const double dx = std::pow(lp_pow(xi, t.prefix(nodes[j]), p), 1.0 / p);
        const double dk = std::pow(detail::kernel_wpp(t, nodes[i], nodes[j], p), 1.0 / p);
        if (dk == 0.0) continue;
        if (dx == 0.0) return std::numeric_limits<double>::infinity();
        L = std::max(L, dk / dx);
      }
    }
  }
  return L;
}

}  // namespace kr
