#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <unordered_map>
#include <vector>

#include "kr/kernel_tree.hpp"
#include "kr/kr_metric.hpp"
#include "kr/path_measure.hpp"
#include "kr/transport.hpp"

namespace kr {

struct AwResult {
  double value = 0.0;
  Coupling coupling;
  // p = 0 uses the stage-separable cost sum_k min(||x_k - y_k||_1, 1).
  bool surrogate_p0 = false;
};

namespace detail {

inline std::vector<double> child_weights(const KernelTree& t, int node) {
  std::vector<double> w;
  for (int c : t[node].children) w.push_back(t[c].weight);
  return w;
}

inline double stage_cost(std::span<const double> x, std::span<const double> y, double p) {
  const double c = lp_pow(x, y, p);
  return p == 0.0 ? std::min(c, 1.0) : c;
}

// Backward induction over pairs of kernel-tree nodes of equal depth.
// `edge(ci, cj, V)` returns the cost of sending child ci to child cj, where
// V(ci, cj) is the continuation value. Only pairs reached from the root pair
// through some stage problem are ever evaluated.
class NestedDp {
 public:
  using Edge = std::function<double(int, int, const std::function<double(int, int)>&)>;

  NestedDp(const KernelTree& a, const KernelTree& b, Edge edge) : a_(a), b_(b), edge_(std::move(edge)) {}

  double value(int i, int j) {
    const std::uint64_t key = static_cast<std::uint64_t>(i) * b_.nodes.size() + static_cast<std::uint64_t>(j);
    if (auto it = memo_.find(key); it != memo_.end()) return it->second.value;
    if (a_[i].depth == a_.steps) {
      memo_.emplace(key, OtResult{});
      return 0.0;
    }
    const auto& ca = a_[i].children;
    const auto& cb = b_[j].children;
    CostMatrix cost(ca.size(), cb.size());
    const std::function<double(int, int)> cont = [this](int x, int y) { return value(x, y); };
    for (std::size_t r = 0; r < ca.size(); ++r) {
      for (std::size_t c = 0; c < cb.size(); ++c) cost(r, c) = edge_(ca[r], cb[c], cont);
    }
    OtResult res = ot_exact(cost, child_weights(a_, i), child_weights(b_, j));
    const double v = res.value;
    memo_.emplace(key, std::move(res));
    return v;
  }

  const OtResult& plan(int i, int j) const {
    return memo_.at(static_cast<std::uint64_t>(i) * b_.nodes.size() + static_cast<std::uint64_t>(j));
  }

  // Glues the optimal stage plans into a coupling of the two measures.
  Coupling glue(const PathMeasure& mu, const PathMeasure& nu) {
    value(0, 0);
    std::vector<CouplingEntry> entries;
    std::function<void(int, int, double)> walk = [&](int i, int j, double mass) {
      if (a_[i].depth == a_.steps) {
        entries.push_back({static_cast<std::size_t>(a_[i].atom), static_cast<std::size_t>(b_[j].atom), mass});
        return;
      }
      const StagePlan& pl = plan(i, j).plan;
      for (std::size_t r = 0; r < pl.rows; ++r) {
        for (std::size_t c = 0; c < pl.cols; ++c) {
          if (pl(r, c) > 0.0) walk(a_[i].children[r], b_[j].children[c], mass * pl(r, c));
        }
      }
    };
    walk(0, 0, 1.0);
    return Coupling(mu, nu, std::move(entries));
  }

 private:
  const KernelTree& a_;
  const KernelTree& b_;
  Edge edge_;
  std::unordered_map<std::uint64_t, OtResult> memo_;
};

inline double root_of(double cost, double p) { return p == 0.0 ? cost : std::pow(std::max(cost, 0.0), 1.0 / p); }

}  // namespace detail

// Adapted Wasserstein distance by backward induction over prefix pairs.
// For p = 0 the stage-separable surrogate is used and flagged.
inline AwResult aw_distance(const PathMeasure& mu, const PathMeasure& nu, double p) {
  require_same_space(mu, nu, "aw_distance");
  detail::check_p(p);
  const KernelTree ta = disintegrate(mu), tb = disintegrate(nu);
  detail::NestedDp dp(ta, tb, [&](int ci, int cj, const std::function<double(int, int)>& V) {
    return detail::stage_cost(ta[ci].value, tb[cj].value, p) + V(ci, cj);
  });
  const double cost = dp.value(0, 0);
  return AwResult{detail::root_of(cost, p), dp.glue(mu, nu), p == 0.0};
}

// Oracle: minimum over all compositions of vertex plans of the stage
// problems. Every node pair that some vertex of its parent problem can reach
// gets its own list of vertices; the compositions are then enumerated
// exhaustively. Throws TooLarge beyond `max_compositions`.
inline double aw_bruteforce(const PathMeasure& mu, const PathMeasure& nu, double p,
                            double max_compositions = 1e6) {
  require_same_space(mu, nu, "aw_bruteforce");
  detail::check_p(p);
  const KernelTree ta = disintegrate(mu), tb = disintegrate(nu);
  struct Pair {
    int i, j;
    std::vector<StagePlan> vertices;
    CostMatrix cost;
  };
  std::vector<Pair> pairs;
  std::map<std::pair<int, int>, std::size_t> index;
  std::vector<std::pair<int, int>> queue{{0, 0}};
  index[{0, 0}] = 0;
  double combos = 1.0;
  for (std::size_t h = 0; h < queue.size(); ++h) {
    const auto [i, j] = queue[h];
    Pair pr{i, j, {}, {}};
    if (ta[i].depth < ta.steps) {
      const auto& ca = ta[i].children;
      const auto& cb = tb[j].children;
      pr.cost = CostMatrix(ca.size(), cb.size());
      for (std::size_t r = 0; r < ca.size(); ++r) {
        for (std::size_t c = 0; c < cb.size(); ++c) pr.cost(r, c) = detail::stage_cost(ta[ca[r]].value, tb[cb[c]].value, p);
      }
      pr.vertices = enumerate_vertices(detail::child_weights(ta, i), detail::child_weights(tb, j));
      combos *= static_cast<double>(pr.vertices.size());
      if (combos > max_compositions) throw TooLarge("aw_bruteforce: too many stage-plan compositions");
      for (const auto& v : pr.vertices) {
        for (std::size_t r = 0; r < v.rows; ++r) {
          for (std::size_t c = 0; c < v.cols; ++c) {
            if (v(r, c) <= 0.0) continue;
            const std::pair<int, int> key{ca[r], cb[c]};
            if (index.emplace(key, queue.size()).second) queue.push_back(key);
          }
        }
      }
    }
    pairs.push_back(std::move(pr));
  }
  std::vector<std::size_t> choice(pairs.size(), 0);
  double best = std::numeric_limits<double>::infinity();
  std::function<double(std::size_t)> eval = [&](std::size_t q) -> double {
    const Pair& pr = pairs[q];
    if (pr.vertices.empty()) return 0.0;
    const StagePlan& v = pr.vertices[choice[q]];
    double s = 0.0;
    for (std::size_t r = 0; r < v.rows; ++r) {
      for (std::size_t c = 0; c < v.cols; ++c) {
        if (v(r, c) <= 0.0) continue;
        const int ci = ta[pr.i].children[r], cj = tb[pr.j].children[c];
        s += v(r, c) * (pr.cost(r, c) + eval(index.at({ci, cj})));
      }
    }
    return s;
  };
  while (true) {
    best = std::min(best, eval(0));
    std::size_t q = 0;
    for (; q < pairs.size(); ++q) {
      if (pairs[q].vertices.empty()) continue;
      if (++choice[q] < pairs[q].vertices.size()) break;
      choice[q] = 0;
    }
    if (q == pairs.size()) break;
  }
  return detail::root_of(best, p);
}

// Plain Wasserstein distance between the path laws.
inline double w_distance(const PathMeasure& mu, const PathMeasure& nu, double p) {
  require_same_space(mu, nu, "w_distance");
  detail::check_p(p);
  CostMatrix cost(mu.size(), nu.size());
  for (std::size_t i = 0; i < mu.size(); ++i) {
    for (std::size_t j = 0; j < nu.size(); ++j) cost(i, j) = detail::stage_cost(mu.atom(i), nu.atom(j), p);
  }
  return detail::root_of(ot_exact(cost, mu.weights(), nu.weights()).value, p);
}

// inf over bicausal couplings of pi(x != y). Once two prefixes disagree the
// pair is charged 1 and nothing downstream matters.
inline double adapted_variation(const PathMeasure& mu, const PathMeasure& nu) {
  require_same_space(mu, nu, "adapted_variation");
  const KernelTree ta = disintegrate(mu), tb = disintegrate(nu);
  detail::NestedDp dp(ta, tb, [&](int ci, int cj, const std::function<double(int, int)>& V) {
    return ta[ci].value == tb[cj].value ? V(ci, cj) : 1.0;
  });
  return dp.value(0, 0);
}

// Structural bicausality check: at every prefix pair charged by pi, the
// conditional law of the next x-state is the kernel of mu at the x-prefix and
// likewise for y (total variation <= tol).
inline bool is_bicausal(const Coupling& pi, double tol = 1e-9) {
  const PathMeasure& mu = pi.left();
  const PathMeasure& nu = pi.right();
  const int N = mu.steps();
  const std::size_t dx = static_cast<std::size_t>(mu.dim()), dy = static_cast<std::size_t>(nu.dim());
  auto slice = [](std::span<const double> a, std::size_t from, std::size_t len) {
    return std::vector<double>(a.begin() + static_cast<std::ptrdiff_t>(from),
                               a.begin() + static_cast<std::ptrdiff_t>(from + len));
  };
  auto kernels = [&](const PathMeasure& m, std::size_t d, int k) {
    std::map<std::vector<double>, detail::Law> out;
    for (std::size_t i = 0; i < m.size(); ++i) {
      out[slice(m.atom(i), 0, k * d)][slice(m.atom(i), k * d, d)] += m.weight(i);
    }
    for (auto& [key, law] : out) {
      double s = 0.0;
      for (auto& [v, w] : law) s += w;
      for (auto& [v, w] : law) w /= s;
    }
    return out;
  };
  for (int k = 0; k < N; ++k) {
    const auto kx = kernels(mu, dx, k), ky = kernels(nu, dy, k);
    struct Cond {
      double mass = 0.0;
      detail::Law x, y;
    };
    std::map<std::pair<std::vector<double>, std::vector<double>>, Cond> conds;
    for (const auto& e : pi.entries()) {
      auto x = mu.atom(e.left), y = nu.atom(e.right);
      Cond& c = conds[{slice(x, 0, k * dx), slice(y, 0, k * dy)}];
      c.mass += e.weight;
      c.x[slice(x, k * dx, dx)] += e.weight;
      c.y[slice(y, k * dy, dy)] += e.weight;
    }
    for (auto& [key, c] : conds) {
      for (auto& [v, w] : c.x) w /= c.mass;
      for (auto& [v, w] : c.y) w /= c.mass;
      if (detail::tv(c.x, kx.at(key.first)) > tol || detail::tv(c.y, ky.at(key.second)) > tol) return false;
    }
  }
  return true;
}

}  // namespace kr
