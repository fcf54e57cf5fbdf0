#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "kr/gauss_legendre.hpp"
#include "kr/kernel_tree.hpp"
#include "kr/path_measure.hpp"

namespace kr {

// Increasing step function Q with Q_#(lambda) = rho for a discrete rho on R.
// Q(u) = values[i] for u in [breakpoints[i-1], breakpoints[i]).
struct QuantileFunction1D {
  std::vector<double> breakpoints;
  std::vector<double> values;

  double operator()(double u) const {
    auto it = std::upper_bound(breakpoints.begin(), breakpoints.end(), u);
    if (it == breakpoints.end()) --it;
    return values[static_cast<std::size_t>(it - breakpoints.begin())];
  }
};

inline QuantileFunction1D quantile_1d(const PathMeasure& rho) {
  if (rho.dim() != 1 || rho.steps() != 1) throw InvalidArgument("quantile_1d needs a one-step scalar measure");
  QuantileFunction1D q;
  double cum = 0.0;
  for (std::size_t i = 0; i < rho.size(); ++i) {
    cum += rho.weight(i);
    q.breakpoints.push_back(cum);
    q.values.push_back(rho.atom(i)[0]);
  }
  q.breakpoints.back() = 1.0;
  return q;
}

// One piece [previous upper, upper) of a node's partition of (0,1); the k-th
// output there is offset + slope * u_k. `mass` is the lambda^N-measure of the
// cylinder cell ending in this segment.
struct Segment {
  double upper = 1.0;
  double offset = 0.0;
  double slope = 0.0;
  double mass = 0.0;
  int child = -1;
};

struct MapNode {
  int depth = 0;
  std::vector<Segment> segments;
};

// Piecewise-affine triangular map (0,1)^N -> R^N stored as a recursive
// interval tree. Node 0 is the root; a node at depth k defines output k+1.
class TriangularMap {
 public:
  TriangularMap(int steps, std::vector<MapNode> nodes, bool recompute_masses = true)
      : N_(steps), nodes_(std::move(nodes)) {
    if (N_ <= 0) throw InvalidArgument("map needs at least one step");
    if (nodes_.empty()) throw InvalidArgument("map has no root node");
    validate(0, 0);
    if (recompute_masses) assign_masses(0, 1.0);
  }

  static TriangularMap identity(int steps) { return affine_chain(steps, 0.0, 1.0); }

  // The map sending every u to `path`.
  static TriangularMap constant(std::span<const double> path) {
    std::vector<MapNode> nodes;
    for (std::size_t k = 0; k < path.size(); ++k) {
      MapNode n;
      n.depth = static_cast<int>(k);
      n.segments.push_back({1.0, path[k], 0.0, 1.0, k + 1 < path.size() ? static_cast<int>(k + 1) : -1});
      nodes.push_back(std::move(n));
    }
    return TriangularMap(static_cast<int>(path.size()), std::move(nodes));
  }

  int steps() const noexcept { return N_; }
  const std::vector<MapNode>& nodes() const noexcept { return nodes_; }
  const MapNode& node(int i) const { return nodes_[static_cast<std::size_t>(i)]; }

  bool piecewise_constant() const {
    for (const auto& n : nodes_) {
      for (const auto& s : n.segments) {
        if (s.slope != 0.0) return false;
      }
    }
    return true;
  }

  std::vector<double> operator()(std::span<const double> u) const {
    if (u.size() != static_cast<std::size_t>(N_)) throw DimensionMismatch("map evaluated at a point of wrong length");
    std::vector<double> out;
    int id = 0;
    for (int k = 0; k < N_; ++k) {
      const auto& segs = nodes_[static_cast<std::size_t>(id)].segments;
      auto it = std::upper_bound(segs.begin(), segs.end(), u[static_cast<std::size_t>(k)],
                                 [](double x, const Segment& s) { return x < s.upper; });
      if (it == segs.end()) --it;
      out.push_back(it->offset + it->slope * u[static_cast<std::size_t>(k)]);
      id = it->child;
    }
    return out;
  }

 private:
  static TriangularMap affine_chain(int steps, double offset, double slope) {
    std::vector<MapNode> nodes;
    for (int k = 0; k < steps; ++k) {
      MapNode n;
      n.depth = k;
      n.segments.push_back({1.0, offset, slope, 1.0, k + 1 < steps ? k + 1 : -1});
      nodes.push_back(std::move(n));
    }
    return TriangularMap(steps, std::move(nodes));
  }

  void validate(int id, int depth) const {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) throw InvalidArgument("map child index out of range");
    const MapNode& n = nodes_[static_cast<std::size_t>(id)];
    if (n.depth != depth) throw InvalidArgument("map node depth inconsistent with its position");
    if (n.segments.empty()) throw InvalidArgument("map node without segments");
    double prev = 0.0;
    for (const auto& s : n.segments) {
      if (!(s.upper > prev) || s.upper > 1.0) throw InvalidArgument("breakpoints must increase strictly within (0,1]");
      if (!std::isfinite(s.offset) || !std::isfinite(s.slope)) throw InvalidArgument("segment values must be finite");
      if (s.slope < 0.0) throw InvalidArgument("segment slopes must be nonnegative");
      prev = s.upper;
      if (depth + 1 < N_) validate(s.child, depth + 1);
      else if (s.child != -1) throw InvalidArgument("leaf segment with a child");
    }
    if (prev != 1.0) throw InvalidArgument("last breakpoint must be 1");
  }

  void assign_masses(int id, double mass) {
    double lo = 0.0;
    for (auto& s : nodes_[static_cast<std::size_t>(id)].segments) {
      s.mass = mass * (s.upper - lo);
      lo = s.upper;
      if (s.child >= 0) assign_masses(s.child, s.mass);
    }
  }

  int N_;
  std::vector<MapNode> nodes_;
};

namespace detail {

// Calls f(lo, hi, i, j) for every nonempty cell of the common refinement of
// two node partitions.
template <class F>
void for_each_overlap(const MapNode& a, const MapNode& b, F&& f) {
  std::size_t i = 0, j = 0;
  double lo = 0.0;
  while (i < a.segments.size() && j < b.segments.size()) {
    const double ua = a.segments[i].upper, ub = b.segments[j].upper;
    const double hi = std::min(ua, ub);
    if (hi > lo) f(lo, hi, i, j);
    lo = std::max(lo, hi);
    if (ua == hi) ++i;
    if (ub == hi) ++j;
  }
}

// Integral of |alpha + beta*u|^p over [lo, hi], p > 0.
inline double abs_affine_power_integral(double alpha, double beta, double lo, double hi, double p) {
  auto powabs = [p](double t) { return p == 1.0 ? std::abs(t) : (p == 2.0 ? t * t : std::pow(std::abs(t), p)); };
  if (beta == 0.0) return (hi - lo) * powabs(alpha);
  const double tlo = alpha + beta * lo, thi = alpha + beta * hi;
  // One-sided antiderivative |t|^(p+1) / ((p+1)|beta|), measured from the root.
  auto from_root = [&](double t) { return std::pow(std::abs(t), p + 1.0) / ((p + 1.0) * std::abs(beta)); };
  if ((tlo < 0.0 && thi > 0.0) || (tlo > 0.0 && thi < 0.0)) return from_root(tlo) + from_root(thi);
  const double big = std::max(std::abs(tlo), std::abs(thi));
  if (std::abs(thi - tlo) >= 1e-3 * big) return std::abs(from_root(thi) - from_root(tlo));
  return gauss_legendre32().integrate([&](double u) { return powabs(alpha + beta * u); }, lo, hi);
}

inline void check_p(double p) {
  if (!(p == 0.0 || p >= 1.0) || !std::isfinite(p)) throw InvalidArgument("p must be 0 or lie in [1, inf)");
}

inline double lp_map_distance(const TriangularMap& t, int a, const TriangularMap& s, int b, double p) {
  double total = 0.0;
  for_each_overlap(t.node(a), s.node(b), [&](double lo, double hi, std::size_t i, std::size_t j) {
    const Segment& x = t.node(a).segments[i];
    const Segment& y = s.node(b).segments[j];
    total += abs_affine_power_integral(x.offset - y.offset, x.slope - y.slope, lo, hi, p);
    if (x.child >= 0) total += (hi - lo) * lp_map_distance(t, x.child, s, y.child, p);
  });
  return total;
}

// E[min(acc + sum_k |T_k - S_k|, 1)] over the remaining coordinates.
inline double truncated_map_distance(const TriangularMap& t, int a, const TriangularMap& s, int b, double acc) {
  if (acc >= 1.0) return 1.0;
  double total = 0.0;
  const auto& rule = gauss_legendre32();
  for_each_overlap(t.node(a), s.node(b), [&](double lo, double hi, std::size_t i, std::size_t j) {
    const Segment& x = t.node(a).segments[i];
    const Segment& y = s.node(b).segments[j];
    const double da = x.offset - y.offset, dc = x.slope - y.slope;
    auto tail = [&](double u) {
      const double next = acc + std::abs(da + dc * u);
      return x.child >= 0 ? truncated_map_distance(t, x.child, s, y.child, next) : std::min(next, 1.0);
    };
    if (dc == 0.0) {
      total += (hi - lo) * tail(lo);
      return;
    }
    // split at the sign change and at the truncation level so leaf cells are exact
    std::vector<double> cuts{lo, hi};
    for (double level : {0.0, 1.0 - acc, acc - 1.0}) {
      const double u = (level - da) / dc;
      if (u > lo && u < hi) cuts.push_back(u);
    }
    std::sort(cuts.begin(), cuts.end());
    for (std::size_t c = 0; c + 1 < cuts.size(); ++c) total += rule.integrate(tail, cuts[c], cuts[c + 1]);
  });
  return total;
}

inline bool same_nodes(const std::vector<MapNode>& ta, int a, const std::vector<MapNode>& tb, int b) {
  const auto& x = ta[static_cast<std::size_t>(a)].segments;
  const auto& y = tb[static_cast<std::size_t>(b)].segments;
  if (x.size() != y.size()) return false;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i].upper != y[i].upper || x[i].offset != y[i].offset || x[i].slope != y[i].slope) return false;
    if ((x[i].child < 0) != (y[i].child < 0)) return false;
    if (x[i].child >= 0 && !same_nodes(ta, x[i].child, tb, y[i].child)) return false;
  }
  return true;
}

inline bool same_subtree(const TriangularMap& t, int a, const TriangularMap& s, int b) {
  return same_nodes(t.nodes(), a, s.nodes(), b);
}

}  // namespace detail

// Segment-for-segment equality of two maps (masses are ignored).
inline bool same_map(const TriangularMap& t, const TriangularMap& s) {
  return t.steps() == s.steps() && detail::same_subtree(t, 0, s, 0);
}

// Quantile process of a scalar path measure: level-k segments are the
// quantile function of the step-k kernel given the values chosen above.
inline TriangularMap quantile_process(const PathMeasure& mu) {
  if (mu.dim() != 1) throw DimensionMismatch("quantile_process is defined for d = 1");
  const KernelTree tree = disintegrate(mu);
  std::vector<MapNode> nodes;
  std::function<int(int)> build = [&](int kid) {
    const auto& kn = tree[kid];
    const int id = static_cast<int>(nodes.size());
    nodes.push_back(MapNode{kn.depth, {}});
    double cum = 0.0;
    std::vector<Segment> segs;
    for (std::size_t c = 0; c < kn.children.size(); ++c) {
      const auto& ch = tree[kn.children[c]];
      cum += ch.mass;
      Segment s;
      s.upper = c + 1 == kn.children.size() ? 1.0 : cum / kn.mass;
      s.offset = ch.value[0];
      s.mass = ch.mass;
      s.child = ch.depth < tree.steps ? build(kn.children[c]) : -1;
      segs.push_back(s);
    }
    nodes[static_cast<std::size_t>(id)].segments = std::move(segs);
    return id;
  };
  build(0);
  return TriangularMap(mu.steps(), std::move(nodes), /*recompute_masses=*/false);
}

// Law of a piecewise-constant map under lambda^N.
inline PathMeasure pushforward(const TriangularMap& t) {
  if (!t.piecewise_constant()) throw NotPiecewiseConstant();
  std::vector<double> coords, weights, path;
  std::function<void(int)> walk = [&](int id) {
    for (const auto& s : t.node(id).segments) {
      path.push_back(s.offset);
      if (s.child >= 0) {
        walk(s.child);
      } else {
        coords.insert(coords.end(), path.begin(), path.end());
        weights.push_back(s.mass);
      }
      path.pop_back();
    }
  };
  walk(0);
  return PathMeasure::from_flat(1, t.steps(), std::move(coords), std::move(weights));
}

// Condition (inc): within every node the values never decrease in u.
inline bool is_triangular_increasing(const TriangularMap& t, double tol = 1e-12) {
  for (const auto& n : t.nodes()) {
    for (std::size_t i = 0; i + 1 < n.segments.size(); ++i) {
      const Segment& a = n.segments[i];
      const Segment& b = n.segments[i + 1];
      const double end = a.offset + a.slope * a.upper, start = b.offset + b.slope * a.upper;
      if (end > start + tol * (1.0 + std::abs(end))) return false;
    }
  }
  return true;
}

// Condition (sinc): strictly increasing along every segment.
inline bool is_strictly_increasing(const TriangularMap& t, double tol = 1e-12) {
  for (const auto& n : t.nodes()) {
    for (const auto& s : n.segments) {
      if (!(s.slope > 0.0)) return false;
    }
  }
  return is_triangular_increasing(t, tol);
}

// Condition (con): runs of adjacent flat segments sharing a value carry
// identical continuations.
inline bool is_consistent(const TriangularMap& t) {
  for (const auto& n : t.nodes()) {
    for (std::size_t i = 0; i + 1 < n.segments.size(); ++i) {
      const Segment& a = n.segments[i];
      const Segment& b = n.segments[i + 1];
      if (a.slope != 0.0 || b.slope != 0.0 || a.offset != b.offset) continue;
      if (a.child >= 0 && !detail::same_subtree(t, a.child, t, b.child)) return false;
    }
  }
  return true;
}

// Merges adjacent flat segments with equal value and identical subtrees.
inline TriangularMap canonicalize(const TriangularMap& t) {
  std::vector<MapNode> out;
  std::function<int(int)> rebuild = [&](int id) -> int {
    const MapNode& src = t.node(id);
    const int nid = static_cast<int>(out.size());
    out.push_back(MapNode{src.depth, {}});
    std::vector<Segment> merged;
    for (Segment s : src.segments) {
      if (s.child >= 0) s.child = rebuild(s.child);
      if (!merged.empty()) {
        Segment& last = merged.back();
        const bool flat_equal = last.slope == 0.0 && s.slope == 0.0 && last.offset == s.offset;
        if (flat_equal && (s.child < 0 || detail::same_nodes(out, last.child, out, s.child))) {
          last.upper = s.upper;
          last.mass += s.mass;
          continue;  // the duplicate subtree stays in the arena unreferenced
        }
      }
      merged.push_back(s);
    }
    out[static_cast<std::size_t>(nid)].segments = std::move(merged);
    return nid;
  };
  rebuild(0);
  // Compact away unreferenced nodes.
  std::vector<MapNode> compact;
  std::function<int(int)> copy = [&](int id) -> int {
    const int nid = static_cast<int>(compact.size());
    compact.push_back(MapNode{out[static_cast<std::size_t>(id)].depth, {}});
    std::vector<Segment> segs = out[static_cast<std::size_t>(id)].segments;
    for (auto& s : segs) {
      if (s.child >= 0) s.child = copy(s.child);
    }
    compact[static_cast<std::size_t>(nid)].segments = std::move(segs);
    return nid;
  };
  copy(0);
  return TriangularMap(t.steps(), std::move(compact), /*recompute_masses=*/false);
}

// || T - S ||_p^p = integral of sum_k |T_k - S_k|^p for p >= 1; for p = 0 the
// integral of min(sum_k |T_k - S_k|, 1). Cells of the common refinement are
// integrated in closed form; only the truncated p = 0 case with sloped
// segments falls back to 32-point Gauss-Legendre.
inline double map_distance_pow(const TriangularMap& t, const TriangularMap& s, double p) {
  detail::check_p(p);
  if (t.steps() != s.steps()) throw DimensionMismatch("map_distance: maps have different N");
  if (p == 0.0) return detail::truncated_map_distance(t, 0, s, 0, 0.0);
  return detail::lp_map_distance(t, 0, s, 0, p);
}

// The L_p distance itself (p-th root taken for p >= 1).
inline double map_distance(const TriangularMap& t, const TriangularMap& s, double p) {
  const double v = map_distance_pow(t, s, p);
  return p == 0.0 ? v : std::pow(v, 1.0 / p);
}

// Adds eps * u_k to the k-th output.
inline TriangularMap perturb(const TriangularMap& t, double eps) {
  if (!(eps >= 0.0)) throw InvalidArgument("perturb: eps must be nonnegative");
  std::vector<MapNode> nodes = t.nodes();
  for (auto& n : nodes) {
    for (auto& s : n.segments) s.slope += eps;
  }
  return TriangularMap(t.steps(), std::move(nodes), /*recompute_masses=*/false);
}

// Pointwise convex combination sum_i coeffs[i] * maps[i] on the common
// refinement of all partitions.
inline TriangularMap convex_combine(std::span<const TriangularMap> maps, std::span<const double> coeffs) {
  if (maps.empty() || maps.size() != coeffs.size()) throw InvalidArgument("convex_combine: need one coefficient per map");
  double total = 0.0;
  for (double c : coeffs) {
    if (!(c >= 0.0)) throw InvalidArgument("convex_combine: coefficients must be nonnegative");
    total += c;
  }
  if (std::abs(total - 1.0) > kWeightSumTol) throw InvalidArgument("convex_combine: coefficients must sum to 1");
  const int N = maps.front().steps();
  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < maps.size(); ++i) {
    if (maps[i].steps() != N) throw DimensionMismatch("convex_combine: maps have different N");
    if (coeffs[i] > 0.0) active.push_back(i);
  }
  std::vector<MapNode> out;
  std::function<int(const std::vector<int>&, int, double)> build = [&](const std::vector<int>& ids, int depth,
                                                                     double mass) -> int {
    const int nid = static_cast<int>(out.size());
    out.push_back(MapNode{depth, {}});
    std::vector<double> cuts;
    for (std::size_t a = 0; a < active.size(); ++a) {
      for (const auto& s : maps[active[a]].node(ids[a]).segments) cuts.push_back(s.upper);
    }
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    std::vector<std::size_t> pos(active.size(), 0);
    std::vector<Segment> segs;
    double lo = 0.0;
    for (double hi : cuts) {
      Segment seg;
      seg.upper = hi;
      seg.mass = mass * (hi - lo);
      std::vector<int> kids(active.size(), -1);
      for (std::size_t a = 0; a < active.size(); ++a) {
        const auto& src = maps[active[a]].node(ids[a]).segments;
        while (src[pos[a]].upper < hi) ++pos[a];
        const Segment& s = src[pos[a]];
        seg.offset += coeffs[active[a]] * s.offset;
        seg.slope += coeffs[active[a]] * s.slope;
        kids[a] = s.child;
      }
      if (depth + 1 < N) seg.child = build(kids, depth + 1, seg.mass);
      segs.push_back(seg);
      lo = hi;
    }
    out[static_cast<std::size_t>(nid)].segments = std::move(segs);
    return nid;
  };
  build(std::vector<int>(active.size(), 0), 0, 1.0);
  return TriangularMap(N, std::move(out), /*recompute_masses=*/false);
}

// JSON form: nested {"breaks": [...], "values": [[a, c], ...], "children": [...]};
// nodes of the last level omit "children".
inline nlohmann::json map_to_json(const TriangularMap& t, int id = 0) {
  nlohmann::json j;
  j["breaks"] = nlohmann::json::array();
  j["values"] = nlohmann::json::array();
  nlohmann::json kids = nlohmann::json::array();
  for (const auto& s : t.node(id).segments) {
    j["breaks"].push_back(s.upper);
    j["values"].push_back({s.offset, s.slope});
    if (s.child >= 0) kids.push_back(map_to_json(t, s.child));
  }
  if (!kids.empty()) j["children"] = std::move(kids);
  return j;
}

inline TriangularMap map_from_json(const nlohmann::json& doc) {
  std::vector<MapNode> nodes;
  int steps = -1;
  std::function<int(const nlohmann::json&, int, const std::string&)> read =
      [&](const nlohmann::json& j, int depth, const std::string& where) -> int {
    if (!j.is_object() || !j.contains("breaks") || !j.contains("values") || !j["breaks"].is_array() ||
        !j["values"].is_array()) {
      throw ParseError(where, "expected an object with \"breaks\" and \"values\" arrays");
    }
    const auto& br = j["breaks"];
    const auto& vals = j["values"];
    if (br.size() != vals.size() || br.empty()) throw ParseError(where, "breaks and values must have equal nonzero length");
    const bool leaf = !j.contains("children");
    if (leaf) {
      if (steps == -1) steps = depth + 1;
      if (steps != depth + 1) throw ParseError(where, "leaves at different depths");
    } else if (!j["children"].is_array() || j["children"].size() != br.size()) {
      throw ParseError(where + "/children", "need one child per segment");
    }
    const int id = static_cast<int>(nodes.size());
    nodes.push_back(MapNode{depth, {}});
    std::vector<Segment> segs;
    for (std::size_t i = 0; i < br.size(); ++i) {
      const auto& v = vals[i];
      if (!br[i].is_number()) throw ParseError(where + "/breaks/" + std::to_string(i), "expected a number");
      if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
        throw ParseError(where + "/values/" + std::to_string(i), "expected [offset, slope]");
      }
      Segment s;
      s.upper = br[i].get<double>();
      s.offset = v[0].get<double>();
      s.slope = v[1].get<double>();
      if (!leaf) s.child = read(j["children"][i], depth + 1, where + "/children/" + std::to_string(i));
      segs.push_back(s);
    }
    nodes[static_cast<std::size_t>(id)].segments = std::move(segs);
    return id;
  };
  read(doc, 0, "");
  try {
    return TriangularMap(steps, std::move(nodes));
  } catch (const InvalidArgument& e) {
    throw ParseError("", e.what());
  }
}

}  // namespace kr
