#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kr/errors.hpp"

namespace kr {

inline constexpr double kWeightSumTol = 1e-12;

// Lexicographic three-way comparison of two equally long coordinate runs.
inline int compare_coords(std::span<const double> a, std::span<const double> b) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] < b[i]) return -1;
    if (b[i] < a[i]) return 1;
  }
  return 0;
}

// ||x - y||_p^p summed over coordinates; p == 0 yields the plain l1 distance.
inline double lp_pow(std::span<const double> x, std::span<const double> y, double p) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double diff = std::abs(x[i] - y[i]);
    s += (p == 0.0 || p == 1.0) ? diff : (p == 2.0 ? diff * diff : std::pow(diff, p));
  }
  return s;
}

// Finitely supported probability on (R^d)^N.
//
// Atoms are stored flattened (time-major, N*d doubles each), sorted
// lexicographically, with duplicates merged by summing their weights. The
// constructor validates but never rescales the weights: their sum has to be
// within kWeightSumTol of one.
class PathMeasure {
 public:
  PathMeasure(int dim, int steps, std::vector<std::vector<double>> atoms,
              std::vector<double> weights) {
    std::vector<double> flat;
    const std::size_t len = checked_len(dim, steps);
    flat.reserve(atoms.size() * len);
    for (std::size_t i = 0; i < atoms.size(); ++i) {
      if (atoms[i].size() != len) {
        throw InvalidArgument("atom " + std::to_string(i) + " has " +
                              std::to_string(atoms[i].size()) + " coordinates, expected " +
                              std::to_string(len));
      }
      flat.insert(flat.end(), atoms[i].begin(), atoms[i].end());
    }
    init(dim, steps, std::move(flat), std::move(weights));
  }

  // Flattened-atom constructor; `coords.size()` must be weights.size() * N * d.
  static PathMeasure from_flat(int dim, int steps, std::vector<double> coords,
                               std::vector<double> weights) {
    PathMeasure m;
    const std::size_t len = checked_len(dim, steps);
    if (coords.size() != weights.size() * len) {
      throw InvalidArgument("coordinate buffer does not match the number of weights");
    }
    m.init(dim, steps, std::move(coords), std::move(weights));
    return m;
  }

  static PathMeasure dirac(int dim, int steps, std::vector<double> path) {
    return from_flat(dim, steps, std::move(path), {1.0});
  }

  int dim() const noexcept { return d_; }
  int steps() const noexcept { return N_; }
  std::size_t size() const noexcept { return weights_.size(); }
  std::size_t path_length() const noexcept { return static_cast<std::size_t>(d_) * N_; }

  std::span<const double> atom(std::size_t i) const {
    return {coords_.data() + i * path_length(), path_length()};
  }
  // State of atom i at time step t (0-based).
  std::span<const double> state(std::size_t i, int t) const {
    return {coords_.data() + i * path_length() + static_cast<std::size_t>(t) * d_,
            static_cast<std::size_t>(d_)};
  }
  double weight(std::size_t i) const { return weights_[i]; }
  const std::vector<double>& weights() const noexcept { return weights_; }
  const std::vector<double>& coords() const noexcept { return coords_; }

  std::optional<std::size_t> find(std::span<const double> path) const {
    if (path.size() != path_length()) return std::nullopt;
    std::size_t lo = 0, hi = size();
    while (lo < hi) {
      const std::size_t mid = (lo + hi) / 2;
      const int c = compare_coords(atom(mid), path);
      if (c == 0) return mid;
      if (c < 0) lo = mid + 1; else hi = mid;
    }
    return std::nullopt;
  }

  friend bool operator==(const PathMeasure&, const PathMeasure&) = default;

 private:
  PathMeasure() = default;

  static std::size_t checked_len(int dim, int steps) {
    if (dim <= 0) throw InvalidArgument("d must be positive");
    if (steps <= 0) throw InvalidArgument("N must be positive");
    return static_cast<std::size_t>(dim) * static_cast<std::size_t>(steps);
  }

  void init(int dim, int steps, std::vector<double> coords, std::vector<double> weights) {
    d_ = dim;
    N_ = steps;
    const std::size_t len = path_length();
    const std::size_t n = weights.size();
    if (n == 0) throw InvalidArgument("measure has no atoms");
    for (double& x : coords) {
      if (!std::isfinite(x)) throw InvalidArgument("path entries must be finite");
      x += 0.0;  // -0 -> +0
    }
    for (double w : weights) {
      if (!std::isfinite(w) || !(w > 0.0)) throw InvalidArgument("weights must be positive and finite");
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto at = [&](std::size_t i) { return std::span<const double>(coords.data() + i * len, len); };
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return compare_coords(at(a), at(b)) < 0; });
    coords_.clear();
    weights_.clear();
    coords_.reserve(coords.size());
    weights_.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t i = order[k];
      if (!weights_.empty() && compare_coords(at(order[k - 1]), at(i)) == 0) {
        weights_.back() += weights[i];
        continue;
      }
      coords_.insert(coords_.end(), at(i).begin(), at(i).end());
      weights_.push_back(weights[i]);
    }
    double total = 0.0;
    for (double w : weights_) total += w;
    if (std::abs(total - 1.0) > kWeightSumTol) throw InvalidArgument("weights must sum to 1");
  }

  int d_ = 1;
  int N_ = 1;
  std::vector<double> coords_;
  std::vector<double> weights_;
};

// Pushforward under the projection onto the first k time steps.
inline PathMeasure marginal(const PathMeasure& mu, int k) {
  if (k < 1 || k > mu.steps()) {
    throw InvalidArgument("marginal: k=" + std::to_string(k) + " outside [1, " +
                          std::to_string(mu.steps()) + "]");
  }
  if (k == mu.steps()) return mu;
  std::vector<double> coords;
  const std::size_t len = static_cast<std::size_t>(k) * mu.dim();
  coords.reserve(mu.size() * len);
  for (std::size_t i = 0; i < mu.size(); ++i) {
    auto a = mu.atom(i);
    coords.insert(coords.end(), a.begin(), a.begin() + static_cast<std::ptrdiff_t>(len));
  }
  return PathMeasure::from_flat(mu.dim(), k, std::move(coords), mu.weights());
}

// Total variation distance: half the l1 distance of the weight vectors.
inline double tv_distance(const PathMeasure& mu, const PathMeasure& nu) {
  if (mu.dim() != nu.dim() || mu.steps() != nu.steps()) {
    throw DimensionMismatch("tv_distance: measures live on different path spaces");
  }
  double s = 0.0;
  std::size_t i = 0, j = 0;
  while (i < mu.size() || j < nu.size()) {
    int c = 0;
    if (i == mu.size()) c = 1;
    else if (j == nu.size()) c = -1;
    else c = compare_coords(mu.atom(i), nu.atom(j));
    if (c < 0) s += mu.weight(i++);
    else if (c > 0) s += nu.weight(j++);
    else s += std::abs(mu.weight(i++) - nu.weight(j++));
  }
  return 0.5 * s;
}

inline void require_same_space(const PathMeasure& mu, const PathMeasure& nu, const char* what) {
  if (mu.dim() != nu.dim() || mu.steps() != nu.steps()) {
    throw DimensionMismatch(std::string(what) + ": measures have different (d, N)");
  }
}

}  // namespace kr
