#pragma once

#include <array>
#include <cmath>
#include <numbers>

namespace kr {

// Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1].
template <int n>
struct GaussLegendre {
  std::array<double, n> nodes{};
  std::array<double, n> weights{};

  GaussLegendre() {
    for (int i = 0; i < (n + 1) / 2; ++i) {
      double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
      double dp = 0.0;
      for (int iter = 0; iter < 100; ++iter) {
        double p1 = 1.0, p2 = 0.0;
        for (int j = 1; j <= n; ++j) {
          const double p3 = p2;
          p2 = p1;
          p1 = ((2.0 * j - 1.0) * z * p2 - (j - 1.0) * p3) / j;
        }
        dp = n * (z * p1 - p2) / (z * z - 1.0);
        const double z1 = z;
        z = z1 - p1 / dp;
        if (std::abs(z - z1) < 1e-15) break;
      }
      nodes[static_cast<std::size_t>(i)] = -z;
      nodes[static_cast<std::size_t>(n - 1 - i)] = z;
      const double w = 2.0 / ((1.0 - z * z) * dp * dp);
      weights[static_cast<std::size_t>(i)] = w;
      weights[static_cast<std::size_t>(n - 1 - i)] = w;
    }
  }

  template <class F>
  double integrate(F&& f, double lo, double hi) const {
    const double half = 0.5 * (hi - lo), mid = 0.5 * (hi + lo);
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += weights[static_cast<std::size_t>(i)] * f(mid + half * nodes[static_cast<std::size_t>(i)]);
    return s * half;
  }
};

inline const GaussLegendre<32>& gauss_legendre32() {
  static const GaussLegendre<32> rule;
  return rule;
}

}  // namespace kr
