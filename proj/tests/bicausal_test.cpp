#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "kr/bicausal.hpp"
#include "support/random_measures.hpp"

using namespace kr;

namespace {

PathMeasure mu0() { return PathMeasure(1, 3, {{1, 1, 0}, {0, 0, 1}}, {0.5, 0.5}); }
PathMeasure mu1() { return PathMeasure(1, 3, {{1, 0, 0}, {0, 1, 1}}, {0.5, 0.5}); }

using Kernel = std::map<double, double>;

// Independent AV oracle for scalar two-step measures: enumerate the vertices
// of the first-stage problem; a pair with equal first states then pays the
// TV distance of its kernels, any other pair pays 1.
double av_two_step_oracle(const PathMeasure& mu, const PathMeasure& nu) {
  std::map<double, double> m1, n1;
  std::map<double, Kernel> mk, nk;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    m1[mu.state(i, 0)[0]] += mu.weight(i);
    mk[mu.state(i, 0)[0]][mu.state(i, 1)[0]] += mu.weight(i);
  }
  for (std::size_t i = 0; i < nu.size(); ++i) {
    n1[nu.state(i, 0)[0]] += nu.weight(i);
    nk[nu.state(i, 0)[0]][nu.state(i, 1)[0]] += nu.weight(i);
  }
  std::vector<double> xs, xw, ys, yw;
  for (auto [x, w] : m1) xs.push_back(x), xw.push_back(w);
  for (auto [y, w] : n1) ys.push_back(y), yw.push_back(w);
  auto tv = [&](double x, double y) {
    std::map<double, double> diff;
    for (auto [v, w] : mk[x]) diff[v] += w / m1[x];
    for (auto [v, w] : nk[y]) diff[v] -= w / n1[y];
    double s = 0.0;
    for (auto [v, d] : diff) s += std::abs(d);
    return 0.5 * s;
  };
  double best = std::numeric_limits<double>::infinity();
  for (const auto& v : enumerate_vertices(xw, yw)) {
    double s = 0.0;
    for (std::size_t r = 0; r < xs.size(); ++r) {
      for (std::size_t c = 0; c < ys.size(); ++c) s += v(r, c) * (xs[r] == ys[c] ? tv(xs[r], ys[c]) : 1.0);
    }
    best = std::min(best, s);
  }
  return best;
}

}  // namespace

TEST(AwDistance, ZeroOnItself) {
  auto rng = testkit::make_rng(41);
  for (int it = 0; it < 50; ++it) {
    const PathMeasure mu = testkit::random_measure(rng, {1 + it % 2, 1, 3, 6, 2, 1.0, false});
    for (double p : {0.0, 1.0, 2.0}) EXPECT_EQ(aw_distance(mu, mu, p).value, 0.0);
  }
}

TEST(AwDistance, CrossPair) {
  const PathMeasure mu(1, 2, {{0, 0}, {1, 1}}, {0.5, 0.5});
  const PathMeasure nu(1, 2, {{0, 1}, {1, 0}}, {0.5, 0.5});
  EXPECT_DOUBLE_EQ(aw_distance(mu, nu, 1.0).value, 1.0);
  EXPECT_DOUBLE_EQ(aw_bruteforce(mu, nu, 1.0), 1.0);
}

TEST(AwDistance, NonMarkovPair) {
  EXPECT_DOUBLE_EQ(aw_distance(mu0(), mu1(), 1.0).value, 1.0);
  EXPECT_DOUBLE_EQ(aw_bruteforce(mu0(), mu1(), 1.0), 1.0);
}

TEST(AwDistance, DiracsPayThePathCost) {
  const PathMeasure a = PathMeasure::dirac(1, 2, {0.0, 0.0}), b = PathMeasure::dirac(1, 2, {3.0, 4.0});
  EXPECT_DOUBLE_EQ(aw_distance(a, b, 1.0).value, 7.0);
  EXPECT_DOUBLE_EQ(aw_distance(a, b, 2.0).value, 5.0);
  EXPECT_DOUBLE_EQ(aw_bruteforce(a, b, 1.0), 7.0);
  EXPECT_DOUBLE_EQ(w_distance(a, b, 1.0), 7.0);
}

TEST(AwDistance, MatchesBruteForce) {
  auto rng = testkit::make_rng(42);
  for (int it = 0; it < 400; ++it) {
    const testkit::MeasureShape shape{1 + (it % 5 == 0), 1, 3, 4, 1 + it % 2, 1.0, it % 4 == 0};
    const PathMeasure a = testkit::random_measure(rng, shape);
    const PathMeasure b = testkit::random_measure(rng, shape, a.steps());
    for (double p : {0.0, 1.0, 2.0}) {
      const double dp = aw_distance(a, b, p).value;
      EXPECT_NEAR(dp, aw_bruteforce(a, b, p), 1e-9) << "it=" << it << " p=" << p;
    }
  }
}

TEST(AwDistance, CouplingIsBicausalAndAttainsTheValue) {
  auto rng = testkit::make_rng(43);
  for (int it = 0; it < 200; ++it) {
    const testkit::MeasureShape shape{1 + it % 2, 1, 4, 6, 2, 1.0, it % 3 == 0};
    const PathMeasure a = testkit::random_measure(rng, shape);
    const PathMeasure b = testkit::random_measure(rng, shape, a.steps());
    for (double p : {1.0, 2.0}) {
      const AwResult r = aw_distance(a, b, p);
      EXPECT_FALSE(r.surrogate_p0);
      EXPECT_TRUE(is_bicausal(r.coupling));
      EXPECT_NEAR(std::pow(coupling_cost(r.coupling, p), 1.0 / p), r.value, 1e-9);
    }
  }
  EXPECT_TRUE(aw_distance(mu0(), mu1(), 0.0).surrogate_p0);
}

TEST(AwDistance, MetricAxioms) {
  auto rng = testkit::make_rng(44);
  for (int it = 0; it < 200; ++it) {
    const testkit::MeasureShape shape{1 + it % 2, 1, 3, 5, 2, 1.0, false};
    const PathMeasure a = testkit::random_measure(rng, shape);
    const PathMeasure b = testkit::random_measure(rng, shape, a.steps());
    const PathMeasure c = testkit::random_measure(rng, shape, a.steps());
    for (double p : {1.0, 2.0}) {
      const double ab = aw_distance(a, b, p).value;
      EXPECT_GE(ab, 0.0);
      EXPECT_NEAR(ab, aw_distance(b, a, p).value, 1e-9);
      EXPECT_LE(ab, aw_distance(a, c, p).value + aw_distance(c, b, p).value + 1e-9);
      EXPECT_EQ(ab == 0.0, a == b);
    }
  }
}

TEST(AwDistance, GrowsWithTheHorizon) {
  auto rng = testkit::make_rng(45);
  for (int it = 0; it < 100; ++it) {
    const PathMeasure a = testkit::random_measure(rng, {1, 2, 4, 6, 2, 1.0, false});
    const PathMeasure b = testkit::random_measure(rng, {1, 2, 4, 6, 2, 1.0, false}, a.steps());
    for (int k = 1; k < a.steps(); ++k) {
      EXPECT_LE(aw_distance(marginal(a, k), marginal(b, k), 1.0).value,
                aw_distance(marginal(a, k + 1), marginal(b, k + 1), 1.0).value + 1e-12);
    }
  }
}

TEST(Chain, WassersteinBelowAdaptedBelowKr) {
  auto rng = testkit::make_rng(46);
  for (int it = 0; it < 300; ++it) {
    const testkit::MeasureShape shape{1, 1, 4, 7, 2, 1.0, it % 2 == 0};
    const PathMeasure a = testkit::random_measure(rng, shape);
    const PathMeasure b = testkit::random_measure(rng, shape, a.steps());
    for (double p : {0.0, 1.0, 2.0, 3.0}) {
      const double w = w_distance(a, b, p), aw = aw_distance(a, b, p).value, k = kr_distance(a, b, p);
      if (p == 0.0) {
        // The p = 0 surrogate charges every stage separately, so only the
        // outer inequality is meaningful here.
        EXPECT_LE(w, k + 1e-9);
        continue;
      }
      EXPECT_LE(w, aw + 1e-9);
      EXPECT_LE(aw, k + 1e-9);
    }
  }
}

TEST(BruteForce, OneStepIsWasserstein) {
  auto rng = testkit::make_rng(47);
  for (int it = 0; it < 100; ++it) {
    const testkit::MeasureShape shape{1 + it % 2, 1, 1, 5, 2, 1.0, true};
    const PathMeasure a = testkit::random_measure(rng, shape), b = testkit::random_measure(rng, shape);
    for (double p : {1.0, 2.0}) EXPECT_NEAR(aw_bruteforce(a, b, p), w_distance(a, b, p), 1e-9);
  }
}

TEST(BruteForce, RefusesHugeInstances) {
  std::vector<std::vector<double>> atoms;
  for (int i = 0; i < 8; ++i) atoms.push_back({double(i)});
  const PathMeasure u(1, 1, atoms, std::vector<double>(8, 0.125));
  EXPECT_THROW(aw_bruteforce(u, u, 1.0), TooLarge);
}

TEST(Wasserstein, Examples) {
  const PathMeasure a(1, 1, {{0}, {1}}, {0.5, 0.5}), b(1, 1, {{0}, {1}}, {0.25, 0.75});
  EXPECT_DOUBLE_EQ(w_distance(a, b, 1.0), 0.25);
  EXPECT_EQ(w_distance(a, a, 2.0), 0.0);
  EXPECT_THROW(w_distance(a, mu0(), 1.0), DimensionMismatch);
}

TEST(AdaptedVariation, Examples) {
  EXPECT_EQ(adapted_variation(mu0(), mu0()), 0.0);
  const PathMeasure a(1, 2, {{0, 0}, {0, 1}}, {0.5, 0.5}), b(1, 2, {{1, 0}, {1, 1}}, {0.5, 0.5});
  EXPECT_EQ(adapted_variation(a, b), 1.0);
  // Equal first marginals but disjoint continuations.
  const PathMeasure c(1, 2, {{0, 2}, {0, 3}}, {0.5, 0.5});
  EXPECT_EQ(adapted_variation(a, c), 1.0);
}

TEST(AdaptedVariation, SmallCounterexampleToTheLinearBound) {
  // mu = (d00 + d01 + d10)/3, nu = (d00 + d11 + d10)/3. TV = 1/3. Stage one
  // couples (2/3, 1/3) with (1/3, 2/3); with a = mass on (0,0) = mass on (1,1)
  // each matched pair still mismatches half the time, so AV = 1 - a and the
  // best choice a = 1/3 gives 2/3 = 2 TV > (2^{N-1} - 1) TV.
  const PathMeasure mu(1, 2, {{0, 0}, {0, 1}, {1, 0}}, {1.0 / 3, 1.0 / 3, 1.0 / 3});
  const PathMeasure nu(1, 2, {{0, 0}, {1, 1}, {1, 0}}, {1.0 / 3, 1.0 / 3, 1.0 / 3});
  EXPECT_NEAR(tv_distance(mu, nu), 1.0 / 3, 1e-15);
  EXPECT_NEAR(adapted_variation(mu, nu), 2.0 / 3, 1e-12);
  EXPECT_NEAR(av_two_step_oracle(mu, nu), 2.0 / 3, 1e-12);
  EXPECT_GT(adapted_variation(mu, nu), (std::pow(2.0, 2 - 1) - 1) * tv_distance(mu, nu));
}

TEST(AdaptedVariation, MatchesTwoStepOracle) {
  auto rng = testkit::make_rng(48);
  for (int it = 0; it < 300; ++it) {
    const PathMeasure a = testkit::random_measure(rng, {1, 2, 2, 6, 1, 1.0, false});
    const PathMeasure b = testkit::random_measure(rng, {1, 2, 2, 6, 1, 1.0, false});
    const double av = adapted_variation(a, b);
    EXPECT_NEAR(av, av_two_step_oracle(a, b), 1e-12);
    EXPECT_LE(tv_distance(a, b), av + 1e-12);
  }
}

TEST(AdaptedVariation, OneStepIsTotalVariation) {
  auto rng = testkit::make_rng(49);
  for (int it = 0; it < 100; ++it) {
    const PathMeasure a = testkit::random_measure(rng, {1, 1, 1, 5, 2, 1.0, false});
    const PathMeasure b = testkit::random_measure(rng, {1, 1, 1, 5, 2, 1.0, false});
    EXPECT_NEAR(adapted_variation(a, b), tv_distance(a, b), 1e-12);
  }
}
