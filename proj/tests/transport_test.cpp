#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numeric>

#include "kr/transport.hpp"
#include "support/random_measures.hpp"

using namespace kr;

namespace {

void expect_marginals(const StagePlan& plan, std::span<const double> r, std::span<const double> c, double tol = 1e-12) {
  for (std::size_t i = 0; i < plan.rows; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < plan.cols; ++j) {
      EXPECT_GE(plan(i, j), 0.0);
      s += plan(i, j);
    }
    EXPECT_NEAR(s, r[i], tol);
  }
  for (std::size_t j = 0; j < plan.cols; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < plan.rows; ++i) s += plan(i, j);
    EXPECT_NEAR(s, c[j], tol);
  }
}

double vertex_oracle(const CostMatrix& cost, std::span<const double> r, std::span<const double> c) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& v : enumerate_vertices(r, c)) best = std::min(best, plan_cost(v, cost));
  return best;
}

CostMatrix random_cost(std::mt19937_64& rng, std::size_t m, std::size_t n, bool integer) {
  std::uniform_real_distribution<double> u(0.0, 10.0);
  std::uniform_int_distribution<int> k(0, 3);
  CostMatrix c(m, n);
  for (double& x : c.data) x = integer ? k(rng) : u(rng);
  return c;
}

}  // namespace

TEST(Ot1d, QuarterExample) {
  const std::vector<double> xs{0, 1}, xw{0.5, 0.5}, ys{0.5}, yw{1.0};
  EXPECT_DOUBLE_EQ(ot_1d(xs, xw, ys, yw, 1.0).value, 0.5);
  EXPECT_DOUBLE_EQ(ot_1d(xs, xw, ys, yw, 2.0).value, 0.25);
}

TEST(Ot1d, DiracsAtUnitDistance) {
  const std::vector<double> a{0}, b{1}, w{1};
  EXPECT_DOUBLE_EQ(ot_1d(a, w, b, w, 2.0).value, 1.0);
}

TEST(Ot1d, PlanFollowsInputOrder) {
  const std::vector<double> xs{1, 0}, xw{0.5, 0.5}, ys{0, 1}, yw{0.5, 0.5};
  const OtResult r = ot_1d(xs, xw, ys, yw, 1.0);
  EXPECT_EQ(r.plan(0, 1), 0.5);
  EXPECT_EQ(r.plan(1, 0), 0.5);
  EXPECT_EQ(r.value, 0.0);
}

TEST(Ot1d, MatchesSimplexOnRandomInstances) {
  auto rng = testkit::make_rng(21);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int it = 0; it < 200; ++it) {
    const std::size_t m = 1 + it % 6, n = 1 + (it / 6) % 6;
    std::vector<double> xs(m), ys(n);
    for (double& x : xs) x = u(rng);
    for (double& y : ys) y = u(rng);
    const auto xw = testkit::random_weights(rng, m), yw = testkit::random_weights(rng, n);
    for (double p : {1.0, 2.0, 3.0}) {
      CostMatrix c(m, n);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) c(i, j) = std::pow(std::abs(xs[i] - ys[j]), p);
      }
      const OtResult a = ot_1d(xs, xw, ys, yw, p);
      expect_marginals(a.plan, xw, yw);
      EXPECT_NEAR(a.value, ot_exact(c, xw, yw).value, 1e-9);
    }
  }
}

TEST(OtExact, Trivial) {
  CostMatrix c(1, 1, 3.0);
  const std::vector<double> w{1.0};
  const OtResult r = ot_exact(c, w, w);
  EXPECT_EQ(r.value, 3.0);
  EXPECT_EQ(r.plan(0, 0), 1.0);
}

TEST(OtExact, AntiDiagonal) {
  CostMatrix c(2, 2);
  c(0, 0) = 1;
  c(1, 1) = 1;
  const std::vector<double> w{0.5, 0.5};
  const OtResult r = ot_exact(c, w, w);
  EXPECT_EQ(r.value, 0.0);
  EXPECT_EQ(r.plan(0, 1), 0.5);
  EXPECT_EQ(r.plan(1, 0), 0.5);
}

TEST(OtExact, RejectsBadInput) {
  CostMatrix c(2, 2);
  const std::vector<double> a{0.5, 0.5}, b{0.5, 0.6}, neg{1.5, -0.5}, one{1.0};
  EXPECT_THROW(ot_exact(c, a, b), Infeasible);
  EXPECT_THROW(ot_exact(c, neg, a), InvalidArgument);
  EXPECT_THROW(ot_exact(c, one, a), InvalidArgument);
  CostMatrix bad(2, 2, std::numeric_limits<double>::infinity());
  EXPECT_THROW(ot_exact(bad, a, a), InvalidArgument);
}

TEST(OtExact, MatchesVertexEnumeration) {
  auto rng = testkit::make_rng(22);
  for (int it = 0; it < 150; ++it) {
    const std::size_t m = 2 + it % 3, n = 2 + (it / 3) % 3;
    const auto r = testkit::random_weights(rng, m), c = testkit::random_weights(rng, n);
    const CostMatrix cost = random_cost(rng, m, n, it % 2 == 0);
    const OtResult res = ot_exact(cost, r, c);
    expect_marginals(res.plan, r, c);
    EXPECT_NEAR(res.value, plan_cost(res.plan, cost), 1e-12);
    EXPECT_NEAR(res.value, vertex_oracle(cost, r, c), 1e-9);
  }
}

TEST(OtExact, MatchesVertexEnumerationFiveByFive) {
  auto rng = testkit::make_rng(23);
  for (int it = 0; it < 4; ++it) {
    const auto r = testkit::random_weights(rng, 5), c = testkit::random_weights(rng, 5);
    const CostMatrix cost = random_cost(rng, 5, 5, it % 2 == 0);
    EXPECT_NEAR(ot_exact(cost, r, c).value, vertex_oracle(cost, r, c), 1e-9);
  }
}

TEST(OtExact, DegenerateUniformMarginals) {
  // Equal weights make every NW step degenerate; integer costs create ties.
  auto rng = testkit::make_rng(24);
  for (int it = 0; it < 100; ++it) {
    const std::size_t n = 2 + it % 4;
    const std::vector<double> w(n, 1.0 / static_cast<double>(n));
    const CostMatrix cost = random_cost(rng, n, n, true);
    const OtResult res = ot_exact(cost, w, w);
    expect_marginals(res.plan, w, w);
    EXPECT_NEAR(res.value, vertex_oracle(cost, w, w), 1e-12);
  }
}

TEST(OtExact, DualsAreFeasibleAndTight) {
  auto rng = testkit::make_rng(25);
  for (int it = 0; it < 200; ++it) {
    const std::size_t m = 2 + it % 7, n = 2 + (it / 7) % 7;
    const auto r = testkit::random_weights(rng, m), c = testkit::random_weights(rng, n);
    const CostMatrix cost = random_cost(rng, m, n, it % 3 == 0);
    const OtResult res = ot_exact(cost, r, c);
    double dual = 0.0;
    for (std::size_t i = 0; i < m; ++i) dual += res.u[i] * r[i];
    for (std::size_t j = 0; j < n; ++j) dual += res.v[j] * c[j];
    EXPECT_NEAR(dual, res.value, 1e-9);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) EXPECT_GE(cost(i, j) - res.u[i] - res.v[j], -1e-9);
    }
  }
}

TEST(EnumerateVertices, CountsPermutationsForUniformSquare) {
  // Vertices of the Birkhoff polytope scaled by 1/n are the n! permutations.
  for (std::size_t n = 1; n <= 4; ++n) {
    const std::vector<double> w(n, 1.0 / static_cast<double>(n));
    std::size_t fact = 1;
    for (std::size_t k = 2; k <= n; ++k) fact *= k;
    EXPECT_EQ(enumerate_vertices(w, w).size(), fact);
  }
}

TEST(EnumerateVertices, RespectsMaskAndCaps) {
  const std::vector<double> w{0.5, 0.5};
  const std::vector<char> diag{1, 0, 0, 1};
  const auto vs = enumerate_vertices(w, w, diag);
  ASSERT_EQ(vs.size(), 1u);
  EXPECT_EQ(vs[0](0, 0), 0.5);
  const std::vector<double> u(5, 0.2);
  EXPECT_THROW(enumerate_vertices(u, u, {}, 10), TooLarge);
}

TEST(EnumerateVertices, SpanningTreeCountOfCompleteBipartite) {
  for (std::size_t m = 1; m <= 6; ++m) {
    for (std::size_t n = 1; n <= 6; ++n) {
      std::vector<std::size_t> nodes(m + n), cells(m * n);
      std::iota(nodes.begin(), nodes.end(), std::size_t{0});
      std::iota(cells.begin(), cells.end(), std::size_t{0});
      const double want = std::pow(double(m), double(n - 1)) * std::pow(double(n), double(m - 1));
      EXPECT_NEAR(detail::spanning_tree_count(m, n, nodes, cells), want, 1e-6 * want);
    }
  }
}
