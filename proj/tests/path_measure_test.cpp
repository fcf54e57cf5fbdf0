#include <gtest/gtest.h>

#include "kr/kernel_tree.hpp"
#include "kr/measure_io.hpp"
#include "kr/path_measure.hpp"
#include "support/random_measures.hpp"

using namespace kr;

namespace {

PathMeasure example_mu0() { return PathMeasure(1, 3, {{1, 1, 0}, {0, 0, 1}}, {0.5, 0.5}); }

}  // namespace

TEST(PathMeasure, SortsAndMergesDuplicates) {
  const PathMeasure m(1, 2, {{1, 0}, {0, 1}, {1, 0}}, {0.25, 0.5, 0.25});
  ASSERT_EQ(m.size(), 2u);
  EXPECT_EQ(m.atom(0)[0], 0.0);
  EXPECT_EQ(m.weight(0), 0.5);
  EXPECT_EQ(m.weight(1), 0.5);
}

TEST(PathMeasure, NegativeZeroIsNormalized) {
  const PathMeasure a(1, 1, {{-0.0}}, {1.0});
  const PathMeasure b(1, 1, {{0.0}}, {1.0});
  EXPECT_EQ(a, b);
  EXPECT_FALSE(std::signbit(a.atom(0)[0]));
}

TEST(PathMeasure, RejectsInvalidInput) {
  EXPECT_THROW(PathMeasure(1, 1, {{0.0}, {1.0}}, {0.5, 0.4}), InvalidArgument);
  EXPECT_THROW(PathMeasure(1, 1, {{0.0}, {1.0}}, {1.5, -0.5}), InvalidArgument);
  EXPECT_THROW(PathMeasure(1, 1, {{std::nan("")}}, {1.0}), InvalidArgument);
  EXPECT_THROW(PathMeasure(1, 2, {{0.0}}, {1.0}), InvalidArgument);
  EXPECT_THROW(PathMeasure(0, 2, {}, {}), InvalidArgument);
}

TEST(PathMeasure, FindLocatesAtoms) {
  const PathMeasure m = example_mu0();
  const std::vector<double> a{1, 1, 0}, b{1, 1, 1};
  ASSERT_TRUE(m.find(a).has_value());
  EXPECT_EQ(*m.find(a), 1u);
  EXPECT_FALSE(m.find(b).has_value());
}

TEST(Disintegrate, DiracIsASingleBranch) {
  const KernelTree t = disintegrate(PathMeasure::dirac(1, 2, {3.0, 4.0}));
  ASSERT_EQ(t.nodes.size(), 3u);
  EXPECT_EQ(t.root().children.size(), 1u);
  EXPECT_EQ(t[1].value, std::vector<double>{3.0});
  EXPECT_EQ(t[1].weight, 1.0);
  EXPECT_EQ(t[2].value, std::vector<double>{4.0});
  EXPECT_EQ(t[2].weight, 1.0);
}

TEST(Disintegrate, SharedPrefixIsGrouped) {
  const KernelTree t = disintegrate(PathMeasure(1, 2, {{0, 0}, {0, 1}}, {0.5, 0.5}));
  ASSERT_EQ(t.root().children.size(), 1u);
  const auto& first = t[t.root().children[0]];
  EXPECT_EQ(first.weight, 1.0);
  ASSERT_EQ(first.children.size(), 2u);
  EXPECT_EQ(t[first.children[0]].value, std::vector<double>{0.0});
  EXPECT_EQ(t[first.children[0]].weight, 0.5);
  EXPECT_EQ(t[first.children[1]].value, std::vector<double>{1.0});
  EXPECT_EQ(t[first.children[1]].weight, 0.5);
}

TEST(Disintegrate, NonMarkovExampleHasTwoDisjointBranches) {
  const KernelTree t = disintegrate(example_mu0());
  ASSERT_EQ(t.root().children.size(), 2u);
  for (int c : t.root().children) {
    EXPECT_EQ(t[c].weight, 0.5);
    ASSERT_EQ(t[c].children.size(), 1u);
    const auto& second = t[t[c].children[0]];
    EXPECT_EQ(second.weight, 1.0);
    ASSERT_EQ(second.children.size(), 1u);
    EXPECT_EQ(t[second.children[0]].weight, 1.0);
  }
  EXPECT_EQ(flatten(t), example_mu0());
}

TEST(Disintegrate, RoundTripAndNormalizationOnRandomMeasures) {
  auto rng = testkit::make_rng(1);
  for (int it = 0; it < 300; ++it) {
    testkit::MeasureShape shape;
    shape.dim = 1 + it % 2;
    shape.max_steps = 4;
    shape.max_atoms = 12;
    const PathMeasure mu = testkit::random_measure(rng, shape);
    const KernelTree t = disintegrate(mu);
    ASSERT_EQ(flatten(t), mu);
    for (const auto& n : t.nodes) {
      if (n.children.empty()) {
        EXPECT_EQ(n.depth, mu.steps());
        continue;
      }
      double s = 0.0;
      for (int c : n.children) s += t[c].weight;
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(Disintegrate, PrefixMonotone) {
  auto rng = testkit::make_rng(2);
  for (int it = 0; it < 100; ++it) {
    const PathMeasure mu = testkit::random_measure(rng, {1, 2, 4, 10, 1});
    const KernelTree t = disintegrate(mu);
    // Leaves whose atoms share a length-k prefix have the same depth-k ancestor.
    std::vector<int> leaves = t.level(mu.steps());
    for (int k = 1; k < mu.steps(); ++k) {
      for (int a : leaves) {
        for (int b : leaves) {
          auto pa = mu.atom(static_cast<std::size_t>(t[a].atom)), pb = mu.atom(static_cast<std::size_t>(t[b].atom));
          const bool same = std::equal(pa.begin(), pa.begin() + k, pb.begin());
          int x = a, y = b;
          while (t[x].depth > k) x = t[x].parent;
          while (t[y].depth > k) y = t[y].parent;
          EXPECT_EQ(same, x == y);
        }
      }
    }
  }
}

TEST(Disintegrate, ToleranceGroupsNearbyPrefixes) {
  const PathMeasure mu(1, 2, {{0.0, 1.0}, {1e-9, 2.0}, {0.5, 3.0}}, {0.25, 0.25, 0.5});
  EXPECT_EQ(disintegrate(mu).root().children.size(), 3u);
  const KernelTree t = disintegrate(mu, 1e-6);
  ASSERT_EQ(t.root().children.size(), 2u);
  EXPECT_EQ(t[t.root().children[0]].children.size(), 2u);
  EXPECT_NEAR(t[t.root().children[0]].weight, 0.5, 1e-15);
}

TEST(Marginal, Basics) {
  const PathMeasure mu(1, 2, {{0, 0}, {0, 1}}, {0.5, 0.5});
  EXPECT_EQ(marginal(mu, 2), mu);
  EXPECT_EQ(marginal(mu, 1), PathMeasure::dirac(1, 1, {0.0}));
  EXPECT_THROW(marginal(mu, 0), InvalidArgument);
  EXPECT_THROW(marginal(mu, 3), InvalidArgument);
}

TEST(Marginal, ComposesOnRandomMeasures) {
  auto rng = testkit::make_rng(3);
  for (int it = 0; it < 200; ++it) {
    const PathMeasure mu = testkit::random_measure(rng, {1, 2, 4, 10, 1});
    for (int k = 1; k <= mu.steps(); ++k) {
      for (int j = 1; j <= k; ++j) {
        const PathMeasure a = marginal(marginal(mu, k), j), b = marginal(mu, j);
        ASSERT_EQ(a.size(), b.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
          EXPECT_TRUE(std::equal(a.atom(i).begin(), a.atom(i).end(), b.atom(i).begin()));
          EXPECT_NEAR(a.weight(i), b.weight(i), 1e-15);
        }
      }
    }
  }
}

TEST(MeasureIo, ParsesValidDocument) {
  const PathMeasure m =
      parse_measure(std::string(R"({"d": 1, "N": 2, "atoms": [[[0], [1]], [[2], [3]]], "weights": [0.25, 0.75]})"));
  EXPECT_EQ(m.size(), 2u);
  EXPECT_EQ(m.weight(1), 0.75);
}

TEST(MeasureIo, ReportsPositions) {
  auto where = [](const std::string& text) {
    try {
      parse_measure(text);
    } catch (const ParseError& e) {
      return std::string(e.where()) + " | " + e.reason();
    }
    return std::string("no error");
  };
  EXPECT_EQ(where(R"({"d": 1, "N": 1, "atoms": [[0], [1]], "weights": [0.5, 0.4]})"), "/weights | weights must sum to 1");
  EXPECT_EQ(where(R"({"d": 1, "N": 1, "atoms": [[0], [1]], "weights": [1.5, -0.5]})"), "/weights/1 | weights must be positive");
  EXPECT_EQ(where(R"({"d": 1, "N": 2, "atoms": [[0, 1], [1]], "weights": [0.5, 0.5]})"), "/atoms/1 | expected an array of 2 steps");
  EXPECT_EQ(where(R"({"d": 2, "N": 1, "atoms": [[[0, "x"]]], "weights": [1]})"), "/atoms/0/0/1 | expected a number");
  EXPECT_EQ(where(R"({"d": 1, "N": 1, "atoms": [[0]]})"), "/weights | expected an array");
  EXPECT_EQ(where(R"({"d": 0, "N": 1, "atoms": [[0]], "weights": [1]})"), "/d | must be a positive integer");
  const std::string truncated = where(R"({"d": 1, "N": 1, "atoms": [[0]], "weights": [1])");
  EXPECT_EQ(truncated.substr(0, 5), "byte ");
  EXPECT_NE(truncated.find("malformed JSON"), std::string::npos);
  // Overflowing literals are rejected rather than read as infinity.
  EXPECT_NE(where(R"({"d": 1, "N": 1, "atoms": [[1e999]], "weights": [1]})"), "no error");
}

TEST(MeasureIo, SerializeParseRoundTrip) {
  auto rng = testkit::make_rng(4);
  for (int it = 0; it < 200; ++it) {
    testkit::MeasureShape shape;
    shape.dim = 1 + it % 3;
    shape.continuous = true;
    const PathMeasure mu = testkit::random_measure(rng, shape);
    const std::string text = serialize_measure(mu);
    const PathMeasure back = parse_measure(text);
    ASSERT_EQ(back, mu);
    EXPECT_EQ(serialize_measure(back), text);
  }
}

TEST(MeasureIo, SerializeCanonicalizes) {
  const PathMeasure m = parse_measure(std::string(R"({"d": 1, "N": 1, "atoms": [[2], [1], [2]], "weights": [0.25, 0.5, 0.25]})"));
  EXPECT_EQ(serialize_measure(m), R"({"d": 1, "N": 1, "atoms": [[[1]], [[2]]], "weights": [0.5, 0.5]})");
}

TEST(MeasureIo, CsvHeader) {
  const PathMeasure m(2, 2, {{0, 1, 2, 3}}, {1.0});
  EXPECT_EQ(measure_csv(m), "w,x_1_1,x_1_2,x_2_1,x_2_2\n1,0,1,2,3\n");
}

TEST(TotalVariation, HalfL1) {
  const PathMeasure a(1, 1, {{0}, {1}}, {0.5, 0.5});
  const PathMeasure b(1, 1, {{0}, {2}}, {0.25, 0.75});
  EXPECT_DOUBLE_EQ(tv_distance(a, b), 0.75);
  EXPECT_EQ(tv_distance(a, a), 0.0);
}
