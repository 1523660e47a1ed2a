#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "rodif/cut_oracle.hpp"
#include "rodif/errors.hpp"

using namespace rodif;
using namespace rodif::cuts;

namespace {

// Vote counts computed cut-major with points visited in reverse, and the grid
// coordinates rebuilt from scratch.
std::vector<int> reference_counts(std::size_t res, double lo, double hi, const std::vector<SyntheticCut>& cuts) {
  std::vector<int> counts(res * res, 0);
  for (const auto& c : cuts) {
    for (std::size_t idx = res * res; idx-- > 0;) {
      const double x = lo + (hi - lo) * static_cast<double>(idx % res) / static_cast<double>(res - 1);
      const double y = lo + (hi - lo) * static_cast<double>(idx / res) / static_cast<double>(res - 1);
      const double v = c.w[0] * x + c.w[1] * y + c.b;
      counts[idx] += c.flipped ? (v <= 0.0) : (v >= 0.0);
    }
  }
  return counts;
}

// Three half-planes meeting around the origin; the third is reported reversed.
//   x >= -0.5,  y >= -0.5,  x + y <= 0.5
std::vector<SyntheticCut> triangle_fixture() {
  const double s = std::sqrt(0.5);
  return {{{1.0, 0.0}, 0.5, false}, {{0.0, 1.0}, 0.5, false}, {{-s, -s}, 0.5 * s, true}};
}

}  // namespace

TEST(Grid, PointsAndNearest) {
  const auto g = GridSpace::square(2, -1.0, 1.0, 5);
  EXPECT_EQ(g.size(), 25u);
  EXPECT_EQ(g.point(0), (Vec{-1.0, -1.0}));
  EXPECT_EQ(g.point(1), (Vec{-0.5, -1.0}));
  EXPECT_EQ(g.point(5), (Vec{-1.0, -0.5}));
  EXPECT_EQ(g.point(24), (Vec{1.0, 1.0}));
  EXPECT_EQ(g.nearest(std::vector<double>{0.1, -0.3}), 12u - 5u);
  EXPECT_EQ(g.nearest(std::vector<double>{9.0, 9.0}), 24u);
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_EQ(g.nearest(g.point(i)), i);
}

TEST(Grid, ValidationLimits) {
  EXPECT_THROW(GridSpace::square(0, 0, 1, 5).validate(), ConfigError);
  EXPECT_THROW(GridSpace::square(4, 0, 1, 5).validate(), ConfigError);
  EXPECT_THROW(GridSpace::square(2, 0, 1, 1).validate(), ConfigError);
  EXPECT_THROW(GridSpace::square(2, 1, 1, 5).validate(), ConfigError);
  EXPECT_THROW(GridSpace::square(3, 0, 1, 101).validate(), ConfigError);
  EXPECT_NO_THROW(GridSpace::square(3, 0, 1, 100).validate());
  EXPECT_NO_THROW(GridSpace::square(1, 0, 1, 2).validate());
}

TEST(Cut, BoundaryIsSatisfiedInBothOrientations) {
  SyntheticCut c{{1.0, 0.0}, -0.25, false};
  const std::vector<double> on{0.25, 3.0}, in{0.5, 0.0}, out{0.0, 0.0};
  EXPECT_TRUE(c.satisfied(on));
  EXPECT_TRUE(c.satisfied(in));
  EXPECT_FALSE(c.satisfied(out));
  c.flipped = true;
  EXPECT_TRUE(c.satisfied(on));
  EXPECT_FALSE(c.satisfied(in));
  EXPECT_TRUE(c.satisfied(out));
}

TEST(MakeCuts, UnitNormalsThetaStrictlyInsideAndExactFlips) {
  Rng rng(3);
  const std::vector<double> theta{0.2, -0.4};
  const auto cuts = make_cuts(theta, 9, 4, rng);
  ASSERT_EQ(cuts.size(), 9u);
  EXPECT_EQ(count_flipped(cuts), 4u);
  for (const auto& c : cuts) {
    EXPECT_NEAR(c.w[0] * c.w[0] + c.w[1] * c.w[1], 1.0, 1e-14);
    EXPECT_GT(c.value(theta), 1e-9);
    EXPECT_LE(c.value(theta), 1.0);
    EXPECT_EQ(c.satisfied(theta), !c.flipped);
  }
  EXPECT_THROW(make_cuts(theta, 2, 3, rng), ConfigError);
}

TEST(VoteCounts, MatchReversedLoopReference) {
  const auto g = GridSpace::square(2, -1.0, 1.0, 61);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const auto theta = g.point(static_cast<std::size_t>(rng.uniform_int(0, 61 * 61 - 1)));
    const auto cuts = make_cuts(theta, 1 + seed, seed / 3, rng);
    EXPECT_EQ(vote_counts(g, cuts), reference_counts(61, -1.0, 1.0, cuts)) << "seed " << seed;
  }
}

TEST(VoteCounts, TriangleFixture) {
  const auto g = GridSpace::square(2, -1.0, 1.0, 201);
  const auto cuts = triangle_fixture();
  const auto counts = vote_counts(g, cuts);
  const std::size_t origin = g.nearest(std::vector<double>{0.0, 0.0});
  EXPECT_EQ(counts[origin], 2);
  EXPECT_EQ(counts[g.nearest(std::vector<double>{0.9, 0.9})], 3);
  EXPECT_EQ(counts[g.nearest(std::vector<double>{-0.9, -0.9})], 0);
  EXPECT_EQ(counts[g.nearest(std::vector<double>{-0.9, 0.9})], 1);
  EXPECT_EQ(counts[g.nearest(std::vector<double>{-0.5, 0.2})], 2);
  EXPECT_EQ(counts[g.nearest(std::vector<double>{-0.51, 0.2})], 1);

  // gamma = 1/3 with one flip out of three: the robust set keeps the origin.
  const auto r2 = check_lemma2(g, origin, cuts, 1.0 / 3.0);
  EXPECT_EQ(r2.threshold, 2u);
  EXPECT_EQ(r2.budget, Budget::Integral);
  EXPECT_TRUE(r2.in_contract);
  EXPECT_TRUE(r2.theta_in_robust_set);
  EXPECT_TRUE(r2.holds);
  // Corrupted, so the all-cuts set excludes the origin.
  const auto r1 = check_lemma1(g, origin, cuts);
  EXPECT_FALSE(r1.theta_in_full_set);
  EXPECT_EQ(r1.max_votes, 3);
  EXPECT_TRUE(r1.holds);
}

TEST(Lemma1, CleanCutsKeepThetaInArgmax) {
  const auto g = GridSpace::square(2, -1.0, 1.0, 81);
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    Rng rng(seed);
    const std::size_t theta = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(g.size() - 1)));
    const auto cuts = make_cuts(g.point(theta), 1 + seed % 10, 0, rng);
    const auto r = check_lemma1(g, theta, cuts);
    EXPECT_TRUE(r.holds);
    EXPECT_EQ(r.theta_votes, static_cast<int>(cuts.size()));
    EXPECT_EQ(r.argmax_size, r.full_set_size);
  }
}

TEST(Lemma2, BudgetClassification) {
  const auto g = GridSpace::square(2, -1.0, 1.0, 21);
  const std::size_t theta = g.nearest(std::vector<double>{0.0, 0.0});
  auto with_flips = [&](std::size_t n, std::size_t flips) {
    Rng rng(n * 100 + flips);
    return make_cuts(g.point(theta), n, flips, rng);
  };
  EXPECT_EQ(check_lemma2(g, theta, with_flips(8, 2), 0.25).budget, Budget::Integral);
  EXPECT_EQ(check_lemma2(g, theta, with_flips(7, 1), 0.25).budget, Budget::WithinFloor);
  const auto ceil_only = check_lemma2(g, theta, with_flips(7, 2), 0.25);
  EXPECT_EQ(ceil_only.budget, Budget::CeilingOnly);
  EXPECT_FALSE(ceil_only.in_contract);
  EXPECT_TRUE(ceil_only.theta_in_robust_set);
  EXPECT_TRUE(ceil_only.holds);
  const auto over = check_lemma2(g, theta, with_flips(7, 3), 0.25);
  EXPECT_EQ(over.budget, Budget::OverBudget);
  EXPECT_FALSE(over.theta_in_robust_set);
  EXPECT_TRUE(over.holds);
  EXPECT_EQ(to_string(Budget::CeilingOnly), "ceiling-only");
}

TEST(RobustSet, ShrinksAsGammaFalls) {
  const std::vector<int> counts{0, 1, 2, 3, 4, 5};
  EXPECT_EQ(robust_set_size(counts, 5, 0.0), 1u);
  EXPECT_EQ(robust_set_size(counts, 5, 0.2), 2u);
  EXPECT_EQ(robust_set_size(counts, 5, 0.5), 4u);
  EXPECT_EQ(robust_set_size(counts, 5, 1.0), 6u);
  EXPECT_EQ(robust_set(counts, 5, 0.4), (std::vector<bool>{false, false, false, true, true, true}));
}

TEST(Oracle, SmallRunHasNoCounterexamples) {
  OracleConfig cfg;
  cfg.instances = 40;
  cfg.resolution = 61;
  const auto r = run_oracle(cfg);
  EXPECT_TRUE(r.counterexamples.empty());
  EXPECT_EQ(r.lemma1_clean, 40u);
  EXPECT_EQ(r.lemma1_dirty, 40u);
  EXPECT_EQ(r.lemma2_in_contract, 40u);
  EXPECT_EQ(r.lemma2_out_of_contract, 10u);
  for (std::size_t g = 1; g < r.mean_robust_share.size(); ++g) {
    EXPECT_GE(r.mean_robust_share[g], r.mean_robust_share[g - 1]);
  }
  std::ostringstream out;
  write_report(out, r, cfg);
  EXPECT_NE(out.str().find("lemma 2 instances in contract: 40"), std::string::npos);
}

TEST(Oracle, SeededRunsAreIdentical) {
  OracleConfig cfg;
  cfg.instances = 12;
  cfg.resolution = 41;
  cfg.seed = 9;
  const auto a = run_oracle(cfg), b = run_oracle(cfg);
  EXPECT_EQ(a.mean_robust_share, b.mean_robust_share);
  EXPECT_EQ(a.lemma2_in_contract, b.lemma2_in_contract);
}

TEST(Oracle, InstanceTextIsReplayable) {
  const auto g = GridSpace::square(2, -1.0, 1.0, 201);
  Instance inst{g.nearest(std::vector<double>{0.0, 0.0}), triangle_fixture(), 1.0 / 3.0};
  std::ostringstream out;
  write_instance(out, inst, g);
  const std::string text = out.str();
  EXPECT_NE(text.find("gamma"), std::string::npos);
  EXPECT_NE(text.find("0x1.5555555555555p-2"), std::string::npos);
}

TEST(Output, VotesCsvAndHeatmap) {
  const auto g = GridSpace::square(2, -1.0, 1.0, 3);
  const auto cuts = triangle_fixture();
  const auto counts = vote_counts(g, cuts);
  std::ostringstream csv;
  write_votes_csv(csv, g, counts);
  std::istringstream lines(csv.str());
  std::string line;
  std::getline(lines, line);
  EXPECT_EQ(line, "x,y,votes");
  std::size_t rows = 0;
  while (std::getline(lines, line)) rows += !line.empty();
  EXPECT_EQ(rows, 9u);
  const std::vector<double> theta{0.0, 0.0};
  const auto svg = render_votes_svg(g, counts, cuts, theta, {"fixture", 300, 2});
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_NE(svg.find("stroke-dasharray"), std::string::npos);
  EXPECT_THROW(render_votes_svg(GridSpace::square(1, 0, 1, 3), std::vector<int>{0, 0, 0}, cuts, theta), ConfigError);
}
