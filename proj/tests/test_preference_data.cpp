#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "fixtures.hpp"
#include "rodif/errors.hpp"
#include "rodif/preference_data.hpp"

using namespace rodif;
using namespace rodif::prefs;

namespace {

std::vector<std::size_t> iota_ids(std::size_t from, std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = from + i;
  return v;
}

}  // namespace

TEST(Store, UnknownIdIsDataError) {
  TrajectoryStore s;
  EXPECT_EQ(s.add({}), 0u);
  EXPECT_EQ(s.add({}), 1u);
  EXPECT_NO_THROW(s.at(1));
  EXPECT_THROW(s.at(2), DataError);
}

TEST(Pairs, CartesianProductOrderAndCount) {
  const auto w = iota_ids(0, 3), l = iota_ids(3, 4);
  const auto pairs = pair_cartesian(w, l);
  ASSERT_EQ(pairs.size(), 12u);
  EXPECT_EQ(pairs[0], (PreferencePair{0, 3, true, false}));
  EXPECT_EQ(pairs[11], (PreferencePair{2, 6, true, false}));
  EXPECT_THROW(pair_cartesian(w, iota_ids(2, 2)), ConfigError);
}

TEST(Pairs, ObservedViewFollowsLabel) {
  EXPECT_EQ(observed(PreferencePair{4, 9, true, false}), (ObservedPair{4, 9}));
  EXPECT_EQ(observed(PreferencePair{4, 9, false, true}), (ObservedPair{9, 4}));
}

TEST(Corruption, ZeroRateIsIdentity) {
  const auto pairs = pair_cartesian(iota_ids(0, 5), iota_ids(5, 5));
  EXPECT_EQ(corrupt(pairs, {0.0, 3}), pairs);
  EXPECT_TRUE(corruption_indices(25, {0.0, 3}).empty());
}

TEST(Corruption, FullRateFlipsEverything) {
  const auto pairs = pair_cartesian(iota_ids(0, 5), iota_ids(5, 5));
  for (const auto& p : corrupt(pairs, {1.0, 3})) {
    EXPECT_FALSE(p.observed_winner_is_first);
    EXPECT_TRUE(p.corrupted);
  }
}

TEST(Corruption, CountIsRoundedRateTimesN) {
  EXPECT_EQ(corruption_indices(400, {0.3, 0}).size(), 120u);
  EXPECT_EQ(corruption_indices(10, {0.25, 0}).size(), 3u);
  EXPECT_EQ(corruption_indices(10, {0.24, 0}).size(), 2u);
  EXPECT_EQ(corruption_indices(0, {0.5, 0}).size(), 0u);
}

TEST(Corruption, IndicesDistinctSortedAndSeeded) {
  const auto a = corruption_indices(400, {0.3, 11});
  EXPECT_EQ(a, corruption_indices(400, {0.3, 11}));
  EXPECT_NE(a, corruption_indices(400, {0.3, 12}));
  EXPECT_TRUE(std::is_sorted(a.begin(), a.end()));
  EXPECT_EQ(std::set<std::size_t>(a.begin(), a.end()).size(), a.size());
  EXPECT_LT(a.back(), 400u);
}

TEST(Corruption, SameSpecTwiceRestoresInput) {
  const auto pairs = pair_cartesian(iota_ids(0, 20), iota_ids(20, 20));
  for (double rate : {0.1, 0.3, 0.5, 0.9}) {
    const auto once = corrupt(pairs, {rate, 5});
    EXPECT_NE(once, pairs);
    EXPECT_EQ(corrupt(once, {rate, 5}), pairs);
  }
}

TEST(Corruption, RejectsRateOutsideUnitInterval) {
  EXPECT_THROW(corruption_indices(10, {-0.1, 0}), ConfigError);
  EXPECT_THROW(corruption_indices(10, {1.5, 0}), ConfigError);
  EXPECT_THROW(corruption_indices(10, {std::nan(""), 0}), ConfigError);
}

TEST(Corruption, SelectionIsUniformAcrossPositions) {
  // 3 of 10 positions per seed; each position should be hit 0.3 of the time.
  const std::size_t n = 10, seeds = 20000;
  std::vector<double> hits(n, 0.0);
  for (std::size_t s = 0; s < seeds; ++s) {
    for (auto i : corruption_indices(n, {0.3, s})) hits[i] += 1.0;
  }
  const double expect = 0.3 * seeds;
  double chi2 = 0.0;
  for (double h : hits) chi2 += (h - expect) * (h - expect) / expect;
  // 0.999 quantile of chi-square with 9 degrees of freedom.
  EXPECT_LT(chi2, 27.877);
}

TEST(BradleyTerry, ProbabilityValues) {
  EXPECT_DOUBLE_EQ(bt_probability(1.0, 1.0, 0.5), 0.5);
  EXPECT_NEAR(bt_probability(2.0, 0.0, 1.0), 0.8807970779778823, 1e-15);
  EXPECT_NEAR(bt_probability(0.0, 2.0, 1.0) + bt_probability(2.0, 0.0, 1.0), 1.0, 1e-15);
  EXPECT_THROW(bt_probability(0, 0, 0.0), ConfigError);
}

TEST(BradleyTerry, MonteCarloFrequencyMatches) {
  Rng rng(21);
  const int n = 40000;
  int wins = 0;
  for (int i = 0; i < n; ++i) wins += bt_sample(0.7, 0.2, 0.5, rng);
  const double p = bt_probability(0.7, 0.2, 0.5);
  EXPECT_NEAR(static_cast<double>(wins) / n, p, 4.0 * std::sqrt(p * (1 - p) / n));
}

TEST(PreferenceFile, RoundTrip) {
  const auto pairs = corrupt(pair_cartesian(iota_ids(0, 4), iota_ids(4, 3)), {0.4, 2});
  std::stringstream ss;
  write_preferences(ss, pairs);
  EXPECT_EQ(read_preferences(ss), pairs);
}

TEST(PreferenceFile, RejectsMalformedRows) {
  const std::string head = "# rodif-preferences v1\nwinner_id,loser_id,observed_winner_is_first,corrupted\n";
  std::stringstream inconsistent(head + "0,1,1,1\n");
  EXPECT_THROW(read_preferences(inconsistent), DataError);
  std::stringstream bad_flag(head + "0,1,2,0\n");
  EXPECT_THROW(read_preferences(bad_flag), DataError);
  std::stringstream short_row(head + "0,1\n");
  EXPECT_THROW(read_preferences(short_row), DataError);
  std::stringstream no_magic("winner_id,loser_id,observed_winner_is_first,corrupted\n");
  EXPECT_THROW(read_preferences(no_magic), DataError);
  std::stringstream empty_rows(head + "\n");
  EXPECT_TRUE(read_preferences(empty_rows).empty());
}

TEST(Harvest, InvalidConfigsThrow) {
  const auto env = mdp::EnvConfig::avoid_default();
  const auto sched = diffusion::make_schedule(4, 1e-3, 0.2);
  Rng init(0);
  const auto net = nn::Mlp::make({7, 8, 2}, init);
  HarvestConfig cfg;
  cfg.preferred = Mode::Undefined;
  EXPECT_THROW(harvest(net, env, sched, cfg, Rng(0)), ConfigError);
  cfg = {};
  cfg.winners = -1;
  EXPECT_THROW(harvest(net, env, sched, cfg, Rng(0)), ConfigError);
}

TEST(Harvest, EmptyQuotaNeedsNoEpisodes) {
  const auto env = mdp::EnvConfig::avoid_default();
  const auto sched = diffusion::make_schedule(4, 1e-3, 0.2);
  Rng init(0);
  const auto net = nn::Mlp::make({7, 8, 2}, init);
  const auto h = harvest(net, env, sched, {0, 0, Mode::Left, 1}, Rng(0));
  EXPECT_EQ(h.attempts, 0);
  EXPECT_EQ(h.store.size(), 0u);
}

TEST(Harvest, UntrainedPolicyHitsAttemptCap) {
  const auto env = mdp::EnvConfig::avoid_default();
  const auto sched = diffusion::make_schedule(4, 1e-3, 0.2);
  Rng init(0);
  const auto net = nn::Mlp::make({7, 8, 2}, init);
  try {
    harvest(net, env, sched, {20, 20, Mode::Left, 2}, Rng(0));
    FAIL() << "expected HarvestError";
  } catch (const HarvestError& e) {
    EXPECT_GE(e.attempts(), 80);
  }
}

TEST(Harvest, ReferencePolicyFillsBothQuotas) {
  const auto& h = fixture::reference_harvest();
  ASSERT_EQ(h.winner_ids.size(), 20u);
  ASSERT_EQ(h.loser_ids.size(), 20u);
  for (auto id : h.winner_ids) {
    EXPECT_TRUE(mdp::is_success(h.store.at(id)));
    EXPECT_EQ(h.store.at(id).mode, Mode::Left);
  }
  for (auto id : h.loser_ids) {
    EXPECT_TRUE(mdp::is_success(h.store.at(id)));
    EXPECT_EQ(h.store.at(id).mode, Mode::Right);
  }
  const auto& cfg = fixture::reference_config();
  const auto again = harvest(fixture::reference_policy(), cfg.env, cfg.schedule(), HarvestConfig{},
                             Rng(0).child("harvest"));
  EXPECT_EQ(again.winner_ids, h.winner_ids);
  EXPECT_EQ(again.store.trajectories, h.store.trajectories);
}
