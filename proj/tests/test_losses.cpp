#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "oracles.hpp"
#include "rodif/errors.hpp"
#include "rodif/losses.hpp"

using namespace rodif;
using namespace rodif::loss;
using prefs::ObservedPair;
using prefs::TrajectoryStore;

namespace {

struct World {
  diffusion::NoiseSchedule schedule = diffusion::make_schedule(4, 1e-3, 0.3);
  nn::Mlp ref;
  nn::Mlp theta;
  TrajectoryStore store;
  std::vector<ObservedPair> pairs;
};

// Short random trajectories from a small reference net, and theta = ref plus
// a perturbation large enough to move every log-ratio off zero.
World make_world(std::uint64_t seed, std::size_t n_traj = 6) {
  World w;
  Rng rng(seed);
  w.ref = nn::Mlp::make({7, 6, 2}, rng);
  w.theta = w.ref;
  for (double& p : w.theta.params()) p += 0.2 * rng.normal();
  auto env = mdp::EnvConfig::avoid_default();
  env.max_steps = 3 + static_cast<int>(seed % 3);
  for (std::size_t i = 0; i < n_traj; ++i) {
    Rng ep = rng.child(i);
    auto t = mdp::rollout(w.ref, env, w.schedule, ep);
    if (i % 3 == 2 && t.size() > 1) t.steps.pop_back();
    w.store.add(std::move(t));
  }
  for (std::size_t i = 0; i < n_traj; ++i) {
    w.pairs.push_back({i, (i + 1) % n_traj});
    if (n_traj > 3) w.pairs.push_back({(i + 3) % n_traj, i});
  }
  return w;
}

std::vector<ChainComparison> expand(const World& w, const std::vector<ObservedPair>& pairs) {
  std::vector<ChainComparison> out;
  for (const auto& p : pairs) {
    const auto& a = w.store.at(p.preferred_id);
    const auto& b = w.store.at(p.rejected_id);
    for (std::size_t t = 0; t < comparison_steps(a, b); ++t) out.push_back({&a.steps[t].chain, &b.steps[t].chain});
  }
  return out;
}

std::vector<ObservedPair> swapped(const std::vector<ObservedPair>& pairs) {
  std::vector<ObservedPair> out;
  for (const auto& p : pairs) out.push_back({p.rejected_id, p.preferred_id});
  return out;
}

}  // namespace

TEST(Sigmoid, StableAtExtremesAndMatchesNaive) {
  EXPECT_EQ(sigmoid(1000.0), 1.0);
  EXPECT_EQ(sigmoid(-1000.0), 0.0);
  EXPECT_EQ(log_sigmoid(-1000.0), -1000.0);
  EXPECT_EQ(log_sigmoid(1000.0), 0.0);
  for (double x = -20.0; x <= 20.0; x += 0.37) {
    EXPECT_NEAR(sigmoid(x), oracle::naive_sigmoid(x), 1e-15);
    EXPECT_NEAR(-log_sigmoid(x), oracle::naive_neg_log_sigmoid(x), 1e-13 * (1 + std::abs(x)));
    EXPECT_NEAR(sigmoid(x, 2.5), oracle::naive_sigmoid(x / 2.5), 1e-15);
  }
}

TEST(LossConfig, ValidatesRanges) {
  EXPECT_NO_THROW(LossConfig{}.validate());
  EXPECT_THROW((LossConfig{0.0, 1.0, 0.0, 1.0}.validate()), ConfigError);
  EXPECT_THROW((LossConfig{0.1, 0.0, 0.0, 1.0}.validate()), ConfigError);
  EXPECT_THROW((LossConfig{0.1, 1.0, -0.1, 1.0}.validate()), ConfigError);
  EXPECT_THROW((LossConfig{0.1, 1.0, 1.1, 1.0}.validate()), ConfigError);
  EXPECT_THROW((LossConfig{0.1, 1.0, 0.2, 0.0}.validate()), ConfigError);
}

TEST(LossKind, StringRoundTrip) {
  EXPECT_EQ(loss_kind_from_string(to_string(LossKind::RoDiF)), LossKind::RoDiF);
  EXPECT_EQ(loss_kind_from_string(to_string(LossKind::DpDpo)), LossKind::DpDpo);
  EXPECT_THROW(loss_kind_from_string("dpo"), ConfigError);
}

TEST(Threshold, FloorConvention) {
  EXPECT_EQ(robust_threshold(10, 0.3), 7u);
  EXPECT_EQ(robust_threshold(10, 0.1), 9u);
  EXPECT_EQ(robust_threshold(7, 0.25), 5u);
  EXPECT_EQ(robust_threshold(5, 0.0), 5u);
  EXPECT_EQ(robust_threshold(5, 1.0), 0u);
  EXPECT_EQ(robust_threshold(100, 0.07), 93u);
  EXPECT_THROW(robust_threshold(5, 1.5), ConfigError);
}

TEST(Threshold, HardObjectiveStep) {
  EXPECT_EQ(hard_objective(7, 10, 0.3), 1);
  EXPECT_EQ(hard_objective(6, 10, 0.3), 0);
  EXPECT_EQ(hard_objective(0, 10, 1.0), 1);
  EXPECT_EQ(hard_objective(5, 7, 0.25), 1);
  EXPECT_EQ(hard_objective(4, 7, 0.25), 0);
  EXPECT_THROW(hard_objective(11, 10, 0.3), ContractError);
}

TEST(ComparisonSteps, ShorterLength) {
  prefs::Trajectory a, b;
  a.steps.resize(5);
  b.steps.resize(3);
  EXPECT_EQ(comparison_steps(a, b), 3u);
  EXPECT_EQ(comparison_steps(b, a), 3u);
  TrajectoryStore s;
  s.add(a);
  s.add(b);
  const std::vector<ObservedPair> pairs{{0, 1}, {1, 0}, {0, 0}};
  EXPECT_EQ(total_comparisons(pairs, s), 11u);
}

TEST(AtReference, LogRatioIsExactlyZero) {
  const World w = make_world(1);
  for (const auto& t : w.store.trajectories) {
    for (const auto& s : t.steps) EXPECT_EQ(chain_log_ratio(w.ref, w.ref, s.chain, w.schedule), 0.0);
  }
}

TEST(AtReference, LossesTakeTheirFixedPointValues) {
  const World w = make_world(2);
  const std::size_t n = total_comparisons(w.pairs, w.store);
  ASSERT_GT(n, 0u);
  LossConfig cfg;
  EXPECT_NEAR(dpdpo_loss(w.ref, w.ref, w.pairs, w.store, w.schedule, cfg), n * std::numbers::ln2, 1e-12 * n);
  const auto votes = soft_votes(w.ref, w.ref, w.pairs, w.store, w.schedule, cfg);
  ASSERT_EQ(votes.size(), n);
  for (double v : votes.votes) EXPECT_EQ(v, 0.5);
  cfg.gamma = 0.5;
  EXPECT_NEAR(rodif_loss(votes.votes, cfg, n), std::numbers::ln2, 1e-15);
  cfg.gamma = 0.4;
  cfg.alpha = 2.0;
  const double expect = std::log1p(std::exp(-(0.5 * n - 0.6 * n) / 2.0));
  EXPECT_NEAR(rodif_loss(votes.votes, cfg, n), expect, 1e-12);
}

TEST(DeltaQ, AntisymmetricAndScalesWithBeta) {
  const World w = make_world(3);
  const auto& a = w.store.at(0).steps[0].chain;
  const auto& b = w.store.at(1).steps[0].chain;
  const double x = delta_q(w.theta, w.ref, a, b, w.schedule, 0.1);
  EXPECT_NE(x, 0.0);
  EXPECT_EQ(delta_q(w.theta, w.ref, b, a, w.schedule, 0.1), -x);
  EXPECT_NEAR(delta_q(w.theta, w.ref, a, b, w.schedule, 0.3), 3.0 * x, 1e-12 * std::abs(x));
  EXPECT_EQ(delta_q(w.theta, w.ref, a, a, w.schedule, 0.1), 0.0);
}

TEST(DpDpo, SwappingLabelsShiftsLossBySumOfMargins) {
  const World w = make_world(4);
  const LossConfig cfg{0.1, 1.5, 0.0, 1.0};
  const auto votes = soft_votes(w.theta, w.ref, w.pairs, w.store, w.schedule, cfg);
  double margin = 0.0;
  for (const auto& c : expand(w, w.pairs)) margin += delta_q(w.theta, w.ref, *c.preferred, *c.rejected, w.schedule, 0.1);
  const double l = dpdpo_loss(w.theta, w.ref, w.pairs, w.store, w.schedule, cfg);
  const double l_swapped = dpdpo_loss(w.theta, w.ref, swapped(w.pairs), w.store, w.schedule, cfg);
  // -log s(x/a) + log s(-x/a) = -x/a
  EXPECT_NEAR(l - l_swapped, -margin / 1.5, 1e-10 * (1 + std::abs(l)));
  const auto votes_swapped = soft_votes(w.theta, w.ref, swapped(w.pairs), w.store, w.schedule, cfg);
  for (std::size_t i = 0; i < votes.size(); ++i) EXPECT_NEAR(votes.votes[i] + votes_swapped.votes[i], 1.0, 1e-15);
}

TEST(DpDpo, EqualsPerControlLossOverStepwiseComparisons) {
  const World w = make_world(5);
  const LossConfig cfg;
  const auto items = expand(w, w.pairs);
  EXPECT_NEAR(dpdpo_loss(w.theta, w.ref, w.pairs, w.store, w.schedule, cfg),
              dpo_percontrol_loss(w.theta, w.ref, items, w.schedule, cfg), 1e-12);
  EXPECT_THROW(dpo_percontrol_loss(w.theta, w.ref, std::span<const ChainComparison>{}, w.schedule, cfg),
               ContractError);
}

TEST(DpDpo, UnknownTrajectoryIdIsDataError) {
  const World w = make_world(6);
  const std::vector<ObservedPair> bad{{0, 99}};
  EXPECT_THROW(dpdpo_loss(w.theta, w.ref, bad, w.store, w.schedule, LossConfig{}), DataError);
}

TEST(RoDiF, VoteDerivativeMatchesFiniteDifference) {
  const std::vector<double> votes{0.2, 0.9, 0.55, 0.61};
  const LossConfig cfg{0.1, 0.7, 0.25, 1.2};
  const double d = rodif_vote_derivative(votes, cfg, votes.size());
  for (std::size_t i = 0; i < votes.size(); ++i) {
    auto up = votes, down = votes;
    up[i] += 1e-6;
    down[i] -= 1e-6;
    EXPECT_NEAR(d, (rodif_loss(up, cfg, votes.size()) - rodif_loss(down, cfg, votes.size())) / 2e-6, 1e-8);
  }
  EXPECT_LT(d, 0.0);
}

TEST(RoDiF, LossDecreasesInEveryVote) {
  const LossConfig cfg{0.1, 1.0, 0.4, 1.0};
  std::vector<double> votes{0.3, 0.3, 0.3};
  double prev = rodif_loss(votes, cfg, 3);
  for (int i = 0; i < 3; ++i) {
    votes[i] = 0.9;
    const double now = rodif_loss(votes, cfg, 3);
    EXPECT_LT(now, prev);
    prev = now;
  }
}

TEST(TapeForms, AgreeWithValueForms) {
  const World w = make_world(7);
  for (double gamma : {0.0, 0.3}) {
    const LossConfig cfg{0.1, 0.8, gamma, 1.0};
    nn::Tape tape(&w.theta);
    const double dp = tape.scalar(dpdpo_loss(tape, w.ref, w.pairs, w.store, w.schedule, cfg));
    EXPECT_NEAR(dp, dpdpo_loss(w.theta, w.ref, w.pairs, w.store, w.schedule, cfg), 1e-10 * (1 + dp));
    const auto vv = soft_votes(tape, w.ref, w.pairs, w.store, w.schedule, cfg);
    const auto v = soft_votes(w.theta, w.ref, w.pairs, w.store, w.schedule, cfg);
    ASSERT_EQ(vv.size(), v.size());
    for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(tape.scalar(vv[i]), v.votes[i], 1e-12);
    const double rl = tape.scalar(rodif_loss(tape, vv, cfg, v.size()));
    EXPECT_NEAR(rl, rodif_loss(v.votes, cfg, v.size()), 1e-10 * (1 + rl));
  }
}

TEST(Gradients, FullPipelineMatchesFiniteDifferences) {
  const World w = make_world(8, 4);
  const LossConfig cfg{0.1, 1.0, 0.4, 1.0};
  const auto dp = nn::grad_scalar(
      [&](nn::Tape& t) { return dpdpo_loss(t, w.ref, w.pairs, w.store, w.schedule, cfg); }, w.theta);
  const auto dp_fd = oracle::central_difference(
      [&](const nn::Mlp& m) { return dpdpo_loss(m, w.ref, w.pairs, w.store, w.schedule, cfg); }, w.theta);
  EXPECT_LT(oracle::max_relative_error(dp.grad.values, dp_fd), 1e-4);
  const std::size_t n = total_comparisons(w.pairs, w.store);
  const auto rd = nn::grad_scalar(
      [&](nn::Tape& t) {
        const auto votes = soft_votes(t, w.ref, w.pairs, w.store, w.schedule, cfg);
        return rodif_loss(t, votes, cfg, n);
      },
      w.theta);
  const auto rd_fd = oracle::central_difference(
      [&](const nn::Mlp& m) {
        return rodif_loss(soft_votes(m, w.ref, w.pairs, w.store, w.schedule, cfg).votes, cfg, n);
      },
      w.theta);
  EXPECT_LT(oracle::max_relative_error(rd.grad.values, rd_fd), 1e-4);
}

TEST(Objective, MatchesTapeLossAndGradient) {
  const World w = make_world(9, 8);
  for (LossKind kind : {LossKind::DpDpo, LossKind::RoDiF}) {
    const LossConfig cfg{0.1, 1.0, kind == LossKind::RoDiF ? 0.4 : 0.0, 1.0};
    PreferenceObjective obj(w.ref, w.store, w.schedule, kind, cfg);
    std::vector<double> grad(w.theta.param_count(), 0.0);
    const auto ev = obj.evaluate(w.theta, w.pairs, grad);
    const std::size_t n = total_comparisons(w.pairs, w.store);
    EXPECT_EQ(ev.comparisons, n);
    const auto tape = nn::grad_scalar(
        [&](nn::Tape& t) -> nn::Var {
          if (kind == LossKind::DpDpo) return dpdpo_loss(t, w.ref, w.pairs, w.store, w.schedule, cfg);
          return rodif_loss(t, soft_votes(t, w.ref, w.pairs, w.store, w.schedule, cfg), cfg, n);
        },
        w.theta);
    EXPECT_NEAR(ev.loss, tape.loss, 1e-10 * (1 + std::abs(tape.loss))) << to_string(kind);
    EXPECT_LT(oracle::max_relative_error(grad, tape.grad.values), 1e-8) << to_string(kind);
    EXPECT_NEAR(ev.vote_sum, soft_votes(w.theta, w.ref, w.pairs, w.store, w.schedule, cfg).sum(), 1e-10);
  }
}

TEST(Objective, RepeatedEvaluationIsBitIdentical) {
  const World w = make_world(10, 12);
  PreferenceObjective obj(w.ref, w.store, w.schedule, LossKind::RoDiF, LossConfig{0.1, 1.0, 0.4, 1.0});
  std::vector<double> g1(w.theta.param_count(), 0.0), g2(w.theta.param_count(), 0.0);
  const auto a = obj.evaluate(w.theta, w.pairs, g1);
  const auto b = obj.evaluate(w.theta, w.pairs, g2);
  EXPECT_EQ(a.loss, b.loss);
  EXPECT_EQ(g1, g2);
}

TEST(Objective, GradientAccumulatesAndChecksSize) {
  const World w = make_world(11);
  PreferenceObjective obj(w.ref, w.store, w.schedule, LossKind::DpDpo, LossConfig{});
  std::vector<double> once(w.theta.param_count(), 0.0), twice(w.theta.param_count(), 0.0);
  obj.evaluate(w.theta, w.pairs, once);
  obj.evaluate(w.theta, w.pairs, twice);
  obj.evaluate(w.theta, w.pairs, twice);
  for (std::size_t i = 0; i < once.size(); ++i) EXPECT_NEAR(twice[i], 2.0 * once[i], 1e-12 * (1 + std::abs(once[i])));
  std::vector<double> wrong(3, 0.0);
  EXPECT_THROW(obj.evaluate(w.theta, w.pairs, wrong), ConfigError);
  const auto value_only = obj.evaluate(w.theta, w.pairs, {});
  EXPECT_NEAR(value_only.loss, dpdpo_loss(w.theta, w.ref, w.pairs, w.store, w.schedule, LossConfig{}), 1e-10);
}
