#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rodif/diffusion_chain.hpp"
#include "rodif/tensor_nn.hpp"
#include "rodif/unified_mdp.hpp"

namespace rodif::pretrain {

using mdp::Mode;
using nn::Vec;

/// Waypoint-following proportional controller that passes the obstacle field
/// on one side.
struct Demonstrator {
  double gain = 2.0;
  double max_speed = 1.0;
  /// Gaussian action noise std, as a fraction of the env action clamp.
  double noise_fraction = 0.05;
  double waypoint_radius = 0.35;

  /// Waypoints for a mode, in env coordinates.
  std::vector<mdp::Vec2> waypoints(Mode mode, const mdp::EnvConfig& config) const;
  /// Noise-free action at `position` heading for waypoint `index`.
  Vec action(const mdp::Vec2& position, const mdp::Vec2& waypoint) const;
  /// Runs one scripted episode. Chains hold the executed action only.
  mdp::Trajectory run(Mode mode, const mdp::EnvConfig& config, int steps, Rng& rng) const;
};

struct DemoSample {
  Vec observation;
  Vec action;
  Mode mode = Mode::Undefined;
};

struct DemoSet {
  std::vector<mdp::Trajectory> episodes;
  std::vector<DemoSample> samples;

  /// Fraction of episodes labelled `mode`.
  double mode_share(Mode mode) const;
};

class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// n_per_mode successful scripted episodes per mode. Throws GenerationError if
/// any scripted episode fails or is misclassified.
DemoSet generate_demos(const mdp::EnvConfig& config, int n_per_mode, const Demonstrator& demo, Rng& rng);

/// Frozen (k, eps) draws for one batch.
struct BcDraw {
  int step = 1;
  Vec noise;
};

std::vector<BcDraw> draw_bc_noise(std::size_t batch, std::size_t action_dim, const diffusion::NoiseSchedule& schedule,
                                  Rng& rng);

/// Mean over the batch of ||eps - eps_theta(a^k, k, s)||^2.
double bc_loss(const nn::Mlp& net, std::span<const DemoSample> batch, std::span<const BcDraw> draws,
               const diffusion::NoiseSchedule& schedule);
nn::Var bc_loss(nn::Tape& tape, std::span<const DemoSample> batch, std::span<const BcDraw> draws,
                const diffusion::NoiseSchedule& schedule);
/// Draws k uniformly in 1..K and eps ~ N(0, I) per element, then evaluates.
double bc_loss(const nn::Mlp& net, std::span<const DemoSample> batch, const diffusion::NoiseSchedule& schedule,
               Rng& rng);

struct PretrainConfig {
  mdp::EnvConfig env = mdp::EnvConfig::avoid_default();
  int diffusion_steps = 20;
  double beta_start = 1e-4;
  double beta_end = 0.4;
  std::vector<std::size_t> hidden = {64, 64};
  int demos_per_mode = 50;
  Demonstrator demonstrator;
  int train_steps = 20000;
  int batch_size = 64;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  int eval_episodes = 100;
  /// Below this share for either mode the run is reported as collapsed.
  double collapse_share = 0.10;
  int log_every = 100;

  diffusion::NoiseSchedule schedule() const { return diffusion::make_schedule(diffusion_steps, beta_start, beta_end); }
};

struct PretrainResult {
  nn::Mlp net;
  DemoSet demos;
  /// Mean BC loss over each `log_every` window.
  std::vector<double> loss_history;
  double success_rate = 0.0;
  double left_share = 0.0;
  double right_share = 0.0;
  int eval_episodes = 0;
};

class PretrainingFailed : public std::runtime_error {
 public:
  PretrainingFailed(const std::string& what, PretrainResult result)
      : std::runtime_error(what), result_(std::move(result)) {}
  const PretrainResult& result() const { return result_; }

 private:
  PretrainResult result_;
};

/// Noise predictor input size for an env: action (2) + step (1) + observation (4).
nn::Mlp make_policy_net(const PretrainConfig& cfg, Rng& rng);

/// Behaviour-clones the demonstrators. Throws PretrainingFailed on mode collapse.
PretrainResult pretrain(const PretrainConfig& cfg);

}  // namespace rodif::pretrain
