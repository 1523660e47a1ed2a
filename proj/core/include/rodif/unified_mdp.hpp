#pragma once

#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "rodif/diffusion_chain.hpp"
#include "rodif/rng.hpp"

namespace rodif::mdp {

using diffusion::DenoiseChain;
using nn::Vec;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Vec2&, const Vec2&) = default;
};

struct Obstacle {
  Vec2 center;
  double radius = 0.0;
};

/// Avoid-style navigation task: reach the line y >= goal_y from `start`
/// without entering any obstacle disk.
struct EnvConfig {
  Vec2 start{0.0, 0.0};
  double goal_y = 7.5;
  /// x coordinate of the mirror axis separating the Left and Right corridors.
  double center_x = 0.0;
  std::vector<Obstacle> obstacles;
  Vec2 lower{-4.0, -1.0};
  Vec2 upper{4.0, 8.0};
  int max_steps = 40;
  double action_clamp = 1.0;
  double reset_jitter = 0.01;
  /// Observations handed to the policy are the state divided by this.
  double observation_scale = 4.0;

  /// Six disks in two rows, mirror-symmetric about x = 0.
  static EnvConfig avoid_default();
  void validate() const;
  double first_row_y() const;
};

/// End-effector position and goal descriptor.
struct EnvState {
  Vec2 position;
  Vec2 goal;

  Vec to_vec() const { return {position.x, position.y, goal.x, goal.y}; }
  friend bool operator==(const EnvState&, const EnvState&) = default;
};

/// Policy conditioning vector for a state.
Vec observe(const EnvState& state, const EnvConfig& config);

EnvState env_reset(const EnvConfig& config, Rng& rng);

struct StepOutcome {
  EnvState next;
  bool collided = false;
  bool reached = false;
};

StepOutcome env_step(const EnvState& state, std::span<const double> action, const EnvConfig& config);

bool inside_obstacle(const Vec2& p, const EnvConfig& config);

enum class Mode { Left, Right, Undefined };
std::string to_string(Mode m);

struct TrajectoryStep {
  EnvState state;
  DenoiseChain chain;
  EnvState next;
  friend bool operator==(const TrajectoryStep&, const TrajectoryStep&) = default;
};

struct Trajectory {
  std::vector<TrajectoryStep> steps;
  bool reached = false;
  bool collided = false;
  bool timeout = false;
  Mode mode = Mode::Undefined;

  std::size_t size() const { return steps.size(); }
  const Vec& action(std::size_t t) const { return steps.at(t).chain.action(); }
  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

/// Produces the denoising chain for one control given an observation.
using ChainSampler = std::function<DenoiseChain(std::span<const double> observation, Rng& rng)>;

/// Runs one episode until the goal is reached, a collision occurs, or max_steps.
Trajectory rollout(const ChainSampler& sampler, const EnvConfig& config, Rng& rng);
Trajectory rollout(const nn::Mlp& net, const EnvConfig& config, const diffusion::NoiseSchedule& schedule, Rng& rng);

/// n independent episodes; episode i draws from rng.child(i).
std::vector<Trajectory> rollouts(const nn::Mlp& net, const EnvConfig& config, const diffusion::NoiseSchedule& schedule,
                                 int n, const Rng& rng);

/// Left / Right by the sign of the mean x offset of visited positions from the
/// center line; Undefined if the first obstacle row is never passed.
Mode classify_mode(const Trajectory& traj, const EnvConfig& config);

bool is_success(const Trajectory& traj);

/// Reflection across the center line (positions, goals, chain x components).
Trajectory mirror(const Trajectory& traj, const EnvConfig& config);

/// Checks that s_{t+1} of step t equals s_t of step t+1.
bool steps_chain(const Trajectory& traj);

// Trajectory log: JSON lines, one header line then one trajectory per line.
void write_trajectories(std::ostream& out, std::span<const Trajectory> trajs);
std::vector<Trajectory> read_trajectories(std::istream& in);
void write_trajectories(const std::string& path, std::span<const Trajectory> trajs);
std::vector<Trajectory> read_trajectories(const std::string& path);

struct SvgOptions {
  std::string title;
  int width_px = 480;
};

/// Top-down overlay of trajectories colored by mode (Left green, Right red, Undefined grey).
std::string render_svg(const EnvConfig& config, std::span<const Trajectory> trajs, const SvgOptions& opts = {});

}  // namespace rodif::mdp
