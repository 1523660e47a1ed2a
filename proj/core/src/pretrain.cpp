#include "rodif/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "rodif/errors.hpp"

namespace rodif::pretrain {

std::vector<mdp::Vec2> Demonstrator::waypoints(Mode mode, const mdp::EnvConfig& config) const {
  if (mode == Mode::Undefined) throw ConfigError("demonstrator: mode must be Left or Right");
  // Left-corridor waypoints relative to the center line; Right mirrors them.
  std::vector<mdp::Vec2> wps = {{-1.25, 1.2}, {-1.25, 2.5}, {-1.5, 5.0}, {-1.0, config.goal_y + 0.5}};
  for (auto& p : wps) p.x = config.center_x + (mode == Mode::Left ? p.x : -p.x);
  return wps;
}

Vec Demonstrator::action(const mdp::Vec2& position, const mdp::Vec2& waypoint) const {
  double ax = gain * (waypoint.x - position.x);
  double ay = gain * (waypoint.y - position.y);
  const double norm = std::hypot(ax, ay);
  if (norm > max_speed) {
    ax *= max_speed / norm;
    ay *= max_speed / norm;
  }
  return {ax, ay};
}

mdp::Trajectory Demonstrator::run(Mode mode, const mdp::EnvConfig& config, int steps, Rng& rng) const {
  const auto wps = waypoints(mode, config);
  std::size_t next = 0;
  mdp::Trajectory traj;
  mdp::EnvState state = mdp::env_reset(config, rng);
  const double noise = noise_fraction * config.action_clamp;
  for (int t = 0; t < steps; ++t) {
    const auto& p = state.position;
    while (next + 1 < wps.size() &&
           (std::hypot(wps[next].x - p.x, wps[next].y - p.y) < waypoint_radius || p.y >= wps[next].y)) {
      ++next;
    }
    Vec a = action(p, wps[next]);
    for (double& x : a) x += noise * rng.normal();
    const auto out = mdp::env_step(state, a, config);
    diffusion::DenoiseChain chain;
    chain.states = {a};
    traj.steps.push_back({state, std::move(chain), out.next});
    state = out.next;
    if (out.collided || out.reached) {
      traj.collided = out.collided;
      traj.reached = out.reached;
      break;
    }
  }
  traj.timeout = !traj.reached && !traj.collided;
  traj.mode = mdp::classify_mode(traj, config);
  return traj;
}

double DemoSet::mode_share(Mode mode) const {
  if (episodes.empty()) return 0.0;
  const auto n = std::count_if(episodes.begin(), episodes.end(), [&](const auto& e) { return e.mode == mode; });
  return static_cast<double>(n) / static_cast<double>(episodes.size());
}

DemoSet generate_demos(const mdp::EnvConfig& config, int n_per_mode, const Demonstrator& demo, Rng& rng) {
  if (n_per_mode < 1) throw ConfigError("generate_demos: n_per_mode must be >= 1");
  config.validate();
  DemoSet set;
  for (Mode mode : {Mode::Left, Mode::Right}) {
    for (int i = 0; i < n_per_mode; ++i) {
      mdp::Trajectory traj = demo.run(mode, config, config.max_steps, rng);
      if (!mdp::is_success(traj) || traj.mode != mode) {
        std::ostringstream msg;
        msg << "demonstrator episode " << i << " for mode " << mdp::to_string(mode) << " failed (reached="
            << traj.reached << ", collided=" << traj.collided << ", classified " << mdp::to_string(traj.mode) << ")";
        throw GenerationError(msg.str());
      }
      for (const auto& step : traj.steps) {
        set.samples.push_back({mdp::observe(step.state, config), step.chain.action(), mode});
      }
      set.episodes.push_back(std::move(traj));
    }
  }
  return set;
}

std::vector<BcDraw> draw_bc_noise(std::size_t batch, std::size_t action_dim, const diffusion::NoiseSchedule& schedule,
                                  Rng& rng) {
  std::vector<BcDraw> draws(batch);
  for (auto& d : draws) {
    d.step = static_cast<int>(rng.uniform_int(1, schedule.steps()));
    d.noise.resize(action_dim);
    for (double& e : d.noise) e = rng.normal();
  }
  return draws;
}

double bc_loss(const nn::Mlp& net, std::span<const DemoSample> batch, std::span<const BcDraw> draws,
               const diffusion::NoiseSchedule& schedule) {
  if (batch.empty()) throw ContractError("bc_loss: empty batch");
  if (draws.size() != batch.size()) throw ConfigError("bc_loss: one draw per batch element required");
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Vec noisy = diffusion::forward_noise(batch[i].action, draws[i].noise, draws[i].step, schedule);
    const Vec pred = net.forward(diffusion::predictor_input(noisy, draws[i].step, schedule.steps(), batch[i].observation));
    for (std::size_t j = 0; j < pred.size(); ++j) {
      const double r = draws[i].noise[j] - pred[j];
      total += r * r;
    }
  }
  return total / static_cast<double>(batch.size());
}

nn::Var bc_loss(nn::Tape& tape, std::span<const DemoSample> batch, std::span<const BcDraw> draws,
                const diffusion::NoiseSchedule& schedule) {
  if (batch.empty()) throw ContractError("bc_loss: empty batch");
  if (draws.size() != batch.size()) throw ConfigError("bc_loss: one draw per batch element required");
  std::vector<nn::Var> terms;
  terms.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Vec noisy = diffusion::forward_noise(batch[i].action, draws[i].noise, draws[i].step, schedule);
    nn::Var pred =
        tape.mlp(tape.constant(diffusion::predictor_input(noisy, draws[i].step, schedule.steps(), batch[i].observation)));
    terms.push_back(tape.sum_squares(tape.sub(tape.constant(draws[i].noise), pred)));
  }
  return tape.scale(tape.sum(terms), 1.0 / static_cast<double>(batch.size()));
}

double bc_loss(const nn::Mlp& net, std::span<const DemoSample> batch, const diffusion::NoiseSchedule& schedule,
               Rng& rng) {
  const auto draws = draw_bc_noise(batch.size(), net.output_size(), schedule, rng);
  return bc_loss(net, batch, draws, schedule);
}

nn::Mlp make_policy_net(const PretrainConfig& cfg, Rng& rng) {
  std::vector<std::size_t> sizes = {2 + 1 + 4};
  sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  sizes.push_back(2);
  return nn::Mlp::make(sizes, rng);
}

PretrainResult pretrain(const PretrainConfig& cfg) {
  if (cfg.train_steps < 0 || cfg.batch_size < 1 || !(cfg.learning_rate > 0.0) || cfg.eval_episodes < 1) {
    throw ConfigError("pretrain: invalid training budget");
  }
  cfg.env.validate();
  const auto schedule = cfg.schedule();
  const Rng root(cfg.seed);

  PretrainResult result;
  Rng demo_rng = root.child("demos");
  result.demos = generate_demos(cfg.env, cfg.demos_per_mode, cfg.demonstrator, demo_rng);

  Rng init_rng = root.child("init");
  result.net = make_policy_net(cfg, init_rng);
  nn::AdamState adam(result.net.param_count(), {cfg.learning_rate, 0.9, 0.999, 1e-8});

  Rng batch_rng = root.child("batches");
  const auto& samples = result.demos.samples;
  std::vector<DemoSample> batch(static_cast<std::size_t>(cfg.batch_size));
  double window = 0.0;
  int window_count = 0;
  for (int step = 0; step < cfg.train_steps; ++step) {
    for (auto& b : batch) b = samples[static_cast<std::size_t>(batch_rng.uniform_int(0, samples.size() - 1))];
    const auto draws = draw_bc_noise(batch.size(), result.net.output_size(), schedule, batch_rng);
    nn::Tape tape(&result.net);
    nn::Var loss = bc_loss(tape, batch, draws, schedule);
    const nn::Gradient grad = tape.gradient(loss);
    window += tape.scalar(loss);
    ++window_count;
    nn::adam_step(adam, result.net.params(), grad);
    if (window_count == cfg.log_every || step + 1 == cfg.train_steps) {
      result.loss_history.push_back(window / window_count);
      window = 0.0;
      window_count = 0;
    }
  }

  const auto trajs = mdp::rollouts(result.net, cfg.env, schedule, cfg.eval_episodes, root.child("eval"));
  int success = 0, left = 0, right = 0;
  for (const auto& t : trajs) {
    success += mdp::is_success(t);
    left += t.mode == Mode::Left;
    right += t.mode == Mode::Right;
  }
  const double n = static_cast<double>(trajs.size());
  result.eval_episodes = static_cast<int>(trajs.size());
  result.success_rate = success / n;
  result.left_share = left / n;
  result.right_share = right / n;

  if (std::min(result.left_share, result.right_share) < cfg.collapse_share) {
    std::ostringstream msg;
    msg << "pretraining collapsed to one mode: left " << result.left_share << ", right " << result.right_share
        << ", success " << result.success_rate << " over " << result.eval_episodes << " episodes";
    throw PretrainingFailed(msg.str(), std::move(result));
  }
  return result;
}

}  // namespace rodif::pretrain
