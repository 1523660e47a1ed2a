#include "rodif/unified_mdp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <nlohmann/json.hpp>
#include <ostream>
#include <sstream>

#include "rodif/errors.hpp"
#include "rodif/parallel.hpp"

namespace rodif::mdp {

using nlohmann::json;

EnvConfig EnvConfig::avoid_default() {
  EnvConfig c;
  const double r = 0.6;
  for (double x : {-2.5, 0.0, 2.5}) c.obstacles.push_back({{x, 2.5}, r});
  for (double x : {-3.3, 0.0, 3.3}) c.obstacles.push_back({{x, 5.0}, r});
  return c;
}

void EnvConfig::validate() const {
  if (max_steps < 1) throw ConfigError("env: max_steps must be >= 1");
  if (!(action_clamp > 0.0)) throw ConfigError("env: action_clamp must be positive");
  if (!(reset_jitter >= 0.0)) throw ConfigError("env: reset_jitter must be non-negative");
  if (!(observation_scale > 0.0)) throw ConfigError("env: observation_scale must be positive");
  if (!(lower.x < upper.x && lower.y < upper.y)) throw ConfigError("env: empty workspace bounds");
  for (const auto& o : obstacles) {
    if (!(o.radius > 0.0)) throw ConfigError("env: obstacle radius must be positive");
    if (o.center.x - o.radius <= lower.x || o.center.x + o.radius >= upper.x || o.center.y - o.radius <= lower.y ||
        o.center.y + o.radius >= upper.y) {
      throw ConfigError("env: obstacle not strictly inside the workspace");
    }
  }
  if (inside_obstacle(start, *this)) throw ConfigError("env: start position inside an obstacle");
}

double EnvConfig::first_row_y() const {
  if (obstacles.empty()) return start.y;
  double y = obstacles.front().center.y;
  for (const auto& o : obstacles) y = std::min(y, o.center.y);
  return y;
}

Vec observe(const EnvState& state, const EnvConfig& config) {
  Vec v = state.to_vec();
  for (double& x : v) x /= config.observation_scale;
  return v;
}

EnvState env_reset(const EnvConfig& config, Rng& rng) {
  EnvState s;
  s.position = config.start;
  if (config.reset_jitter > 0.0) {
    s.position.x += config.reset_jitter * rng.normal();
    s.position.y += config.reset_jitter * rng.normal();
  }
  s.goal = {config.center_x, config.goal_y};
  return s;
}

bool inside_obstacle(const Vec2& p, const EnvConfig& config) {
  for (const auto& o : config.obstacles) {
    const double dx = p.x - o.center.x;
    const double dy = p.y - o.center.y;
    if (dx * dx + dy * dy <= o.radius * o.radius) return true;
  }
  return false;
}

StepOutcome env_step(const EnvState& state, std::span<const double> action, const EnvConfig& config) {
  if (action.size() != 2) throw ConfigError("env_step: action must be 2-dimensional");
  const double c = config.action_clamp;
  StepOutcome out;
  out.next = state;
  out.next.position.x = std::clamp(state.position.x + std::clamp(action[0], -c, c), config.lower.x, config.upper.x);
  out.next.position.y = std::clamp(state.position.y + std::clamp(action[1], -c, c), config.lower.y, config.upper.y);
  out.collided = inside_obstacle(out.next.position, config);
  out.reached = out.next.position.y >= config.goal_y;
  return out;
}

std::string to_string(Mode m) {
  switch (m) {
    case Mode::Left: return "left";
    case Mode::Right: return "right";
    default: return "undefined";
  }
}

Trajectory rollout(const ChainSampler& sampler, const EnvConfig& config, Rng& rng) {
  Trajectory traj;
  EnvState state = env_reset(config, rng);
  for (int t = 0; t < config.max_steps; ++t) {
    DenoiseChain chain = sampler(observe(state, config), rng);
    const StepOutcome out = env_step(state, chain.action(), config);
    traj.steps.push_back({state, std::move(chain), out.next});
    state = out.next;
    if (out.collided || out.reached) {
      traj.collided = out.collided;
      traj.reached = out.reached;
      break;
    }
  }
  traj.timeout = !traj.reached && !traj.collided;
  traj.mode = classify_mode(traj, config);
  return traj;
}

Trajectory rollout(const nn::Mlp& net, const EnvConfig& config, const diffusion::NoiseSchedule& schedule, Rng& rng) {
  return rollout(
      [&](std::span<const double> obs, Rng& r) { return diffusion::sample_chain(net, obs, schedule, r); }, config,
      rng);
}

std::vector<Trajectory> rollouts(const nn::Mlp& net, const EnvConfig& config, const diffusion::NoiseSchedule& schedule,
                                 int n, const Rng& rng) {
  std::vector<Trajectory> out(static_cast<std::size_t>(std::max(n, 0)));
  parallel_for(out.size(), [&](std::size_t i) {
    Rng episode = rng.child(static_cast<std::uint64_t>(i));
    out[i] = rollout(net, config, schedule, episode);
  });
  return out;
}

Mode classify_mode(const Trajectory& traj, const EnvConfig& config) {
  if (traj.steps.empty()) return Mode::Undefined;
  const double row = config.first_row_y();
  double sum = 0.0;
  double max_y = traj.steps.front().state.position.y;
  std::size_t n = 0;
  auto visit = [&](const EnvState& s) {
    sum += s.position.x - config.center_x;
    max_y = std::max(max_y, s.position.y);
    ++n;
  };
  for (const auto& step : traj.steps) visit(step.state);
  visit(traj.steps.back().next);
  if (max_y < row) return Mode::Undefined;
  const double mean = sum / static_cast<double>(n);
  if (mean < 0.0) return Mode::Left;
  if (mean > 0.0) return Mode::Right;
  return Mode::Undefined;
}

bool is_success(const Trajectory& traj) { return traj.reached && !traj.collided; }

Trajectory mirror(const Trajectory& traj, const EnvConfig& config) {
  auto flip_state = [&](EnvState s) {
    s.position.x = 2.0 * config.center_x - s.position.x;
    s.goal.x = 2.0 * config.center_x - s.goal.x;
    return s;
  };
  Trajectory out = traj;
  for (auto& step : out.steps) {
    step.state = flip_state(step.state);
    step.next = flip_state(step.next);
    for (auto& a : step.chain.states) a[0] = -a[0];
    step.chain.condition = observe(step.state, config);
  }
  out.mode = classify_mode(out, config);
  return out;
}

bool steps_chain(const Trajectory& traj) {
  for (std::size_t t = 0; t + 1 < traj.steps.size(); ++t) {
    if (!(traj.steps[t].next == traj.steps[t + 1].state)) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Trajectory log
// ---------------------------------------------------------------------------

namespace {

constexpr const char* kTrajectoryFormat = "rodif-trajectories";
constexpr int kTrajectoryVersion = 1;

json state_json(const EnvState& s) { return json::array({s.position.x, s.position.y, s.goal.x, s.goal.y}); }

EnvState state_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4) throw DataError("trajectory log: state must have 4 entries");
  return {{j[0].get<double>(), j[1].get<double>()}, {j[2].get<double>(), j[3].get<double>()}};
}

Mode mode_from_string(const std::string& s) {
  if (s == "left") return Mode::Left;
  if (s == "right") return Mode::Right;
  if (s == "undefined") return Mode::Undefined;
  throw DataError("trajectory log: unknown mode '" + s + "'");
}

}  // namespace

void write_trajectories(std::ostream& out, std::span<const Trajectory> trajs) {
  out << json{{"format", kTrajectoryFormat}, {"version", kTrajectoryVersion}, {"count", trajs.size()}}.dump() << '\n';
  for (std::size_t id = 0; id < trajs.size(); ++id) {
    const Trajectory& t = trajs[id];
    json steps = json::array();
    for (const auto& s : t.steps) {
      json step{{"s", state_json(s.state)}, {"next", state_json(s.next)}};
      if (!s.chain.states.empty()) {
        step["chain"] = s.chain.states;
        step["cond"] = s.chain.condition;
        step["logp"] = s.chain.log_prob;
      }
      steps.push_back(std::move(step));
    }
    json rec{{"id", id},
             {"reached", t.reached},
             {"collided", t.collided},
             {"timeout", t.timeout},
             {"mode", to_string(t.mode)},
             {"steps", std::move(steps)}};
    out << rec.dump() << '\n';
  }
}

std::vector<Trajectory> read_trajectories(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("trajectory log: empty input");
  const json header = json::parse(line, nullptr, false);
  if (header.is_discarded() || header.value("format", "") != kTrajectoryFormat) {
    throw DataError("trajectory log: bad header");
  }
  if (header.value("version", 0) != kTrajectoryVersion) throw DataError("trajectory log: unsupported version");
  std::vector<Trajectory> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json rec = json::parse(line, nullptr, false);
    if (rec.is_discarded()) throw DataError("trajectory log: malformed record " + std::to_string(out.size()));
    Trajectory t;
    t.reached = rec.at("reached").get<bool>();
    t.collided = rec.at("collided").get<bool>();
    t.timeout = rec.at("timeout").get<bool>();
    t.mode = mode_from_string(rec.at("mode").get<std::string>());
    for (const auto& s : rec.at("steps")) {
      TrajectoryStep step;
      step.state = state_from_json(s.at("s"));
      step.next = state_from_json(s.at("next"));
      if (s.contains("chain")) {
        step.chain.states = s.at("chain").get<std::vector<Vec>>();
        step.chain.condition = s.at("cond").get<Vec>();
        step.chain.log_prob = s.at("logp").get<double>();
      }
      t.steps.push_back(std::move(step));
    }
    out.push_back(std::move(t));
  }
  if (out.size() != header.value("count", out.size())) throw DataError("trajectory log: record count mismatch");
  return out;
}

void write_trajectories(const std::string& path, std::span<const Trajectory> trajs) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write trajectory log '" + path + "'");
  write_trajectories(out, trajs);
}

std::vector<Trajectory> read_trajectories(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read trajectory log '" + path + "'");
  return read_trajectories(in);
}

// ---------------------------------------------------------------------------
// SVG
// ---------------------------------------------------------------------------

std::string render_svg(const EnvConfig& config, std::span<const Trajectory> trajs, const SvgOptions& opts) {
  const double w_units = config.upper.x - config.lower.x;
  const double h_units = config.upper.y - config.lower.y;
  const double scale = opts.width_px / w_units;
  const int height_px = static_cast<int>(std::lround(h_units * scale));
  auto px = [&](const Vec2& p) {
    return std::pair{(p.x - config.lower.x) * scale, (config.upper.y - p.y) * scale};
  };
  std::ostringstream svg;
  svg.precision(6);
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << opts.width_px << "\" height=\"" << height_px
      << "\" viewBox=\"0 0 " << opts.width_px << ' ' << height_px << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\" stroke=\"black\"/>\n";
  if (!opts.title.empty()) svg << "<title>" << opts.title << "</title>\n";
  {
    auto [x0, y0] = px({config.lower.x, config.goal_y});
    auto [x1, y1] = px({config.upper.x, config.goal_y});
    svg << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x1 << "\" y2=\"" << y1
        << "\" stroke=\"#2a9d2a\" stroke-width=\"3\"/>\n";
  }
  for (const auto& o : config.obstacles) {
    auto [cx, cy] = px(o.center);
    svg << "<circle cx=\"" << cx << "\" cy=\"" << cy << "\" r=\"" << o.radius * scale << "\" fill=\"#444\"/>\n";
  }
  for (const auto& t : trajs) {
    const char* color = t.mode == Mode::Left ? "#1b9e77" : t.mode == Mode::Right ? "#d95f02" : "#999999";
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-opacity=\"0.6\" stroke-width=\"1.5\" points=\"";
    if (!t.steps.empty()) {
      auto [x, y] = px(t.steps.front().state.position);
      svg << x << ',' << y;
      for (const auto& s : t.steps) {
        auto [nx, ny] = px(s.next.position);
        svg << ' ' << nx << ',' << ny;
      }
    }
    svg << "\"/>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace rodif::mdp
