#include <cmath>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "rodif/cut_oracle.hpp"
#include "rodif/errors.hpp"
#include "rodif/pretrain.hpp"
#include "rodif/trainer_eval.hpp"

namespace rodif::cli {

namespace fs = std::filesystem;

namespace {

// ---------------------------------------------------------------------------
// Config -> library structs
// ---------------------------------------------------------------------------

mdp::Vec2 vec2(const json& j) {
  if (!j.is_array() || j.size() != 2) throw UsageError("expected [x, y], got " + j.dump());
  return {j[0].get<double>(), j[1].get<double>()};
}

mdp::Mode mode(const std::string& s) {
  if (s == "left") return mdp::Mode::Left;
  if (s == "right") return mdp::Mode::Right;
  throw UsageError("harvest.preferred must be left or right, got '" + s + "'");
}

mdp::EnvConfig env_config(const json& cfg) {
  const json& e = cfg["env"];
  mdp::EnvConfig env;
  env.start = vec2(e["start"]);
  env.goal_y = e["goal_y"];
  env.center_x = e["center_x"];
  env.lower = vec2(e["lower"]);
  env.upper = vec2(e["upper"]);
  for (const auto& o : e["obstacles"]) {
    if (!o.is_array() || o.size() != 3) throw UsageError("env.obstacles entries are [x, y, radius]");
    env.obstacles.push_back({{o[0].get<double>(), o[1].get<double>()}, o[2].get<double>()});
  }
  env.max_steps = e["max_steps"];
  env.action_clamp = e["action_clamp"];
  env.reset_jitter = e["reset_jitter"];
  env.observation_scale = e["observation_scale"];
  env.validate();
  return env;
}

pretrain::PretrainConfig pretrain_config(const json& cfg) {
  const json& p = cfg["pretrain"];
  pretrain::PretrainConfig c;
  c.env = env_config(cfg);
  c.diffusion_steps = cfg["diffusion"]["steps"];
  c.beta_start = cfg["diffusion"]["beta_start"];
  c.beta_end = cfg["diffusion"]["beta_end"];
  c.hidden = p["hidden"].get<std::vector<std::size_t>>();
  c.demos_per_mode = p["demos_per_mode"];
  c.demonstrator.gain = p["demo_gain"];
  c.demonstrator.max_speed = p["demo_max_speed"];
  c.demonstrator.noise_fraction = p["demo_noise"];
  c.train_steps = p["train_steps"];
  c.batch_size = p["batch_size"];
  c.learning_rate = p["learning_rate"];
  c.seed = cfg["seed"];
  c.eval_episodes = p["eval_episodes"];
  c.collapse_share = p["collapse_share"];
  c.log_every = p["log_every"];
  return c;
}

train::TrainConfig train_config(const json& cfg) {
  const json& t = cfg["train"];
  const json& l = cfg["loss"];
  train::TrainConfig c;
  c.kind = loss::loss_kind_from_string(l["kind"]);
  c.loss.alpha = l["alpha"];
  c.loss.beta = l["beta"];
  c.loss.gamma = l["gamma"];
  c.loss.nu = l["nu"];
  c.epochs = t["epochs"];
  c.batch_size = t["batch_size"];
  c.learning_rate = t["learning_rate"];
  c.seed = cfg["seed"];
  c.eval_every = t["eval_every"];
  c.eval_episodes = t["eval_episodes"];
  c.preferred = mode(cfg["harvest"]["preferred"]);
  c.validate();
  return c;
}

prefs::HarvestConfig harvest_config(const json& cfg) {
  const json& h = cfg["harvest"];
  return {h["winners"], h["losers"], mode(h["preferred"]), h["attempt_factor"]};
}

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw DataError("cannot write '" + path.string() + "'");
}

// Written under a temporary name, then renamed into place.
void write_file_atomic(const fs::path& path, const std::string& text) {
  fs::path tmp = path;
  tmp += ".tmp";
  write_file(tmp, text);
  fs::rename(tmp, path);
}

template <class Fn>
std::string render(Fn&& fn) {
  std::ostringstream out;
  fn(out);
  return out.str();
}

std::string checkpoint_bytes(const nn::Mlp& net) {
  return render([&](std::ostream& o) { nn::save_checkpoint(o, net); });
}

nn::Mlp load_policy(const std::string& path, const std::string& key, const diffusion::NoiseSchedule&) {
  if (path.empty()) throw UsageError(key + " is not set (use --set " + key + "=<checkpoint>)");
  if (!fs::exists(path)) throw UsageError("checkpoint '" + path + "' does not exist");
  nn::Mlp net = nn::load_checkpoint(path);
  if (net.input_size() != 7 || net.output_size() != 2) {
    throw UsageError("checkpoint '" + path + "' is not a 2D policy (expects 7 inputs, 2 outputs)");
  }
  return net;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_eval_csv(const fs::path& path, const train::Metrics& m, std::uint64_t seed) {
  write_file(path, "success_rate,alignment_rate,left,right,undefined,episodes,seed\n" + fmt(m.success_rate) + "," +
                       fmt(m.alignment_rate) + "," + std::to_string(m.left) + "," + std::to_string(m.right) + "," +
                       std::to_string(m.undefined) + "," + std::to_string(m.episodes) + "," +
                       std::to_string(seed) + "\n");
}

std::string metrics_line(const train::Metrics& m) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "success %.3f alignment %.3f (left %d right %d undefined %d of %d)", m.success_rate,
                m.alignment_rate, m.left, m.right, m.undefined, m.episodes);
  return buf;
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

int cmd_pretrain(const json& cfg, const fs::path& out, std::ostream& log) {
  const auto pc = pretrain_config(cfg);
  pretrain::PretrainResult result;
  std::string failure;
  try {
    result = pretrain::pretrain(pc);
  } catch (const pretrain::PretrainingFailed& e) {
    result = e.result();
    failure = e.what();
  }
  write_file(out / "policy.ckpt", checkpoint_bytes(result.net));
  mdp::write_trajectories((out / "demos.jsonl").string(), result.demos.episodes);
  write_file(out / "pretrain_loss.csv", render([&](std::ostream& o) {
               o << "step,bc_loss\n";
               for (std::size_t i = 0; i < result.loss_history.size(); ++i) {
                 o << (i + 1) * static_cast<std::size_t>(pc.log_every) << ',' << fmt(result.loss_history[i]) << '\n';
               }
             }));
  write_file(out / "pretrain_metrics.csv", "success_rate,left_share,right_share,episodes,seed\n" +
                                               fmt(result.success_rate) + "," + fmt(result.left_share) + "," +
                                               fmt(result.right_share) + "," + std::to_string(result.eval_episodes) +
                                               "," + std::to_string(pc.seed) + "\n");
  std::vector<mdp::Trajectory> shown;
  train::evaluate(result.net, pc.env, pc.schedule(), 40, pc.seed, mdp::Mode::Left, &shown);
  write_file(out / "rollouts.svg", mdp::render_svg(pc.env, shown, {"pretrained policy", 480}));
  char buf[160];
  std::snprintf(buf, sizeof buf, "pretrained: success %.3f, left %.3f, right %.3f over %d episodes\n",
                result.success_rate, result.left_share, result.right_share, result.eval_episodes);
  log << buf;
  if (!failure.empty()) {
    log << "error: " << failure << '\n';
    return kPretrainFailed;
  }
  return kOk;
}

struct Preferences {
  prefs::Harvest harvest;
  std::vector<prefs::PreferencePair> pairs;
};

Preferences harvest_pairs(const nn::Mlp& ref, const json& cfg, const mdp::EnvConfig& env,
                          const diffusion::NoiseSchedule& schedule, std::ostream& log) {
  Preferences p;
  p.harvest = prefs::harvest(ref, env, schedule, harvest_config(cfg), Rng(cfg["seed"].get<std::uint64_t>()).child("harvest"));
  p.pairs = prefs::pair_cartesian(p.harvest.winner_ids, p.harvest.loser_ids);
  log << "harvested " << p.harvest.winner_ids.size() << " winners and " << p.harvest.loser_ids.size()
      << " losers in " << p.harvest.attempts << " episodes; " << p.pairs.size() << " pairs\n";
  return p;
}

int cmd_finetune(const json& cfg, const fs::path& out, std::ostream& log) {
  const auto pc = pretrain_config(cfg);
  const auto schedule = pc.schedule();
  const auto tc = train_config(cfg);
  const nn::Mlp ref = load_policy(cfg["paths"]["reference"], "paths.reference", schedule);
  const auto p = harvest_pairs(ref, cfg, pc.env, schedule, log);
  mdp::write_trajectories((out / "harvest.jsonl").string(), p.harvest.store.trajectories);
  write_file(out / "harvest.svg", mdp::render_svg(pc.env, p.harvest.store.trajectories, {"harvested trajectories", 480}));

  const double rate = cfg["corruption"]["rate"];
  const auto noisy = prefs::corrupt(p.pairs, {rate, tc.seed});
  std::size_t flipped = 0;
  for (const auto& q : noisy) flipped += q.corrupted;
  prefs::write_preferences((out / "preferences.csv").string(), noisy);
  log << "corrupted " << flipped << " of " << noisy.size() << " labels\n";

  train::FinetuneResult r;
  try {
    r = train::finetune(ref, p.harvest.store, prefs::observed(noisy), pc.env, schedule, tc);
  } catch (const train::TrainingAborted& e) {
    write_file(out / "policy_last_good.ckpt", checkpoint_bytes(e.last_good()));
    throw;
  }
  write_file(out / "policy.ckpt", checkpoint_bytes(r.net));
  write_file(out / "metrics.csv", render([&](std::ostream& o) {
               train::write_metrics_header(o);
               train::write_metrics_rows(o, tc, rate, r.history);
             }));
  mdp::write_trajectories((out / "rollouts.jsonl").string(), r.final_rollouts);
  write_file(out / "rollouts.svg", mdp::render_svg(pc.env, r.final_rollouts, {"fine-tuned policy", 480}));
  log << "fine-tuned (" << loss::to_string(tc.kind) << "): " << metrics_line(r.final_metrics) << ", drift "
      << r.history.back().drift << '\n';
  return kOk;
}

int cmd_eval(const json& cfg, const fs::path& out, std::ostream& log) {
  const auto pc = pretrain_config(cfg);
  const auto schedule = pc.schedule();
  const bool own = !cfg["paths"]["policy"].get<std::string>().empty();
  const nn::Mlp net = own ? load_policy(cfg["paths"]["policy"], "paths.policy", schedule)
                          : load_policy(cfg["paths"]["reference"], "paths.policy", schedule);
  const std::uint64_t seed = cfg["seed"];
  std::vector<mdp::Trajectory> trajs;
  const auto m = train::evaluate(net, pc.env, schedule, cfg["eval"]["episodes"], seed, mode(cfg["harvest"]["preferred"]),
                                 &trajs);
  write_eval_csv(out / "eval_metrics.csv", m, seed);
  mdp::write_trajectories((out / "rollouts.jsonl").string(), trajs);
  write_file(out / "rollouts.svg", mdp::render_svg(pc.env, trajs, {"evaluation rollouts", 480}));
  log << "eval: " << metrics_line(m) << '\n';
  return kOk;
}

std::vector<train::CellSpec> sweep_cells(const json& cfg) {
  const auto base = train_config(cfg);
  const auto axis = train::sweep_axis_from_string(cfg["sweep"]["axis"]);
  const auto values = cfg["sweep"]["values"].get<std::vector<double>>();
  if (axis == train::SweepAxis::Corruption) {
    return train::corruption_cells(values, cfg["sweep"]["gammas"].get<std::vector<double>>(), base);
  }
  return train::ablation_cells(axis, values, cfg["sweep"]["corruption_rate"], base);
}

int cmd_sweep(const json& cfg, const fs::path& out, std::ostream& log) {
  const auto pc = pretrain_config(cfg);
  const auto schedule = pc.schedule();
  const auto cells = sweep_cells(cfg);
  const nn::Mlp ref = load_policy(cfg["paths"]["reference"], "paths.reference", schedule);
  std::optional<Preferences> p;
  std::string rows;
  int failed = 0;
  for (const auto& cell : cells) {
    const fs::path dir = out / "cells" / cell.id();
    const fs::path row_path = dir / "row.csv";
    if (fs::exists(row_path)) {
      std::ifstream in(row_path, std::ios::binary);
      rows += std::string(std::istreambuf_iterator<char>(in), {});
      log << "cell " << cell.id() << ": done, skipped\n";
      continue;
    }
    if (!p) p = harvest_pairs(ref, cfg, pc.env, schedule, log);
    fs::create_directories(dir);
    const auto r = train::run_cell(cell, ref, p->harvest.store, p->pairs, pc.env, schedule);
    if (r.ok()) {
      write_file(dir / "policy.ckpt", checkpoint_bytes(r.net));
      write_file(dir / "metrics.csv", render([&](std::ostream& o) {
                   train::write_metrics_header(o);
                   train::write_metrics_rows(o, cell.train, cell.corruption_rate, r.history);
                 }));
      log << "cell " << cell.id() << ": " << metrics_line(r.metrics) << '\n';
    } else {
      ++failed;
      log << "cell " << cell.id() << ": error: " << r.error << '\n';
    }
    const std::string row = render([&](std::ostream& o) { train::write_sweep_row(o, r); });
    write_file_atomic(row_path, row);
    rows += row;
  }
  write_file_atomic(out / "sweep.csv", render([](std::ostream& o) { train::write_sweep_header(o); }) + rows);
  log << cells.size() << " cells, " << failed << " failed\n";
  return kOk;
}

// x >= -0.5, y >= -0.5 and x + y <= 0.5, the last one reported reversed.
std::vector<cuts::SyntheticCut> triangle_fixture() {
  const double s = std::sqrt(0.5);
  return {{{1.0, 0.0}, 0.5, false}, {{0.0, 1.0}, 0.5, false}, {{-s, -s}, 0.5 * s, true}};
}

int cmd_oracle(const json& cfg, const fs::path& out, std::ostream& log) {
  cuts::OracleConfig oc;
  oc.instances = cfg["oracle"]["instances"];
  oc.resolution = cfg["oracle"]["resolution"];
  oc.extent = cfg["oracle"]["extent"];
  oc.max_cuts = cfg["oracle"]["max_cuts"];
  oc.seed = cfg["seed"];
  const auto report = cuts::run_oracle(oc);
  const auto grid = cuts::GridSpace::square(2, -oc.extent, oc.extent, oc.resolution);

  const auto fixture = triangle_fixture();
  const std::vector<double> origin{0.0, 0.0};
  const std::size_t theta = grid.nearest(origin);
  const auto counts = cuts::vote_counts(grid, fixture);
  const auto l2 = cuts::check_lemma2(grid, theta, fixture, 1.0 / 3.0);
  auto two_flips = fixture;
  two_flips[0].flipped = true;
  const auto bad = cuts::check_lemma2(grid, theta, two_flips, 1.0 / 3.0);
  write_file(out / "fixture_votes.csv", render([&](std::ostream& o) { cuts::write_votes_csv(o, grid, counts); }));
  write_file(out / "fixture.svg",
             cuts::render_votes_svg(grid, counts, fixture, grid.point(theta), {"3 cuts, 1 flipped, gamma 1/3", 420, 2}));

  const std::string text = render([&](std::ostream& o) {
    cuts::write_report(o, report, oc);
    o << "fixture (3 cuts, 1 flipped, gamma 1/3): threshold " << l2.threshold << ", theta votes " << l2.theta_votes
      << ", theta in robust set " << (l2.theta_in_robust_set ? "yes" : "no") << "\n";
    o << "forced-bad fixture (3 cuts, 2 flipped, gamma 1/3): budget " << cuts::to_string(bad.budget)
      << ", in contract " << (bad.in_contract ? "yes" : "no") << ", theta in robust set "
      << (bad.theta_in_robust_set ? "yes" : "no") << "\n";
  });
  write_file(out / "oracle_report.txt", text);
  log << text;
  for (std::size_t i = 0; i < report.counterexamples.size(); ++i) {
    const auto& c = report.counterexamples[i];
    write_file(out / ("counterexample_" + std::to_string(i) + ".txt"),
               render([&](std::ostream& o) {
                 o << "lemma " << c.lemma << '\n';
                 cuts::write_instance(o, c.instance, grid);
               }));
  }
  const bool fixture_ok = l2.theta_in_robust_set && l2.holds && !bad.in_contract && bad.holds;
  if (!report.counterexamples.empty() || !fixture_ok) {
    log << "error: counterexample found; instances written to " << out.string() << '\n';
    return kCounterexample;
  }
  return kOk;
}

}  // namespace

int run(const RunConfig& rc, std::ostream& log) {
  try {
    const json cfg = resolve_config(rc);
    fs::create_directories(rc.out);
    const fs::path echo = rc.out / "resolved_config.json";
    const std::string resolved = cfg.dump(2) + "\n";
    if (rc.command == "sweep" && fs::exists(echo)) {
      std::ifstream in(echo, std::ios::binary);
      if (std::string(std::istreambuf_iterator<char>(in), {}) != resolved) {
        throw UsageError("'" + rc.out.string() + "' holds a sweep with a different resolved config");
      }
    }
    write_file(echo, resolved);
    if (rc.command == "pretrain") return cmd_pretrain(cfg, rc.out, log);
    if (rc.command == "finetune") return cmd_finetune(cfg, rc.out, log);
    if (rc.command == "eval") return cmd_eval(cfg, rc.out, log);
    if (rc.command == "sweep") return cmd_sweep(cfg, rc.out, log);
    if (rc.command == "oracle") return cmd_oracle(cfg, rc.out, log);
    throw UsageError("unknown subcommand '" + rc.command + "'");
  } catch (const UsageError& e) {
    log << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << '\n';
    return kUsage;
  } catch (const json::exception& e) {
    log << "config error: " << e.what() << '\n';
    return kUsage;
  } catch (const prefs::HarvestError& e) {
    log << "error: " << e.what() << '\n';
    return kHarvestCap;
  } catch (const train::TrainingAborted& e) {
    log << "error: " << e.what() << " (epoch " << e.epoch() << ", batch " << e.batch() << ")\n";
    return kNumericalAbort;
  } catch (const NumericalError& e) {
    log << "error: " << e.what() << '\n';
    return kNumericalAbort;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
    return kRuntime;
  }
}

}  // namespace rodif::cli
