#include "rodif/trainer_eval.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

#include "rodif/errors.hpp"

namespace rodif::train {

void TrainConfig::validate() const {
  loss.validate();
  if (epochs < 0) throw ConfigError("train: epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (!(learning_rate >= 0.0)) throw ConfigError("train: learning_rate must be >= 0");
  if (eval_every < 0) throw ConfigError("train: eval_every must be >= 0");
  if (eval_episodes < 1) throw ConfigError("train: eval_episodes must be >= 1");
  if (preferred == Mode::Undefined) throw ConfigError("train: preferred mode must be Left or Right");
}

Metrics summarize(std::span<const mdp::Trajectory> trajs, Mode preferred) {
  Metrics m;
  m.episodes = static_cast<int>(trajs.size());
  int aligned = 0;
  for (const auto& t : trajs) {
    m.successes += mdp::is_success(t);
    switch (t.mode) {
      case Mode::Left: ++m.left; break;
      case Mode::Right: ++m.right; break;
      case Mode::Undefined: ++m.undefined; break;
    }
    aligned += t.mode == preferred;
  }
  if (m.episodes > 0) {
    m.success_rate = static_cast<double>(m.successes) / m.episodes;
    m.alignment_rate = static_cast<double>(aligned) / m.episodes;
  }
  return m;
}

Metrics evaluate(const nn::Mlp& net, const mdp::EnvConfig& env, const diffusion::NoiseSchedule& schedule, int n,
                 std::uint64_t seed, Mode preferred, std::vector<mdp::Trajectory>* rollouts_out) {
  if (n < 1) throw ConfigError("evaluate: need at least one episode");
  auto trajs = mdp::rollouts(net, env, schedule, n, Rng(seed).child("eval"));
  Metrics m = summarize(trajs, preferred);
  if (rollouts_out) *rollouts_out = std::move(trajs);
  return m;
}

namespace {

double full_objective(const loss::PreferenceObjective& obj, const nn::Mlp& net,
                      std::span<const prefs::ObservedPair> pairs) {
  if (pairs.empty()) return 0.0;
  return obj.evaluate(net, pairs, {}).loss;
}

bool all_finite(std::span<const double> xs) {
  for (double x : xs) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

}  // namespace

FinetuneResult finetune(const nn::Mlp& ref, const prefs::TrajectoryStore& store,
                        std::span<const prefs::ObservedPair> pairs, const mdp::EnvConfig& env,
                        const diffusion::NoiseSchedule& schedule, const TrainConfig& cfg) {
  cfg.validate();
  const loss::PreferenceObjective objective(ref, store, schedule, cfg.kind, cfg.loss);
  FinetuneResult result;
  result.net = ref;
  nn::Mlp& net = result.net;
  nn::AdamState adam(net.param_count(), {cfg.learning_rate, 0.9, 0.999, 1e-8});

  const Rng root(cfg.seed);
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<prefs::ObservedPair> batch;
  nn::Gradient grad(net.param_count());

  auto record = [&](int epoch, bool with_metrics) {
    HistoryRow row;
    row.epoch = epoch;
    row.loss = full_objective(objective, net, pairs);
    row.drift = nn::param_distance(net, ref);
    if (with_metrics) {
      row.metrics = evaluate(net, env, schedule, cfg.eval_episodes, cfg.seed, cfg.preferred,
                             epoch == cfg.epochs ? &result.final_rollouts : nullptr);
    }
    result.history.push_back(std::move(row));
  };

  record(0, cfg.eval_every > 0 || cfg.epochs == 0);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng shuffle = root.child("shuffle").child(static_cast<std::uint64_t>(epoch));
    for (std::size_t i = order.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(shuffle.uniform_int(0, static_cast<std::int64_t>(i - 1)));
      std::swap(order[i - 1], order[j]);
    }
    int batch_no = 0;
    for (std::size_t lo = 0; lo < order.size(); lo += static_cast<std::size_t>(cfg.batch_size), ++batch_no) {
      const std::size_t hi = std::min(order.size(), lo + static_cast<std::size_t>(cfg.batch_size));
      batch.clear();
      for (std::size_t i = lo; i < hi; ++i) batch.push_back(pairs[order[i]]);
      std::fill(grad.values.begin(), grad.values.end(), 0.0);
      loss::PreferenceObjective::Evaluation ev;
      try {
        ev = objective.evaluate(net, batch, grad.values);
      } catch (const NumericalError& e) {
        throw TrainingAborted(std::string("fine-tuning aborted: ") + e.what(), net, epoch, batch_no);
      }
      if (!all_finite(grad.values)) {
        throw TrainingAborted("fine-tuning aborted: non-finite gradient", net, epoch, batch_no);
      }
      nn::adam_step(adam, net.params(), grad);
    }
    const bool eval_now = epoch == cfg.epochs || (cfg.eval_every > 0 && epoch % cfg.eval_every == 0);
    record(epoch, eval_now);
    if (!std::isfinite(result.history.back().loss)) {
      throw TrainingAborted("fine-tuning aborted: non-finite objective after epoch " + std::to_string(epoch), net,
                            epoch, batch_no);
    }
  }
  result.final_metrics = *result.history.back().metrics;
  return result;
}

std::string to_string(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::Corruption: return "corruption";
    case SweepAxis::Alpha: return "alpha";
    case SweepAxis::Beta: return "beta";
    case SweepAxis::Gamma: return "gamma";
  }
  return "?";
}

SweepAxis sweep_axis_from_string(const std::string& s) {
  for (SweepAxis a : {SweepAxis::Corruption, SweepAxis::Alpha, SweepAxis::Beta, SweepAxis::Gamma}) {
    if (to_string(a) == s) return a;
  }
  throw ConfigError("unknown sweep axis '" + s + "' (expected corruption, alpha, beta or gamma)");
}

std::string CellSpec::id() const {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%s-%.4g-%s-c%.4g-a%.4g-b%.4g-g%.4g-s%llu", to_string(axis).c_str(), value,
                loss::to_string(train.kind).c_str(), corruption_rate, train.loss.alpha, train.loss.beta,
                train.loss.gamma, static_cast<unsigned long long>(train.seed));
  return buf;
}

std::vector<CellSpec> corruption_cells(std::span<const double> rates, std::span<const double> gammas,
                                       const TrainConfig& base) {
  if (rates.size() != gammas.size()) throw ConfigError("corruption sweep: one gamma per rate required");
  std::vector<CellSpec> cells;
  for (std::size_t i = 0; i < rates.size(); ++i) {
    if (!(rates[i] >= 0.0 && rates[i] <= 1.0)) throw ConfigError("corruption sweep: rates must lie in [0, 1]");
    for (LossKind kind : {LossKind::RoDiF, LossKind::DpDpo}) {
      CellSpec c;
      c.axis = SweepAxis::Corruption;
      c.value = rates[i];
      c.corruption_rate = rates[i];
      c.train = base;
      c.train.kind = kind;
      if (kind == LossKind::RoDiF) c.train.loss.gamma = gammas[i];
      cells.push_back(c);
    }
  }
  return cells;
}

std::vector<CellSpec> ablation_cells(SweepAxis axis, std::span<const double> values, double corruption_rate,
                                     const TrainConfig& base) {
  if (values.empty()) throw ConfigError("ablation sweep: no values");
  if (axis == SweepAxis::Corruption) throw ConfigError("ablation sweep: axis must be alpha, beta or gamma");
  std::vector<CellSpec> cells;
  for (double v : values) {
    CellSpec c;
    c.axis = axis;
    c.value = v;
    c.corruption_rate = corruption_rate;
    c.train = base;
    c.train.kind = LossKind::RoDiF;
    if (axis == SweepAxis::Alpha) c.train.loss.alpha = v;
    if (axis == SweepAxis::Beta) c.train.loss.beta = v;
    if (axis == SweepAxis::Gamma) c.train.loss.gamma = v;
    cells.push_back(c);
  }
  return cells;
}

CellResult run_cell(const CellSpec& spec, const nn::Mlp& ref, const prefs::TrajectoryStore& store,
                    std::span<const prefs::PreferencePair> pairs, const mdp::EnvConfig& env,
                    const diffusion::NoiseSchedule& schedule) {
  CellResult out;
  out.spec = spec;
  try {
    const auto noisy = prefs::corrupt(pairs, {spec.corruption_rate, spec.train.seed});
    for (const auto& p : noisy) out.flipped += p.corrupted;
    const auto observed = prefs::observed(noisy);
    FinetuneResult r = finetune(ref, store, observed, env, schedule, spec.train);
    out.history = std::move(r.history);
    out.metrics = r.final_metrics;
    out.drift = out.history.back().drift;
    out.final_loss = out.history.back().loss;
    out.net = std::move(r.net);
    out.rollouts = std::move(r.final_rollouts);
  } catch (const std::exception& e) {
    out.error = e.what();
  }
  return out;
}

namespace {

std::vector<CellResult> run_cells(const std::vector<CellSpec>& cells, const nn::Mlp& ref,
                                  const prefs::TrajectoryStore& store, std::span<const prefs::PreferencePair> pairs,
                                  const mdp::EnvConfig& env, const diffusion::NoiseSchedule& schedule,
                                  const CellCallback& on_cell) {
  std::vector<CellResult> out;
  for (const auto& c : cells) {
    out.push_back(run_cell(c, ref, store, pairs, env, schedule));
    if (on_cell) on_cell(out.back());
  }
  return out;
}

}  // namespace

std::vector<CellResult> corruption_sweep(const nn::Mlp& ref, const prefs::TrajectoryStore& store,
                                         std::span<const prefs::PreferencePair> pairs, const mdp::EnvConfig& env,
                                         const diffusion::NoiseSchedule& schedule, std::span<const double> rates,
                                         std::span<const double> gammas, const TrainConfig& base,
                                         const CellCallback& on_cell) {
  return run_cells(corruption_cells(rates, gammas, base), ref, store, pairs, env, schedule, on_cell);
}

std::vector<CellResult> ablation_sweep(SweepAxis axis, std::span<const double> values, double corruption_rate,
                                       const nn::Mlp& ref, const prefs::TrajectoryStore& store,
                                       std::span<const prefs::PreferencePair> pairs, const mdp::EnvConfig& env,
                                       const diffusion::NoiseSchedule& schedule, const TrainConfig& base,
                                       const CellCallback& on_cell) {
  return run_cells(ablation_cells(axis, values, corruption_rate, base), ref, store, pairs, env, schedule, on_cell);
}

namespace {

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

void write_metrics_header(std::ostream& out) {
  out << "loss_kind,corruption_rate,epoch,success_rate,alignment_rate,drift_norm,loss_value,seed\n";
}

void write_metrics_rows(std::ostream& out, const TrainConfig& cfg, double corruption_rate,
                        std::span<const HistoryRow> history) {
  for (const auto& row : history) {
    if (!row.metrics) continue;
    out << loss::to_string(cfg.kind) << ',' << fmt(corruption_rate) << ',' << row.epoch << ','
        << fmt(row.metrics->success_rate) << ',' << fmt(row.metrics->alignment_rate) << ',' << fmt(row.drift) << ','
        << fmt(row.loss) << ',' << cfg.seed << '\n';
  }
}

void write_sweep_header(std::ostream& out) {
  out << "cell,axis,value,loss_kind,corruption_rate,alpha,beta,gamma,success_rate,alignment_rate,drift_norm,"
         "loss_value,seed,status\n";
}

void write_sweep_row(std::ostream& out, const CellResult& cell) {
  const auto& s = cell.spec;
  out << s.id() << ',' << to_string(s.axis) << ',' << fmt(s.value) << ',' << loss::to_string(s.train.kind) << ','
      << fmt(s.corruption_rate) << ',' << fmt(s.train.loss.alpha) << ',' << fmt(s.train.loss.beta) << ','
      << fmt(s.train.loss.gamma) << ',';
  if (cell.ok()) {
    out << fmt(cell.metrics.success_rate) << ',' << fmt(cell.metrics.alignment_rate) << ',' << fmt(cell.drift) << ','
        << fmt(cell.final_loss) << ',' << s.train.seed << ",ok\n";
  } else {
    std::string msg = cell.error;
    for (char& c : msg) {
      if (c == ',' || c == '\n' || c == '"') c = ' ';
    }
    out << ",,,," << s.train.seed << ",error: " << msg << '\n';
  }
}

}  // namespace rodif::train
