#include "rodif/losses.hpp"

#include <algorithm>
#include <cmath>

#include "rodif/errors.hpp"
#include "rodif/parallel.hpp"

namespace rodif::loss {

void LossConfig::validate() const {
  if (!(beta > 0.0)) throw ConfigError("loss: beta must be positive");
  if (!(alpha > 0.0)) throw ConfigError("loss: alpha must be positive");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("loss: gamma must lie in [0, 1]");
  if (!(nu > 0.0)) throw ConfigError("loss: nu must be positive");
}

std::string to_string(LossKind kind) { return kind == LossKind::RoDiF ? "rodif" : "dpdpo"; }

LossKind loss_kind_from_string(const std::string& s) {
  if (s == "rodif") return LossKind::RoDiF;
  if (s == "dpdpo") return LossKind::DpDpo;
  throw ConfigError("unknown loss kind '" + s + "' (expected rodif or dpdpo)");
}

namespace {

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

const DenoiseChain& step_chain(const TrajectoryStore& store, std::size_t id, std::size_t t) {
  return store.at(id).steps[t].chain;
}

}  // namespace

double sigmoid(double x, double temperature) {
  const double z = x / temperature;
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double log_sigmoid(double x, double temperature) { return -softplus(-x / temperature); }

double chain_log_ratio(const nn::Mlp& net, const nn::Mlp& ref, const DenoiseChain& chain,
                       const NoiseSchedule& schedule) {
  return diffusion::chain_log_prob(net, chain, schedule) - diffusion::chain_log_prob(ref, chain, schedule);
}

double delta_q(const nn::Mlp& net, const nn::Mlp& ref, const DenoiseChain& preferred, const DenoiseChain& rejected,
               const NoiseSchedule& schedule, double beta) {
  const double dq =
      beta * (chain_log_ratio(net, ref, preferred, schedule) - chain_log_ratio(net, ref, rejected, schedule));
  if (!std::isfinite(dq)) throw NumericalError("delta_q", "non-finite log-likelihood ratio");
  return dq;
}

nn::Var delta_q(nn::Tape& tape, const nn::Mlp& ref, const DenoiseChain& preferred, const DenoiseChain& rejected,
                const NoiseSchedule& schedule, double beta) {
  nn::Var lp_w = diffusion::chain_log_prob(tape, preferred, schedule);
  nn::Var lp_l = diffusion::chain_log_prob(tape, rejected, schedule);
  const double ref_gap =
      diffusion::chain_log_prob(ref, preferred, schedule) - diffusion::chain_log_prob(ref, rejected, schedule);
  return tape.scale(tape.add_scalar(tape.sub(lp_w, lp_l), -ref_gap), beta);
}

double dpo_percontrol_loss(const nn::Mlp& net, const nn::Mlp& ref, std::span<const ChainComparison> items,
                           const NoiseSchedule& schedule, const LossConfig& cfg) {
  cfg.validate();
  if (items.empty()) throw ContractError("dpo_percontrol_loss: no comparisons");
  double total = 0.0;
  for (const auto& c : items) {
    total -= log_sigmoid(delta_q(net, ref, *c.preferred, *c.rejected, schedule, cfg.beta), cfg.alpha);
  }
  return total;
}

nn::Var dpo_percontrol_loss(nn::Tape& tape, const nn::Mlp& ref, std::span<const ChainComparison> items,
                            const NoiseSchedule& schedule, const LossConfig& cfg) {
  cfg.validate();
  if (items.empty()) throw ContractError("dpo_percontrol_loss: no comparisons");
  std::vector<nn::Var> terms;
  for (const auto& c : items) {
    terms.push_back(tape.log_sigmoid(delta_q(tape, ref, *c.preferred, *c.rejected, schedule, cfg.beta), cfg.alpha));
  }
  return tape.scale(tape.sum(terms), -1.0);
}

std::size_t comparison_steps(const prefs::Trajectory& a, const prefs::Trajectory& b) {
  return std::min(a.size(), b.size());
}

std::size_t total_comparisons(std::span<const ObservedPair> pairs, const TrajectoryStore& store) {
  std::size_t n = 0;
  for (const auto& p : pairs) n += comparison_steps(store.at(p.preferred_id), store.at(p.rejected_id));
  return n;
}

double dpdpo_loss(const nn::Mlp& net, const nn::Mlp& ref, std::span<const ObservedPair> pairs,
                  const TrajectoryStore& store, const NoiseSchedule& schedule, const LossConfig& cfg) {
  cfg.validate();
  double total = 0.0;
  for (const auto& p : pairs) {
    const std::size_t steps = comparison_steps(store.at(p.preferred_id), store.at(p.rejected_id));
    for (std::size_t t = 0; t < steps; ++t) {
      const double dq = delta_q(net, ref, step_chain(store, p.preferred_id, t), step_chain(store, p.rejected_id, t),
                                schedule, cfg.beta);
      total -= log_sigmoid(dq, cfg.alpha);
    }
  }
  return total;
}

nn::Var dpdpo_loss(nn::Tape& tape, const nn::Mlp& ref, std::span<const ObservedPair> pairs,
                   const TrajectoryStore& store, const NoiseSchedule& schedule, const LossConfig& cfg) {
  cfg.validate();
  std::vector<nn::Var> terms;
  for (const auto& p : pairs) {
    const std::size_t steps = comparison_steps(store.at(p.preferred_id), store.at(p.rejected_id));
    for (std::size_t t = 0; t < steps; ++t) {
      nn::Var dq = delta_q(tape, ref, step_chain(store, p.preferred_id, t), step_chain(store, p.rejected_id, t),
                           schedule, cfg.beta);
      terms.push_back(tape.log_sigmoid(dq, cfg.alpha));
    }
  }
  if (terms.empty()) return tape.constant(0.0);
  return tape.scale(tape.sum(terms), -1.0);
}

double VoteBatch::sum() const {
  double s = 0.0;
  for (double v : votes) s += v;
  return s;
}

VoteBatch soft_votes(const nn::Mlp& net, const nn::Mlp& ref, std::span<const ObservedPair> pairs,
                     const TrajectoryStore& store, const NoiseSchedule& schedule, const LossConfig& cfg) {
  cfg.validate();
  VoteBatch out;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    const std::size_t steps = comparison_steps(store.at(p.preferred_id), store.at(p.rejected_id));
    for (std::size_t t = 0; t < steps; ++t) {
      const double dq = delta_q(net, ref, step_chain(store, p.preferred_id, t), step_chain(store, p.rejected_id, t),
                                schedule, cfg.beta);
      out.votes.push_back(sigmoid(dq, cfg.alpha));
      out.pair_index.push_back(i);
      out.step_index.push_back(t);
    }
  }
  return out;
}

std::vector<nn::Var> soft_votes(nn::Tape& tape, const nn::Mlp& ref, std::span<const ObservedPair> pairs,
                                const TrajectoryStore& store, const NoiseSchedule& schedule, const LossConfig& cfg) {
  cfg.validate();
  std::vector<nn::Var> out;
  for (const auto& p : pairs) {
    const std::size_t steps = comparison_steps(store.at(p.preferred_id), store.at(p.rejected_id));
    for (std::size_t t = 0; t < steps; ++t) {
      nn::Var dq = delta_q(tape, ref, step_chain(store, p.preferred_id, t), step_chain(store, p.rejected_id, t),
                           schedule, cfg.beta);
      out.push_back(tape.sigmoid(dq, cfg.alpha));
    }
  }
  return out;
}

namespace {

double rodif_argument(double vote_sum, const LossConfig& cfg, std::size_t batch_total) {
  return vote_sum - cfg.nu * (1.0 - cfg.gamma) * static_cast<double>(batch_total);
}

}  // namespace

double rodif_loss(std::span<const double> votes, const LossConfig& cfg, std::size_t batch_total) {
  cfg.validate();
  double s = 0.0;
  for (double v : votes) s += v;
  return -log_sigmoid(rodif_argument(s, cfg, batch_total), cfg.alpha);
}

nn::Var rodif_loss(nn::Tape& tape, std::span<const nn::Var> votes, const LossConfig& cfg, std::size_t batch_total) {
  cfg.validate();
  nn::Var s = votes.empty() ? tape.constant(0.0) : tape.sum(votes);
  nn::Var arg = tape.add_scalar(s, -cfg.nu * (1.0 - cfg.gamma) * static_cast<double>(batch_total));
  return tape.scale(tape.log_sigmoid(arg, cfg.alpha), -1.0);
}

double rodif_vote_derivative(std::span<const double> votes, const LossConfig& cfg, std::size_t batch_total) {
  cfg.validate();
  double s = 0.0;
  for (double v : votes) s += v;
  return -sigmoid(-rodif_argument(s, cfg, batch_total), cfg.alpha) / cfg.alpha;
}

std::size_t robust_threshold(std::size_t n, double gamma) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in [0, 1]");
  // (1 - gamma) n can land a few ulps under an integer, e.g. gamma = 0.7, n = 10.
  return static_cast<std::size_t>(std::floor((1.0 - gamma) * static_cast<double>(n) + 1e-9));
}

int hard_objective(std::size_t satisfied, std::size_t n, double gamma) {
  if (satisfied > n) throw ContractError("hard_objective: more satisfied cuts than cuts");
  const double arg = static_cast<double>(satisfied) - static_cast<double>(robust_threshold(n, gamma)) + 0.5;
  return arg >= 0.0 ? 1 : 0;
}

PreferenceObjective::PreferenceObjective(const nn::Mlp& ref, const TrajectoryStore& store,
                                         const NoiseSchedule& schedule, LossKind kind, const LossConfig& cfg)
    : store_(&store), schedule_(schedule), kind_(kind), cfg_(cfg) {
  cfg_.validate();
  ref_log_prob_.resize(store.size());
  parallel_for(store.size(), [&](std::size_t id) {
    const auto& traj = store.trajectories[id];
    auto& row = ref_log_prob_[id];
    row.resize(traj.size());
    for (std::size_t t = 0; t < traj.size(); ++t) {
      row[t] = diffusion::chain_log_prob(ref, traj.steps[t].chain, schedule_, 0.0, {});
    }
  });
}

PreferenceObjective::Evaluation PreferenceObjective::evaluate(const nn::Mlp& net, std::span<const ObservedPair> batch,
                                                              std::span<double> grad) const {
  if (!grad.empty() && grad.size() != net.param_count()) throw ConfigError("gradient buffer size mismatch");
  const TrajectoryStore& store = *store_;

  // Distinct (trajectory, step) chains in order of first use.
  struct Item {
    std::size_t id;
    std::size_t t;
  };
  std::vector<Item> items;
  std::vector<std::vector<std::size_t>> slot(store.size());
  constexpr std::size_t kUnset = static_cast<std::size_t>(-1);
  struct Comparison {
    std::size_t preferred;
    std::size_t rejected;
  };
  std::vector<Comparison> comps;
  auto item_of = [&](std::size_t id, std::size_t t) {
    auto& s = slot[id];
    if (s.empty()) s.assign(store.at(id).size(), kUnset);
    if (s[t] == kUnset) {
      s[t] = items.size();
      items.push_back({id, t});
    }
    return s[t];
  };
  for (const auto& p : batch) {
    const std::size_t steps = comparison_steps(store.at(p.preferred_id), store.at(p.rejected_id));
    for (std::size_t t = 0; t < steps; ++t) comps.push_back({item_of(p.preferred_id, t), item_of(p.rejected_id, t)});
  }

  std::vector<double> ratio(items.size());
  parallel_for(items.size(), [&](std::size_t i) {
    const auto& it = items[i];
    ratio[i] = diffusion::chain_log_prob(net, store.trajectories[it.id].steps[it.t].chain, schedule_, 0.0, {}) -
               ref_log_prob_[it.id][it.t];
  });

  Evaluation ev;
  ev.comparisons = comps.size();
  std::vector<double> adjoint(items.size(), 0.0);
  const double a = cfg_.alpha;
  if (kind_ == LossKind::DpDpo) {
    for (const auto& c : comps) {
      const double x = cfg_.beta * (ratio[c.preferred] - ratio[c.rejected]);
      ev.loss -= log_sigmoid(x, a);
      ev.vote_sum += sigmoid(x, a);
      const double dx = -sigmoid(-x, a) / a;
      adjoint[c.preferred] += cfg_.beta * dx;
      adjoint[c.rejected] -= cfg_.beta * dx;
    }
  } else {
    std::vector<double> x(comps.size());
    for (std::size_t j = 0; j < comps.size(); ++j) {
      x[j] = cfg_.beta * (ratio[comps[j].preferred] - ratio[comps[j].rejected]);
      ev.vote_sum += sigmoid(x[j], a);
    }
    const double arg = rodif_argument(ev.vote_sum, cfg_, comps.size());
    ev.loss = -log_sigmoid(arg, a);
    const double d_vote = -sigmoid(-arg, a) / a;
    for (std::size_t j = 0; j < comps.size(); ++j) {
      const double dx = d_vote * sigmoid(x[j], a) * sigmoid(-x[j], a) / a;
      adjoint[comps[j].preferred] += cfg_.beta * dx;
      adjoint[comps[j].rejected] -= cfg_.beta * dx;
    }
  }
  if (!std::isfinite(ev.loss)) throw NumericalError("preference_objective", "loss is " + std::to_string(ev.loss));
  if (grad.empty()) return ev;

  // Per-item gradients in blocks, each block summed into grad in item order.
  constexpr std::size_t kBlock = 64;
  const std::size_t p = net.param_count();
  std::vector<double> buffers(std::min(kBlock, items.size()) * p);
  for (std::size_t lo = 0; lo < items.size(); lo += kBlock) {
    const std::size_t hi = std::min(items.size(), lo + kBlock);
    std::fill(buffers.begin(), buffers.end(), 0.0);
    parallel_for(hi - lo, [&](std::size_t j) {
      const auto& it = items[lo + j];
      if (adjoint[lo + j] == 0.0) return;
      diffusion::chain_log_prob(net, store.trajectories[it.id].steps[it.t].chain, schedule_, adjoint[lo + j],
                                std::span<double>(buffers.data() + j * p, p));
    });
    for (std::size_t j = 0; j < hi - lo; ++j) {
      const double* b = buffers.data() + j * p;
      for (std::size_t k = 0; k < p; ++k) grad[k] += b[k];
    }
  }
  return ev;
}

}  // namespace rodif::loss
