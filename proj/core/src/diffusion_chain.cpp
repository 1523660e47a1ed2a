#include "rodif/diffusion_chain.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "rodif/errors.hpp"

namespace rodif::diffusion {

NoiseSchedule make_schedule(int steps, double beta_start, double beta_end) {
  if (steps < 1) throw ConfigError("noise schedule needs K >= 1");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw ConfigError("noise schedule needs 0 < beta_start <= beta_end < 1");
  }
  NoiseSchedule s;
  s.beta_.assign(static_cast<std::size_t>(steps) + 1, 0.0);
  s.alpha_bar_.assign(static_cast<std::size_t>(steps) + 1, 1.0);
  s.variance_.assign(static_cast<std::size_t>(steps) + 1, 0.0);
  for (int k = 1; k <= steps; ++k) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(k - 1) / (steps - 1);
    s.beta_[k] = beta_start + frac * (beta_end - beta_start);
    s.alpha_bar_[k] = s.alpha_bar_[k - 1] * (1.0 - s.beta_[k]);
    s.variance_[k] = s.beta_[k] * (1.0 - s.alpha_bar_[k - 1]) / (1.0 - s.alpha_bar_[k]);
  }
  return s;
}

Vec forward_noise(std::span<const double> a0, std::span<const double> noise, int k, const NoiseSchedule& schedule) {
  if (k < 1 || k > schedule.steps()) throw ContractError("forward_noise: step out of range");
  const double signal = std::sqrt(schedule.alpha_bar(k));
  const double spread = std::sqrt(1.0 - schedule.alpha_bar(k));
  Vec out(a0.size());
  for (std::size_t i = 0; i < a0.size(); ++i) out[i] = signal * a0[i] + spread * noise[i];
  return out;
}

NoisedAction forward_noise(std::span<const double> a0, int k, const NoiseSchedule& schedule, Rng& rng) {
  NoisedAction out;
  out.noise.resize(a0.size());
  for (double& e : out.noise) e = rng.normal();
  out.noisy = forward_noise(a0, out.noise, k, schedule);
  return out;
}

Vec predictor_input(std::span<const double> a_k, int k, int steps, std::span<const double> condition) {
  Vec in;
  in.reserve(a_k.size() + 1 + condition.size());
  in.insert(in.end(), a_k.begin(), a_k.end());
  in.push_back(static_cast<double>(k) / steps);
  in.insert(in.end(), condition.begin(), condition.end());
  return in;
}

namespace {

void check_step(int k, const NoiseSchedule& schedule, const char* who) {
  if (k < 1 || k > schedule.steps()) {
    throw ContractError(std::string(who) + ": step " + std::to_string(k) + " outside 1.." +
                        std::to_string(schedule.steps()));
  }
}

}  // namespace

Vec denoise_mean(const nn::Mlp& net, std::span<const double> a_k, int k, std::span<const double> condition,
                 const NoiseSchedule& schedule) {
  check_step(k, schedule, "denoise_mean");
  const Vec eps = net.forward(predictor_input(a_k, k, schedule.steps(), condition));
  if (eps.size() != a_k.size()) throw ConfigError("noise predictor output size differs from action size");
  const double coef = schedule.beta(k) / std::sqrt(1.0 - schedule.alpha_bar(k));
  const double inv_sqrt_alpha = 1.0 / std::sqrt(schedule.alpha(k));
  Vec mean(a_k.size());
  for (std::size_t i = 0; i < a_k.size(); ++i) mean[i] = inv_sqrt_alpha * (a_k[i] - coef * eps[i]);
  return mean;
}

Vec reverse_step(const nn::Mlp& net, std::span<const double> a_k, int k, std::span<const double> condition,
                 const NoiseSchedule& schedule, Rng& rng) {
  Vec mean = denoise_mean(net, a_k, k, condition, schedule);
  if (k == 1) return mean;
  const double sigma = std::sqrt(schedule.posterior_variance(k));
  for (double& m : mean) m += sigma * rng.normal();
  return mean;
}

double gaussian_log_density(std::span<const double> x, std::span<const double> mean, double variance) {
  if (!(variance > 0.0)) throw ContractError("gaussian_log_density: variance must be positive");
  double sq = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = x[i] - mean[i];
    sq += r * r;
  }
  const double d = static_cast<double>(x.size());
  return -0.5 * d * std::log(2.0 * std::numbers::pi * variance) - sq / (2.0 * variance);
}

double step_log_density(const nn::Mlp& net, std::span<const double> a_prev, std::span<const double> a_k, int k,
                        std::span<const double> condition, const NoiseSchedule& schedule) {
  check_step(k, schedule, "step_log_density");
  const double variance = schedule.posterior_variance(k);
  if (!(variance > 0.0)) throw ContractError("step_log_density: zero-variance step k = " + std::to_string(k));
  const Vec mean = denoise_mean(net, a_k, k, condition, schedule);
  const double lp = gaussian_log_density(a_prev, mean, variance);
  if (!std::isfinite(lp)) throw NumericalError("step_log_density", "step k = " + std::to_string(k));
  return lp;
}

nn::Var step_log_density(nn::Tape& tape, std::span<const double> a_prev, std::span<const double> a_k, int k,
                         std::span<const double> condition, const NoiseSchedule& schedule) {
  check_step(k, schedule, "step_log_density");
  const double variance = schedule.posterior_variance(k);
  if (!(variance > 0.0)) throw ContractError("step_log_density: zero-variance step k = " + std::to_string(k));
  const double coef = schedule.beta(k) / std::sqrt(1.0 - schedule.alpha_bar(k));
  const double inv_sqrt_alpha = 1.0 / std::sqrt(schedule.alpha(k));

  // residual = a_prev - mu = (a_prev - a_k / sqrt(alpha)) + (coef / sqrt(alpha)) eps
  Vec offset(a_prev.size());
  for (std::size_t i = 0; i < a_prev.size(); ++i) offset[i] = a_prev[i] - inv_sqrt_alpha * a_k[i];
  nn::Var eps = tape.mlp(tape.constant(predictor_input(a_k, k, schedule.steps(), condition)));
  nn::Var residual = tape.axpby(1.0, tape.constant(std::move(offset)), coef * inv_sqrt_alpha, eps);
  const double d = static_cast<double>(a_prev.size());
  nn::Var quad = tape.scale(tape.sum_squares(residual), -1.0 / (2.0 * variance));
  return tape.add_scalar(quad, -0.5 * d * std::log(2.0 * std::numbers::pi * variance));
}

DenoiseChain sample_chain(const nn::Mlp& net, std::span<const double> condition, const NoiseSchedule& schedule,
                          Rng& rng) {
  const int steps = schedule.steps();
  const std::size_t dim = net.output_size();
  DenoiseChain chain;
  chain.condition.assign(condition.begin(), condition.end());
  chain.states.reserve(static_cast<std::size_t>(steps) + 1);
  Vec a(dim);
  for (double& x : a) x = rng.normal();
  chain.states.push_back(a);
  for (int k = steps; k >= 1; --k) {
    Vec next = reverse_step(net, chain.states.back(), k, condition, schedule, rng);
    if (k >= 2) chain.log_prob += step_log_density(net, next, chain.states.back(), k, condition, schedule);
    chain.states.push_back(std::move(next));
  }
  return chain;
}

double chain_log_prob(const nn::Mlp& net, const DenoiseChain& chain, const NoiseSchedule& schedule) {
  if (chain.steps() != schedule.steps()) throw ConfigError("chain length does not match the schedule");
  double total = 0.0;
  for (int k = schedule.steps(); k >= 2; --k) {
    total += step_log_density(net, chain.at(k - 1), chain.at(k), k, chain.condition, schedule);
  }
  return total;
}

nn::Var chain_log_prob(nn::Tape& tape, const DenoiseChain& chain, const NoiseSchedule& schedule) {
  if (chain.steps() != schedule.steps()) throw ConfigError("chain length does not match the schedule");
  std::vector<nn::Var> terms;
  for (int k = schedule.steps(); k >= 2; --k) {
    terms.push_back(step_log_density(tape, chain.at(k - 1), chain.at(k), k, chain.condition, schedule));
  }
  if (terms.empty()) return tape.constant(0.0);
  return tape.sum(terms);
}

double chain_log_prob(const nn::Mlp& net, const DenoiseChain& chain, const NoiseSchedule& schedule, double seed,
                      std::span<double> grad) {
  if (chain.steps() != schedule.steps()) throw ConfigError("chain length does not match the schedule");
  if (!grad.empty() && grad.size() != net.param_count()) throw ConfigError("gradient buffer size mismatch");
  double total = 0.0;
  nn::Mlp::Trace trace;
  for (int k = schedule.steps(); k >= 2; --k) {
    const Vec& a_k = chain.at(k);
    const Vec& a_prev = chain.at(k - 1);
    const double variance = schedule.posterior_variance(k);
    const double inv_sqrt_alpha = 1.0 / std::sqrt(schedule.alpha(k));
    const double c = schedule.beta(k) / std::sqrt(1.0 - schedule.alpha_bar(k)) * inv_sqrt_alpha;
    const Vec eps = net.forward(predictor_input(a_k, k, schedule.steps(), chain.condition), trace);
    Vec residual(a_prev.size());
    double sq = 0.0;
    for (std::size_t i = 0; i < residual.size(); ++i) {
      residual[i] = (a_prev[i] - inv_sqrt_alpha * a_k[i]) + c * eps[i];
      sq += residual[i] * residual[i];
    }
    const double d = static_cast<double>(a_prev.size());
    const double lp = -sq / (2.0 * variance) - 0.5 * d * std::log(2.0 * std::numbers::pi * variance);
    if (!std::isfinite(lp)) throw NumericalError("chain_log_prob", "step k = " + std::to_string(k));
    total += lp;
    if (!grad.empty() && seed != 0.0) {
      for (double& r : residual) r *= -seed * c / variance;
      net.backward(trace, residual, grad);
    }
  }
  return total;
}

}  // namespace rodif::diffusion
