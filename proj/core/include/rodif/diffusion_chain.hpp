#pragma once

#include <span>
#include <vector>

#include "rodif/rng.hpp"
#include "rodif/tensor_nn.hpp"

namespace rodif::diffusion {

using nn::Vec;

/// Linear-beta DDPM ladder for steps k = 1..K. Accessors take the step index
/// k directly; alpha_bar(0) == 1 by convention.
class NoiseSchedule {
 public:
  NoiseSchedule() = default;

  int steps() const { return static_cast<int>(beta_.size()) - 1; }
  double beta(int k) const { return beta_.at(k); }
  double alpha(int k) const { return 1.0 - beta_.at(k); }
  double alpha_bar(int k) const { return alpha_bar_.at(k); }
  /// Posterior variance beta_k (1 - alpha_bar_{k-1}) / (1 - alpha_bar_k); zero at k = 1.
  double posterior_variance(int k) const { return variance_.at(k); }

  friend NoiseSchedule make_schedule(int steps, double beta_start, double beta_end);

 private:
  Vec beta_;
  Vec alpha_bar_;
  Vec variance_;
};

NoiseSchedule make_schedule(int steps, double beta_start, double beta_end);

struct NoisedAction {
  Vec noisy;
  Vec noise;
};

/// Samples q(a^k | a^0): sqrt(abar_k) a0 + sqrt(1 - abar_k) eps.
NoisedAction forward_noise(std::span<const double> a0, int k, const NoiseSchedule& schedule, Rng& rng);
/// Same, with the noise supplied by the caller.
Vec forward_noise(std::span<const double> a0, std::span<const double> noise, int k, const NoiseSchedule& schedule);

/// Noise-predictor input layout: [a^k, k/K, s].
Vec predictor_input(std::span<const double> a_k, int k, int steps, std::span<const double> condition);

/// Denoising mean mu_k = (a^k - beta_k / sqrt(1 - abar_k) * eps_theta) / sqrt(alpha_k).
Vec denoise_mean(const nn::Mlp& net, std::span<const double> a_k, int k, std::span<const double> condition,
                 const NoiseSchedule& schedule);

/// Draws a^{k-1} ~ N(mu_k, sigma_k^2 I). The final step k = 1 returns the mean.
Vec reverse_step(const nn::Mlp& net, std::span<const double> a_k, int k, std::span<const double> condition,
                 const NoiseSchedule& schedule, Rng& rng);

/// log N(x; mean, variance I).
double gaussian_log_density(std::span<const double> x, std::span<const double> mean, double variance);

/// log p_theta(a^{k-1} | a^k, s). Undefined (ContractError) where sigma_k^2 = 0, i.e. k = 1.
double step_log_density(const nn::Mlp& net, std::span<const double> a_prev, std::span<const double> a_k, int k,
                        std::span<const double> condition, const NoiseSchedule& schedule);

/// Differentiable version evaluated with the tape's target network.
nn::Var step_log_density(nn::Tape& tape, std::span<const double> a_prev, std::span<const double> a_k, int k,
                         std::span<const double> condition, const NoiseSchedule& schedule);

/// Recorded denoising chain a^K, ..., a^0 for one control, with its conditioning.
struct DenoiseChain {
  std::vector<Vec> states;  // states[j] = a^{K-j}
  Vec condition;
  /// Sum of step log-densities for k = 2..K accumulated while sampling.
  double log_prob = 0.0;

  int steps() const { return static_cast<int>(states.size()) - 1; }
  const Vec& at(int k) const { return states.at(states.size() - 1 - static_cast<std::size_t>(k)); }
  const Vec& action() const { return states.back(); }

  friend bool operator==(const DenoiseChain&, const DenoiseChain&) = default;
};

/// a^K ~ N(0, I), then K reverse steps, every state recorded.
DenoiseChain sample_chain(const nn::Mlp& net, std::span<const double> condition, const NoiseSchedule& schedule,
                          Rng& rng);

/// Sum over k = 2..K of log p(a^{k-1} | a^k, s) for a recorded chain.
double chain_log_prob(const nn::Mlp& net, const DenoiseChain& chain, const NoiseSchedule& schedule);
nn::Var chain_log_prob(nn::Tape& tape, const DenoiseChain& chain, const NoiseSchedule& schedule);
/// Same sum, also accumulating seed * d/d(params) into grad (skipped if grad is
/// empty). Hand-written backward pass; agrees with the tape to rounding.
double chain_log_prob(const nn::Mlp& net, const DenoiseChain& chain, const NoiseSchedule& schedule, double seed,
                      std::span<double> grad);

}  // namespace rodif::diffusion
