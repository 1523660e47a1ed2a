#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "rodif/diffusion_chain.hpp"
#include "rodif/preference_data.hpp"
#include "rodif/tensor_nn.hpp"

namespace rodif::loss {

using diffusion::DenoiseChain;
using diffusion::NoiseSchedule;
using prefs::ObservedPair;
using prefs::TrajectoryStore;

struct LossConfig {
  /// KL coefficient multiplying the log-likelihood ratio.
  double beta = 0.1;
  /// Temperature of every sigmoid.
  double alpha = 1.0;
  /// Assumed upper bound on the corrupted fraction.
  double gamma = 0.0;
  /// Scale on the vote threshold.
  double nu = 1.0;

  void validate() const;
};

enum class LossKind { RoDiF, DpDpo };
std::string to_string(LossKind kind);
LossKind loss_kind_from_string(const std::string& s);

/// sigmoid(x / temperature) and its logarithm, stable for large |x|.
double sigmoid(double x, double temperature = 1.0);
double log_sigmoid(double x, double temperature = 1.0);

/// log p_theta(chain) - log p_ref(chain), both over k = 2..K.
double chain_log_ratio(const nn::Mlp& net, const nn::Mlp& ref, const DenoiseChain& chain,
                       const NoiseSchedule& schedule);

/// beta * (log-ratio of the preferred chain - log-ratio of the rejected chain).
double delta_q(const nn::Mlp& net, const nn::Mlp& ref, const DenoiseChain& preferred, const DenoiseChain& rejected,
               const NoiseSchedule& schedule, double beta);
/// Tape form; the tape's target plays theta.
nn::Var delta_q(nn::Tape& tape, const nn::Mlp& ref, const DenoiseChain& preferred, const DenoiseChain& rejected,
                const NoiseSchedule& schedule, double beta);

struct ChainComparison {
  const DenoiseChain* preferred = nullptr;
  const DenoiseChain* rejected = nullptr;
};

/// -sum_i log sigmoid_alpha(delta_q_i) over single-control comparisons.
double dpo_percontrol_loss(const nn::Mlp& net, const nn::Mlp& ref, std::span<const ChainComparison> items,
                           const NoiseSchedule& schedule, const LossConfig& cfg);
nn::Var dpo_percontrol_loss(nn::Tape& tape, const nn::Mlp& ref, std::span<const ChainComparison> items,
                            const NoiseSchedule& schedule, const LossConfig& cfg);

/// Steps compared for a pair: the shorter of the two lengths.
std::size_t comparison_steps(const prefs::Trajectory& a, const prefs::Trajectory& b);
std::size_t total_comparisons(std::span<const ObservedPair> pairs, const TrajectoryStore& store);

/// Trajectory-level DPO: step t of the preferred trajectory against step t of
/// the rejected one, summed over t and over pairs.
double dpdpo_loss(const nn::Mlp& net, const nn::Mlp& ref, std::span<const ObservedPair> pairs,
                  const TrajectoryStore& store, const NoiseSchedule& schedule, const LossConfig& cfg);
nn::Var dpdpo_loss(nn::Tape& tape, const nn::Mlp& ref, std::span<const ObservedPair> pairs,
                   const TrajectoryStore& store, const NoiseSchedule& schedule, const LossConfig& cfg);

/// sigmoid_alpha(delta_q) for every pair and compared step, pair-major.
struct VoteBatch {
  std::vector<double> votes;
  std::vector<std::size_t> pair_index;
  std::vector<std::size_t> step_index;

  std::size_t size() const { return votes.size(); }
  double sum() const;
};

VoteBatch soft_votes(const nn::Mlp& net, const nn::Mlp& ref, std::span<const ObservedPair> pairs,
                     const TrajectoryStore& store, const NoiseSchedule& schedule, const LossConfig& cfg);
std::vector<nn::Var> soft_votes(nn::Tape& tape, const nn::Mlp& ref, std::span<const ObservedPair> pairs,
                                const TrajectoryStore& store, const NoiseSchedule& schedule, const LossConfig& cfg);

/// -log sigmoid_alpha(sum(votes) - nu (1 - gamma) batch_total).
double rodif_loss(std::span<const double> votes, const LossConfig& cfg, std::size_t batch_total);
nn::Var rodif_loss(nn::Tape& tape, std::span<const nn::Var> votes, const LossConfig& cfg, std::size_t batch_total);
/// d rodif_loss / d vote; identical for every vote.
double rodif_vote_derivative(std::span<const double> votes, const LossConfig& cfg, std::size_t batch_total);

/// floor((1 - gamma) n), guarded against rounding just below an integer.
std::size_t robust_threshold(std::size_t n, double gamma);
/// Heaviside(satisfied - floor((1 - gamma) n) + 1/2).
int hard_objective(std::size_t satisfied, std::size_t n, double gamma);

/// Batched loss and gradient for fine-tuning. Reference log-probabilities of
/// every stored chain are computed once; each call evaluates every needed
/// (trajectory, step) chain once regardless of how many pairs share it, and
/// reduces gradients in a fixed order so results do not depend on threads.
class PreferenceObjective {
 public:
  PreferenceObjective(const nn::Mlp& ref, const TrajectoryStore& store, const NoiseSchedule& schedule, LossKind kind,
                      const LossConfig& cfg);

  struct Evaluation {
    double loss = 0.0;
    std::size_t comparisons = 0;
    double vote_sum = 0.0;
  };

  /// Loss over `batch`; adds its gradient into `grad` unless empty.
  Evaluation evaluate(const nn::Mlp& net, std::span<const ObservedPair> batch, std::span<double> grad) const;

  LossKind kind() const { return kind_; }
  const LossConfig& config() const { return cfg_; }

 private:
  const TrajectoryStore* store_;
  NoiseSchedule schedule_;
  LossKind kind_;
  LossConfig cfg_;
  std::vector<std::vector<double>> ref_log_prob_;
};

}  // namespace rodif::loss
