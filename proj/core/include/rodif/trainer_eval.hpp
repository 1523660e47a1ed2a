#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rodif/losses.hpp"
#include "rodif/preference_data.hpp"
#include "rodif/unified_mdp.hpp"

namespace rodif::train {

using loss::LossConfig;
using loss::LossKind;
using mdp::Mode;

struct TrainConfig {
  LossKind kind = LossKind::RoDiF;
  LossConfig loss;
  int epochs = 50;
  /// Pairs per batch.
  int batch_size = 64;
  double learning_rate = 3e-5;
  std::uint64_t seed = 0;
  /// Evaluate every this many epochs (0: only after the last epoch).
  int eval_every = 0;
  int eval_episodes = 100;
  Mode preferred = Mode::Left;

  void validate() const;
};

struct Metrics {
  double success_rate = 0.0;
  /// Share of episodes in the preferred mode; Undefined counts as misaligned.
  double alignment_rate = 0.0;
  int successes = 0;
  int left = 0;
  int right = 0;
  int undefined = 0;
  int episodes = 0;

  friend bool operator==(const Metrics&, const Metrics&) = default;
};

Metrics summarize(std::span<const mdp::Trajectory> trajs, Mode preferred);

/// n rollouts drawn from Rng(seed); identical seeds give identical metrics.
Metrics evaluate(const nn::Mlp& net, const mdp::EnvConfig& env, const diffusion::NoiseSchedule& schedule, int n,
                 std::uint64_t seed, Mode preferred, std::vector<mdp::Trajectory>* rollouts_out = nullptr);

struct HistoryRow {
  int epoch = 0;
  /// Loss over all pairs at the end of the epoch (epoch 0: at the reference).
  double loss = 0.0;
  double drift = 0.0;
  std::optional<Metrics> metrics;
};

struct FinetuneResult {
  nn::Mlp net;
  std::vector<HistoryRow> history;
  Metrics final_metrics;
  std::vector<mdp::Trajectory> final_rollouts;
};

/// Raised when a batch loss is not finite. Carries the last finite parameters.
class TrainingAborted : public std::runtime_error {
 public:
  TrainingAborted(const std::string& what, nn::Mlp last_good, int epoch, int batch)
      : std::runtime_error(what), last_good_(std::move(last_good)), epoch_(epoch), batch_(batch) {}
  const nn::Mlp& last_good() const { return last_good_; }
  int epoch() const { return epoch_; }
  int batch() const { return batch_; }

 private:
  nn::Mlp last_good_;
  int epoch_;
  int batch_;
};

/// Fine-tunes a copy of `ref` on observed preferences; `ref` itself stays frozen
/// as the reference policy. Batches are reshuffled every epoch.
FinetuneResult finetune(const nn::Mlp& ref, const prefs::TrajectoryStore& store,
                        std::span<const prefs::ObservedPair> pairs, const mdp::EnvConfig& env,
                        const diffusion::NoiseSchedule& schedule, const TrainConfig& cfg);

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

enum class SweepAxis { Corruption, Alpha, Beta, Gamma };
std::string to_string(SweepAxis axis);
SweepAxis sweep_axis_from_string(const std::string& s);

struct CellSpec {
  SweepAxis axis = SweepAxis::Corruption;
  double value = 0.0;
  double corruption_rate = 0.0;
  TrainConfig train;

  /// Stable identifier, usable as a file name.
  std::string id() const;
};

struct CellResult {
  CellSpec spec;
  std::vector<HistoryRow> history;
  Metrics metrics;
  double drift = 0.0;
  double final_loss = 0.0;
  std::size_t flipped = 0;
  /// Empty on success, otherwise the error message.
  std::string error;
  nn::Mlp net;
  std::vector<mdp::Trajectory> rollouts;

  bool ok() const { return error.empty(); }
};

/// For each rate: a RoDiF cell (gamma from `gammas`, same length as `rates`)
/// and a DP-DPO cell.
std::vector<CellSpec> corruption_cells(std::span<const double> rates, std::span<const double> gammas,
                                       const TrainConfig& base);
/// One RoDiF cell per value, `axis` overriding the matching loss parameter.
std::vector<CellSpec> ablation_cells(SweepAxis axis, std::span<const double> values, double corruption_rate,
                                     const TrainConfig& base);

/// Corrupts a fresh copy of the constructed pairs (seeded from the cell's train
/// seed), fine-tunes and evaluates. Errors are captured in the result.
CellResult run_cell(const CellSpec& spec, const nn::Mlp& ref, const prefs::TrajectoryStore& store,
                    std::span<const prefs::PreferencePair> pairs, const mdp::EnvConfig& env,
                    const diffusion::NoiseSchedule& schedule);

using CellCallback = std::function<void(const CellResult&)>;

std::vector<CellResult> corruption_sweep(const nn::Mlp& ref, const prefs::TrajectoryStore& store,
                                         std::span<const prefs::PreferencePair> pairs, const mdp::EnvConfig& env,
                                         const diffusion::NoiseSchedule& schedule, std::span<const double> rates,
                                         std::span<const double> gammas, const TrainConfig& base,
                                         const CellCallback& on_cell = {});
std::vector<CellResult> ablation_sweep(SweepAxis axis, std::span<const double> values, double corruption_rate,
                                       const nn::Mlp& ref, const prefs::TrajectoryStore& store,
                                       std::span<const prefs::PreferencePair> pairs, const mdp::EnvConfig& env,
                                       const diffusion::NoiseSchedule& schedule, const TrainConfig& base,
                                       const CellCallback& on_cell = {});

// Metrics CSV: loss_kind,corruption_rate,epoch,success_rate,alignment_rate,drift_norm,loss_value,seed
// One row per history entry that carries metrics.
void write_metrics_header(std::ostream& out);
void write_metrics_rows(std::ostream& out, const TrainConfig& cfg, double corruption_rate,
                        std::span<const HistoryRow> history);

// Sweep CSV: cell,axis,value,loss_kind,corruption_rate,alpha,beta,gamma,success_rate,alignment_rate,drift_norm,
// loss_value,seed,status
void write_sweep_header(std::ostream& out);
void write_sweep_row(std::ostream& out, const CellResult& cell);

}  // namespace rodif::train
