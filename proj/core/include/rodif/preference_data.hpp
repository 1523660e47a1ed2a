#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rodif/diffusion_chain.hpp"
#include "rodif/rng.hpp"
#include "rodif/unified_mdp.hpp"

namespace rodif::prefs {

using mdp::Mode;
using mdp::Trajectory;

/// Trajectories addressed by index; ids in preference pairs refer to positions here.
struct TrajectoryStore {
  std::vector<Trajectory> trajectories;

  std::size_t size() const { return trajectories.size(); }
  /// Throws DataError for an unknown id.
  const Trajectory& at(std::size_t id) const;
  std::size_t add(Trajectory traj);
};

/// A constructed comparison: winner_id is the ground-truth preferred trajectory.
/// `corrupted` is bookkeeping only; losses see pairs through `observed()`.
struct PreferencePair {
  std::size_t winner_id = 0;
  std::size_t loser_id = 0;
  bool observed_winner_is_first = true;
  bool corrupted = false;

  friend bool operator==(const PreferencePair&, const PreferencePair&) = default;
};

/// The label as an annotator reported it.
struct ObservedPair {
  std::size_t preferred_id = 0;
  std::size_t rejected_id = 0;

  friend bool operator==(const ObservedPair&, const ObservedPair&) = default;
};

ObservedPair observed(const PreferencePair& pair);
std::vector<ObservedPair> observed(std::span<const PreferencePair> pairs);

/// Every (winner, loser) combination, labels as constructed.
std::vector<PreferencePair> pair_cartesian(std::span<const std::size_t> winners, std::span<const std::size_t> losers);

struct CorruptionSpec {
  double rate = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// round(rate * n) distinct positions in [0, n), uniform without replacement.
std::vector<std::size_t> corruption_indices(std::size_t n, const CorruptionSpec& spec);

/// Inverts the observed label of the pairs selected by corruption_indices.
/// Applying the same spec twice restores the input.
std::vector<PreferencePair> corrupt(std::span<const PreferencePair> pairs, const CorruptionSpec& spec);

/// Bradley-Terry draw: true with probability sigmoid((u_w - u_l) / alpha).
bool bt_sample(double u_w, double u_l, double alpha, Rng& rng);
double bt_probability(double u_w, double u_l, double alpha);

struct HarvestConfig {
  int winners = 20;
  int losers = 20;
  Mode preferred = Mode::Left;
  /// Give up after this many times (winners + losers) episodes.
  int attempt_factor = 50;
};

struct Harvest {
  TrajectoryStore store;
  std::vector<std::size_t> winner_ids;
  std::vector<std::size_t> loser_ids;
  int attempts = 0;
};

class HarvestError : public std::runtime_error {
 public:
  HarvestError(const std::string& what, int attempts) : std::runtime_error(what), attempts_(attempts) {}
  int attempts() const { return attempts_; }

 private:
  int attempts_;
};

/// Rolls out `net` until `winners` successful preferred-mode and `losers`
/// successful opposite-mode trajectories exist. Episode i draws from rng.child(i).
Harvest harvest(const nn::Mlp& net, const mdp::EnvConfig& env, const diffusion::NoiseSchedule& schedule,
                const HarvestConfig& cfg, const Rng& rng);

// Preference file: "# rodif-preferences v1" then a CSV header and one row per pair.
void write_preferences(std::ostream& out, std::span<const PreferencePair> pairs);
std::vector<PreferencePair> read_preferences(std::istream& in);
void write_preferences(const std::string& path, std::span<const PreferencePair> pairs);
std::vector<PreferencePair> read_preferences(const std::string& path);

}  // namespace rodif::prefs
