#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "rodif/rng.hpp"
#include "rodif/tensor_nn.hpp"

namespace rodif::cuts {

using nn::Vec;

/// Regular grid over a box in 1 to 3 dimensions. Point indices run with
/// axis 0 fastest.
struct GridSpace {
  Vec lower;
  Vec upper;
  std::vector<std::size_t> resolution;

  static GridSpace square(std::size_t dim, double lo, double hi, std::size_t resolution);

  void validate() const;
  std::size_t dim() const { return resolution.size(); }
  std::size_t size() const;
  Vec point(std::size_t index) const;
  /// Index of the grid point nearest to p (clamped to the box).
  std::size_t nearest(std::span<const double> p) const;
};

/// Half-space c(theta) = w . theta + b >= 0, or its reverse when flipped.
/// Boundary points satisfy both orientations.
struct SyntheticCut {
  Vec w;
  double b = 0.0;
  bool flipped = false;

  double value(std::span<const double> theta) const;
  bool satisfied(std::span<const double> theta) const;
};

/// n random half-spaces with theta_h strictly inside (|c(theta_h)| > 1e-9,
/// offset at most max_offset), then flip_count of them chosen uniformly and
/// reversed.
std::vector<SyntheticCut> make_cuts(std::span<const double> theta_h, std::size_t n, std::size_t flip_count, Rng& rng,
                                    double max_offset = 1.0);

/// Number of satisfied cuts at every grid point.
std::vector<int> vote_counts(const GridSpace& grid, std::span<const SyntheticCut> cuts);

std::size_t count_flipped(std::span<const SyntheticCut> cuts);

struct Lemma1Report {
  std::size_t n = 0;
  std::size_t flips = 0;
  int theta_votes = 0;
  int max_votes = 0;
  std::size_t argmax_size = 0;
  std::size_t full_set_size = 0;
  bool theta_in_argmax = false;
  bool theta_in_full_set = false;
  /// Clean: theta_h is in the all-cuts set. Dirty: it is not.
  bool holds = false;
};

Lemma1Report check_lemma1(const GridSpace& grid, std::size_t theta_index, std::span<const SyntheticCut> cuts);

/// Which rounding of the corruption budget an instance exercises.
enum class Budget {
  /// gamma * n is an integer: ceil and floor agree.
  Integral,
  /// flips <= floor(gamma * n) with gamma * n fractional.
  WithinFloor,
  /// flips == ceil(gamma * n) > gamma * n: allowed by the ceiling count but
  /// outside the flip-fraction precondition.
  CeilingOnly,
  /// flips > ceil(gamma * n).
  OverBudget,
};
std::string to_string(Budget b);

struct Lemma2Report {
  double gamma = 0.0;
  std::size_t n = 0;
  std::size_t flips = 0;
  std::size_t threshold = 0;
  std::size_t ceil_budget = 0;
  Budget budget = Budget::Integral;
  /// flips <= gamma * n.
  bool in_contract = false;
  int theta_votes = 0;
  bool theta_in_robust_set = false;
  std::size_t robust_set_size = 0;
  std::size_t full_set_size = 0;
  /// In contract implies theta_h in the robust set. Out-of-contract instances always hold.
  bool holds = false;
};

Lemma2Report check_lemma2(const GridSpace& grid, std::size_t theta_index, std::span<const SyntheticCut> cuts,
                          double gamma);

/// Points whose hard robust objective is 1.
std::vector<bool> robust_set(std::span<const int> counts, std::size_t n, double gamma);
std::size_t robust_set_size(std::span<const int> counts, std::size_t n, double gamma);

struct Instance {
  std::size_t theta_index = 0;
  std::vector<SyntheticCut> cuts;
  double gamma = 0.0;
};

struct OracleConfig {
  std::size_t instances = 200;
  std::size_t resolution = 201;
  double extent = 1.0;
  std::size_t max_cuts = 10;
  std::uint64_t seed = 0;
};

struct Counterexample {
  std::string lemma;
  Instance instance;
};

struct OracleReport {
  std::size_t lemma1_clean = 0;
  std::size_t lemma1_dirty = 0;
  std::size_t lemma2_in_contract = 0;
  std::size_t lemma2_out_of_contract = 0;
  std::size_t budget_counts[4] = {0, 0, 0, 0};
  /// Robust-set size summed over instances, per gamma in `gamma_levels`.
  std::vector<double> gamma_levels;
  std::vector<double> mean_robust_share;
  std::vector<Counterexample> counterexamples;
};

/// Random 2D instances: `instances` clean and dirty lemma-1 checks and
/// `instances` lemma-2 checks with flips <= floor(gamma n), plus a share of
/// ceiling-only and over-budget instances reported separately.
OracleReport run_oracle(const OracleConfig& cfg);

/// Human-readable summary.
void write_report(std::ostream& out, const OracleReport& report, const OracleConfig& cfg);
/// Replayable text form of an instance.
void write_instance(std::ostream& out, const Instance& inst, const GridSpace& grid);

// Vote-count field: CSV with one column per axis then `votes`.
void write_votes_csv(std::ostream& out, const GridSpace& grid, std::span<const int> counts);

struct HeatmapOptions {
  std::string title;
  int size_px = 420;
  /// Outline points whose vote count reaches this (0: none).
  int highlight_votes = 0;
};

/// 2D vote heatmap with cut lines and theta_h marked.
std::string render_votes_svg(const GridSpace& grid, std::span<const int> counts, std::span<const SyntheticCut> cuts,
                             std::span<const double> theta_h, const HeatmapOptions& opts = {});

}  // namespace rodif::cuts
