#include "rodif/cut_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <sstream>

#include "rodif/errors.hpp"
#include "rodif/losses.hpp"
#include "rodif/parallel.hpp"

namespace rodif::cuts {

GridSpace GridSpace::square(std::size_t dim, double lo, double hi, std::size_t resolution) {
  GridSpace g;
  g.lower.assign(dim, lo);
  g.upper.assign(dim, hi);
  g.resolution.assign(dim, resolution);
  g.validate();
  return g;
}

void GridSpace::validate() const {
  if (resolution.empty() || resolution.size() > 3) throw ConfigError("grid: dimension must be 1, 2 or 3");
  if (lower.size() != resolution.size() || upper.size() != resolution.size()) {
    throw ConfigError("grid: bounds and resolution differ in dimension");
  }
  double total = 1.0;
  for (std::size_t a = 0; a < resolution.size(); ++a) {
    if (resolution[a] < 2) throw ConfigError("grid: resolution must be >= 2 per axis");
    if (!(lower[a] < upper[a])) throw ConfigError("grid: empty axis range");
    total *= static_cast<double>(resolution[a]);
  }
  if (total > 1e6) throw ConfigError("grid: more than 1e6 points");
}

std::size_t GridSpace::size() const {
  std::size_t n = 1;
  for (std::size_t r : resolution) n *= r;
  return n;
}

Vec GridSpace::point(std::size_t index) const {
  Vec p(dim());
  for (std::size_t a = 0; a < dim(); ++a) {
    const std::size_t i = index % resolution[a];
    index /= resolution[a];
    p[a] = lower[a] + (upper[a] - lower[a]) * static_cast<double>(i) / static_cast<double>(resolution[a] - 1);
  }
  return p;
}

std::size_t GridSpace::nearest(std::span<const double> p) const {
  if (p.size() != dim()) throw ConfigError("grid: point dimension mismatch");
  std::size_t index = 0;
  std::size_t stride = 1;
  for (std::size_t a = 0; a < dim(); ++a) {
    const double u = (p[a] - lower[a]) / (upper[a] - lower[a]) * static_cast<double>(resolution[a] - 1);
    const auto i = static_cast<std::size_t>(std::clamp(std::lround(u), 0L, static_cast<long>(resolution[a] - 1)));
    index += i * stride;
    stride *= resolution[a];
  }
  return index;
}

double SyntheticCut::value(std::span<const double> theta) const {
  double c = b;
  for (std::size_t i = 0; i < w.size(); ++i) c += w[i] * theta[i];
  return c;
}

bool SyntheticCut::satisfied(std::span<const double> theta) const {
  const double c = value(theta);
  return flipped ? c <= 0.0 : c >= 0.0;
}

std::vector<SyntheticCut> make_cuts(std::span<const double> theta_h, std::size_t n, std::size_t flip_count, Rng& rng,
                                    double max_offset) {
  if (flip_count > n) throw ConfigError("make_cuts: flip_count exceeds n");
  if (theta_h.empty()) throw ConfigError("make_cuts: empty theta_h");
  constexpr int kRetries = 100;
  std::vector<SyntheticCut> cuts(n);
  for (auto& cut : cuts) {
    bool ok = false;
    for (int attempt = 0; attempt < kRetries && !ok; ++attempt) {
      cut.w.assign(theta_h.size(), 0.0);
      double norm = 0.0;
      for (double& x : cut.w) {
        x = rng.normal();
        norm += x * x;
      }
      norm = std::sqrt(norm);
      if (norm < 1e-12) continue;
      for (double& x : cut.w) x /= norm;
      const double offset = rng.uniform() * max_offset;
      double dot = 0.0;
      for (std::size_t i = 0; i < theta_h.size(); ++i) dot += cut.w[i] * theta_h[i];
      cut.b = offset - dot;
      ok = cut.value(theta_h) > 1e-9;
    }
    if (!ok) throw NumericalError("make_cuts", "could not place a non-degenerate cut");
  }
  // First flip_count positions of a uniform shuffle.
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < flip_count; ++i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(i), static_cast<std::int64_t>(n - 1)));
    std::swap(idx[i], idx[j]);
    cuts[idx[i]].flipped = true;
  }
  return cuts;
}

std::vector<int> vote_counts(const GridSpace& grid, std::span<const SyntheticCut> cuts) {
  grid.validate();
  std::vector<int> counts(grid.size(), 0);
  constexpr std::size_t kBlock = 4096;
  const std::size_t blocks = (counts.size() + kBlock - 1) / kBlock;
  parallel_for(blocks, [&](std::size_t blk) {
    const std::size_t hi = std::min(counts.size(), (blk + 1) * kBlock);
    for (std::size_t i = blk * kBlock; i < hi; ++i) {
      const Vec p = grid.point(i);
      int c = 0;
      for (const auto& cut : cuts) c += cut.satisfied(p);
      counts[i] = c;
    }
  });
  return counts;
}

std::size_t count_flipped(std::span<const SyntheticCut> cuts) {
  return static_cast<std::size_t>(std::count_if(cuts.begin(), cuts.end(), [](const auto& c) { return c.flipped; }));
}

Lemma1Report check_lemma1(const GridSpace& grid, std::size_t theta_index, std::span<const SyntheticCut> cuts) {
  if (theta_index >= grid.size()) throw ConfigError("check_lemma1: theta index outside the grid");
  const auto counts = vote_counts(grid, cuts);
  Lemma1Report r;
  r.n = cuts.size();
  r.flips = count_flipped(cuts);
  r.theta_votes = counts[theta_index];
  r.max_votes = *std::max_element(counts.begin(), counts.end());
  for (int c : counts) {
    r.argmax_size += c == r.max_votes;
    r.full_set_size += c == static_cast<int>(r.n);
  }
  r.theta_in_argmax = r.theta_votes == r.max_votes;
  r.theta_in_full_set = r.theta_votes == static_cast<int>(r.n);
  r.holds = r.flips == 0 ? r.theta_in_full_set && r.theta_in_argmax : !r.theta_in_full_set;
  return r;
}

std::string to_string(Budget b) {
  switch (b) {
    case Budget::Integral: return "integral";
    case Budget::WithinFloor: return "within-floor";
    case Budget::CeilingOnly: return "ceiling-only";
    case Budget::OverBudget: return "over-budget";
  }
  return "?";
}

namespace {

Budget classify_budget(std::size_t flips, std::size_t n, double gamma, std::size_t& ceil_budget) {
  const double g = gamma * static_cast<double>(n);
  const bool integral = std::abs(g - std::round(g)) < 1e-9;
  const auto floor_b = static_cast<std::size_t>(std::floor(g + 1e-9));
  ceil_budget = static_cast<std::size_t>(std::ceil(g - 1e-9));
  if (flips > ceil_budget) return Budget::OverBudget;
  if (integral) return Budget::Integral;
  return flips <= floor_b ? Budget::WithinFloor : Budget::CeilingOnly;
}

}  // namespace

std::vector<bool> robust_set(std::span<const int> counts, std::size_t n, double gamma) {
  std::vector<bool> out(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i) {
    out[i] = loss::hard_objective(static_cast<std::size_t>(counts[i]), n, gamma) == 1;
  }
  return out;
}

std::size_t robust_set_size(std::span<const int> counts, std::size_t n, double gamma) {
  const std::size_t threshold = loss::robust_threshold(n, gamma);
  return static_cast<std::size_t>(
      std::count_if(counts.begin(), counts.end(), [&](int c) { return static_cast<std::size_t>(c) >= threshold; }));
}

Lemma2Report check_lemma2(const GridSpace& grid, std::size_t theta_index, std::span<const SyntheticCut> cuts,
                          double gamma) {
  if (theta_index >= grid.size()) throw ConfigError("check_lemma2: theta index outside the grid");
  const auto counts = vote_counts(grid, cuts);
  Lemma2Report r;
  r.gamma = gamma;
  r.n = cuts.size();
  r.flips = count_flipped(cuts);
  r.threshold = loss::robust_threshold(r.n, gamma);
  r.budget = classify_budget(r.flips, r.n, gamma, r.ceil_budget);
  r.in_contract = r.budget == Budget::Integral || r.budget == Budget::WithinFloor;
  r.theta_votes = counts[theta_index];
  r.theta_in_robust_set = loss::hard_objective(static_cast<std::size_t>(r.theta_votes), r.n, gamma) == 1;
  r.robust_set_size = robust_set_size(counts, r.n, gamma);
  r.full_set_size = static_cast<std::size_t>(std::count(counts.begin(), counts.end(), static_cast<int>(r.n)));
  r.holds = !r.in_contract || r.theta_in_robust_set;
  return r;
}

OracleReport run_oracle(const OracleConfig& cfg) {
  if (cfg.instances < 1 || cfg.max_cuts < 1) throw ConfigError("oracle: need instances >= 1 and max_cuts >= 1");
  const GridSpace grid = GridSpace::square(2, -cfg.extent, cfg.extent, cfg.resolution);
  const Rng root(cfg.seed);
  static constexpr double kGammas[] = {0.0, 0.1, 0.2, 0.25, 0.3, 1.0 / 3.0, 0.4, 0.45, 0.5};

  OracleReport report;
  report.gamma_levels = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5};
  report.mean_robust_share.assign(report.gamma_levels.size(), 0.0);
  std::size_t monotone_samples = 0;

  auto draw = [&](Rng& rng, std::size_t n, std::size_t flips, double gamma) {
    Instance inst;
    inst.gamma = gamma;
    inst.theta_index = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(grid.size() - 1)));
    inst.cuts = make_cuts(grid.point(inst.theta_index), n, flips, rng, cfg.extent);
    return inst;
  };
  auto draw_n = [&](Rng& rng) { return static_cast<std::size_t>(rng.uniform_int(1, static_cast<std::int64_t>(cfg.max_cuts))); };

  for (std::size_t i = 0; i < cfg.instances; ++i) {
    Rng rng = root.child(static_cast<std::uint64_t>(i));

    // Lemma 1, clean and dirty.
    {
      Instance clean = draw(rng, draw_n(rng), 0, 0.0);
      if (!check_lemma1(grid, clean.theta_index, clean.cuts).holds) {
        report.counterexamples.push_back({"lemma1-clean", clean});
      }
      ++report.lemma1_clean;
      const std::size_t n = draw_n(rng);
      const auto flips = static_cast<std::size_t>(rng.uniform_int(1, static_cast<std::int64_t>(n)));
      Instance dirty = draw(rng, n, flips, 0.0);
      if (!check_lemma1(grid, dirty.theta_index, dirty.cuts).holds) {
        report.counterexamples.push_back({"lemma1-dirty", dirty});
      }
      ++report.lemma1_dirty;
    }

    // Lemma 2 within the flip budget.
    {
      const double gamma = kGammas[rng.uniform_int(0, std::size(kGammas) - 1)];
      const std::size_t n = draw_n(rng);
      const std::size_t budget = static_cast<std::size_t>(std::floor(gamma * static_cast<double>(n) + 1e-9));
      const auto flips = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(budget)));
      Instance inst = draw(rng, n, flips, gamma);
      const auto r = check_lemma2(grid, inst.theta_index, inst.cuts, gamma);
      ++report.budget_counts[static_cast<int>(r.budget)];
      if (r.in_contract) {
        ++report.lemma2_in_contract;
        if (!r.holds) report.counterexamples.push_back({"lemma2", inst});
      } else {
        ++report.lemma2_out_of_contract;
      }

      const auto counts = vote_counts(grid, inst.cuts);
      std::vector<bool> previous(counts.size(), false);
      for (std::size_t g = 0; g < report.gamma_levels.size(); ++g) {
        const auto set = robust_set(counts, n, report.gamma_levels[g]);
        bool subset = true;
        std::size_t size = 0;
        for (std::size_t p = 0; p < set.size(); ++p) {
          subset = subset && (!previous[p] || set[p]);
          size += set[p];
        }
        if (!subset) report.counterexamples.push_back({"robust-set-monotonicity", inst});
        report.mean_robust_share[g] += static_cast<double>(size) / static_cast<double>(counts.size());
        previous = set;
      }
      ++monotone_samples;
    }

    // Boundary cases of the corruption budget: one ceiling-only or over-budget
    // instance every fourth round, reported but never counted as failures.
    if (i % 4 == 0) {
      const double gamma = 0.25;
      const std::size_t n = 3 + 2 * static_cast<std::size_t>(rng.uniform_int(0, 3));  // odd: gamma n fractional
      std::size_t ceil_budget = 0;
      classify_budget(0, n, gamma, ceil_budget);
      const std::size_t flips = std::min(n, ceil_budget + (i % 8 == 0 ? 0 : 1));
      Instance inst = draw(rng, n, flips, gamma);
      const auto r = check_lemma2(grid, inst.theta_index, inst.cuts, gamma);
      ++report.budget_counts[static_cast<int>(r.budget)];
      ++report.lemma2_out_of_contract;
      if (r.budget == Budget::CeilingOnly && !r.theta_in_robust_set) {
        report.counterexamples.push_back({"lemma2-ceiling", inst});
      }
    }
  }
  for (double& s : report.mean_robust_share) s /= static_cast<double>(monotone_samples);
  return report;
}

void write_report(std::ostream& out, const OracleReport& r, const OracleConfig& cfg) {
  out << "grid: 2D, " << cfg.resolution << " points per axis, [-" << cfg.extent << ", " << cfg.extent << "]\n";
  out << "lemma 1 clean instances: " << r.lemma1_clean << "\n";
  out << "lemma 1 dirty instances: " << r.lemma1_dirty << "\n";
  out << "lemma 2 instances in contract: " << r.lemma2_in_contract << "\n";
  out << "lemma 2 instances out of contract (reported, not failures): " << r.lemma2_out_of_contract << "\n";
  for (int b = 0; b < 4; ++b) {
    out << "  budget " << to_string(static_cast<Budget>(b)) << ": " << r.budget_counts[b] << "\n";
  }
  out << "mean robust-set share by gamma:";
  for (std::size_t g = 0; g < r.gamma_levels.size(); ++g) {
    char buf[64];
    std::snprintf(buf, sizeof buf, " %.2f:%.4f", r.gamma_levels[g], r.mean_robust_share[g]);
    out << buf;
  }
  out << "\ncounterexamples: " << r.counterexamples.size() << "\n";
}

void write_instance(std::ostream& out, const Instance& inst, const GridSpace& grid) {
  const Vec theta = grid.point(inst.theta_index);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", inst.gamma);
  out << "gamma " << buf << "\ntheta_index " << inst.theta_index << "\ntheta";
  for (double x : theta) {
    std::snprintf(buf, sizeof buf, " %a", x);
    out << buf;
  }
  out << "\ncuts " << inst.cuts.size() << "\n";
  for (const auto& c : inst.cuts) {
    for (double w : c.w) {
      std::snprintf(buf, sizeof buf, "%a ", w);
      out << buf;
    }
    std::snprintf(buf, sizeof buf, "%a", c.b);
    out << buf << ' ' << (c.flipped ? 1 : 0) << "\n";
  }
}

void write_votes_csv(std::ostream& out, const GridSpace& grid, std::span<const int> counts) {
  static constexpr const char* kAxes[] = {"x", "y", "z"};
  for (std::size_t a = 0; a < grid.dim(); ++a) out << kAxes[a] << ',';
  out << "votes\n";
  char buf[32];
  for (std::size_t i = 0; i < counts.size(); ++i) {
    for (double x : grid.point(i)) {
      std::snprintf(buf, sizeof buf, "%.10g,", x);
      out << buf;
    }
    out << counts[i] << '\n';
  }
}

std::string render_votes_svg(const GridSpace& grid, std::span<const int> counts, std::span<const SyntheticCut> cuts,
                             std::span<const double> theta_h, const HeatmapOptions& opts) {
  if (grid.dim() != 2) throw ConfigError("render_votes_svg: grid must be 2D");
  const double size = opts.size_px;
  const double top = opts.title.empty() ? 0.0 : 24.0;
  const std::size_t nx = grid.resolution[0], ny = grid.resolution[1];
  const std::size_t stride = std::max<std::size_t>(1, std::max(nx, ny) / 100);
  const double cw = size * static_cast<double>(stride) / static_cast<double>(nx);
  const double ch = size * static_cast<double>(stride) / static_cast<double>(ny);
  const int max_votes = counts.empty() ? 0 : std::max(1, *std::max_element(counts.begin(), counts.end()));
  auto px = [&](double x) { return (x - grid.lower[0]) / (grid.upper[0] - grid.lower[0]) * size; };
  auto py = [&](double y) { return top + (grid.upper[1] - y) / (grid.upper[1] - grid.lower[1]) * size; };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size + top << "\">\n";
  if (!opts.title.empty()) svg << "<text x=\"4\" y=\"16\" font-size=\"13\">" << opts.title << "</text>\n";
  char buf[256];
  for (std::size_t j = 0; j < ny; j += stride) {
    for (std::size_t i = 0; i < nx; i += stride) {
      const int v = counts[j * nx + i];
      const int shade = 255 - static_cast<int>(200.0 * v / max_votes);
      const bool hi = opts.highlight_votes > 0 && v >= opts.highlight_votes;
      std::snprintf(buf, sizeof buf,
                    "<rect x=\"%.2f\" y=\"%.2f\" width=\"%.2f\" height=\"%.2f\" fill=\"rgb(%d,%d,255)\"%s/>\n",
                    static_cast<double>(i) / nx * size, top + size - static_cast<double>(j + stride) / ny * size,
                    cw + 0.3, ch + 0.3, shade, shade, hi ? " fill-opacity=\"1\" stroke=\"#e6a100\" stroke-width=\"0.4\"" : "");
      svg << buf;
    }
  }
  for (const auto& c : cuts) {
    // Clip w0 x + w1 y + b = 0 to the box.
    std::vector<std::pair<double, double>> ends;
    const double x0 = grid.lower[0], x1 = grid.upper[0], y0 = grid.lower[1], y1 = grid.upper[1];
    if (std::abs(c.w[1]) > 1e-12) {
      for (double x : {x0, x1}) {
        const double y = -(c.w[0] * x + c.b) / c.w[1];
        if (y >= y0 && y <= y1) ends.emplace_back(x, y);
      }
    }
    if (std::abs(c.w[0]) > 1e-12) {
      for (double y : {y0, y1}) {
        const double x = -(c.w[1] * y + c.b) / c.w[0];
        if (x >= x0 && x <= x1) ends.emplace_back(x, y);
      }
    }
    if (ends.size() < 2) continue;
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" stroke=\"%s\" stroke-width=\"1.5\"%s/>\n",
                  px(ends[0].first), py(ends[0].second), px(ends[1].first), py(ends[1].second),
                  c.flipped ? "#c0392b" : "#2c3e50", c.flipped ? " stroke-dasharray=\"5,3\"" : "");
    svg << buf;
  }
  if (theta_h.size() == 2) {
    std::snprintf(buf, sizeof buf, "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"4\" fill=\"black\"/>\n", px(theta_h[0]),
                  py(theta_h[1]));
    svg << buf;
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace rodif::cuts
