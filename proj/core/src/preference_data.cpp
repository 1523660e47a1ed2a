#include "rodif/preference_data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "rodif/errors.hpp"
#include "rodif/parallel.hpp"

namespace rodif::prefs {

const Trajectory& TrajectoryStore::at(std::size_t id) const {
  if (id >= trajectories.size()) {
    throw DataError("unknown trajectory id " + std::to_string(id) + " (store holds " +
                    std::to_string(trajectories.size()) + ")");
  }
  return trajectories[id];
}

std::size_t TrajectoryStore::add(Trajectory traj) {
  trajectories.push_back(std::move(traj));
  return trajectories.size() - 1;
}

ObservedPair observed(const PreferencePair& pair) {
  if (pair.observed_winner_is_first) return {pair.winner_id, pair.loser_id};
  return {pair.loser_id, pair.winner_id};
}

std::vector<ObservedPair> observed(std::span<const PreferencePair> pairs) {
  std::vector<ObservedPair> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(observed(p));
  return out;
}

std::vector<PreferencePair> pair_cartesian(std::span<const std::size_t> winners, std::span<const std::size_t> losers) {
  std::vector<PreferencePair> out;
  out.reserve(winners.size() * losers.size());
  for (std::size_t w : winners) {
    for (std::size_t l : losers) {
      if (w == l) throw ConfigError("pair_cartesian: trajectory " + std::to_string(w) + " is both winner and loser");
      out.push_back({w, l, true, false});
    }
  }
  return out;
}

void CorruptionSpec::validate() const {
  if (!(rate >= 0.0 && rate <= 1.0)) throw ConfigError("corruption rate must lie in [0, 1]");
}

std::vector<std::size_t> corruption_indices(std::size_t n, const CorruptionSpec& spec) {
  spec.validate();
  const auto count = static_cast<std::size_t>(std::llround(spec.rate * static_cast<double>(n)));
  // Partial Fisher-Yates: the first `count` slots are a uniform sample.
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng = Rng(spec.seed).child("corruption");
  for (std::size_t i = 0; i < count; ++i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(i), static_cast<std::int64_t>(n - 1)));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  return idx;
}

std::vector<PreferencePair> corrupt(std::span<const PreferencePair> pairs, const CorruptionSpec& spec) {
  std::vector<PreferencePair> out(pairs.begin(), pairs.end());
  for (std::size_t i : corruption_indices(out.size(), spec)) {
    out[i].observed_winner_is_first = !out[i].observed_winner_is_first;
    out[i].corrupted = !out[i].observed_winner_is_first;
  }
  return out;
}

double bt_probability(double u_w, double u_l, double alpha) {
  if (!(alpha > 0.0)) throw ConfigError("bt_sample: alpha must be positive");
  return 1.0 / (1.0 + std::exp(-(u_w - u_l) / alpha));
}

bool bt_sample(double u_w, double u_l, double alpha, Rng& rng) {
  return rng.uniform() < bt_probability(u_w, u_l, alpha);
}

Harvest harvest(const nn::Mlp& net, const mdp::EnvConfig& env, const diffusion::NoiseSchedule& schedule,
                const HarvestConfig& cfg, const Rng& rng) {
  if (cfg.winners < 0 || cfg.losers < 0 || cfg.attempt_factor < 1) throw ConfigError("harvest: invalid counts");
  if (cfg.preferred == Mode::Undefined) throw ConfigError("harvest: preferred mode must be Left or Right");
  const Mode rejected = cfg.preferred == Mode::Left ? Mode::Right : Mode::Left;
  const int cap = cfg.attempt_factor * (cfg.winners + cfg.losers);
  constexpr int kChunk = 32;

  Harvest out;
  std::vector<Trajectory> chunk(kChunk);
  while (static_cast<int>(out.winner_ids.size()) < cfg.winners || static_cast<int>(out.loser_ids.size()) < cfg.losers) {
    if (out.attempts >= cap) {
      std::ostringstream msg;
      msg << "harvest gave up after " << out.attempts << " episodes with " << out.winner_ids.size() << "/"
          << cfg.winners << " " << mdp::to_string(cfg.preferred) << " winners and " << out.loser_ids.size() << "/"
          << cfg.losers << " " << mdp::to_string(rejected) << " losers";
      throw HarvestError(msg.str(), out.attempts);
    }
    const int base = out.attempts;
    const int n = std::min(kChunk, cap - base);
    parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
      Rng episode = rng.child(static_cast<std::uint64_t>(base) + i);
      chunk[i] = mdp::rollout(net, env, schedule, episode);
    });
    for (int i = 0; i < n; ++i) {
      ++out.attempts;
      Trajectory& t = chunk[static_cast<std::size_t>(i)];
      if (!mdp::is_success(t)) continue;
      if (t.mode == cfg.preferred && static_cast<int>(out.winner_ids.size()) < cfg.winners) {
        out.winner_ids.push_back(out.store.add(std::move(t)));
      } else if (t.mode == rejected && static_cast<int>(out.loser_ids.size()) < cfg.losers) {
        out.loser_ids.push_back(out.store.add(std::move(t)));
      }
      if (static_cast<int>(out.winner_ids.size()) == cfg.winners && static_cast<int>(out.loser_ids.size()) == cfg.losers) {
        break;
      }
    }
  }
  return out;
}

namespace {

constexpr const char* kPrefMagic = "# rodif-preferences v1";
constexpr const char* kPrefHeader = "winner_id,loser_id,observed_winner_is_first,corrupted";

}  // namespace

void write_preferences(std::ostream& out, std::span<const PreferencePair> pairs) {
  out << kPrefMagic << '\n' << kPrefHeader << '\n';
  for (const auto& p : pairs) {
    out << p.winner_id << ',' << p.loser_id << ',' << (p.observed_winner_is_first ? 1 : 0) << ','
        << (p.corrupted ? 1 : 0) << '\n';
  }
}

std::vector<PreferencePair> read_preferences(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kPrefMagic) throw DataError("preference file: missing '# rodif-preferences v1'");
  if (!std::getline(in, line) || line != kPrefHeader) throw DataError("preference file: unexpected header");
  std::vector<PreferencePair> out;
  int lineno = 2;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream row(line);
    PreferencePair p;
    int obs = -1, cor = -1;
    char c1 = 0, c2 = 0, c3 = 0;
    if (!(row >> p.winner_id >> c1 >> p.loser_id >> c2 >> obs >> c3 >> cor) || c1 != ',' || c2 != ',' || c3 != ',' ||
        (obs != 0 && obs != 1) || (cor != 0 && cor != 1)) {
      throw DataError("preference file: malformed row at line " + std::to_string(lineno));
    }
    p.observed_winner_is_first = obs == 1;
    p.corrupted = cor == 1;
    if (p.corrupted == p.observed_winner_is_first) {
      throw DataError("preference file: corrupted flag inconsistent with label at line " + std::to_string(lineno));
    }
    out.push_back(p);
  }
  return out;
}

void write_preferences(const std::string& path, std::span<const PreferencePair> pairs) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  write_preferences(out, pairs);
}

std::vector<PreferencePair> read_preferences(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path);
  return read_preferences(in);
}

}  // namespace rodif::prefs
