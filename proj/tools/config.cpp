#include <cmath>
#include <fstream>

#include "cli.hpp"

namespace rodif::cli {

json default_config() {
  return json::parse(R"({
  "seed": 0,
  "env": {
    "start": [0.0, 0.0],
    "goal_y": 7.5,
    "center_x": 0.0,
    "lower": [-4.0, -1.0],
    "upper": [4.0, 8.0],
    "obstacles": [[-2.5, 2.5, 0.6], [0.0, 2.5, 0.6], [2.5, 2.5, 0.6],
                  [-3.3, 5.0, 0.6], [0.0, 5.0, 0.6], [3.3, 5.0, 0.6]],
    "max_steps": 40,
    "action_clamp": 1.0,
    "reset_jitter": 0.01,
    "observation_scale": 4.0
  },
  "diffusion": {"steps": 20, "beta_start": 0.0001, "beta_end": 0.4},
  "pretrain": {
    "hidden": [64, 64],
    "demos_per_mode": 50,
    "demo_gain": 2.0,
    "demo_max_speed": 1.0,
    "demo_noise": 0.05,
    "train_steps": 20000,
    "batch_size": 64,
    "learning_rate": 0.001,
    "eval_episodes": 100,
    "collapse_share": 0.1,
    "log_every": 100
  },
  "harvest": {"winners": 20, "losers": 20, "preferred": "left", "attempt_factor": 50},
  "corruption": {"rate": 0.0},
  "loss": {"kind": "rodif", "alpha": 1.0, "beta": 0.1, "gamma": 0.0, "nu": 1.0},
  "train": {"epochs": 50, "batch_size": 64, "learning_rate": 3e-05, "eval_every": 10, "eval_episodes": 100},
  "eval": {"episodes": 100},
  "sweep": {
    "axis": "corruption",
    "values": [0.0, 0.1, 0.2, 0.3],
    "gammas": [0.0, 0.1, 0.2, 0.3],
    "corruption_rate": 0.3
  },
  "oracle": {"instances": 200, "resolution": 201, "extent": 1.0, "max_cuts": 10},
  "paths": {"reference": "", "policy": ""}
})");
}

namespace {

bool same_kind(const json& a, const json& b) {
  if (a.is_number() && b.is_number()) return !(a.is_number_integer() && b.is_number_float());
  return a.type() == b.type();
}

void assign(json& cfg, const std::string& key, const json& value, const std::string& origin) {
  const json::json_pointer ptr("/" + [&] {
    std::string p = key;
    for (char& c : p) {
      if (c == '.') c = '/';
    }
    return p;
  }());
  if (key.empty() || !cfg.contains(ptr) || cfg.at(ptr).is_object()) {
    throw UsageError(origin + ": unknown config key '" + key + "'");
  }
  json v = value;
  if (cfg.at(ptr).is_number_integer() && v.is_number_float() && v.get<double>() == std::floor(v.get<double>())) {
    v = static_cast<std::int64_t>(v.get<double>());
  }
  if (!same_kind(cfg.at(ptr), v)) {
    const std::string want = cfg.at(ptr).is_number_integer() ? "integer" : cfg.at(ptr).type_name();
    throw UsageError(origin + ": '" + key + "' expects " + want + ", got " + v.dump());
  }
  cfg[ptr] = v;
}

void merge_file(json& cfg, const json& file, const std::string& prefix, const std::string& path) {
  for (const auto& [k, v] : file.items()) {
    const std::string key = prefix.empty() ? k : prefix + "." + k;
    if (v.is_object()) {
      merge_file(cfg, v, key, path);
    } else {
      assign(cfg, key, v, path);
    }
  }
}

}  // namespace

json resolve_config(const RunConfig& run) {
  json cfg = default_config();
  if (!run.config_path.empty()) {
    std::ifstream in(run.config_path);
    if (!in) throw UsageError("cannot read config file '" + run.config_path + "'");
    json file;
    try {
      file = json::parse(in);
    } catch (const json::parse_error& e) {
      throw UsageError("config file '" + run.config_path + "' is not valid JSON: " + e.what());
    }
    if (!file.is_object()) throw UsageError("config file '" + run.config_path + "' must hold a JSON object");
    merge_file(cfg, file, "", run.config_path);
  }
  for (const auto& o : run.overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + o + "'");
    const std::string key = o.substr(0, eq), text = o.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    assign(cfg, key, value, "--set");
  }
  if (run.seed) cfg["seed"] = *run.seed;
  return cfg;
}

}  // namespace rodif::cli
