#pragma once

// Shared expensive fixtures. The pretrained reference policy is cached as a
// checkpoint under the build tree so separate test processes train it once.

#include <filesystem>
#include <fstream>
#include <string>
#include <unistd.h>

#include "rodif/pretrain.hpp"
#include "rodif/preference_data.hpp"

#ifndef RODIF_TEST_CACHE_DIR
#define RODIF_TEST_CACHE_DIR "."
#endif

namespace fixture {

inline const rodif::pretrain::PretrainConfig& reference_config() {
  static const rodif::pretrain::PretrainConfig cfg = [] {
    rodif::pretrain::PretrainConfig c;
    c.seed = 0;
    return c;
  }();
  return cfg;
}

inline const rodif::nn::Mlp& reference_policy() {
  static const rodif::nn::Mlp net = [] {
    namespace fs = std::filesystem;
    const fs::path path = fs::path(RODIF_TEST_CACHE_DIR) / "reference_seed0.ckpt";
    if (std::ifstream in(path); in) {
      try {
        return rodif::nn::load_checkpoint(in);
      } catch (const std::exception&) {
      }
    }
    const auto result = rodif::pretrain::pretrain(reference_config());
    fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp" + std::to_string(::getpid());
    {
      std::ofstream out(tmp);
      rodif::nn::save_checkpoint(out, result.net);
    }
    fs::rename(tmp, path);
    return result.net;
  }();
  return net;
}

/// 20 Left winners and 20 Right losers harvested from the reference policy.
inline const rodif::prefs::Harvest& reference_harvest() {
  static const rodif::prefs::Harvest h = [] {
    const auto& cfg = reference_config();
    return rodif::prefs::harvest(reference_policy(), cfg.env, cfg.schedule(), rodif::prefs::HarvestConfig{},
                                 rodif::Rng(0).child("harvest"));
  }();
  return h;
}

}  // namespace fixture
