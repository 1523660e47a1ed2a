#include <CLI11.hpp>

#include "cli.hpp"

namespace rodif::cli {

int main_entry(int argc, char** argv, std::ostream& log) {
  CLI::App app{"Diffusion-policy preference fine-tuning on a 2D avoid task"};
  app.require_subcommand(1);
  RunConfig rc;
  std::uint64_t seed = 0;
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"pretrain", "Behaviour-clone the demonstrators into a reference policy"},
      {"finetune", "Harvest preferences from a reference policy and fine-tune on them"},
      {"eval", "Roll out a policy and report success and alignment"},
      {"sweep", "Fine-tune over a corruption or loss-parameter grid (resumable)"},
      {"oracle", "Check the hypothesis-cutting lemmas by grid enumeration"},
  };
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", rc.config_path, "JSON config file (defaults apply to missing keys)");
    sub->add_option("--out", rc.out, "Output directory")->capture_default_str();
    sub->add_option("--seed", seed, "Top-level seed (overrides the config)");
    sub->add_option("--set", rc.overrides, "Override a config key: dotted.key=value")->allow_extra_args(false);
    sub->callback([&rc, &seed, sub, name = name] {
      rc.command = name;
      if (sub->count("--seed") > 0) rc.seed = seed;
    });
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }
  return run(rc, log);
}

}  // namespace rodif::cli
