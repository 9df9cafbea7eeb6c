#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "v6forge/errors.hpp"
#include "v6forge/pipeline.hpp"

namespace pl = v6forge::pipeline;

int main(int argc, char** argv) {
  CLI::App app{"IPv6 target generation with a gated-convolutional VAE"};
  app.set_version_flag("--version", std::string(pl::kVersion));
  app.require_subcommand(1, 1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  for (const char* name : {"classify", "cluster", "train", "generate", "evaluate", "bench"}) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "key=value config file")->required();
    sub->add_option("--seed", seed, "global rng_seed override");
    sub->add_option("--out", out_dir, "output directory override");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? pl::kExitOk : pl::kExitConfig;
  }

  const auto command = pl::parse_command(app.get_subcommands().front()->get_name());
  try {
    auto cfg = pl::parse_pipeline_config(pl::load_config(config_path));
    if (seed) cfg.rng_seed = *seed;
    if (out_dir) cfg.out = *out_dir;
    const auto result = pl::run(*command, cfg);
    pl::commit(cfg.out, *command, cfg, result);
    std::cout << pl::command_name(*command) << ": " << result.summary << " -> " << cfg.out.string() << "\n";
    return pl::kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "v6forge " << pl::command_name(*command) << ": " << e.what() << "\n";
    return pl::exit_code_for(e);
  }
}
