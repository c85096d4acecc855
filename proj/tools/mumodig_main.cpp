#include <CLI11.hpp>

#include "mumodig/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"mumodig: integrated-gradient transferable attack toolkit"};
  app.require_subcommand(1);

  mumodig::CliOptions options;
  std::uint64_t seed = 0;
  std::size_t workers = 0;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", options.config_path, "JSON config file")->required();
    cmd->add_option("--out", options.out_dir, "output directory (must not exist)")->required();
    cmd->add_option("--seed", seed, "override the config master seed")
        ->each([&](const std::string&) { options.seed_override = seed; });
    cmd->add_option("--workers", workers, "override the worker count")
        ->each([&](const std::string&) { options.workers_override = workers; });
  };

  CLI::App* train = app.add_subcommand("train", "train a classifier");
  CLI::App* attack = app.add_subcommand("attack", "generate adversarial examples");
  CLI::App* evaluate = app.add_subcommand("evaluate", "score archives against targets");
  CLI::App* diagnose = app.add_subcommand("diagnose", "cosine profile and attribution grids");
  for (CLI::App* cmd : {train, attack, evaluate, diagnose}) add_common(cmd);

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) mumodig::cmd_train(options);
    if (attack->parsed()) mumodig::cmd_attack(options);
    if (evaluate->parsed()) mumodig::cmd_evaluate(options);
    if (diagnose->parsed()) mumodig::cmd_diagnose(options);
  } catch (...) {
    return mumodig::exit_code_for_current_exception();
  }
  return 0;
}
