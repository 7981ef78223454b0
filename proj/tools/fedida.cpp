#include "fedida/experiment.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"Fairness-regularized federated learning experiments"};
  app.require_subcommand(1, 1);

  fedida::CommandOptions opts;
  std::string output_dir;
  std::uint64_t seed = 0;

  const std::pair<const char*, fedida::Command> commands[] = {
      {"run", fedida::Command::run},
      {"tune-lambda", fedida::Command::tune_lambda},
      {"tune-gamma", fedida::Command::tune_gamma},
      {"variance-study", fedida::Command::variance_study},
      {"ablation", fedida::Command::ablation},
      {"report", fedida::Command::report},
  };
  const char* help[] = {
      "Train every configured setup and write results, per-client reports and traces",
      "Per-client lambda search and the combined candidate list",
      "Two-stage gamma grid search, then a final run with the selected gamma",
      "Bootstrap variance of the fairness metrics, baseline vs FedIDA",
      "Baseline / fairness-only / oversampling-only / FedIDA grid",
      "Summarize the artifacts already in the output directory",
  };
  std::vector<std::pair<CLI::App*, fedida::Command>> subs;
  for (std::size_t i = 0; i < std::size(commands); ++i) {
    auto* sub = app.add_subcommand(commands[i].first, help[i]);
    sub->add_option("-c,--config", opts.config, "Experiment config (JSON)")->required();
    sub->add_option("-o,--output-dir", output_dir, "Output directory (default: config, then $FEDIDA_OUTPUT_DIR)");
    sub->add_option("-s,--seed", seed, "Override the config seed");
    sub->add_flag("-v,--verbose", opts.verbosity, "Progress messages on stderr");
    subs.emplace_back(sub, commands[i].second);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  for (const auto& [sub, command] : subs) {
    if (!sub->parsed()) continue;
    if (sub->count("--output-dir")) opts.output_dir = output_dir;
    if (sub->count("--seed")) opts.seed = seed;
    return fedida::run_command(command, opts);
  }
  return 2;
}
