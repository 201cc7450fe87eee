#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "metaopt/runner.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Meta-learning experiment runner: trains a shared initialization over a task "
               "distribution and evaluates it by fine-tuning, transfer sweeps and probing."};
  app.require_subcommand(1);

  metaopt::RunOptions opts;
  uint64_t seed = 0;
  int workers = 0;
  std::string out_dir;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opts.config_path, "Path to the run configuration")->required();
    sub->add_option("--seed", seed, "Override the run seed");
    sub->add_option("--workers", workers, "Worker threads for per-task fan-out");
    sub->add_option("--set", opts.overrides,
                    "Configuration overrides as section.key=value (repeatable)");
    sub->add_option("--out", out_dir, "Output directory (overrides [output] dir)");
    return sub;
  };

  add_common(app.add_subcommand("meta-train", "Run the meta-learning stage, write a checkpoint"));
  auto* fine = add_common(app.add_subcommand("finetune", "Fine-tune a checkpoint on each target task"));
  auto* transfer = add_common(
      app.add_subcommand("transfer", "Fine-tune on growing fractions of the target train split"));
  auto* probe_cmd = add_common(
      app.add_subcommand("probe", "Train only the head of a target task on a frozen encoder"));
  auto* ablate = add_common(app.add_subcommand("ablate", "Sweep the declared axis grid"));
  for (CLI::App* sub : {fine, transfer, probe_cmd, ablate}) {
    sub->add_option("--checkpoint", opts.checkpoint_path,
                    "Checkpoint to evaluate (default: <out>/checkpoint.bin)");
    sub->add_flag("--force", opts.force, "Use a checkpoint whose configuration fingerprint differs");
  }

  CLI11_PARSE(app, argc, argv);

  CLI::App* sub = app.get_subcommands().front();
  opts.subcommand = sub->get_name();
  if (sub->count("--seed")) opts.seed = seed;
  if (sub->count("--workers")) opts.workers = workers;
  if (sub->count("--out")) opts.out_dir = out_dir;

  try {
    metaopt::execute(opts);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    nlohmann::json record = {{"error", e.what()}, {"command", opts.subcommand}};
    std::cerr << record.dump() << "\n";
    return 1;
  }
  return 0;
}
