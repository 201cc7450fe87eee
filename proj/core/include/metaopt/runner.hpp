#pragma once

#include <optional>
#include <string>
#include <vector>

#include "metaopt/config.hpp"

namespace metaopt {

inline constexpr const char* kVersionString = "metaopt 0.1.0";

struct RunOptions {
  std::string subcommand;  // meta-train | finetune | transfer | probe | ablate
  std::string config_path;
  std::vector<std::string> overrides;  // section.key=value
  std::optional<uint64_t> seed;
  std::optional<int> workers;
  std::optional<std::string> out_dir;
  std::string checkpoint_path;  // defaults to <out>/checkpoint.bin
  bool force = false;           // tolerate checkpoint fingerprint mismatch
};

// Loads and resolves the configuration (file + --set/--seed/--workers/--out).
RunConfig resolve_config(const RunOptions& opts);

// Executes one subcommand, writing artifacts under the output directory:
// a manifest sufficient to reproduce the run, a checkpoint + JSONL step log
// for meta-train, JSON metric reports and aggregate CSVs for the evaluation
// commands. Throws Error on any failure.
void execute(const RunOptions& opts);

// Artifact paths for a given output directory.
std::string checkpoint_path(const std::string& out_dir);
std::string steps_path(const std::string& out_dir);
std::string manifest_path(const std::string& out_dir);

}  // namespace metaopt
