#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "metaopt/eval.hpp"
#include "metaopt/meta.hpp"

namespace metaopt {

// Per-task manifest entry: either three TSV paths or a synthetic family that
// expands into several registry entries.
struct TaskManifest {
  std::string name;
  TaskRole role = TaskRole::kAuxiliary;
  HeadKind kind = HeadKind::kClassification;
  int64_t n_classes = 2;
  MetricKind metric = MetricKind::kAccuracy;
  int64_t positive_class = 1;
  std::string head;  // optional shared head name

  // TSV tasks.
  std::string train_path, dev_path, test_path;
  TsvSchema schema;

  // Synthetic tasks.
  std::optional<SyntheticFamily> synthetic;
  int64_t n_tasks = 1;
  SyntheticSizes sizes;

  bool is_synthetic() const { return synthetic.has_value(); }
  bool operator==(const TaskManifest&) const = default;
};

struct TransferConfig {
  std::vector<double> fractions = {0.001, 0.01, 0.1, 1.0};
  std::vector<uint64_t> seeds = {1, 2, 3, 4, 5};
  std::string task;  // target task to sweep; defaults to the first target
  bool operator==(const TransferConfig&) const = default;
};

struct ProbeConfig {
  int epochs = 10;
  double learning_rate = 5e-5;
  std::string task;
  bool operator==(const ProbeConfig&) const = default;
};

struct AblateConfig {
  std::vector<int> k_values;
  std::vector<double> alpha_values;
  std::vector<Algorithm> algorithms;
  std::vector<SamplerKind> samplers;
  bool operator==(const AblateConfig&) const = default;
};

// How the meta-learning stage is initialized: fresh random parameters, or a
// supervised warm start on one auxiliary task.
struct InitConfig {
  enum class Kind { kRandom, kWarmstart };
  Kind kind = Kind::kRandom;
  std::string task;  // warm-start task; defaults to the largest auxiliary one
  int epochs = 3;
  double learning_rate = 5e-5;
  bool operator==(const InitConfig&) const = default;
};

struct RunConfig {
  ModelSpec model;  // input_dim filled from data at registry build time
  FeaturizerSpec featurizer;
  std::vector<TaskManifest> tasks;
  InitConfig init;
  MetaConfig meta;
  FinetuneGrid finetune;
  TransferConfig transfer;
  ProbeConfig probe;
  AblateConfig ablate;
  std::string output_dir = "out";

  bool operator==(const RunConfig&) const = default;
};

// Parses the documented section/key grammar, validating every key and filling
// defaults for omitted ones. Unknown keys fail with the nearest valid key
// named; type errors carry the line number.
RunConfig parse_config(const std::string& path);
RunConfig parse_config_text(const std::string& text, const std::string& origin = "<string>");

// Overrides in "section.key=value" form, applied before validation.
RunConfig parse_config_text(const std::string& text,
                            const std::vector<std::string>& overrides,
                            const std::string& origin = "<string>");

// Canonical text form; parse(emit(cfg)) == cfg.
std::string emit_config(const RunConfig& cfg);

// Builds the registry and the model implied by the config (heads from task
// manifests, input_dim from the data). `stats` accumulates malformed-row
// counts across the loaded TSV files.
TaskRegistry build_registry(const RunConfig& cfg, TsvLoadStats* stats = nullptr);
ModelSpec build_model(const RunConfig& cfg, const TaskRegistry& registry);

}  // namespace metaopt
