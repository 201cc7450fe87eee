#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "metaopt/optim.hpp"
#include "metaopt/sampler.hpp"

namespace metaopt {

enum class Algorithm { kMaml, kFomaml, kReptile };

std::string_view algorithm_name(Algorithm a);
Algorithm algorithm_from_name(std::string_view name);

struct MetaConfig {
  Algorithm algorithm = Algorithm::kReptile;
  InnerConfig inner;
  OuterConfig outer;
  SamplerConfig sampler;
  int meta_batch = 8;     // tasks per meta-step
  int epochs = 5;
  int64_t batch_size = 32;
  uint64_t seed = 0;
  int workers = 1;        // per-task fan-out within a step

  void validate() const;
  // Canonical text used for fingerprinting checkpoints.
  std::string fingerprint_text(const ModelSpec& model) const;
  bool operator==(const MetaConfig&) const = default;
};

std::string fingerprint(const MetaConfig& cfg, const ModelSpec& model);

struct Checkpoint {
  ParamVector params;
  ModelSpec model;
  std::string fingerprint;
  int64_t step = 0;
  Algorithm algorithm = Algorithm::kReptile;
  uint64_t seed = 0;
};

struct StepRecord {
  int64_t step = 0;      // global step, 0-based
  int epoch = 0;         // 0-based
  std::vector<std::string> task_names;
  double mean_query_loss = 0.0;
  bool with_replacement = false;  // any task in the step fell back to replacement draws
};

using ProgressSink = std::function<void(const StepRecord&)>;

// Steps per epoch tied to auxiliary data volume, so one "epoch" consumes
// roughly every auxiliary example once through the inner loops.
int64_t epoch_steps(const TaskRegistry& registry, const MetaConfig& cfg);

// Meta-learning stage: per step, draw meta_batch tasks, adapt each on k
// support batches, combine the per-task meta-directions (sum for gradient
// algorithms, mean for reptile) and apply the outer update.
Checkpoint meta_train(const ModelSpec& model, const ParamVector& init,
                      const TaskRegistry& registry, const MetaConfig& cfg,
                      const ProgressSink& sink = nullptr);

// Binary checkpoint file: magic "MOPT", version, JSON metadata (algorithm,
// seed, fingerprint, layout, step), then raw little-endian doubles.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace metaopt
