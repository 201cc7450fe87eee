#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "metaopt/rng.hpp"
#include "metaopt/tasks.hpp"

namespace metaopt {

enum class SamplerKind { kUniform, kPps, kMixed };

struct SamplerConfig {
  SamplerKind kind = SamplerKind::kPps;
  double mix_ratio = 2.0;     // mixed only, r in "r:1"
  std::string target_task;    // mixed only
  bool include_targets = false;  // draw from target tasks too
  uint64_t seed = 0;

  void validate(const TaskRegistry& registry) const;
  bool operator==(const SamplerConfig&) const = default;
};

// Owns the draw RNG; confined to the training thread.
class TaskSampler {
 public:
  TaskSampler(const TaskRegistry& registry, SamplerConfig cfg);

  // epoch_position in [0, 1): fraction of the current epoch already done.
  // uniform: equiprobable over the pool; pps: proportional to train size;
  // mixed r:1: uniform while epoch_position < r/(r+1), then the target task.
  const std::string& sample(double epoch_position);

  const std::vector<const Task*>& pool() const { return pool_; }

 private:
  const TaskRegistry& registry_;
  SamplerConfig cfg_;
  std::vector<const Task*> pool_;
  std::vector<double> cumulative_;  // pps prefix sums
  Rng rng_;
};

struct SupportQuery {
  std::vector<Batch> support;  // k batches for the inner loop
  Batch query;                 // held out for the meta-update
  bool with_replacement = false;  // train split too small for disjoint batches
};

// Deterministic per (seed, step): the same pair always yields the same index
// sets. When the split holds at least (k+1)*batch_size examples the batches
// are disjoint; otherwise support indices are drawn with replacement from a
// pool that never overlaps the query pool.
SupportQuery draw_support_query(const TaskData& data, const TaskSpec& spec, int k,
                                int64_t batch_size, uint64_t seed, uint64_t step);

Batch make_batch(const std::vector<Example>& examples, const std::vector<int64_t>& indices);
Batch full_batch(const std::vector<Example>& examples);

}  // namespace metaopt
