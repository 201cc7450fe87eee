#include "metaopt/sampler.hpp"

#include <algorithm>
#include <numeric>

namespace metaopt {

void SamplerConfig::validate(const TaskRegistry& registry) const {
  if (kind == SamplerKind::kMixed) {
    require(mix_ratio > 0, "sampler: mix_ratio must be positive");
    require(!target_task.empty(), "sampler: mixed sampling requires a target task");
    require(registry.has(target_task), "sampler: target task '" + target_task + "' not registered");
  }
}

TaskSampler::TaskSampler(const TaskRegistry& registry, SamplerConfig cfg)
    : registry_(registry), cfg_(std::move(cfg)), rng_(mix_seed(cfg_.seed, 0x5a3b1e)) {
  cfg_.validate(registry);
  pool_ = registry.with_role(TaskRole::kAuxiliary);
  if (cfg_.include_targets)
    for (const Task* t : registry.with_role(TaskRole::kTarget)) pool_.push_back(t);
  require(!pool_.empty(), "sampler: no tasks to draw from");
  if (cfg_.kind == SamplerKind::kPps) {
    double total = 0.0;
    for (const Task* t : pool_) {
      require(t->spec.n_train > 0,
              "sampler: pps requires positive train size, task '" + t->spec.name + "' has none");
      total += static_cast<double>(t->spec.n_train);
      cumulative_.push_back(total);
    }
    for (double& c : cumulative_) c /= total;
  }
}

const std::string& TaskSampler::sample(double epoch_position) {
  require(epoch_position >= 0.0 && epoch_position < 1.0,
          "sampler: epoch_position must be in [0, 1)");
  switch (cfg_.kind) {
    case SamplerKind::kUniform:
      return pool_[static_cast<size_t>(uniform_index(rng_, static_cast<int64_t>(pool_.size())))]
          ->spec.name;
    case SamplerKind::kPps: {
      const double u = uniform_unit(rng_);
      const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
      const size_t i = std::min(static_cast<size_t>(it - cumulative_.begin()),
                                pool_.size() - 1);
      return pool_[i]->spec.name;
    }
    case SamplerKind::kMixed: {
      const double uniform_phase = cfg_.mix_ratio / (cfg_.mix_ratio + 1.0);
      if (epoch_position < uniform_phase)
        return pool_[static_cast<size_t>(uniform_index(rng_, static_cast<int64_t>(pool_.size())))]
            ->spec.name;
      return registry_.get(cfg_.target_task).spec.name;
    }
  }
  fail("sampler: unhandled kind");
}

Batch make_batch(const std::vector<Example>& examples, const std::vector<int64_t>& indices) {
  require(!indices.empty(), "batch: empty index set");
  const int64_t dim = examples[0].features.numel();
  Tensor features = Tensor::zeros({static_cast<int64_t>(indices.size()), dim});
  std::vector<double> labels;
  labels.reserve(indices.size());
  for (size_t i = 0; i < indices.size(); ++i) {
    const Example& e = examples[static_cast<size_t>(indices[i])];
    for (int64_t d = 0; d < dim; ++d) features.at(static_cast<int64_t>(i), d) = e.features[d];
    labels.push_back(e.label);
  }
  return {std::move(features), std::move(labels)};
}

Batch full_batch(const std::vector<Example>& examples) {
  std::vector<int64_t> idx(examples.size());
  std::iota(idx.begin(), idx.end(), 0);
  return make_batch(examples, idx);
}

SupportQuery draw_support_query(const TaskData& data, const TaskSpec& spec, int k,
                                int64_t batch_size, uint64_t seed, uint64_t step) {
  require(k >= 1, "draw_support_query: k must be >= 1");
  require(batch_size >= 1, "draw_support_query: batch_size must be >= 1");
  const int64_t n = static_cast<int64_t>(data.train.size());
  require(n > 0, "draw_support_query: task '" + spec.name + "' has an empty train split");

  Rng rng(mix_seed(mix_seed(seed, step), 0xba7c4));
  std::vector<int64_t> perm(static_cast<size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  for (int64_t i = n - 1; i > 0; --i)
    std::swap(perm[static_cast<size_t>(i)], perm[static_cast<size_t>(uniform_index(rng, i + 1))]);

  SupportQuery out;
  const int64_t need = (static_cast<int64_t>(k) + 1) * batch_size;
  if (n >= need) {
    auto slice = [&](int64_t b) {
      return std::vector<int64_t>(perm.begin() + b * batch_size,
                                  perm.begin() + (b + 1) * batch_size);
    };
    for (int b = 0; b < k; ++b) out.support.push_back(make_batch(data.train, slice(b)));
    out.query = make_batch(data.train, slice(k));
    return out;
  }

  // Too small: reserve a query pool, then draw support with replacement from
  // the remainder so the two never share an example. A one-example split
  // degenerates to sharing it.
  out.with_replacement = true;
  const int64_t query_pool =
      n == 1 ? 1 : std::clamp<int64_t>(n / (k + 1), 1, std::min<int64_t>(batch_size, n - 1));
  const int64_t support_pool = n == 1 ? 1 : n - query_pool;
  auto draw_from = [&](int64_t begin, int64_t count, int64_t m) {
    std::vector<int64_t> idx;
    idx.reserve(static_cast<size_t>(m));
    for (int64_t i = 0; i < m; ++i)
      idx.push_back(perm[static_cast<size_t>(begin + uniform_index(rng, count))]);
    return idx;
  };
  for (int b = 0; b < k; ++b)
    out.support.push_back(make_batch(data.train, draw_from(0, support_pool, batch_size)));
  out.query = make_batch(data.train, draw_from(n - query_pool, query_pool, batch_size));
  return out;
}

}  // namespace metaopt
