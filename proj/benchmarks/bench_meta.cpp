#include <benchmark/benchmark.h>

#include "metaopt/optim.hpp"
#include "metaopt/rng.hpp"

using namespace metaopt;

namespace {

struct Setup {
  ModelSpec model;
  Task task;
  ParamVector params;
  std::vector<Batch> batches;
  InnerConfig cfg;

  explicit Setup(int k) {
    model.input_dim = 8;
    model.hidden_dims = {32, 32};
    model.activation = Activation::kTanh;
    model.dropout_rate = 0.0;
    model.heads["cls"] = {HeadKind::kClassification, 4};
    task.spec.name = "bench";
    task.spec.kind = HeadKind::kClassification;
    task.spec.n_classes = 4;
    task.spec.head_name = "cls";
    params = init_params(model, 1);
    cfg.alpha = 0.01;
    cfg.k = k;
    Rng rng(7);
    for (int b = 0; b <= k; ++b) {
      Batch batch;
      batch.features = Tensor::zeros({16, 8});
      for (int64_t i = 0; i < batch.features.numel(); ++i)
        batch.features[i] = uniform_in(rng, -1, 1);
      for (int64_t i = 0; i < 16; ++i)
        batch.labels.push_back(static_cast<double>(uniform_index(rng, 4)));
      batches.push_back(std::move(batch));
    }
  }
  std::span<const Batch> support() const { return {batches.data(), batches.size() - 1}; }
  const Batch& query() const { return batches.back(); }
};

}  // namespace

static void BM_MamlMetaGrad(benchmark::State& state) {
  Setup s(static_cast<int>(state.range(0)));
  for (auto _ : state)
    benchmark::DoNotOptimize(
        maml_meta_grad(s.model, s.params, s.task, s.support(), s.query(), s.cfg));
}
BENCHMARK(BM_MamlMetaGrad)->Arg(1)->Arg(5);

static void BM_FomamlMetaGrad(benchmark::State& state) {
  Setup s(static_cast<int>(state.range(0)));
  for (auto _ : state)
    benchmark::DoNotOptimize(
        fomaml_meta_grad(s.model, s.params, s.task, s.support(), s.query(), s.cfg));
}
BENCHMARK(BM_FomamlMetaGrad)->Arg(1)->Arg(5);

static void BM_ReptileTaskStep(benchmark::State& state) {
  Setup s(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    auto r = inner_adapt(s.model, s.params, s.task, s.support(), s.cfg, false);
    benchmark::DoNotOptimize(reptile_delta(s.params, {r.adapted}));
  }
}
BENCHMARK(BM_ReptileTaskStep)->Arg(1)->Arg(5);

BENCHMARK_MAIN();
