#include <benchmark/benchmark.h>

#include "metaopt/model.hpp"
#include "metaopt/rng.hpp"

using namespace metaopt;

namespace {

ModelSpec bench_model(int64_t width) {
  ModelSpec m;
  m.input_dim = 32;
  m.hidden_dims = {width, width};
  m.activation = Activation::kTanh;
  m.dropout_rate = 0.0;
  m.heads["cls"] = {HeadKind::kClassification, 4};
  return m;
}

Batch bench_batch(int64_t n, int64_t dim, uint64_t seed) {
  Rng rng(seed);
  Batch b;
  b.features = Tensor::zeros({n, dim});
  for (int64_t i = 0; i < b.features.numel(); ++i) b.features[i] = uniform_in(rng, -1, 1);
  for (int64_t i = 0; i < n; ++i) b.labels.push_back(static_cast<double>(uniform_index(rng, 4)));
  return b;
}

}  // namespace

static void BM_ForwardLoss(benchmark::State& state) {
  const ModelSpec model = bench_model(state.range(0));
  ParamVector params = init_params(model, 1);
  Batch batch = bench_batch(32, 32, 2);
  Graph g = forward_loss(model, params, "cls", batch);
  Bindings bind = {{kThetaName, params.as_tensor()}};
  for (auto _ : state) benchmark::DoNotOptimize(evaluate(g, bind));
}
BENCHMARK(BM_ForwardLoss)->Arg(16)->Arg(64);

static void BM_GradBuild(benchmark::State& state) {
  const ModelSpec model = bench_model(state.range(0));
  ParamVector params = init_params(model, 1);
  Batch batch = bench_batch(32, 32, 2);
  Graph g = forward_loss(model, params, "cls", batch);
  for (auto _ : state) benchmark::DoNotOptimize(grad(g, kThetaName));
}
BENCHMARK(BM_GradBuild)->Arg(16)->Arg(64);

static void BM_GradEval(benchmark::State& state) {
  const ModelSpec model = bench_model(state.range(0));
  ParamVector params = init_params(model, 1);
  Batch batch = bench_batch(32, 32, 2);
  Graph dg = grad(forward_loss(model, params, "cls", batch), kThetaName);
  Bindings bind = {{kThetaName, params.as_tensor()}};
  for (auto _ : state) benchmark::DoNotOptimize(evaluate(dg, bind));
}
BENCHMARK(BM_GradEval)->Arg(16)->Arg(64);

static void BM_HessianVectorProduct(benchmark::State& state) {
  const ModelSpec model = bench_model(state.range(0));
  ParamVector params = init_params(model, 1);
  Batch batch = bench_batch(32, 32, 2);
  Graph g = forward_loss(model, params, "cls", batch);
  Rng rng(3);
  Tensor dir = Tensor::zeros({params.size()});
  for (int64_t i = 0; i < dir.numel(); ++i) dir[i] = uniform_in(rng, -1, 1);
  Bindings bind = {{kThetaName, params.as_tensor()}};
  for (auto _ : state) benchmark::DoNotOptimize(grad2(g, kThetaName, dir, bind));
}
BENCHMARK(BM_HessianVectorProduct)->Arg(16);

BENCHMARK_MAIN();
