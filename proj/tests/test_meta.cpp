#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>

#include "metaopt/meta.hpp"

using namespace metaopt;

namespace {

std::string temp_path(const std::string& stem) {
  static int counter = 0;
  return (std::filesystem::temp_directory_path() /
          (stem + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++) + ".bin"))
      .string();
}

ModelSpec sine_model(int64_t hidden = 8) {
  ModelSpec m;
  m.input_dim = 1;
  m.hidden_dims = {hidden};
  m.activation = Activation::kTanh;
  m.dropout_rate = 0.0;
  m.heads["sine"] = {HeadKind::kRegression, 2};
  return m;
}

TaskRegistry sine_registry(int64_t n_tasks, int64_t n_train, uint64_t seed) {
  SyntheticFamily family;
  family.family = SyntheticKind::kSinusoidRegression;
  family.name_prefix = "sine";
  family.seed = seed;
  TaskRegistry reg;
  for (Task& t : generate_synthetic(family, n_tasks, {n_train, 10, 10})) reg.add(std::move(t));
  return reg;
}

MetaConfig small_config(Algorithm algorithm) {
  MetaConfig cfg;
  cfg.algorithm = algorithm;
  cfg.inner.alpha = 0.01;
  cfg.inner.k = 2;
  cfg.outer.beta = 0.005;
  cfg.meta_batch = 2;
  cfg.epochs = 1;
  cfg.batch_size = 5;
  cfg.seed = 21;
  return cfg;
}

std::string file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

TEST_CASE("meta_train: zero epochs returns the initial parameters") {
  const ModelSpec model = sine_model();
  TaskRegistry reg = sine_registry(4, 20, 3);
  MetaConfig cfg = small_config(Algorithm::kReptile);
  cfg.epochs = 0;
  ParamVector init = init_params(model, cfg.seed);
  Checkpoint ckpt = meta_train(model, init, reg, cfg);
  CHECK(ckpt.params.values == init.values);
  CHECK(ckpt.step == 0);
}

TEST_CASE("meta_train: epoch length tracks auxiliary data volume") {
  TaskRegistry reg = sine_registry(4, 25, 3);  // 100 examples total
  MetaConfig cfg = small_config(Algorithm::kReptile);
  cfg.meta_batch = 2;
  cfg.batch_size = 5;
  cfg.inner.k = 2;
  // ceil(100 / (2*5*2)) = 5
  CHECK(epoch_steps(reg, cfg) == 5);
}

TEST_CASE("meta_train: reptile k=1 sgd outer reproduces joint training") {
  const ModelSpec model = sine_model();
  TaskRegistry reg = sine_registry(1, 40, 17);
  const Task& task = reg.all()[0];

  MetaConfig cfg = small_config(Algorithm::kReptile);
  cfg.inner.k = 1;
  cfg.inner.alpha = 0.05;
  cfg.outer.beta = 0.5;
  cfg.outer.reptile_outer = OuterRule::kSgd;
  cfg.meta_batch = 1;
  cfg.batch_size = 4;
  cfg.epochs = 1;  // ceil(40 / (1*4*1)) = 10 steps
  CHECK(epoch_steps(reg, cfg) == 10);

  ParamVector init = init_params(model, 5);
  Checkpoint ckpt = meta_train(model, init, reg, cfg);

  // Joint-training oracle: plain SGD with learning rate beta*alpha over the
  // same batch sequence.
  ParamVector params = init;
  for (uint64_t step = 0; step < 10; ++step) {
    SupportQuery sq = draw_support_query(task.data, task.spec, 1, cfg.batch_size, cfg.seed,
                                         step * static_cast<uint64_t>(cfg.meta_batch));
    Graph g = forward_loss(model, params, task.spec.head(), sq.support[0]);
    Tensor gt = evaluate(grad(g, kThetaName), {{kThetaName, params.as_tensor()}});
    for (size_t i = 0; i < params.values.size(); ++i)
      params.values[i] -= cfg.outer.beta * cfg.inner.alpha * gt[static_cast<int64_t>(i)];
  }
  CHECK(max_abs_diff(ckpt.params, params) < 1e-12);
}

TEST_CASE("meta_train: sampled task sequence is independent of the algorithm") {
  const ModelSpec model = sine_model(4);
  TaskRegistry reg = sine_registry(6, 20, 23);
  std::map<Algorithm, std::vector<std::string>> sequences;
  for (Algorithm a : {Algorithm::kMaml, Algorithm::kFomaml, Algorithm::kReptile}) {
    MetaConfig cfg = small_config(a);
    cfg.batch_size = 4;
    std::vector<std::string> drawn;
    ProgressSink sink = [&](const StepRecord& r) {
      drawn.insert(drawn.end(), r.task_names.begin(), r.task_names.end());
    };
    meta_train(model, init_params(model, cfg.seed), reg, cfg, sink);
    sequences[a] = std::move(drawn);
  }
  CHECK(sequences[Algorithm::kMaml] == sequences[Algorithm::kFomaml]);
  CHECK(sequences[Algorithm::kMaml] == sequences[Algorithm::kReptile]);
  CHECK_FALSE(sequences[Algorithm::kMaml].empty());
}

TEST_CASE("meta_train: same seed is bit-identical, workers keep it within 1e-12") {
  const ModelSpec model = sine_model(6);
  TaskRegistry reg = sine_registry(4, 30, 29);
  for (Algorithm a : {Algorithm::kFomaml, Algorithm::kReptile}) {
    MetaConfig cfg = small_config(a);
    cfg.batch_size = 5;
    ParamVector init = init_params(model, cfg.seed);
    Checkpoint c1 = meta_train(model, init, reg, cfg);
    Checkpoint c2 = meta_train(model, init, reg, cfg);
    CHECK(c1.params.values == c2.params.values);

    MetaConfig parallel = cfg;
    parallel.workers = 4;
    Checkpoint c3 = meta_train(model, init, reg, parallel);
    CHECK(max_abs_diff(c1.params, c3.params) <= 1e-12);
  }
}

TEST_CASE("meta_train: dropout masks are seeded, runs stay deterministic") {
  ModelSpec model = sine_model(6);
  model.dropout_rate = 0.3;
  TaskRegistry reg = sine_registry(4, 30, 47);
  MetaConfig cfg = small_config(Algorithm::kReptile);
  cfg.batch_size = 5;
  ParamVector init = init_params(model, cfg.seed);
  Checkpoint a = meta_train(model, init, reg, cfg);
  Checkpoint b = meta_train(model, init, reg, cfg);
  CHECK(a.params.values == b.params.values);

  ModelSpec no_dropout = model;
  no_dropout.dropout_rate = 0.0;
  Checkpoint c = meta_train(no_dropout, init, reg, cfg);
  CHECK(a.params.values != c.params.values);  // the masks actually bite
}

TEST_CASE("meta_train: pinned sinusoid run decreases the meta-objective each epoch") {
  const ModelSpec model = sine_model(16);
  TaskRegistry reg = sine_registry(30, 40, 1234);
  MetaConfig cfg;
  cfg.algorithm = Algorithm::kReptile;
  cfg.seed = 3;  // pinned after verifying the monitored run
  cfg.inner.alpha = 1e-3;
  cfg.inner.k = 5;
  cfg.outer.beta = 1e-2;
  cfg.meta_batch = 8;
  cfg.batch_size = 6;
  cfg.epochs = 5;  // ceil(1200/240) = 5 steps per epoch

  std::map<int, std::pair<double, int>> per_epoch;
  ProgressSink sink = [&](const StepRecord& r) {
    per_epoch[r.epoch].first += r.mean_query_loss;
    per_epoch[r.epoch].second += 1;
  };
  meta_train(model, init_params(model, cfg.seed), reg, cfg, sink);
  REQUIRE(per_epoch.size() == 5);
  std::vector<double> means;
  for (const auto& [epoch, sum_count] : per_epoch)
    means.push_back(sum_count.first / sum_count.second);
  for (size_t e = 1; e < means.size(); ++e) CHECK(means[e] < means[e - 1]);
}

TEST_CASE("checkpoint: save and load round-trip is bit-exact") {
  const ModelSpec model = sine_model();
  TaskRegistry reg = sine_registry(2, 20, 31);
  MetaConfig cfg = small_config(Algorithm::kFomaml);
  cfg.batch_size = 4;
  Checkpoint ckpt = meta_train(model, init_params(model, 3), reg, cfg);

  const std::string path = temp_path("ckpt_roundtrip");
  save_checkpoint(ckpt, path);
  Checkpoint loaded = load_checkpoint(path);
  CHECK(loaded.params.values == ckpt.params.values);
  CHECK(loaded.fingerprint == ckpt.fingerprint);
  CHECK(loaded.step == ckpt.step);
  CHECK(loaded.algorithm == ckpt.algorithm);
  CHECK(loaded.seed == ckpt.seed);
  CHECK(loaded.model == ckpt.model);
  std::remove(path.c_str());
}

TEST_CASE("checkpoint: truncation and corruption are detected") {
  const ModelSpec model = sine_model();
  Checkpoint ckpt;
  ckpt.model = model;
  ckpt.params = init_params(model, 9);
  ckpt.fingerprint = "f";
  const std::string path = temp_path("ckpt_corrupt");
  save_checkpoint(ckpt, path);

  const std::string good = file_bytes(path);
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << good.substr(0, good.size() - 1);  // one byte short
  }
  CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("truncated"), Error);

  {
    std::string bad = good;
    bad[0] = 'X';
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << bad;
  }
  CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("magic"), Error);

  {
    // Patch the parameter count; the layout no longer matches.
    std::string bad = good;
    uint32_t meta_len = 0;
    std::memcpy(&meta_len, bad.data() + 8, 4);
    const size_t count_at = 12 + meta_len;
    uint64_t count = 0;
    std::memcpy(&count, bad.data() + count_at, 8);
    ++count;
    std::memcpy(bad.data() + count_at, &count, 8);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << bad;
  }
  CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("parameters"), Error);
  std::remove(path.c_str());
}

TEST_CASE("checkpoint: missing file is an error") {
  CHECK_THROWS_AS(load_checkpoint("/no/such/checkpoint.bin"), Error);
}
