#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "metaopt/featurizer.hpp"
#include "metaopt/model.hpp"
#include "metaopt/rng.hpp"

using namespace metaopt;

namespace {

FeaturizerSpec small_featurizer(PairMode mode = PairMode::kConcatPlusProduct) {
  FeaturizerSpec f;
  f.n_buckets = 64;
  f.ngram_orders = {1, 2};
  f.pair_mode = mode;
  return f;
}

double block_norm(const Tensor& t, int64_t block, int64_t width) {
  double s = 0.0;
  for (int64_t i = 0; i < width; ++i) s += t[block * width + i] * t[block * width + i];
  return std::sqrt(s);
}

ModelSpec small_model(int64_t input_dim = 3) {
  ModelSpec m;
  m.input_dim = input_dim;
  m.hidden_dims = {5, 4};
  m.activation = Activation::kTanh;
  m.dropout_rate = 0.0;
  m.heads["cls"] = {HeadKind::kClassification, 3};
  m.heads["reg"] = {HeadKind::kRegression, 2};
  return m;
}

Batch random_batch(int64_t n, int64_t dim, int64_t n_classes, Rng& rng) {
  Batch b;
  b.features = Tensor::zeros({n, dim});
  for (int64_t i = 0; i < b.features.numel(); ++i) b.features[i] = uniform_in(rng, -1, 1);
  for (int64_t i = 0; i < n; ++i)
    b.labels.push_back(n_classes > 0 ? static_cast<double>(uniform_index(rng, n_classes))
                                     : uniform_unit(rng));
  return b;
}

}  // namespace

TEST_CASE("featurize: empty string maps to the zero vector") {
  const auto spec = small_featurizer();
  Tensor v = featurize(spec, "");
  for (int64_t i = 0; i < v.numel(); ++i) CHECK(v[i] == 0.0);
}

TEST_CASE("featurize: identical pair gives identical blocks and squared product") {
  const auto spec = small_featurizer(PairMode::kConcatPlusProduct);
  const std::string s = "the quick brown fox jumps over the lazy dog";
  Tensor v = featurize(spec, s, s);
  const int64_t n = spec.n_buckets;
  for (int64_t i = 0; i < n; ++i) {
    CHECK(v[i] == v[n + i]);
    CHECK(v[2 * n + i] == v[i] * v[i]);
  }
}

TEST_CASE("featurize: two calls are bit-identical") {
  const auto spec = small_featurizer();
  Tensor a = featurize(spec, "Sentence ONE, with Punctuation!", "and a second sentence");
  Tensor b = featurize(spec, "Sentence ONE, with Punctuation!", "and a second sentence");
  REQUIRE(a.numel() == b.numel());
  for (int64_t i = 0; i < a.numel(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("featurize: non-empty blocks have unit norm, empty blocks zero") {
  const auto spec = small_featurizer(PairMode::kConcat);
  Tensor v = featurize(spec, "only one sentence here");
  CHECK(block_norm(v, 0, spec.n_buckets) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(block_norm(v, 1, spec.n_buckets) == 0.0);

  Tensor w = featurize(spec, "first part", "second part");
  CHECK(block_norm(w, 0, spec.n_buckets) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(block_norm(w, 1, spec.n_buckets) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("featurize: tokenization truncates to max_tokens") {
  FeaturizerSpec spec = small_featurizer();
  spec.max_tokens = 3;
  const auto tokens = tokenize("a b c d e f", spec.max_tokens);
  CHECK(tokens == std::vector<std::string>{"a", "b", "c"});
}

TEST_CASE("init_params: deterministic per seed, biases zero") {
  const ModelSpec m = small_model();
  ParamVector a = init_params(m, 42);
  ParamVector b = init_params(m, 42);
  ParamVector c = init_params(m, 43);
  CHECK(a.values == b.values);
  CHECK(a.values != c.values);
  for (const auto& e : a.layout->entries()) {
    if (!e.name.ends_with(".b")) continue;
    Tensor bias = a.block(e.name);
    for (int64_t i = 0; i < bias.numel(); ++i) CHECK(bias[i] == 0.0);
  }
}

TEST_CASE("init_params: weight spread matches the scaled uniform") {
  ModelSpec m;
  m.input_dim = 100;
  m.hidden_dims = {100};
  m.dropout_rate = 0.0;
  m.heads["h"] = {HeadKind::kRegression, 2};
  ParamVector p = init_params(m, 7);
  Tensor w = p.block("enc.0.W");
  double mean = 0.0;
  for (int64_t i = 0; i < w.numel(); ++i) mean += w[i];
  mean /= static_cast<double>(w.numel());
  double var = 0.0;
  for (int64_t i = 0; i < w.numel(); ++i) var += (w[i] - mean) * (w[i] - mean);
  var /= static_cast<double>(w.numel() - 1);
  // Uniform on +-1/sqrt(100) has standard deviation 0.1/sqrt(3).
  const double want = 0.1 / std::sqrt(3.0);
  CHECK(std::abs(std::sqrt(var) - want) / want < 0.10);
}

TEST_CASE("forward_loss: uniform logits give ln(n_classes)") {
  ModelSpec m = small_model();
  m.heads["cls"] = {HeadKind::kClassification, 2};
  ParamVector p = make_params(layout_for(m));  // all zeros -> logits all zero
  Rng rng(3);
  Batch batch = random_batch(6, 3, 2, rng);
  Graph g = forward_loss(m, p, "cls", batch);
  const double loss = evaluate(g, {{kThetaName, p.as_tensor()}}).scalar_value();
  CHECK(loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("forward_loss: regression head fitting the labels exactly gives zero") {
  ModelSpec m;
  m.input_dim = 2;
  m.hidden_dims = {};
  m.dropout_rate = 0.0;
  m.heads["reg"] = {HeadKind::kRegression, 2};
  ParamVector p = make_params(layout_for(m));
  // y = x0: head weight [1, 0], bias 0.
  p.set_block("head.reg.W", Tensor({2, 1}, {1.0, 0.0}));
  Batch batch;
  batch.features = Tensor({3, 2}, {0.1, 9.0, 0.5, -2.0, 0.9, 4.0});
  batch.labels = {0.1, 0.5, 0.9};
  Graph g = forward_loss(m, p, "reg", batch);
  CHECK(evaluate(g, {{kThetaName, p.as_tensor()}}).scalar_value() == 0.0);
}

TEST_CASE("forward_loss: gradient matches finite differences") {
  Rng rng(11);
  const ModelSpec m = small_model();
  ParamVector p = init_params(m, 5);
  for (const char* head : {"cls", "reg"}) {
    Batch batch = random_batch(4, 3, std::string(head) == "cls" ? 3 : 0, rng);
    Graph g = forward_loss(m, p, head, batch);
    Graph dg = grad(g, kThetaName);
    Tensor analytic = evaluate(dg, {{kThetaName, p.as_tensor()}});

    Bindings bind = {{kThetaName, p.as_tensor()}};
    const double step = 1e-6;
    double worst = 0.0;
    for (int64_t i = 0; i < p.size(); ++i) {
      Tensor hi = p.as_tensor(), lo = p.as_tensor();
      hi[i] += step;
      lo[i] -= step;
      bind[kThetaName] = hi;
      const double fp = evaluate(g, bind).scalar_value();
      bind[kThetaName] = lo;
      const double fm = evaluate(g, bind).scalar_value();
      const double fd = (fp - fm) / (2 * step);
      worst = std::max(worst,
                       std::abs(analytic[i] - fd) / std::max(1.0, std::abs(fd)));
    }
    CHECK(worst < 1e-6);
  }
}

TEST_CASE("forward_loss: hessian-vector products match finite differences of the gradient") {
  Rng rng(19);
  const ModelSpec m = small_model();
  ParamVector p = init_params(m, 27);
  Batch batch = random_batch(4, 3, 3, rng);
  Graph g = forward_loss(m, p, "cls", batch);

  Tensor direction = Tensor::zeros({p.size()});
  for (int64_t i = 0; i < p.size(); ++i) direction[i] = uniform_in(rng, -1, 1);
  Tensor hv = grad2(g, kThetaName, direction, {{kThetaName, p.as_tensor()}});

  Graph dg = grad(g, kThetaName);
  const double step = 1e-5;
  Tensor hi = p.as_tensor(), lo = p.as_tensor();
  for (int64_t i = 0; i < p.size(); ++i) {
    hi[i] += step * direction[i];
    lo[i] -= step * direction[i];
  }
  Tensor gp = evaluate(dg, {{kThetaName, hi}});
  Tensor gm = evaluate(dg, {{kThetaName, lo}});
  double worst = 0.0;
  for (int64_t i = 0; i < p.size(); ++i) {
    const double fd = (gp[i] - gm[i]) / (2 * step);
    worst = std::max(worst, std::abs(hv[i] - fd) / std::max(1.0, std::abs(fd)));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("forward_loss: permutation invariance of the batch mean") {
  Rng rng(13);
  const ModelSpec m = small_model();
  ParamVector p = init_params(m, 9);
  Batch batch = random_batch(5, 3, 3, rng);
  Batch shuffled;
  const std::vector<int64_t> perm = {4, 2, 0, 3, 1};
  shuffled.features = Tensor::zeros({5, 3});
  for (int64_t i = 0; i < 5; ++i) {
    for (int64_t j = 0; j < 3; ++j)
      shuffled.features.at(i, j) = batch.features.at(perm[static_cast<size_t>(i)], j);
    shuffled.labels.push_back(batch.labels[static_cast<size_t>(perm[static_cast<size_t>(i)])]);
  }
  const double a =
      evaluate(forward_loss(m, p, "cls", batch), {{kThetaName, p.as_tensor()}}).scalar_value();
  const double b =
      evaluate(forward_loss(m, p, "cls", shuffled), {{kThetaName, p.as_tensor()}}).scalar_value();
  CHECK(std::abs(a - b) < 1e-12);
}

TEST_CASE("forward_loss: dropout rate zero equals no dropout bit-exactly") {
  Rng rng(17);
  ModelSpec m = small_model();
  m.dropout_rate = 0.0;
  ParamVector p = init_params(m, 21);
  Batch batch = random_batch(4, 3, 3, rng);
  DropoutMasks none = make_dropout_masks(m, 4, 99);
  CHECK(none.empty());  // rate 0 produces no masks at all

  // Explicit all-ones masks are also bit-identical to the mask-free path.
  DropoutMasks ones;
  for (int64_t d : m.hidden_dims) ones.push_back(Tensor::full({4, d}, 1.0));
  const double without =
      evaluate(forward_loss(m, p, "cls", batch), {{kThetaName, p.as_tensor()}}).scalar_value();
  const double with_ones =
      evaluate(forward_loss(m, p, "cls", batch, &ones), {{kThetaName, p.as_tensor()}})
          .scalar_value();
  CHECK(without == with_ones);
}

TEST_CASE("forward_loss: label out of range and layout mismatch are errors") {
  const ModelSpec m = small_model();
  ParamVector p = init_params(m, 1);
  Batch bad;
  bad.features = Tensor::zeros({1, 3});
  bad.labels = {7.0};
  CHECK_THROWS_AS(forward_loss(m, p, "cls", bad), Error);

  ModelSpec other = small_model(8);
  ParamVector wrong = init_params(other, 1);
  Batch ok;
  ok.features = Tensor::zeros({1, 3});
  ok.labels = {0.0};
  CHECK_THROWS_AS(forward_loss(m, wrong, "cls", ok), Error);
}

TEST_CASE("ensure_head: preserves old blocks, adds a fresh head") {
  const ModelSpec m = small_model();
  ParamVector p = init_params(m, 33);
  auto [extended, q] = ensure_head(m, p, "new_task", {HeadKind::kClassification, 4}, 77);
  CHECK(extended.heads.count("new_task") == 1);
  for (const auto& e : p.layout->entries()) {
    Tensor before = p.block(e.name);
    Tensor after = q.block(e.name);
    for (int64_t i = 0; i < before.numel(); ++i) CHECK(before[i] == after[i]);
  }
  CHECK(q.size() == p.size() + 4 * 4 + 4);

  // Present head: unchanged spec and values.
  auto [same, r] = ensure_head(m, p, "cls", {HeadKind::kClassification, 3}, 77);
  CHECK(same == m);
  CHECK(r.values == p.values);
}
