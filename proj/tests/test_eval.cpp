#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "metaopt/eval.hpp"
#include "metaopt/rng.hpp"

using namespace metaopt;

namespace {

// ---------------------------------------------------------------------------
// Independent metric oracles (kept deliberately naive)

struct Confusion {
  double tp = 0, tn = 0, fp = 0, fn = 0;
};

Confusion count_confusion(const std::vector<double>& pred, const std::vector<double>& label,
                          double pos) {
  Confusion c;
  for (size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] == pos && label[i] == pos) c.tp += 1;
    if (pred[i] != pos && label[i] != pos) c.tn += 1;
    if (pred[i] == pos && label[i] != pos) c.fp += 1;
    if (pred[i] != pos && label[i] == pos) c.fn += 1;
  }
  return c;
}

double oracle_mcc(const Confusion& c) {
  const double den =
      std::sqrt((c.tp + c.fp) * (c.tp + c.fn) * (c.tn + c.fp) * (c.tn + c.fn));
  if (den == 0) return 0;
  return (c.tp * c.tn - c.fp * c.fn) / den;
}

double oracle_f1(const Confusion& c) {
  const double precision = c.tp + c.fp > 0 ? c.tp / (c.tp + c.fp) : 0;
  const double recall = c.tp + c.fn > 0 ? c.tp / (c.tp + c.fn) : 0;
  if (precision + recall == 0) return 0;
  return 2 * precision * recall / (precision + recall);
}

double oracle_pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    syy += y[i] * y[i];
    sxy += x[i] * y[i];
  }
  const double cov = sxy - sx * sy / n;
  const double vx = sxx - sx * sx / n;
  const double vy = syy - sy * sy / n;
  return cov / std::sqrt(vx * vy);
}

// O(n^2) average ranks: 1 + (# smaller) + (# equal among earlier-or-later)/2.
std::vector<double> oracle_ranks(const std::vector<double>& x) {
  std::vector<double> r(x.size());
  for (size_t i = 0; i < x.size(); ++i) {
    double smaller = 0, equal = 0;
    for (size_t j = 0; j < x.size(); ++j) {
      smaller += x[j] < x[i];
      equal += x[j] == x[i];
    }
    r[i] = smaller + (equal + 1) / 2.0;
  }
  return r;
}

double oracle_spearman(const std::vector<double>& x, const std::vector<double>& y) {
  return oracle_pearson(oracle_ranks(x), oracle_ranks(y));
}

// ---------------------------------------------------------------------------
// Small tasks and checkpoints for the training-based operations

Checkpoint make_checkpoint(const ModelSpec& model, uint64_t seed) {
  Checkpoint ckpt;
  ckpt.model = model;
  ckpt.params = init_params(model, seed);
  ckpt.fingerprint = "test";
  ckpt.algorithm = Algorithm::kReptile;
  return ckpt;
}

// Binary task, labels by the sign of w.x with a margin.
Task margin_task(int64_t n_train, int64_t n_dev, uint64_t seed, double scale = 1.0) {
  Task t;
  t.spec.name = "sep";
  t.spec.kind = HeadKind::kClassification;
  t.spec.n_classes = 2;
  t.spec.metric = MetricKind::kAccuracy;
  t.spec.role = TaskRole::kTarget;
  Rng rng(seed);
  const std::vector<double> w = {1.0, -0.7};
  auto gen = [&](int64_t n, std::vector<Example>* out) {
    while (static_cast<int64_t>(out->size()) < n) {
      Tensor x = Tensor::zeros({2});
      x[0] = uniform_in(rng, -1, 1) * scale;
      x[1] = uniform_in(rng, -1, 1) * scale;
      const double m = w[0] * x[0] + w[1] * x[1];
      if (std::abs(m) < 0.15 * scale) continue;  // keep a margin
      out->push_back({std::move(x), m > 0 ? 1.0 : 0.0});
    }
  };
  gen(n_train, &t.data.train);
  gen(n_dev, &t.data.dev);
  gen(n_dev, &t.data.test);
  t.spec.n_train = n_train;
  t.spec.n_dev = t.spec.n_test = n_dev;
  return t;
}

// Binary task with XOR labels; not linearly separable.
Task xor_task(int64_t n_train, int64_t n_dev, uint64_t seed) {
  Task t;
  t.spec.name = "xor";
  t.spec.kind = HeadKind::kClassification;
  t.spec.n_classes = 2;
  t.spec.metric = MetricKind::kAccuracy;
  t.spec.role = TaskRole::kTarget;
  Rng rng(seed);
  auto gen = [&](int64_t n, std::vector<Example>* out) {
    while (static_cast<int64_t>(out->size()) < n) {
      Tensor x = Tensor::zeros({2});
      x[0] = uniform_in(rng, -1, 1);
      x[1] = uniform_in(rng, -1, 1);
      if (std::abs(x[0]) < 0.1 || std::abs(x[1]) < 0.1) continue;
      const double label = (x[0] > 0) != (x[1] > 0) ? 1.0 : 0.0;
      out->push_back({std::move(x), label});
    }
  };
  gen(n_train, &t.data.train);
  gen(n_dev, &t.data.dev);
  gen(n_dev, &t.data.test);
  t.spec.n_train = n_train;
  t.spec.n_dev = t.spec.n_test = n_dev;
  return t;
}

ModelSpec head_only_model() {
  ModelSpec m;
  m.input_dim = 2;
  m.hidden_dims = {};
  m.dropout_rate = 0.0;
  m.heads["sep"] = {HeadKind::kClassification, 2};
  return m;
}

ModelSpec hidden_model(const std::string& head) {
  ModelSpec m;
  m.input_dim = 2;
  m.hidden_dims = {8};
  m.activation = Activation::kTanh;
  m.dropout_rate = 0.0;
  m.heads[head] = {HeadKind::kClassification, 2};
  return m;
}

}  // namespace

TEST_CASE("compute_metric: perfect binary predictions give MCC 1 and F1 1") {
  const std::vector<double> y = {0, 1, 1, 0, 1, 0, 0, 1};
  auto mcc = compute_metric(MetricKind::kMatthews, y, y);
  CHECK(*mcc.at("matthews") == 1.0);
  auto f1 = compute_metric(MetricKind::kF1Accuracy, y, y);
  CHECK(*f1.at("f1") == 1.0);
  CHECK(*f1.at("accuracy") == 1.0);
}

TEST_CASE("compute_metric: fixed confusion-matrix instance") {
  // TP=45, FP=5, FN=10, TN=40.
  std::vector<double> pred, label;
  auto emit = [&](int n, double p, double l) {
    for (int i = 0; i < n; ++i) {
      pred.push_back(p);
      label.push_back(l);
    }
  };
  emit(45, 1, 1);
  emit(5, 1, 0);
  emit(10, 0, 1);
  emit(40, 0, 0);
  const double want = (45.0 * 40 - 5.0 * 10) / std::sqrt(50.0 * 55 * 45 * 50);
  CHECK(want == doctest::Approx(0.7035).epsilon(1e-4));
  auto got = compute_metric(MetricKind::kMatthews, pred, label);
  CHECK(*got.at("matthews") == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("compute_metric: affine predictions correlate perfectly") {
  std::vector<double> y, pred;
  Rng rng(7);
  for (int i = 0; i < 20; ++i) {
    y.push_back(uniform_in(rng, -3, 3));
    pred.push_back(2 * y.back() + 3);
  }
  auto got = compute_metric(MetricKind::kPearsonSpearman, pred, y);
  CHECK(*got.at("pearson") == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(*got.at("spearman") == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("compute_metric: constant input yields an undefined marker, not NaN") {
  const std::vector<double> constant = {2, 2, 2, 2};
  const std::vector<double> y = {1, 2, 3, 4};
  auto got = compute_metric(MetricKind::kPearsonSpearman, constant, y);
  CHECK_FALSE(got.at("pearson").has_value());
  CHECK_FALSE(got.at("spearman").has_value());
  // A fully degenerate confusion matrix gives MCC 0 by convention.
  const std::vector<double> ones = {1, 1, 1};
  auto mcc = compute_metric(MetricKind::kMatthews, ones, ones);
  CHECK(*mcc.at("matthews") == 0.0);
}

TEST_CASE("compute_metric: mismatched or too-short inputs are errors") {
  const std::vector<double> a = {1, 0};
  const std::vector<double> b = {1, 0, 1};
  CHECK_THROWS_AS(compute_metric(MetricKind::kAccuracy, a, b), Error);
  const std::vector<double> one = {1};
  CHECK_THROWS_AS(compute_metric(MetricKind::kAccuracy, one, one), Error);
}

TEST_CASE("compute_metric: fifty random instances against brute-force oracles") {
  for (uint64_t trial = 0; trial < 50; ++trial) {
    Rng rng(500 + trial);
    const int64_t n = 10 + static_cast<int64_t>(uniform_index(rng, 40));
    std::vector<double> pred_cls, label_cls, pred_reg, label_reg;
    for (int64_t i = 0; i < n; ++i) {
      pred_cls.push_back(static_cast<double>(uniform_index(rng, 2)));
      label_cls.push_back(static_cast<double>(uniform_index(rng, 2)));
      // Coarse grid so ties actually occur.
      pred_reg.push_back(std::round(uniform_in(rng, -5, 5)));
      label_reg.push_back(uniform_in(rng, -5, 5));
    }
    const Confusion c = count_confusion(pred_cls, label_cls, 1.0);

    auto mcc = compute_metric(MetricKind::kMatthews, pred_cls, label_cls);
    CHECK(std::abs(*mcc.at("matthews") - oracle_mcc(c)) < 1e-10);

    auto f1 = compute_metric(MetricKind::kF1Accuracy, pred_cls, label_cls);
    CHECK(std::abs(*f1.at("f1") - oracle_f1(c)) < 1e-10);
    CHECK(std::abs(*f1.at("accuracy") - (c.tp + c.tn) / static_cast<double>(n)) < 1e-10);

    auto corr = compute_metric(MetricKind::kPearsonSpearman, pred_reg, label_reg);
    CHECK(std::abs(*corr.at("pearson") - oracle_pearson(pred_reg, label_reg)) < 1e-10);
    CHECK(std::abs(*corr.at("spearman") - oracle_spearman(pred_reg, label_reg)) < 1e-10);
  }
}

TEST_CASE("compute_metric: invariance under simultaneous permutation") {
  Rng rng(41);
  std::vector<double> pred, label;
  for (int i = 0; i < 25; ++i) {
    pred.push_back(static_cast<double>(uniform_index(rng, 2)));
    label.push_back(static_cast<double>(uniform_index(rng, 2)));
  }
  std::vector<size_t> perm(pred.size());
  std::iota(perm.begin(), perm.end(), 0);
  for (size_t i = perm.size() - 1; i > 0; --i)
    std::swap(perm[i], perm[static_cast<size_t>(uniform_index(rng, static_cast<int64_t>(i) + 1))]);
  std::vector<double> pred2, label2;
  for (size_t i : perm) {
    pred2.push_back(pred[i]);
    label2.push_back(label[i]);
  }
  for (MetricKind kind : {MetricKind::kAccuracy, MetricKind::kF1Accuracy, MetricKind::kMatthews}) {
    auto a = compute_metric(kind, pred, label);
    auto b = compute_metric(kind, pred2, label2);
    CHECK(a == b);
  }
}

TEST_CASE("compute_metric: class swap keeps MCC and accuracy, can move F1") {
  const std::vector<double> pred = {1, 1, 0, 1, 0, 0, 1, 0, 1, 1};
  const std::vector<double> label = {1, 0, 0, 1, 1, 0, 1, 0, 0, 1};
  std::vector<double> pred_sw, label_sw;
  for (size_t i = 0; i < pred.size(); ++i) {
    pred_sw.push_back(1 - pred[i]);
    label_sw.push_back(1 - label[i]);
  }
  CHECK(*compute_metric(MetricKind::kMatthews, pred, label).at("matthews") ==
        doctest::Approx(*compute_metric(MetricKind::kMatthews, pred_sw, label_sw).at("matthews"))
            .epsilon(1e-12));
  CHECK(*compute_metric(MetricKind::kAccuracy, pred, label).at("accuracy") ==
        *compute_metric(MetricKind::kAccuracy, pred_sw, label_sw).at("accuracy"));
  // On this instance the positive class is rare enough that F1 moves.
  CHECK(*compute_metric(MetricKind::kF1Accuracy, pred, label).at("f1") !=
        *compute_metric(MetricKind::kF1Accuracy, pred_sw, label_sw).at("f1"));
}

TEST_CASE("compute_metric: spearman is invariant under monotone transforms") {
  Rng rng(43);
  std::vector<double> pred, label;
  for (int i = 0; i < 30; ++i) {
    pred.push_back(uniform_in(rng, -2, 2));
    label.push_back(uniform_in(rng, -2, 2));
  }
  std::vector<double> warped;
  for (double p : pred) warped.push_back(std::exp(3 * p) - 1);  // strictly increasing
  auto a = compute_metric(MetricKind::kPearsonSpearman, pred, label);
  auto b = compute_metric(MetricKind::kPearsonSpearman, warped, label);
  CHECK(*a.at("spearman") == doctest::Approx(*b.at("spearman")).epsilon(1e-12));
}

TEST_CASE("finetune: a separable task reaches dev accuracy 1.0") {
  const ModelSpec model = head_only_model();
  Checkpoint ckpt = make_checkpoint(model, 11);
  Task task = margin_task(60, 40, 101);
  FinetuneGrid grid;
  grid.learning_rates = {0.05};
  grid.epoch_choices = {60};
  auto [params, report] = finetune(ckpt, task, grid, 1);
  CHECK(*report.dev.at("accuracy") == 1.0);
  CHECK(report.learning_rate == 0.05);
  CHECK(report.epochs == 60);
}

TEST_CASE("finetune: selection skips the degenerate grid point") {
  // A saturating MLP at learning rate 1e3 cannot fit anything nonlinear.
  const ModelSpec model = hidden_model("xor");
  Checkpoint ckpt = make_checkpoint(model, 13);
  Task task = xor_task(200, 100, 103);
  FinetuneGrid grid;
  grid.learning_rates = {1e3, 0.05};  // the first one is hopeless
  grid.epoch_choices = {40};
  auto [params, report] = finetune(ckpt, task, grid, 2);
  CHECK(report.learning_rate == 0.05);
  CHECK(*report.dev.at("accuracy") > 0.8);
}

TEST_CASE("finetune: dev-best selection equals the brute-force maximum") {
  const ModelSpec model = head_only_model();
  Checkpoint ckpt = make_checkpoint(model, 17);
  Task task = margin_task(40, 30, 107);
  FinetuneGrid grid;
  grid.learning_rates = {0.002, 0.05};
  grid.epoch_choices = {2, 25};
  const uint64_t seed = 3;
  auto [params, report] = finetune(ckpt, task, grid, seed);

  // Re-run every grid point independently.
  auto [ext_model, start] =
      ensure_head(ckpt.model, ckpt.params, task.spec.head(), task.spec.head_spec(), seed);
  double best = -1;
  double best_lr = 0;
  int best_epochs = 0;
  for (double lr : grid.learning_rates)
    for (int epochs : grid.epoch_choices) {
      TrainSettings s;
      s.learning_rate = lr;
      s.epochs = epochs;
      s.batch_size = grid.batch_size;
      s.warmup_ratio = grid.warmup_ratio;
      s.seed = seed;
      ParamVector trained =
          train_supervised(ext_model, start, task.spec.head(), task.data.train, s);
      const auto preds = predict(ext_model, trained, task.spec.head(), task.data.dev);
      const double acc =
          *compute_metric(MetricKind::kAccuracy, preds, labels_of(task.data.dev)).at("accuracy");
      if (acc > best) {
        best = acc;
        best_lr = lr;
        best_epochs = epochs;
      }
    }
  CHECK(report.learning_rate == best_lr);
  CHECK(report.epochs == best_epochs);
  CHECK(*report.dev.at("accuracy") == doctest::Approx(best).epsilon(1e-12));
}

TEST_CASE("stratified_subsample: balanced binary task keeps exact class counts") {
  Task task = margin_task(0, 2, 109);
  // Construct an exactly balanced 1000-example split.
  Rng rng(3);
  for (int64_t i = 0; i < 1000; ++i) {
    Tensor x = Tensor::zeros({2});
    x[0] = uniform_in(rng, -1, 1);
    x[1] = uniform_in(rng, -1, 1);
    task.data.train.push_back({std::move(x), i < 500 ? 0.0 : 1.0});
  }
  auto sampled = stratified_subsample(task, 0.1, 5);
  REQUIRE(sampled.has_value());
  int64_t zeros = 0, ones = 0;
  for (const Example& e : *sampled) (e.label == 0.0 ? zeros : ones)++;
  CHECK(zeros == 50);
  CHECK(ones == 50);

  // A fraction too small for the rare class is refused with a note.
  Task skewed = task;
  skewed.data.train.resize(502);  // 500 zeros, 2 ones
  std::string note;
  CHECK_FALSE(stratified_subsample(skewed, 0.1, 5, &note).has_value());
  CHECK(note.find("class") != std::string::npos);
}

TEST_CASE("transfer_sweep: fraction one equals plain finetune, runs reproduce") {
  const ModelSpec model = head_only_model();
  Checkpoint ckpt = make_checkpoint(model, 19);
  Task task = margin_task(50, 30, 113);
  FinetuneGrid grid;
  grid.learning_rates = {0.05};
  grid.epoch_choices = {15};

  auto reports = transfer_sweep(ckpt, task, {0.5, 1.0}, grid, {4});
  REQUIRE(reports.size() == 2);
  auto [params, plain] = finetune(ckpt, task, grid, 4);
  CHECK(reports[1].fraction == 1.0);
  CHECK(reports[1].dev == plain.dev);
  CHECK(reports[1].test == plain.test);

  auto again = transfer_sweep(ckpt, task, {0.5, 1.0}, grid, {4});
  for (size_t i = 0; i < reports.size(); ++i)
    CHECK(report_to_json(reports[i]) == report_to_json(again[i]));
}

TEST_CASE("transfer_sweep: impossible fractions are reported as skipped") {
  const ModelSpec model = head_only_model();
  Checkpoint ckpt = make_checkpoint(model, 23);
  Task task = margin_task(30, 20, 127);
  FinetuneGrid grid;
  grid.learning_rates = {0.05};
  grid.epoch_choices = {5};
  auto reports = transfer_sweep(ckpt, task, {0.001}, grid, {1});
  REQUIRE(reports.size() == 1);
  CHECK(reports[0].status == "skipped");
  CHECK_FALSE(reports[0].note.empty());
}

TEST_CASE("probe: the encoder block never moves") {
  const ModelSpec model = hidden_model("sep");
  Checkpoint ckpt = make_checkpoint(model, 29);
  Task task = margin_task(60, 30, 131);
  auto [params, report] = probe(ckpt, task, 10, 0.1);

  const int64_t enc = encoder_param_count(*params.layout);
  REQUIRE(enc > 0);
  for (int64_t i = 0; i < enc; ++i)
    CHECK(params.values[static_cast<size_t>(i)] == ckpt.params.values[static_cast<size_t>(i)]);
  // And the head did move.
  CHECK(params.values != ckpt.params.values);
}

TEST_CASE("probe: a linearly realizable task probes to high accuracy") {
  const ModelSpec model = hidden_model("sep");
  Checkpoint ckpt = make_checkpoint(model, 31);
  // Small feature scale keeps the random tanh encoder near-linear.
  Task task = margin_task(400, 200, 137, 0.3);
  auto [params, report] = probe(ckpt, task, 150, 0.2);
  CHECK(*report.dev.at("accuracy") >= 0.99);
}

TEST_CASE("probe: head-only stays at or below full fine-tuning on a nonlinear task") {
  const ModelSpec model = hidden_model("xor");
  Checkpoint ckpt = make_checkpoint(model, 37);
  Task task = xor_task(300, 150, 139);
  auto [probe_params, probe_report] = probe(ckpt, task, 60, 0.1);

  FinetuneGrid grid;
  grid.learning_rates = {0.05};
  grid.epoch_choices = {60};
  auto [fine_params, fine_report] = finetune(ckpt, task, grid, 5);
  CHECK(*fine_report.dev.at("accuracy") > 0.8);  // the MLP actually learns it
  CHECK(*probe_report.dev.at("accuracy") <= *fine_report.dev.at("accuracy"));
}

TEST_CASE("reports: csv layout and summary statistics") {
  MetricReport r1;
  r1.task = "t";
  r1.metric = MetricKind::kAccuracy;
  r1.dev["accuracy"] = 0.5;
  r1.test["accuracy"] = 0.25;
  r1.algorithm = "reptile";
  r1.seed = 1;
  r1.fraction = 0.1;
  MetricReport r2 = r1;
  r2.seed = 2;
  r2.dev["accuracy"] = 0.7;

  const std::string csv = reports_to_csv({r1, r2});
  CHECK(csv.find("task,algorithm,fraction,seed,metric,dev,test") == 0);
  CHECK(csv.find("t,reptile,0.1,1,accuracy,0.5,0.25") != std::string::npos);

  const std::string summary = transfer_summary_csv({r1, r2});
  CHECK(summary.find("fraction,mean,stddev") == 0);
  CHECK(summary.find("0.1,0.6,") != std::string::npos);

  const std::string json = report_to_json(r1);
  CHECK(json.find("\"accuracy\":0.5") != std::string::npos);
}
