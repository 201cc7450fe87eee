#include "metaopt/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "metaopt/rng.hpp"

namespace metaopt {

ParamVector train_supervised(const ModelSpec& model, const ParamVector& start,
                             const std::string& head, const std::vector<Example>& train,
                             const TrainSettings& settings,
                             const std::vector<char>* update_mask) {
  require(!train.empty(), "train: empty train split");
  require(settings.epochs >= 0, "train: negative epoch count");
  if (update_mask)
    require(static_cast<int64_t>(update_mask->size()) == start.size(),
            "train: update mask length does not match parameters");

  OuterConfig outer;
  outer.beta = settings.learning_rate;
  outer.warmup_ratio = settings.warmup_ratio;

  const int64_t n = static_cast<int64_t>(train.size());
  const int64_t batches_per_epoch = (n + settings.batch_size - 1) / settings.batch_size;
  const int64_t total_steps = batches_per_epoch * settings.epochs;

  ParamVector params = start;
  AdamState adam = AdamState::zeros(params.size());
  int64_t step = 0;
  for (int epoch = 0; epoch < settings.epochs; ++epoch) {
    Rng rng(mix_seed(mix_seed(settings.seed, static_cast<uint64_t>(epoch)), 0x7ea1));
    std::vector<int64_t> perm(static_cast<size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    for (int64_t i = n - 1; i > 0; --i)
      std::swap(perm[static_cast<size_t>(i)],
                perm[static_cast<size_t>(uniform_index(rng, i + 1))]);
    for (int64_t b = 0; b < batches_per_epoch; ++b, ++step) {
      const int64_t begin = b * settings.batch_size;
      const int64_t end = std::min(n, begin + settings.batch_size);
      Batch batch = make_batch(
          train, std::vector<int64_t>(perm.begin() + begin, perm.begin() + end));
      DropoutMasks masks =
          make_dropout_masks(model, batch.size(), mix_seed(settings.seed, 0xd0 + step));

      Graph g = forward_loss(model, params, head, batch, masks.empty() ? nullptr : &masks);
      NodeId grad = g.grad_node(g.root(), g.find_placeholder(kThetaName));
      const NodeId wanted[] = {grad};
      Tensor gt = std::move(evaluate_nodes(g, {{kThetaName, params.as_tensor()}}, wanted)[0]);
      require(gt.all_finite(), "train: diverged (non-finite gradient) at step " +
                                   std::to_string(step));
      ParamVector gradient = params_from_tensor(gt, params.layout);
      if (update_mask)
        for (size_t i = 0; i < gradient.values.size(); ++i)
          if (!(*update_mask)[i]) gradient.values[i] = 0.0;

      const double position =
          total_steps == 0 ? 1.0 : static_cast<double>(step + 1) / static_cast<double>(total_steps);
      auto [next, state] = adam_step(adam, params, gradient, outer, position);
      if (update_mask) {
        // Frozen entries are copied back verbatim.
        for (size_t i = 0; i < next.values.size(); ++i)
          if (!(*update_mask)[i]) next.values[i] = params.values[i];
      }
      params = std::move(next);
      adam = std::move(state);
      require(params.all_finite(), "train: diverged (non-finite parameters) at step " +
                                       std::to_string(step));
    }
  }
  return params;
}

std::vector<double> predict(const ModelSpec& model, const ParamVector& params,
                            const std::string& head, const std::vector<Example>& examples) {
  require(!examples.empty(), "predict: empty split");
  const auto& head_spec = model.heads.at(head);

  // Reuse the loss graph machinery by evaluating the pre-loss output node:
  // build the loss graph, then read the head output it was computed from.
  Batch batch = full_batch(examples);
  Graph g;
  NodeId theta = g.placeholder(kThetaName, {params.size()});
  NodeId loss = append_forward_loss(g, theta, model, head, batch);
  // The head output feeds the final loss node directly.
  NodeId output = g.node(loss).inputs[0];
  const NodeId wanted[] = {output};
  Tensor out = std::move(evaluate_nodes(g, {{kThetaName, params.as_tensor()}}, wanted)[0]);

  std::vector<double> preds;
  preds.reserve(examples.size());
  const int64_t rows = out.dim(0);
  if (head_spec.kind == HeadKind::kClassification) {
    for (int64_t i = 0; i < rows; ++i) {
      int64_t best = 0;
      for (int64_t c = 1; c < out.dim(1); ++c)
        if (out.at(i, c) > out.at(i, best)) best = c;
      preds.push_back(static_cast<double>(best));
    }
  } else {
    for (int64_t i = 0; i < rows; ++i) preds.push_back(out.at(i, 0));
  }
  return preds;
}

std::vector<double> labels_of(const std::vector<Example>& examples) {
  std::vector<double> out;
  out.reserve(examples.size());
  for (const Example& e : examples) out.push_back(e.label);
  return out;
}

namespace {

MetricValues split_metric(const ModelSpec& model, const ParamVector& params, const Task& task,
                          const std::vector<Example>& split) {
  if (split.size() < 2) return {};
  const auto preds = predict(model, params, task.spec.head(), split);
  return compute_metric(task.spec.metric, preds, labels_of(split), task.spec.positive_class);
}

}  // namespace

std::pair<ParamVector, MetricReport> finetune(const Checkpoint& ckpt, const Task& task,
                                              const FinetuneGrid& grid, uint64_t seed) {
  grid.validate();
  require(!task.data.train.empty(), "finetune: task '" + task.spec.name + "' has no train data");
  auto [model, start] =
      ensure_head(ckpt.model, ckpt.params, task.spec.head(), task.spec.head_spec(), seed);

  MetricReport report;
  report.task = task.spec.name;
  report.metric = task.spec.metric;
  report.algorithm = std::string(algorithm_name(ckpt.algorithm));
  report.seed = seed;

  ParamVector best_params = start;
  double best_score = -std::numeric_limits<double>::infinity();
  bool have_best = false;
  for (double lr : grid.learning_rates) {
    for (int epochs : grid.epoch_choices) {
      TrainSettings settings;
      settings.learning_rate = lr;
      settings.epochs = epochs;
      settings.batch_size = grid.batch_size;
      settings.warmup_ratio = grid.warmup_ratio;
      settings.seed = seed;
      double score = -std::numeric_limits<double>::infinity();
      ParamVector trained = start;
      MetricValues dev;
      try {
        trained = train_supervised(model, start, task.spec.head(), task.data.train, settings);
        dev = split_metric(model, trained, task, task.data.dev);
        score = primary_metric(task.spec.metric, dev);
      } catch (const Error&) {
        // Diverged grid point: ranked below every finished one.
      }
      if (!have_best || score > best_score) {
        have_best = true;
        best_score = score;
        best_params = std::move(trained);
        report.dev = std::move(dev);
        report.learning_rate = lr;
        report.epochs = epochs;
      }
    }
  }
  report.test = split_metric(model, best_params, task, task.data.test);
  return {std::move(best_params), std::move(report)};
}

std::optional<std::vector<Example>> stratified_subsample(const Task& task, double fraction,
                                                         uint64_t seed, std::string* note) {
  const auto& train = task.data.train;
  std::vector<Example> out;
  if (task.spec.kind == HeadKind::kClassification) {
    std::map<int64_t, std::vector<int64_t>> by_class;
    for (size_t i = 0; i < train.size(); ++i)
      by_class[static_cast<int64_t>(train[i].label)].push_back(static_cast<int64_t>(i));
    std::vector<int64_t> keep;
    for (auto& [cls, indices] : by_class) {
      const auto m = static_cast<int64_t>(
          std::llround(fraction * static_cast<double>(indices.size())));
      if (m == 0) {
        if (note)
          *note = "fraction " + std::to_string(fraction) + " leaves class " +
                  std::to_string(cls) + " empty";
        return std::nullopt;
      }
      Rng rng(mix_seed(mix_seed(seed, static_cast<uint64_t>(cls)), 0x5b5));
      for (int64_t i = static_cast<int64_t>(indices.size()) - 1; i > 0; --i)
        std::swap(indices[static_cast<size_t>(i)],
                  indices[static_cast<size_t>(uniform_index(rng, i + 1))]);
      keep.insert(keep.end(), indices.begin(), indices.begin() + m);
    }
    std::sort(keep.begin(), keep.end());
    for (int64_t i : keep) out.push_back(train[static_cast<size_t>(i)]);
    return out;
  }
  const auto m =
      static_cast<int64_t>(std::llround(fraction * static_cast<double>(train.size())));
  if (m == 0) {
    if (note) *note = "fraction " + std::to_string(fraction) + " leaves the train split empty";
    return std::nullopt;
  }
  std::vector<int64_t> indices(train.size());
  std::iota(indices.begin(), indices.end(), 0);
  Rng rng(mix_seed(seed, 0x5b5));
  for (int64_t i = static_cast<int64_t>(indices.size()) - 1; i > 0; --i)
    std::swap(indices[static_cast<size_t>(i)],
              indices[static_cast<size_t>(uniform_index(rng, i + 1))]);
  indices.resize(static_cast<size_t>(m));
  std::sort(indices.begin(), indices.end());
  for (int64_t i : indices) out.push_back(train[static_cast<size_t>(i)]);
  return out;
}

std::vector<MetricReport> transfer_sweep(const Checkpoint& ckpt, const Task& task,
                                         const std::vector<double>& fractions,
                                         const FinetuneGrid& grid,
                                         const std::vector<uint64_t>& seeds) {
  require(!fractions.empty() && !seeds.empty(), "transfer: need fractions and seeds");
  for (double f : fractions)
    require(f > 0.0 && f <= 1.0, "transfer: fraction " + std::to_string(f) + " not in (0, 1]");

  std::vector<MetricReport> reports;
  for (double fraction : fractions) {
    for (uint64_t seed : seeds) {
      if (fraction >= 1.0) {
        auto [params, report] = finetune(ckpt, task, grid, seed);
        report.fraction = 1.0;
        reports.push_back(std::move(report));
        continue;
      }
      Task reduced;
      reduced.spec = task.spec;
      reduced.data.dev = task.data.dev;
      reduced.data.test = task.data.test;
      std::string note;
      auto sampled = stratified_subsample(task, fraction, seed, &note);
      if (sampled) reduced.data.train = std::move(*sampled);
      if (!sampled) {
        MetricReport skipped;
        skipped.task = task.spec.name;
        skipped.metric = task.spec.metric;
        skipped.algorithm = std::string(algorithm_name(ckpt.algorithm));
        skipped.seed = seed;
        skipped.fraction = fraction;
        skipped.status = "skipped";
        skipped.note = std::move(note);
        reports.push_back(std::move(skipped));
        continue;
      }
      reduced.spec.n_train = static_cast<int64_t>(reduced.data.train.size());
      auto [params, report] = finetune(ckpt, reduced, grid, seed);
      report.fraction = fraction;
      reports.push_back(std::move(report));
    }
  }
  return reports;
}

std::pair<ParamVector, MetricReport> probe(const Checkpoint& ckpt, const Task& task,
                                           int probe_epochs, double learning_rate,
                                           uint64_t seed) {
  require(!task.data.train.empty(), "probe: task '" + task.spec.name + "' has no train data");
  auto [model, start] =
      ensure_head(ckpt.model, ckpt.params, task.spec.head(), task.spec.head_spec(), seed);

  // Only the head block trains.
  std::vector<char> mask(static_cast<size_t>(start.size()), 0);
  for (const auto& e : start.layout->entries())
    if (e.name == "head." + task.spec.head() + ".W" || e.name == "head." + task.spec.head() + ".b")
      std::fill(mask.begin() + e.offset, mask.begin() + e.offset + e.numel(), 1);

  TrainSettings settings;
  settings.learning_rate = learning_rate;
  settings.epochs = probe_epochs;
  settings.seed = seed;
  ParamVector trained =
      train_supervised(model, start, task.spec.head(), task.data.train, settings, &mask);

  MetricReport report;
  report.task = task.spec.name;
  report.metric = task.spec.metric;
  report.algorithm = std::string(algorithm_name(ckpt.algorithm));
  report.seed = seed;
  report.learning_rate = learning_rate;
  report.epochs = probe_epochs;
  report.dev = split_metric(model, trained, task, task.data.dev);
  report.test = split_metric(model, trained, task, task.data.test);
  return {std::move(trained), std::move(report)};
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

nlohmann::json values_json(const MetricValues& values) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [name, value] : values) {
    if (value)
      j[name] = *value;
    else
      j[name] = nullptr;  // undefined (constant input)
  }
  return j;
}

std::string csv_number(double v) {
  if (std::isinf(v)) return "";
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

}  // namespace

std::string report_to_json(const MetricReport& report) {
  nlohmann::json j = {
      {"task", report.task},
      {"metric", std::string(metric_name(report.metric))},
      {"dev", values_json(report.dev)},
      {"test", values_json(report.test)},
      {"algorithm", report.algorithm},
      {"seed", report.seed},
      {"learning_rate", report.learning_rate},
      {"epochs", report.epochs},
      {"fraction", report.fraction},
      {"status", report.status},
  };
  if (!report.note.empty()) j["note"] = report.note;
  return j.dump();
}

std::string reports_to_csv(const std::vector<MetricReport>& reports) {
  std::ostringstream os;
  os << "task,algorithm,fraction,seed,metric,dev,test\n";
  for (const MetricReport& r : reports) {
    os << r.task << ',' << r.algorithm << ',' << r.fraction << ',' << r.seed << ','
       << metric_name(r.metric) << ',' << csv_number(r.dev_primary()) << ','
       << csv_number(r.test_primary()) << '\n';
  }
  return os.str();
}

std::string transfer_summary_csv(const std::vector<MetricReport>& reports) {
  std::map<double, std::vector<double>> by_fraction;
  for (const MetricReport& r : reports)
    if (r.status == "ok") by_fraction[r.fraction].push_back(r.dev_primary());
  std::ostringstream os;
  os << "fraction,mean,stddev\n";
  for (const auto& [fraction, values] : by_fraction) {
    const double n = static_cast<double>(values.size());
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    var = values.size() > 1 ? var / (n - 1.0) : 0.0;
    os << fraction << ',' << csv_number(mean) << ',' << csv_number(std::sqrt(var)) << '\n';
  }
  return os.str();
}

}  // namespace metaopt
