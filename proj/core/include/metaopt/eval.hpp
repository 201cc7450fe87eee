#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "metaopt/meta.hpp"
#include "metaopt/metrics.hpp"

namespace metaopt {

struct FinetuneGrid {
  std::vector<double> learning_rates = {5e-6, 1e-5, 2e-5, 5e-5};
  std::vector<int> epoch_choices = {3, 5, 10, 20};
  int64_t batch_size = 32;
  double warmup_ratio = 0.1;

  void validate() const {
    require(!learning_rates.empty() && !epoch_choices.empty(),
            "finetune: grid must be non-empty");
  }
  bool operator==(const FinetuneGrid&) const = default;
};

struct MetricReport {
  std::string task;
  MetricKind metric = MetricKind::kAccuracy;
  MetricValues dev, test;
  // Run metadata.
  std::string algorithm;
  uint64_t seed = 0;
  double learning_rate = 0.0;  // selected grid point
  int epochs = 0;              // selected grid point
  double fraction = 1.0;       // transfer sweeps
  std::string status = "ok";   // "ok" or "skipped"
  std::string note;

  double dev_primary() const { return primary_metric(metric, dev); }
  double test_primary() const { return primary_metric(metric, test); }
};

// Plain supervised training of one head with Adam; the optional mask freezes
// parameters whose entry is zero (their state never moves).
struct TrainSettings {
  double learning_rate = 5e-5;
  int epochs = 3;
  int64_t batch_size = 32;
  double warmup_ratio = 0.1;
  uint64_t seed = 0;
};

ParamVector train_supervised(const ModelSpec& model, const ParamVector& start,
                             const std::string& head, const std::vector<Example>& train,
                             const TrainSettings& settings,
                             const std::vector<char>* update_mask = nullptr);

// Model outputs on a split: argmax class index for classification heads, raw
// output for regression heads.
std::vector<double> predict(const ModelSpec& model, const ParamVector& params,
                            const std::string& head, const std::vector<Example>& examples);

std::vector<double> labels_of(const std::vector<Example>& examples);

// Trains every grid point from the checkpoint with the same seed, keeps the
// one with the best dev metric, and computes the test metric only for it.
// Grid points that diverge are ranked below every finished one.
std::pair<ParamVector, MetricReport> finetune(const Checkpoint& ckpt, const Task& task,
                                              const FinetuneGrid& grid, uint64_t seed);

// Deterministic per-seed subsample of the train split, stratified by label
// for classification tasks. Empty when some class would lose every example;
// `note` then names the class.
std::optional<std::vector<Example>> stratified_subsample(const Task& task, double fraction,
                                                         uint64_t seed,
                                                         std::string* note = nullptr);

// Fraction x seed sweep with per-seed deterministic subsampling (stratified
// by label for classification). Fraction 1.0 reuses the split untouched.
std::vector<MetricReport> transfer_sweep(const Checkpoint& ckpt, const Task& task,
                                         const std::vector<double>& fractions,
                                         const FinetuneGrid& grid,
                                         const std::vector<uint64_t>& seeds);

// Head-only training on a frozen encoder.
std::pair<ParamVector, MetricReport> probe(const Checkpoint& ckpt, const Task& task,
                                           int probe_epochs, double learning_rate,
                                           uint64_t seed = 0);

// Serialization: one JSON object per report, and a flat CSV with columns
// task, algorithm, fraction, seed, metric, dev, test.
std::string report_to_json(const MetricReport& report);
std::string reports_to_csv(const std::vector<MetricReport>& reports);
// Per-fraction mean and stddev of the primary dev metric (plot-ready).
std::string transfer_summary_csv(const std::vector<MetricReport>& reports);

}  // namespace metaopt
