#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "metaopt/featurizer.hpp"
#include "metaopt/model.hpp"
#include "metaopt/tensor.hpp"

namespace metaopt {

enum class MetricKind { kAccuracy, kF1Accuracy, kMatthews, kPearsonSpearman };

enum class TaskRole { kAuxiliary, kTarget };

struct TaskSpec {
  std::string name;
  HeadKind kind = HeadKind::kClassification;
  int64_t n_classes = 2;
  MetricKind metric = MetricKind::kAccuracy;
  TaskRole role = TaskRole::kAuxiliary;
  int64_t n_train = 0, n_dev = 0, n_test = 0;
  // Head shared by tasks of one synthetic family; defaults to the task name.
  std::string head_name;
  int64_t positive_class = 1;  // F1 positive class

  HeadSpec head_spec() const { return {kind, n_classes}; }
  const std::string& head() const { return head_name.empty() ? name : head_name; }
  void validate() const;
};

struct Example {
  Tensor features;
  double label = 0.0;
};

enum class Split { kTrain, kDev, kTest };

struct TaskData {
  std::vector<Example> train, dev, test;

  const std::vector<Example>& split(Split s) const {
    return s == Split::kTrain ? train : (s == Split::kDev ? dev : test);
  }
  int64_t feature_dim() const;
  void validate(const TaskSpec& spec) const;
};

struct Task {
  TaskSpec spec;
  TaskData data;
};

// Insertion-ordered task collection. Immutable once handed to training.
class TaskRegistry {
 public:
  void add(Task task);
  const Task& get(const std::string& name) const;
  bool has(const std::string& name) const { return index_.count(name) > 0; }
  const std::vector<Task>& all() const { return tasks_; }
  std::vector<const Task*> with_role(TaskRole role) const;
  int64_t feature_dim() const;  // uniform across tasks, validated

 private:
  std::vector<Task> tasks_;
  std::map<std::string, size_t> index_;
};

// ---------------------------------------------------------------------------
// TSV ingestion

struct TsvSchema {
  bool has_header = true;
  int col_a = 0;
  int col_b = -1;  // -1: single sentence
  int col_label = 1;
  std::map<std::string, int64_t> label_map;       // classification
  std::optional<std::pair<double, double>> label_range;  // regression, maps to [0,1]
  double malformed_threshold = 0.01;
  bool operator==(const TsvSchema&) const = default;
};

struct TsvLoadStats {
  int64_t rows = 0;
  int64_t malformed = 0;
};

// Reads one file into a list of examples; rows that cannot be parsed are
// counted and reported, and the load fails if their fraction exceeds the
// schema threshold. Unknown classification label tokens abort immediately.
std::vector<Example> load_tsv_split(const std::string& path, const TsvSchema& schema,
                                    const FeaturizerSpec& featurizer, HeadKind kind,
                                    TsvLoadStats* stats = nullptr);

// Assembles a task from up to three split files (dev/test optional).
Task load_tsv(const std::string& train_path, const TsvSchema& schema,
              const FeaturizerSpec& featurizer, TaskSpec spec,
              const std::string& dev_path = "", const std::string& test_path = "",
              TsvLoadStats* stats = nullptr);

// ---------------------------------------------------------------------------
// Synthetic task families

enum class SyntheticKind { kSinusoidRegression, kGaussianClusterClassification };

struct SyntheticFamily {
  SyntheticKind family = SyntheticKind::kSinusoidRegression;
  std::string name_prefix = "sine";
  // Sinusoid: y = amplitude * sin(x + phase), x uniform in x_range, labels
  // rescaled per task to [0,1] over [-amplitude, amplitude].
  std::pair<double, double> amplitude_range = {0.1, 5.0};
  std::pair<double, double> phase_range = {0.0, 3.141592653589793};
  std::pair<double, double> x_range = {-5.0, 5.0};
  // Gaussian clusters: class means uniform in mean_range per coordinate.
  int64_t clusters = 2;
  int64_t cluster_dim = 2;
  double cluster_spread = 1.0;
  std::pair<double, double> mean_range = {-3.0, 3.0};
  uint64_t seed = 0;
  TaskRole role = TaskRole::kAuxiliary;

  void validate() const;
  bool operator==(const SyntheticFamily&) const = default;
};

struct SyntheticSizes {
  bool operator==(const SyntheticSizes&) const = default;
  int64_t n_train = 0, n_dev = 0, n_test = 0;
};

std::vector<Task> generate_synthetic(const SyntheticFamily& family, int64_t n_tasks,
                                     const SyntheticSizes& sizes);

// Parameters behind one generated task, exposed for verification.
struct SinusoidParams {
  double amplitude, phase;
};
SinusoidParams sinusoid_params(const SyntheticFamily& family, int64_t task_index);

std::string_view metric_name(MetricKind m);
MetricKind metric_from_name(std::string_view name);

}  // namespace metaopt
