#include "metaopt/tasks.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "metaopt/rng.hpp"

namespace metaopt {

void TaskSpec::validate() const {
  require(!name.empty(), "task: empty name");
  require(n_train >= 0 && n_dev >= 0 && n_test >= 0, "task '" + name + "': negative split size");
  if (kind == HeadKind::kClassification) {
    require(n_classes >= 2, "task '" + name + "': n_classes must be >= 2");
    require(metric != MetricKind::kPearsonSpearman,
            "task '" + name + "': correlation metric requires a regression task");
  } else {
    require(metric == MetricKind::kPearsonSpearman,
            "task '" + name + "': regression tasks use the pearson_spearman metric");
  }
}

int64_t TaskData::feature_dim() const {
  for (const auto* split : {&train, &dev, &test})
    if (!split->empty()) return (*split)[0].features.numel();
  return 0;
}

void TaskData::validate(const TaskSpec& spec) const {
  const int64_t dim = feature_dim();
  for (const auto* split : {&train, &dev, &test})
    for (const Example& e : *split) {
      require(e.features.numel() == dim,
              "task '" + spec.name + "': inconsistent feature dimensionality");
      if (spec.kind == HeadKind::kClassification) {
        require(e.label >= 0 && e.label < static_cast<double>(spec.n_classes) &&
                    e.label == std::floor(e.label),
                "task '" + spec.name + "': label " + std::to_string(e.label) + " out of range");
      }
    }
}

void TaskRegistry::add(Task task) {
  task.spec.validate();
  if (task.spec.head_name.empty()) task.spec.head_name = task.spec.name;
  require(!index_.count(task.spec.name), "registry: duplicate task '" + task.spec.name + "'");
  task.data.validate(task.spec);
  index_[task.spec.name] = tasks_.size();
  tasks_.push_back(std::move(task));
}

const Task& TaskRegistry::get(const std::string& name) const {
  auto it = index_.find(name);
  require(it != index_.end(), "registry: no task named '" + name + "'");
  return tasks_[it->second];
}

std::vector<const Task*> TaskRegistry::with_role(TaskRole role) const {
  std::vector<const Task*> out;
  for (const Task& t : tasks_)
    if (t.spec.role == role) out.push_back(&t);
  return out;
}

int64_t TaskRegistry::feature_dim() const {
  require(!tasks_.empty(), "registry: empty");
  int64_t dim = 0;
  for (const Task& t : tasks_) {
    const int64_t d = t.data.feature_dim();
    if (d == 0) continue;
    if (dim == 0) dim = d;
    require(dim == d, "registry: task '" + t.spec.name + "' has feature dim " + std::to_string(d) +
                          ", others have " + std::to_string(dim));
  }
  require(dim > 0, "registry: no task has data");
  return dim;
}

// ---------------------------------------------------------------------------
// TSV ingestion

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> cols;
  size_t start = 0;
  while (true) {
    size_t tab = line.find('\t', start);
    if (tab == std::string::npos) {
      cols.push_back(line.substr(start));
      break;
    }
    cols.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  return cols;
}

bool parse_double(const std::string& s, double* out) {
  const char* begin = s.data();
  const char* end = begin + s.size();
  auto [ptr, ec] = std::from_chars(begin, end, *out);
  return ec == std::errc() && ptr == end;
}

}  // namespace

std::vector<Example> load_tsv_split(const std::string& path, const TsvSchema& schema,
                                    const FeaturizerSpec& featurizer, HeadKind kind,
                                    TsvLoadStats* stats) {
  std::ifstream in(path);
  require(in.good(), "tsv: cannot open '" + path + "'");
  if (kind == HeadKind::kClassification)
    require(!schema.label_map.empty(), "tsv: classification schema needs a label map");
  else
    require(schema.label_range.has_value(), "tsv: regression schema needs a label range");

  const int max_col = std::max({schema.col_a, schema.col_b, schema.col_label});
  std::vector<Example> out;
  TsvLoadStats local;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (first && schema.has_header) {
      first = false;
      continue;
    }
    first = false;
    if (line.empty()) continue;
    ++local.rows;
    auto cols = split_tabs(line);
    if (static_cast<int>(cols.size()) <= max_col) {
      ++local.malformed;
      continue;
    }
    double label = 0.0;
    if (kind == HeadKind::kClassification) {
      auto it = schema.label_map.find(cols[static_cast<size_t>(schema.col_label)]);
      require(it != schema.label_map.end(),
              "tsv: unknown label token '" + cols[static_cast<size_t>(schema.col_label)] +
                  "' in '" + path + "'");
      label = static_cast<double>(it->second);
    } else {
      double raw = 0.0;
      if (!parse_double(cols[static_cast<size_t>(schema.col_label)], &raw)) {
        ++local.malformed;
        continue;
      }
      const auto [lo, hi] = *schema.label_range;
      if (raw < lo || raw > hi) {
        ++local.malformed;
        continue;
      }
      label = (raw - lo) / (hi - lo);
    }
    std::optional<std::string_view> sentence_b;
    if (schema.col_b >= 0) sentence_b = cols[static_cast<size_t>(schema.col_b)];
    out.push_back({featurize(featurizer, cols[static_cast<size_t>(schema.col_a)], sentence_b),
                   label});
  }
  if (local.rows > 0) {
    const double frac = static_cast<double>(local.malformed) / static_cast<double>(local.rows);
    require(frac <= schema.malformed_threshold,
            "tsv: " + std::to_string(local.malformed) + " of " + std::to_string(local.rows) +
                " rows malformed in '" + path + "' (threshold " +
                std::to_string(schema.malformed_threshold) + ")");
  }
  if (stats) {
    stats->rows += local.rows;
    stats->malformed += local.malformed;
  }
  return out;
}

Task load_tsv(const std::string& train_path, const TsvSchema& schema,
              const FeaturizerSpec& featurizer, TaskSpec spec, const std::string& dev_path,
              const std::string& test_path, TsvLoadStats* stats) {
  Task task;
  task.data.train = load_tsv_split(train_path, schema, featurizer, spec.kind, stats);
  if (!dev_path.empty())
    task.data.dev = load_tsv_split(dev_path, schema, featurizer, spec.kind, stats);
  if (!test_path.empty())
    task.data.test = load_tsv_split(test_path, schema, featurizer, spec.kind, stats);
  spec.n_train = static_cast<int64_t>(task.data.train.size());
  spec.n_dev = static_cast<int64_t>(task.data.dev.size());
  spec.n_test = static_cast<int64_t>(task.data.test.size());
  task.spec = std::move(spec);
  return task;
}

// ---------------------------------------------------------------------------
// Synthetic task families

void SyntheticFamily::validate() const {
  require(amplitude_range.first > 0 && amplitude_range.second > amplitude_range.first,
          "synthetic: degenerate amplitude range");
  require(phase_range.second > phase_range.first, "synthetic: degenerate phase range");
  require(x_range.second > x_range.first, "synthetic: degenerate x range");
  require(clusters >= 2, "synthetic: need at least two clusters");
  require(cluster_dim >= 1, "synthetic: cluster_dim must be positive");
  require(cluster_spread > 0, "synthetic: cluster_spread must be positive");
  require(mean_range.second > mean_range.first, "synthetic: degenerate mean range");
}

SinusoidParams sinusoid_params(const SyntheticFamily& family, int64_t task_index) {
  Rng rng(mix_seed(family.seed, static_cast<uint64_t>(task_index)));
  SinusoidParams p;
  p.amplitude = uniform_in(rng, family.amplitude_range.first, family.amplitude_range.second);
  p.phase = uniform_in(rng, family.phase_range.first, family.phase_range.second);
  return p;
}

namespace {

std::string task_number(int64_t i) {
  std::ostringstream os;
  os << i;
  std::string s = os.str();
  while (s.size() < 3) s.insert(s.begin(), '0');
  return s;
}

std::vector<Example> sinusoid_examples(const SyntheticFamily& f, const SinusoidParams& p,
                                       int64_t n, Rng& rng) {
  std::vector<Example> out;
  out.reserve(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    const double x = uniform_in(rng, f.x_range.first, f.x_range.second);
    const double raw = p.amplitude * std::sin(x + p.phase);
    // Raw range is [-amplitude, amplitude]; store in [0, 1].
    const double label = (raw + p.amplitude) / (2.0 * p.amplitude);
    out.push_back({Tensor({1}, {x}), label});
  }
  return out;
}

std::vector<Example> cluster_examples(const SyntheticFamily& f,
                                      const std::vector<Tensor>& means, int64_t n, Rng& rng) {
  std::vector<Example> out;
  out.reserve(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    const int64_t cls = uniform_index(rng, f.clusters);
    Tensor x = Tensor::zeros({f.cluster_dim});
    for (int64_t d = 0; d < f.cluster_dim; ++d)
      x[d] = means[static_cast<size_t>(cls)][d] + f.cluster_spread * normal_unit(rng);
    out.push_back({std::move(x), static_cast<double>(cls)});
  }
  return out;
}

}  // namespace

std::vector<Task> generate_synthetic(const SyntheticFamily& family, int64_t n_tasks,
                                     const SyntheticSizes& sizes) {
  family.validate();
  require(n_tasks >= 1, "synthetic: n_tasks must be positive");
  std::vector<Task> tasks;
  tasks.reserve(static_cast<size_t>(n_tasks));
  for (int64_t t = 0; t < n_tasks; ++t) {
    Task task;
    task.spec.name = family.name_prefix + "/" + task_number(t);
    task.spec.head_name = family.name_prefix;
    task.spec.role = family.role;
    task.spec.n_train = sizes.n_train;
    task.spec.n_dev = sizes.n_dev;
    task.spec.n_test = sizes.n_test;
    Rng rng(mix_seed(mix_seed(family.seed, static_cast<uint64_t>(t)), 0xda7a));
    if (family.family == SyntheticKind::kSinusoidRegression) {
      task.spec.kind = HeadKind::kRegression;
      task.spec.metric = MetricKind::kPearsonSpearman;
      const SinusoidParams p = sinusoid_params(family, t);
      task.data.train = sinusoid_examples(family, p, sizes.n_train, rng);
      task.data.dev = sinusoid_examples(family, p, sizes.n_dev, rng);
      task.data.test = sinusoid_examples(family, p, sizes.n_test, rng);
    } else {
      task.spec.kind = HeadKind::kClassification;
      task.spec.n_classes = family.clusters;
      task.spec.metric = MetricKind::kAccuracy;
      std::vector<Tensor> means;
      for (int64_t c = 0; c < family.clusters; ++c) {
        Tensor m = Tensor::zeros({family.cluster_dim});
        for (int64_t d = 0; d < family.cluster_dim; ++d)
          m[d] = uniform_in(rng, family.mean_range.first, family.mean_range.second);
        means.push_back(std::move(m));
      }
      task.data.train = cluster_examples(family, means, sizes.n_train, rng);
      task.data.dev = cluster_examples(family, means, sizes.n_dev, rng);
      task.data.test = cluster_examples(family, means, sizes.n_test, rng);
    }
    tasks.push_back(std::move(task));
  }
  return tasks;
}

std::string_view metric_name(MetricKind m) {
  switch (m) {
    case MetricKind::kAccuracy: return "accuracy";
    case MetricKind::kF1Accuracy: return "f1_accuracy";
    case MetricKind::kMatthews: return "matthews";
    case MetricKind::kPearsonSpearman: return "pearson_spearman";
  }
  return "?";
}

MetricKind metric_from_name(std::string_view name) {
  if (name == "accuracy") return MetricKind::kAccuracy;
  if (name == "f1_accuracy") return MetricKind::kF1Accuracy;
  if (name == "matthews") return MetricKind::kMatthews;
  if (name == "pearson_spearman") return MetricKind::kPearsonSpearman;
  fail("unknown metric '" + std::string(name) + "'");
}

}  // namespace metaopt
