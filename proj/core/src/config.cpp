#include "metaopt/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace metaopt {

namespace {

// ---------------------------------------------------------------------------
// Raw section/key representation

struct RawKV {
  std::string key, value;
  int line = 0;
};

struct RawSection {
  std::string name;
  int line = 0;
  std::vector<RawKV> entries;
};

std::string trim(std::string s) {
  const auto is_space = [](unsigned char c) { return std::isspace(c); };
  while (!s.empty() && is_space(static_cast<unsigned char>(s.front()))) s.erase(s.begin());
  while (!s.empty() && is_space(static_cast<unsigned char>(s.back()))) s.pop_back();
  return s;
}

std::vector<RawSection> lex(const std::string& text, const std::string& origin) {
  std::vector<RawSection> sections;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      require(line.back() == ']', origin + ":" + std::to_string(lineno) + ": unterminated section header");
      sections.push_back({trim(line.substr(1, line.size() - 2)), lineno, {}});
      require(!sections.back().name.empty(),
              origin + ":" + std::to_string(lineno) + ": empty section name");
      continue;
    }
    const auto eq = line.find('=');
    require(eq != std::string::npos,
            origin + ":" + std::to_string(lineno) + ": expected 'key = value', got '" + line + "'");
    require(!sections.empty(),
            origin + ":" + std::to_string(lineno) + ": key outside of any [section]");
    sections.back().entries.push_back(
        {trim(line.substr(0, eq)), trim(line.substr(eq + 1)), lineno});
  }
  return sections;
}

// ---------------------------------------------------------------------------
// Diagnostics

size_t edit_distance(std::string_view a, std::string_view b) {
  std::vector<size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (size_t j = 1; j <= b.size(); ++j) {
      const size_t subst = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, subst});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

std::string nearest(std::string_view key, const std::vector<std::string>& candidates) {
  std::string best;
  size_t best_d = SIZE_MAX;
  for (const auto& c : candidates) {
    const size_t d = edit_distance(key, c);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

[[noreturn]] void unknown_key(const std::string& origin, const RawKV& kv,
                              const std::string& section,
                              const std::vector<std::string>& valid) {
  fail(origin + ":" + std::to_string(kv.line) + ": unknown key '" + kv.key + "' in [" + section +
       "] (nearest valid key: '" + nearest(kv.key, valid) + "')");
}

// ---------------------------------------------------------------------------
// Value parsers

class KeyReader {
 public:
  KeyReader(const std::string& origin, const RawSection& section,
            std::vector<std::string> valid_keys)
      : origin_(origin), section_(section), valid_(std::move(valid_keys)) {
    for (const RawKV& kv : section.entries)
      if (std::find(valid_.begin(), valid_.end(), kv.key) == valid_.end())
        unknown_key(origin_, kv, section_.name, valid_);
  }

  const RawKV* find(const std::string& key) const {
    const RawKV* found = nullptr;
    for (const RawKV& kv : section_.entries)
      if (kv.key == key) found = &kv;  // later occurrences win (overrides)
    return found;
  }

  [[noreturn]] void type_error(const RawKV& kv, const std::string& expected) const {
    fail(origin_ + ":" + std::to_string(kv.line) + ": key '" + kv.key + "' expects " + expected +
         ", got '" + kv.value + "'");
  }

  double number(const std::string& key, double fallback) const {
    const RawKV* kv = find(key);
    if (!kv) return fallback;
    try {
      size_t pos = 0;
      const double v = std::stod(kv->value, &pos);
      if (pos != kv->value.size()) type_error(*kv, "a number");
      return v;
    } catch (const std::exception&) {
      type_error(*kv, "a number");
    }
  }

  int64_t integer(const std::string& key, int64_t fallback) const {
    const RawKV* kv = find(key);
    if (!kv) return fallback;
    int64_t v = 0;
    const auto* begin = kv->value.data();
    const auto* end = begin + kv->value.size();
    auto [p, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc() || p != end) type_error(*kv, "an integer");
    return v;
  }

  bool boolean(const std::string& key, bool fallback) const {
    const RawKV* kv = find(key);
    if (!kv) return fallback;
    if (kv->value == "true") return true;
    if (kv->value == "false") return false;
    type_error(*kv, "true or false");
  }

  std::string text(const std::string& key, std::string fallback) const {
    const RawKV* kv = find(key);
    return kv ? kv->value : fallback;
  }

  std::vector<std::string> words(const std::string& key) const {
    const RawKV* kv = find(key);
    std::vector<std::string> out;
    if (!kv) return out;
    std::istringstream is(kv->value);
    std::string w;
    while (is >> w) out.push_back(w);
    return out;
  }

  std::vector<double> numbers(const std::string& key, std::vector<double> fallback) const {
    const RawKV* kv = find(key);
    if (!kv) return fallback;
    std::vector<double> out;
    for (const auto& w : words(key)) {
      try {
        out.push_back(std::stod(w));
      } catch (const std::exception&) {
        type_error(*kv, "a list of numbers");
      }
    }
    if (out.empty()) type_error(*kv, "a non-empty list of numbers");
    return out;
  }

  std::vector<int64_t> integers(const std::string& key, std::vector<int64_t> fallback) const {
    const RawKV* kv = find(key);
    if (!kv) return fallback;
    std::vector<int64_t> out;
    for (const auto& w : words(key)) {
      int64_t v = 0;
      auto [p, ec] = std::from_chars(w.data(), w.data() + w.size(), v);
      if (ec != std::errc() || p != w.data() + w.size()) type_error(*kv, "a list of integers");
      out.push_back(v);
    }
    if (out.empty()) type_error(*kv, "a non-empty list of integers");
    return out;
  }

  std::pair<double, double> range(const std::string& key, std::pair<double, double> fallback) const {
    const RawKV* kv = find(key);
    if (!kv) return fallback;
    const auto vals = numbers(key, {});
    if (vals.size() != 2) type_error(*kv, "two numbers 'lo hi'");
    return {vals[0], vals[1]};
  }

  const std::string& origin() const { return origin_; }
  const RawSection& section() const { return section_; }

 private:
  const std::string& origin_;
  const RawSection& section_;
  std::vector<std::string> valid_;
};

Activation activation_from(const KeyReader& r, const std::string& key, Activation fallback) {
  const RawKV* kv = r.find(key);
  if (!kv) return fallback;
  if (kv->value == "tanh") return Activation::kTanh;
  if (kv->value == "relu") return Activation::kRelu;
  r.type_error(*kv, "'tanh' or 'relu'");
}

SamplerKind sampler_from(const KeyReader& r, const RawKV& kv) {
  if (kv.value == "uniform") return SamplerKind::kUniform;
  if (kv.value == "pps") return SamplerKind::kPps;
  if (kv.value == "mixed") return SamplerKind::kMixed;
  r.type_error(kv, "'uniform', 'pps' or 'mixed'");
}

// ---------------------------------------------------------------------------
// Section handlers

void read_model(const KeyReader& r, ModelSpec* model) {
  model->hidden_dims = r.integers("hidden_dims", model->hidden_dims);
  model->activation = activation_from(r, "activation", model->activation);
  model->dropout_rate = r.number("dropout", model->dropout_rate);
}

void read_featurizer(const KeyReader& r, FeaturizerSpec* f) {
  f->n_buckets = r.integer("n_buckets", f->n_buckets);
  if (const auto orders = r.integers("ngram_orders", {}); !orders.empty()) {
    f->ngram_orders.clear();
    for (int64_t o : orders) f->ngram_orders.push_back(static_cast<int>(o));
  }
  if (const RawKV* kv = r.find("pair_mode")) {
    if (kv->value == "concat")
      f->pair_mode = PairMode::kConcat;
    else if (kv->value == "concat_plus_product")
      f->pair_mode = PairMode::kConcatPlusProduct;
    else
      r.type_error(*kv, "'concat' or 'concat_plus_product'");
  }
  f->max_tokens = static_cast<int>(r.integer("max_tokens", f->max_tokens));
}

void read_meta(const KeyReader& r, MetaConfig* meta) {
  if (const RawKV* kv = r.find("algorithm")) {
    try {
      meta->algorithm = algorithm_from_name(kv->value);
    } catch (const Error&) {
      r.type_error(*kv, "'maml', 'fomaml' or 'reptile'");
    }
  }
  meta->inner.alpha = r.number("alpha", meta->inner.alpha);
  meta->inner.k = static_cast<int>(r.integer("k", meta->inner.k));
  meta->outer.beta = r.number("beta", meta->outer.beta);
  meta->outer.warmup_ratio = r.number("warmup", meta->outer.warmup_ratio);
  meta->meta_batch = static_cast<int>(r.integer("meta_batch", meta->meta_batch));
  meta->epochs = static_cast<int>(r.integer("epochs", meta->epochs));
  meta->batch_size = r.integer("batch_size", meta->batch_size);
  meta->seed = static_cast<uint64_t>(r.integer("seed", static_cast<int64_t>(meta->seed)));
  meta->workers = static_cast<int>(r.integer("workers", meta->workers));
  if (const RawKV* kv = r.find("sampler")) meta->sampler.kind = sampler_from(r, *kv);
  meta->sampler.mix_ratio = r.number("mix_ratio", meta->sampler.mix_ratio);
  meta->sampler.target_task = r.text("target_task", meta->sampler.target_task);
  meta->sampler.include_targets = r.boolean("include_targets", meta->sampler.include_targets);
  auto rule = [&](const char* key, OuterRule fallback) {
    const RawKV* kv = r.find(key);
    if (!kv) return fallback;
    if (kv->value == "adam") return OuterRule::kAdam;
    if (kv->value == "sgd") return OuterRule::kSgd;
    r.type_error(*kv, "'adam' or 'sgd'");
  };
  meta->outer.reptile_outer = rule("reptile_outer", meta->outer.reptile_outer);
  meta->outer.grad_outer = rule("grad_outer", meta->outer.grad_outer);
}

void read_finetune(const KeyReader& r, FinetuneGrid* grid) {
  grid->learning_rates = r.numbers("learning_rates", grid->learning_rates);
  if (const auto eps = r.integers("epochs", {}); !eps.empty()) {
    grid->epoch_choices.clear();
    for (int64_t e : eps) grid->epoch_choices.push_back(static_cast<int>(e));
  }
  grid->batch_size = r.integer("batch_size", grid->batch_size);
  grid->warmup_ratio = r.number("warmup", grid->warmup_ratio);
}

void read_transfer(const KeyReader& r, TransferConfig* t) {
  t->fractions = r.numbers("fractions", t->fractions);
  if (const auto seeds = r.integers("seeds", {}); !seeds.empty()) {
    t->seeds.clear();
    for (int64_t s : seeds) t->seeds.push_back(static_cast<uint64_t>(s));
  }
  t->task = r.text("task", t->task);
}

void read_probe(const KeyReader& r, ProbeConfig* p) {
  p->epochs = static_cast<int>(r.integer("epochs", p->epochs));
  p->learning_rate = r.number("lr", p->learning_rate);
  p->task = r.text("task", p->task);
}

void read_ablate(const KeyReader& r, AblateConfig* a) {
  for (int64_t k : r.integers("k", {})) a->k_values.push_back(static_cast<int>(k));
  a->alpha_values = r.numbers("alpha", {});
  if (const RawKV* kv = r.find("algorithm")) {
    for (const auto& w : r.words("algorithm")) {
      try {
        a->algorithms.push_back(algorithm_from_name(w));
      } catch (const Error&) {
        r.type_error(*kv, "a list of 'maml', 'fomaml', 'reptile'");
      }
    }
  }
  if (const RawKV* kv = r.find("sampler")) {
    for (const auto& w : r.words("sampler")) {
      if (w == "uniform")
        a->samplers.push_back(SamplerKind::kUniform);
      else if (w == "pps")
        a->samplers.push_back(SamplerKind::kPps);
      else if (w == "mixed")
        a->samplers.push_back(SamplerKind::kMixed);
      else
        r.type_error(*kv, "a list of 'uniform', 'pps', 'mixed'");
    }
  }
}

void read_task(const KeyReader& r, const std::string& name, TaskManifest* task) {
  task->name = name;
  if (const RawKV* kv = r.find("role")) {
    if (kv->value == "auxiliary")
      task->role = TaskRole::kAuxiliary;
    else if (kv->value == "target")
      task->role = TaskRole::kTarget;
    else
      r.type_error(*kv, "'auxiliary' or 'target'");
  }
  if (const RawKV* kv = r.find("kind")) {
    if (kv->value == "classification")
      task->kind = HeadKind::kClassification;
    else if (kv->value == "regression")
      task->kind = HeadKind::kRegression;
    else
      r.type_error(*kv, "'classification' or 'regression'");
  }
  task->n_classes = r.integer("n_classes", task->n_classes);
  if (const RawKV* kv = r.find("metric")) {
    try {
      task->metric = metric_from_name(kv->value);
    } catch (const Error&) {
      r.type_error(*kv, "'accuracy', 'f1_accuracy', 'matthews' or 'pearson_spearman'");
    }
  } else if (task->kind == HeadKind::kRegression) {
    task->metric = MetricKind::kPearsonSpearman;
  }
  task->positive_class = r.integer("positive_class", task->positive_class);
  task->head = r.text("head", task->head);

  if (const RawKV* kv = r.find("synthetic")) {
    SyntheticFamily family;
    if (kv->value == "sinusoid_regression")
      family.family = SyntheticKind::kSinusoidRegression;
    else if (kv->value == "gaussian_cluster_classification")
      family.family = SyntheticKind::kGaussianClusterClassification;
    else
      r.type_error(*kv, "'sinusoid_regression' or 'gaussian_cluster_classification'");
    family.name_prefix = name;
    family.role = task->role;
    family.amplitude_range = r.range("amplitude_range", family.amplitude_range);
    family.phase_range = r.range("phase_range", family.phase_range);
    family.x_range = r.range("x_range", family.x_range);
    family.clusters = r.integer("clusters", family.clusters);
    family.cluster_dim = r.integer("cluster_dim", family.cluster_dim);
    family.cluster_spread = r.number("cluster_spread", family.cluster_spread);
    family.mean_range = r.range("mean_range", family.mean_range);
    family.seed = static_cast<uint64_t>(r.integer("task_seed", 0));
    task->synthetic = family;
    task->n_tasks = r.integer("n_tasks", task->n_tasks);
    task->sizes.n_train = r.integer("n_train", 40);
    task->sizes.n_dev = r.integer("n_dev", 20);
    task->sizes.n_test = r.integer("n_test", 20);
    return;
  }

  task->train_path = r.text("train", "");
  task->dev_path = r.text("dev", "");
  task->test_path = r.text("test", "");
  require(!task->train_path.empty(), r.origin() + ":" + std::to_string(r.section().line) +
                                         ": task '" + name +
                                         "' needs either 'synthetic = ...' or 'train = <path>'");
  task->schema.has_header = r.boolean("header", task->schema.has_header);
  task->schema.col_a = static_cast<int>(r.integer("col_a", task->schema.col_a));
  task->schema.col_b = static_cast<int>(r.integer("col_b", task->schema.col_b));
  task->schema.col_label = static_cast<int>(r.integer("col_label", task->schema.col_label));
  task->schema.malformed_threshold =
      r.number("malformed_threshold", task->schema.malformed_threshold);
  if (const RawKV* kv = r.find("labels")) {
    for (const auto& w : r.words("labels")) {
      const auto colon = w.rfind(':');
      if (colon == std::string::npos) r.type_error(*kv, "entries of the form token:index");
      int64_t idx = 0;
      const auto* b = w.data() + colon + 1;
      auto [p, ec] = std::from_chars(b, w.data() + w.size(), idx);
      if (ec != std::errc() || p != w.data() + w.size())
        r.type_error(*kv, "entries of the form token:index");
      task->schema.label_map[w.substr(0, colon)] = idx;
    }
  }
  if (r.find("label_range")) task->schema.label_range = r.range("label_range", {0.0, 1.0});
}

const std::vector<std::string> kSections = {"model", "featurizer", "init",   "meta",
                                            "finetune", "transfer",  "probe",  "ablate",
                                            "output"};

}  // namespace

RunConfig parse_config_text(const std::string& text, const std::vector<std::string>& overrides,
                            const std::string& origin) {
  auto sections = lex(text, origin);

  // Overrides are "section.key=value"; they append to the section, and a later
  // occurrence of a key wins.
  for (const std::string& o : overrides) {
    const auto eq = o.find('=');
    require(eq != std::string::npos, "override '" + o + "' must be section.key=value");
    const std::string path = trim(o.substr(0, eq));
    const std::string value = trim(o.substr(eq + 1));
    const auto dot = path.find('.');
    require(dot != std::string::npos, "override '" + o + "' must be section.key=value");
    const std::string section = path.substr(0, dot);
    const std::string key = path.substr(dot + 1);
    auto it = std::find_if(sections.begin(), sections.end(),
                           [&](const RawSection& s) { return s.name == section; });
    if (it == sections.end()) {
      sections.push_back({section, 0, {}});
      it = std::prev(sections.end());
    }
    it->entries.push_back({key, value, 0});
  }

  RunConfig cfg;
  bool saw_meta_seed = false;
  for (const RawSection& section : sections) {
    if (section.name == "model") {
      read_model(KeyReader(origin, section, {"hidden_dims", "activation", "dropout"}), &cfg.model);
    } else if (section.name == "featurizer") {
      read_featurizer(
          KeyReader(origin, section, {"n_buckets", "ngram_orders", "pair_mode", "max_tokens"}),
          &cfg.featurizer);
    } else if (section.name == "init") {
      KeyReader r(origin, section, {"kind", "task", "epochs", "lr"});
      if (const RawKV* kv = r.find("kind")) {
        if (kv->value == "random")
          cfg.init.kind = InitConfig::Kind::kRandom;
        else if (kv->value == "warmstart")
          cfg.init.kind = InitConfig::Kind::kWarmstart;
        else
          r.type_error(*kv, "'random' or 'warmstart'");
      }
      cfg.init.task = r.text("task", cfg.init.task);
      cfg.init.epochs = static_cast<int>(r.integer("epochs", cfg.init.epochs));
      cfg.init.learning_rate = r.number("lr", cfg.init.learning_rate);
    } else if (section.name == "meta") {
      KeyReader r(origin, section,
                  {"algorithm", "alpha", "k", "beta", "warmup", "meta_batch", "epochs",
                   "batch_size", "seed", "workers", "sampler", "mix_ratio", "target_task",
                   "include_targets", "reptile_outer", "grad_outer"});
      saw_meta_seed = r.find("seed") != nullptr;
      read_meta(r, &cfg.meta);
    } else if (section.name == "finetune") {
      read_finetune(KeyReader(origin, section,
                              {"learning_rates", "epochs", "batch_size", "warmup"}),
                    &cfg.finetune);
    } else if (section.name == "transfer") {
      read_transfer(KeyReader(origin, section, {"fractions", "seeds", "task"}), &cfg.transfer);
    } else if (section.name == "probe") {
      read_probe(KeyReader(origin, section, {"epochs", "lr", "task"}), &cfg.probe);
    } else if (section.name == "ablate") {
      read_ablate(KeyReader(origin, section, {"k", "alpha", "algorithm", "sampler"}), &cfg.ablate);
    } else if (section.name == "output") {
      KeyReader r(origin, section, {"dir"});
      cfg.output_dir = r.text("dir", cfg.output_dir);
    } else if (section.name.starts_with("task ")) {
      TaskManifest task;
      read_task(KeyReader(origin, section,
                          {"role",        "kind",          "n_classes",      "metric",
                           "positive_class", "head",       "train",          "dev",
                           "test",        "header",        "col_a",          "col_b",
                           "col_label",   "labels",        "label_range",    "malformed_threshold",
                           "synthetic",   "n_tasks",       "n_train",        "n_dev",
                           "n_test",      "amplitude_range", "phase_range",  "x_range",
                           "clusters",    "cluster_dim",   "cluster_spread", "mean_range",
                           "task_seed"}),
                trim(section.name.substr(5)), &task);
      require(std::none_of(cfg.tasks.begin(), cfg.tasks.end(),
                           [&](const TaskManifest& t) { return t.name == task.name; }),
              origin + ":" + std::to_string(section.line) + ": duplicate task '" + task.name + "'");
      cfg.tasks.push_back(std::move(task));
    } else {
      fail(origin + ":" + std::to_string(section.line) + ": unknown section [" + section.name +
           "] (nearest: [" + nearest(section.name, kSections) + "]; tasks use [task <name>])");
    }
  }

  // The sampler draws from the run seed unless configured apart.
  if (cfg.meta.sampler.seed == 0 || saw_meta_seed) cfg.meta.sampler.seed = cfg.meta.seed;
  cfg.featurizer.validate();
  cfg.meta.inner.validate();
  cfg.meta.outer.validate();
  cfg.finetune.validate();
  for (double f : cfg.transfer.fractions)
    require(f > 0 && f <= 1.0, origin + ": transfer fraction " + std::to_string(f) +
                                   " outside (0, 1]");
  return cfg;
}

RunConfig parse_config_text(const std::string& text, const std::string& origin) {
  return parse_config_text(text, {}, origin);
}

RunConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "config: cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), path);
}

// ---------------------------------------------------------------------------
// Canonical emission

namespace {

std::string fmt_double(double v) {
  for (int prec = 6; prec <= 17; ++prec) {
    std::ostringstream os;
    os.precision(prec);
    os << v;
    double back = 0.0;
    std::istringstream(os.str()) >> back;
    if (back == v) return os.str();
  }
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

template <typename T, typename Fn>
std::string join(const std::vector<T>& v, Fn f) {
  std::ostringstream os;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) os << ' ';
    os << f(v[i]);
  }
  return os.str();
}

}  // namespace

std::string emit_config(const RunConfig& cfg) {
  std::ostringstream os;
  os << "[model]\n";
  os << "hidden_dims = " << join(cfg.model.hidden_dims, [](int64_t d) { return std::to_string(d); })
     << "\n";
  os << "activation = " << (cfg.model.activation == Activation::kTanh ? "tanh" : "relu") << "\n";
  os << "dropout = " << fmt_double(cfg.model.dropout_rate) << "\n\n";

  os << "[featurizer]\n";
  os << "n_buckets = " << cfg.featurizer.n_buckets << "\n";
  os << "ngram_orders = "
     << join(cfg.featurizer.ngram_orders, [](int o) { return std::to_string(o); }) << "\n";
  os << "pair_mode = "
     << (cfg.featurizer.pair_mode == PairMode::kConcat ? "concat" : "concat_plus_product") << "\n";
  os << "max_tokens = " << cfg.featurizer.max_tokens << "\n\n";

  for (const TaskManifest& t : cfg.tasks) {
    os << "[task " << t.name << "]\n";
    os << "role = " << (t.role == TaskRole::kAuxiliary ? "auxiliary" : "target") << "\n";
    if (t.is_synthetic()) {
      const SyntheticFamily& f = *t.synthetic;
      os << "synthetic = "
         << (f.family == SyntheticKind::kSinusoidRegression ? "sinusoid_regression"
                                                            : "gaussian_cluster_classification")
         << "\n";
      os << "n_tasks = " << t.n_tasks << "\n";
      os << "n_train = " << t.sizes.n_train << "\n";
      os << "n_dev = " << t.sizes.n_dev << "\n";
      os << "n_test = " << t.sizes.n_test << "\n";
      os << "task_seed = " << f.seed << "\n";
      os << "amplitude_range = " << fmt_double(f.amplitude_range.first) << ' '
         << fmt_double(f.amplitude_range.second) << "\n";
      os << "phase_range = " << fmt_double(f.phase_range.first) << ' '
         << fmt_double(f.phase_range.second) << "\n";
      os << "x_range = " << fmt_double(f.x_range.first) << ' ' << fmt_double(f.x_range.second)
         << "\n";
      os << "clusters = " << f.clusters << "\n";
      os << "cluster_dim = " << f.cluster_dim << "\n";
      os << "cluster_spread = " << fmt_double(f.cluster_spread) << "\n";
      os << "mean_range = " << fmt_double(f.mean_range.first) << ' '
         << fmt_double(f.mean_range.second) << "\n";
    } else {
      os << "kind = "
         << (t.kind == HeadKind::kClassification ? "classification" : "regression") << "\n";
      os << "n_classes = " << t.n_classes << "\n";
      os << "metric = " << metric_name(t.metric) << "\n";
      os << "positive_class = " << t.positive_class << "\n";
      if (!t.head.empty()) os << "head = " << t.head << "\n";
      os << "train = " << t.train_path << "\n";
      if (!t.dev_path.empty()) os << "dev = " << t.dev_path << "\n";
      if (!t.test_path.empty()) os << "test = " << t.test_path << "\n";
      os << "header = " << (t.schema.has_header ? "true" : "false") << "\n";
      os << "col_a = " << t.schema.col_a << "\n";
      if (t.schema.col_b >= 0) os << "col_b = " << t.schema.col_b << "\n";
      os << "col_label = " << t.schema.col_label << "\n";
      os << "malformed_threshold = " << fmt_double(t.schema.malformed_threshold) << "\n";
      if (!t.schema.label_map.empty()) {
        os << "labels =";
        for (const auto& [token, idx] : t.schema.label_map) os << ' ' << token << ':' << idx;
        os << "\n";
      }
      if (t.schema.label_range)
        os << "label_range = " << fmt_double(t.schema.label_range->first) << ' '
           << fmt_double(t.schema.label_range->second) << "\n";
    }
    os << "\n";
  }

  os << "[init]\n";
  os << "kind = " << (cfg.init.kind == InitConfig::Kind::kRandom ? "random" : "warmstart") << "\n";
  if (!cfg.init.task.empty()) os << "task = " << cfg.init.task << "\n";
  os << "epochs = " << cfg.init.epochs << "\n";
  os << "lr = " << fmt_double(cfg.init.learning_rate) << "\n\n";

  os << "[meta]\n";
  os << "algorithm = " << algorithm_name(cfg.meta.algorithm) << "\n";
  os << "alpha = " << fmt_double(cfg.meta.inner.alpha) << "\n";
  os << "k = " << cfg.meta.inner.k << "\n";
  os << "beta = " << fmt_double(cfg.meta.outer.beta) << "\n";
  os << "warmup = " << fmt_double(cfg.meta.outer.warmup_ratio) << "\n";
  os << "meta_batch = " << cfg.meta.meta_batch << "\n";
  os << "epochs = " << cfg.meta.epochs << "\n";
  os << "batch_size = " << cfg.meta.batch_size << "\n";
  os << "seed = " << cfg.meta.seed << "\n";
  os << "workers = " << cfg.meta.workers << "\n";
  os << "sampler = "
     << (cfg.meta.sampler.kind == SamplerKind::kUniform
             ? "uniform"
             : cfg.meta.sampler.kind == SamplerKind::kPps ? "pps" : "mixed")
     << "\n";
  os << "mix_ratio = " << fmt_double(cfg.meta.sampler.mix_ratio) << "\n";
  if (!cfg.meta.sampler.target_task.empty())
    os << "target_task = " << cfg.meta.sampler.target_task << "\n";
  os << "include_targets = " << (cfg.meta.sampler.include_targets ? "true" : "false") << "\n";
  os << "reptile_outer = " << (cfg.meta.outer.reptile_outer == OuterRule::kAdam ? "adam" : "sgd")
     << "\n";
  os << "grad_outer = " << (cfg.meta.outer.grad_outer == OuterRule::kAdam ? "adam" : "sgd")
     << "\n\n";

  os << "[finetune]\n";
  os << "learning_rates = " << join(cfg.finetune.learning_rates, fmt_double) << "\n";
  os << "epochs = " << join(cfg.finetune.epoch_choices, [](int e) { return std::to_string(e); })
     << "\n";
  os << "batch_size = " << cfg.finetune.batch_size << "\n";
  os << "warmup = " << fmt_double(cfg.finetune.warmup_ratio) << "\n\n";

  os << "[transfer]\n";
  os << "fractions = " << join(cfg.transfer.fractions, fmt_double) << "\n";
  os << "seeds = " << join(cfg.transfer.seeds, [](uint64_t s) { return std::to_string(s); })
     << "\n";
  if (!cfg.transfer.task.empty()) os << "task = " << cfg.transfer.task << "\n";
  os << "\n";

  os << "[probe]\n";
  os << "epochs = " << cfg.probe.epochs << "\n";
  os << "lr = " << fmt_double(cfg.probe.learning_rate) << "\n";
  if (!cfg.probe.task.empty()) os << "task = " << cfg.probe.task << "\n";
  os << "\n";

  if (!cfg.ablate.k_values.empty() || !cfg.ablate.alpha_values.empty() ||
      !cfg.ablate.algorithms.empty() || !cfg.ablate.samplers.empty()) {
    os << "[ablate]\n";
    if (!cfg.ablate.k_values.empty())
      os << "k = " << join(cfg.ablate.k_values, [](int k) { return std::to_string(k); }) << "\n";
    if (!cfg.ablate.alpha_values.empty())
      os << "alpha = " << join(cfg.ablate.alpha_values, fmt_double) << "\n";
    if (!cfg.ablate.algorithms.empty())
      os << "algorithm = "
         << join(cfg.ablate.algorithms,
                 [](Algorithm a) { return std::string(algorithm_name(a)); })
         << "\n";
    if (!cfg.ablate.samplers.empty())
      os << "sampler = "
         << join(cfg.ablate.samplers,
                 [](SamplerKind s) {
                   return std::string(s == SamplerKind::kUniform
                                          ? "uniform"
                                          : s == SamplerKind::kPps ? "pps" : "mixed");
                 })
         << "\n";
    os << "\n";
  }

  os << "[output]\n";
  os << "dir = " << cfg.output_dir << "\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// Registry / model construction

TaskRegistry build_registry(const RunConfig& cfg, TsvLoadStats* stats) {
  require(!cfg.tasks.empty(), "config: no tasks declared");
  TaskRegistry registry;
  for (const TaskManifest& m : cfg.tasks) {
    if (m.is_synthetic()) {
      for (Task& t : generate_synthetic(*m.synthetic, m.n_tasks, m.sizes))
        registry.add(std::move(t));
      continue;
    }
    TaskSpec spec;
    spec.name = m.name;
    spec.kind = m.kind;
    spec.n_classes = m.n_classes;
    spec.metric = m.metric;
    spec.role = m.role;
    spec.positive_class = m.positive_class;
    spec.head_name = m.head.empty() ? m.name : m.head;
    registry.add(load_tsv(m.train_path, m.schema, cfg.featurizer, std::move(spec), m.dev_path,
                          m.test_path, stats));
  }
  return registry;
}

ModelSpec build_model(const RunConfig& cfg, const TaskRegistry& registry) {
  ModelSpec model = cfg.model;
  model.input_dim = registry.feature_dim();
  for (const Task& t : registry.all()) {
    const HeadSpec head = t.spec.head_spec();
    auto [it, inserted] = model.heads.emplace(t.spec.head(), head);
    require(inserted || it->second == head,
            "config: tasks sharing head '" + t.spec.head() + "' disagree on its shape");
  }
  model.validate();
  return model;
}

}  // namespace metaopt
