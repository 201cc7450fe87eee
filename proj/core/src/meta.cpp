#include "metaopt/meta.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <future>
#include <sstream>

#include <json.hpp>

namespace metaopt {

using nlohmann::json;

std::string_view algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::kMaml: return "maml";
    case Algorithm::kFomaml: return "fomaml";
    case Algorithm::kReptile: return "reptile";
  }
  return "?";
}

Algorithm algorithm_from_name(std::string_view name) {
  if (name == "maml") return Algorithm::kMaml;
  if (name == "fomaml") return Algorithm::kFomaml;
  if (name == "reptile") return Algorithm::kReptile;
  fail("unknown algorithm '" + std::string(name) + "'");
}

void MetaConfig::validate() const {
  inner.validate();
  outer.validate();
  require(meta_batch >= 1, "meta: meta_batch must be >= 1");
  require(epochs >= 0, "meta: epochs must be >= 0");
  require(batch_size >= 1, "meta: batch_size must be >= 1");
  require(workers >= 1, "meta: workers must be >= 1");
}

std::string MetaConfig::fingerprint_text(const ModelSpec& model) const {
  std::ostringstream os;
  os << "algorithm=" << algorithm_name(algorithm) << ";alpha=" << inner.alpha
     << ";k=" << inner.k << ";beta=" << outer.beta << ";warmup=" << outer.warmup_ratio
     << ";reptile_outer=" << (outer.reptile_outer == OuterRule::kAdam ? "adam" : "sgd")
     << ";grad_outer=" << (outer.grad_outer == OuterRule::kAdam ? "adam" : "sgd")
     << ";meta_batch=" << meta_batch << ";epochs=" << epochs << ";batch=" << batch_size
     << ";seed=" << seed << ";sampler=" << static_cast<int>(sampler.kind) << ":"
     << sampler.mix_ratio << ":" << sampler.target_task << ":" << sampler.include_targets
     << ":" << sampler.seed << ";model=" << model.input_dim << ":";
  for (int64_t d : model.hidden_dims) os << d << ",";
  os << (model.activation == Activation::kTanh ? "tanh" : "relu") << ":" << model.dropout_rate
     << ";heads=";
  for (const auto& [name, head] : model.heads)
    os << name << (head.kind == HeadKind::kClassification ? "#c" : "#r") << head.n_classes << ",";
  return os.str();
}

std::string fingerprint(const MetaConfig& cfg, const ModelSpec& model) {
  const std::string text = cfg.fingerprint_text(model);
  uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

int64_t epoch_steps(const TaskRegistry& registry, const MetaConfig& cfg) {
  int64_t total = 0;
  for (const Task* t : registry.with_role(TaskRole::kAuxiliary)) total += t->spec.n_train;
  require(total > 0, "meta: auxiliary tasks hold no training data");
  const int64_t denom = static_cast<int64_t>(cfg.meta_batch) * cfg.batch_size * cfg.inner.k;
  return (total + denom - 1) / denom;
}

namespace {

struct TaskWork {
  ParamVector direction;  // meta-gradient or adapted params, per algorithm
  double query_loss = 0.0;
  bool with_replacement = false;
};

TaskWork run_task(const ModelSpec& model, const ParamVector& params, const Task& task,
                  const MetaConfig& cfg, uint64_t draw_counter) {
  SupportQuery sq =
      draw_support_query(task.data, task.spec, cfg.inner.k, cfg.batch_size, cfg.seed, draw_counter);
  const uint64_t mask_base = mix_seed(cfg.seed, draw_counter);
  std::vector<LossBuilder> support;
  support.reserve(sq.support.size());
  for (size_t j = 0; j < sq.support.size(); ++j)
    support.push_back(model_loss(
        model, task.spec.head(), sq.support[j],
        make_dropout_masks(model, cfg.batch_size, mix_seed(mask_base, j))));
  LossBuilder query = model_loss(model, task.spec.head(), sq.query,
                                 make_dropout_masks(model, cfg.batch_size,
                                                    mix_seed(mask_base, 0xffff)));

  TaskWork work;
  work.with_replacement = sq.with_replacement;
  switch (cfg.algorithm) {
    case Algorithm::kMaml:
      work.direction = maml_meta_grad(support, query, params, cfg.inner, &work.query_loss);
      break;
    case Algorithm::kFomaml:
      work.direction = fomaml_meta_grad(support, query, params, cfg.inner, &work.query_loss);
      break;
    case Algorithm::kReptile: {
      AdaptResult r = inner_adapt(support, params, cfg.inner, /*record=*/false);
      Graph g;
      NodeId theta = g.placeholder(kThetaName, {params.size()});
      g.set_root(query(g, theta));
      work.query_loss = evaluate(g, {{kThetaName, r.adapted.as_tensor()}}).scalar_value();
      work.direction = std::move(r.adapted);
      break;
    }
  }
  return work;
}

}  // namespace

Checkpoint meta_train(const ModelSpec& model, const ParamVector& init,
                      const TaskRegistry& registry, const MetaConfig& cfg,
                      const ProgressSink& sink) {
  cfg.validate();
  model.validate();
  require(init.layout && init.layout->total() == layout_for(model)->total(),
          "meta_train: initial parameters do not match the model layout");

  TaskSampler sampler(registry, cfg.sampler);
  const int64_t steps_per_epoch = epoch_steps(registry, cfg);
  const int64_t total_steps = steps_per_epoch * cfg.epochs;

  ParamVector params = init;
  AdamState adam = AdamState::zeros(params.size());
  int64_t step = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (int64_t s = 0; s < steps_per_epoch; ++s, ++step) {
      const double epoch_position = static_cast<double>(s) / static_cast<double>(steps_per_epoch);

      std::vector<const Task*> chosen;
      chosen.reserve(static_cast<size_t>(cfg.meta_batch));
      for (int i = 0; i < cfg.meta_batch; ++i)
        chosen.push_back(&registry.get(sampler.sample(epoch_position)));

      std::vector<TaskWork> work(chosen.size());
      auto counter_of = [&](size_t slot) {
        return static_cast<uint64_t>(step) * static_cast<uint64_t>(cfg.meta_batch) + slot;
      };
      if (cfg.workers <= 1) {
        for (size_t i = 0; i < chosen.size(); ++i)
          work[i] = run_task(model, params, *chosen[i], cfg, counter_of(i));
      } else {
        std::vector<std::future<TaskWork>> futures;
        futures.reserve(chosen.size());
        for (size_t i = 0; i < chosen.size(); ++i)
          futures.push_back(std::async(std::launch::async, [&, i] {
            return run_task(model, params, *chosen[i], cfg, counter_of(i));
          }));
        // Collected in slot order regardless of completion order.
        for (size_t i = 0; i < chosen.size(); ++i) work[i] = futures[i].get();
      }

      StepRecord record;
      record.step = step;
      record.epoch = epoch;
      double loss_sum = 0.0;
      for (size_t i = 0; i < work.size(); ++i) {
        record.task_names.push_back(chosen[i]->spec.name);
        loss_sum += work[i].query_loss;
        record.with_replacement = record.with_replacement || work[i].with_replacement;
      }
      record.mean_query_loss = loss_sum / static_cast<double>(work.size());
      require(std::isfinite(record.mean_query_loss), "meta_train: diverged at step " +
                                                          std::to_string(step) +
                                                          " (non-finite query loss)");

      const double schedule_position =
          static_cast<double>(step + 1) / static_cast<double>(total_steps);
      if (cfg.algorithm == Algorithm::kReptile) {
        std::vector<ParamVector> adapted;
        adapted.reserve(work.size());
        for (TaskWork& w : work) adapted.push_back(std::move(w.direction));
        const ParamVector delta = reptile_delta(params, adapted);
        if (cfg.outer.reptile_outer == OuterRule::kSgd) {
          params = axpy(cfg.outer.beta, delta, params);
        } else {
          ParamVector pseudo = delta;
          for (double& v : pseudo.values) v = -v;
          std::tie(params, adam) = adam_step(adam, params, pseudo, cfg.outer, schedule_position);
        }
      } else {
        // Summed over the meta-batch.
        ParamVector total = std::move(work[0].direction);
        for (size_t i = 1; i < work.size(); ++i)
          for (size_t j = 0; j < total.values.size(); ++j)
            total.values[j] += work[i].direction.values[j];
        if (cfg.outer.grad_outer == OuterRule::kSgd) {
          params = axpy(-cfg.outer.beta, total, params);
        } else {
          std::tie(params, adam) = adam_step(adam, params, total, cfg.outer, schedule_position);
        }
      }
      require(params.all_finite(),
              "meta_train: diverged at step " + std::to_string(step) + " (non-finite parameters)");
      if (sink) sink(record);
    }
  }

  Checkpoint ckpt;
  ckpt.params = std::move(params);
  ckpt.model = model;
  ckpt.fingerprint = fingerprint(cfg, model);
  ckpt.step = step;
  ckpt.algorithm = cfg.algorithm;
  ckpt.seed = cfg.seed;
  return ckpt;
}

// ---------------------------------------------------------------------------
// Checkpoint serialization

namespace {

constexpr char kMagic[4] = {'M', 'O', 'P', 'T'};
constexpr uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

template <typename T>
void write_pod(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
bool read_pod(std::istream& in, T* v) {
  in.read(reinterpret_cast<char*>(v), sizeof(T));
  return in.gcount() == sizeof(T);
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  require(ckpt.params.layout != nullptr, "save_checkpoint: params without layout");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), "save_checkpoint: cannot open '" + path + "' for writing");

  json layout = json::array();
  for (const auto& e : ckpt.params.layout->entries())
    layout.push_back({{"name", e.name}, {"shape", e.shape}, {"offset", e.offset}});
  json meta = {
      {"algorithm", algorithm_name(ckpt.algorithm)},
      {"seed", ckpt.seed},
      {"fingerprint", ckpt.fingerprint},
      {"step", ckpt.step},
      {"layout", std::move(layout)},
      {"model",
       {{"input_dim", ckpt.model.input_dim},
        {"hidden_dims", ckpt.model.hidden_dims},
        {"activation", ckpt.model.activation == Activation::kTanh ? "tanh" : "relu"},
        {"dropout", ckpt.model.dropout_rate},
        {"heads", [&] {
           json heads = json::object();
           for (const auto& [name, head] : ckpt.model.heads)
             heads[name] = {{"kind", head.kind == HeadKind::kClassification ? "classification"
                                                                            : "regression"},
                            {"n_classes", head.n_classes}};
           return heads;
         }()}}},
  };
  const std::string blob = meta.dump();

  out.write(kMagic, 4);
  write_pod(out, kVersion);
  write_pod(out, static_cast<uint32_t>(blob.size()));
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  write_pod(out, static_cast<uint64_t>(ckpt.params.values.size()));
  out.write(reinterpret_cast<const char*>(ckpt.params.values.data()),
            static_cast<std::streamsize>(ckpt.params.values.size() * sizeof(double)));
  require(out.good(), "save_checkpoint: write to '" + path + "' failed");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "load_checkpoint: cannot open '" + path + "'");

  char magic[4];
  in.read(magic, 4);
  require(in.gcount() == 4 && std::equal(magic, magic + 4, kMagic),
          "load_checkpoint: '" + path + "' is not a checkpoint file (bad magic)");
  uint32_t version = 0;
  require(read_pod(in, &version), "load_checkpoint: truncated header in '" + path + "'");
  require(version == kVersion, "load_checkpoint: version " + std::to_string(version) +
                                   " not supported (expected " + std::to_string(kVersion) + ")");
  uint32_t meta_len = 0;
  require(read_pod(in, &meta_len), "load_checkpoint: truncated header in '" + path + "'");
  std::string blob(meta_len, '\0');
  in.read(blob.data(), meta_len);
  require(in.gcount() == static_cast<std::streamsize>(meta_len),
          "load_checkpoint: truncated metadata in '" + path + "'");

  json meta = json::parse(blob, nullptr, /*allow_exceptions=*/false);
  require(!meta.is_discarded(), "load_checkpoint: corrupt metadata in '" + path + "'");

  Checkpoint ckpt;
  ckpt.algorithm = algorithm_from_name(meta.at("algorithm").get<std::string>());
  ckpt.seed = meta.at("seed").get<uint64_t>();
  ckpt.fingerprint = meta.at("fingerprint").get<std::string>();
  ckpt.step = meta.at("step").get<int64_t>();

  const json& jm = meta.at("model");
  ckpt.model.input_dim = jm.at("input_dim").get<int64_t>();
  ckpt.model.hidden_dims = jm.at("hidden_dims").get<std::vector<int64_t>>();
  ckpt.model.activation =
      jm.at("activation").get<std::string>() == "tanh" ? Activation::kTanh : Activation::kRelu;
  ckpt.model.dropout_rate = jm.at("dropout").get<double>();
  for (const auto& [name, jh] : jm.at("heads").items()) {
    HeadSpec head;
    head.kind = jh.at("kind").get<std::string>() == "classification" ? HeadKind::kClassification
                                                                     : HeadKind::kRegression;
    head.n_classes = jh.at("n_classes").get<int64_t>();
    ckpt.model.heads[name] = head;
  }

  std::vector<ParamLayout::Entry> entries;
  for (const auto& je : meta.at("layout")) {
    ParamLayout::Entry e;
    e.name = je.at("name").get<std::string>();
    e.shape = je.at("shape").get<Shape>();
    e.offset = je.at("offset").get<int64_t>();
    entries.push_back(std::move(e));
  }
  auto layout = std::make_shared<const ParamLayout>(std::move(entries));

  uint64_t count = 0;
  require(read_pod(in, &count), "load_checkpoint: truncated parameter header in '" + path + "'");
  require(static_cast<int64_t>(count) == layout->total(),
          "load_checkpoint: layout expects " + std::to_string(layout->total()) +
              " parameters, file holds " + std::to_string(count));
  const auto model_total = layout_for(ckpt.model)->total();
  require(model_total == layout->total(),
          "load_checkpoint: layout mismatch, model needs " + std::to_string(model_total) +
              " parameters, checkpoint holds " + std::to_string(layout->total()));

  ckpt.params.layout = layout;
  ckpt.params.values.resize(count);
  in.read(reinterpret_cast<char*>(ckpt.params.values.data()),
          static_cast<std::streamsize>(count * sizeof(double)));
  require(in.gcount() == static_cast<std::streamsize>(count * sizeof(double)),
          "load_checkpoint: truncated parameter data in '" + path + "'");
  return ckpt;
}

}  // namespace metaopt
