#include "metaopt/runner.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

namespace metaopt {

namespace fs = std::filesystem;
using nlohmann::json;

std::string checkpoint_path(const std::string& out_dir) { return out_dir + "/checkpoint.bin"; }
std::string steps_path(const std::string& out_dir) { return out_dir + "/steps.jsonl"; }
std::string manifest_path(const std::string& out_dir) { return out_dir + "/manifest.txt"; }

RunConfig resolve_config(const RunOptions& opts) {
  std::ifstream in(opts.config_path);
  require(in.good(), "config: cannot open '" + opts.config_path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();

  std::vector<std::string> overrides = opts.overrides;
  if (opts.seed) overrides.push_back("meta.seed=" + std::to_string(*opts.seed));
  if (opts.workers) overrides.push_back("meta.workers=" + std::to_string(*opts.workers));
  if (opts.out_dir) overrides.push_back("output.dir=" + *opts.out_dir);
  return parse_config_text(buf.str(), overrides, opts.config_path);
}

namespace {

std::string file_stem(std::string name) {
  for (char& c : name)
    if (c == '/' || c == '\\') c = '_';
  return name;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::trunc);
  require(out.good(), "run: cannot write '" + path + "'");
  out << content;
}

void write_manifest(const RunOptions& opts, const RunConfig& cfg) {
  std::ostringstream os;
  os << "# " << kVersionString << "\n";
  os << "# subcommand: " << opts.subcommand << "\n";
  for (const std::string& o : opts.overrides) os << "# override: " << o << "\n";
  if (opts.seed) os << "# override: meta.seed=" << *opts.seed << "\n";
  if (opts.workers) os << "# override: meta.workers=" << *opts.workers << "\n";
  if (opts.out_dir) os << "# override: output.dir=" << *opts.out_dir << "\n";
  os << "# resolved configuration follows\n\n";
  os << emit_config(cfg);
  write_file(manifest_path(cfg.output_dir), os.str());
}

ParamVector initial_params(const RunConfig& cfg, const ModelSpec& model,
                           const TaskRegistry& registry) {
  ParamVector init = init_params(model, cfg.meta.seed);
  if (cfg.init.kind == InitConfig::Kind::kRandom) return init;

  std::string task_name = cfg.init.task;
  if (task_name.empty()) {
    // Largest auxiliary task.
    int64_t best = -1;
    for (const Task* t : registry.with_role(TaskRole::kAuxiliary))
      if (t->spec.n_train > best) {
        best = t->spec.n_train;
        task_name = t->spec.name;
      }
  }
  const Task& task = registry.get(task_name);
  TrainSettings settings;
  settings.learning_rate = cfg.init.learning_rate;
  settings.epochs = cfg.init.epochs;
  settings.batch_size = cfg.meta.batch_size;
  settings.seed = cfg.meta.seed;
  return train_supervised(model, init, task.spec.head(), task.data.train, settings);
}

Checkpoint run_meta_train(const RunOptions& opts, const RunConfig& cfg) {
  TsvLoadStats stats;
  TaskRegistry registry = build_registry(cfg, &stats);
  if (stats.malformed > 0)
    std::cerr << "warning: skipped " << stats.malformed << " malformed row(s) out of "
              << stats.rows << " while loading task data\n";
  ModelSpec model = build_model(cfg, registry);
  ParamVector init = initial_params(cfg, model, registry);

  std::ofstream steps(steps_path(cfg.output_dir), std::ios::trunc);
  require(steps.good(), "run: cannot write '" + steps_path(cfg.output_dir) + "'");
  ProgressSink sink = [&steps](const StepRecord& r) {
    json j = {{"step", r.step},
              {"epoch", r.epoch},
              {"task_names", r.task_names},
              {"mean_query_loss", r.mean_query_loss}};
    if (r.with_replacement) j["with_replacement"] = true;
    steps << j.dump() << "\n";
  };

  Checkpoint ckpt = meta_train(model, init, registry, cfg.meta, sink);
  save_checkpoint(ckpt, opts.checkpoint_path.empty() ? checkpoint_path(cfg.output_dir)
                                                     : opts.checkpoint_path);
  return ckpt;
}

Checkpoint load_for_eval(const RunOptions& opts, const RunConfig& cfg) {
  const std::string path =
      opts.checkpoint_path.empty() ? checkpoint_path(cfg.output_dir) : opts.checkpoint_path;
  Checkpoint ckpt = load_checkpoint(path);
  TaskRegistry registry = build_registry(cfg);
  const ModelSpec model = build_model(cfg, registry);
  const std::string expected = fingerprint(cfg.meta, model);
  if (ckpt.fingerprint != expected) {
    const std::string msg = "checkpoint '" + path + "' was produced by a different configuration "
                            "(fingerprint " + ckpt.fingerprint + ", expected " + expected + ")";
    if (!opts.force) fail(msg + "; pass --force to use it anyway");
    std::cerr << "warning: " << msg << "\n";
  }
  return ckpt;
}

const Task& pick_target(const TaskRegistry& registry, const std::string& configured,
                        const char* what) {
  if (!configured.empty()) return registry.get(configured);
  const auto targets = registry.with_role(TaskRole::kTarget);
  require(!targets.empty(), std::string(what) + ": no target task declared");
  return *targets.front();
}

void run_finetune(const RunOptions& opts, const RunConfig& cfg) {
  Checkpoint ckpt = load_for_eval(opts, cfg);
  TaskRegistry registry = build_registry(cfg);
  const auto targets = registry.with_role(TaskRole::kTarget);
  require(!targets.empty(), "finetune: no target task declared");

  std::vector<MetricReport> reports;
  for (const Task* task : targets) {
    auto [params, report] = finetune(ckpt, *task, cfg.finetune, cfg.meta.seed);
    write_file(cfg.output_dir + "/finetune_" + file_stem(report.task) + ".json",
               report_to_json(report) + "\n");
    reports.push_back(std::move(report));
  }
  write_file(cfg.output_dir + "/finetune.csv", reports_to_csv(reports));
}

void run_transfer(const RunOptions& opts, const RunConfig& cfg) {
  Checkpoint ckpt = load_for_eval(opts, cfg);
  TaskRegistry registry = build_registry(cfg);
  const Task& task = pick_target(registry, cfg.transfer.task, "transfer");

  const auto reports = transfer_sweep(ckpt, task, cfg.transfer.fractions, cfg.finetune,
                                      cfg.transfer.seeds);
  std::ostringstream jsonl;
  for (const MetricReport& r : reports) jsonl << report_to_json(r) << "\n";
  write_file(cfg.output_dir + "/transfer_" + file_stem(task.spec.name) + ".jsonl", jsonl.str());
  write_file(cfg.output_dir + "/transfer.csv", reports_to_csv(reports));
  write_file(cfg.output_dir + "/transfer_summary.csv", transfer_summary_csv(reports));
}

void run_probe(const RunOptions& opts, const RunConfig& cfg) {
  Checkpoint ckpt = load_for_eval(opts, cfg);
  TaskRegistry registry = build_registry(cfg);
  const Task& task = pick_target(registry, cfg.probe.task, "probe");

  auto [params, report] =
      probe(ckpt, task, cfg.probe.epochs, cfg.probe.learning_rate, cfg.meta.seed);
  write_file(cfg.output_dir + "/probe_" + file_stem(task.spec.name) + ".json",
             report_to_json(report) + "\n");
}

// One row per setting: axis values then the dev metric of every target task.
void run_ablate(const RunOptions& opts, const RunConfig& cfg) {
  struct Setting {
    Algorithm algorithm;
    SamplerKind sampler;
    int k;
    double alpha;
    bool operator==(const Setting&) const = default;
  };
  const Setting base{cfg.meta.algorithm, cfg.meta.sampler.kind, cfg.meta.inner.k,
                     cfg.meta.inner.alpha};
  std::vector<Setting> settings;
  auto add = [&](Setting s) {
    if (std::find(settings.begin(), settings.end(), s) == settings.end()) settings.push_back(s);
  };
  for (Algorithm a : cfg.ablate.algorithms) add({a, base.sampler, base.k, base.alpha});
  for (SamplerKind s : cfg.ablate.samplers) add({base.algorithm, s, base.k, base.alpha});
  for (int k : cfg.ablate.k_values) add({base.algorithm, base.sampler, k, base.alpha});
  for (double alpha : cfg.ablate.alpha_values)
    add({base.algorithm, base.sampler, base.k, alpha});
  require(!settings.empty(), "ablate: [ablate] section declares no axis values");

  TaskRegistry registry = build_registry(cfg);
  ModelSpec model = build_model(cfg, registry);
  const auto targets = registry.with_role(TaskRole::kTarget);
  require(!targets.empty(), "ablate: no target task declared");

  std::ostringstream csv;
  csv << "algorithm,sampler,k,alpha";
  for (const Task* t : targets) csv << ',' << t->spec.name;
  csv << "\n";
  for (const Setting& s : settings) {
    RunConfig variant = cfg;
    variant.meta.algorithm = s.algorithm;
    variant.meta.sampler.kind = s.sampler;
    variant.meta.inner.k = s.k;
    variant.meta.inner.alpha = s.alpha;
    ParamVector init = initial_params(variant, model, registry);
    Checkpoint ckpt = meta_train(model, init, registry, variant.meta, nullptr);
    csv << algorithm_name(s.algorithm) << ','
        << (s.sampler == SamplerKind::kUniform ? "uniform"
                                               : s.sampler == SamplerKind::kPps ? "pps" : "mixed")
        << ',' << s.k << ',' << s.alpha;
    for (const Task* task : targets) {
      auto [params, report] = finetune(ckpt, *task, cfg.finetune, cfg.meta.seed);
      csv << ',' << report.dev_primary();
    }
    csv << "\n";
  }
  write_file(cfg.output_dir + "/ablate.csv", csv.str());
  (void)opts;
}

}  // namespace

void execute(const RunOptions& opts) {
  const RunConfig cfg = resolve_config(opts);
  fs::create_directories(cfg.output_dir);
  write_manifest(opts, cfg);

  if (opts.subcommand == "meta-train")
    run_meta_train(opts, cfg);
  else if (opts.subcommand == "finetune")
    run_finetune(opts, cfg);
  else if (opts.subcommand == "transfer")
    run_transfer(opts, cfg);
  else if (opts.subcommand == "probe")
    run_probe(opts, cfg);
  else if (opts.subcommand == "ablate")
    run_ablate(opts, cfg);
  else
    fail("unknown subcommand '" + opts.subcommand +
         "' (expected meta-train, finetune, transfer, probe or ablate)");
}

}  // namespace metaopt
