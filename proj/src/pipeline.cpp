#include "probelab/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>

#include <json.hpp>

#include "probelab/io.hpp"
#include "probelab/parallel.hpp"
#include "probelab/response_eval.hpp"

namespace probelab {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

std::string schedule_slug(const std::string& name) {
  std::string out;
  for (char c : name) {
    if (c == '>') out += "_to_";
    else if (c == '-') out += '_';
    else out += c;
  }
  return out;
}

namespace {

class Stopwatch {
 public:
  Stopwatch() : t0_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point t0_;
};

struct Paths {
  fs::path root;
  explicit Paths(const ExperimentConfig& cfg) : root(cfg.out_dir) {}
  fs::path dataset(TaskKind k, const std::string& split) const {
    return root / "datasets" /
           (std::string(task_kind_name(k)) + "_" + split + ".tsv");
  }
  fs::path manifest() const { return root / "datasets" / "manifest.json"; }
  fs::path base_ckpt() const { return root / "base" / "checkpoint.ckpt"; }
  fs::path base_log() const { return root / "base" / "train_log.csv"; }
  fs::path base_summary() const { return root / "base" / "summary.json"; }
  fs::path probe_curve(TaskKind k) const {
    return root / "probe" / (std::string(task_kind_name(k)) + "_curve.csv");
  }
  fs::path probe_gap(TaskKind k) const {
    return root / "probe" / (std::string(task_kind_name(k)) + "_gap.json");
  }
  fs::path probe_responses(TaskKind k) const {
    return root / "probe" / (std::string(task_kind_name(k)) + "_responses.csv");
  }
  fs::path probe_plot(TaskKind k) const {
    return root / "probe" / (std::string(task_kind_name(k)) + "_plot.csv");
  }
  fs::path plan() const { return root / "finetune" / "plan.json"; }
  fs::path ft_dir(TaskKind k, const std::string& config) const {
    return root / "finetune" / task_kind_name(k) / schedule_slug(config);
  }
  fs::path timing(const std::string& cmd) const {
    return root / "timings" / (cmd + ".json");
  }
  fs::path config_echo() const { return root / "config_resolved.json"; }
  fs::path report_json() const { return root / "report" / "report.json"; }
  fs::path report_csv() const { return root / "report" / "summary.csv"; }
};

void write_config_echo(const ExperimentConfig& cfg) {
  atomic_write_file(Paths(cfg).config_echo(), config_to_json_text(cfg));
}

ModelConfig full_model_config(const ExperimentConfig& cfg, const Tokenizer& tok) {
  ModelConfig mc = cfg.model;
  if (mc.vocab_size == 0) mc.vocab_size = static_cast<size_t>(tok.vocab_size());
  return mc;
}

TaskSizes sizes_for(const ExperimentConfig& cfg, TaskKind k) {
  const auto it = cfg.tasks.find(task_kind_name(k));
  if (it == cfg.tasks.end())
    throw ConfigError(std::string("no sizes configured for task ") +
                      task_kind_name(k));
  return it->second;
}

Dataset load_split(const Paths& paths, TaskKind k, const std::string& split) {
  Dataset ds = read_dataset(paths.dataset(k, split).string());
  ds.split = split;
  return ds;
}

std::vector<TaskKind> all_kinds() {
  return {TaskKind::visual_attr, TaskKind::word_rec, TaskKind::structure,
          TaskKind::figure, TaskKind::doc_qa};
}

json gap_to_json(const GapReport& g, TaskKind task, size_t n_test,
                 double unparseable_rate) {
  json j;
  j["a_resp"] = g.a_resp;
  j["max_lp"] = g.max_lp;
  j["argmax_layer"] = g.argmax_layer;
  j["token_type"] = token_type_name(g.token_type);
  j["gap"] = g.gap;
  j["task"] = task_kind_name(task);
  j["n_test"] = n_test;
  j["unparseable_rate"] = unparseable_rate;
  return j;
}

std::string plot_csv(const LayerAccuracyCurve& curve, double a_resp) {
  std::string out = "layer,image,text,all,last,a_resp\n";
  for (size_t l = 0; l < curve.n_layers; ++l) {
    out += std::to_string(l);
    for (TokenType t : token_types()) out += "," + fmt_fixed(curve.at(l, t), 6);
    out += "," + fmt_fixed(a_resp, 6) + "\n";
  }
  return out;
}

// --- generate ----------------------------------------------------------

void run_generate(const ExperimentConfig& cfg) {
  const Paths paths(cfg);
  const Stopwatch watch;
  TaskGenConfig gen{cfg.model.image_px};
  json manifest;
  manifest["seed"] = cfg.seed;
  json files = json::array();
  for (TaskKind k : all_kinds()) {
    const TaskSizes sz = sizes_for(cfg, k);
    for (const std::string split : {"train", "test"}) {
      const size_t n = split == "train" ? sz.train : sz.test;
      const uint64_t seed =
          derive_seed(cfg.seed, std::string(task_kind_name(k)) + "-" + split);
      Dataset ds = generate_dataset(k, n, seed, gen);
      ds.split = split;
      const fs::path path = paths.dataset(k, split);
      write_dataset(ds, path.string());
      const auto bytes = read_binary_file(path);
      char checksum[32];
      std::snprintf(checksum, sizeof(checksum), "%016llx",
                    static_cast<unsigned long long>(
                        fnv1a64(bytes.data(), bytes.size())));
      json entry;
      entry["file"] = path.filename().string();
      entry["task"] = task_kind_name(k);
      entry["split"] = split;
      entry["n"] = n;
      entry["seed"] = seed;
      entry["checksum"] = checksum;
      files.push_back(entry);
      std::printf("generate %s/%s: %zu samples\n", task_kind_name(k), split.c_str(), n);
    }
  }
  manifest["files"] = files;
  atomic_write_file(paths.manifest(), manifest.dump(2) + "\n");
  write_config_echo(cfg);
  json t;
  t["seconds"] = watch.seconds();
  atomic_write_file(paths.timing("generate"), t.dump(2) + "\n");
}

// --- train-base --------------------------------------------------------

template <typename T>
void run_train_base(const ExperimentConfig& cfg) {
  const Paths paths(cfg);
  const Stopwatch watch;
  const Tokenizer tok;
  std::map<TaskKind, Dataset> train_sets, val_sets;
  for (TaskKind k : all_kinds())
    train_sets.emplace(k, load_split(paths, k, "train"));
  TaskGenConfig gen{cfg.model.image_px};
  for (TaskKind k : binary_kinds()) {
    Dataset val = generate_dataset(k, cfg.train_base.val_samples,
                                   derive_seed(cfg.seed, std::string(task_kind_name(k)) + "-val"),
                                   gen);
    val.split = "val";
    val_sets.emplace(k, std::move(val));
  }

  Model<T> model(full_model_config(cfg, tok), derive_seed(cfg.seed, "model"));
  TrainBaseConfig tb = cfg.train_base;
  tb.workers = cfg.workers;
  tb.gen_max_new = cfg.gen_max_new;
  const TrainBaseResult result = train_base(model, train_sets, val_sets, tok, tb,
                                            derive_seed(cfg.seed, "train-base"));
  model.save_checkpoint(paths.base_ckpt().string());
  atomic_write_file(paths.base_log(), result.log_csv);

  json summary;
  summary["band_entered"] = result.band_entered;
  summary["epochs_run"] = result.epochs_run;
  summary["band_lo"] = tb.band_lo;
  summary["band_hi"] = tb.band_hi;
  summary["val_accuracy"] = result.final_val_acc;
  summary["param_count"] = model.param_count();
  summary["precision"] = precision_name(cfg.precision);
  atomic_write_file(paths.base_summary(), summary.dump(2) + "\n");
  write_config_echo(cfg);
  if (!result.band_entered)
    std::fprintf(stderr,
                 "warning: response accuracy band not reached before the epoch "
                 "cap; checkpoint written anyway\n");
  for (const auto& [task, acc] : result.final_val_acc)
    std::printf("train-base %s val accuracy %.4f\n", task.c_str(), acc);
  json t;
  t["seconds"] = watch.seconds();
  atomic_write_file(paths.timing("train-base"), t.dump(2) + "\n");
}

// --- probe -------------------------------------------------------------

template <typename T>
void run_probe(const ExperimentConfig& cfg) {
  const Paths paths(cfg);
  const Stopwatch watch;
  const Tokenizer tok;
  const Model<T> model = Model<T>::load_checkpoint(paths.base_ckpt().string());
  const TokenType gap_type = token_type_from(cfg.gap_token_type);
  json timing;
  for (TaskKind k : binary_kinds()) {
    const Stopwatch task_watch;
    const Dataset train = load_split(paths, k, "train");
    const Dataset test = load_split(paths, k, "test");
    const LayerAccuracyCurve curve =
        probe_sweep(model, train, test, tok,
                    derive_seed(cfg.seed, "sweep", static_cast<uint64_t>(k)),
                    cfg.probe_config(), cfg.workers);
    const ResponseEval eval =
        evaluate_responses(model, test, tok, cfg.gen_max_new, cfg.workers);
    const GapReport g = gap(curve, eval.a_resp, gap_type);
    atomic_write_file(paths.probe_curve(k), curve_to_csv(curve));
    atomic_write_file(paths.probe_responses(k), responses_to_csv(eval.records));
    atomic_write_file(paths.probe_gap(k),
                      gap_to_json(g, k, test.size(), eval.unparseable_rate).dump(2) + "\n");
    atomic_write_file(paths.probe_plot(k), plot_csv(curve, eval.a_resp));
    timing[task_kind_name(k)] = task_watch.seconds();
    std::printf("probe %s: a_resp %.4f, max_lp %.4f (layer %zu, %s), gap %.4f\n",
                task_kind_name(k), g.a_resp, g.max_lp, g.argmax_layer,
                token_type_name(g.token_type), g.gap);
  }
  write_config_echo(cfg);
  timing["seconds"] = watch.seconds();
  atomic_write_file(paths.timing("probe"), timing.dump(2) + "\n");
}

// --- finetune ----------------------------------------------------------

LayerGroupPlan resolve_plan(const ExperimentConfig& cfg, const Paths& paths,
                            size_t n_layers, std::string* source) {
  if (cfg.finetune.boundaries) {
    *source = "manual";
    return make_plan(cfg.finetune.boundaries->first, cfg.finetune.boundaries->second,
                     n_layers);
  }
  // Mean last-token series over the binary tasks' base curves.
  LayerAccuracyCurve mean;
  mean.n_layers = n_layers;
  mean.acc.assign(n_layers * 4, 0.0);
  size_t found = 0;
  for (TaskKind k : binary_kinds()) {
    const fs::path p = paths.probe_curve(k);
    if (!fs::exists(p)) continue;
    const LayerAccuracyCurve c = curve_from_csv(read_text_file(p));
    if (c.n_layers != n_layers)
      throw ContractError("probe curve layer count does not match the checkpoint");
    for (size_t i = 0; i < c.acc.size(); ++i) mean.acc[i] += c.acc[i];
    ++found;
  }
  if (found == 0)
    throw IoError("no probe curves found under " +
                  (paths.root / "probe").string() + "; run the probe command first");
  for (double& v : mean.acc) v /= static_cast<double>(found);
  *source = "segmented";
  return segment_layers(mean);
}

template <typename T>
void run_finetune_cmd(const ExperimentConfig& cfg) {
  const Paths paths(cfg);
  const Stopwatch watch;
  const Tokenizer tok;
  const Model<T> base = Model<T>::load_checkpoint(paths.base_ckpt().string());
  std::string plan_source;
  const LayerGroupPlan plan =
      resolve_plan(cfg, paths, base.config().n_layers, &plan_source);
  {
    json pj;
    pj["l1"] = plan.l1;
    pj["l2"] = plan.l2;
    pj["n_layers"] = plan.n_layers;
    pj["source"] = plan_source;
    atomic_write_file(paths.plan(), pj.dump(2) + "\n");
  }
  std::printf("finetune plan: lower [0,%zu) middle [%zu,%zu) upper [%zu,%zu)\n",
              plan.l1, plan.l1, plan.l2, plan.l2, plan.n_layers);

  const TokenType gap_type = token_type_from(cfg.gap_token_type);
  json timing;
  for (const std::string& task_name : cfg.finetune.tasks) {
    const TaskKind k = task_kind_from(task_name);
    const Dataset train = load_split(paths, k, "train");
    const Dataset test = load_split(paths, k, "test");
    for (const std::string& config_name : cfg.finetune.configs) {
      const Stopwatch job_watch;
      const bool docqa = k == TaskKind::doc_qa;
      const int total_epochs =
          docqa ? cfg.finetune.docqa_total_epochs : cfg.finetune.total_epochs;
      const TuneSchedule sched = plan_schedule(config_name, plan, total_epochs);
      FinetuneHyper hyper;
      hyper.lr = docqa ? cfg.finetune.docqa_lr : cfg.finetune.lr;
      hyper.batch = docqa ? cfg.finetune.docqa_batch : cfg.finetune.batch;
      hyper.workers = cfg.workers;
      Model<T> model = base;
      const FinetuneResult ft =
          run_finetune(model, train, sched, hyper, tok,
                       derive_seed(cfg.seed, "ft-" + task_name + "-" + config_name));
      const fs::path dir = paths.ft_dir(k, config_name);
      model.save_checkpoint((dir / "checkpoint.ckpt").string());

      json result;
      result["task"] = task_name;
      result["config"] = config_name;
      result["budget"] = effective_budget(sched, model);
      json steps = json::array();
      for (const TuneStep& st : sched.steps)
        steps.push_back({{"layer_begin", st.layer_begin},
                         {"layer_end", st.layer_end},
                         {"epochs", st.epochs}});
      result["steps"] = steps;
      result["total_epochs"] = sched.total_epochs;
      if (docqa) {
        std::vector<std::string> preds(test.size());
        std::vector<std::vector<std::string>> golds(test.size());
        parallel_for(test.size(), cfg.workers, [&](size_t i) {
          const TaskSample& s = test.samples[i];
          preds[i] = model.generate(tok.encode(s.question), s.image, 8, tok);
          golds[i] = {s.gold_answer};
        });
        result["anls"] = anls(preds, golds, cfg.anls_tau);
        std::printf("finetune %s/%s: anls %.4f (budget %.1f)\n", task_name.c_str(),
                    config_name.c_str(), result["anls"].get<double>(),
                    result["budget"].get<double>());
      } else {
        const ResponseEval eval =
            evaluate_responses(model, test, tok, cfg.gen_max_new, cfg.workers);
        result["a_resp"] = eval.a_resp;
        result["unparseable_rate"] = eval.unparseable_rate;
        if (cfg.finetune.probe_after) {
          const LayerAccuracyCurve curve = probe_sweep(
              model, train, test, tok,
              derive_seed(cfg.seed, "ft-sweep-" + task_name + "-" + config_name),
              cfg.probe_config(), cfg.workers);
          atomic_write_file(dir / "curve.csv", curve_to_csv(curve));
          const GapReport g = gap(curve, eval.a_resp, gap_type);
          result["max_lp"] = g.max_lp;
          result["argmax_layer"] = g.argmax_layer;
          result["gap"] = g.gap;
        }
        std::printf("finetune %s/%s: a_resp %.4f (budget %.1f)\n", task_name.c_str(),
                    config_name.c_str(), eval.a_resp, result["budget"].get<double>());
      }
      atomic_write_file(dir / "result.json", result.dump(2) + "\n");
      json jt;
      jt["step_seconds"] = ft.step_seconds;
      jt["seconds"] = job_watch.seconds();
      timing[task_name + "/" + config_name] = jt;
    }
  }
  write_config_echo(cfg);
  timing["seconds"] = watch.seconds();
  atomic_write_file(paths.timing("finetune"), timing.dump(2) + "\n");
}

// --- report ------------------------------------------------------------

void run_report(const ExperimentConfig& cfg) {
  const Paths paths(cfg);
  const Stopwatch watch;
  json report;
  report["seed"] = cfg.seed;
  report["precision"] = precision_name(cfg.precision);

  std::string csv = "task,config,budget,a_resp,max_lp,argmax_layer,gap,anls\n";
  json tasks;
  for (TaskKind k : binary_kinds()) {
    const fs::path gp = paths.probe_gap(k);
    if (!fs::exists(gp)) continue;
    const json g = json::parse(read_text_file(gp));
    json t;
    t["base"] = g;
    t["curve_csv"] = paths.probe_curve(k).lexically_relative(paths.root).string();
    tasks[task_kind_name(k)] = t;
    csv += std::string(task_kind_name(k)) + ",Base,0.0," +
           fmt_fixed(g["a_resp"].get<double>(), 6) + "," +
           fmt_fixed(g["max_lp"].get<double>(), 6) + "," +
           std::to_string(g["argmax_layer"].get<size_t>()) + "," +
           fmt_fixed(g["gap"].get<double>(), 6) + ",\n";
  }
  report["tasks"] = tasks;

  json ft_rows = json::array();
  const fs::path ft_root = paths.root / "finetune";
  if (fs::exists(ft_root)) {
    std::vector<fs::path> results;
    for (const auto& e : fs::recursive_directory_iterator(ft_root))
      if (e.is_regular_file() && e.path().filename() == "result.json")
        results.push_back(e.path());
    std::sort(results.begin(), results.end());
    for (const fs::path& p : results) {
      const json r = json::parse(read_text_file(p));
      ft_rows.push_back(r);
      csv += r["task"].get<std::string>() + "," + r["config"].get<std::string>() + "," +
             fmt_fixed(r["budget"].get<double>(), 4) + ",";
      csv += r.contains("a_resp") ? fmt_fixed(r["a_resp"].get<double>(), 6) : "";
      csv += ",";
      csv += r.contains("max_lp") ? fmt_fixed(r["max_lp"].get<double>(), 6) : "";
      csv += ",";
      csv += r.contains("argmax_layer")
                 ? std::to_string(r["argmax_layer"].get<size_t>())
                 : "";
      csv += ",";
      csv += r.contains("gap") ? fmt_fixed(r["gap"].get<double>(), 6) : "";
      csv += ",";
      csv += r.contains("anls") ? fmt_fixed(r["anls"].get<double>(), 6) : "";
      csv += "\n";
    }
  }
  report["finetune"] = ft_rows;
  if (fs::exists(paths.plan()))
    report["plan"] = json::parse(read_text_file(paths.plan()));
  if (fs::exists(paths.base_summary()))
    report["base_training"] = json::parse(read_text_file(paths.base_summary()));

  atomic_write_file(paths.report_json(), report.dump(2) + "\n");
  atomic_write_file(paths.report_csv(), csv);
  std::printf("report written to %s\n", paths.report_json().string().c_str());
  json t;
  t["seconds"] = watch.seconds();
  atomic_write_file(paths.timing("report"), t.dump(2) + "\n");
}

}  // namespace

void cmd_generate(const ExperimentConfig& cfg) { run_generate(cfg); }

void cmd_train_base(const ExperimentConfig& cfg) {
  if (cfg.precision == Precision::f32) run_train_base<float>(cfg);
  else run_train_base<double>(cfg);
}

void cmd_probe(const ExperimentConfig& cfg) {
  if (cfg.precision == Precision::f32) run_probe<float>(cfg);
  else run_probe<double>(cfg);
}

void cmd_finetune(const ExperimentConfig& cfg) {
  if (cfg.precision == Precision::f32) run_finetune_cmd<float>(cfg);
  else run_finetune_cmd<double>(cfg);
}

void cmd_report(const ExperimentConfig& cfg) { run_report(cfg); }

}  // namespace probelab
