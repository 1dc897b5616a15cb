#include "probelab/config.hpp"

#include <json.hpp>

#include "probelab/io.hpp"

namespace probelab {

using json = nlohmann::ordered_json;

ExperimentConfig::ExperimentConfig() {
  for (TaskKind k : {TaskKind::visual_attr, TaskKind::word_rec, TaskKind::structure,
                     TaskKind::figure, TaskKind::doc_qa})
    tasks.emplace(task_kind_name(k), TaskSizes{});
}

void ExperimentConfig::validate() const {
  ModelConfig m = model;
  if (m.vocab_size == 0) m.vocab_size = static_cast<size_t>(Tokenizer().vocab_size());
  m.validate();
  for (const auto& [name, sz] : tasks) {
    task_kind_from(name);
    if (sz.train == 0 || sz.test == 0)
      throw ConfigError("task '" + name + "' has a zero-sized split");
  }
  for (const auto& name : finetune.configs) {
    bool known = false;
    for (const auto& s : schedule_names()) known = known || s == name;
    if (!known) throw ConfigError("unknown fine-tune configuration '" + name + "'");
  }
  for (const auto& name : finetune.tasks) task_kind_from(name);
  if (anls_tau < 0.0 || anls_tau > 1.0)
    throw ConfigError("anls_tau must be in [0, 1]");
  token_type_from(gap_token_type);
  if (gen_max_new < 1) throw ConfigError("gen_max_new must be >= 1");
  if (train_base.band_lo >= train_base.band_hi)
    throw ConfigError("train_base band is empty");
}

namespace {

LrKind lr_kind_from(const std::string& s) {
  if (s == "cosine") return LrKind::cosine;
  if (s == "constant") return LrKind::constant;
  throw ConfigError("unknown schedule kind '" + s + "'");
}

const char* lr_kind_name(LrKind k) {
  return k == LrKind::cosine ? "cosine" : "constant";
}

template <typename V>
void read_to(const json& j, const char* key, V& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<V>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config field '") + key + "': " + e.what());
  }
}

}  // namespace

ExperimentConfig config_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig cfg;
  read_to(j, "seed", cfg.seed);
  if (j.contains("precision")) {
    const std::string p = j.at("precision").get<std::string>();
    if (p == "f32") cfg.precision = Precision::f32;
    else if (p == "f64") cfg.precision = Precision::f64;
    else throw ConfigError("precision must be f32 or f64");
  }
  read_to(j, "workers", cfg.workers);
  read_to(j, "out_dir", cfg.out_dir);
  if (j.contains("model")) {
    const json& m = j.at("model");
    read_to(m, "d_model", cfg.model.d_model);
    read_to(m, "n_layers", cfg.model.n_layers);
    read_to(m, "n_heads", cfg.model.n_heads);
    read_to(m, "patch_px", cfg.model.patch_px);
    read_to(m, "image_px", cfg.model.image_px);
    read_to(m, "max_seq", cfg.model.max_seq);
  }
  if (j.contains("tasks")) {
    for (const auto& [name, sizes] : j.at("tasks").items()) {
      TaskSizes sz;
      read_to(sizes, "train", sz.train);
      read_to(sizes, "test", sz.test);
      cfg.tasks[name] = sz;
    }
  }
  if (j.contains("probe")) {
    const json& p = j.at("probe");
    read_to(p, "lr", cfg.probe.lr);
    read_to(p, "batch", cfg.probe.batch);
    read_to(p, "epochs", cfg.probe.epochs);
    if (p.contains("schedule"))
      cfg.probe.schedule = lr_kind_from(p.at("schedule").get<std::string>());
    read_to(p, "paper_recipe", cfg.probe_paper_recipe);
  }
  if (j.contains("train_base")) {
    const json& t = j.at("train_base");
    read_to(t, "lr", cfg.train_base.lr);
    read_to(t, "batch", cfg.train_base.batch);
    read_to(t, "max_epochs", cfg.train_base.max_epochs);
    if (t.contains("schedule"))
      cfg.train_base.schedule = lr_kind_from(t.at("schedule").get<std::string>());
    read_to(t, "band_lo", cfg.train_base.band_lo);
    read_to(t, "band_hi", cfg.train_base.band_hi);
    read_to(t, "band_min_tasks", cfg.train_base.band_min_tasks);
    read_to(t, "checks_per_epoch", cfg.train_base.checks_per_epoch);
    read_to(t, "val_samples", cfg.train_base.val_samples);
  }
  if (j.contains("finetune")) {
    const json& f = j.at("finetune");
    read_to(f, "configs", cfg.finetune.configs);
    read_to(f, "tasks", cfg.finetune.tasks);
    read_to(f, "total_epochs", cfg.finetune.total_epochs);
    read_to(f, "lr", cfg.finetune.lr);
    read_to(f, "batch", cfg.finetune.batch);
    read_to(f, "docqa_total_epochs", cfg.finetune.docqa_total_epochs);
    read_to(f, "docqa_lr", cfg.finetune.docqa_lr);
    read_to(f, "docqa_batch", cfg.finetune.docqa_batch);
    read_to(f, "probe_after", cfg.finetune.probe_after);
    if (f.contains("boundaries") && !f.at("boundaries").is_null()) {
      const auto b = f.at("boundaries").get<std::vector<size_t>>();
      if (b.size() != 2) throw ConfigError("boundaries must be [l1, l2]");
      cfg.finetune.boundaries = {b[0], b[1]};
    }
  }
  read_to(j, "anls_tau", cfg.anls_tau);
  read_to(j, "gap_token_type", cfg.gap_token_type);
  read_to(j, "gen_max_new", cfg.gen_max_new);
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  return config_from_json_text(read_text_file(path));
}

std::string config_to_json_text(const ExperimentConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  j["precision"] = precision_name(cfg.precision);
  j["workers"] = cfg.workers;
  j["out_dir"] = cfg.out_dir;
  j["model"] = {{"d_model", cfg.model.d_model},   {"n_layers", cfg.model.n_layers},
                {"n_heads", cfg.model.n_heads},   {"patch_px", cfg.model.patch_px},
                {"image_px", cfg.model.image_px}, {"max_seq", cfg.model.max_seq}};
  json tasks;
  for (const auto& [name, sz] : cfg.tasks)
    tasks[name] = {{"train", sz.train}, {"test", sz.test}};
  j["tasks"] = tasks;
  j["probe"] = {{"lr", cfg.probe.lr},
                {"batch", cfg.probe.batch},
                {"epochs", cfg.probe.epochs},
                {"schedule", lr_kind_name(cfg.probe.schedule)},
                {"paper_recipe", cfg.probe_paper_recipe}};
  j["train_base"] = {{"lr", cfg.train_base.lr},
                     {"batch", cfg.train_base.batch},
                     {"max_epochs", cfg.train_base.max_epochs},
                     {"schedule", lr_kind_name(cfg.train_base.schedule)},
                     {"band_lo", cfg.train_base.band_lo},
                     {"band_hi", cfg.train_base.band_hi},
                     {"band_min_tasks", cfg.train_base.band_min_tasks},
                     {"checks_per_epoch", cfg.train_base.checks_per_epoch},
                     {"val_samples", cfg.train_base.val_samples}};
  json ft;
  ft["configs"] = cfg.finetune.configs;
  ft["tasks"] = cfg.finetune.tasks;
  ft["total_epochs"] = cfg.finetune.total_epochs;
  ft["lr"] = cfg.finetune.lr;
  ft["batch"] = cfg.finetune.batch;
  ft["docqa_total_epochs"] = cfg.finetune.docqa_total_epochs;
  ft["docqa_lr"] = cfg.finetune.docqa_lr;
  ft["docqa_batch"] = cfg.finetune.docqa_batch;
  ft["probe_after"] = cfg.finetune.probe_after;
  if (cfg.finetune.boundaries)
    ft["boundaries"] = {cfg.finetune.boundaries->first, cfg.finetune.boundaries->second};
  else
    ft["boundaries"] = nullptr;
  j["finetune"] = ft;
  j["anls_tau"] = cfg.anls_tau;
  j["gap_token_type"] = cfg.gap_token_type;
  j["gen_max_new"] = cfg.gen_max_new;
  return j.dump(2) + "\n";
}

}  // namespace probelab
