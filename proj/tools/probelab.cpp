#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "probelab/pipeline.hpp"

namespace {

struct Overrides {
  std::string config_path;
  int64_t seed = -1;
  std::string out_dir;
  std::string precision;
  int workers = -1;
  std::string boundaries;
  std::string configs;
};

probelab::ExperimentConfig resolve(const Overrides& ov) {
  probelab::ExperimentConfig cfg = probelab::load_config(ov.config_path);
  if (ov.seed >= 0) cfg.seed = static_cast<uint64_t>(ov.seed);
  if (!ov.out_dir.empty()) cfg.out_dir = ov.out_dir;
  if (!ov.precision.empty()) {
    if (ov.precision == "f32") cfg.precision = probelab::Precision::f32;
    else if (ov.precision == "f64") cfg.precision = probelab::Precision::f64;
    else throw probelab::ConfigError("--precision must be f32 or f64");
  }
  if (ov.workers >= 0) cfg.workers = ov.workers;
  if (!ov.boundaries.empty()) {
    const size_t comma = ov.boundaries.find(',');
    if (comma == std::string::npos)
      throw probelab::ConfigError("--boundaries expects l1,l2");
    cfg.finetune.boundaries = {std::stoull(ov.boundaries.substr(0, comma)),
                               std::stoull(ov.boundaries.substr(comma + 1))};
  }
  if (!ov.configs.empty()) {
    cfg.finetune.configs.clear();
    size_t start = 0;
    while (start <= ov.configs.size()) {
      const size_t comma = ov.configs.find(',', start);
      const std::string name = ov.configs.substr(
          start, comma == std::string::npos ? std::string::npos : comma - start);
      if (!name.empty()) cfg.finetune.configs.push_back(name);
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
  }
  cfg.validate();
  return cfg;
}

void add_common(CLI::App* sub, Overrides& ov) {
  sub->add_option("--config", ov.config_path, "experiment config JSON")->required();
  sub->add_option("--seed", ov.seed, "override the config seed");
  sub->add_option("--out", ov.out_dir, "override the output directory");
  sub->add_option("--precision", ov.precision, "f32 or f64");
  sub->add_option("--workers", ov.workers, "worker thread count (0 = auto)");
  sub->add_option("--boundaries", ov.boundaries,
                  "manual layer boundaries l1,l2 for segmentation");
  sub->add_option("--configs", ov.configs,
                  "comma-separated schedule names (All, Lower, Middle, Upper, "
                  "L-M, M-U, L>M, M>L, M>U, U>M)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"layer-wise linear probing laboratory"};
  app.require_subcommand(1);
  Overrides ov;

  CLI::App* generate = app.add_subcommand("generate", "write task datasets");
  CLI::App* train_base = app.add_subcommand("train-base", "train the base model");
  CLI::App* probe = app.add_subcommand("probe", "layer-wise probe sweep + gap");
  CLI::App* finetune = app.add_subcommand("finetune", "layer-group fine-tuning runs");
  CLI::App* report = app.add_subcommand("report", "collate artifacts into a report");
  for (CLI::App* sub : {generate, train_base, probe, finetune, report})
    add_common(sub, ov);

  CLI11_PARSE(app, argc, argv);

  try {
    const probelab::ExperimentConfig cfg = resolve(ov);
    if (generate->parsed()) probelab::cmd_generate(cfg);
    if (train_base->parsed()) probelab::cmd_train_base(cfg);
    if (probe->parsed()) probelab::cmd_probe(cfg);
    if (finetune->parsed()) probelab::cmd_finetune(cfg);
    if (report->parsed()) probelab::cmd_report(cfg);
  } catch (const probelab::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
