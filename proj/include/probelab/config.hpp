#pragma once

#include <map>
#include <optional>

#include "probelab/finetune.hpp"
#include "probelab/model.hpp"
#include "probelab/train.hpp"

namespace probelab {

struct TaskSizes {
  size_t train = 8000;
  size_t test = 1000;
};

struct FinetuneSection {
  std::vector<std::string> configs = schedule_names();
  std::vector<std::string> tasks = {"visual_attr", "word_rec", "structure",
                                    "figure", "doc_qa"};
  int total_epochs = 10;
  double lr = 1e-4;
  size_t batch = 256;
  int docqa_total_epochs = 2;
  double docqa_lr = 3e-4;
  size_t docqa_batch = 64;
  bool probe_after = true;
  std::optional<std::pair<size_t, size_t>> boundaries;  // manual l1,l2 override
};

// One JSON document drives the whole pipeline; CLI flags override fields.
struct ExperimentConfig {
  uint64_t seed = 1;
  Precision precision = Precision::f64;
  int workers = 0;  // 0 = hardware concurrency
  std::string out_dir = "out";
  ModelConfig model;
  std::map<std::string, TaskSizes> tasks;  // keyed by task kind name
  ProbeTrainConfig probe;
  bool probe_paper_recipe = false;
  TrainBaseConfig train_base;
  FinetuneSection finetune;
  double anls_tau = 0.5;
  std::string gap_token_type = "last";
  int gen_max_new = 4;

  ExperimentConfig();
  void validate() const;
  ProbeTrainConfig probe_config() const {
    return probe_paper_recipe ? ProbeTrainConfig::paper_recipe() : probe;
  }
};

ExperimentConfig config_from_json_text(const std::string& text);
ExperimentConfig load_config(const std::string& path);
std::string config_to_json_text(const ExperimentConfig& cfg);

}  // namespace probelab
