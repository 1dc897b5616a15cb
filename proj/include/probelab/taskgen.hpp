#pragma once

#include <functional>
#include <optional>

#include "probelab/image.hpp"
#include "probelab/rng.hpp"

namespace probelab {

enum class TaskKind { visual_attr, word_rec, structure, figure, doc_qa };

const char* task_kind_name(TaskKind kind);
TaskKind task_kind_from(const std::string& name);
inline bool is_binary(TaskKind kind) { return kind != TaskKind::doc_qa; }
inline const std::array<TaskKind, 4>& binary_kinds() {
  static const std::array<TaskKind, 4> k = {TaskKind::visual_attr, TaskKind::word_rec,
                                            TaskKind::structure, TaskKind::figure};
  return k;
}

struct TaskSample {
  Image image;
  std::string question;
  int label = -1;           // 0/1 for binary kinds, -1 for doc_qa
  std::string gold_answer;  // doc_qa only
  TaskKind kind = TaskKind::visual_attr;
};

struct Dataset {
  std::vector<TaskSample> samples;
  TaskKind kind = TaskKind::visual_attr;
  std::string split;
  uint64_t seed = 0;
  size_t size() const { return samples.size(); }
};

struct TaskGenConfig {
  size_t image_px = 32;
};

// Procedural generator for one task kind. Binary kinds come out label-balanced
// (|#1 - #0| <= 1); sample order is shuffled deterministically by seed.
Dataset generate_dataset(TaskKind kind, size_t n, uint64_t seed,
                         const TaskGenConfig& cfg);

// One random edit (substitute / transpose adjacent / delete); never returns
// the input, result keeps length >= 2.
std::string perturb_word(const std::string& word, uint64_t seed);

struct FilterStats {
  size_t input_n = 0;
  size_t incorrect = 0;  // retained before re-balancing
  size_t final_n = 0;
  double retention_rate = 0.0;
};

// Keeps samples the reference model answers incorrectly (unparseable counts
// as incorrect), then truncates the overrepresented class back to balance.
// predicted_label returns 0/1 or -1 for unparseable.
Dataset filter_hard(const Dataset& ds,
                    const std::function<int(const TaskSample&)>& predicted_label,
                    FilterStats* stats = nullptr);

// One record per line: base64 image payload \t question \t label-or-gold \t kind.
void write_dataset(const Dataset& ds, const std::string& path);
Dataset read_dataset(const std::string& path);

}  // namespace probelab
