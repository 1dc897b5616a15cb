#pragma once

#include "probelab/probing.hpp"
#include "probelab/train.hpp"

namespace probelab {

// Lower [0, l1), Middle [l1, l2), Upper [l2, n_layers) — split at the two
// largest rises of the last-token probing curve.
struct LayerGroupPlan {
  size_t l1 = 0;
  size_t l2 = 0;
  size_t n_layers = 0;

  std::pair<size_t, size_t> lower() const { return {0, l1}; }
  std::pair<size_t, size_t> middle() const { return {l1, l2}; }
  std::pair<size_t, size_t> upper() const { return {l2, n_layers}; }
};

LayerGroupPlan make_plan(size_t l1, size_t l2, size_t n_layers);

// Boundaries at the two largest first differences of the last-token series;
// equal differences break toward earlier layers.
LayerGroupPlan segment_layers(const LayerAccuracyCurve& curve);

struct TuneStep {
  size_t layer_begin = 0;
  size_t layer_end = 0;  // half-open
  int epochs = 0;
};

struct TuneSchedule {
  std::string name;
  std::vector<TuneStep> steps;
  int total_epochs = 0;
};

// All | Lower | Middle | Upper | L-M | M-U | L>M | M>L | M>U | U>M
const std::vector<std::string>& schedule_names();
TuneSchedule plan_schedule(const std::string& config_name, const LayerGroupPlan& plan,
                           int total_epochs);

// 100 * sum over steps of (trainable params * epochs) / (tunable scope * total
// epochs). The tunable scope is every transformer layer plus lm_head; lm_head
// itself trains in every step.
template <typename T>
double effective_budget(const TuneSchedule& sched, const Model<T>& model);

struct FinetuneHyper {
  double lr = 1e-4;
  size_t batch = 256;
  LrKind schedule = LrKind::cosine;
  int workers = 0;
};

struct FinetuneResult {
  std::vector<double> step_seconds;
};

// Executes the schedule in place: per step, the step's layers plus lm_head
// train and everything else stays frozen; the cosine schedule and Adam state
// restart at each step boundary.
template <typename T>
FinetuneResult run_finetune(Model<T>& model, const Dataset& train_ds,
                            const TuneSchedule& sched, const FinetuneHyper& hyper,
                            const Tokenizer& tok, uint64_t seed);

extern template double effective_budget<float>(const TuneSchedule&, const Model<float>&);
extern template double effective_budget<double>(const TuneSchedule&,
                                                const Model<double>&);
extern template FinetuneResult run_finetune<float>(Model<float>&, const Dataset&,
                                                   const TuneSchedule&,
                                                   const FinetuneHyper&,
                                                   const Tokenizer&, uint64_t);
extern template FinetuneResult run_finetune<double>(Model<double>&, const Dataset&,
                                                    const TuneSchedule&,
                                                    const FinetuneHyper&,
                                                    const Tokenizer&, uint64_t);

}  // namespace probelab
