#pragma once

#include <map>

#include "probelab/model.hpp"
#include "probelab/optim.hpp"
#include "probelab/taskgen.hpp"

namespace probelab {

// A sample in generative form: the prompt tokens and the answer tokens the
// model is trained to emit (EOS-terminated). Loss covers the answer span only.
struct TrainExample {
  std::vector<int> prompt_ids;
  std::vector<int> answer_ids;
  const Image* image = nullptr;  // borrowed from the owning dataset
};

// Binary tasks pair the response template with "0"/"1"; doc-QA pairs the bare
// question with the gold answer.
TrainExample make_train_example(const TaskSample& sample, const Tokenizer& tok);
std::vector<TrainExample> make_train_examples(const Dataset& ds, const Tokenizer& tok);

// Data-parallel batch trainer with a fixed per-chunk gradient accumulation
// order, so results do not depend on the worker count.
template <typename T>
class Trainer {
 public:
  // question_weight > 0 additionally supervises next-token prediction over
  // the question text (the answer span always has weight 1).
  Trainer(Model<T>& model, const FreezeMask& mask, int workers,
          double question_weight = 0.0);

  // One Adam step over the batch at the given learning rate; returns the mean
  // per-sample loss. Aborts with NumericError on a non-finite loss.
  double step(const std::vector<const TrainExample*>& batch, double lr);

  size_t trainable_tensors() const { return trainable_.size(); }

 private:
  Model<T>& model_;
  FreezeMask mask_;
  int workers_;
  double question_weight_;
  std::vector<size_t> trainable_;  // indices into model_.params()
  std::vector<AdamState<T>> states_;
};

struct TrainBaseConfig {
  double lr = 1e-3;
  size_t batch = 64;
  size_t max_epochs = 8;
  LrKind schedule = LrKind::cosine;
  double band_lo = 0.60;
  double band_hi = 0.85;
  int band_min_tasks = 3;  // binary tasks inside the band before stopping
  int checks_per_epoch = 4;
  size_t val_samples = 200;
  double question_loss_weight = 0.25;
  int gen_max_new = 4;
  int workers = 0;
};

struct TrainBaseResult {
  bool band_entered = false;
  double epochs_run = 0.0;
  std::map<std::string, double> final_val_acc;
  std::string log_csv;  // check,epoch,loss,<one accuracy column per binary task>
};

// Joint next-token training over all task train splits until the held-out
// response accuracy lands in [band_lo, band_hi] on at least band_min_tasks
// binary tasks, or the epoch cap is reached.
template <typename T>
TrainBaseResult train_base(Model<T>& model,
                           const std::map<TaskKind, Dataset>& train_sets,
                           const std::map<TaskKind, Dataset>& val_sets,
                           const Tokenizer& tok, const TrainBaseConfig& cfg,
                           uint64_t seed);

extern template class Trainer<float>;
extern template class Trainer<double>;
extern template TrainBaseResult train_base<float>(
    Model<float>&, const std::map<TaskKind, Dataset>&,
    const std::map<TaskKind, Dataset>&, const Tokenizer&, const TrainBaseConfig&,
    uint64_t);
extern template TrainBaseResult train_base<double>(
    Model<double>&, const std::map<TaskKind, Dataset>&,
    const std::map<TaskKind, Dataset>&, const Tokenizer&, const TrainBaseConfig&,
    uint64_t);

}  // namespace probelab
