#include "probelab/train.hpp"

#include <cmath>

#include "probelab/io.hpp"
#include "probelab/kernels.hpp"
#include "probelab/parallel.hpp"
#include "probelab/response_eval.hpp"

namespace probelab {

namespace {
// Samples per gradient-accumulation chunk. Chunks are summed in index order,
// which makes batch gradients independent of the worker count.
constexpr size_t kGradChunk = 16;
}  // namespace

TrainExample make_train_example(const TaskSample& sample, const Tokenizer& tok) {
  TrainExample ex;
  ex.image = &sample.image;
  if (is_binary(sample.kind)) {
    ex.prompt_ids = tok.encode(format_prompt(sample.question));
    ex.answer_ids = tok.encode(sample.label ? "1" : "0");
  } else {
    ex.prompt_ids = tok.encode(sample.question);
    ex.answer_ids = tok.encode(sample.gold_answer);
  }
  ex.answer_ids.push_back(Tokenizer::kEos);
  return ex;
}

std::vector<TrainExample> make_train_examples(const Dataset& ds, const Tokenizer& tok) {
  std::vector<TrainExample> out;
  out.reserve(ds.size());
  for (const TaskSample& s : ds.samples) out.push_back(make_train_example(s, tok));
  return out;
}

template <typename T>
Trainer<T>::Trainer(Model<T>& model, const FreezeMask& mask, int workers,
                    double question_weight)
    : model_(model),
      mask_(mask),
      workers_(resolve_workers(workers)),
      question_weight_(question_weight) {
  const auto ps = model_.params();
  for (size_t i = 0; i < ps.size(); ++i)
    if (mask_.is_trainable(ps[i].group)) trainable_.push_back(i);
  states_.resize(trainable_.size());
}

template <typename T>
double Trainer<T>::step(const std::vector<const TrainExample*>& batch, double lr) {
  const size_t bsz = batch.size();
  if (bsz == 0) throw ContractError("empty training batch");
  auto ps = model_.params();

  const size_t n_chunks = (bsz + kGradChunk - 1) / kGradChunk;
  // Per-chunk gradient sums, merged in chunk order after the parallel phase.
  std::vector<std::vector<std::vector<T>>> chunk_grads(n_chunks);
  std::vector<double> chunk_loss(n_chunks, 0.0);

  parallel_for(n_chunks, workers_, [&](size_t c) {
    auto& grads = chunk_grads[c];
    grads.resize(trainable_.size());
    for (size_t t = 0; t < trainable_.size(); ++t)
      grads[t].assign(ps[trainable_[t]].tensor->size(), T(0));
    const size_t lo = c * kGradChunk;
    const size_t hi = std::min(bsz, lo + kGradChunk);
    for (size_t i = lo; i < hi; ++i) {
      const TrainExample& ex = *batch[i];
      Tape<T> tape(true);
      auto bound = model_.bind(tape, mask_);
      std::vector<int> text = ex.prompt_ids;
      text.insert(text.end(), ex.answer_ids.begin(), ex.answer_ids.end());
      auto fo = model_.forward_on(tape, bound, text, *ex.image);
      const size_t s = fo.full_tokens.size();
      const size_t ans_start = s - ex.answer_ids.size();
      // Rows ans_start-1 .. s-2 predict the answer tokens, EOS included;
      // earlier text rows optionally carry the question-modeling weight.
      std::vector<int> targets(s, 0);
      std::vector<T> weights(s, T(0));
      if (question_weight_ > 0.0) {
        const size_t text_begin = fo.layout.text_begin;
        for (size_t p = text_begin - 1; p + 1 < ans_start; ++p) {
          targets[p] = fo.full_tokens[p + 1];
          weights[p] = static_cast<T>(question_weight_);
        }
      }
      for (size_t p = ans_start - 1; p + 1 < s; ++p) {
        targets[p] = fo.full_tokens[p + 1];
        weights[p] = T(1);
      }
      Val loss = tape.softmax_cross_entropy(fo.logits, targets, weights);
      const double lval = static_cast<double>(tape.value(loss)[0]);
      if (!std::isfinite(lval))
        throw NumericError("non-finite training loss, aborting step");
      chunk_loss[c] += lval;
      tape.backward(loss);
      for (size_t t = 0; t < trainable_.size(); ++t) {
        auto g = tape.grad(bound.vals[trainable_[t]]);
        if (!g.empty())
          kernels::axpy<T>(T(1), g.data(), grads[t].data(), g.size());
      }
    }
  });

  // Merge chunk partials in fixed order, average, and step.
  const T inv_b = T(1) / static_cast<T>(bsz);
  double loss_sum = 0.0;
  for (size_t c = 0; c < n_chunks; ++c) loss_sum += chunk_loss[c];
  for (size_t t = 0; t < trainable_.size(); ++t) {
    Tensor<T>* param = ps[trainable_[t]].tensor;
    std::vector<T> total(param->size(), T(0));
    for (size_t c = 0; c < n_chunks; ++c)
      kernels::add<T>(total.data(), chunk_grads[c][t].data(), total.data(),
                      total.size());
    kernels::scale<T>(inv_b, total.data(), total.data(), total.size());
    adam_step<T>(*param, std::span<const T>(total), states_[t], static_cast<T>(lr));
  }
  return loss_sum / static_cast<double>(bsz);
}

namespace {

template <typename T>
std::map<TaskKind, double> eval_band(const Model<T>& model,
                                     const std::map<TaskKind, Dataset>& val_sets,
                                     const Tokenizer& tok, const TrainBaseConfig& cfg) {
  std::map<TaskKind, double> acc;
  for (const auto& [kind, ds] : val_sets) {
    if (!is_binary(kind)) continue;
    acc[kind] = response_accuracy(model, ds, tok, cfg.gen_max_new, cfg.workers);
  }
  return acc;
}

}  // namespace

template <typename T>
TrainBaseResult train_base(Model<T>& model,
                           const std::map<TaskKind, Dataset>& train_sets,
                           const std::map<TaskKind, Dataset>& val_sets,
                           const Tokenizer& tok, const TrainBaseConfig& cfg,
                           uint64_t seed) {
  std::vector<TrainExample> examples;
  for (const auto& [kind, ds] : train_sets) {
    auto exs = make_train_examples(ds, tok);
    examples.insert(examples.end(), exs.begin(), exs.end());
  }
  if (examples.empty()) throw ContractError("train_base needs training data");

  FreezeMask all;
  for (const auto& g : model.group_names()) all.trainable.insert(g);
  Trainer<T> trainer(model, all, cfg.workers, cfg.question_loss_weight);

  const size_t n = examples.size();
  const size_t batches_per_epoch = (n + cfg.batch - 1) / cfg.batch;
  const int64_t total_steps =
      static_cast<int64_t>(batches_per_epoch * cfg.max_epochs);
  LrSchedule sched{cfg.lr, total_steps, cfg.schedule};
  const size_t check_interval =
      std::max<size_t>(1, batches_per_epoch / static_cast<size_t>(cfg.checks_per_epoch));

  TrainBaseResult result;
  std::string log = "check,epoch,loss";
  for (TaskKind k : binary_kinds()) log += std::string(",") + task_kind_name(k);
  log += "\n";

  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  int64_t step = 0;
  size_t check_idx = 0;
  double running_loss = 0.0;
  size_t running_count = 0;
  bool stop = false;

  for (size_t epoch = 0; epoch < cfg.max_epochs && !stop; ++epoch) {
    Rng epoch_rng(derive_seed(seed, "base-order", epoch));
    epoch_rng.shuffle(order);
    for (size_t b0 = 0; b0 < n && !stop; b0 += cfg.batch) {
      const size_t bsz = std::min(cfg.batch, n - b0);
      std::vector<const TrainExample*> batch(bsz);
      for (size_t i = 0; i < bsz; ++i) batch[i] = &examples[order[b0 + i]];
      const double lr = cosine_lr(step, sched);
      running_loss += trainer.step(batch, lr) * static_cast<double>(bsz);
      running_count += bsz;
      ++step;

      const size_t batch_idx = b0 / cfg.batch + 1;
      const bool at_check = (batch_idx % check_interval == 0) ||
                            (b0 + bsz >= n && epoch + 1 == cfg.max_epochs);
      if (!at_check) continue;
      const auto acc = eval_band(model, val_sets, tok, cfg);
      const double epoch_frac =
          static_cast<double>(step) / static_cast<double>(batches_per_epoch);
      log += std::to_string(check_idx) + "," + fmt_fixed(epoch_frac, 3) + "," +
             fmt_fixed(running_loss / std::max<size_t>(1, running_count), 5);
      int in_band = 0;
      for (TaskKind k : binary_kinds()) {
        const double a = acc.count(k) ? acc.at(k) : 0.0;
        log += "," + fmt_fixed(a, 4);
        if (a >= cfg.band_lo && a <= cfg.band_hi) ++in_band;
      }
      log += "\n";
      running_loss = 0.0;
      running_count = 0;
      ++check_idx;
      result.epochs_run = epoch_frac;
      for (const auto& [k, a] : acc) result.final_val_acc[task_kind_name(k)] = a;
      if (in_band >= cfg.band_min_tasks) {
        result.band_entered = true;
        stop = true;
      }
    }
  }
  result.log_csv = std::move(log);
  return result;
}

template class Trainer<float>;
template class Trainer<double>;
template TrainBaseResult train_base<float>(Model<float>&,
                                           const std::map<TaskKind, Dataset>&,
                                           const std::map<TaskKind, Dataset>&,
                                           const Tokenizer&, const TrainBaseConfig&,
                                           uint64_t);
template TrainBaseResult train_base<double>(Model<double>&,
                                            const std::map<TaskKind, Dataset>&,
                                            const std::map<TaskKind, Dataset>&,
                                            const Tokenizer&, const TrainBaseConfig&,
                                            uint64_t);

}  // namespace probelab
