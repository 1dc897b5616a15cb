#include "probelab/finetune.hpp"

#include <algorithm>
#include <chrono>

#include "probelab/rng.hpp"

namespace probelab {

LayerGroupPlan make_plan(size_t l1, size_t l2, size_t n_layers) {
  if (!(l1 >= 1 && l1 < l2 && l2 < n_layers))
    throw ContractError("layer boundaries must satisfy 1 <= l1 < l2 < n_layers");
  return {l1, l2, n_layers};
}

LayerGroupPlan segment_layers(const LayerAccuracyCurve& curve) {
  const std::vector<double> series = curve.series(TokenType::last_token);
  const size_t n = series.size();
  if (n < 3)
    throw ContractError("segmentation needs last-token accuracy for >= 3 layers");
  // Candidate boundary l covers the rise entering layer l.
  std::vector<size_t> cand(n - 1);
  for (size_t l = 1; l < n; ++l) cand[l - 1] = l;
  std::stable_sort(cand.begin(), cand.end(), [&](size_t a, size_t b) {
    const double da = series[a] - series[a - 1];
    const double db = series[b] - series[b - 1];
    if (da != db) return da > db;
    return a < b;  // equal rises break toward earlier layers
  });
  if (cand.size() < 2) throw ContractError("fewer than two boundary candidates");
  size_t l1 = cand[0], l2 = cand[1];
  if (l1 > l2) std::swap(l1, l2);
  return make_plan(l1, l2, n);
}

const std::vector<std::string>& schedule_names() {
  static const std::vector<std::string> names = {
      "All", "Lower", "Middle", "Upper", "L-M", "M-U", "L>M", "M>L", "M>U", "U>M"};
  return names;
}

TuneSchedule plan_schedule(const std::string& config_name, const LayerGroupPlan& plan,
                           int total_epochs) {
  if (total_epochs < 0) throw ConfigError("total_epochs must be >= 0");
  const auto lower = plan.lower();
  const auto middle = plan.middle();
  const auto upper = plan.upper();
  TuneSchedule s;
  s.name = config_name;
  s.total_epochs = total_epochs;
  auto single = [&](std::pair<size_t, size_t> range) {
    s.steps.push_back({range.first, range.second, total_epochs});
  };
  auto two_step = [&](std::pair<size_t, size_t> a, std::pair<size_t, size_t> b) {
    if (total_epochs % 2 != 0)
      throw ConfigError("two-step schedule '" + config_name +
                        "' needs an even total epoch count, got " +
                        std::to_string(total_epochs));
    s.steps.push_back({a.first, a.second, total_epochs / 2});
    s.steps.push_back({b.first, b.second, total_epochs / 2});
  };
  if (config_name == "All") single({0, plan.n_layers});
  else if (config_name == "Lower") single(lower);
  else if (config_name == "Middle") single(middle);
  else if (config_name == "Upper") single(upper);
  else if (config_name == "L-M") single({lower.first, middle.second});
  else if (config_name == "M-U") single({middle.first, upper.second});
  else if (config_name == "L>M") two_step(lower, middle);
  else if (config_name == "M>L") two_step(middle, lower);
  else if (config_name == "M>U") two_step(middle, upper);
  else if (config_name == "U>M") two_step(upper, middle);
  else
    throw ConfigError("unknown fine-tuning configuration '" + config_name + "'");
  return s;
}

namespace {

template <typename T>
size_t group_param_count(const Model<T>& model, const std::string& group) {
  size_t n = 0;
  for (const auto& p : model.params())
    if (p.group == group) n += p.tensor->size();
  return n;
}

template <typename T>
size_t layer_range_params(const Model<T>& model, size_t begin, size_t end) {
  size_t n = 0;
  for (size_t l = begin; l < end; ++l)
    n += group_param_count(model, "layer_" + std::to_string(l));
  return n;
}

}  // namespace

template <typename T>
double effective_budget(const TuneSchedule& sched, const Model<T>& model) {
  const size_t head = group_param_count(model, "lm_head");
  const size_t scope =
      layer_range_params(model, 0, model.config().n_layers) + head;
  if (sched.total_epochs == 0) return 0.0;
  double num = 0.0;
  for (const TuneStep& st : sched.steps) {
    const size_t params = layer_range_params(model, st.layer_begin, st.layer_end) + head;
    num += static_cast<double>(params) * static_cast<double>(st.epochs);
  }
  const double den =
      static_cast<double>(scope) * static_cast<double>(sched.total_epochs);
  return 100.0 * num / den;
}

template <typename T>
FinetuneResult run_finetune(Model<T>& model, const Dataset& train_ds,
                            const TuneSchedule& sched, const FinetuneHyper& hyper,
                            const Tokenizer& tok, uint64_t seed) {
  if (!sched.steps.empty() &&
      sched.steps.back().layer_end > model.config().n_layers)
    throw ContractError("schedule layers exceed the model depth");
  const std::vector<TrainExample> examples = make_train_examples(train_ds, tok);
  if (examples.empty()) throw ContractError("fine-tuning needs training data");
  const size_t n = examples.size();

  FinetuneResult result;
  for (size_t si = 0; si < sched.steps.size(); ++si) {
    const TuneStep& st = sched.steps[si];
    const auto t0 = std::chrono::steady_clock::now();
    if (st.epochs > 0) {
      std::set<std::string> groups = {"lm_head"};
      for (size_t l = st.layer_begin; l < st.layer_end; ++l)
        groups.insert("layer_" + std::to_string(l));
      const FreezeMask mask = set_trainable(model, groups);
      Trainer<T> trainer(model, mask, hyper.workers);
      const size_t batches_per_epoch = (n + hyper.batch - 1) / hyper.batch;
      const int64_t total_steps =
          static_cast<int64_t>(batches_per_epoch) * st.epochs;
      LrSchedule lr_sched{hyper.lr, total_steps, hyper.schedule};
      std::vector<size_t> order(n);
      for (size_t i = 0; i < n; ++i) order[i] = i;
      int64_t step = 0;
      for (int epoch = 0; epoch < st.epochs; ++epoch) {
        Rng epoch_rng(derive_seed(seed, "ft-order", si * 1000 + static_cast<size_t>(epoch)));
        epoch_rng.shuffle(order);
        for (size_t b0 = 0; b0 < n; b0 += hyper.batch) {
          const size_t bsz = std::min(hyper.batch, n - b0);
          std::vector<const TrainExample*> batch(bsz);
          for (size_t i = 0; i < bsz; ++i) batch[i] = &examples[order[b0 + i]];
          trainer.step(batch, cosine_lr(step, lr_sched));
          ++step;
        }
      }
    }
    const auto t1 = std::chrono::steady_clock::now();
    result.step_seconds.push_back(
        std::chrono::duration<double>(t1 - t0).count());
  }
  return result;
}

template double effective_budget<float>(const TuneSchedule&, const Model<float>&);
template double effective_budget<double>(const TuneSchedule&, const Model<double>&);
template FinetuneResult run_finetune<float>(Model<float>&, const Dataset&,
                                            const TuneSchedule&, const FinetuneHyper&,
                                            const Tokenizer&, uint64_t);
template FinetuneResult run_finetune<double>(Model<double>&, const Dataset&,
                                             const TuneSchedule&, const FinetuneHyper&,
                                             const Tokenizer&, uint64_t);

}  // namespace probelab
