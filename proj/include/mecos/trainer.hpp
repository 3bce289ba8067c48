#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mecos/adam.hpp"
#include "mecos/checkpoint.hpp"
#include "mecos/config.hpp"
#include "mecos/evaluate.hpp"
#include "mecos/model.hpp"
#include "mecos/params.hpp"
#include "mecos/sampler.hpp"

namespace mecos {

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double mean_loss = 0.0;
  double valid_hr10 = 0.0;
  bool improved = false;
};

template <typename T>
struct TrainOutcome {
  Checkpoint checkpoint;
  std::vector<EpochLog> log;
  double probe_loss_initial = 0.0;  // mean task loss on fixed training episodes
  double probe_loss_final = 0.0;    // same episodes, selected parameters
  ModelParams<T> params;            // selected parameters
};

using EpochCallback = std::function<void(const EpochLog&)>;

namespace detail {

inline constexpr std::uint64_t kInitSalt = 0x1417;
inline constexpr std::uint64_t kTrainSalt = 0x7a11;
inline constexpr std::uint64_t kProbeSalt = 0x9806;
inline constexpr std::size_t kProbeEpisodes = 16;

template <typename T>
Checkpoint make_checkpoint(const Hyperparams& h, const ModelParams<T>& params, const AdamState<T>& adam,
                           const std::string& rng_state, double best_valid, std::size_t epochs_run) {
  Checkpoint ck;
  ck.hyper = h;
  const auto names = params.names();
  ck.tensors = to_named(params.tensors(), names);
  ck.adam_config = adam.config;
  ck.adam_step = adam.step;
  std::vector<const Tensor<T>*> m, v;
  for (const auto& t : adam.first_moment) m.push_back(&t);
  for (const auto& t : adam.second_moment) v.push_back(&t);
  ck.adam_first = to_named(m, names, "adam.m.");
  ck.adam_second = to_named(v, names, "adam.v.");
  ck.rng_state = rng_state;
  ck.best_valid = best_valid;
  ck.epochs_run = epochs_run;
  return ck;
}

template <typename T>
double mean_task_loss(const ModelParams<T>& params, const Dataset& data, const std::vector<Episode>& episodes,
                      const Pipeline& pipe) {
  double total = 0.0;
  for (const auto& ep : episodes) total += task_loss(params, data.pairs, ep, pipe);
  return episodes.empty() ? 0.0 : total / static_cast<double>(episodes.size());
}

}  // namespace detail

/// Restores optimizer moments from a checkpoint into a fresh state.
template <typename T>
AdamState<T> adam_from(const Checkpoint& ck, ModelParams<T>& params) {
  auto state = AdamState<T>::for_params(params.tensors(), ck.adam_config);
  state.step = ck.adam_step;
  std::vector<Tensor<T>*> m, v;
  for (auto& t : state.first_moment) m.push_back(&t);
  for (auto& t : state.second_moment) v.push_back(&t);
  from_named(ck.adam_first, m, params.names(), "adam.m.");
  from_named(ck.adam_second, v, params.names(), "adam.v.");
  return state;
}

/// One Adam update on one episode; returns the episode loss.
template <typename T>
double train_step(ModelParams<T>& params, AdamState<T>& adam, const Dataset& data, const Episode& ep,
                  const Pipeline& pipe) {
  Tape<T> tape;
  auto bp = bind(tape, params);
  auto loss = task_loss(tape, bp, data.pairs, ep, pipe);
  const double value = static_cast<double>(tape.value(loss)[0]);
  tape.backward(loss);
  std::vector<Tensor<T>> grads;
  for (auto v : bp.all()) grads.push_back(tape.grad(v));
  adam_step(params.tensors(), grads, params.names(), adam);
  return value;
}

/// Validation HR@10 on the seed-fixed meta-valid protocol.
template <typename T>
double validation_hr10(const ModelParams<T>& params, const Dataset& data, const DatasetSplits& splits,
                       const Hyperparams& h, std::size_t threads = 0) {
  auto settings = EvalSettings::from(h, h.valid_queries, {h.seed});
  settings.threads = threads;
  return evaluate(data, splits, SplitKind::valid, model_scorer(params, h.pipeline(), data), settings).mean.hr_at(10);
}

/// Episodic meta-training: a fixed set of `episodes_per_epoch` candidate
/// tuples is shuffled every epoch and each task gets freshly drawn support
/// and query pairs. One Adam update per episode. After every epoch the
/// meta-valid HR@10 decides whether the parameters become the new best;
/// training stops after `patience` epochs without improvement.
template <typename T>
TrainOutcome<T> meta_train(const Dataset& data, const DatasetSplits& splits, const Hyperparams& h,
                           const EmbeddingTable* pretrained = nullptr, const EpochCallback& on_epoch = {},
                           std::size_t eval_threads = 0) {
  h.validate();
  const Pipeline pipe = h.pipeline();
  const auto eligible = eligible_items(splits, splits.train_items, h.k);
  if (eligible.size() < h.n_train) {
    throw ConfigError("meta-train split has " + std::to_string(eligible.size()) + " items with at least " +
                      std::to_string(h.k + 1) + " distinct pairs; " + std::to_string(h.n_train) + "-way episodes need " +
                      std::to_string(h.n_train));
  }
  if (h.epochs > 0) {
    try {
      plan_evaluation(splits, SplitKind::valid, EvalSettings::from(h, h.valid_queries, {h.seed}));
    } catch (const SamplingError& e) {
      throw ConfigError(std::string("meta-valid evaluation is infeasible: ") + e.what());
    }
  }

  Rng init_rng = Rng::derive(h.seed, detail::kInitSalt);
  auto params = init_params<T>(data.vocab_size(), h.dim, h.ffn_depth, init_rng);
  if (pretrained) apply_pretrained(params, data.log.vocab, *pretrained);

  AdamConfig adam_cfg;
  adam_cfg.learning_rate = h.learning_rate;
  auto adam = AdamState<T>::for_params(params.tensors(), adam_cfg);
  Rng rng = Rng::derive(h.seed, detail::kTrainSalt);

  std::vector<std::vector<ItemIndex>> tasks;
  for (std::size_t i = 0; i < h.episodes_per_epoch; ++i) tasks.push_back(sample_candidates(splits, eligible, h.n_train, h.k, rng));

  Rng probe_rng = Rng::derive(h.seed, detail::kProbeSalt);
  std::vector<Episode> probes;
  for (std::size_t i = 0; i < detail::kProbeEpisodes; ++i) {
    probes.push_back(fill_episode(data.pairs, splits, sample_candidates(splits, eligible, h.n_train, h.k, probe_rng), h.k,
                                  probe_rng));
  }

  TrainOutcome<T> out;
  out.probe_loss_initial = detail::mean_task_loss(params, data, probes, pipe);
  out.params = params;
  out.checkpoint = detail::make_checkpoint(h, params, adam, rng.state(), -1.0, 0);

  double best = -1.0;
  std::size_t stale = 0;
  for (std::size_t epoch = 1; epoch <= h.epochs; ++epoch) {
    rng.shuffle(tasks);
    double total = 0.0;
    for (const auto& task : tasks) {
      const Episode ep = fill_episode(data.pairs, splits, task, h.k, rng);
      total += train_step(params, adam, data, ep, pipe);
    }
    EpochLog entry;
    entry.epoch = epoch;
    entry.mean_loss = tasks.empty() ? 0.0 : total / static_cast<double>(tasks.size());
    entry.valid_hr10 = validation_hr10(params, data, splits, h, eval_threads);
    entry.improved = entry.valid_hr10 > best;
    if (entry.improved) {
      best = entry.valid_hr10;
      stale = 0;
      out.params = params;
      out.checkpoint = detail::make_checkpoint(h, params, adam, rng.state(), best, epoch);
    } else {
      ++stale;
    }
    out.log.push_back(entry);
    if (on_epoch) on_epoch(entry);
    if (h.patience > 0 && stale >= h.patience) break;
  }
  out.probe_loss_final = detail::mean_task_loss(out.params, data, probes, pipe);
  return out;
}

}  // namespace mecos
