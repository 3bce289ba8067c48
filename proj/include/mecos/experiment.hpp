#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mecos/checkpoint.hpp"
#include "mecos/config.hpp"
#include "mecos/evaluate.hpp"
#include "mecos/trainer.hpp"

namespace mecos {

/// Cold partition and seeded splits of one dataset.
struct Prepared {
  ColdPartition partition;
  DatasetSplits splits;
};

inline Prepared prepare(const Dataset& data, const Hyperparams& h) {
  Prepared p;
  p.partition = partition_cold_items(data.pairs, h.cold_fraction);
  p.splits = build_splits(data.pairs, data.vocab_size(), p.partition, h.ratios, h.seed);
  return p;
}

struct SplitSummary {
  std::size_t sequences = 0;
  std::size_t items = 0;
  std::size_t pairs = 0;
  std::size_t target_items = 0;
  std::size_t cold_items = 0;
  double cold_fraction = 0.0;
  std::size_t train_items = 0;
  std::size_t valid_items = 0;
  std::size_t test_items = 0;
  std::size_t meta_pairs = 0;            // pairs whose target is a cold item
  double meta_pair_fraction = 0.0;
  std::size_t pretrain_pairs = 0;
  std::size_t eligible_train_items = 0;  // at least K+1 distinct pairs
};

inline SplitSummary summarize(const Dataset& data, const Prepared& p, const Hyperparams& h) {
  SplitSummary s;
  s.sequences = data.log.sequences.size();
  s.items = data.vocab_size();
  s.pairs = data.pairs.size();
  s.target_items = p.partition.cold.size() + p.partition.rich.size();
  s.cold_items = p.partition.cold.size();
  s.cold_fraction = static_cast<double>(s.cold_items) / static_cast<double>(s.target_items);
  s.train_items = p.splits.train_items.size();
  s.valid_items = p.splits.valid_items.size();
  s.test_items = p.splits.test_items.size();
  for (ItemIndex it : p.partition.cold) s.meta_pairs += p.splits.pools[it].size();
  s.meta_pair_fraction = s.pairs ? static_cast<double>(s.meta_pairs) / static_cast<double>(s.pairs) : 0.0;
  s.pretrain_pairs = p.splits.pretrain_pairs.size();
  s.eligible_train_items = eligible_items(p.splits, p.splits.train_items, h.k).size();
  return s;
}

inline std::string to_text(const SplitSummary& s) {
  std::string out;
  auto line = [&out](const char* key, const std::string& v) { out += std::string(key) + "\t" + v + "\n"; };
  line("sequences", std::to_string(s.sequences));
  line("items", std::to_string(s.items));
  line("pairs", std::to_string(s.pairs));
  line("target_items", std::to_string(s.target_items));
  line("cold_items", std::to_string(s.cold_items));
  line("cold_fraction", format_double(s.cold_fraction));
  line("meta_train_items", std::to_string(s.train_items));
  line("meta_valid_items", std::to_string(s.valid_items));
  line("meta_test_items", std::to_string(s.test_items));
  line("meta_pairs", std::to_string(s.meta_pairs));
  line("meta_pair_fraction", format_double(s.meta_pair_fraction));
  line("pretrain_pairs", std::to_string(s.pretrain_pairs));
  line("eligible_train_items", std::to_string(s.eligible_train_items));
  return out;
}

struct ExperimentResult {
  Checkpoint checkpoint;
  std::vector<EpochLog> log;
  double probe_loss_initial = 0.0;
  double probe_loss_final = 0.0;
  EvalReport test;
};

/// Meta-trains at the configured precision, then evaluates the selected
/// parameters on the meta-test split with the given evaluation seeds.
inline ExperimentResult run_experiment(const Dataset& data, const Prepared& prep, const Hyperparams& h,
                                       const std::vector<std::uint64_t>& eval_seeds,
                                       const EmbeddingTable* pretrained = nullptr, const EpochCallback& on_epoch = {}) {
  ExperimentResult r;
  auto settings = EvalSettings::from(h, h.test_queries, eval_seeds);
  auto run = [&](auto tag) {
    using T = decltype(tag);
    auto out = meta_train<T>(data, prep.splits, h, pretrained, on_epoch);
    r.test = evaluate(data, prep.splits, SplitKind::test, model_scorer(out.params, h.pipeline(), data), settings);
    r.checkpoint = std::move(out.checkpoint);
    r.log = std::move(out.log);
    r.probe_loss_initial = out.probe_loss_initial;
    r.probe_loss_final = out.probe_loss_final;
  };
  if (h.precision == Precision::f64) run(double{});
  else run(float{});
  return r;
}

/// Evaluates checkpointed parameters at the checkpoint's precision.
inline EvalReport evaluate_checkpoint(const Dataset& data, const Prepared& prep, const Checkpoint& ck, SplitKind split,
                                      const EvalSettings& settings) {
  const Hyperparams& h = ck.hyper;
  if (ck.tensors.empty() || ck.tensors.front().shape.at(0) != data.vocab_size()) {
    throw CheckpointError("checkpoint vocabulary does not match the dataset (" + std::to_string(data.vocab_size()) +
                          " items)");
  }
  if (h.precision == Precision::f64) {
    const auto params = params_from<double>(ck);
    return evaluate(data, prep.splits, split, model_scorer(params, h.pipeline(), data), settings);
  }
  const auto params = params_from<float>(ck);
  return evaluate(data, prep.splits, split, model_scorer(params, h.pipeline(), data), settings);
}

}  // namespace mecos
