#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <span>
#include <thread>
#include <vector>

#include "mecos/config.hpp"
#include "mecos/data.hpp"
#include "mecos/metrics.hpp"
#include "mecos/model.hpp"
#include "mecos/sampler.hpp"

namespace mecos {

/// One evaluation event: the hidden-target query, its candidate items
/// (ground truth at `truth`), and a K-shot support set per candidate.
struct EvalQuery {
  PairIndex query = 0;
  std::vector<ItemIndex> candidates;
  std::vector<std::vector<PairIndex>> supports;
  std::size_t truth = 0;
};

/// Returns one score per candidate; larger is better. The Rng is a
/// per-query stream, for scorers that need randomness.
using Scorer = std::function<std::vector<double>(const EvalQuery&, Rng&)>;

struct EvalSettings {
  std::size_t n_eval = 128;
  std::size_t k = 3;
  std::size_t queries = 1000;
  std::vector<std::size_t> cutoffs{5, 10, 20};
  NegativePool pool = NegativePool::automatic;
  std::vector<std::uint64_t> seeds{1};
  std::size_t threads = 0;  // 0: hardware concurrency

  static EvalSettings from(const Hyperparams& h, std::size_t queries, std::vector<std::uint64_t> seeds) {
    EvalSettings s;
    s.n_eval = h.n_eval;
    s.k = h.k;
    s.queries = queries;
    s.pool = h.negative_pool;
    s.seeds = std::move(seeds);
    return s;
  }
};

struct SeedReport {
  std::uint64_t seed = 0;
  MetricSet metrics;
};

struct EvalReport {
  std::vector<std::size_t> cutoffs;
  std::vector<SeedReport> per_seed;
  MetricSet mean;
  std::size_t negative_pool_size = 0;
  std::size_t excluded_items = 0;  // lacked K support pairs
};

/// Ground-truth items and negative pool for one split.
struct EvalPlan {
  std::vector<ItemIndex> truths;     // at least K + 1 distinct pairs
  std::vector<ItemIndex> negatives;  // at least K distinct pairs
  std::size_t excluded = 0;
};

inline EvalPlan plan_evaluation(const DatasetSplits& splits, SplitKind split, const EvalSettings& s) {
  EvalPlan plan;
  const auto& items = splits.items(split);
  plan.truths = eligible_items(splits, items, s.k, 1);
  if (plan.truths.empty()) throw SamplingError(std::string("no ") + to_string(split) + " item has K+1 distinct pairs");

  auto add_negatives = [&](const std::vector<ItemIndex>& from) {
    for (ItemIndex it : from) {
      if (splits.distinct_pairs[it] >= s.k) plan.negatives.push_back(it);
      else ++plan.excluded;
    }
  };
  add_negatives(items);
  const bool widen = s.pool == NegativePool::split_and_rich ||
                     (s.pool == NegativePool::automatic && plan.negatives.size() < s.n_eval);
  if (widen) add_negatives(splits.rich_items);
  std::sort(plan.negatives.begin(), plan.negatives.end());
  if (plan.negatives.size() < s.n_eval) {
    throw SamplingError("negative pool has " + std::to_string(plan.negatives.size()) + " items with K support pairs; " +
                        std::to_string(s.n_eval) + " candidates requested");
  }
  return plan;
}

inline EvalQuery make_eval_query(const Dataset& data, const DatasetSplits& splits, const EvalPlan& plan,
                                 const EvalSettings& s, Rng& rng) {
  EvalQuery q;
  const ItemIndex truth = plan.truths[rng.index(plan.truths.size())];
  const auto& pool = splits.pools[truth];
  q.query = pool[rng.index(pool.size())];
  const SequencePair& query = data.pairs[q.query];

  q.candidates.push_back(truth);
  q.supports.push_back(sample_support(data.pairs, pool, s.k, rng, &query));
  // Draw N_eval - 1 distinct negatives without the ground truth.
  const auto pos = std::lower_bound(plan.negatives.begin(), plan.negatives.end(), truth);
  const bool truth_in_pool = pos != plan.negatives.end() && *pos == truth;
  const std::size_t available = plan.negatives.size() - (truth_in_pool ? 1 : 0);
  const auto skip = static_cast<std::size_t>(pos - plan.negatives.begin());
  for (std::size_t i : rng.distinct(available, s.n_eval - 1)) {
    const ItemIndex item = plan.negatives[truth_in_pool && i >= skip ? i + 1 : i];
    q.candidates.push_back(item);
    q.supports.push_back(sample_support(data.pairs, splits.pools[item], s.k, rng));
  }
  // Shuffle candidate order so positional effects cannot help any scorer.
  std::vector<std::size_t> order(q.candidates.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  EvalQuery shuffled;
  shuffled.query = q.query;
  for (std::size_t i : order) {
    if (i == 0) shuffled.truth = shuffled.candidates.size();
    shuffled.candidates.push_back(q.candidates[i]);
    shuffled.supports.push_back(std::move(q.supports[i]));
  }
  return shuffled;
}

template <typename F>
void parallel_for(std::size_t n, std::size_t threads, F&& body) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < n; i += threads) body(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

/// Ranks of the ground truth for every query of one seed.
inline std::vector<std::size_t> evaluation_ranks(const Dataset& data, const DatasetSplits& splits, const EvalPlan& plan,
                                                 const Scorer& scorer, const EvalSettings& s, std::uint64_t seed) {
  std::vector<std::size_t> ranks(s.queries);
  parallel_for(s.queries, s.threads, [&](std::size_t qi) {
    Rng rng = Rng::derive(seed, 0xe7a1000000ULL + qi);
    EvalQuery q = make_eval_query(data, splits, plan, s, rng);
    Rng scorer_rng = Rng::derive(seed ^ 0x5c0bfULL, qi);
    const auto scores = scorer(q, scorer_rng);
    if (scores.size() != q.candidates.size()) throw DimensionError("scorer returned the wrong number of scores");
    ranks[qi] = ground_truth_rank(scores, q.truth);
  });
  return ranks;
}

/// HR@p, NDCG@p and MRR per seed, and their mean across seeds.
inline EvalReport evaluate(const Dataset& data, const DatasetSplits& splits, SplitKind split, const Scorer& scorer,
                           const EvalSettings& s) {
  if (s.seeds.empty()) throw ConfigError("evaluation needs at least one seed");
  if (s.queries == 0) throw ConfigError("evaluation needs at least one query");
  const EvalPlan plan = plan_evaluation(splits, split, s);
  EvalReport report;
  report.cutoffs = s.cutoffs;
  report.negative_pool_size = plan.negatives.size();
  report.excluded_items = plan.excluded;

  MetricSet mean;
  mean.cutoffs = s.cutoffs;
  mean.hr.assign(s.cutoffs.size(), 0.0);
  mean.ndcg.assign(s.cutoffs.size(), 0.0);
  for (std::uint64_t seed : s.seeds) {
    MetricAccumulator acc(s.cutoffs);
    for (std::size_t r : evaluation_ranks(data, splits, plan, scorer, s, seed)) acc.add({r, s.n_eval});
    SeedReport sr{seed, acc.result()};
    for (std::size_t i = 0; i < s.cutoffs.size(); ++i) {
      mean.hr[i] += sr.metrics.hr[i];
      mean.ndcg[i] += sr.metrics.ndcg[i];
    }
    mean.mrr += sr.metrics.mrr;
    mean.queries += sr.metrics.queries;
    report.per_seed.push_back(std::move(sr));
  }
  const double n = static_cast<double>(s.seeds.size());
  for (std::size_t i = 0; i < s.cutoffs.size(); ++i) {
    mean.hr[i] /= n;
    mean.ndcg[i] /= n;
  }
  mean.mrr /= n;
  report.mean = std::move(mean);
  return report;
}

/// Scores candidates with the model: softmax (in double) of the cosine
/// similarities between the refined query and each support set.
template <typename T>
Scorer model_scorer(const ModelParams<T>& params, const Pipeline& pipe, const Dataset& data) {
  return [&params, pipe, &data](const EvalQuery& q, Rng&) {
    Tape<T> tape(false);
    auto bp = bind(tape, params);
    auto s = encode_support_sets(tape, bp, data.pairs, q.supports, pipe);
    std::vector<std::span<const ItemIndex>> prefixes{data.pairs[q.query].prefix};
    auto qv = encode_query_prefixes(tape, bp, prefixes, pipe.encoder);
    const auto& z = tape.value(score_matrix(tape, bp, qv, s, pipe.steps));
    std::vector<double> out(z.size());
    const double peak = static_cast<double>(*std::max_element(z.values().begin(), z.values().end()));
    double total = 0.0;
    for (std::size_t j = 0; j < z.size(); ++j) total += (out[j] = std::exp(static_cast<double>(z[j]) - peak));
    for (auto& v : out) v /= total;
    return out;
  };
}

/// Test hooks: perfect, constant and uniformly random scorers.
inline Scorer oracle_scorer() {
  return [](const EvalQuery& q, Rng&) {
    std::vector<double> s(q.candidates.size(), 0.0);
    s[q.truth] = 1.0;
    return s;
  };
}

inline Scorer constant_scorer() {
  return [](const EvalQuery& q, Rng&) { return std::vector<double>(q.candidates.size(), 0.5); };
}

inline Scorer random_scorer() {
  return [](const EvalQuery& q, Rng& rng) {
    std::vector<double> s(q.candidates.size());
    for (auto& v : s) v = rng.uniform();
    return s;
  };
}

}  // namespace mecos
