#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "mecos/data.hpp"
#include "mecos/rng.hpp"

namespace mecos {

/// One N-way K-shot task. Query i belongs to candidate i; the model only
/// ever reads its prefix.
struct Episode {
  std::vector<ItemIndex> candidates;
  std::vector<std::vector<PairIndex>> supports;  // N x K
  std::vector<PairIndex> queries;                // N

  std::size_t ways() const { return candidates.size(); }
  std::size_t shots() const { return supports.empty() ? 0 : supports.front().size(); }
};

/// Items that can supply K support pairs plus one query whose content
/// differs from every support pair.
inline std::vector<ItemIndex> eligible_items(const DatasetSplits& splits, const std::vector<ItemIndex>& items,
                                             std::size_t k, std::size_t spare = 1) {
  std::vector<ItemIndex> out;
  for (ItemIndex it : items) {
    if (splits.distinct_pairs[it] >= k + spare) out.push_back(it);
  }
  return out;
}

/// K distinct pairs from `pool`, none content-equal to `exclude`.
/// Requires the pool to hold at least K distinct contents other than `exclude`.
inline std::vector<PairIndex> sample_support(const std::vector<SequencePair>& pairs, const std::vector<PairIndex>& pool,
                                             std::size_t k, Rng& rng, const SequencePair* exclude = nullptr) {
  std::vector<PairIndex> chosen;
  chosen.reserve(k);
  auto acceptable = [&](PairIndex p) {
    if (exclude && pairs[p].same_content(*exclude)) return false;
    return std::find(chosen.begin(), chosen.end(), p) == chosen.end();
  };
  for (std::size_t attempt = 0; chosen.size() < k && attempt < 32 * k; ++attempt) {
    const PairIndex p = pool[rng.index(pool.size())];
    if (acceptable(p)) chosen.push_back(p);
  }
  if (chosen.size() < k) {
    const std::size_t start = rng.index(pool.size());
    for (std::size_t i = 0; i < pool.size() && chosen.size() < k; ++i) {
      const PairIndex p = pool[(start + i) % pool.size()];
      if (acceptable(p)) chosen.push_back(p);
    }
  }
  if (chosen.size() < k) throw SamplingError("pool cannot supply " + std::to_string(k) + " support pairs");
  return chosen;
}

/// A pair from `pool` whose content differs from every pair in `support`.
inline PairIndex sample_query(const std::vector<SequencePair>& pairs, const std::vector<PairIndex>& pool,
                              const std::vector<PairIndex>& support, Rng& rng) {
  auto acceptable = [&](PairIndex p) {
    return std::none_of(support.begin(), support.end(), [&](PairIndex s) { return pairs[s].same_content(pairs[p]); });
  };
  for (int attempt = 0; attempt < 64; ++attempt) {
    const PairIndex p = pool[rng.index(pool.size())];
    if (acceptable(p)) return p;
  }
  const std::size_t start = rng.index(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const PairIndex p = pool[(start + i) % pool.size()];
    if (acceptable(p)) return p;
  }
  throw SamplingError("no query pair distinct from the support set");
}

/// Draws support and query pairs for a fixed candidate list.
inline Episode fill_episode(const std::vector<SequencePair>& pairs, const DatasetSplits& splits,
                            std::vector<ItemIndex> candidates, std::size_t k, Rng& rng) {
  if (k == 0) throw ConfigError("K must be at least 1");
  Episode ep;
  ep.candidates = std::move(candidates);
  for (ItemIndex item : ep.candidates) {
    if (splits.distinct_pairs.at(item) < k + 1) {
      throw SamplingError("item " + std::to_string(item) + " has " + std::to_string(splits.distinct_pairs[item]) +
                          " distinct pairs, needs " + std::to_string(k + 1));
    }
    const auto& pool = splits.pools[item];
    ep.supports.push_back(sample_support(pairs, pool, k, rng));
    ep.queries.push_back(sample_query(pairs, pool, ep.supports.back(), rng));
  }
  return ep;
}

/// N distinct candidates from the split items, each with a query.
inline std::vector<ItemIndex> sample_candidates(const DatasetSplits& splits, const std::vector<ItemIndex>& items,
                                                std::size_t n, std::size_t k, Rng& rng) {
  const auto eligible = eligible_items(splits, items, k);
  if (eligible.size() < n) {
    throw SamplingError("need " + std::to_string(n) + " items with at least " + std::to_string(k + 1) +
                        " distinct pairs, split has " + std::to_string(eligible.size()) + " (shortfall " +
                        std::to_string(n - eligible.size()) + ")");
  }
  std::vector<ItemIndex> out;
  for (std::size_t i : rng.distinct(eligible.size(), n)) out.push_back(eligible[i]);
  return out;
}

inline Episode sample_episode(const std::vector<SequencePair>& pairs, const DatasetSplits& splits, SplitKind split,
                              std::size_t n, std::size_t k, Rng& rng) {
  if (n < 2) throw ConfigError("an episode needs at least two candidates");
  auto candidates = sample_candidates(splits, splits.items(split), n, k, rng);
  return fill_episode(pairs, splits, std::move(candidates), k, rng);
}

}  // namespace mecos
