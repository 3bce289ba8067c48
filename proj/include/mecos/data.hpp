#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "mecos/error.hpp"
#include "mecos/rng.hpp"

namespace mecos {

using ItemIndex = std::uint32_t;
using PairIndex = std::uint32_t;

inline constexpr ItemIndex kUnknownItem = static_cast<ItemIndex>(-1);
inline constexpr std::size_t kDefaultMaxPrefix = 50;

/// Item-id dictionary. Indices follow ascending id order, so comparing
/// indices is the same as comparing ids.
class Vocabulary {
 public:
  Vocabulary() = default;

  explicit Vocabulary(std::vector<std::string> ids) : ids_(std::move(ids)) {
    std::sort(ids_.begin(), ids_.end());
    ids_.erase(std::unique(ids_.begin(), ids_.end()), ids_.end());
    for (std::size_t i = 0; i < ids_.size(); ++i) index_.emplace(ids_[i], static_cast<ItemIndex>(i));
  }

  std::size_t size() const noexcept { return ids_.size(); }
  const std::string& id(ItemIndex i) const { return ids_.at(i); }
  const std::vector<std::string>& ids() const noexcept { return ids_; }

  bool contains(const std::string& id) const { return index_.count(id) != 0; }

  ItemIndex at(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw VocabularyError("unknown item id '" + id + "'");
    return it->second;
  }

 private:
  std::vector<std::string> ids_;
  std::unordered_map<std::string, ItemIndex> index_;
};

struct InteractionSequence {
  std::string user_id;
  std::vector<ItemIndex> items;  // chronological
  std::vector<std::int64_t> timestamps;
};

struct InteractionLog {
  Vocabulary vocab;
  std::vector<InteractionSequence> sequences;  // ordered by user id
};

struct Interaction {
  std::string user_id;
  std::string item_id;
  std::int64_t timestamp = 0;
};

/// Groups events by user, sorts each user's events by timestamp (stable),
/// and drops users with fewer than two events.
inline InteractionLog build_log(std::vector<Interaction> rows) {
  std::map<std::string, std::vector<std::size_t>> by_user;
  std::vector<std::string> item_ids;
  for (std::size_t i = 0; i < rows.size(); ++i) by_user[rows[i].user_id].push_back(i);

  for (auto& [user, idx] : by_user) {
    if (idx.size() < 2) continue;
    for (std::size_t i : idx) item_ids.push_back(rows[i].item_id);
  }
  InteractionLog log;
  log.vocab = Vocabulary(std::move(item_ids));
  for (auto& [user, idx] : by_user) {
    if (idx.size() < 2) continue;
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return rows[a].timestamp < rows[b].timestamp; });
    InteractionSequence seq;
    seq.user_id = user;
    for (std::size_t i : idx) {
      seq.items.push_back(log.vocab.at(rows[i].item_id));
      seq.timestamps.push_back(rows[i].timestamp);
    }
    log.sequences.push_back(std::move(seq));
  }
  if (log.sequences.empty()) throw EmptyDatasetError("no user has at least two interactions");
  return log;
}

/// Parses `user<TAB>item<TAB>timestamp` lines; `#` lines and blank lines are skipped.
inline InteractionLog parse_interactions(std::istream& in) {
  std::vector<Interaction> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
      const std::size_t tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (fields.size() != 3 || fields[0].empty() || fields[1].empty()) {
      throw ParseError("line " + std::to_string(line_no) + ": expected user_id<TAB>item_id<TAB>timestamp");
    }
    Interaction row{fields[0], fields[1], 0};
    std::size_t used = 0;
    try {
      row.timestamp = std::stoll(fields[2], &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != fields[2].size()) {
      throw ParseError("line " + std::to_string(line_no) + ": timestamp '" + fields[2] + "' is not an integer");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw EmptyDatasetError("interaction log has no events");
  return build_log(std::move(rows));
}

inline InteractionLog load_interactions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open interaction log '" + path + "'");
  return parse_interactions(in);
}

inline void write_interactions(std::ostream& out, const InteractionLog& log) {
  for (const auto& seq : log.sequences) {
    for (std::size_t i = 0; i < seq.items.size(); ++i) {
      out << seq.user_id << '\t' << log.vocab.id(seq.items[i]) << '\t'
          << (i < seq.timestamps.size() ? seq.timestamps[i] : static_cast<std::int64_t>(i)) << '\n';
    }
  }
}

// ---- sequence pairs ------------------------------------------------------

struct SequencePair {
  std::vector<ItemIndex> prefix;
  ItemIndex target = kUnknownItem;
  std::size_t source = 0;  // index of the originating sequence

  bool same_content(const SequencePair& other) const { return target == other.target && prefix == other.prefix; }
};

/// Prefix expansion: a length-n sequence yields n-1 (prefix, next item)
/// pairs; prefixes keep only their most recent `max_len` items.
inline std::vector<SequencePair> augment(const InteractionSequence& seq, std::size_t max_len = kDefaultMaxPrefix,
                                         std::size_t source = 0) {
  std::vector<SequencePair> out;
  if (seq.items.size() < 2) return out;
  if (max_len == 0) throw ConfigError("max prefix length must be positive");
  out.reserve(seq.items.size() - 1);
  for (std::size_t k = 1; k < seq.items.size(); ++k) {
    const std::size_t begin = k > max_len ? k - max_len : 0;
    SequencePair pair;
    pair.prefix.assign(seq.items.begin() + static_cast<std::ptrdiff_t>(begin),
                       seq.items.begin() + static_cast<std::ptrdiff_t>(k));
    pair.target = seq.items[k];
    pair.source = source;
    out.push_back(std::move(pair));
  }
  return out;
}

/// Interaction log plus every augmented pair.
struct Dataset {
  InteractionLog log;
  std::vector<SequencePair> pairs;
  std::size_t max_len = kDefaultMaxPrefix;

  std::size_t vocab_size() const { return log.vocab.size(); }
};

inline Dataset make_dataset(InteractionLog log, std::size_t max_len = kDefaultMaxPrefix) {
  Dataset ds;
  ds.max_len = max_len;
  for (std::size_t s = 0; s < log.sequences.size(); ++s) {
    auto pairs = augment(log.sequences[s], max_len, s);
    std::move(pairs.begin(), pairs.end(), std::back_inserter(ds.pairs));
  }
  ds.log = std::move(log);
  return ds;
}

// ---- cold-start partition and splits ----------------------------------

struct ColdPartition {
  std::vector<ItemIndex> rich;  // ascending
  std::vector<ItemIndex> cold;  // ascending
};

/// The `cold_fraction` of target items with the fewest pairs (at least one
/// item), ties at the cutoff broken by ascending item id.
inline ColdPartition partition_cold_items(const std::vector<SequencePair>& pairs, double cold_fraction = 0.2) {
  if (!(cold_fraction > 0.0 && cold_fraction < 1.0)) throw ConfigError("cold fraction must lie in (0, 1)");
  std::map<ItemIndex, std::size_t> counts;
  for (const auto& p : pairs) ++counts[p.target];
  if (counts.size() < 2) throw PartitionError("need at least two distinct target items, found " + std::to_string(counts.size()));

  std::vector<std::pair<std::size_t, ItemIndex>> ranked;
  for (auto [item, n] : counts) ranked.emplace_back(n, item);
  std::sort(ranked.begin(), ranked.end());
  auto n_cold = static_cast<std::size_t>(std::floor(cold_fraction * static_cast<double>(ranked.size()) + 0.5));
  n_cold = std::clamp<std::size_t>(n_cold, 1, ranked.size() - 1);

  ColdPartition out;
  for (std::size_t i = 0; i < ranked.size(); ++i) (i < n_cold ? out.cold : out.rich).push_back(ranked[i].second);
  std::sort(out.cold.begin(), out.cold.end());
  std::sort(out.rich.begin(), out.rich.end());
  return out;
}

struct SplitRatios {
  double train = 0.7;
  double valid = 0.1;
  double test = 0.2;
};

enum class SplitKind { train, valid, test };

inline const char* to_string(SplitKind k) {
  switch (k) {
    case SplitKind::train: return "train";
    case SplitKind::valid: return "valid";
    case SplitKind::test: return "test";
  }
  return "?";
}

struct DatasetSplits {
  std::vector<ItemIndex> rich_items;
  std::vector<ItemIndex> train_items;
  std::vector<ItemIndex> valid_items;
  std::vector<ItemIndex> test_items;
  std::vector<std::vector<PairIndex>> pools;      // per item: pairs targeting it
  std::vector<std::size_t> distinct_pairs;        // per item: distinct (prefix, target) contents
  std::vector<PairIndex> pretrain_pairs;          // rich targets, no meta item anywhere in the pair

  const std::vector<ItemIndex>& items(SplitKind k) const {
    switch (k) {
      case SplitKind::train: return train_items;
      case SplitKind::valid: return valid_items;
      case SplitKind::test: return test_items;
    }
    return test_items;
  }

  std::vector<ItemIndex> meta_items() const {
    std::vector<ItemIndex> all = train_items;
    all.insert(all.end(), valid_items.begin(), valid_items.end());
    all.insert(all.end(), test_items.begin(), test_items.end());
    std::sort(all.begin(), all.end());
    return all;
  }
};

/// Seeded 7:1:2 (by default) item split of the cold items, plus per-item
/// pair pools and a leakage-free pre-training pool.
inline DatasetSplits build_splits(const std::vector<SequencePair>& pairs, std::size_t vocab_size,
                                  const ColdPartition& partition, SplitRatios ratios, std::uint64_t seed) {
  const double total = ratios.train + ratios.valid + ratios.test;
  if (std::abs(total - 1.0) > 1e-9 || ratios.train < 0 || ratios.valid < 0 || ratios.test < 0) {
    throw ConfigError("split ratios must be non-negative and sum to 1");
  }
  const std::size_t n = partition.cold.size();
  const auto n_valid = static_cast<std::size_t>(std::floor(ratios.valid * static_cast<double>(n) + 0.5));
  const auto n_test = static_cast<std::size_t>(std::floor(ratios.test * static_cast<double>(n) + 0.5));
  if (n_valid + n_test >= n || n_valid == 0 || n_test == 0) {
    throw SplitSizeError(std::to_string(n) + " cold items cannot fill train/valid/test splits");
  }

  std::vector<ItemIndex> cold = partition.cold;
  Rng rng = Rng::derive(seed, 0x5b11u);
  rng.shuffle(cold);

  DatasetSplits out;
  out.rich_items = partition.rich;
  out.train_items.assign(cold.begin(), cold.end() - static_cast<std::ptrdiff_t>(n_valid + n_test));
  out.valid_items.assign(cold.end() - static_cast<std::ptrdiff_t>(n_valid + n_test),
                         cold.end() - static_cast<std::ptrdiff_t>(n_test));
  out.test_items.assign(cold.end() - static_cast<std::ptrdiff_t>(n_test), cold.end());
  for (auto* v : {&out.train_items, &out.valid_items, &out.test_items}) std::sort(v->begin(), v->end());

  out.pools.assign(vocab_size, {});
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (pairs[i].target >= vocab_size) throw VocabularyError("pair target outside the vocabulary");
    out.pools[pairs[i].target].push_back(static_cast<PairIndex>(i));
  }
  out.distinct_pairs.assign(vocab_size, 0);
  for (std::size_t item = 0; item < vocab_size; ++item) {
    std::vector<const std::vector<ItemIndex>*> prefixes;
    for (PairIndex p : out.pools[item]) prefixes.push_back(&pairs[p].prefix);
    std::sort(prefixes.begin(), prefixes.end(), [](auto* a, auto* b) { return *a < *b; });
    std::size_t distinct = 0;
    for (std::size_t i = 0; i < prefixes.size(); ++i) distinct += (i == 0 || *prefixes[i] != *prefixes[i - 1]);
    out.distinct_pairs[item] = distinct;
  }

  std::vector<char> is_meta(vocab_size, 0), is_rich(vocab_size, 0);
  for (ItemIndex it : partition.cold) is_meta[it] = 1;
  for (ItemIndex it : partition.rich) is_rich[it] = 1;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    if (!is_rich[p.target]) continue;
    const bool leaks = std::any_of(p.prefix.begin(), p.prefix.end(), [&](ItemIndex it) { return is_meta[it] != 0; });
    if (!leaks) out.pretrain_pairs.push_back(static_cast<PairIndex>(i));
  }
  return out;
}

}  // namespace mecos
