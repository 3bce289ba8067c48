#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "helpers.hpp"

using namespace mecos;
using namespace testing_support;

namespace {

InteractionLog parse(const std::string& text) {
  std::istringstream in(text);
  return parse_interactions(in);
}

std::vector<SequencePair> pairs_with_counts(const std::vector<std::size_t>& counts) {
  std::vector<SequencePair> pairs;
  for (std::size_t item = 0; item < counts.size(); ++item)
    for (std::size_t c = 0; c < counts[item]; ++c) pairs.push_back({{static_cast<ItemIndex>(c % 3)}, static_cast<ItemIndex>(item), 0});
  return pairs;
}

bool disjoint(const std::vector<ItemIndex>& a, const std::vector<ItemIndex>& b) {
  std::set<ItemIndex> sa(a.begin(), a.end());
  for (ItemIndex x : b)
    if (sa.count(x)) return false;
  return true;
}

}  // namespace

TEST(LoadInteractions, OneUserThreeRows) {
  auto log = parse("u1\ta\t1\nu1\tb\t2\nu1\tc\t3\n");
  ASSERT_EQ(log.sequences.size(), 1u);
  EXPECT_EQ(log.sequences[0].items.size(), 3u);
  EXPECT_EQ(log.vocab.size(), 3u);
}

TEST(LoadInteractions, SortsByTimestamp) {
  auto sorted = parse("u1\ta\t1\nu1\tb\t2\nu1\tc\t3\n");
  auto shuffled = parse("u1\tc\t3\nu1\ta\t1\nu1\tb\t2\n");
  EXPECT_EQ(sorted.sequences[0].items, shuffled.sequences[0].items);
  EXPECT_EQ(shuffled.sequences[0].timestamps, (std::vector<std::int64_t>{1, 2, 3}));
}

TEST(LoadInteractions, SingleEventUserExcluded) {
  auto log = parse("u1\ta\t1\nu1\tb\t2\nu2\tz\t5\n");
  ASSERT_EQ(log.sequences.size(), 1u);
  EXPECT_EQ(log.sequences[0].user_id, "u1");
  EXPECT_FALSE(log.vocab.contains("z"));
}

TEST(LoadInteractions, CommentsAndBlankLinesSkipped) {
  auto log = parse("# header\n\nu1\ta\t1\r\nu1\tb\t2\n");
  EXPECT_EQ(log.sequences.size(), 1u);
}

TEST(LoadInteractions, MalformedLineReportsLineNumber) {
  try {
    parse("u1\ta\t1\nu1\tb\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
  EXPECT_THROW(parse("u1\ta\tnoon\n"), ParseError);
  EXPECT_THROW(parse("u1\ta\t12x\n"), ParseError);
}

TEST(LoadInteractions, EmptyInputIsEmptyDataset) {
  EXPECT_THROW(parse(""), EmptyDatasetError);
  EXPECT_THROW(parse("# only a comment\n"), EmptyDatasetError);
  EXPECT_THROW(parse("u1\ta\t1\nu2\tb\t1\n"), EmptyDatasetError);
}

TEST(LoadInteractions, WriteParseRoundTrip) {
  auto log = parse("u2\tb\t9\nu1\ta\t1\nu1\tb\t2\nu2\tc\t10\n");
  std::ostringstream out;
  write_interactions(out, log);
  auto again = parse(out.str());
  ASSERT_EQ(again.sequences.size(), log.sequences.size());
  for (std::size_t s = 0; s < log.sequences.size(); ++s) EXPECT_EQ(again.sequences[s].items, log.sequences[s].items);
}

TEST(LoadInteractions, MissingFileIsUsageError) { EXPECT_THROW(load_interactions("/nonexistent/log.tsv"), ConfigError); }

TEST(Augment, FourItemsGiveThreePairs) {
  InteractionSequence seq{"u", {0, 1, 2, 3}, {}};
  auto pairs = augment(seq);
  ASSERT_EQ(pairs.size(), 3u);
  EXPECT_EQ(pairs[0].prefix, (std::vector<ItemIndex>{0}));
  EXPECT_EQ(pairs[0].target, 1u);
  EXPECT_EQ(pairs[1].prefix, (std::vector<ItemIndex>{0, 1}));
  EXPECT_EQ(pairs[1].target, 2u);
  EXPECT_EQ(pairs[2].prefix, (std::vector<ItemIndex>{0, 1, 2}));
  EXPECT_EQ(pairs[2].target, 3u);
}

TEST(Augment, MinimalSequence) { EXPECT_EQ(augment(InteractionSequence{"u", {4, 7}, {}}).size(), 1u); }

TEST(Augment, TruncatesOldestItems) {
  auto pairs = augment(InteractionSequence{"u", {0, 1, 2, 3, 4, 5}, {}}, 3);
  ASSERT_EQ(pairs.size(), 5u);
  EXPECT_EQ(pairs.back().prefix, (std::vector<ItemIndex>{2, 3, 4}));
  EXPECT_EQ(pairs.back().target, 5u);
  EXPECT_EQ(pairs[1].prefix, (std::vector<ItemIndex>{0, 1}));
}

TEST(Augment, ShortSequenceIsEmpty) {
  EXPECT_TRUE(augment(InteractionSequence{"u", {1}, {}}).empty());
  EXPECT_TRUE(augment(InteractionSequence{"u", {}, {}}).empty());
}

TEST(AugmentProperty, CountIsLengthMinusOne) {
  Rng rng(21);
  for (int c = 0; c < 1000; ++c) {
    InteractionSequence seq{"u", {}, {}};
    const std::size_t n = 2 + rng.index(40);
    for (std::size_t i = 0; i < n; ++i) seq.items.push_back(static_cast<ItemIndex>(rng.index(50)));
    const std::size_t max_len = 1 + rng.index(10);
    auto pairs = augment(seq, max_len);
    ASSERT_EQ(pairs.size(), n - 1);
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      ASSERT_EQ(pairs[k].target, seq.items[k + 1]);
      ASSERT_GE(pairs[k].prefix.size(), 1u);
      ASSERT_LE(pairs[k].prefix.size(), max_len);
      ASSERT_EQ(pairs[k].prefix.back(), seq.items[k]);
    }
  }
}

TEST(Partition, FewestPairsTieBrokenById) {
  // a..e are items 0..4
  auto part = partition_cold_items(pairs_with_counts({10, 1, 1, 1, 10}), 0.2);
  EXPECT_EQ(part.cold, (std::vector<ItemIndex>{1}));
  EXPECT_EQ(part.rich, (std::vector<ItemIndex>{0, 2, 3, 4}));
}

TEST(Partition, TinyFractionStillSelectsOne) {
  auto part = partition_cold_items(pairs_with_counts({3, 5, 2, 7, 9}), 1e-9);
  EXPECT_EQ(part.cold, (std::vector<ItemIndex>{2}));
}

TEST(Partition, EqualCountsTakeSmallestIds) {
  auto part = partition_cold_items(pairs_with_counts(std::vector<std::size_t>(10, 4)), 0.2);
  EXPECT_EQ(part.cold, (std::vector<ItemIndex>{0, 1}));
}

TEST(Partition, TooFewTargetsThrows) {
  EXPECT_THROW(partition_cold_items(pairs_with_counts({5}), 0.2), PartitionError);
  EXPECT_THROW(partition_cold_items({}, 0.2), PartitionError);
}

TEST(Partition, FractionOutsideRangeThrows) {
  EXPECT_THROW(partition_cold_items(pairs_with_counts({1, 2}), 0.0), ConfigError);
  EXPECT_THROW(partition_cold_items(pairs_with_counts({1, 2}), 1.0), ConfigError);
}

namespace {

ColdPartition ten_cold() {
  ColdPartition p;
  for (ItemIndex i = 0; i < 10; ++i) p.cold.push_back(i);
  for (ItemIndex i = 10; i < 20; ++i) p.rich.push_back(i);
  return p;
}

}  // namespace

TEST(BuildSplits, SevenOneTwo) {
  auto pairs = pairs_with_counts(std::vector<std::size_t>(20, 3));
  auto s = build_splits(pairs, 20, ten_cold(), {}, 4);
  EXPECT_EQ(s.train_items.size(), 7u);
  EXPECT_EQ(s.valid_items.size(), 1u);
  EXPECT_EQ(s.test_items.size(), 2u);
  EXPECT_TRUE(disjoint(s.train_items, s.valid_items));
  EXPECT_TRUE(disjoint(s.train_items, s.test_items));
  EXPECT_TRUE(disjoint(s.valid_items, s.test_items));
  EXPECT_EQ(s.meta_items(), ten_cold().cold);
}

TEST(BuildSplits, LeakingPretrainPairExcluded) {
  std::vector<SequencePair> pairs{
      {{10, 11}, 12, 0},  // clean rich pair
      {{10, 3}, 12, 1},   // prefix holds cold item 3
      {{11}, 3, 2},       // cold target
      {{12}, 11, 3},
  };
  auto s = build_splits(pairs, 20, ten_cold(), {}, 1);
  EXPECT_EQ(s.pretrain_pairs, (std::vector<PairIndex>{0, 3}));
}

TEST(BuildSplits, SameSeedSameSplits) {
  auto pairs = pairs_with_counts(std::vector<std::size_t>(20, 2));
  auto a = build_splits(pairs, 20, ten_cold(), {}, 77);
  auto b = build_splits(pairs, 20, ten_cold(), {}, 77);
  EXPECT_EQ(a.train_items, b.train_items);
  EXPECT_EQ(a.valid_items, b.valid_items);
  EXPECT_EQ(a.test_items, b.test_items);
  EXPECT_EQ(a.pretrain_pairs, b.pretrain_pairs);
}

TEST(BuildSplits, EmptySplitIsSplitSizeError) {
  ColdPartition p;
  p.cold = {0, 1, 2};
  p.rich = {3};
  EXPECT_THROW(build_splits(pairs_with_counts({1, 1, 1, 1}), 4, p, {}, 1), SplitSizeError);
}

TEST(BuildSplits, RatiosMustSumToOne) {
  EXPECT_THROW(build_splits({}, 20, ten_cold(), {0.5, 0.1, 0.1}, 1), ConfigError);
}

TEST(BuildSplits, DistinctPairCounts) {
  std::vector<SequencePair> pairs{{{1}, 0, 0}, {{1}, 0, 1}, {{2}, 0, 2}, {{1, 2}, 0, 3}};
  ColdPartition p;
  p.cold = {0};
  p.rich = {1};
  SplitRatios r{0.0, 0.0, 1.0};
  EXPECT_THROW(build_splits(pairs, 3, p, r, 1), SplitSizeError);
  p.cold = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  auto s = build_splits(pairs, 10, p, {}, 1);
  EXPECT_EQ(s.distinct_pairs[0], 3u);
  EXPECT_EQ(s.pools[0].size(), 4u);
}

TEST(SplitProperty, DisjointUnionAndLeakFree) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto w = tiny_world(seed);
    const auto& s = w.prep.splits;
    EXPECT_TRUE(disjoint(s.train_items, s.test_items));
    EXPECT_TRUE(disjoint(s.train_items, s.valid_items));
    EXPECT_TRUE(disjoint(s.valid_items, s.test_items));
    EXPECT_EQ(s.meta_items(), w.prep.partition.cold);
    std::set<ItemIndex> meta(w.prep.partition.cold.begin(), w.prep.partition.cold.end());
    for (PairIndex p : s.pretrain_pairs) {
      const auto& pair = w.data.pairs[p];
      ASSERT_FALSE(meta.count(pair.target));
      for (ItemIndex it : pair.prefix) ASSERT_FALSE(meta.count(it));
    }
  }
}

namespace {

// Item 0 has two distinct pairs, item 1 three, item 2 exactly one.
struct SmallPools {
  std::vector<SequencePair> pairs{{{5}, 0, 0}, {{6}, 0, 1}, {{5}, 1, 2}, {{6}, 1, 3}, {{7}, 1, 4}, {{5}, 2, 5}};
  DatasetSplits splits;
  SmallPools() {
    ColdPartition p;
    p.cold = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    splits = build_splits(pairs, 10, p, {}, 1);
    splits.train_items = {0, 1, 2};
  }
};

}  // namespace

TEST(SampleEpisode, MinimalFeasible) {
  SmallPools w;
  Rng rng(1);
  auto ep = fill_episode(w.pairs, w.splits, {0, 1}, 1, rng);
  ASSERT_EQ(ep.ways(), 2u);
  EXPECT_EQ(ep.shots(), 1u);
  ASSERT_EQ(ep.queries.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(w.pairs[ep.supports[i][0]].target, ep.candidates[i]);
    EXPECT_EQ(w.pairs[ep.queries[i]].target, ep.candidates[i]);
    EXPECT_FALSE(w.pairs[ep.supports[i][0]].same_content(w.pairs[ep.queries[i]]));
  }
}

TEST(SampleEpisode, ItemWithoutSpareRejected) {
  SmallPools w;
  EXPECT_EQ(eligible_items(w.splits, w.splits.train_items, 1), (std::vector<ItemIndex>{0, 1}));
  EXPECT_EQ(eligible_items(w.splits, w.splits.train_items, 2), (std::vector<ItemIndex>{1}));
  Rng rng(2);
  EXPECT_THROW(fill_episode(w.pairs, w.splits, {0, 2}, 1, rng), SamplingError);
  try {
    sample_episode(w.pairs, w.splits, SplitKind::train, 3, 1, rng);
    FAIL() << "expected SamplingError";
  } catch (const SamplingError& e) {
    EXPECT_NE(std::string(e.what()).find("shortfall 1"), std::string::npos);
  }
}

TEST(SampleEpisode, FewerThanTwoWaysIsConfigError) {
  SmallPools w;
  Rng rng(3);
  EXPECT_THROW(sample_episode(w.pairs, w.splits, SplitKind::train, 1, 1, rng), ConfigError);
  EXPECT_THROW(fill_episode(w.pairs, w.splits, {0, 1}, 0, rng), ConfigError);
}

TEST(SampleEpisodeProperty, ThousandEpisodesHoldInvariants) {
  auto w = tiny_world();
  Rng rng(31);
  const auto& pairs = w.data.pairs;
  for (int e = 0; e < 1000; ++e) {
    auto ep = sample_episode(pairs, w.prep.splits, SplitKind::train, w.hyper.n_train, w.hyper.k, rng);
    ASSERT_EQ(ep.ways(), w.hyper.n_train);
    ASSERT_EQ(std::set<ItemIndex>(ep.candidates.begin(), ep.candidates.end()).size(), w.hyper.n_train);
    ASSERT_EQ(ep.queries.size(), w.hyper.n_train);
    for (std::size_t i = 0; i < ep.ways(); ++i) {
      ASSERT_EQ(ep.supports[i].size(), w.hyper.k);
      ASSERT_EQ(std::set<PairIndex>(ep.supports[i].begin(), ep.supports[i].end()).size(), w.hyper.k);
      for (PairIndex p : ep.supports[i]) {
        ASSERT_EQ(pairs[p].target, ep.candidates[i]);
        ASSERT_FALSE(pairs[p].same_content(pairs[ep.queries[i]]));
      }
      ASSERT_EQ(pairs[ep.queries[i]].target, ep.candidates[i]);
    }
  }
}

TEST(SampleEpisodeProperty, PureFunctionOfSeed) {
  auto w = tiny_world();
  Rng a(5), b(5);
  for (int e = 0; e < 50; ++e) {
    auto x = sample_episode(w.data.pairs, w.prep.splits, SplitKind::train, 4, 2, a);
    auto y = sample_episode(w.data.pairs, w.prep.splits, SplitKind::train, 4, 2, b);
    ASSERT_EQ(x.candidates, y.candidates);
    ASSERT_EQ(x.supports, y.supports);
    ASSERT_EQ(x.queries, y.queries);
  }
}

TEST(Synth, PureClusterSequences) {
  SynthConfig cfg;
  cfg.n_sequences = 300;
  cfg.within_cluster_prob = 1.0;
  Rng rng(1);
  auto log = synth_generate(cfg, rng);
  for (const auto& seq : log.sequences) {
    std::set<std::size_t> clusters;
    for (ItemIndex it : seq.items) clusters.insert(synth_cluster_of(cfg, std::stoul(log.vocab.id(it).substr(1))));
    ASSERT_EQ(clusters.size(), 1u);
  }
}

TEST(Synth, NullModelIsUniform) {
  SynthConfig cfg;
  cfg.n_clusters = 4;
  cfg.items_per_cluster = 5;
  cfg.n_sequences = 20000;
  cfg.within_cluster_prob = 0.0;
  Rng rng(2);
  std::vector<std::size_t> homes;
  auto rows = synth_events(cfg, rng, &homes);
  // Items are independent of the latent cluster: each cluster's items
  // take a 1/4 share among events of every home cluster.
  std::vector<std::vector<double>> share(4, std::vector<double>(4, 0.0));
  std::vector<double> per_home(4, 0.0);
  for (const auto& r : rows) {
    const std::size_t u = std::stoul(r.user_id.substr(1));
    share[homes[u]][synth_cluster_of(cfg, std::stoul(r.item_id.substr(1)))] += 1;
    per_home[homes[u]] += 1;
  }
  for (std::size_t h = 0; h < 4; ++h)
    for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(share[h][c] / per_home[h], 0.25, 0.01);
}

TEST(Synth, DefaultWithinClusterFraction) {
  SynthConfig cfg;
  Rng rng(3);
  std::vector<std::size_t> homes;
  auto rows = synth_events(cfg, rng, &homes);
  std::size_t within = 0;
  for (const auto& r : rows) {
    const std::size_t u = std::stoul(r.user_id.substr(1));
    within += synth_cluster_of(cfg, std::stoul(r.item_id.substr(1))) == homes[u];
  }
  const double frac = static_cast<double>(within) / static_cast<double>(rows.size());
  // An off-cluster draw still lands in the home cluster 1/8 of the time.
  EXPECT_NEAR(frac, 0.9 + 0.1 / 8.0, 0.02);
  EXPECT_NEAR(frac, 0.9, 0.02);
}

TEST(Synth, SameSeedSameLog) {
  SynthConfig cfg;
  cfg.n_sequences = 100;
  Rng a(9), b(9);
  std::ostringstream x, y;
  write_interactions(x, synth_generate(cfg, a));
  write_interactions(y, synth_generate(cfg, b));
  EXPECT_EQ(x.str(), y.str());
}

TEST(Synth, InvalidConfigThrows) {
  SynthConfig cfg;
  cfg.min_len = 1;
  Rng rng(1);
  EXPECT_THROW(synth_generate(cfg, rng), ConfigError);
  cfg = {};
  cfg.within_cluster_prob = 1.5;
  EXPECT_THROW(synth_generate(cfg, rng), ConfigError);
}
