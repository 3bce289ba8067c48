#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "mecos/data.hpp"
#include "mecos/encoder.hpp"
#include "mecos/matcher.hpp"
#include "mecos/sampler.hpp"

namespace mecos {

/// Ablation switches: variant1 drops the pair encoder, variant2 the
/// matching steps, variant3 both.
enum class Variant { full, variant1, variant2, variant3 };

inline const char* to_string(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::variant1: return "variant1";
    case Variant::variant2: return "variant2";
    case Variant::variant3: return "variant3";
  }
  return "?";
}

inline Variant parse_variant(const std::string& s) {
  if (s == "full") return Variant::full;
  if (s == "variant1") return Variant::variant1;
  if (s == "variant2") return Variant::variant2;
  if (s == "variant3") return Variant::variant3;
  throw ConfigError("unknown variant '" + s + "' (expected full, variant1, variant2, variant3)");
}

struct Pipeline {
  EncoderOptions encoder;
  std::size_t steps = 2;
};

inline Pipeline apply_variant(Variant variant, Pipeline pipeline) {
  if (variant == Variant::variant1 || variant == Variant::variant3) pipeline.encoder.mode = EncoderMode::mean_pool;
  if (variant == Variant::variant2 || variant == Variant::variant3) pipeline.steps = 0;
  return pipeline;
}

/// Support-set representations (N x 2d) for an episode-shaped list of supports.
template <typename T>
typename Tape<T>::Var encode_support_sets(Tape<T>& tape, const BoundParams<T>& bp, const std::vector<SequencePair>& pairs,
                                          const std::vector<std::vector<PairIndex>>& supports, const Pipeline& pipe) {
  if (supports.empty()) throw AggregationError("no support sets");
  const std::size_t k = supports.front().size();
  std::vector<PairIndex> flat;
  for (const auto& set : supports) {
    if (set.size() != k || k == 0) throw AggregationError("support sets must share one non-zero size");
    flat.insert(flat.end(), set.begin(), set.end());
  }
  return aggregate(tape, encode_support_pairs(tape, bp, pairs, flat, pipe.encoder), k);
}

/// Row i holds softmax over candidates of query i's similarity scores (N x N).
template <typename T>
typename Tape<T>::Var episode_probabilities(Tape<T>& tape, const BoundParams<T>& bp, const std::vector<SequencePair>& pairs,
                                            const Episode& ep, const Pipeline& pipe) {
  auto s = encode_support_sets(tape, bp, pairs, ep.supports, pipe);
  std::vector<std::span<const ItemIndex>> prefixes;
  for (PairIndex q : ep.queries) prefixes.emplace_back(pairs[q].prefix);
  auto q = encode_query_prefixes(tape, bp, prefixes, pipe.encoder);
  return tape.row_softmax(score_matrix(tape, bp, q, s, pipe.steps));
}

/// Summed binary cross-entropy over all N x N (query, candidate) entries.
template <typename T>
typename Tape<T>::Var task_loss(Tape<T>& tape, const BoundParams<T>& bp, const std::vector<SequencePair>& pairs,
                                const Episode& ep, const Pipeline& pipe) {
  std::vector<std::size_t> truth(ep.queries.size());
  for (std::size_t i = 0; i < truth.size(); ++i) truth[i] = i;
  auto loss = tape.onehot_bce(episode_probabilities(tape, bp, pairs, ep, pipe), std::move(truth));
  if (!std::isfinite(static_cast<double>(tape.value(loss)[0]))) {
    std::string items;
    for (ItemIndex it : ep.candidates) items += " " + std::to_string(it);
    throw NumericError("non-finite task loss on episode with candidates" + items);
  }
  return loss;
}

template <typename T>
double task_loss(const ModelParams<T>& params, const std::vector<SequencePair>& pairs, const Episode& ep,
                 const Pipeline& pipe) {
  Tape<T> tape(false);
  auto bp = bind(tape, params);
  return static_cast<double>(tape.value(task_loss(tape, bp, pairs, ep, pipe))[0]);
}

}  // namespace mecos
