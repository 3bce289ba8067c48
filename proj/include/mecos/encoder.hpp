#pragma once

#include <span>
#include <string>
#include <vector>

#include "mecos/data.hpp"
#include "mecos/params.hpp"
#include "mecos/tape.hpp"

namespace mecos {

/// Nonlinearity between the summed attention terms and the projection p.
/// With `linear` the last-item and mean-item terms are constant across
/// positions and cancel inside the softmax.
enum class AttentionActivation { sigmoid, linear };

/// Pair encoder: the attentive encoder with residual feed-forward merge, or
/// plain mean pooling lifted to 2d by zero padding (the ablation variants).
enum class EncoderMode { attentive, mean_pool };

enum class SetTag { support, query };

template <typename T>
struct SetRepresentation {
  Tensor<T> values;  // 2d
  SetTag tag = SetTag::support;
};

/// Vars for every parameter group of a model on one tape.
template <typename T>
struct BoundParams {
  using Var = typename Tape<T>::Var;
  Var embeddings, attn_p, attn_w_last, attn_w_item, attn_w_avg, attn_b;
  std::vector<Var> ffn_w, ffn_b;
  Var query_proj, cell_w_input, cell_w_hidden, cell_bias;
  std::size_t dim = 0;
  std::size_t vocab = 0;

  std::vector<Var> all() const {
    std::vector<Var> out{embeddings, attn_p, attn_w_last, attn_w_item, attn_w_avg, attn_b};
    for (std::size_t l = 0; l < ffn_w.size(); ++l) {
      out.push_back(ffn_w[l]);
      out.push_back(ffn_b[l]);
    }
    out.insert(out.end(), {query_proj, cell_w_input, cell_w_hidden, cell_bias});
    return out;
  }

  /// Rebuilds the binding from vars laid out in ModelParams::tensors() order.
  static BoundParams from_vars(const Tape<T>& tape, const std::vector<Var>& v, std::size_t ffn_depth) {
    BoundParams b;
    std::size_t i = 0;
    b.embeddings = v.at(i++);
    b.attn_p = v.at(i++);
    b.attn_w_last = v.at(i++);
    b.attn_w_item = v.at(i++);
    b.attn_w_avg = v.at(i++);
    b.attn_b = v.at(i++);
    for (std::size_t l = 0; l < ffn_depth; ++l) {
      b.ffn_w.push_back(v.at(i++));
      b.ffn_b.push_back(v.at(i++));
    }
    b.query_proj = v.at(i++);
    b.cell_w_input = v.at(i++);
    b.cell_w_hidden = v.at(i++);
    b.cell_bias = v.at(i++);
    b.dim = tape.value(b.attn_p).size();
    b.vocab = tape.value(b.embeddings).rows();
    return b;
  }
};

template <typename T>
BoundParams<T> bind(Tape<T>& tape, const ModelParams<T>& params) {
  std::vector<typename Tape<T>::Var> vars;
  for (const Tensor<T>* t : params.tensors()) vars.push_back(tape.parameter(*t));
  return BoundParams<T>::from_vars(tape, vars, params.encoder.ffn_w.size());
}

/// Flattened batch of item lists: tokens, group offsets and each group's last token.
struct TokenBatch {
  std::vector<std::size_t> tokens;
  std::vector<std::size_t> offsets{0};
  std::vector<std::size_t> last;
  std::vector<std::size_t> segment_of;  // per token

  void add(std::span<const ItemIndex> items, std::size_t vocab) {
    if (items.empty()) throw VocabularyError("empty prefix");
    for (ItemIndex it : items) {
      if (it >= vocab) throw VocabularyError("item index " + std::to_string(it) + " outside a vocabulary of " + std::to_string(vocab));
      tokens.push_back(it);
      segment_of.push_back(offsets.size() - 1);
    }
    offsets.push_back(tokens.size());
    last.push_back(items.back());
  }

  std::size_t groups() const { return offsets.size() - 1; }
};

/// Attentive sequence representation for every prefix in the batch (S x d):
/// e_j = p . act(W_last v_n + W_item v_j + W_avg v_avg + b), alpha = softmax(e),
/// R = sum_j alpha_j v_j. If `attention` is given it receives alpha (tokens x 1).
template <typename T>
typename Tape<T>::Var sequence_repr(Tape<T>& tape, const BoundParams<T>& bp, const TokenBatch& batch,
                                    AttentionActivation act = AttentionActivation::sigmoid,
                                    typename Tape<T>::Var* attention = nullptr) {
  auto x = tape.gather_rows(bp.embeddings, batch.tokens);
  auto avg = tape.segment_mean(x, batch.offsets);
  auto last = tape.gather_rows(bp.embeddings, batch.last);
  auto per_group = tape.add(tape.matmul_nt(last, bp.attn_w_last), tape.matmul_nt(avg, bp.attn_w_avg));
  auto pre = tape.add_row(tape.add(tape.matmul_nt(x, bp.attn_w_item), tape.gather_rows(per_group, batch.segment_of)),
                          bp.attn_b);
  if (act == AttentionActivation::sigmoid) pre = tape.sigmoid(pre);
  auto scores = tape.matmul_nt(pre, bp.attn_p);
  auto alpha = tape.segment_softmax(scores, batch.offsets);
  if (attention) *attention = alpha;
  return tape.segment_weighted_sum(alpha, x, batch.offsets);
}

/// h = h0 + ReLU(W_L ... ReLU(W_1 h0 + b_1) ... + b_L).
template <typename T>
typename Tape<T>::Var residual_ffn(Tape<T>& tape, const BoundParams<T>& bp, typename Tape<T>::Var h0) {
  auto h = h0;
  for (std::size_t l = 0; l < bp.ffn_w.size(); ++l) h = tape.relu(tape.affine(h, bp.ffn_w[l], bp.ffn_b[l]));
  return tape.add(h0, h);
}

/// Support pair representation from R (S x d) and the target items.
template <typename T>
typename Tape<T>::Var support_pair_repr(Tape<T>& tape, const BoundParams<T>& bp, typename Tape<T>::Var r,
                                        const std::vector<std::size_t>& targets) {
  for (std::size_t t : targets) {
    if (t >= bp.vocab) throw VocabularyError("target item " + std::to_string(t) + " outside the vocabulary");
  }
  auto h0 = tape.concat_cols(r, tape.gather_rows(bp.embeddings, targets));
  return residual_ffn(tape, bp, h0);
}

/// Query pair representation: h0 = W_q R, then the shared feed-forward merge.
template <typename T>
typename Tape<T>::Var query_pair_repr(Tape<T>& tape, const BoundParams<T>& bp, typename Tape<T>::Var r) {
  return residual_ffn(tape, bp, tape.matmul_nt(r, bp.query_proj));
}

/// Mean of each consecutive block of `k` rows.
template <typename T>
typename Tape<T>::Var aggregate(Tape<T>& tape, typename Tape<T>::Var reprs, std::size_t k) {
  const std::size_t rows = tape.value(reprs).rows();
  if (k == 0 || rows == 0 || rows % k != 0) throw AggregationError("cannot pool " + std::to_string(rows) + " rows in groups of " + std::to_string(k));
  std::vector<std::size_t> offsets;
  for (std::size_t i = 0; i <= rows; i += k) offsets.push_back(i);
  return tape.segment_mean(reprs, std::move(offsets));
}

/// Mean item embedding of each group lifted to 2d as [mean; 0].
template <typename T>
typename Tape<T>::Var mean_pool_lifted(Tape<T>& tape, const BoundParams<T>& bp, const TokenBatch& batch) {
  auto mean = tape.segment_mean(tape.gather_rows(bp.embeddings, batch.tokens), batch.offsets);
  return tape.concat_cols(mean, tape.constant(Tensor<T>({batch.groups(), bp.dim})));
}

struct EncoderOptions {
  EncoderMode mode = EncoderMode::attentive;
  AttentionActivation activation = AttentionActivation::sigmoid;
};

/// Encodes support pairs (prefix + target) to 2d rows.
template <typename T>
typename Tape<T>::Var encode_support_pairs(Tape<T>& tape, const BoundParams<T>& bp, const std::vector<SequencePair>& pairs,
                                           std::span<const PairIndex> which, EncoderOptions opt) {
  TokenBatch batch;
  std::vector<std::size_t> targets;
  if (opt.mode == EncoderMode::mean_pool) {
    std::vector<ItemIndex> items;
    for (PairIndex p : which) {
      items = pairs[p].prefix;
      items.push_back(pairs[p].target);
      batch.add(items, bp.vocab);
    }
    return mean_pool_lifted(tape, bp, batch);
  }
  for (PairIndex p : which) {
    batch.add(pairs[p].prefix, bp.vocab);
    targets.push_back(pairs[p].target);
  }
  return support_pair_repr(tape, bp, sequence_repr(tape, bp, batch, opt.activation), targets);
}

/// Encodes query pairs from their prefixes alone; targets are never read.
template <typename T>
typename Tape<T>::Var encode_query_prefixes(Tape<T>& tape, const BoundParams<T>& bp,
                                            const std::vector<std::span<const ItemIndex>>& prefixes, EncoderOptions opt) {
  TokenBatch batch;
  for (auto prefix : prefixes) batch.add(prefix, bp.vocab);
  if (opt.mode == EncoderMode::mean_pool) return mean_pool_lifted(tape, bp, batch);
  return query_pair_repr(tape, bp, sequence_repr(tape, bp, batch, opt.activation));
}

// ---- single-instance convenience API --------------------------------------

template <typename T>
Tensor<T> sequence_repr(std::span<const ItemIndex> prefix, const ModelParams<T>& params,
                        AttentionActivation act = AttentionActivation::sigmoid, Tensor<T>* attention = nullptr) {
  Tape<T> tape(false);
  auto bp = bind(tape, params);
  TokenBatch batch;
  batch.add(prefix, bp.vocab);
  typename Tape<T>::Var alpha;
  auto r = sequence_repr(tape, bp, batch, act, &alpha);
  if (attention) *attention = tape.value(alpha).reshaped({prefix.size()});
  return tape.value(r).reshaped({params.dim()});
}

template <typename T>
Tensor<T> support_pair_repr(const Tensor<T>& r, ItemIndex target, const ModelParams<T>& params) {
  Tape<T> tape(false);
  auto bp = bind(tape, params);
  auto rv = tape.constant(r.reshaped({1, r.size()}));
  auto h = support_pair_repr(tape, bp, rv, {static_cast<std::size_t>(target)});
  return tape.value(h).reshaped({2 * params.dim()});
}

template <typename T>
Tensor<T> query_pair_repr(const Tensor<T>& r, const ModelParams<T>& params) {
  Tape<T> tape(false);
  auto bp = bind(tape, params);
  auto h = query_pair_repr(tape, bp, tape.constant(r.reshaped({1, r.size()})));
  return tape.value(h).reshaped({2 * params.dim()});
}

/// Query representation straight from a query pair; only the prefix is used.
template <typename T>
Tensor<T> encode_query(const SequencePair& query, const ModelParams<T>& params, EncoderOptions opt = {}) {
  Tape<T> tape(false);
  auto bp = bind(tape, params);
  std::vector<std::span<const ItemIndex>> prefixes{query.prefix};
  return tape.value(encode_query_prefixes(tape, bp, prefixes, opt)).reshaped({2 * params.dim()});
}

template <typename T>
SetRepresentation<T> aggregate(const std::vector<Tensor<T>>& reprs, SetTag tag = SetTag::support) {
  if (reprs.empty()) throw AggregationError("cannot aggregate an empty support set");
  Tensor<T> mean(reprs.front().shape());
  for (const auto& r : reprs) {
    if (r.size() != mean.size()) throw DimensionError("aggregate: representation lengths differ");
    for (std::size_t i = 0; i < r.size(); ++i) mean[i] += r[i];
  }
  for (auto& v : mean.values()) v /= static_cast<T>(reprs.size());
  return {std::move(mean), tag};
}

}  // namespace mecos
