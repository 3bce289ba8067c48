#pragma once

#include <algorithm>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "mecos/cell.hpp"
#include "mecos/encoder.hpp"
#include "mecos/params.hpp"
#include "mecos/tape.hpp"

namespace mecos {

/// Refines q against one support representation s for `steps` steps:
/// (q_hat, c) = cell(q, [q_prev; s], c_prev), q_prev = q_hat + q, starting
/// from q_prev = q and c = 0.
template <typename T>
Tensor<T> refine_query(const Tensor<T>& q, const Tensor<T>& s, std::size_t steps, const CellParams<T>& cell) {
  if (q.size() != s.size()) throw DimensionError("refine_query: query and support lengths differ");
  Tensor<T> q_prev = q;
  Tensor<T> c({cell.hidden()});
  for (std::size_t step = 0; step < steps; ++step) {
    Tensor<T> rec({2 * q.size()});
    std::copy(q_prev.values().begin(), q_prev.values().end(), rec.data());
    std::copy(s.values().begin(), s.values().end(), rec.data() + q.size());
    auto [q_hat, c_next] = recurrent_cell_step(q, rec, c, cell);
    for (std::size_t i = 0; i < q.size(); ++i) q_prev[i] = q_hat[i] + q[i];
    c = std::move(c_next);
  }
  return q_prev;
}

/// Cosine score of every (query, support) pair after per-candidate
/// refinement: returns (queries x supports).
///
/// The recurrent weight matrix is split into its q-block and s-block so the
/// input and support contributions are computed once per row instead of
/// once per pair; the first step's q-block term is likewise per query.
template <typename T>
typename Tape<T>::Var score_matrix(Tape<T>& tape, const BoundParams<T>& bp, typename Tape<T>::Var queries,
                                   typename Tape<T>::Var supports, std::size_t steps) {
  using Var = typename Tape<T>::Var;
  const std::size_t nq = tape.value(queries).rows();
  const std::size_t ns = tape.value(supports).rows();
  const std::size_t width = tape.value(queries).cols();
  if (tape.value(supports).cols() != width) throw DimensionError("score_matrix: query/support widths differ");
  std::vector<std::size_t> qi(nq * ns), sj(nq * ns);
  for (std::size_t i = 0; i < nq; ++i)
    for (std::size_t j = 0; j < ns; ++j) {
      qi[i * ns + j] = i;
      sj[i * ns + j] = j;
    }
  Var q_pairs = tape.gather_rows(queries, qi);
  Var s_pairs = tape.gather_rows(supports, sj);
  Var refined = q_pairs;
  if (steps > 0) {
    const std::size_t hidden = tape.value(bp.cell_bias).size() / 4;
    if (hidden != width || tape.value(bp.cell_w_hidden).cols() != 2 * width) {
      throw DimensionError("score_matrix: cell shape does not match representation width");
    }
    Var w_hq = tape.slice_cols(bp.cell_w_hidden, 0, width);
    Var w_hs = tape.slice_cols(bp.cell_w_hidden, width, width);
    Var from_query = tape.matmul_nt(queries, bp.cell_w_input);  // nq x 4h
    Var from_support = tape.add_row(tape.matmul_nt(supports, w_hs), bp.cell_bias);  // ns x 4h
    Var fixed = tape.add(tape.gather_rows(from_query, qi), tape.gather_rows(from_support, sj));
    Var first = tape.gather_rows(tape.matmul_nt(queries, w_hq), qi);
    std::optional<Var> c;
    for (std::size_t step = 0; step < steps; ++step) {
      Var pre = tape.add(fixed, step == 0 ? first : tape.matmul_nt(refined, w_hq));
      auto [q_hat, c_next] = cell_from_preactivation(tape, pre, c, hidden);
      c = c_next;
      refined = tape.add(q_hat, q_pairs);
    }
  }
  return tape.reshape(tape.row_cosine(refined, s_pairs), {nq, ns});
}

template <typename T>
struct ScoreVector {
  std::vector<T> similarity;    // z, each in [-1, 1]
  std::vector<T> probability;  // softmax(z)
};

/// Scores one query representation against N support-set representations.
template <typename T>
ScoreVector<T> score_all(const Tensor<T>& q, const std::vector<Tensor<T>>& supports, const ModelParams<T>& params,
                         std::size_t steps) {
  if (supports.size() < 2) throw DomainError("score_all needs at least two candidates");
  Tape<T> tape(false);
  auto bp = bind(tape, params);
  Tensor<T> s({supports.size(), q.size()});
  for (std::size_t j = 0; j < supports.size(); ++j) {
    if (supports[j].size() != q.size()) throw DimensionError("score_all: support width differs from query");
    std::copy(supports[j].values().begin(), supports[j].values().end(), s.data() + j * q.size());
  }
  auto qv = tape.constant(q.reshaped({1, q.size()}));
  auto sv = tape.constant(std::move(s));
  for (std::size_t j = 0; j < supports.size(); ++j) {
    if (!(norm2(supports[j].values()) > T{0})) {
      throw DegenerateVectorError("support set of candidate " + std::to_string(j) + " has a zero-norm representation");
    }
  }
  typename Tape<T>::Var z;
  try {
    z = score_matrix(tape, bp, qv, sv, steps);
  } catch (const DegenerateVectorError& e) {
    // With a single query, pair row j is candidate j.
    throw DegenerateVectorError(std::string("refined query against candidate: ") + e.what());
  }
  auto y = tape.row_softmax(z);
  ScoreVector<T> out;
  out.similarity.assign(tape.value(z).values().begin(), tape.value(z).values().end());
  out.probability.assign(tape.value(y).values().begin(), tape.value(y).values().end());
  return out;
}

/// Candidates by descending score, equal scores by ascending item.
template <typename S>
std::vector<ItemIndex> rank_candidates(const std::vector<S>& scores, const std::vector<ItemIndex>& items) {
  if (scores.size() != items.size()) throw DimensionError("rank_candidates: score and item counts differ");
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return items[a] < items[b];
  });
  std::vector<ItemIndex> out;
  for (std::size_t i : order) out.push_back(items[i]);
  return out;
}

/// 1-based rank of scores[truth] with ties resolved against it.
template <typename S>
std::size_t ground_truth_rank(const std::vector<S>& scores, std::size_t truth) {
  std::size_t rank = 1;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    if (j != truth && scores[j] >= scores[truth]) ++rank;
  }
  return rank;
}

}  // namespace mecos
