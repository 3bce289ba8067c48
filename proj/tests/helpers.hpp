#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "mecos/experiment.hpp"
#include "mecos/synth.hpp"
#include "oracles.hpp"

namespace testing_support {

using namespace mecos;

inline Tensor<double> random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.values()) v = rng.uniform(-scale, scale);
  return t;
}

inline oracle::Vec to_vec(const Tensor<double>& t) { return {t.values().begin(), t.values().end()}; }

inline oracle::Mat to_mat(const Tensor<double>& t) {
  oracle::Mat m(t.rows());
  for (std::size_t r = 0; r < t.rows(); ++r) m[r].assign(t.row(r).begin(), t.row(r).end());
  return m;
}

/// Rows [block*h, (block+1)*h) of a gate-stacked matrix.
inline oracle::Mat gate_block(const Tensor<double>& w, std::size_t block, std::size_t h) {
  oracle::Mat m;
  for (std::size_t r = block * h; r < (block + 1) * h; ++r) m.emplace_back(w.row(r).begin(), w.row(r).end());
  return m;
}

inline oracle::Vec bias_block(const Tensor<double>& b, std::size_t block, std::size_t h) {
  return {b.values().begin() + static_cast<std::ptrdiff_t>(block * h),
          b.values().begin() + static_cast<std::ptrdiff_t>((block + 1) * h)};
}

inline oracle::Gates gates_of(const CellParams<double>& c) {
  const std::size_t h = c.hidden();
  oracle::Gates g;
  g.wi = gate_block(c.w_input, 0, h);
  g.wf = gate_block(c.w_input, 1, h);
  g.wg = gate_block(c.w_input, 2, h);
  g.wo = gate_block(c.w_input, 3, h);
  g.ui = gate_block(c.w_hidden, 0, h);
  g.uf = gate_block(c.w_hidden, 1, h);
  g.ug = gate_block(c.w_hidden, 2, h);
  g.uo = gate_block(c.w_hidden, 3, h);
  g.bi = bias_block(c.bias, 0, h);
  g.bf = bias_block(c.bias, 1, h);
  g.bg = bias_block(c.bias, 2, h);
  g.bo = bias_block(c.bias, 3, h);
  return g;
}

/// Random parameters with nonzero biases, so every term participates.
inline ModelParams<double> random_params(std::size_t vocab, std::size_t d, Rng& rng, std::size_t depth = 1) {
  auto p = init_params<double>(vocab, d, depth, rng);
  for (auto* t : p.tensors())
    for (auto& v : t->values()) v += rng.uniform(-0.3, 0.3);
  return p;
}

inline oracle::Attention attention_of(const ModelParams<double>& p, bool squash = true) {
  return {to_vec(p.encoder.attn_p), to_vec(p.encoder.attn_b), to_mat(p.encoder.attn_w_last),
          to_mat(p.encoder.attn_w_item), to_mat(p.encoder.attn_w_avg), squash};
}

inline oracle::Ffn ffn_of(const ModelParams<double>& p) {
  oracle::Ffn f;
  for (const auto& w : p.encoder.ffn_w) f.w.push_back(to_mat(w));
  for (const auto& b : p.encoder.ffn_b) f.b.push_back(to_vec(b));
  return f;
}

inline oracle::Mat rows_of(const ModelParams<double>& p, const std::vector<ItemIndex>& items) {
  oracle::Mat m;
  for (ItemIndex it : items) m.emplace_back(p.encoder.item_embeddings.row(it).begin(), p.encoder.item_embeddings.row(it).end());
  return m;
}

/// Full model on plain vectors: support sets, queries, refinement, softmax.
inline oracle::Mat oracle_probabilities(const ModelParams<double>& p, const std::vector<SequencePair>& pairs,
                                        const Episode& ep, std::size_t steps, bool mean_pool = false) {
  const auto att = attention_of(p);
  const auto ffn = ffn_of(p);
  const auto q_proj = to_mat(p.encoder.query_proj);
  const auto gates = gates_of(p.cell);
  const std::size_t d = p.dim();
  auto mean_lift = [&](const std::vector<ItemIndex>& items) {
    oracle::Vec m(2 * d, 0.0);
    for (const auto& row : rows_of(p, items))
      for (std::size_t i = 0; i < d; ++i) m[i] += row[i] / static_cast<double>(items.size());
    return m;
  };
  std::vector<oracle::Vec> supports;
  for (const auto& set : ep.supports) {
    oracle::Vec s(2 * d, 0.0);
    for (PairIndex pi : set) {
      const auto& pair = pairs[pi];
      oracle::Vec h;
      if (mean_pool) {
        auto items = pair.prefix;
        items.push_back(pair.target);
        h = mean_lift(items);
      } else {
        const auto r = oracle::attend(att, rows_of(p, pair.prefix)).second;
        h = oracle::residual(ffn, oracle::concat(r, rows_of(p, {pair.target}).front()));
      }
      for (std::size_t i = 0; i < s.size(); ++i) s[i] += h[i] / static_cast<double>(set.size());
    }
    supports.push_back(s);
  }
  oracle::Mat probs;
  for (PairIndex qi : ep.queries) {
    const auto& prefix = pairs[qi].prefix;
    oracle::Vec q = mean_pool ? mean_lift(prefix)
                              : oracle::residual(ffn, oracle::matvec(q_proj, oracle::attend(att, rows_of(p, prefix)).second));
    oracle::Vec z;
    for (const auto& s : supports) z.push_back(oracle::cosine(oracle::refine(gates, q, s, steps), s));
    probs.push_back(oracle::softmax(z));
  }
  return probs;
}

/// Small clustered dataset whose splits support 4-way 2-shot episodes.
struct TinyWorld {
  Dataset data;
  Prepared prep;
  Hyperparams hyper;
};

inline TinyWorld tiny_world(std::uint64_t seed = 3) {
  SynthConfig sc;
  sc.n_clusters = 4;
  sc.items_per_cluster = 10;
  sc.n_sequences = 400;
  sc.min_len = 4;
  sc.max_len = 8;
  Rng rng(seed);
  TinyWorld w;
  w.data = make_dataset(synth_generate(sc, rng));
  w.hyper.cold_fraction = 0.5;
  w.hyper.n_train = 4;
  w.hyper.k = 2;
  w.hyper.dim = 8;
  w.hyper.steps = 2;
  w.hyper.n_eval = 10;
  w.hyper.valid_queries = 20;
  w.hyper.test_queries = 40;
  w.hyper.seed = seed;
  w.prep = prepare(w.data, w.hyper);
  return w;
}

inline double rel_err(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

/// Largest componentwise difference relative to the largest magnitude.
inline double rel_err(const oracle::Vec& a, const oracle::Vec& b) {
  double diff = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(a[i] - b[i]));
    scale = std::max({scale, std::abs(a[i]), std::abs(b[i])});
  }
  return scale == 0.0 ? 0.0 : diff / scale;
}

}  // namespace testing_support
