#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "mecos/cell.hpp"
#include "mecos/data.hpp"
#include "mecos/rng.hpp"
#include "mecos/tensor.hpp"

namespace mecos {

template <typename T>
struct EncoderParams {
  Tensor<T> item_embeddings;  // |V| x d
  Tensor<T> attn_p;           // d
  Tensor<T> attn_w_last;      // d x d, applied to the last item
  Tensor<T> attn_w_item;      // d x d, applied to each position
  Tensor<T> attn_w_avg;       // d x d, applied to the mean embedding
  Tensor<T> attn_b;           // d
  std::vector<Tensor<T>> ffn_w;  // per layer 2d x 2d
  std::vector<Tensor<T>> ffn_b;  // per layer 2d
  Tensor<T> query_proj;       // 2d x d

  std::size_t dim() const { return attn_p.size(); }
  std::size_t vocab_size() const { return item_embeddings.rows(); }
};

/// Every trainable tensor of the model. The matching cell maps a 2d input
/// and a 4d recurrent state [q; s] to a 2d hidden state.
template <typename T>
struct ModelParams {
  EncoderParams<T> encoder;
  CellParams<T> cell;

  std::size_t dim() const { return encoder.dim(); }

  /// Parameter groups in a fixed order, paired with their names.
  std::vector<Tensor<T>*> tensors() {
    std::vector<Tensor<T>*> out{&encoder.item_embeddings, &encoder.attn_p,      &encoder.attn_w_last,
                                &encoder.attn_w_item,     &encoder.attn_w_avg, &encoder.attn_b};
    for (std::size_t l = 0; l < encoder.ffn_w.size(); ++l) {
      out.push_back(&encoder.ffn_w[l]);
      out.push_back(&encoder.ffn_b[l]);
    }
    out.insert(out.end(), {&encoder.query_proj, &cell.w_input, &cell.w_hidden, &cell.bias});
    return out;
  }

  std::vector<const Tensor<T>*> tensors() const {
    auto mut = const_cast<ModelParams*>(this)->tensors();
    return {mut.begin(), mut.end()};
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out{"item_embeddings", "attn.p", "attn.w_last", "attn.w_item", "attn.w_avg", "attn.b"};
    for (std::size_t l = 0; l < encoder.ffn_w.size(); ++l) {
      out.push_back("ffn.w" + std::to_string(l));
      out.push_back("ffn.b" + std::to_string(l));
    }
    out.insert(out.end(), {"query.w", "cell.w_input", "cell.w_hidden", "cell.bias"});
    return out;
  }

  template <typename U>
  ModelParams<U> cast() const {
    ModelParams<U> out = ModelParams<U>::shaped(vocab_size(), dim(), encoder.ffn_w.size());
    auto dst = out.tensors();
    auto src = tensors();
    for (std::size_t i = 0; i < src.size(); ++i) *dst[i] = src[i]->template cast<U>();
    return out;
  }

  std::size_t vocab_size() const { return encoder.vocab_size(); }

  /// Zero-valued parameters of the right shapes.
  static ModelParams shaped(std::size_t vocab, std::size_t d, std::size_t ffn_depth = 1) {
    if (d == 0) throw ConfigError("embedding dimension must be positive");
    if (ffn_depth == 0) throw ConfigError("feed-forward depth must be at least 1");
    ModelParams p;
    auto& e = p.encoder;
    e.item_embeddings = Tensor<T>({vocab, d});
    e.attn_p = Tensor<T>({d});
    e.attn_w_last = Tensor<T>({d, d});
    e.attn_w_item = Tensor<T>({d, d});
    e.attn_w_avg = Tensor<T>({d, d});
    e.attn_b = Tensor<T>({d});
    for (std::size_t l = 0; l < ffn_depth; ++l) {
      e.ffn_w.emplace_back(Shape{2 * d, 2 * d});
      e.ffn_b.emplace_back(Shape{2 * d});
    }
    e.query_proj = Tensor<T>({2 * d, d});
    p.cell = CellParams<T>::zeros(2 * d, 4 * d, 2 * d);
    return p;
  }
};

/// Weight matrices uniform in +-1/sqrt(fan_in), biases zero. Vectors
/// (the attention projection) count their length as fan-in.
template <typename T>
ModelParams<T> init_params(std::size_t vocab, std::size_t d, std::size_t ffn_depth, Rng& rng) {
  auto p = ModelParams<T>::shaped(vocab, d, ffn_depth);
  auto fill = [&rng](Tensor<T>& t) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(t.cols()));
    for (auto& v : t.values()) v = static_cast<T>(rng.uniform(-bound, bound));
  };
  auto& e = p.encoder;
  fill(e.item_embeddings);
  fill(e.attn_p);
  fill(e.attn_w_last);
  fill(e.attn_w_item);
  fill(e.attn_w_avg);
  for (auto& w : e.ffn_w) fill(w);
  fill(e.query_proj);
  fill(p.cell.w_input);
  fill(p.cell.w_hidden);
  return p;
}

// ---- embedding text files ------------------------------------------------

struct EmbeddingRow {
  std::string label;
  std::vector<double> values;
};

struct EmbeddingTable {
  std::size_t dim = 0;
  std::vector<EmbeddingRow> rows;
};

/// First line `count dim`, then `label v_1 ... v_dim` per row.
inline EmbeddingTable parse_embeddings(std::istream& in) {
  EmbeddingTable table;
  std::string line;
  std::size_t count = 0;
  if (!std::getline(in, line)) throw ParseError("embedding file: missing header line");
  {
    std::istringstream head(line);
    if (!(head >> count >> table.dim) || table.dim == 0) throw ParseError("embedding file line 1: expected '<count> <dim>'");
  }
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    EmbeddingRow row;
    if (!(fields >> row.label)) continue;
    double v;
    while (fields >> v) row.values.push_back(v);
    if (!fields.eof() || row.values.size() != table.dim) {
      throw ParseError("embedding file line " + std::to_string(line_no) + ": expected " + std::to_string(table.dim) +
                       " values");
    }
    table.rows.push_back(std::move(row));
  }
  if (table.rows.size() != count) {
    throw ParseError("embedding file declares " + std::to_string(count) + " rows but has " +
                     std::to_string(table.rows.size()));
  }
  return table;
}

inline EmbeddingTable load_embeddings(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open embedding file '" + path + "'");
  return parse_embeddings(in);
}

inline void write_embeddings(std::ostream& out, const EmbeddingTable& table) {
  out << table.rows.size() << ' ' << table.dim << '\n';
  char buf[40];
  for (const auto& row : table.rows) {
    out << row.label;
    for (double v : row.values) {
      std::snprintf(buf, sizeof buf, " %.9g", v);
      out << buf;
    }
    out << '\n';
  }
}

/// Overwrites embedding rows for items present in the table; returns how
/// many vocabulary items were found. Others keep their random values.
template <typename T>
std::size_t apply_pretrained(ModelParams<T>& params, const Vocabulary& vocab, const EmbeddingTable& table) {
  if (table.dim != params.dim()) {
    throw ConfigError("pre-trained embeddings have dimension " + std::to_string(table.dim) + ", model uses " +
                      std::to_string(params.dim()));
  }
  std::size_t found = 0;
  auto& emb = params.encoder.item_embeddings;
  for (const auto& row : table.rows) {
    if (!vocab.contains(row.label)) continue;
    const ItemIndex it = vocab.at(row.label);
    for (std::size_t j = 0; j < table.dim; ++j) emb(it, j) = static_cast<T>(row.values[j]);
    ++found;
  }
  return found;
}

}  // namespace mecos
