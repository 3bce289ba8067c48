#pragma once

#include <cstddef>
#include <optional>
#include <utility>

#include "mecos/tape.hpp"
#include "mecos/tensor.hpp"

namespace mecos {

/// Weights of a four-gate LSTM cell. Gate rows are stacked in the order
/// input, forget, candidate, output; each block is `hidden` rows tall.
template <typename T>
struct CellParams {
  Tensor<T> w_input;   // (4 hidden) x input
  Tensor<T> w_hidden;  // (4 hidden) x recurrent
  Tensor<T> bias;      // 4 hidden

  std::size_t hidden() const { return bias.size() / 4; }
  std::size_t input_size() const { return w_input.cols(); }
  std::size_t recurrent_size() const { return w_hidden.cols(); }

  static CellParams zeros(std::size_t input, std::size_t recurrent, std::size_t hidden) {
    return {Tensor<T>({4 * hidden, input}), Tensor<T>({4 * hidden, recurrent}), Tensor<T>({4 * hidden})};
  }

  void validate() const {
    const std::size_t h = hidden();
    if (bias.size() != 4 * h || w_input.rows() != 4 * h || w_hidden.rows() != 4 * h || h == 0) {
      throw DimensionError("cell parameters have inconsistent gate shapes");
    }
  }
};

/// One LSTM update on plain vectors: x (input), h (recurrent state), c (cell).
template <typename T>
std::pair<Tensor<T>, Tensor<T>> recurrent_cell_step(const Tensor<T>& x, const Tensor<T>& h, const Tensor<T>& c,
                                                    const CellParams<T>& p) {
  p.validate();
  const std::size_t hd = p.hidden();
  if (x.size() != p.input_size() || h.size() != p.recurrent_size() || c.size() != hd) {
    throw DimensionError("recurrent_cell_step: x " + shape_str(x.shape()) + ", h " + shape_str(h.shape()) +
                         ", c " + shape_str(c.shape()));
  }
  Tensor<T> pre = affine(p.w_input, x, p.bias);
  Tensor<T> rec({4 * hd});
  kernel::matmul_nt(h.data(), p.w_hidden.data(), rec.data(), 1, h.size(), 4 * hd);
  Tensor<T> h_out({hd}), c_out({hd});
  for (std::size_t k = 0; k < hd; ++k) {
    const T in = sigmoid(pre[k] + rec[k]);
    const T forget = sigmoid(pre[hd + k] + rec[hd + k]);
    const T cand = std::tanh(pre[2 * hd + k] + rec[2 * hd + k]);
    const T out = sigmoid(pre[3 * hd + k] + rec[3 * hd + k]);
    c_out[k] = forget * c[k] + in * cand;
    h_out[k] = out * std::tanh(c_out[k]);
  }
  return {std::move(h_out), std::move(c_out)};
}

/// Gate nonlinearities on already-summed pre-activations (rows x 4 hidden).
/// Without a previous cell state the forget path is skipped (c = 0).
template <typename T>
std::pair<typename Tape<T>::Var, typename Tape<T>::Var> cell_from_preactivation(
    Tape<T>& tape, typename Tape<T>::Var pre, std::optional<typename Tape<T>::Var> c_prev, std::size_t hidden) {
  auto in = tape.sigmoid(tape.slice_cols(pre, 0, hidden));
  auto cand = tape.tanh(tape.slice_cols(pre, 2 * hidden, hidden));
  auto out = tape.sigmoid(tape.slice_cols(pre, 3 * hidden, hidden));
  auto c = tape.mul(in, cand);
  if (c_prev) {
    auto forget = tape.sigmoid(tape.slice_cols(pre, hidden, hidden));
    c = tape.add(tape.mul(forget, *c_prev), c);
  }
  auto h = tape.mul(out, tape.tanh(c));
  return {h, c};
}

/// Traced batched cell step: rows of x, h, c are independent cells.
template <typename T>
std::pair<typename Tape<T>::Var, typename Tape<T>::Var> recurrent_cell_step(
    Tape<T>& tape, typename Tape<T>::Var x, typename Tape<T>::Var h, typename Tape<T>::Var c,
    typename Tape<T>::Var w_input, typename Tape<T>::Var w_hidden, typename Tape<T>::Var bias) {
  const std::size_t hidden = tape.value(bias).size() / 4;
  auto pre = tape.add_row(tape.add(tape.matmul_nt(x, w_input), tape.matmul_nt(h, w_hidden)), bias);
  return cell_from_preactivation(tape, pre, std::optional{c}, hidden);
}

}  // namespace mecos
