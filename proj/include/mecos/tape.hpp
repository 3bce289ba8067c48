#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <utility>
#include <vector>

#include "mecos/error.hpp"
#include "mecos/tensor.hpp"

namespace mecos {

/// Reverse-mode gradient tape over row-major matrices.
///
/// Every op appends one node holding its value and, when recording, a
/// closure that pushes the node's output gradient into its inputs.
/// Rank-1 tensors are treated as a single row. Parameters are borrowed,
/// so the referenced tensors must outlive the tape and stay unmodified
/// until backward() returns.
template <typename T>
class Tape {
 public:
  struct Var {
    std::size_t id = std::numeric_limits<std::size_t>::max();
  };

  explicit Tape(bool record = true) : record_(record) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) noexcept = default;
  Tape& operator=(Tape&&) noexcept = default;

  bool recording() const noexcept { return record_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  Var constant(Tensor<T> value) { return push(std::move(value), false, {}); }

  Var constant_ref(const Tensor<T>& value) {
    Node node;
    node.ref = &value;
    nodes_.push_back(std::move(node));
    return Var{nodes_.size() - 1};
  }

  Var parameter(const Tensor<T>& value) {
    Node node;
    node.ref = &value;
    node.needs_grad = record_;
    nodes_.push_back(std::move(node));
    return Var{nodes_.size() - 1};
  }

  const Tensor<T>& value(Var v) const { return nodes_.at(v.id).value(); }

  /// Gradient of the last backward() target; zeros if the node was not reached.
  Tensor<T> grad(Var v) const {
    const auto& g = grads_.size() > v.id ? grads_[v.id] : empty_;
    if (g.empty()) return Tensor<T>(value(v).shape());
    return g;
  }

  void backward(Var loss) {
    if (!record_) throw NumericError("backward on a tape that did not record");
    if (value(loss).size() != 1) throw DimensionError("backward target must be a scalar");
    grads_.assign(nodes_.size(), Tensor<T>());
    grads_[loss.id] = Tensor<T>(value(loss).shape(), T{1});
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      if (grads_[i].empty() || !nodes_[i].backward) continue;
      nodes_[i].backward(*this, i);
    }
  }

  // ---- ops -----------------------------------------------------------

  /// x (r x k) times w^T where w is (o x k).
  Var matmul_nt(Var x, Var w) {
    const auto& xv = value(x);
    const auto& wv = value(w);
    const std::size_t r = xv.rows(), k = xv.cols(), o = wv.rows();
    if (wv.cols() != k) {
      throw DimensionError("matmul: " + shape_str(xv.shape()) + " by " + shape_str(wv.shape()) + "^T");
    }
    Tensor<T> out({r, o});
    kernel::matmul_nt(xv.data(), wv.data(), out.data(), r, k, o);
    return push(std::move(out), {x, w}, [x, w, r, k, o](Tape& t, std::size_t self) {
      const T* g = t.grads_[self].data();
      const T* xd = t.value(x).data();
      const T* wd = t.value(w).data();
      if (t.needs(x)) {
        T* gx = t.accum(x).data();
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < o; ++j) kernel::axpy(g[i * o + j], wd + j * k, gx + i * k, k);
      }
      if (t.needs(w)) {
        T* gw = t.accum(w).data();
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < o; ++j) kernel::axpy(g[i * o + j], xd + i * k, gw + j * k, k);
      }
    });
  }

  /// Row-wise x W^T + b.
  Var affine(Var x, Var w, Var b) { return add_row(matmul_nt(x, w), b); }

  Var add(Var a, Var b) {
    const auto& av = value(a);
    const auto& bv = value(b);
    require_same(av, bv, "add");
    Tensor<T> out(matrix_shape(av));
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
    return push(std::move(out), {a, b}, [a, b](Tape& t, std::size_t self) {
      const auto& g = t.grads_[self];
      for (Var in : {a, b}) {
        if (!t.needs(in)) continue;
        auto& gi = t.accum(in);
        for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
      }
    });
  }

  /// Broadcast-add a row vector to every row of a.
  Var add_row(Var a, Var bias) {
    const auto& av = value(a);
    const auto& bv = value(bias);
    const std::size_t r = av.rows(), c = av.cols();
    if (bv.size() != c) throw DimensionError("add_row: bias " + shape_str(bv.shape()) + " vs " + shape_str(av.shape()));
    Tensor<T> out(matrix_shape(av));
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) out[i * c + j] = av[i * c + j] + bv[j];
    return push(std::move(out), {a, bias}, [a, bias, r, c](Tape& t, std::size_t self) {
      const auto& g = t.grads_[self];
      if (t.needs(a)) {
        auto& ga = t.accum(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (t.needs(bias)) {
        auto& gb = t.accum(bias);
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) gb[j] += g[i * c + j];
      }
    });
  }

  Var mul(Var a, Var b) {
    const auto& av = value(a);
    const auto& bv = value(b);
    require_same(av, bv, "mul");
    Tensor<T> out(matrix_shape(av));
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    return push(std::move(out), {a, b}, [a, b](Tape& t, std::size_t self) {
      const auto& g = t.grads_[self];
      const auto& av = t.value(a);
      const auto& bv = t.value(b);
      if (t.needs(a)) {
        auto& ga = t.accum(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
      }
      if (t.needs(b)) {
        auto& gb = t.accum(b);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
      }
    });
  }

  Var scale(Var a, T s) {
    const auto& av = value(a);
    Tensor<T> out(matrix_shape(av));
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * s;
    return push(std::move(out), {a}, [a, s](Tape& t, std::size_t self) {
      const auto& g = t.grads_[self];
      auto& ga = t.accum(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * s;
    });
  }

  Var sigmoid(Var a) {
    return unary(a, [](T x) { return mecos::sigmoid(x); }, [](T, T y) { return y * (T{1} - y); });
  }
  Var tanh(Var a) {
    return unary(a, [](T x) { return std::tanh(x); }, [](T, T y) { return T{1} - y * y; });
  }
  Var relu(Var a) {
    return unary(a, [](T x) { return x > T{0} ? x : T{0}; }, [](T x, T) { return x > T{0} ? T{1} : T{0}; });
  }

  /// out.row(i) = a.row(idx[i]); backward scatter-adds.
  Var gather_rows(Var a, std::vector<std::size_t> idx) {
    const auto& av = value(a);
    const std::size_t c = av.cols(), n = av.rows();
    Tensor<T> out({idx.size(), c});
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (idx[i] >= n) throw DimensionError("gather_rows: row " + std::to_string(idx[i]) + " of " + std::to_string(n));
      std::copy_n(av.data() + idx[i] * c, c, out.data() + i * c);
    }
    return push(std::move(out), {a}, [a, c, idx = std::move(idx)](Tape& t, std::size_t self) {
      const T* g = t.grads_[self].data();
      T* ga = t.accum(a).data();
      for (std::size_t i = 0; i < idx.size(); ++i) kernel::axpy(T{1}, g + i * c, ga + idx[i] * c, c);
    });
  }

  Var slice_cols(Var a, std::size_t begin, std::size_t count) {
    const auto& av = value(a);
    const std::size_t r = av.rows(), c = av.cols();
    if (begin + count > c) throw DimensionError("slice_cols out of range");
    Tensor<T> out({r, count});
    for (std::size_t i = 0; i < r; ++i) std::copy_n(av.data() + i * c + begin, count, out.data() + i * count);
    return push(std::move(out), {a}, [a, r, c, begin, count](Tape& t, std::size_t self) {
      const T* g = t.grads_[self].data();
      T* ga = t.accum(a).data();
      for (std::size_t i = 0; i < r; ++i) kernel::axpy(T{1}, g + i * count, ga + i * c + begin, count);
    });
  }

  Var concat_cols(Var a, Var b) {
    const auto& av = value(a);
    const auto& bv = value(b);
    const std::size_t r = av.rows(), ca = av.cols(), cb = bv.cols();
    if (bv.rows() != r) throw DimensionError("concat_cols: row mismatch");
    Tensor<T> out({r, ca + cb});
    for (std::size_t i = 0; i < r; ++i) {
      std::copy_n(av.data() + i * ca, ca, out.data() + i * (ca + cb));
      std::copy_n(bv.data() + i * cb, cb, out.data() + i * (ca + cb) + ca);
    }
    return push(std::move(out), {a, b}, [a, b, r, ca, cb](Tape& t, std::size_t self) {
      const T* g = t.grads_[self].data();
      if (t.needs(a)) {
        T* ga = t.accum(a).data();
        for (std::size_t i = 0; i < r; ++i) kernel::axpy(T{1}, g + i * (ca + cb), ga + i * ca, ca);
      }
      if (t.needs(b)) {
        T* gb = t.accum(b).data();
        for (std::size_t i = 0; i < r; ++i) kernel::axpy(T{1}, g + i * (ca + cb) + ca, gb + i * cb, cb);
      }
    });
  }

  /// Mean of consecutive row groups; offsets has one more entry than groups.
  Var segment_mean(Var a, std::vector<std::size_t> offsets) {
    const auto& av = value(a);
    const std::size_t c = av.cols();
    check_offsets(offsets, av.rows(), "segment_mean");
    const std::size_t s = offsets.size() - 1;
    Tensor<T> out({s, c});
    for (std::size_t g = 0; g < s; ++g) {
      const T inv = T{1} / static_cast<T>(offsets[g + 1] - offsets[g]);
      for (std::size_t i = offsets[g]; i < offsets[g + 1]; ++i) kernel::axpy(inv, av.data() + i * c, out.data() + g * c, c);
    }
    return push(std::move(out), {a}, [a, c, offsets = std::move(offsets)](Tape& t, std::size_t self) {
      const T* g = t.grads_[self].data();
      T* ga = t.accum(a).data();
      for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
        const T inv = T{1} / static_cast<T>(offsets[s + 1] - offsets[s]);
        for (std::size_t i = offsets[s]; i < offsets[s + 1]; ++i) kernel::axpy(inv, g + s * c, ga + i * c, c);
      }
    });
  }

  /// Softmax of a column vector within each row group.
  Var segment_softmax(Var a, std::vector<std::size_t> offsets) {
    const auto& av = value(a);
    if (av.cols() != 1) throw DimensionError("segment_softmax expects a column vector");
    check_offsets(offsets, av.rows(), "segment_softmax");
    Tensor<T> out({av.rows(), 1});
    for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
      T peak = av[offsets[s]];
      for (std::size_t i = offsets[s]; i < offsets[s + 1]; ++i) peak = std::max(peak, av[i]);
      T total{0};
      for (std::size_t i = offsets[s]; i < offsets[s + 1]; ++i) total += (out[i] = std::exp(av[i] - peak));
      for (std::size_t i = offsets[s]; i < offsets[s + 1]; ++i) out[i] /= total;
    }
    return push(std::move(out), {a}, [a, offsets = std::move(offsets)](Tape& t, std::size_t self) {
      const auto& g = t.grads_[self];
      const auto& y = t.nodes_[self].value();
      auto& ga = t.accum(a);
      for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
        T inner{0};
        for (std::size_t i = offsets[s]; i < offsets[s + 1]; ++i) inner += g[i] * y[i];
        for (std::size_t i = offsets[s]; i < offsets[s + 1]; ++i) ga[i] += y[i] * (g[i] - inner);
      }
    });
  }

  /// out.row(s) = sum over rows i of group s of alpha[i] * x.row(i).
  Var segment_weighted_sum(Var alpha, Var x, std::vector<std::size_t> offsets) {
    const auto& wv = value(alpha);
    const auto& xv = value(x);
    const std::size_t c = xv.cols();
    if (wv.size() != xv.rows()) throw DimensionError("segment_weighted_sum: weight count");
    check_offsets(offsets, xv.rows(), "segment_weighted_sum");
    const std::size_t s = offsets.size() - 1;
    Tensor<T> out({s, c});
    for (std::size_t g = 0; g < s; ++g)
      for (std::size_t i = offsets[g]; i < offsets[g + 1]; ++i) kernel::axpy(wv[i], xv.data() + i * c, out.data() + g * c, c);
    return push(std::move(out), {alpha, x}, [alpha, x, c, offsets = std::move(offsets)](Tape& t, std::size_t self) {
      const T* g = t.grads_[self].data();
      const auto& wv = t.value(alpha);
      const auto& xv = t.value(x);
      for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
        for (std::size_t i = offsets[s]; i < offsets[s + 1]; ++i) {
          if (t.needs(alpha)) t.accum(alpha)[i] += kernel::dot(g + s * c, xv.data() + i * c, c);
          if (t.needs(x)) kernel::axpy(wv[i], g + s * c, t.accum(x).data() + i * c, c);
        }
      }
    });
  }

  /// Cosine similarity of matching rows; (r x c), (r x c) -> (r x 1).
  Var row_cosine(Var a, Var b) {
    const auto& av = value(a);
    const auto& bv = value(b);
    require_same(av, bv, "row_cosine");
    const std::size_t r = av.rows(), c = av.cols();
    Tensor<T> out({r, 1});
    std::vector<T> na(r), nb(r);
    for (std::size_t i = 0; i < r; ++i) {
      const T* ar = av.data() + i * c;
      const T* br = bv.data() + i * c;
      na[i] = std::sqrt(kernel::dot(ar, ar, c));
      nb[i] = std::sqrt(kernel::dot(br, br, c));
      if (!(na[i] > T{0}) || !(nb[i] > T{0})) {
        throw DegenerateVectorError("zero-norm representation in row " + std::to_string(i));
      }
      out[i] = std::clamp(kernel::dot(ar, br, c) / (na[i] * nb[i]), T{-1}, T{1});
    }
    return push(std::move(out), {a, b}, [a, b, r, c, na = std::move(na), nb = std::move(nb)](Tape& t, std::size_t self) {
      const auto& g = t.grads_[self];
      const auto& y = t.nodes_[self].value();
      const T* ad = t.value(a).data();
      const T* bd = t.value(b).data();
      for (std::size_t i = 0; i < r; ++i) {
        // d cos / d a = b / (|a||b|) - cos * a / |a|^2
        const T* ar = ad + i * c;
        const T* br = bd + i * c;
        if (t.needs(a)) {
          T* ga = t.accum(a).data() + i * c;
          const T k1 = g[i] / (na[i] * nb[i]);
          const T k2 = g[i] * y[i] / (na[i] * na[i]);
          for (std::size_t j = 0; j < c; ++j) ga[j] += k1 * br[j] - k2 * ar[j];
        }
        if (t.needs(b)) {
          T* gb = t.accum(b).data() + i * c;
          const T k1 = g[i] / (na[i] * nb[i]);
          const T k2 = g[i] * y[i] / (nb[i] * nb[i]);
          for (std::size_t j = 0; j < c; ++j) gb[j] += k1 * ar[j] - k2 * br[j];
        }
      }
    });
  }

  Var reshape(Var a, Shape shape) {
    Tensor<T> out = value(a).reshaped(std::move(shape));
    return push(std::move(out), {a}, [a](Tape& t, std::size_t self) {
      const auto& g = t.grads_[self];
      auto& ga = t.accum(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
  }

  Var row_softmax(Var a) {
    const auto& av = value(a);
    const std::size_t r = av.rows(), c = av.cols();
    if (c == 0) throw DomainError("softmax of an empty row");
    Tensor<T> out({r, c});
    for (std::size_t i = 0; i < r; ++i) {
      const T* in = av.data() + i * c;
      T* o = out.data() + i * c;
      const T peak = *std::max_element(in, in + c);
      T total{0};
      for (std::size_t j = 0; j < c; ++j) total += (o[j] = std::exp(in[j] - peak));
      for (std::size_t j = 0; j < c; ++j) o[j] /= total;
    }
    return push(std::move(out), {a}, [a, r, c](Tape& t, std::size_t self) {
      const auto& g = t.grads_[self];
      const auto& y = t.nodes_[self].value();
      auto& ga = t.accum(a);
      for (std::size_t i = 0; i < r; ++i) {
        T inner{0};
        for (std::size_t j = 0; j < c; ++j) inner += g[i * c + j] * y[i * c + j];
        for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += y[i * c + j] * (g[i * c + j] - inner);
      }
    });
  }

  Var sum(Var a) {
    const auto& av = value(a);
    T total{0};
    for (std::size_t i = 0; i < av.size(); ++i) total += av[i];
    return push(Tensor<T>({1, 1}, total), {a}, [a](Tape& t, std::size_t self) {
      const T g = t.grads_[self][0];
      auto& ga = t.accum(a);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
    });
  }

  /// Summed binary cross-entropy of row-wise probabilities against a one-hot
  /// target per row: -sum_ij [y log p + (1 - y) log(1 - p)], with p clamped
  /// to [clamp, 1 - clamp]. Accumulated in double so the clamp survives float.
  Var onehot_bce(Var probs, std::vector<std::size_t> truth, double clamp = 1e-12) {
    const auto& pv = value(probs);
    const std::size_t r = pv.rows(), c = pv.cols();
    if (truth.size() != r) throw DimensionError("onehot_bce: one target per row required");
    double total = 0.0;
    for (std::size_t i = 0; i < r; ++i) {
      if (truth[i] >= c) throw DimensionError("onehot_bce: target index out of range");
      for (std::size_t j = 0; j < c; ++j) {
        const double p = std::clamp(static_cast<double>(pv[i * c + j]), clamp, 1.0 - clamp);
        total -= (j == truth[i]) ? std::log(p) : std::log(1.0 - p);
      }
    }
    return push(Tensor<T>({1, 1}, static_cast<T>(total)), {probs},
                [probs, r, c, clamp, truth = std::move(truth)](Tape& t, std::size_t self) {
                  const double g = t.grads_[self][0];
                  const auto& pv = t.value(probs);
                  auto& gp = t.accum(probs);
                  for (std::size_t i = 0; i < r; ++i) {
                    for (std::size_t j = 0; j < c; ++j) {
                      const double p = pv[i * c + j];
                      if (p < clamp || p > 1.0 - clamp) continue;
                      const double d = (j == truth[i]) ? -1.0 / p : 1.0 / (1.0 - p);
                      gp[i * c + j] += static_cast<T>(g * d);
                    }
                  }
                });
  }

 private:
  using Backward = std::function<void(Tape&, std::size_t)>;

  struct Node {
    Tensor<T> owned;
    const Tensor<T>* ref = nullptr;
    bool needs_grad = false;
    Backward backward;
    const Tensor<T>& value() const { return ref ? *ref : owned; }
  };

  static Shape matrix_shape(const Tensor<T>& t) { return {t.rows(), t.cols()}; }

  static void require_same(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
      throw DimensionError(std::string(op) + ": " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
  }

  static void check_offsets(const std::vector<std::size_t>& offsets, std::size_t rows, const char* op) {
    if (offsets.size() < 2 || offsets.front() != 0 || offsets.back() != rows) {
      throw DimensionError(std::string(op) + ": offsets do not cover the rows");
    }
    for (std::size_t i = 0; i + 1 < offsets.size(); ++i) {
      if (offsets[i + 1] <= offsets[i]) throw DimensionError(std::string(op) + ": empty segment");
    }
  }

  bool needs(Var v) const { return nodes_[v.id].needs_grad; }

  Tensor<T>& accum(Var v) {
    auto& g = grads_[v.id];
    if (g.empty()) g = Tensor<T>(nodes_[v.id].value().shape());
    return g;
  }

  Var push(Tensor<T> value, bool needs_grad, Backward backward) {
    value.check_finite("tape op");
    Node node;
    node.owned = std::move(value);
    node.needs_grad = needs_grad;
    if (needs_grad) node.backward = std::move(backward);
    nodes_.push_back(std::move(node));
    return Var{nodes_.size() - 1};
  }

  Var push(Tensor<T> value, std::initializer_list<Var> inputs, Backward backward) {
    bool any = false;
    if (record_) {
      for (Var in : inputs) any = any || nodes_[in.id].needs_grad;
    }
    return push(std::move(value), any, std::move(backward));
  }

  template <typename F, typename D>
  Var unary(Var a, F f, D df) {
    const auto& av = value(a);
    Tensor<T> out(matrix_shape(av));
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(av[i]);
    return push(std::move(out), {a}, [a, df](Tape& t, std::size_t self) {
      const auto& g = t.grads_[self];
      const auto& x = t.value(a);
      const auto& y = t.nodes_[self].value();
      auto& ga = t.accum(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * df(x[i], y[i]);
    });
  }

  bool record_ = true;
  std::vector<Node> nodes_;
  std::vector<Tensor<T>> grads_;
  Tensor<T> empty_;
};

}  // namespace mecos
