#pragma once

// Naive reference implementations on std::vector<double>, written without
// the library's tensor kernels or tape.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

namespace oracle {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;  // row-major: m[row][col]

inline double sigm(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline Vec matvec(const Mat& m, const Vec& x) {
  Vec out(m.size(), 0.0);
  for (std::size_t r = 0; r < m.size(); ++r)
    for (std::size_t c = 0; c < x.size(); ++c) out[r] += m[r][c] * x[c];
  return out;
}

inline Vec plus(Vec a, const Vec& b) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  return a;
}

inline Vec concat(Vec a, const Vec& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

inline double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double cosine(const Vec& a, const Vec& b) { return dot(a, b) / std::sqrt(dot(a, a) * dot(b, b)); }

inline Vec softmax(const Vec& z) {
  Vec e(z.size());
  double total = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) total += e[i] = std::exp(z[i]);
  for (auto& v : e) v /= total;
  return e;
}

/// Four separate gates, each with its own input and recurrent matrix.
struct Gates {
  Mat wi, wf, wg, wo;  // hidden x input
  Mat ui, uf, ug, uo;  // hidden x recurrent
  Vec bi, bf, bg, bo;
};

inline std::pair<Vec, Vec> lstm_step(const Gates& g, const Vec& x, const Vec& h, const Vec& c) {
  const std::size_t n = g.bi.size();
  Vec h_out(n), c_out(n);
  for (std::size_t k = 0; k < n; ++k) {
    double zi = g.bi[k], zf = g.bf[k], zg = g.bg[k], zo = g.bo[k];
    for (std::size_t j = 0; j < x.size(); ++j) {
      zi += g.wi[k][j] * x[j];
      zf += g.wf[k][j] * x[j];
      zg += g.wg[k][j] * x[j];
      zo += g.wo[k][j] * x[j];
    }
    for (std::size_t j = 0; j < h.size(); ++j) {
      zi += g.ui[k][j] * h[j];
      zf += g.uf[k][j] * h[j];
      zg += g.ug[k][j] * h[j];
      zo += g.uo[k][j] * h[j];
    }
    c_out[k] = sigm(zf) * c[k] + sigm(zi) * std::tanh(zg);
    h_out[k] = sigm(zo) * std::tanh(c_out[k]);
  }
  return {h_out, c_out};
}

inline Vec refine(const Gates& g, const Vec& q, const Vec& s, std::size_t steps) {
  Vec prev = q, c(q.size(), 0.0);
  for (std::size_t t = 0; t < steps; ++t) {
    auto [q_hat, c_next] = lstm_step(g, q, concat(prev, s), c);
    prev = plus(q_hat, q);
    c = c_next;
  }
  return prev;
}

struct Attention {
  Vec p, b;
  Mat w_last, w_item, w_avg;
  bool squash = true;  // sigmoid between the sum and p
};

/// Returns (alpha, R) for the item embedding rows in `items`.
inline std::pair<Vec, Vec> attend(const Attention& a, const Mat& items) {
  const std::size_t d = items.front().size();
  Vec avg(d, 0.0);
  for (const auto& v : items)
    for (std::size_t i = 0; i < d; ++i) avg[i] += v[i] / static_cast<double>(items.size());
  const Vec& last = items.back();
  Vec e;
  for (const auto& v : items) {
    Vec u = plus(plus(plus(matvec(a.w_last, last), matvec(a.w_item, v)), matvec(a.w_avg, avg)), a.b);
    if (a.squash)
      for (auto& x : u) x = sigm(x);
    e.push_back(dot(a.p, u));
  }
  Vec alpha = softmax(e);
  Vec r(d, 0.0);
  for (std::size_t j = 0; j < items.size(); ++j)
    for (std::size_t i = 0; i < d; ++i) r[i] += alpha[j] * items[j][i];
  return {alpha, r};
}

struct Ffn {
  std::vector<Mat> w;
  std::vector<Vec> b;
};

inline Vec residual(const Ffn& f, const Vec& h0) {
  Vec h = h0;
  for (std::size_t l = 0; l < f.w.size(); ++l) {
    h = plus(matvec(f.w[l], h), f.b[l]);
    for (auto& x : h) x = std::max(0.0, x);
  }
  return plus(h0, h);
}

/// Summed per-entry binary cross-entropy with a one-hot target per row.
inline double bce(const Mat& probs, const std::vector<std::size_t>& truth, double clamp = 1e-12) {
  double loss = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    for (std::size_t j = 0; j < probs[i].size(); ++j) {
      const double y = std::clamp(probs[i][j], clamp, 1.0 - clamp);
      loss -= j == truth[i] ? std::log(y) : std::log(1.0 - y);
    }
  }
  return loss;
}

/// Rank of `truth` by exhaustive pairwise comparison, ties counted against it.
inline std::size_t rank_of(const Vec& scores, std::size_t truth) {
  std::size_t better = 0;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    if (j == truth) continue;
    if (!(scores[j] < scores[truth])) ++better;
  }
  return better + 1;
}

}  // namespace oracle
