#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mecos/error.hpp"
#include "mecos/tensor.hpp"

namespace mecos {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename T>
struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<Tensor<T>> first_moment;
  std::vector<Tensor<T>> second_moment;

  /// Zero accumulators mirroring the parameter shapes.
  template <typename Range>
  static AdamState for_params(const Range& params, AdamConfig config = {}) {
    AdamState state;
    state.config = config;
    for (const Tensor<T>* p : params) {
      state.first_moment.emplace_back(p->shape());
      state.second_moment.emplace_back(p->shape());
    }
    return state;
  }
};

/// Bias-corrected Adam update, in place. Gradients are checked for NaN/Inf
/// before any parameter is touched.
template <typename T>
void adam_step(const std::vector<Tensor<T>*>& params, const std::vector<Tensor<T>>& grads,
               const std::vector<std::string>& names, AdamState<T>& state) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size()) {
    throw DimensionError("adam_step: parameter, gradient and state counts differ");
  }
  for (std::size_t g = 0; g < params.size(); ++g) {
    if (grads[g].shape() != params[g]->shape() || state.first_moment[g].shape() != params[g]->shape()) {
      throw DimensionError("adam_step: shape mismatch in group " + (g < names.size() ? names[g] : std::to_string(g)));
    }
    if (!grads[g].all_finite()) {
      throw NumericError("non-finite gradient in parameter group '" + (g < names.size() ? names[g] : std::to_string(g)) +
                         "'; training aborted");
    }
  }
  ++state.step;
  const auto& cfg = state.config;
  const double t = static_cast<double>(state.step);
  const double correct1 = 1.0 - std::pow(cfg.beta1, t);
  const double correct2 = 1.0 - std::pow(cfg.beta2, t);
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  for (std::size_t g = 0; g < params.size(); ++g) {
    T* p = params[g]->data();
    const T* grad = grads[g].data();
    T* m = state.first_moment[g].data();
    T* v = state.second_moment[g].data();
    for (std::size_t i = 0; i < grads[g].size(); ++i) {
      m[i] = b1 * m[i] + (T{1} - b1) * grad[i];
      v[i] = b2 * v[i] + (T{1} - b2) * grad[i] * grad[i];
      const double m_hat = static_cast<double>(m[i]) / correct1;
      const double v_hat = static_cast<double>(v[i]) / correct2;
      p[i] -= static_cast<T>(cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon));
    }
  }
}

}  // namespace mecos
