#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "mecos/tape.hpp"

namespace mecos {

struct GroupError {
  std::string name;
  double max_relative = 0.0;  // max |analytic - numeric|, scaled by the group's largest gradient
  double max_absolute = 0.0;
  std::size_t count = 0;
};

/// Builds a scalar loss on the given tape from one Var per parameter group.
using LossBuilder = std::function<Tape<double>::Var(Tape<double>&, const std::vector<Tape<double>::Var>&)>;

inline double evaluate_loss(const LossBuilder& loss, const std::vector<Tensor<double>>& params) {
  Tape<double> tape(false);
  std::vector<Tape<double>::Var> vars;
  for (const auto& p : params) vars.push_back(tape.parameter(p));
  return tape.value(loss(tape, vars))[0];
}

/// Tape gradient of `loss` for every group, in group order.
inline std::vector<Tensor<double>> tape_gradients(const LossBuilder& loss, const std::vector<Tensor<double>>& params) {
  Tape<double> tape;
  std::vector<Tape<double>::Var> vars;
  for (const auto& p : params) vars.push_back(tape.parameter(p));
  tape.backward(loss(tape, vars));
  std::vector<Tensor<double>> grads;
  for (auto v : vars) grads.push_back(tape.grad(v));
  return grads;
}

/// Central finite differences against the tape gradient. The relative error
/// is scaled by the largest gradient magnitude in the group, so components
/// that are tiny compared with the rest of the group do not amplify
/// round-off; a group whose gradients are all exactly zero reports 0.
inline std::vector<GroupError> grad_check(const LossBuilder& loss, std::vector<Tensor<double>> params,
                                          const std::vector<std::string>& names, double eps = 1e-5) {
  const auto analytic = tape_gradients(loss, params);
  std::vector<GroupError> report;
  for (std::size_t g = 0; g < params.size(); ++g) {
    GroupError err;
    err.name = g < names.size() ? names[g] : "group" + std::to_string(g);
    err.count = params[g].size();
    std::vector<double> numeric(params[g].size());
    double scale = 0.0;
    for (std::size_t i = 0; i < params[g].size(); ++i) {
      const double saved = params[g][i];
      params[g][i] = saved + eps;
      const double up = evaluate_loss(loss, params);
      params[g][i] = saved - eps;
      const double down = evaluate_loss(loss, params);
      params[g][i] = saved;
      numeric[i] = (up - down) / (2.0 * eps);
      scale = std::max({scale, std::abs(numeric[i]), std::abs(analytic[g][i])});
    }
    for (std::size_t i = 0; i < params[g].size(); ++i) {
      const double diff = std::abs(numeric[i] - analytic[g][i]);
      err.max_absolute = std::max(err.max_absolute, diff);
      if (scale > 0.0) err.max_relative = std::max(err.max_relative, diff / scale);
    }
    report.push_back(err);
  }
  return report;
}

}  // namespace mecos
