#pragma once

// Central finite-difference check of tape gradients.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "closer/tensor.hpp"

namespace closer::testing {

struct GradCheck {
  bool ok = true;
  double worst = 0.0;  // largest |analytic − numeric| / (atol + rtol·scale)
  std::string detail;
};

using LossBuilder = std::function<Var(Tape&, const std::vector<Var>&)>;

inline double evaluate(const LossBuilder& build, const std::vector<Tensor>& inputs) {
  Tape tape;
  std::vector<Var> leaves;
  for (const auto& t : inputs) leaves.push_back(tape.leaf(t));
  return build(tape, leaves).value().item();
}

inline GradCheck gradcheck(const LossBuilder& build, std::vector<Tensor> inputs,
                           double step = 1e-6, double rtol = 1e-5, double atol = 1e-8) {
  Tape tape;
  std::vector<Var> leaves;
  for (const auto& t : inputs) leaves.push_back(tape.leaf(t));
  tape.backward(build(tape, leaves));

  GradCheck out;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Tensor analytic = tape.grad(leaves[k]);
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double x = inputs[k][i];
      inputs[k][i] = x + step;
      const double up = evaluate(build, inputs);
      inputs[k][i] = x - step;
      const double down = evaluate(build, inputs);
      inputs[k][i] = x;
      const double numeric = (up - down) / (2.0 * step);
      const double scale = std::max(std::abs(numeric), std::abs(analytic[i]));
      const double ratio = std::abs(numeric - analytic[i]) / (atol + rtol * scale);
      if (ratio > out.worst) out.worst = ratio;
      if (ratio > 1.0 && out.ok) {
        out.ok = false;
        out.detail = "input " + std::to_string(k) + " entry " + std::to_string(i) +
                     ": analytic " + std::to_string(analytic[i]) + " numeric " +
                     std::to_string(numeric);
      }
    }
  }
  return out;
}

}  // namespace closer::testing
