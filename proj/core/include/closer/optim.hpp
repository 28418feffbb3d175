#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "closer/tensor.hpp"

namespace closer {

/// SGD with Nesterov momentum and L2 weight decay folded into the gradient
/// (PyTorch convention: v ← μv + g; w ← w − lr(g + μv)).
class NesterovSgd {
 public:
  NesterovSgd(double momentum, double weight_decay)
      : momentum_(momentum), weight_decay_(weight_decay) {}

  void step(std::span<Tensor* const> params, std::span<const Tensor> grads, double lr);

 private:
  double momentum_;
  double weight_decay_;
  std::vector<Tensor> velocity_;
};

/// Step schedule: lr, ×0.1 from 80% of the epochs, ×0.01 from 90%.
double step_decay_lr(double initial_lr, std::size_t epoch, std::size_t total_epochs);

class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(std::span<Tensor* const> params, std::span<const Tensor> grads);

 private:
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<Tensor> m_, v_;
};

}  // namespace closer
