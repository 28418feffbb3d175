#include "closer/optim.hpp"

#include <cmath>

#include "closer/error.hpp"

namespace closer {

void NesterovSgd::step(std::span<Tensor* const> params, std::span<const Tensor> grads, double lr) {
  require(params.size() == grads.size(), ErrorCode::kInvalidArgument,
          "optimizer: parameter and gradient counts differ");
  if (velocity_.empty()) {
    for (const Tensor* p : params) velocity_.emplace_back(p->shape());
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto w = params[k]->data();
    auto g = grads[k].data();
    auto v = velocity_[k].data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i] + weight_decay_ * w[i];
      v[i] = momentum_ * v[i] + gi;
      w[i] -= lr * (gi + momentum_ * v[i]);
    }
  }
}

double step_decay_lr(double initial_lr, std::size_t epoch, std::size_t total_epochs) {
  const double e = static_cast<double>(epoch);
  const double total = static_cast<double>(total_epochs);
  if (e >= 0.9 * total) return initial_lr * 0.01;
  if (e >= 0.8 * total) return initial_lr * 0.1;
  return initial_lr;
}

void Adam::step(std::span<Tensor* const> params, std::span<const Tensor> grads) {
  require(params.size() == grads.size(), ErrorCode::kInvalidArgument,
          "optimizer: parameter and gradient counts differ");
  if (m_.empty()) {
    for (const Tensor* p : params) {
      m_.emplace_back(p->shape());
      v_.emplace_back(p->shape());
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto w = params[k]->data();
    auto g = grads[k].data();
    auto m = m_[k].data();
    auto v = v_[k].data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      w[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

}  // namespace closer
