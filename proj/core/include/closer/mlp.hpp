#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "closer/tensor.hpp"

namespace closer {

struct DenseLayer {
  Tensor weight;  // [fan_in, fan_out]
  Tensor bias;    // [fan_out]
};

/// Fully connected ReLU network with a linear output layer.
class Mlp {
 public:
  Mlp() = default;

  /// He-normal weights (std √(2/fan_in)), zero biases. Needs at least two
  /// positive dims.
  static Mlp init(const std::vector<std::size_t>& dims, std::uint64_t seed);
  static Mlp from_layers(std::vector<DenseLayer> layers);

  const std::vector<std::size_t>& dims() const noexcept { return dims_; }
  std::size_t input_dim() const { return dims_.front(); }
  std::size_t output_dim() const { return dims_.back(); }
  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
  std::vector<DenseLayer>& layers() noexcept { return layers_; }

  /// Parameters registered on a tape, in layer order (w0, b0, w1, b1, ...).
  struct Bound {
    std::vector<Var> params;
  };
  Bound bind(Tape& tape, bool trainable) const;

  Var forward(const Bound& bound, Var x) const;
  Tensor forward(const Tensor& x) const;

  /// Flat view over every parameter tensor, matching Bound::params order.
  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;

  friend bool operator==(const Mlp& a, const Mlp& b) {
    if (a.dims_ != b.dims_ || a.layers_.size() != b.layers_.size()) return false;
    for (std::size_t i = 0; i < a.layers_.size(); ++i) {
      if (a.layers_[i].weight != b.layers_[i].weight || a.layers_[i].bias != b.layers_[i].bias)
        return false;
    }
    return true;
  }

 private:
  std::vector<std::size_t> dims_;
  std::vector<DenseLayer> layers_;
};

}  // namespace closer
