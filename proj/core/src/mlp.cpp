#include "closer/mlp.hpp"

#include <cmath>
#include <string>

#include "closer/error.hpp"
#include "closer/rng.hpp"

namespace closer {

Mlp Mlp::init(const std::vector<std::size_t>& dims, std::uint64_t seed) {
  require(dims.size() >= 2, ErrorCode::kInvalidArgument,
          "network needs at least an input and an output dimension");
  for (auto d : dims) require(d > 0, ErrorCode::kInvalidArgument, "layer dims must be positive");
  Rng rng(seed);
  std::vector<DenseLayer> layers;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const auto fan_in = dims[l], fan_out = dims[l + 1];
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    std::vector<double> w(fan_in * fan_out);
    for (auto& v : w) v = normal(rng);
    layers.push_back({Tensor::matrix(fan_in, fan_out, std::move(w)), Tensor({fan_out})});
  }
  return from_layers(std::move(layers));
}

Mlp Mlp::from_layers(std::vector<DenseLayer> layers) {
  require(!layers.empty(), ErrorCode::kInvalidArgument, "network needs at least one layer");
  Mlp net;
  net.dims_.push_back(layers.front().weight.rows());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    require(layer.weight.rank() == 2 && layer.bias.rank() == 1, ErrorCode::kShapeMismatch,
            "layer " + std::to_string(l) + " has malformed tensors");
    require(layer.weight.rows() == net.dims_.back(), ErrorCode::kShapeMismatch,
            "layer " + std::to_string(l) + " input does not match previous output");
    require(layer.bias.size() == layer.weight.cols(), ErrorCode::kShapeMismatch,
            "layer " + std::to_string(l) + " bias does not match weight");
    net.dims_.push_back(layer.weight.cols());
  }
  net.layers_ = std::move(layers);
  return net;
}

Mlp::Bound Mlp::bind(Tape& tape, bool trainable) const {
  Bound b;
  for (const auto& layer : layers_) {
    b.params.push_back(trainable ? tape.leaf(layer.weight) : tape.constant(layer.weight));
    b.params.push_back(trainable ? tape.leaf(layer.bias) : tape.constant(layer.bias));
  }
  return b;
}

Var Mlp::forward(const Bound& bound, Var x) const {
  Var h = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    h = add_row_vector(matmul(h, bound.params[2 * l]), bound.params[2 * l + 1]);
    if (l + 1 < layers_.size()) h = relu(h);
  }
  return h;
}

Tensor Mlp::forward(const Tensor& x) const {
  require(x.cols() == input_dim(), ErrorCode::kShapeMismatch,
          "network input has " + std::to_string(x.cols()) + " columns, expected " +
              std::to_string(input_dim()));
  Tensor h = x.rank() == 1 ? Tensor::matrix(1, x.size(), x.values()) : x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    h = matmul(h, layers_[l].weight);
    const auto& b = layers_[l].bias;
    const bool hidden = l + 1 < layers_.size();
    for (std::size_t i = 0; i < h.rows(); ++i) {
      auto r = h.row(i);
      for (std::size_t j = 0; j < r.size(); ++j) {
        r[j] += b[j];
        if (hidden && r[j] < 0.0) r[j] = 0.0;
      }
    }
  }
  return h;
}

std::vector<Tensor*> Mlp::parameters() {
  std::vector<Tensor*> out;
  for (auto& layer : layers_) {
    out.push_back(&layer.weight);
    out.push_back(&layer.bias);
  }
  return out;
}

std::vector<const Tensor*> Mlp::parameters() const {
  std::vector<const Tensor*> out;
  for (const auto& layer : layers_) {
    out.push_back(&layer.weight);
    out.push_back(&layer.bias);
  }
  return out;
}

}  // namespace closer
