#pragma once

// Feature extractor: an MLP whose output rows are projected onto the unit
// hypersphere. Hidden layers use ReLU, the last layer is linear.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "closer/mlp.hpp"
#include "closer/tensor.hpp"

namespace closer {

struct EncoderParams {
  Mlp net;
  std::uint64_t seed = 0;

  const std::vector<std::size_t>& layer_dims() const { return net.dims(); }
  std::size_t input_dim() const { return net.input_dim(); }
  std::size_t embedding_dim() const { return net.output_dim(); }

  friend bool operator==(const EncoderParams&, const EncoderParams&) = default;
};

/// Rejects fewer than two dims, non-positive dims, and embedding dim < 2.
EncoderParams init_params(const std::vector<std::size_t>& layer_dims, std::uint64_t seed);

/// Unit-norm embeddings, one row per input row. A rank-1 input is one sample.
Tensor embed(const EncoderParams& params, const Tensor& x);

/// Differentiable variant; `bound` comes from params.net.bind().
Var embed(const EncoderParams& params, const Mlp::Bound& bound, Var x);

/// FNV-1a over every parameter bit pattern. Used to prove the encoder did not
/// change between sessions.
std::uint64_t fingerprint(const EncoderParams& params);

// Checkpoint file (JSON):
//   {"format": "closer-encoder", "version": 1, "seed": <u64>,
//    "layer_dims": [in, h1, ..., d],
//    "layers": [{"weight": [fan_in*fan_out row-major], "bias": [fan_out]}, ...]}
// Doubles are written with round-trip precision.
void save_checkpoint(const EncoderParams& params, const std::filesystem::path& path);
EncoderParams load_checkpoint(const std::filesystem::path& path);

std::string checkpoint_to_json(const EncoderParams& params);
EncoderParams checkpoint_from_json(const std::string& text);

}  // namespace closer
