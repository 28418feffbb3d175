#include "closer/encoder.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <sstream>

#include "closer/error.hpp"
#include "closer/geometry.hpp"
#include "json.hpp"

namespace closer {

using nlohmann::json;

EncoderParams init_params(const std::vector<std::size_t>& layer_dims, std::uint64_t seed) {
  require(layer_dims.size() >= 2, ErrorCode::kInvalidArgument,
          "encoder needs at least two layer dims (input and embedding)");
  require(layer_dims.back() >= 2, ErrorCode::kInvalidArgument,
          "embedding dimension must be at least 2");
  return EncoderParams{Mlp::init(layer_dims, seed), seed};
}

Tensor embed(const EncoderParams& params, const Tensor& x) {
  Tensor h = params.net.forward(x);
  for (std::size_t i = 0; i < h.rows(); ++i) {
    auto r = h.row(i);
    double ss = 0.0;
    for (double v : r) ss += v * v;
    const double n = std::sqrt(ss);
    require(n > kNormEpsilon, ErrorCode::kDegenerateInput,
            "embed: pre-normalization feature of row " + std::to_string(i) + " is zero");
    for (auto& v : r) v /= n;
  }
  return h;
}

Var embed(const EncoderParams& params, const Mlp::Bound& bound, Var x) {
  require(x.value().cols() == params.input_dim(), ErrorCode::kShapeMismatch,
          "embed: input has " + std::to_string(x.value().cols()) + " columns, encoder expects " +
              std::to_string(params.input_dim()));
  return normalize_rows(params.net.forward(bound, x));
}

std::uint64_t fingerprint(const EncoderParams& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](std::uint64_t v) {
    for (int b = 0; b < 8; ++b) {
      h ^= (v >> (8 * b)) & 0xFF;
      h *= 0x100000001b3ULL;
    }
  };
  for (auto d : params.layer_dims()) mix(d);
  for (const Tensor* t : params.net.parameters())
    for (double v : t->data()) mix(std::bit_cast<std::uint64_t>(v));
  return h;
}

std::string checkpoint_to_json(const EncoderParams& params) {
  json j;
  j["format"] = "closer-encoder";
  j["version"] = 1;
  j["seed"] = params.seed;
  j["layer_dims"] = params.layer_dims();
  j["layers"] = json::array();
  for (const auto& layer : params.net.layers())
    j["layers"].push_back({{"weight", layer.weight.values()}, {"bias", layer.bias.values()}});
  return j.dump();
}

EncoderParams checkpoint_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::kFormat, std::string("checkpoint: ") + e.what());
  }
  try {
    require(j.at("format") == "closer-encoder", ErrorCode::kFormat, "checkpoint: wrong format tag");
    require(j.at("version") == 1, ErrorCode::kFormat, "checkpoint: unsupported version");
    const auto dims = j.at("layer_dims").get<std::vector<std::size_t>>();
    const auto& layers = j.at("layers");
    require(dims.size() >= 2 && layers.size() + 1 == dims.size(), ErrorCode::kFormat,
            "checkpoint: layer count does not match layer_dims");
    std::vector<DenseLayer> out;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      auto w = layers[l].at("weight").get<std::vector<double>>();
      auto b = layers[l].at("bias").get<std::vector<double>>();
      require(w.size() == dims[l] * dims[l + 1] && b.size() == dims[l + 1], ErrorCode::kFormat,
              "checkpoint: layer " + std::to_string(l) + " tensor sizes do not match dims");
      out.push_back({Tensor::matrix(dims[l], dims[l + 1], std::move(w)),
                     Tensor::vector(std::move(b))});
    }
    require(dims.back() >= 2, ErrorCode::kFormat, "checkpoint: embedding dimension below 2");
    return EncoderParams{Mlp::from_layers(std::move(out)), j.at("seed").get<std::uint64_t>()};
  } catch (const json::exception& e) {
    fail(ErrorCode::kFormat, std::string("checkpoint: ") + e.what());
  }
}

void save_checkpoint(const EncoderParams& params, const std::filesystem::path& path) {
  std::ofstream os(path);
  require(static_cast<bool>(os), ErrorCode::kIo, "cannot write " + path.string());
  os << checkpoint_to_json(params) << '\n';
}

EncoderParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path);
  require(static_cast<bool>(is), ErrorCode::kIo, "cannot read " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return checkpoint_from_json(ss.str());
}

}  // namespace closer
