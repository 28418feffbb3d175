#include <cmath>
#include <filesystem>
#include <random>

#include "closer/encoder.hpp"
#include "closer/error.hpp"
#include "closer/geometry.hpp"
#include "doctest.h"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

using namespace closer;
using closer::testing::random_matrix;

TEST_SUITE("encoder") {
  TEST_CASE("init is deterministic with zero biases") {
    const auto a = init_params({4, 8, 2}, 7);
    const auto b = init_params({4, 8, 2}, 7);
    CHECK(a == b);
    CHECK_FALSE(a == init_params({4, 8, 2}, 8));
    for (const auto& layer : a.net.layers())
      for (double v : layer.bias.data()) CHECK(v == 0.0);
    CHECK(a.layer_dims() == std::vector<std::size_t>{4, 8, 2});
  }

  TEST_CASE("init weight scale follows fan-in") {
    const auto p = init_params({400, 300, 16}, 1);
    const auto& w = p.net.layers().front().weight;
    double s = 0.0;
    for (double v : w.data()) s += v * v;
    const double var = s / static_cast<double>(w.size());
    CHECK(var == doctest::Approx(2.0 / 400.0).epsilon(0.03));
  }

  TEST_CASE("invalid dims are rejected") {
    CHECK_THROWS_AS(init_params({4}, 0), Error);
    CHECK_THROWS_AS(init_params({4, 0, 2}, 0), Error);
    CHECK_THROWS_AS(init_params({4, 8, 1}, 0), Error);
  }

  TEST_CASE("embed: unit rows, shapes, purity") {
    const auto p = init_params({6, 16, 16, 3}, 2);
    std::mt19937_64 rng(1);
    const Tensor x = random_matrix(10, 6, rng);
    const Tensor z = embed(p, x);
    CHECK(z.shape() == Shape{10, 3});
    for (std::size_t r = 0; r < z.rows(); ++r) CHECK(std::abs(norm(z.row(r)) - 1.0) <= 1e-12);
    CHECK(embed(p, x) == z);
    const Tensor one = embed(p, Tensor::vector({x.row(0).begin(), x.row(0).end()}));
    CHECK(one.size() == 3);
    CHECK_THROWS_AS(embed(p, random_matrix(2, 5, rng)), Error);
  }

  TEST_CASE("embed: tape and value paths agree") {
    const auto p = init_params({5, 8, 4}, 3);
    std::mt19937_64 rng(2);
    const Tensor x = random_matrix(6, 5, rng);
    Tape t;
    const auto bound = p.net.bind(t, true);
    CHECK(embed(p, bound, t.constant(x)).value() == embed(p, x));
  }

  TEST_CASE("embed: zero pre-normalization output is rejected") {
    Mlp net = Mlp::from_layers({DenseLayer{Tensor({3, 2}), Tensor({2})}});
    EncoderParams p{net, 0};
    try {
      embed(p, Tensor::vector({1, 2, 3}));
      FAIL("expected degenerate input");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kDegenerateInput);
    }
  }

  TEST_CASE("gradcheck through the encoder") {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 10; ++trial) {
      const auto p = init_params({4, 6, 3}, 100 + trial);
      const Tensor x = random_matrix(5, 4, rng);
      const Tensor w = random_matrix(5, 3, rng);
      std::vector<Tensor> in;
      for (const auto* t : p.net.parameters()) in.push_back(*t);
      const auto g = closer::testing::gradcheck(
          [&](Tape& tape, const std::vector<Var>& v) {
            Mlp::Bound b{v};
            return sum(mul(embed(p, b, tape.constant(x)), tape.constant(w)));
          },
          in);
      INFO(g.detail);
      CHECK(g.ok);
    }
  }

  TEST_CASE("fingerprint tracks every bit") {
    auto p = init_params({3, 4, 2}, 5);
    const auto f = fingerprint(p);
    CHECK(fingerprint(p) == f);
    p.net.layers()[0].weight[0] = std::nextafter(p.net.layers()[0].weight[0], 1.0);
    CHECK(fingerprint(p) != f);
  }

  TEST_CASE("checkpoint round trip is exact") {
    const auto p = init_params({7, 5, 3}, 99);
    CHECK(checkpoint_from_json(checkpoint_to_json(p)) == p);
    const auto path = std::filesystem::temp_directory_path() / "closer_test_ckpt.json";
    save_checkpoint(p, path);
    CHECK(load_checkpoint(path) == p);
    std::filesystem::remove(path);
    CHECK_THROWS_AS(checkpoint_from_json("{\"format\":\"other\"}"), Error);
    CHECK_THROWS_AS(checkpoint_from_json("not json"), Error);
    CHECK_THROWS_AS(load_checkpoint(path), Error);
  }
}
