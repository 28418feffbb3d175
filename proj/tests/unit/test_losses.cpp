#include <algorithm>
#include <cmath>
#include <random>

#include "closer/error.hpp"
#include "closer/losses.hpp"
#include "doctest.h"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

using namespace closer;
using namespace closer::testing;

namespace {

ErrorCode code_of(const auto& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::kIo;
}

// Random orthogonal matrix via Gram-Schmidt.
Tensor random_rotation(std::size_t d, std::mt19937_64& rng) {
  Tensor q = random_matrix(d, d, rng);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      double dotv = 0;
      for (std::size_t k = 0; k < d; ++k) dotv += q.at(i, k) * q.at(j, k);
      for (std::size_t k = 0; k < d; ++k) q.at(i, k) -= dotv * q.at(j, k);
    }
    double n = 0;
    for (std::size_t k = 0; k < d; ++k) n += q.at(i, k) * q.at(i, k);
    for (std::size_t k = 0; k < d; ++k) q.at(i, k) /= std::sqrt(n);
  }
  return q;
}

}  // namespace

TEST_SUITE("losses") {
  TEST_CASE("sce: symmetric logits give log C") {
    // z equidistant from three classifier vectors
    const Tensor z = Tensor::matrix({{0, 0, 1}});
    const Tensor w = Tensor::matrix({{1, 0, 0}, {0, 1, 0}, {-1, 0, 0}});
    const std::vector<int> y{1};
    CHECK(std::abs(sce_loss(z, y, w, 0.25) - kLog3) <= 1e-12);
  }

  TEST_CASE("sce: two-class orthogonal case and margin") {
    const Tensor z = Tensor::matrix({{1, 0}});
    const Tensor w = Tensor::matrix({{1, 0}, {0, 1}});
    const std::vector<int> y{0};
    CHECK(std::abs(sce_loss(z, y, w, 1.0) - kLogOnePlusInvE) <= 1e-9);
    CHECK(std::abs(sce_loss(z, y, w, 1.0, -0.2) - kMarginNeg02) <= 1e-9);
  }

  TEST_CASE("sce: errors") {
    const Tensor z = Tensor::matrix({{1, 0}});
    const Tensor w = Tensor::matrix({{1, 0}, {0, 1}});
    const std::vector<int> bad{2}, ok{0};
    CHECK(code_of([&] { sce_loss(z, bad, w, 1.0); }) == ErrorCode::kInvalidArgument);
    CHECK(code_of([&] { sce_loss(z, ok, w, 0.0); }) == ErrorCode::kInvalidArgument);
    CHECK(code_of([&] { sce_loss(z, ok, Tensor::matrix({{1, 0}}), 1.0); }) ==
          ErrorCode::kInvalidArgument);
  }

  TEST_CASE("sce: low temperature stays finite") {
    std::mt19937_64 rng(8);
    const Tensor z = random_unit_rows(16, 4, rng);
    const Tensor w = random_unit_rows(5, 4, rng);
    std::vector<int> y(16);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<int>(i % 5);
    const double v = sce_loss(z, y, w, 1.0 / 1024.0);
    CHECK(std::isfinite(v));
    CHECK(v >= 0.0);
  }

  TEST_CASE("property: sce non-negative and monotone in margin") {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 50; ++trial) {
      const Tensor z = random_unit_rows(6, 3, rng);
      const Tensor w = random_matrix(4, 3, rng);
      std::vector<int> y(6);
      for (auto& v : y) v = static_cast<int>(rng() % 4);
      double prev = -1.0;
      for (double m : {-0.5, -0.1, 0.0, 0.2, 0.4}) {
        const double v = sce_loss(z, y, w, 0.1, m);
        CHECK(v >= 0.0);
        CHECK(v >= prev);
        prev = v;
      }
    }
  }

  TEST_CASE("ssc: degenerate and three-sample cases") {
    const std::vector<IndexPair> p01{{0, 1}};
    std::mt19937_64 rng(1);
    CHECK(std::abs(ssc_loss(random_unit_rows(2, 3, rng), p01, 0.5)) <= 1e-15);
    const Tensor z = Tensor::matrix({{1, 0}, {1, 0}, {0, 1}});
    CHECK(std::abs(ssc_loss(z, p01, 1.0) - kLogOnePlusInvE) <= 1e-12);
  }

  TEST_CASE("ssc: pair order does not matter and errors") {
    std::mt19937_64 rng(2);
    const Tensor z = random_unit_rows(6, 4, rng);
    std::vector<IndexPair> pairs = view_pairs(3);
    const double v = ssc_loss(z, pairs, 0.2);
    std::reverse(pairs.begin(), pairs.end());
    CHECK(std::abs(ssc_loss(z, pairs, 0.2) - v) <= 1e-14);
    const std::vector<IndexPair> none, self{{1, 1}}, out{{0, 6}};
    CHECK(code_of([&] { ssc_loss(z, none, 0.2); }) == ErrorCode::kNoPairs);
    CHECK(code_of([&] { ssc_loss(z, self, 0.2); }) == ErrorCode::kInvalidArgument);
    CHECK(code_of([&] { ssc_loss(z, out, 0.2); }) == ErrorCode::kInvalidArgument);
  }

  TEST_CASE("view pairs layout") {
    const auto p = view_pairs(2);
    CHECK(p == std::vector<IndexPair>{{0, 2}, {2, 0}, {1, 3}, {3, 1}});
  }

  TEST_CASE("inter / intra extremes") {
    const Tensor ortho = Tensor::matrix({{1, 0}, {0, 1}});
    const Tensor same = Tensor::matrix({{0.6, 0.8}, {0.6, 0.8}});
    const std::vector<int> diff{0, 1}, one{3, 3};
    CHECK(std::abs(inter_loss(ortho, diff)) <= 1e-15);
    CHECK(std::abs(inter_loss(same, diff) + 1.0) <= 1e-15);
    CHECK(std::abs(intra_loss(ortho, one)) <= 1e-15);
    CHECK(std::abs(intra_loss(same, one) + 1.0) <= 1e-15);
    CHECK(code_of([&] { inter_loss(same, one); }) == ErrorCode::kNoPairs);
    CHECK(code_of([&] { intra_loss(same, diff); }) == ErrorCode::kNoPairs);
  }

  TEST_CASE("property: relabeling and rotation invariance") {
    std::mt19937_64 rng(40);
    for (int trial = 0; trial < 30; ++trial) {
      const Tensor z = random_unit_rows(8, 5, rng);
      std::vector<int> y{0, 1, 2, 0, 1, 2, 0, 1};
      std::vector<int> perm{2, 0, 1};
      std::vector<int> relabeled;
      for (int v : y) relabeled.push_back(perm[v]);
      CHECK(std::abs(inter_loss(z, y) - inter_loss(z, relabeled)) <= 1e-14);
      CHECK(std::abs(intra_loss(z, y) - intra_loss(z, relabeled)) <= 1e-14);

      const Tensor rz = matmul(z, random_rotation(5, rng));
      CHECK(std::abs(inter_loss(z, y) - inter_loss(rz, y)) <= 1e-12);
      CHECK(std::abs(intra_loss(z, y) - intra_loss(rz, y)) <= 1e-12);
      const auto pairs = view_pairs(4);
      CHECK(std::abs(ssc_loss(z, pairs, 0.1) - ssc_loss(rz, pairs, 0.1)) <= 1e-10);
    }
  }

  TEST_CASE("total loss composition") {
    std::mt19937_64 rng(50);
    const Tensor z = random_unit_rows(6, 4, rng);
    const Tensor views = random_unit_rows(6, 4, rng);
    const Tensor w = random_matrix(3, 4, rng);
    const std::vector<int> y{0, 1, 2, 0, 1, 2};

    auto eval = [&](const LossConfig& cfg) {
      Tape t;
      LossBatch batch{t.constant(z), y, t.constant(w), t.constant(views)};
      return total_loss(batch, cfg).breakdown;
    };
    const auto plain = eval(LossConfig{.tau = 0.1});
    CHECK(plain.total == sce_loss(z, y, w, 0.1));
    CHECK_FALSE(plain.ssc_raw.has_value());
    CHECK_FALSE(plain.inter_raw.has_value());

    const auto full = eval(LossConfig{.tau = 1.0 / 32.0, .lambda_ssc = 0.1, .lambda_inter = 1.0});
    REQUIRE(full.ssc_raw.has_value());
    REQUIRE(full.inter_raw.has_value());
    CHECK(full.total == doctest::Approx(full.ce + *full.ssc_weighted + *full.inter_weighted).epsilon(1e-14));
    CHECK(*full.ssc_weighted == doctest::Approx(0.1 * *full.ssc_raw).epsilon(1e-14));

    const auto doubled = eval(LossConfig{.tau = 1.0 / 32.0, .lambda_ssc = 0.1, .lambda_inter = 2.0});
    CHECK(*doubled.inter_weighted == doctest::Approx(2.0 * *full.inter_weighted).epsilon(1e-14));

    const auto intra = eval(LossConfig{.tau = 0.1, .lambda_intra = 0.5});
    REQUIRE(intra.intra_raw.has_value());
    CHECK(*intra.intra_weighted == doctest::Approx(0.5 * *intra.intra_raw).epsilon(1e-14));
  }

  TEST_CASE("total loss: zero-weight terms skip their preconditions") {
    const Tensor z = Tensor::matrix({{1, 0}, {0, 1}});
    const Tensor w = Tensor::matrix({{1, 0}, {0, 1}});
    const std::vector<int> same{0, 0};
    Tape t;
    LossBatch batch{t.constant(z), same, t.constant(w), std::nullopt};
    CHECK_NOTHROW(total_loss(batch, LossConfig{}));
    CHECK(code_of([&] { total_loss(batch, LossConfig{.lambda_inter = 1.0}); }) == ErrorCode::kNoPairs);
    CHECK(code_of([&] { total_loss(batch, LossConfig{.lambda_ssc = 0.1}); }) ==
          ErrorCode::kInvalidArgument);
    CHECK_THROWS_AS(LossConfig{.lambda_ssc = -1.0}.validate(), Error);
  }

  TEST_CASE("gradcheck of every loss on random batches") {
    std::mt19937_64 rng(60);
    std::uniform_int_distribution<std::size_t> bsz(3, 8), dim(2, 8), ncls(2, 5);
    for (int trial = 0; trial < 25; ++trial) {
      const auto b = bsz(rng), d = dim(rng), c = ncls(rng);
      const Tensor z = random_matrix(b, d, rng);
      const Tensor v = random_matrix(b, d, rng);
      const Tensor w = random_matrix(c, d, rng);
      std::vector<int> y(b);
      for (std::size_t i = 0; i < b; ++i) y[i] = static_cast<int>(i % c);
      y[0] = y[1 % b] = 0;  // guarantees a same-class pair when b >= 2
      if (c > 1) y[2] = 1;
      const double tau = (trial % 2) ? 1.0 / 16.0 : 0.5;
      auto check = [](const GradCheck& g) {
        INFO(g.detail);
        CHECK(g.ok);
      };
      check(gradcheck([&](Tape&, const std::vector<Var>& in) { return sce_loss(in[0], y, in[1], tau, 0.1); },
                      {z, w}));
      const auto pairs = view_pairs(b);
      check(gradcheck([&](Tape&, const std::vector<Var>& in) {
                        return ssc_loss(concat_rows(in[0], in[1]), pairs, tau);
                      },
                      {z, v}));
      check(gradcheck([&](Tape&, const std::vector<Var>& in) { return inter_loss(in[0], y); }, {z}));
      check(gradcheck([&](Tape&, const std::vector<Var>& in) { return intra_loss(in[0], y); }, {z}));
      const LossConfig cfg{.tau = tau, .lambda_ssc = 0.1, .lambda_inter = 1.0, .lambda_intra = 0.3};
      check(gradcheck(
          [&](Tape&, const std::vector<Var>& in) {
            return total_loss(LossBatch{in[0], y, in[2], in[1]}, cfg).value;
          },
          {z, v, w}));
    }
  }
}
