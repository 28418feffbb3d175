#pragma once

// Independent brute-force recomputations used as test oracles. They use long
// double accumulators and straightforward loops and share no code with the
// library beyond the encoder forward pass.

#include <cmath>
#include <map>
#include <numbers>
#include <random>
#include <vector>

#include "closer/data.hpp"
#include "closer/encoder.hpp"
#include "closer/tensor.hpp"

namespace closer::testing {

// Values from tests/oracles/derived.py.
inline constexpr double kLogOnePlusInvE = 0.31326168751822283405;
inline constexpr double kMarginNeg02 = 0.26328246733803118919;
inline constexpr double kGaussianMiRho09 = 0.83036560341082545401;
inline constexpr double kLn4 = 1.3862943611198906188;
inline constexpr double kLog3 = 1.0986122886681096914;

inline long double oracle_angle(const std::vector<long double>& a, const std::vector<long double>& b) {
  long double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  long double c = ab / std::sqrt(aa * bb);
  if (c > 1) c = 1;
  if (c < -1) c = -1;
  return std::acos(c);
}

inline std::vector<long double> row_ld(const Tensor& t, std::size_t r) {
  std::vector<long double> out;
  for (std::size_t c = 0; c < t.cols(); ++c) out.push_back(t.at(r, c));
  return out;
}

/// Per-class mean of embeddings, accumulated sample by sample.
inline std::map<int, std::vector<long double>> oracle_prototypes(const EncoderParams& params,
                                                                 const Dataset& data) {
  std::map<int, std::vector<long double>> sums;
  std::map<int, long double> counts;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Tensor z = embed(params, Tensor::vector({data.input(i).begin(), data.input(i).end()}));
    auto& s = sums[data.label(i)];
    s.resize(z.size(), 0.0L);
    for (std::size_t k = 0; k < z.size(); ++k) s[k] += z[k];
    counts[data.label(i)] += 1;
  }
  for (auto& [c, s] : sums)
    for (auto& v : s) v /= counts[c];
  return sums;
}

/// Nearest-prototype accuracy in percent, checking every prototype per sample.
inline long double oracle_accuracy(const EncoderParams& params,
                                   const std::map<int, std::vector<long double>>& protos,
                                   const Dataset& test) {
  std::size_t correct = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const Tensor z = embed(params, Tensor::vector({test.input(i).begin(), test.input(i).end()}));
    std::vector<long double> zl(z.values().begin(), z.values().end());
    int best = 0;
    long double best_cos = -2;
    for (const auto& [c, p] : protos) {
      long double dotv = 0, pp = 0, zz = 0;
      for (std::size_t k = 0; k < p.size(); ++k) {
        dotv += zl[k] * p[k];
        pp += p[k] * p[k];
        zz += zl[k] * zl[k];
      }
      const long double s = dotv / std::sqrt(pp * zz);
      if (s > best_cos) {  // strict: keeps the lowest id on ties (map order)
        best_cos = s;
        best = c;
      }
    }
    if (best == test.label(i)) ++correct;
  }
  return 100.0L * static_cast<long double>(correct) / static_cast<long double>(test.size());
}

inline long double oracle_transferability(const Tensor& z, const Tensor& protos) {
  long double num = 0;
  for (std::size_t i = 0; i < z.rows(); ++i) {
    long double best = 10;
    for (std::size_t p = 0; p < protos.rows(); ++p)
      best = std::min(best, oracle_angle(row_ld(z, i), row_ld(protos, p)));
    num += best;
  }
  num /= static_cast<long double>(z.rows());
  long double den = 0;
  std::size_t pairs = 0;
  for (std::size_t p = 0; p < protos.rows(); ++p)
    for (std::size_t q = p + 1; q < protos.rows(); ++q, ++pairs)
      den += oracle_angle(row_ld(protos, p), row_ld(protos, q));
  den /= static_cast<long double>(pairs);
  return num / den;
}

inline Tensor random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng,
                            double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  std::vector<double> v(rows * cols);
  for (auto& x : v) x = n(rng);
  return Tensor::matrix(rows, cols, std::move(v));
}

inline Tensor random_unit_rows(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  Tensor t = random_matrix(rows, cols, rng);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0;
    for (double v : t.row(r)) s += v * v;
    s = std::sqrt(s);
    for (double& v : t.row(r)) v /= s;
  }
  return t;
}

}  // namespace closer::testing
