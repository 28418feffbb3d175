#pragma once

// Information-bottleneck analysis of hyperspherical features: a closed-form
// lower bound on I(Y;Z)/I(X;Z) from class covariance log-determinants, and a
// neural (Donsker–Varadhan) mutual-information estimator.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "closer/data.hpp"
#include "closer/encoder.hpp"
#include "closer/tensor.hpp"

namespace closer {

inline constexpr double kCovarianceShrinkage = 1e-6;

struct CovarianceSummary {
  std::vector<int> class_ids;
  std::vector<double> within_logdet;  // log|Σ_W_i|, aligned with class_ids
  double total_logdet = 0.0;          // log|Σ_T|
  std::size_t dim = 0;
  double shrinkage = kCovarianceShrinkage;
  bool undersampled = false;  // some class (or the total) has n <= d samples

  std::size_t classes() const { return class_ids.size(); }
};

/// Sample covariances (divisor n−1) per class and overall, each with +εI,
/// reduced to log-determinants through a Cholesky factorization. Every class
/// needs at least two samples, and there must be at least two classes.
CovarianceSummary covariances(const Tensor& features, std::span<const int> labels,
                              double shrinkage = kCovarianceShrinkage);

/// log-determinant of a symmetric positive definite [d, d] matrix.
double spd_logdet(const Tensor& matrix);

struct IbBoundTerms {
  double numerator = 0.0;    // d·log(2πe) + mean_i log|Σ_W_i|
  double denominator = 0.0;  // d·log(2πe) + log|Σ_T|
};

IbBoundTerms ib_bound_terms(const CovarianceSummary& summary);

/// 1 − numerator/denominator. Throws kNotInRegime unless both terms are
/// negative (the regime in which the bound holds).
double ib_lower_bound(const CovarianceSummary& summary);

struct MineConfig {
  std::size_t hidden = 64;
  std::size_t layers = 4;  // linear layers of the statistics network
  double lr = 1e-4;
  std::size_t iterations = 2000;
  std::size_t batch_size = 256;
  std::uint64_t seed = 0;
  double readout_fraction = 0.1;  // tail of the run averaged for the estimate

  void validate() const;
};

struct MineResult {
  double estimate = 0.0;  // max(0, raw)
  double raw = 0.0;       // mean DV bound over the readout window
  std::vector<double> trace;
};

/// Trains a ReLU statistics network T on concatenated (a, b) rows to maximize
/// E_joint[T] − log E_marginal[e^T], where marginal pairs come from shuffling
/// b within each minibatch. a: [n, da], b: [n, db], n >= 2·batch_size.
MineResult mine_estimate(const Tensor& a, const Tensor& b, const MineConfig& config);

struct IbPoint {
  std::string group;  // "base", "new" or "whole"
  double i_xz = 0.0;
  double i_yz = 0.0;
  std::optional<double> closed_form_bound;  // absent outside the valid regime
};

struct IbPlaneConfig {
  MineConfig xz{.hidden = 128};
  MineConfig yz{.hidden = 64};
};

/// One point per class group: X = raw inputs, Z = embeddings, Y = one-hot
/// labels over the group's classes.
std::vector<IbPoint> ib_plane(const EncoderParams& params, const Dataset& data,
                              std::span<const int> base_classes,
                              std::span<const int> new_classes, const IbPlaneConfig& config);

/// One-hot rows for labels over the given class list.
Tensor one_hot(std::span<const int> labels, std::span<const int> classes);

}  // namespace closer
