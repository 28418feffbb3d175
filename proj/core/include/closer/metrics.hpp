#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "closer/protocol.hpp"
#include "closer/tensor.hpp"

namespace closer {

/// Kahan–Babuška compensated sum.
class CompensatedSum {
 public:
  void add(double v);
  double value() const { return sum_ + compensation_; }

 private:
  double sum_ = 0.0;
  double compensation_ = 0.0;
};

double compensated_mean(std::span<const double> values);

/// A_W(first session) − A_W(last session). Signed; needs two sessions.
double performance_drop(std::span<const double> whole_accuracies);
double performance_drop(std::span<const SessionEval> sessions);

/// Mean over samples of the angle to the nearest base prototype, divided by
/// the mean angle over all unordered base-prototype pairs.
/// embeddings: [n, d] new-class features; base_prototypes: [C, d], C >= 2.
double transferability(const Tensor& embeddings, const Tensor& base_prototypes);
double transferability(const EncoderParams& params, const PrototypeBank& bank,
                       std::span<const int> base_classes, const Dataset& new_class_test);

struct SpreadStats {
  /// Mean over classes (with >= 2 samples) of the mean sample-to-prototype
  /// angle.
  std::optional<double> intra_spread;
  /// Mean angle over unordered prototype pairs.
  std::optional<double> inter_distance;
};

/// features [n, d]; prototypes by class id. Classes without a prototype are
/// ignored for the intra component.
SpreadStats spread_stats(const Tensor& features, std::span<const int> labels,
                         const std::vector<Prototype>& prototypes);

struct AngularHistogram {
  std::size_t bins = 0;
  std::map<int, std::vector<std::size_t>> counts;  // class id → per-bin counts

  double bin_lo(std::size_t b) const;
  double bin_hi(std::size_t b) const;
  std::size_t total() const;
};

/// Bins atan2 angles of 2-d features into [0, 2π) with half-open bins; 2π
/// folds to 0.
AngularHistogram angular_histogram(const Tensor& features, std::span<const int> labels,
                                   std::size_t bins);

}  // namespace closer
