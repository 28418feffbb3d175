#include "closer/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "closer/error.hpp"
#include "closer/geometry.hpp"

namespace closer {

void CompensatedSum::add(double v) {
  const double t = sum_ + v;
  if (std::abs(sum_) >= std::abs(v))
    compensation_ += (sum_ - t) + v;
  else
    compensation_ += (v - t) + sum_;
  sum_ = t;
}

double compensated_mean(std::span<const double> values) {
  require(!values.empty(), ErrorCode::kInvalidArgument, "mean of an empty set");
  CompensatedSum s;
  for (double v : values) s.add(v);
  return s.value() / static_cast<double>(values.size());
}

double performance_drop(std::span<const double> whole_accuracies) {
  require(whole_accuracies.size() >= 2, ErrorCode::kInvalidArgument,
          "performance drop needs at least two evaluated sessions");
  return whole_accuracies.front() - whole_accuracies.back();
}

double performance_drop(std::span<const SessionEval> sessions) {
  std::vector<double> aw;
  for (const auto& s : sessions) aw.push_back(s.whole_accuracy);
  return performance_drop(aw);
}

double transferability(const Tensor& embeddings, const Tensor& base_prototypes) {
  require(base_prototypes.rank() == 2 && base_prototypes.rows() >= 2, ErrorCode::kInvalidArgument,
          "transferability: need at least two base prototypes");
  require(!embeddings.empty() && embeddings.cols() == base_prototypes.cols(),
          ErrorCode::kShapeMismatch, "transferability: embeddings do not match prototypes");
  const auto c = base_prototypes.rows();
  CompensatedSum pair_sum;
  std::size_t pairs = 0;
  for (std::size_t j = 0; j < c; ++j) {
    for (std::size_t k = j + 1; k < c; ++k) {
      pair_sum.add(angular_distance(base_prototypes.row(j), base_prototypes.row(k)));
      ++pairs;
    }
  }
  const double denominator = pair_sum.value() / static_cast<double>(pairs);
  require(denominator > 0.0, ErrorCode::kDegenerateInput,
          "transferability: all base prototypes coincide");

  CompensatedSum nearest_sum;
  for (std::size_t i = 0; i < embeddings.rows(); ++i) {
    double best = std::numbers::pi;
    for (std::size_t j = 0; j < c; ++j)
      best = std::min(best, angular_distance(embeddings.row(i), base_prototypes.row(j)));
    nearest_sum.add(best);
  }
  const double numerator = nearest_sum.value() / static_cast<double>(embeddings.rows());
  return numerator / denominator;
}

double transferability(const EncoderParams& params, const PrototypeBank& bank,
                       std::span<const int> base_classes, const Dataset& new_class_test) {
  require(!new_class_test.empty(), ErrorCode::kInvalidArgument,
          "transferability: no new-class test samples");
  return transferability(embed(params, new_class_test.all_inputs()), bank.matrix(base_classes));
}

SpreadStats spread_stats(const Tensor& features, std::span<const int> labels,
                         const std::vector<Prototype>& prototypes) {
  require(features.rank() == 2 && features.rows() == labels.size(), ErrorCode::kShapeMismatch,
          "spread_stats: feature rows do not match label count");
  SpreadStats out;
  std::map<int, const Prototype*> by_class;
  for (const auto& p : prototypes) by_class[p.class_id] = &p;

  std::map<int, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < labels.size(); ++i) members[labels[i]].push_back(i);
  CompensatedSum class_sum;
  std::size_t classes = 0;
  for (const auto& [c, idx] : members) {
    auto it = by_class.find(c);
    if (idx.size() < 2 || it == by_class.end()) continue;
    CompensatedSum s;
    for (auto i : idx) s.add(angular_distance(features.row(i), it->second->mean));
    class_sum.add(s.value() / static_cast<double>(idx.size()));
    ++classes;
  }
  if (classes > 0) out.intra_spread = class_sum.value() / static_cast<double>(classes);

  if (prototypes.size() >= 2) {
    CompensatedSum s;
    std::size_t pairs = 0;
    for (std::size_t j = 0; j < prototypes.size(); ++j)
      for (std::size_t k = j + 1; k < prototypes.size(); ++k, ++pairs)
        s.add(angular_distance(prototypes[j].mean, prototypes[k].mean));
    out.inter_distance = s.value() / static_cast<double>(pairs);
  }
  return out;
}

double AngularHistogram::bin_lo(std::size_t b) const {
  return 2.0 * std::numbers::pi * static_cast<double>(b) / static_cast<double>(bins);
}

double AngularHistogram::bin_hi(std::size_t b) const { return bin_lo(b + 1); }

std::size_t AngularHistogram::total() const {
  std::size_t n = 0;
  for (const auto& [c, v] : counts)
    for (auto k : v) n += k;
  return n;
}

AngularHistogram angular_histogram(const Tensor& features, std::span<const int> labels,
                                   std::size_t bins) {
  require(features.rank() == 2 && features.cols() == 2, ErrorCode::kInvalidArgument,
          "angular_histogram: features must be 2-dimensional");
  require(features.rows() == labels.size(), ErrorCode::kShapeMismatch,
          "angular_histogram: feature rows do not match label count");
  require(bins >= 4, ErrorCode::kInvalidArgument, "angular_histogram: need at least 4 bins");
  constexpr double two_pi = 2.0 * std::numbers::pi;
  AngularHistogram h;
  h.bins = bins;
  for (int c : std::set<int>(labels.begin(), labels.end())) h.counts[c].assign(bins, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    double angle = std::atan2(features.at(i, 1), features.at(i, 0));
    if (angle < 0.0) angle += two_pi;
    if (angle >= two_pi) angle = 0.0;
    auto b = static_cast<std::size_t>(angle / two_pi * static_cast<double>(bins));
    b = std::min(b, bins - 1);
    h.counts[labels[i]][b] += 1;
  }
  return h;
}

}  // namespace closer
