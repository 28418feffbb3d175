#include "closer/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "closer/error.hpp"

namespace closer {

double dot(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), ErrorCode::kShapeMismatch,
          "dot: lengths " + std::to_string(a.size()) + " and " + std::to_string(b.size()) +
              " differ");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

std::vector<double> l2_normalize(std::span<const double> v) {
  const double n = norm(v);
  require(n > kNormEpsilon, ErrorCode::kDegenerateInput, "l2_normalize: near-zero vector");
  std::vector<double> out(v.begin(), v.end());
  for (auto& x : out) x /= n;
  return out;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  const double na = norm(a);
  const double nb = norm(b);
  require(na > kNormEpsilon && nb > kNormEpsilon, ErrorCode::kDegenerateInput,
          "cosine_similarity: near-zero vector");
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

double angular_distance(std::span<const double> a, std::span<const double> b) {
  return std::acos(cosine_similarity(a, b));
}

}  // namespace closer
