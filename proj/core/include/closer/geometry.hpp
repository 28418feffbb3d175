#pragma once

#include <span>
#include <vector>

namespace closer {

/// Norms at or below this are treated as directionless and rejected.
inline constexpr double kNormEpsilon = 1e-12;

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> v);

/// Unit vector in the direction of v. Throws kDegenerateInput when
/// ‖v‖ <= kNormEpsilon.
std::vector<double> l2_normalize(std::span<const double> v);

/// a·b / (‖a‖‖b‖), clamped to [-1, 1].
double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// Angle between a and b in [0, π].
double angular_distance(std::span<const double> a, std::span<const double> b);

}  // namespace closer
