#pragma once

// Hyperparameter selection without new-class validation data: fake
// incremental sessions are built from base classes rotated by multiples of
// 90°, and candidates are ranked by whole-class accuracy on held-out base
// samples plus the rotated fake classes.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "closer/data.hpp"
#include "closer/losses.hpp"
#include "closer/protocol.hpp"

namespace closer {

struct SearchCandidate {
  LossConfig loss;
  TrainConfig train;
};

struct SearchOptions {
  std::vector<std::size_t> encoder_dims;  // full layer dims, input first
  std::size_t validation_per_class = 5;
  std::size_t fake_sessions = 1;  // one rotated class per fake session
  std::size_t shots = 5;
  AugmentationSpec augmentation;
  std::uint64_t seed = 0;
};

struct SearchResult {
  std::size_t best_index = 0;
  SearchCandidate best;
  std::vector<double> scores;  // validation A_W (%) per candidate
};

/// Fake session s (1-based) rotates base class number (s−1) mod C by
/// 90/180/270° cycling with s. Ties keep the earliest candidate.
SearchResult hyperparam_search(const Dataset& base, std::span<const SearchCandidate> candidates,
                               const SearchOptions& options);

}  // namespace closer
