#pragma once

// Training objectives on the unit hypersphere. All similarity-based terms use
// cosine similarity, which normalizes its inputs, so features and classifier
// weights may be passed unnormalized.

#include <cstddef>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "closer/tensor.hpp"

namespace closer {

struct LossConfig {
  double tau = 1.0 / 16.0;
  double margin = 0.0;  // subtracted from the true-class cosine; 0 disables
  double lambda_ssc = 0.0;
  double lambda_inter = 0.0;
  double lambda_intra = 0.0;

  /// Throws kInvalidArgument unless tau > 0 and every lambda >= 0.
  void validate() const;

  friend bool operator==(const LossConfig&, const LossConfig&) = default;
};

using IndexPair = std::pair<std::size_t, std::size_t>;

/// Cosine-logit softmax cross-entropy, averaged over the batch.
/// features [B,d], classifier [C,d], labels in [0, C). The true-class logit is
/// (cos − margin)/τ, the others cos/τ.
Var sce_loss(Var features, std::span<const int> labels, Var classifier, double tau,
             double margin = 0.0);

/// InfoNCE over listed positive pairs (i, j): the anchor i is contrasted
/// against every k ≠ i in the batch. Averaged over pairs.
Var ssc_loss(Var features, std::span<const IndexPair> positive_pairs, double tau);

/// Negative mean cosine similarity over unordered pairs i < j with different
/// labels. Throws kNoPairs when every sample shares one label.
Var inter_loss(Var features, std::span<const int> labels);

/// Same as inter_loss over same-label pairs.
Var intra_loss(Var features, std::span<const int> labels);

struct LossBatch {
  Var features;                 // [B,d] embeddings of the original samples
  std::span<const int> labels;  // class indices in [0, C)
  Var classifier;               // [C,d]
  std::optional<Var> views;     // [B,d] embeddings of one augmented view per sample
};

/// Per-term values. `*_raw` is the unweighted term, `*_weighted` its
/// contribution to the total. Inactive terms are absent.
struct LossBreakdown {
  double total = 0.0;
  double ce = 0.0;
  std::optional<double> ssc_raw, ssc_weighted;
  std::optional<double> inter_raw, inter_weighted;
  std::optional<double> intra_raw, intra_weighted;
};

struct TotalLoss {
  Var value;
  LossBreakdown breakdown;
};

/// L_ce + λ_ssc·L_ssc + λ_inter·L_inter + λ_intra·L_intra. Terms with zero
/// weight are skipped together with their preconditions. The SSC term runs
/// over the 2B-row batch [features; views] with pairs (i, B+i) and (B+i, i).
TotalLoss total_loss(const LossBatch& batch, const LossConfig& config);

/// Positive pairs for an original/view batch of B samples laid out as
/// [originals; views].
std::vector<IndexPair> view_pairs(std::size_t batch_size);

// Value-level conveniences that evaluate a loss on a private tape.
double sce_loss(const Tensor& features, std::span<const int> labels, const Tensor& classifier,
                double tau, double margin = 0.0);
double ssc_loss(const Tensor& features, std::span<const IndexPair> positive_pairs, double tau);
double inter_loss(const Tensor& features, std::span<const int> labels);
double intra_loss(const Tensor& features, std::span<const int> labels);

}  // namespace closer
