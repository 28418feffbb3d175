#include "closer/losses.hpp"

#include <string>

#include "closer/error.hpp"

namespace closer {

void LossConfig::validate() const {
  require(tau > 0.0, ErrorCode::kInvalidArgument, "loss: tau must be positive");
  require(lambda_ssc >= 0.0 && lambda_inter >= 0.0 && lambda_intra >= 0.0,
          ErrorCode::kInvalidArgument, "loss: weights must be non-negative");
}

namespace {

// Cosine similarity matrix between the rows of a and the rows of b.
Var cosine_matrix(Var a, Var b) { return matmul(normalize_rows(a), transpose(normalize_rows(b))); }

std::vector<IndexPair> label_pairs(std::span<const int> labels, bool same_class) {
  std::vector<IndexPair> pairs;
  for (std::size_t i = 0; i < labels.size(); ++i)
    for (std::size_t j = i + 1; j < labels.size(); ++j)
      if ((labels[i] == labels[j]) == same_class) pairs.emplace_back(i, j);
  return pairs;
}

Var pair_similarity_loss(Var features, std::span<const int> labels, bool same_class) {
  const auto& z = features.value();
  require(z.rank() == 2 && z.rows() == labels.size(), ErrorCode::kShapeMismatch,
          "pair loss: feature rows do not match label count");
  auto pairs = label_pairs(labels, same_class);
  require(!pairs.empty(), ErrorCode::kNoPairs,
          same_class ? "intra_loss: batch has no same-class pair"
                     : "inter_loss: batch has no different-class pair");
  Var sim = cosine_matrix(features, features);
  return scale(mean(gather(sim, std::move(pairs))), -1.0);
}

}  // namespace

Var sce_loss(Var features, std::span<const int> labels, Var classifier, double tau, double margin) {
  require(tau > 0.0, ErrorCode::kInvalidArgument, "sce_loss: tau must be positive");
  const auto& z = features.value();
  const auto& w = classifier.value();
  require(z.rank() == 2 && w.rank() == 2, ErrorCode::kShapeMismatch,
          "sce_loss: features and classifier must be matrices");
  const auto batch = z.rows();
  const auto classes = w.rows();
  require(batch >= 1 && batch == labels.size(), ErrorCode::kShapeMismatch,
          "sce_loss: feature rows do not match label count");
  require(classes >= 2, ErrorCode::kInvalidArgument, "sce_loss: need at least two classes");
  std::vector<IndexPair> target;
  target.reserve(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    require(labels[i] >= 0 && static_cast<std::size_t>(labels[i]) < classes,
            ErrorCode::kInvalidArgument,
            "sce_loss: label " + std::to_string(labels[i]) + " outside [0, " +
                std::to_string(classes) + ")");
    target.emplace_back(i, static_cast<std::size_t>(labels[i]));
  }
  Var logits = scale(cosine_matrix(features, classifier), 1.0 / tau);
  if (margin != 0.0) {
    Tensor shift({batch, classes});
    for (auto [i, c] : target) shift.at(i, c) = -margin / tau;
    logits = add(logits, features.tape->constant(std::move(shift)));
  }
  return scale(mean(gather(log_softmax_rows(logits), std::move(target))), -1.0);
}

Var ssc_loss(Var features, std::span<const IndexPair> positive_pairs, double tau) {
  require(tau > 0.0, ErrorCode::kInvalidArgument, "ssc_loss: tau must be positive");
  const auto& z = features.value();
  require(z.rank() == 2, ErrorCode::kShapeMismatch, "ssc_loss: features must be a matrix");
  const auto n = z.rows();
  require(n >= 2, ErrorCode::kInvalidArgument, "ssc_loss: need at least two samples");
  require(!positive_pairs.empty(), ErrorCode::kNoPairs, "ssc_loss: empty positive pair list");
  for (auto [i, j] : positive_pairs) {
    require(i < n && j < n, ErrorCode::kInvalidArgument,
            "ssc_loss: pair (" + std::to_string(i) + "," + std::to_string(j) + ") out of range");
    require(i != j, ErrorCode::kInvalidArgument, "ssc_loss: pair with identical indices");
  }
  std::vector<bool> off_diagonal(n * n, true);
  for (std::size_t i = 0; i < n; ++i) off_diagonal[i * n + i] = false;
  Var logits = scale(cosine_matrix(features, features), 1.0 / tau);
  Var log_prob = log_softmax_rows(logits, std::move(off_diagonal));
  std::vector<IndexPair> pairs(positive_pairs.begin(), positive_pairs.end());
  return scale(mean(gather(log_prob, std::move(pairs))), -1.0);
}

Var inter_loss(Var features, std::span<const int> labels) {
  return pair_similarity_loss(features, labels, false);
}

Var intra_loss(Var features, std::span<const int> labels) {
  return pair_similarity_loss(features, labels, true);
}

std::vector<IndexPair> view_pairs(std::size_t batch_size) {
  std::vector<IndexPair> pairs;
  pairs.reserve(2 * batch_size);
  for (std::size_t i = 0; i < batch_size; ++i) {
    pairs.emplace_back(i, batch_size + i);
    pairs.emplace_back(batch_size + i, i);
  }
  return pairs;
}

TotalLoss total_loss(const LossBatch& batch, const LossConfig& config) {
  config.validate();
  LossBreakdown parts;
  Var ce = sce_loss(batch.features, batch.labels, batch.classifier, config.tau, config.margin);
  parts.ce = ce.value().item();
  Var total = ce;

  if (config.lambda_ssc > 0.0) {
    require(batch.views.has_value(), ErrorCode::kInvalidArgument,
            "total_loss: SSC term active but no augmented views supplied");
    const auto b = batch.features.value().rows();
    require(batch.views->value().rows() == b, ErrorCode::kShapeMismatch,
            "total_loss: view count does not match batch size");
    const auto pairs = view_pairs(b);
    Var term = ssc_loss(concat_rows(batch.features, *batch.views), pairs, config.tau);
    parts.ssc_raw = term.value().item();
    Var weighted = scale(term, config.lambda_ssc);
    parts.ssc_weighted = weighted.value().item();
    total = add(total, weighted);
  }
  if (config.lambda_inter > 0.0) {
    Var term = inter_loss(batch.features, batch.labels);
    parts.inter_raw = term.value().item();
    Var weighted = scale(term, config.lambda_inter);
    parts.inter_weighted = weighted.value().item();
    total = add(total, weighted);
  }
  if (config.lambda_intra > 0.0) {
    Var term = intra_loss(batch.features, batch.labels);
    parts.intra_raw = term.value().item();
    Var weighted = scale(term, config.lambda_intra);
    parts.intra_weighted = weighted.value().item();
    total = add(total, weighted);
  }
  parts.total = total.value().item();
  return {total, parts};
}

double sce_loss(const Tensor& features, std::span<const int> labels, const Tensor& classifier,
                double tau, double margin) {
  Tape tape;
  return sce_loss(tape.constant(features), labels, tape.constant(classifier), tau, margin)
      .value()
      .item();
}

double ssc_loss(const Tensor& features, std::span<const IndexPair> positive_pairs, double tau) {
  Tape tape;
  return ssc_loss(tape.constant(features), positive_pairs, tau).value().item();
}

double inter_loss(const Tensor& features, std::span<const int> labels) {
  Tape tape;
  return inter_loss(tape.constant(features), labels).value().item();
}

double intra_loss(const Tensor& features, std::span<const int> labels) {
  Tape tape;
  return intra_loss(tape.constant(features), labels).value().item();
}

}  // namespace closer
