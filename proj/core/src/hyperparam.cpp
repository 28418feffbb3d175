#include "closer/hyperparam.hpp"

#include <algorithm>

#include "closer/encoder.hpp"
#include "closer/error.hpp"
#include "closer/rng.hpp"

namespace closer {

namespace {

double score_candidate(const SearchCandidate& candidate, const Dataset& train_part,
                       const Dataset& val_part, const SearchOptions& options) {
  const auto base_classes = train_part.classes();
  const auto init = init_params(options.encoder_dims, derive_seed(options.seed, stream::kInit));
  TrainOptions train_options;
  train_options.augmentation = options.augmentation;
  const auto model = train_base(init, train_part, candidate.loss, candidate.train, train_options);

  auto bank = classifier_replace(model.params, train_part);
  Dataset test = val_part;
  Rng rng(derive_seed(options.seed, stream::kShots));
  int next_label = base_classes.back() + 1;
  for (std::size_t s = 1; s <= options.fake_sessions; ++s) {
    const int source = base_classes[(s - 1) % base_classes.size()];
    const int degrees = 90 * static_cast<int>(1 + (s - 1) % 3);
    const int label = next_label++;
    auto fake_train = rotate_class_synthesis(train_part, source, degrees, label);
    std::vector<std::size_t> idx(fake_train.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(std::min(idx.size(), options.shots));
    std::sort(idx.begin(), idx.end());
    bank = incremental_update(bank, model.params, fake_train.subset(idx));
    test.append(rotate_class_synthesis(val_part, source, degrees, label));
  }
  return evaluate_session(model.params, bank, test, base_classes, options.fake_sessions)
      .whole_accuracy;
}

}  // namespace

SearchResult hyperparam_search(const Dataset& base, std::span<const SearchCandidate> candidates,
                               const SearchOptions& options) {
  require(!candidates.empty(), ErrorCode::kInvalidArgument, "search: no candidates");
  require(base.image_shape().has_value() && base.image_shape()->square(),
          ErrorCode::kInvalidArgument, "search: rotated fake classes need square image data");
  SearchResult result;
  if (candidates.size() == 1) {
    result.best = candidates.front();
    return result;
  }
  const auto [train_part, val_part] =
      train_test_split(base, options.validation_per_class, derive_seed(options.seed, stream::kData));
  for (const auto& c : candidates) result.scores.push_back(score_candidate(c, train_part, val_part, options));
  result.best_index = static_cast<std::size_t>(
      std::max_element(result.scores.begin(), result.scores.end()) - result.scores.begin());
  result.best = candidates[result.best_index];
  return result;
}

}  // namespace closer
