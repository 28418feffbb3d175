#pragma once

// Few-shot class-incremental session protocol: split classes into a base
// session and N-way K-shot incremental sessions, train the encoder on the base
// session, swap the trained classifier for class-mean prototypes, then extend
// the prototype bank session by session with the encoder frozen.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "closer/data.hpp"
#include "closer/encoder.hpp"
#include "closer/losses.hpp"
#include "closer/tensor.hpp"

namespace closer {

struct FscilSplit {
  std::vector<std::vector<int>> session_classes;  // [0] = base classes
  std::size_t ways = 0;
  std::size_t shots = 0;
  std::uint64_t seed = 0;

  std::size_t sessions() const { return session_classes.size(); }
  const std::vector<int>& base_classes() const { return session_classes.front(); }
  /// Union of classes of sessions 0..t.
  std::vector<int> seen_classes(std::size_t t) const;
};

/// Shuffles all_classes with the seed, gives the first base_count to session
/// 0 and `ways` classes to each of the `incremental_sessions` that follow.
FscilSplit make_split(std::span<const int> all_classes, std::size_t base_count, std::size_t ways,
                      std::size_t shots, std::size_t incremental_sessions, std::uint64_t seed);

/// Training data per session: every sample of the base classes for session 0,
/// `shots` seeded picks per class afterwards.
std::vector<Dataset> session_datasets(const Dataset& train, const FscilSplit& split);

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 64;
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct EpochLog {
  std::size_t epoch = 0;
  double lr = 0.0;
  double mean_total = 0.0;
  double mean_ce = 0.0;
  double mean_ssc = 0.0;
  double mean_inter = 0.0;
  double mean_intra = 0.0;
};

struct TrainedModel {
  EncoderParams params;
  Tensor classifier;               // [C, d], row k belongs to class_ids[k]
  std::vector<int> class_ids;
  std::vector<EpochLog> log;
};

struct TrainOptions {
  AugmentationSpec augmentation;
  /// Called once per finished epoch.
  std::function<void(const EpochLog&)> on_epoch;
};

/// Minibatch Nesterov SGD on total_loss. Batches are a seeded reshuffle per
/// epoch; a trailing partial batch is kept if it has at least two samples.
/// With lambda_ssc > 0 every sample also contributes one augmented view.
/// Throws kNonFinite with the epoch/step when the loss diverges.
TrainedModel train_base(const EncoderParams& init, const Dataset& base_train,
                        const LossConfig& loss, const TrainConfig& train,
                        const TrainOptions& options = {});

/// Accuracy (in %) of the trained cosine classifier on a labelled set whose
/// classes are all in model.class_ids.
double classifier_accuracy(const TrainedModel& model, const Dataset& test);

struct Prototype {
  int class_id = 0;
  std::vector<double> mean;  // raw feature average, not renormalized
  std::size_t count = 0;

  friend bool operator==(const Prototype&, const Prototype&) = default;
};

class PrototypeBank {
 public:
  PrototypeBank() = default;
  PrototypeBank(std::vector<Prototype> prototypes, std::uint64_t encoder_fingerprint);

  const std::vector<Prototype>& prototypes() const noexcept { return prototypes_; }
  std::size_t size() const noexcept { return prototypes_.size(); }
  bool empty() const noexcept { return prototypes_.empty(); }
  bool contains(int class_id) const;
  const Prototype& at(int class_id) const;
  std::vector<int> class_ids() const;
  /// Fingerprint of the encoder the prototypes were computed with.
  std::uint64_t encoder_fingerprint() const noexcept { return encoder_fingerprint_; }
  /// Prototypes restricted to the given classes, as a [k, d] matrix.
  Tensor matrix(std::span<const int> class_ids) const;

  /// FNV-1a over class ids, counts and prototype bits.
  std::uint64_t hash() const;

  friend bool operator==(const PrototypeBank&, const PrototypeBank&) = default;

 private:
  std::vector<Prototype> prototypes_;
  std::uint64_t encoder_fingerprint_ = 0;
};

/// Class-mean prototypes of `data` under the encoder.
std::vector<Prototype> class_means(const EncoderParams& params, const Dataset& data);

/// Discards the trained classifier: one prototype per class of base_train.
PrototypeBank classifier_replace(const EncoderParams& params, const Dataset& base_train);

/// Appends prototypes for the classes of session_train. Rejects classes that
/// already have a prototype and an encoder whose fingerprint differs from the
/// one used at classifier replacement. An empty session returns the bank
/// unchanged.
PrototypeBank incremental_update(const PrototypeBank& bank, const EncoderParams& params,
                                 const Dataset& session_train);

struct Classification {
  int class_id = 0;
  std::vector<double> scores;  // cosine similarity per prototype, bank order
};

/// argmax cosine similarity to the prototypes; ties go to the lowest class id.
Classification classify(const EncoderParams& params, const PrototypeBank& bank,
                        std::span<const double> x);
/// Same decision rule on already-embedded features.
Classification classify_embedding(const PrototypeBank& bank, std::span<const double> z);
std::vector<int> predict(const EncoderParams& params, const PrototypeBank& bank,
                         const Dataset& data);

struct SessionEval {
  std::size_t session = 0;
  std::map<int, double> per_class_accuracy;  // percent
  std::optional<double> base_accuracy;       // A_B
  std::optional<double> new_accuracy;        // A_N, absent while no new class is seen
  double whole_accuracy = 0.0;               // A_W
  std::size_t base_samples = 0, base_correct = 0;
  std::size_t new_samples = 0, new_correct = 0;
};

/// Evaluates on a test set restricted to seen classes. Every test class must
/// have a prototype; base_classes decides the A_B / A_N partition.
SessionEval evaluate_session(const EncoderParams& params, const PrototypeBank& bank,
                             const Dataset& test, std::span<const int> base_classes,
                             std::size_t session = 0);

}  // namespace closer
