#include "closer/protocol.hpp"

#include <algorithm>
#include <bit>
#include <numeric>
#include <set>
#include <string>

#include "closer/error.hpp"
#include "closer/geometry.hpp"
#include "closer/optim.hpp"
#include "closer/rng.hpp"

namespace closer {

std::vector<int> FscilSplit::seen_classes(std::size_t t) const {
  std::vector<int> out;
  for (std::size_t s = 0; s <= t && s < session_classes.size(); ++s)
    out.insert(out.end(), session_classes[s].begin(), session_classes[s].end());
  std::sort(out.begin(), out.end());
  return out;
}

FscilSplit make_split(std::span<const int> all_classes, std::size_t base_count, std::size_t ways,
                      std::size_t shots, std::size_t incremental_sessions, std::uint64_t seed) {
  require(base_count >= 2, ErrorCode::kInvalidArgument, "split: need at least two base classes");
  require(incremental_sessions == 0 || (ways >= 1 && shots >= 1), ErrorCode::kInvalidArgument,
          "split: ways and shots must be positive");
  std::vector<int> classes(all_classes.begin(), all_classes.end());
  std::sort(classes.begin(), classes.end());
  require(std::adjacent_find(classes.begin(), classes.end()) == classes.end(),
          ErrorCode::kInvalidArgument, "split: duplicate class ids");
  const std::size_t needed = base_count + incremental_sessions * ways;
  if (needed > classes.size()) {
    fail(ErrorCode::kInvalidArgument, "split: " + std::to_string(base_count) + " base + " +
                                          std::to_string(incremental_sessions) + "x" +
                                          std::to_string(ways) + " new classes need " +
                                          std::to_string(needed) + " classes, only " +
                                          std::to_string(classes.size()) + " available");
  }
  Rng rng(derive_seed(seed, stream::kSplit));
  std::shuffle(classes.begin(), classes.end(), rng);

  FscilSplit split;
  split.ways = ways;
  split.shots = shots;
  split.seed = seed;
  auto take = [&classes, pos = std::size_t{0}](std::size_t n) mutable {
    std::vector<int> s(classes.begin() + static_cast<std::ptrdiff_t>(pos),
                       classes.begin() + static_cast<std::ptrdiff_t>(pos + n));
    pos += n;
    std::sort(s.begin(), s.end());
    return s;
  };
  split.session_classes.push_back(take(base_count));
  for (std::size_t t = 0; t < incremental_sessions; ++t) split.session_classes.push_back(take(ways));
  return split;
}

std::vector<Dataset> session_datasets(const Dataset& train, const FscilSplit& split) {
  std::vector<Dataset> out;
  out.push_back(train.filter_classes(split.base_classes()));
  for (int c : split.base_classes()) {
    require(!train.indices_of(c).empty(), ErrorCode::kInvalidArgument,
            "split: base class " + std::to_string(c) + " has no training samples");
  }
  Rng rng(derive_seed(split.seed, stream::kShots));
  for (std::size_t t = 1; t < split.sessions(); ++t) {
    std::vector<std::size_t> picked;
    for (int c : split.session_classes[t]) {
      auto idx = train.indices_of(c);
      if (idx.size() < split.shots) {
        fail(ErrorCode::kInvalidArgument, "split: class " + std::to_string(c) + " has " +
                                              std::to_string(idx.size()) + " samples, " +
                                              std::to_string(split.shots) + " shots requested");
      }
      std::shuffle(idx.begin(), idx.end(), rng);
      picked.insert(picked.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(split.shots));
    }
    std::sort(picked.begin(), picked.end());
    out.push_back(train.subset(picked));
  }
  return out;
}

void TrainConfig::validate() const {
  require(lr > 0.0, ErrorCode::kInvalidArgument, "train: learning rate must be positive");
  require(batch_size >= 2, ErrorCode::kInvalidArgument, "train: batch size must be at least 2");
  require(momentum >= 0.0 && weight_decay >= 0.0, ErrorCode::kInvalidArgument,
          "train: momentum and weight decay must be non-negative");
}

namespace {

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size,
                                                    Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const auto end = std::min(n, start + batch_size);
    if (end - start < 2) break;
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

bool has_pair(std::span<const int> labels, bool same_class) {
  for (std::size_t i = 0; i < labels.size(); ++i)
    for (std::size_t j = i + 1; j < labels.size(); ++j)
      if ((labels[i] == labels[j]) == same_class) return true;
  return false;
}

}  // namespace

TrainedModel train_base(const EncoderParams& init, const Dataset& base_train,
                        const LossConfig& loss, const TrainConfig& train,
                        const TrainOptions& options) {
  loss.validate();
  train.validate();
  require(!base_train.empty(), ErrorCode::kInvalidArgument, "train_base: empty base session");
  require(base_train.dim() == init.input_dim(), ErrorCode::kShapeMismatch,
          "train_base: data dimension does not match encoder input");

  TrainedModel model;
  model.params = init;
  model.class_ids = base_train.classes();
  require(model.class_ids.size() >= 2, ErrorCode::kInvalidArgument,
          "train_base: need at least two base classes");
  std::map<int, int> index_of;
  for (std::size_t k = 0; k < model.class_ids.size(); ++k)
    index_of[model.class_ids[k]] = static_cast<int>(k);

  const auto classes = model.class_ids.size();
  const auto d = init.embedding_dim();
  {
    Rng rng(derive_seed(train.seed, stream::kClassifier));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> w(classes * d);
    for (auto& v : w) v = normal(rng);
    model.classifier = Tensor::matrix(classes, d, std::move(w));
  }
  if (train.epochs == 0) return model;

  NesterovSgd optimizer(train.momentum, train.weight_decay);
  Rng shuffle_rng(derive_seed(train.seed, stream::kTrain));
  const bool use_views = loss.lambda_ssc > 0.0;

  for (std::size_t epoch = 0; epoch < train.epochs; ++epoch) {
    const double lr = step_decay_lr(train.lr, epoch, train.epochs);
    EpochLog entry;
    entry.epoch = epoch;
    entry.lr = lr;
    const auto batches = epoch_batches(base_train.size(), train.batch_size, shuffle_rng);
    std::size_t step = 0;
    for (const auto& batch : batches) {
      std::vector<int> labels;
      labels.reserve(batch.size());
      for (auto i : batch) labels.push_back(index_of.at(base_train.label(i)));

      // A single-class batch has no different-class pair (and vice versa);
      // the affected term sits this batch out.
      LossConfig batch_loss = loss;
      if (!has_pair(labels, false)) batch_loss.lambda_inter = 0.0;
      if (!has_pair(labels, true)) batch_loss.lambda_intra = 0.0;

      try {
        Tape tape;
        const auto bound = model.params.net.bind(tape, true);
        Var classifier = tape.leaf(model.classifier);
        Var z = embed(model.params, bound, tape.constant(base_train.batch(batch)));
        std::optional<Var> views;
        if (use_views) {
          Dataset augmented(base_train.dim(), base_train.image_shape());
          for (auto i : batch) {
            Rng aug_rng(augmentation_seed(train.seed, options.augmentation, epoch, i));
            augmented.add(augment(base_train.input(i), base_train.image_shape(),
                                  options.augmentation, aug_rng),
                          base_train.label(i));
          }
          views = embed(model.params, bound, tape.constant(augmented.all_inputs()));
        }
        const auto result = total_loss({z, labels, classifier, views}, batch_loss);
        tape.backward(result.value);

        std::vector<Tensor*> params = model.params.net.parameters();
        params.push_back(&model.classifier);
        std::vector<Tensor> grads;
        grads.reserve(params.size());
        for (auto v : bound.params) grads.push_back(tape.grad(v));
        grads.push_back(tape.grad(classifier));
        for (const auto& g : grads) {
          require(g.all_finite(), ErrorCode::kNonFinite, "non-finite gradient");
        }
        optimizer.step(params, grads, lr);

        const auto& b = result.breakdown;
        entry.mean_total += b.total;
        entry.mean_ce += b.ce;
        entry.mean_ssc += b.ssc_raw.value_or(0.0);
        entry.mean_inter += b.inter_raw.value_or(0.0);
        entry.mean_intra += b.intra_raw.value_or(0.0);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kNonFinite && e.code() != ErrorCode::kDegenerateInput) throw;
        fail(e.code(), "train_base: diverged at epoch " + std::to_string(epoch) + ", step " +
                           std::to_string(step) + " (lr " + std::to_string(lr) +
                           "): " + e.what());
      }
      ++step;
    }
    if (!batches.empty()) {
      const double n = static_cast<double>(batches.size());
      entry.mean_total /= n;
      entry.mean_ce /= n;
      entry.mean_ssc /= n;
      entry.mean_inter /= n;
      entry.mean_intra /= n;
    }
    model.log.push_back(entry);
    if (options.on_epoch) options.on_epoch(entry);
  }
  return model;
}

double classifier_accuracy(const TrainedModel& model, const Dataset& test) {
  require(!test.empty(), ErrorCode::kInvalidArgument, "classifier_accuracy: empty test set");
  const Tensor z = embed(model.params, test.all_inputs());
  std::size_t correct = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    std::size_t best = 0;
    double best_score = -2.0;
    for (std::size_t k = 0; k < model.class_ids.size(); ++k) {
      const double s = cosine_similarity(z.row(i), model.classifier.row(k));
      if (s > best_score) {
        best_score = s;
        best = k;
      }
    }
    if (model.class_ids[best] == test.label(i)) ++correct;
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(test.size());
}

PrototypeBank::PrototypeBank(std::vector<Prototype> prototypes, std::uint64_t encoder_fingerprint)
    : prototypes_(std::move(prototypes)), encoder_fingerprint_(encoder_fingerprint) {
  std::set<int> ids;
  for (const auto& p : prototypes_) {
    require(ids.insert(p.class_id).second, ErrorCode::kInvalidArgument,
            "prototype bank: duplicate class " + std::to_string(p.class_id));
    require(p.count > 0, ErrorCode::kInvalidArgument,
            "prototype bank: class " + std::to_string(p.class_id) + " has no samples");
  }
}

bool PrototypeBank::contains(int class_id) const {
  return std::any_of(prototypes_.begin(), prototypes_.end(),
                     [class_id](const Prototype& p) { return p.class_id == class_id; });
}

const Prototype& PrototypeBank::at(int class_id) const {
  for (const auto& p : prototypes_)
    if (p.class_id == class_id) return p;
  fail(ErrorCode::kInvalidArgument, "prototype bank: no class " + std::to_string(class_id));
}

std::vector<int> PrototypeBank::class_ids() const {
  std::vector<int> out;
  for (const auto& p : prototypes_) out.push_back(p.class_id);
  return out;
}

Tensor PrototypeBank::matrix(std::span<const int> ids) const {
  require(!ids.empty(), ErrorCode::kInvalidArgument, "prototype bank: empty class selection");
  std::vector<double> data;
  for (int c : ids) {
    const auto& m = at(c).mean;
    data.insert(data.end(), m.begin(), m.end());
  }
  const auto d = at(ids.front()).mean.size();
  return Tensor::matrix(ids.size(), d, std::move(data));
}

std::uint64_t PrototypeBank::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](std::uint64_t v) {
    for (int b = 0; b < 8; ++b) {
      h ^= (v >> (8 * b)) & 0xFF;
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& p : prototypes_) {
    mix(static_cast<std::uint64_t>(static_cast<std::int64_t>(p.class_id)));
    mix(p.count);
    for (double v : p.mean) mix(std::bit_cast<std::uint64_t>(v));
  }
  return h;
}

std::vector<Prototype> class_means(const EncoderParams& params, const Dataset& data) {
  std::vector<Prototype> out;
  if (data.empty()) return out;
  const Tensor z = embed(params, data.all_inputs());
  const auto d = z.cols();
  for (int c : data.classes()) {
    Prototype p{c, std::vector<double>(d, 0.0), 0};
    for (auto i : data.indices_of(c)) {
      const auto row = z.row(i);
      for (std::size_t j = 0; j < d; ++j) p.mean[j] += row[j];
      ++p.count;
    }
    for (auto& v : p.mean) v /= static_cast<double>(p.count);
    out.push_back(std::move(p));
  }
  return out;
}

PrototypeBank classifier_replace(const EncoderParams& params, const Dataset& base_train) {
  require(!base_train.empty(), ErrorCode::kInvalidArgument,
          "classifier_replace: base session has no samples");
  return PrototypeBank(class_means(params, base_train), fingerprint(params));
}

PrototypeBank incremental_update(const PrototypeBank& bank, const EncoderParams& params,
                                 const Dataset& session_train) {
  if (session_train.empty()) return bank;
  require(fingerprint(params) == bank.encoder_fingerprint(), ErrorCode::kFrozenEncoder,
          "incremental_update: encoder differs from the one used at classifier replacement");
  for (int c : session_train.classes()) {
    require(!bank.contains(c), ErrorCode::kInvalidArgument,
            "incremental_update: class " + std::to_string(c) + " already has a prototype");
  }
  auto protos = bank.prototypes();
  for (auto& p : class_means(params, session_train)) protos.push_back(std::move(p));
  return PrototypeBank(std::move(protos), bank.encoder_fingerprint());
}

Classification classify_embedding(const PrototypeBank& bank, std::span<const double> z) {
  require(!bank.empty(), ErrorCode::kInvalidArgument, "classify: empty prototype bank");
  Classification out;
  out.scores.reserve(bank.size());
  double best = 0.0;
  bool first = true;
  for (const auto& p : bank.prototypes()) {
    const double s = cosine_similarity(z, p.mean);
    out.scores.push_back(s);
    if (first || s > best || (s == best && p.class_id < out.class_id)) {
      best = s;
      out.class_id = p.class_id;
      first = false;
    }
  }
  return out;
}

Classification classify(const EncoderParams& params, const PrototypeBank& bank,
                        std::span<const double> x) {
  const Tensor z = embed(params, Tensor::vector({x.begin(), x.end()}));
  return classify_embedding(bank, z.row(0));
}

std::vector<int> predict(const EncoderParams& params, const PrototypeBank& bank,
                         const Dataset& data) {
  std::vector<int> out;
  if (data.empty()) return out;
  const Tensor z = embed(params, data.all_inputs());
  out.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i)
    out.push_back(classify_embedding(bank, z.row(i)).class_id);
  return out;
}

SessionEval evaluate_session(const EncoderParams& params, const PrototypeBank& bank,
                             const Dataset& test, std::span<const int> base_classes,
                             std::size_t session) {
  require(!test.empty(), ErrorCode::kInvalidArgument, "evaluate_session: empty test set");
  for (int c : test.classes()) {
    require(bank.contains(c), ErrorCode::kInvalidArgument,
            "evaluate_session: test class " + std::to_string(c) + " has not been seen");
  }
  const std::set<int> base(base_classes.begin(), base_classes.end());
  const auto predicted = predict(params, bank, test);

  SessionEval out;
  out.session = session;
  std::map<int, std::pair<std::size_t, std::size_t>> per_class;  // correct, total
  for (std::size_t i = 0; i < test.size(); ++i) {
    const int y = test.label(i);
    const bool ok = predicted[i] == y;
    auto& pc = per_class[y];
    pc.first += ok;
    pc.second += 1;
    if (base.contains(y)) {
      out.base_samples += 1;
      out.base_correct += ok;
    } else {
      out.new_samples += 1;
      out.new_correct += ok;
    }
  }
  auto pct = [](std::size_t c, std::size_t n) {
    return 100.0 * static_cast<double>(c) / static_cast<double>(n);
  };
  for (const auto& [c, counts] : per_class) out.per_class_accuracy[c] = pct(counts.first, counts.second);
  if (out.base_samples) out.base_accuracy = pct(out.base_correct, out.base_samples);
  if (out.new_samples) out.new_accuracy = pct(out.new_correct, out.new_samples);
  out.whole_accuracy = pct(out.base_correct + out.new_correct, test.size());
  return out;
}

}  // namespace closer
