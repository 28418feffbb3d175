#pragma once

// Config-driven experiment runs: data → split → base training → classifier
// replacement → incremental sessions → metrics, repeated over seeds, with
// JSON/CSV reports. A run is a pure function of its config.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "closer/data.hpp"
#include "closer/ib.hpp"
#include "closer/losses.hpp"
#include "closer/metrics.hpp"
#include "closer/protocol.hpp"

namespace closer {

struct DatasetConfig {
  std::string kind = "synthetic";  // "synthetic" | "idx"
  // synthetic
  std::size_t classes = 30;
  std::size_t train_per_class = 60;
  std::size_t test_per_class = 40;
  std::size_t input_dim = 32;
  double center_separation = 4.0;
  double cluster_std = 1.0;
  std::size_t modes_per_class = 3;
  double mode_spread = 1.5;
  std::size_t image_side = 0;  // >0 tags samples as side×side images
  // idx
  std::string train_images, train_labels, test_images, test_labels;
  std::size_t max_train_per_class = 0;  // 0 keeps every sample
  std::size_t max_test_per_class = 0;
};

struct SplitConfig {
  std::size_t base_classes = 20;
  std::size_t ways = 5;
  std::size_t shots = 5;
  std::size_t sessions = 2;  // incremental sessions after the base session
};

struct EncoderConfig {
  std::vector<std::size_t> hidden{128, 128};
  std::size_t embedding_dim = 16;
};

struct MetricToggles {
  bool transferability = true;
  bool transferability_per_session = false;
  bool spread = true;
  bool histogram = false;
  std::size_t histogram_bins = 36;
  bool features = false;
  bool ib = false;
};

struct ExperimentConfig {
  std::string preset = "custom";
  DatasetConfig dataset;
  SplitConfig split;
  EncoderConfig encoder;
  LossConfig loss;
  TrainConfig train;
  AugmentationSpec augmentation;
  MetricToggles metrics;
  IbPlaneConfig ib;
  std::size_t seeds = 3;
  std::uint64_t master_seed = 0;
  std::string output_dir = "runs/default";

  void validate() const;
};

/// Names accepted by preset(): "baseline", "baseline_rs", "closer".
std::vector<std::string> preset_names();
/// Desk-scale defaults with the loss arm selected by name:
/// baseline τ=1/16; baseline_rs τ=1/32, λ_ssc=0.1; closer adds λ_inter=1.
ExperimentConfig preset(const std::string& name);

std::string config_to_json(const ExperimentConfig& config);  // canonical, sorted keys
/// Missing keys keep their defaults; unknown keys are rejected. A "preset"
/// key selects the starting point before the remaining keys are applied.
ExperimentConfig config_from_json(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
/// 16 hex digits of FNV-1a over the canonical JSON.
std::string config_hash(const ExperimentConfig& config);

struct SessionReport {
  std::uint64_t seed = 0;
  std::vector<SessionEval> sessions;
  std::optional<double> performance_drop;
  double base_accuracy_before_cr = 0.0;  // trained classifier, base test set
  double base_accuracy_after_cr = 0.0;   // prototypes over base classes only
  std::optional<double> transferability;
  std::vector<double> transferability_per_session;
  SpreadStats spread;
  std::optional<AngularHistogram> histogram;
  std::vector<IbPoint> ib;
  std::vector<EpochLog> train_log;
  std::vector<int> base_classes;
  std::vector<int> new_classes;
  // Final-session test features (sample id = row index) when requested.
  std::optional<Tensor> features;
  std::vector<int> feature_labels;
};

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population std over seeds
};

struct AggregateReport {
  std::vector<std::optional<MeanStd>> base_accuracy, new_accuracy;  // per session
  std::vector<MeanStd> whole_accuracy;
  std::optional<MeanStd> performance_drop;
  std::optional<MeanStd> transferability;
  std::optional<MeanStd> intra_spread, inter_distance;
  MeanStd base_accuracy_before_cr, base_accuracy_after_cr, cr_drop;
};

struct RunResult {
  ExperimentConfig config;
  std::string config_hash;
  std::vector<SessionReport> reports;
  AggregateReport aggregate;
};

struct LoadedData {
  Dataset train;
  Dataset test;
};

/// Materializes the configured dataset for one seed.
LoadedData load_data(const ExperimentConfig& config, std::uint64_t seed);

/// Seed used for repetition `index` of a run.
std::uint64_t run_seed(const ExperimentConfig& config, std::size_t index);

/// Full pipeline for one seed. When `trained` is given it receives the
/// trained encoder.
SessionReport run_single(const ExperimentConfig& config, std::uint64_t seed,
                         EncoderParams* trained = nullptr);

AggregateReport aggregate(const std::vector<SessionReport>& reports);

/// Runs every seed and writes summary.json, sessions.csv, metrics.csv,
/// encoder checkpoints and any enabled exports into config.output_dir.
/// Pass write_files=false to keep everything in memory.
RunResult run(const ExperimentConfig& config, bool write_files = true);

struct AblationGrid {
  std::vector<bool> low_tau{false, true};
  std::vector<bool> ssc{false, true};
  std::vector<bool> inter{false, true};
  double baseline_tau = 1.0 / 16.0;
  double low_tau_value = 1.0 / 32.0;
  double lambda_ssc = 0.1;
  double lambda_inter = 1.0;
};

struct AblationRow {
  bool low_tau = false, ssc = false, inter = false;
  std::optional<double> base_accuracy, new_accuracy;  // final session, seed mean
  double whole_accuracy = 0.0;
  std::optional<double> performance_drop;
};

/// One run per grid cell (sub-directories of base.output_dir), rows sorted by
/// (low_tau, ssc, inter). Writes ablation.csv when write_files is set.
std::vector<AblationRow> ablate(const ExperimentConfig& base, const AblationGrid& grid,
                                bool write_files = true);

/// Export families: "metrics", "histograms", "features", "ib".
std::vector<std::string> export_families();
/// Rewrites the CSV files of one family from run_dir/summary.json and returns
/// their paths. Throws kMissingArtifact when the run or the family's data is
/// absent (e.g. histograms of a run whose embedding is not 2-d).
std::vector<std::filesystem::path> export_run(const std::filesystem::path& run_dir,
                                              const std::string& what);

/// Computes IB-plane points for every seed of a finished run from its encoder
/// checkpoints, stores them in summary.json and writes ib.csv.
RunResult ib_eval(const std::filesystem::path& run_dir);

}  // namespace closer
