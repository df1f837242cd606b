#pragma once

// Training loop and metrics capture. Per batch the order is fixed:
// loss -> backward -> SGD step -> EMA twin update -> DINO center update.
// Diagnostics run at the end of an epoch on the detached embeddings.

#include "sslab/config.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace sslab {

inline constexpr const char* kMetricsHeader =
    "seed,epoch,step,loss,center_norm,mean_residual_norm,std_mean,delta_dist,knn_accuracy,wall_time_ms";

struct MetricsRecord {
  std::uint64_t seed = 0;
  int epoch = 0;
  long step = 0;
  std::optional<double> loss;
  std::optional<double> center_norm;
  std::optional<double> mean_residual_norm;
  std::optional<double> std_mean;
  std::optional<double> delta_dist;
  std::optional<double> knn_accuracy;
  std::optional<double> wall_time_ms;
  bool non_finite = false;
};

std::string format_metric(double v);
std::string to_csv_row(const MetricsRecord& r);

struct TrainState {
  EncoderStack encoder;
  std::optional<PredictorHead> predictor;
  std::optional<EmaTwin> twin;
  std::optional<PrototypeBank> prototypes;
  std::optional<DinoCenterState> dino_center;
  std::optional<RowVector> simple_center;  // EMA center when simple_center_momentum > 0
  ParameterSet params;
  long step = 0;

  static TrainState create(const ExperimentConfig& cfg, std::uint64_t run_seed);
  // Components present iff the loss needs them. Throws ContractError.
  void check_components(const LossConfig& loss) const;
  std::vector<NamedMatrix> snapshot() const;
};

// Row-normalised encoder output: what every diagnostic measures.
Matrix diagnostic_embeddings(const TrainState& state, const Matrix& x);

// One optimisation step on a pair of view batches; returns the loss value.
// A non-finite loss is returned without stepping.
double train_step(TrainState& state, const ExperimentConfig& cfg, const Matrix& x_a, const Matrix& x_b);

struct TrainingData {
  ToyDataset dataset;
  AugmentedSet augmented;
  // Rows the diagnostics embed: the augmented set for jitter kinds, else the dataset.
  Matrix eval_points;
  std::vector<int> eval_labels;
};

TrainingData make_training_data(const ExperimentConfig& cfg, std::uint64_t run_seed);

struct TickSnapshot {
  const ExperimentConfig& cfg;
  std::uint64_t seed;
  const MetricsRecord& record;
  const TrainState& state;
  const TrainingData& data;
  const Matrix& embeddings;
  const CenterEstimate& center;
  const ResidualStats& stats;
};

using TickObserver = std::function<void(const TickSnapshot&)>;

struct RunOptions {
  std::filesystem::path out_dir;  // empty: cfg.output.dir
  bool write_files = true;
  bool quiet = true;
  TickObserver observer;
};

struct SeedRun {
  std::uint64_t seed = 0;
  std::vector<MetricsRecord> records;
  bool aborted = false;
  TrainState state;
  TrainingData data;
  std::filesystem::path metrics_path;
  std::filesystem::path checkpoint_path;
};

struct RunResult {
  std::string name;
  std::vector<SeedRun> seeds;
  std::filesystem::path run_dir;
  std::filesystem::path aggregate_path;
  bool aborted() const;
};

// Seeds cfg.seed, cfg.seed + 1, ... The config is validated first.
RunResult run_experiment(const ExperimentConfig& cfg, const RunOptions& options = {});
SeedRun run_seed(const ExperimentConfig& cfg, std::uint64_t seed, const RunOptions& options = {});

// Tick-wise mean and sample std across seeds.
void write_aggregate_csv(const std::filesystem::path& path, const std::vector<SeedRun>& runs);
void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRecord>& records);

}  // namespace sslab
