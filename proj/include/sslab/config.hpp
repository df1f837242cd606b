#pragma once

#include "sslab/diagnostics.hpp"
#include "sslab/layers.hpp"
#include "sslab/losses.hpp"
#include "sslab/toy_data.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace sslab {

// Invalid configuration; `path` is the dotted field path (e.g. "loss.temperature").
class ConfigError : public Error {
 public:
  ConfigError(std::string path, const std::string& message)
      : Error(path.empty() ? message : path + ": " + message), path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

enum class DatasetKind { blobs, moons, gaussian };

std::string to_string(DatasetKind k);

struct DatasetSpec {
  DatasetKind kind = DatasetKind::blobs;
  int n_per_class = 100;  // blobs, moons
  int num_classes = 3;    // blobs
  double sigma = 0.5;     // blobs
  double radius = 3.0;    // blobs: circumradius of the default centers
  double noise = 0.1;     // moons
  bool three_classes = true;  // moons
  int count = 100;        // gaussian
  int dim = 3;            // gaussian
};

struct AugmentationSpec {
  AugmentationKind kind = AugmentationKind::class_as_augmentation;
  double sigma = 0.0;
  std::vector<double> shift;  // empty: default_shift(d) for shifted_jitter
  int per_point = 1;
};

struct ModelSpec {
  std::vector<int> encoder_dims{2, 16, 2};
  InitScheme init = InitScheme::uniform_fan_in;
  Activation activation = Activation::tanh;
  int predictor_hidden = 0;  // 0: 4 * embedding dim
  Activation predictor_activation = Activation::tanh;
  InitScheme predictor_init = InitScheme::uniform_fan_in;
  int num_prototypes = 16;
  bool trainable_prototypes = true;
};

struct OptimizerSpec {
  double lr = 0.05;
  GroupMultipliers multipliers;
  BatchMode batch_mode = BatchMode::mini_batch;
  int batch_size = 50;
  int epochs = 200;
};

struct DiagnosticsSpec {
  int every = 1;       // epochs between ticks
  int knn_every = 5;   // epochs between kNN evaluations; the last tick always has one
  int knn_k = 5;
  CollapseThresholds thresholds;
  bool record_wall_time = false;  // wall time breaks byte-identical reruns
};

struct OutputSpec {
  std::string dir = "runs";
  bool checkpoint = true;
};

struct ExperimentConfig {
  std::string name = "experiment";
  std::uint64_t seed = 0;
  int num_seeds = 5;
  DatasetSpec dataset;
  AugmentationSpec augmentation;
  ModelSpec model;
  LossConfig loss;
  OptimizerSpec optimizer;
  DiagnosticsSpec diagnostics;
  OutputSpec output;

  Index embedding_dim() const { return model.encoder_dims.empty() ? 0 : model.encoder_dims.back(); }
  Index input_dim() const;
  // Structural checks (dimension chains, toggles, ranges). Throws ConfigError.
  void validate() const;
};

nlohmann::json to_json(const ExperimentConfig& cfg);
// Unknown keys are rejected; missing keys keep their defaults.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const ExperimentConfig& cfg);

// "a.b.c=value"; the value is parsed as JSON when possible, else taken as a string.
void apply_override(nlohmann::json& j, const std::string& assignment);
ExperimentConfig with_overrides(const ExperimentConfig& cfg, const std::vector<std::string>& assignments);

}  // namespace sslab
