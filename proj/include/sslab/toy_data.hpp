#pragma once

#include "sslab/common.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace sslab {

// splitmix64 finaliser over (a, b); used to derive independent sub-seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

struct ToyDataset {
  Matrix points;            // N x d
  std::vector<int> labels;  // N
  int num_classes = 1;
  std::string generator;
  std::uint64_t seed = 0;

  Index size() const { return points.rows(); }
  Index dim() const { return points.cols(); }
};

// Vertices of a regular polygon of circumradius `radius`, first vertex on +y.
Matrix default_blob_centers(int num_classes = 3, double radius = 3.0);

ToyDataset gen_blobs(int n_per_class, int num_classes, const Matrix& centers, double sigma,
                     std::uint64_t seed);

// Classes 0 and 1 are the usual interleaving half circles; with three_classes
// a third arc of radius 2, concentric with the second moon, is added below.
ToyDataset gen_moons(int n_per_class, double noise, std::uint64_t seed, bool three_classes = true);

// Standard normal points, one dummy class.
ToyDataset gen_gaussian_points(int count, int dim, std::uint64_t seed);

enum class AugmentationKind { class_as_augmentation, centered_jitter, shifted_jitter };

std::string to_string(AugmentationKind k);
AugmentationKind augmentation_kind_from_string(const std::string& s);

struct AugmentationModel {
  AugmentationKind kind = AugmentationKind::class_as_augmentation;
  double sigma = 0.0;
  RowVector shift;  // shifted_jitter only
  int per_point = 1;
};

// (1, ..., 1) / sqrt(dim) scaled by 0.5.
RowVector default_shift(int dim);

struct AugmentedSet {
  Matrix points;              // N*A x d for jitter kinds, N x d for class kind
  std::vector<Index> source;  // originating row in the dataset
  std::vector<int> labels;
};

// Jitter kinds produce A rows per input: x + sigma * n (+ shift). The class
// kind leaves points untouched; positives come from sample_positive_partners.
AugmentedSet augment(const ToyDataset& ds, const AugmentationModel& model, std::uint64_t seed);

// For each dataset row in `rows`, a different row with the same label
// (the row itself when it is alone in its class).
std::vector<Index> sample_positive_partners(const ToyDataset& ds, std::span<const Index> rows,
                                            std::mt19937_64& rng);

enum class BatchMode { mini_batch, full_batch };

std::string to_string(BatchMode m);
BatchMode batch_mode_from_string(const std::string& s);

class BatchSampler {
 public:
  BatchSampler(BatchMode mode, Index batch_size, std::uint64_t seed);

  // Full batch: one batch, rows in order. Mini batch: a fresh permutation per
  // epoch cut into chunks of batch_size; a trailing chunk smaller than two
  // rows is folded into the previous chunk.
  std::vector<std::vector<Index>> epoch_batches(Index n, int epoch) const;

  BatchMode mode() const { return mode_; }
  Index batch_size() const { return batch_size_; }

 private:
  BatchMode mode_;
  Index batch_size_;
  std::uint64_t seed_;
};

// Header x0,...,x{d-1},label.
void write_dataset_csv(std::ostream& os, const ToyDataset& ds);
void write_dataset_csv(const std::filesystem::path& path, const ToyDataset& ds);
ToyDataset read_dataset_csv(std::istream& is);
ToyDataset read_dataset_csv(const std::filesystem::path& path);

}  // namespace sslab
