#pragma once

// Read-only measurements over embedding matrices (one embedding per row).
// None of these touch the gradient record.

#include "sslab/common.hpp"

#include <span>
#include <string>
#include <vector>

namespace sslab {

enum class CenterStrategy { batch, ema_of_batches, full_dataset };

std::string to_string(CenterStrategy s);

struct CenterEstimate {
  RowVector s_hat;
  CenterStrategy strategy = CenterStrategy::batch;
  double norm = 0.0;
  Index sample_count = 0;
};

// Row mean. Throws ContractError on empty input.
CenterEstimate estimate_center(const Matrix& embeddings, CenterStrategy strategy = CenterStrategy::batch);

// Folds successive batch means: s <- momentum * s + (1 - momentum) * mean.
// The first batch initialises s directly.
class EmaCenterTracker {
 public:
  explicit EmaCenterTracker(double momentum);
  const CenterEstimate& fold(const Matrix& batch);
  const CenterEstimate& current() const;
  bool empty() const { return !initialised_; }

 private:
  double momentum_;
  bool initialised_ = false;
  CenterEstimate estimate_;
};

struct ResidualStats {
  double mean_residual_norm = 0.0;     // mean_i |z_i - s|
  double mean_sq_residual_norm = 0.0;  // mean_i |z_i - s|^2
  double mean_sq_norm = 0.0;           // mean_i |z_i|^2
  RowVector per_dimension_std;         // population std per column
  double std_mean = 0.0;
};

ResidualStats residual_stats(const Matrix& embeddings, const CenterEstimate& center);

// |mean_t - mean_prev|^2.
double delta_dist(const RowVector& mean_t, const RowVector& mean_prev);

// Cosine between s_hat and `direction`. Throws ContractError on zero norm.
double angle_to_direction(const CenterEstimate& center, const RowVector& direction);

struct KnnResult {
  int k = 0;
  double accuracy = 0.0;
  Index evaluated = 0;
};

// Cosine-distance k-NN majority vote. Label ties go to the smallest summed
// distance, then the lowest label id; distance ties between neighbours go to
// the lower training index.
KnnResult knn_eval(const Matrix& train_emb, std::span<const int> train_labels, const Matrix& eval_emb,
                   std::span<const int> eval_labels, int k);
// Same set used for train and eval; each point is excluded from its own vote.
KnnResult knn_eval_loo(const Matrix& emb, std::span<const int> labels, int k);

struct CollapseThresholds {
  double center_hi = 0.8;
  double std_lo = 0.05;
};

struct CollapseReport {
  double center_norm = 0.0;
  double mean_residual_norm = 0.0;
  RowVector per_dimension_std;
  double std_mean = 0.0;
  double delta_dist = 0.0;
  bool collapsed = false;
};

// collapsed = center_norm > center_hi && std_mean < std_lo.
CollapseReport collapse_verdict(double center_norm, double mean_residual_norm, const RowVector& per_dimension_std,
                                double delta, const CollapseThresholds& thresholds = {});
// Convenience: measure a batch of embeddings against the previous tick's mean.
CollapseReport collapse_report(const Matrix& embeddings, const RowVector* previous_mean,
                               const CollapseThresholds& thresholds = {});

}  // namespace sslab
