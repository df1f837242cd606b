#include "sslab/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sslab {

std::string to_string(CenterStrategy s) {
  switch (s) {
    case CenterStrategy::batch: return "batch";
    case CenterStrategy::ema_of_batches: return "ema_of_batches";
    case CenterStrategy::full_dataset: return "full_dataset";
  }
  return "batch";
}

CenterEstimate estimate_center(const Matrix& embeddings, CenterStrategy strategy) {
  if (embeddings.rows() == 0) throw ContractError("estimate_center: no embeddings");
  CenterEstimate est;
  est.s_hat = embeddings.colwise().sum() / static_cast<double>(embeddings.rows());
  est.norm = est.s_hat.norm();
  est.strategy = strategy;
  est.sample_count = embeddings.rows();
  return est;
}

EmaCenterTracker::EmaCenterTracker(double momentum) : momentum_(momentum) {
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ParameterError("EmaCenterTracker: momentum must lie in [0, 1)");
  estimate_.strategy = CenterStrategy::ema_of_batches;
}

const CenterEstimate& EmaCenterTracker::fold(const Matrix& batch) {
  const CenterEstimate b = estimate_center(batch);
  if (!initialised_) {
    estimate_.s_hat = b.s_hat;
    initialised_ = true;
  } else {
    if (b.s_hat.size() != estimate_.s_hat.size()) throw DimensionError("EmaCenterTracker: dimension changed");
    estimate_.s_hat = momentum_ * estimate_.s_hat + (1.0 - momentum_) * b.s_hat;
  }
  estimate_.norm = estimate_.s_hat.norm();
  estimate_.sample_count += b.sample_count;
  return estimate_;
}

const CenterEstimate& EmaCenterTracker::current() const {
  if (!initialised_) throw ContractError("EmaCenterTracker: no batch folded yet");
  return estimate_;
}

ResidualStats residual_stats(const Matrix& embeddings, const CenterEstimate& center) {
  if (embeddings.rows() == 0) throw ContractError("residual_stats: no embeddings");
  if (center.s_hat.size() != embeddings.cols()) throw DimensionError("residual_stats: dimension mismatch");
  const double n = static_cast<double>(embeddings.rows());
  const Matrix r = embeddings.rowwise() - center.s_hat;
  const Eigen::VectorXd sq = r.rowwise().squaredNorm();
  ResidualStats st;
  st.mean_residual_norm = sq.cwiseSqrt().sum() / n;
  st.mean_sq_residual_norm = sq.sum() / n;
  st.mean_sq_norm = embeddings.rowwise().squaredNorm().sum() / n;
  // Spread around the column mean, which is the batch center when `center`
  // came from these embeddings.
  const RowVector mu = embeddings.colwise().sum() / n;
  st.per_dimension_std = ((embeddings.rowwise() - mu).array().square().colwise().sum() / n).sqrt().matrix();
  st.std_mean = st.per_dimension_std.mean();
  return st;
}

double delta_dist(const RowVector& mean_t, const RowVector& mean_prev) {
  if (mean_t.size() != mean_prev.size()) throw DimensionError("delta_dist: dimension mismatch");
  return (mean_t - mean_prev).squaredNorm();
}

double angle_to_direction(const CenterEstimate& center, const RowVector& direction) {
  if (center.s_hat.size() != direction.size()) throw DimensionError("angle_to_direction: dimension mismatch");
  const double a = center.s_hat.norm();
  const double b = direction.norm();
  if (!(a > 0.0) || !(b > 0.0)) throw ContractError("angle_to_direction: zero-norm vector");
  return center.s_hat.dot(direction) / (a * b);
}

namespace {

Matrix unit_rows(const Matrix& m) {
  Matrix out = m;
  for (Index i = 0; i < out.rows(); ++i) {
    const double n = out.row(i).norm();
    if (n > 0.0) out.row(i) /= n;
  }
  return out;
}

KnnResult knn_impl(const Matrix& train, std::span<const int> train_labels, const Matrix& eval,
                   std::span<const int> eval_labels, int k, bool leave_one_out) {
  if (train.rows() == 0 || eval.rows() == 0) throw ContractError("knn_eval: empty set");
  if (static_cast<Index>(train_labels.size()) != train.rows() || static_cast<Index>(eval_labels.size()) != eval.rows()) {
    throw DimensionError("knn_eval: label count does not match embeddings");
  }
  if (train.cols() != eval.cols()) throw DimensionError("knn_eval: embedding dimensions differ");
  const Index available = train.rows() - (leave_one_out ? 1 : 0);
  if (k < 1 || k > available) throw ParameterError("knn_eval: k must lie in [1, " + std::to_string(available) + "]");

  const Matrix tu = unit_rows(train);
  const Matrix eu = unit_rows(eval);
  const Matrix cos = eu * tu.transpose();
  int max_label = 0;
  for (int l : train_labels) max_label = std::max(max_label, l);

  Index correct = 0;
  std::vector<std::pair<double, Index>> cand;
  cand.reserve(static_cast<std::size_t>(train.rows()));
  std::vector<int> votes(static_cast<std::size_t>(max_label) + 1);
  std::vector<double> dist_sum(votes.size());
  for (Index i = 0; i < eval.rows(); ++i) {
    cand.clear();
    for (Index j = 0; j < train.rows(); ++j) {
      if (leave_one_out && j == i) continue;
      cand.emplace_back(1.0 - cos(i, j), j);
    }
    std::partial_sort(cand.begin(), cand.begin() + k, cand.end());
    std::fill(votes.begin(), votes.end(), 0);
    std::fill(dist_sum.begin(), dist_sum.end(), 0.0);
    for (int n = 0; n < k; ++n) {
      const auto label = static_cast<std::size_t>(train_labels[static_cast<std::size_t>(cand[static_cast<std::size_t>(n)].second)]);
      ++votes[label];
      dist_sum[label] += cand[static_cast<std::size_t>(n)].first;
    }
    std::size_t best = 0;
    for (std::size_t l = 1; l < votes.size(); ++l) {
      if (votes[l] > votes[best] || (votes[l] == votes[best] && votes[l] > 0 && dist_sum[l] < dist_sum[best])) best = l;
    }
    if (static_cast<int>(best) == eval_labels[static_cast<std::size_t>(i)]) ++correct;
  }
  return {k, static_cast<double>(correct) / static_cast<double>(eval.rows()), eval.rows()};
}

}  // namespace

KnnResult knn_eval(const Matrix& train_emb, std::span<const int> train_labels, const Matrix& eval_emb,
                   std::span<const int> eval_labels, int k) {
  return knn_impl(train_emb, train_labels, eval_emb, eval_labels, k, false);
}

KnnResult knn_eval_loo(const Matrix& emb, std::span<const int> labels, int k) {
  return knn_impl(emb, labels, emb, labels, k, true);
}

CollapseReport collapse_verdict(double center_norm, double mean_residual_norm, const RowVector& per_dimension_std,
                                double delta, const CollapseThresholds& thresholds) {
  if (!(thresholds.center_hi > 0.0 && thresholds.center_hi < 1.0) ||
      !(thresholds.std_lo > 0.0 && thresholds.std_lo < 1.0)) {
    throw ParameterError("collapse_verdict: thresholds must lie in (0, 1)");
  }
  CollapseReport r;
  r.center_norm = center_norm;
  r.mean_residual_norm = mean_residual_norm;
  r.per_dimension_std = per_dimension_std;
  r.std_mean = per_dimension_std.size() > 0 ? per_dimension_std.mean() : 0.0;
  r.delta_dist = delta;
  r.collapsed = center_norm > thresholds.center_hi && r.std_mean < thresholds.std_lo;
  return r;
}

CollapseReport collapse_report(const Matrix& embeddings, const RowVector* previous_mean,
                               const CollapseThresholds& thresholds) {
  const CenterEstimate c = estimate_center(embeddings);
  const ResidualStats st = residual_stats(embeddings, c);
  const double d = previous_mean != nullptr ? delta_dist(c.s_hat, *previous_mean) : 0.0;
  return collapse_verdict(c.norm, st.mean_residual_norm, st.per_dimension_std, d, thresholds);
}

}  // namespace sslab
