#pragma once

// Self-supervised objectives over embeddings and the model pieces that feed
// them. Every loss returns a 1x1 tensor on the gradient record; targets that
// must not receive gradient go through ad::stop_gradient so grad_check can
// freeze them.

#include "sslab/autodiff.hpp"
#include "sslab/layers.hpp"

#include <limits>
#include <string>
#include <vector>

namespace sslab {

enum class LossKind { invariance, triplet, infonce, simsiam, byol, dino, swav, barlow_twins, simple };
enum class CenterPenalty { squared_norm, norm };
enum class BtLambdaMode { fixed, inverse_sqrt_batch };

std::string to_string(LossKind k);
LossKind loss_kind_from_string(const std::string& s);
std::string to_string(CenterPenalty p);
CenterPenalty center_penalty_from_string(const std::string& s);
std::string to_string(BtLambdaMode m);
BtLambdaMode bt_lambda_mode_from_string(const std::string& s);

struct LossConfig {
  LossKind kind = LossKind::simsiam;

  double temperature = 0.1;  // InfoNCE and SwAV
  double student_temperature = 0.1;
  double teacher_temperature = 0.04;
  double triplet_margin = std::numeric_limits<double>::infinity();

  double bt_lambda = 5e-3;
  BtLambdaMode bt_lambda_mode = BtLambdaMode::fixed;
  double bn_eps = 1e-12;

  double simple_lambda = -1.0;
  CenterPenalty simple_penalty = CenterPenalty::squared_norm;
  // 0 uses the current batch center; > 0 blends in an EMA of past batches.
  double simple_center_momentum = 0.0;

  double ema_momentum = 0.99;
  double center_momentum = 0.9;

  int sinkhorn_iters = 3;
  double sinkhorn_eps = 0.05;

  bool use_stop_gradient = true;
  bool use_predictor = true;
  bool use_centering = true;
  bool use_decorrelation = true;

  // Throws ParameterError naming the offending field.
  void validate() const;
  bool needs_predictor() const;
  bool needs_ema_twin() const;
  bool needs_prototypes() const;
  bool needs_dino_center() const;
};

// -- embedding-level losses -----------------------------------------------------

// mean_i -<z_i, zw_i>.
ad::Tensor invariance_loss(const ad::Tensor& z, const ad::Tensor& z_w);

// Finite margin: mean of max(|a-p|^2 - |a-n|^2 + margin, 0) / 2. Infinite
// margin: mean of -<a,p> + <a,n>.
ad::Tensor triplet_loss(const ad::Tensor& z_a, const ad::Tensor& z_p, const ad::Tensor& z_n,
                        double margin = std::numeric_limits<double>::infinity());

// Within-batch negatives: row i of z_p is the positive, every other row a negative.
ad::Tensor infonce_loss(const ad::Tensor& z_a, const ad::Tensor& z_p, double temperature);
// negatives[k] holds the k-th negative for each anchor row.
ad::Tensor infonce_loss(const ad::Tensor& z_a, const ad::Tensor& z_p,
                        const std::vector<ad::Tensor>& negatives, double temperature);
// Negatives shared by every anchor (n_neg x D).
ad::Tensor infonce_loss_bank(const ad::Tensor& z_a, const ad::Tensor& z_p, const ad::Tensor& bank,
                             double temperature);

// Cross-correlation loss on column-standardised inputs:
// sum_i (1 - C_ii)^2 + lambda * sum_{i != j} C_ij^2 with C = z_a^T z_b / m.
ad::Tensor barlow_twins_loss(const ad::Tensor& z_a, const ad::Tensor& z_b, double lambda,
                             bool use_decorrelation = true);

// Batch center over the rows of both views.
ad::Tensor batch_center(const ad::Tensor& z, const ad::Tensor& z_w);

// 0.5 * (invariance(z, z_w) - lambda * P(s)) where P is |s|^2 or |s|. With
// prior_center set, s = momentum * prior + (1 - momentum) * batch_center.
ad::Tensor simple_objective(const ad::Tensor& z, const ad::Tensor& z_w, double lambda = -1.0,
                            CenterPenalty penalty = CenterPenalty::squared_norm,
                            const RowVector* prior_center = nullptr, double momentum = 0.0);

// Entropic assignment: Q = exp(scores / eps), then `iters` rounds of column
// then row renormalisation. Rows of the result sum to 1, columns to ~m/K.
Matrix sinkhorn_knopp(const Matrix& scores, double eps, int iters);
ad::Tensor sinkhorn_knopp(const ad::Tensor& scores, double eps, int iters);

// -- model-level objectives ------------------------------------------------------

// 0.5 * (inv(p_a, sg(z_b)) + inv(p_b, sg(z_a))); p = z without predictor, sg
// dropped without stop-gradient.
ad::Tensor simsiam_loss(const EncoderStack& enc, const PredictorHead* pred, const ad::Tensor& x_a,
                        const ad::Tensor& x_b, bool use_stop_gradient = true, bool use_predictor = true);

// Online stream with predictor against the twin's embedding of the other
// view, symmetrised. The twin is evaluated outside the record.
ad::Tensor byol_loss(const EncoderStack& online, const PredictorHead& pred, const EmaTwin& twin,
                     const ad::Tensor& x_a, const ad::Tensor& x_b);

struct DinoCenterState {
  RowVector center;
  double momentum = 0.9;

  static DinoCenterState zeros(Index dim, double momentum);
  // C <- momentum * C + (1 - momentum) * teacher_mean
  void update(const RowVector& teacher_mean);
};

struct DinoLossResult {
  ad::Tensor loss;
  RowVector teacher_mean;  // feed to DinoCenterState::update after the step
};

// Cross-entropy between sg(softmax((t - C) / tau_t)) from the twin and
// log_softmax(s / tau_s) from the student, symmetrised over the two views.
DinoLossResult dino_loss(const EncoderStack& student, const EmaTwin& twin, const DinoCenterState& center,
                         const ad::Tensor& x_a, const ad::Tensor& x_b, double student_temperature,
                         double teacher_temperature, bool use_centering = true);

// Scores are cosine similarities against the L2-normalised prototypes.
ad::Tensor swav_loss(const EncoderStack& enc, const PrototypeBank& protos, const ad::Tensor& x_a,
                     const ad::Tensor& x_b, double temperature, double sinkhorn_eps, int sinkhorn_iters);

// Raw encoder outputs -> batch_norm_cols (no affine) -> barlow_twins_loss.
ad::Tensor barlow_twins_objective(const EncoderStack& enc, const ad::Tensor& x_a, const ad::Tensor& x_b,
                                  double lambda, bool use_decorrelation = true, double bn_eps = 1e-12);

// lambda for a batch of m rows under the given mode.
double effective_bt_lambda(const LossConfig& cfg, Index batch_rows);

}  // namespace sslab
