#include "sslab/losses.hpp"

#include <cmath>

namespace sslab {

using ad::Tensor;

std::string to_string(LossKind k) {
  switch (k) {
    case LossKind::invariance: return "invariance";
    case LossKind::triplet: return "triplet";
    case LossKind::infonce: return "infonce";
    case LossKind::simsiam: return "simsiam";
    case LossKind::byol: return "byol";
    case LossKind::dino: return "dino";
    case LossKind::swav: return "swav";
    case LossKind::barlow_twins: return "barlow_twins";
    case LossKind::simple: return "simple";
  }
  return "simsiam";
}

LossKind loss_kind_from_string(const std::string& s) {
  for (auto k : {LossKind::invariance, LossKind::triplet, LossKind::infonce, LossKind::simsiam, LossKind::byol,
                 LossKind::dino, LossKind::swav, LossKind::barlow_twins, LossKind::simple}) {
    if (to_string(k) == s) return k;
  }
  throw ParameterError("unknown loss kind '" + s + "'");
}

std::string to_string(CenterPenalty p) { return p == CenterPenalty::norm ? "norm" : "squared_norm"; }

CenterPenalty center_penalty_from_string(const std::string& s) {
  if (s == "squared_norm") return CenterPenalty::squared_norm;
  if (s == "norm") return CenterPenalty::norm;
  throw ParameterError("unknown center penalty '" + s + "'");
}

std::string to_string(BtLambdaMode m) { return m == BtLambdaMode::inverse_sqrt_batch ? "inverse_sqrt_batch" : "fixed"; }

BtLambdaMode bt_lambda_mode_from_string(const std::string& s) {
  if (s == "fixed") return BtLambdaMode::fixed;
  if (s == "inverse_sqrt_batch") return BtLambdaMode::inverse_sqrt_batch;
  throw ParameterError("unknown lambda mode '" + s + "'");
}

void LossConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0)) throw ParameterError(std::string("loss.") + name + " must be > 0");
  };
  auto unit_interval = [](double v, const char* name) {
    if (!(v >= 0.0 && v < 1.0)) throw ParameterError(std::string("loss.") + name + " must lie in [0, 1)");
  };
  positive(temperature, "temperature");
  positive(student_temperature, "student_temperature");
  positive(teacher_temperature, "teacher_temperature");
  positive(sinkhorn_eps, "sinkhorn_eps");
  positive(bn_eps, "bn_eps");
  if (sinkhorn_iters < 1) throw ParameterError("loss.sinkhorn_iters must be >= 1");
  if (!(triplet_margin >= 0.0)) throw ParameterError("loss.triplet_margin must be >= 0");
  if (!(bt_lambda >= 0.0)) throw ParameterError("loss.bt_lambda must be >= 0");
  if (!std::isfinite(simple_lambda)) throw ParameterError("loss.simple_lambda must be finite");
  unit_interval(ema_momentum, "ema_momentum");
  unit_interval(center_momentum, "center_momentum");
  unit_interval(simple_center_momentum, "simple_center_momentum");
}

bool LossConfig::needs_predictor() const {
  return kind == LossKind::byol || (kind == LossKind::simsiam && use_predictor);
}
bool LossConfig::needs_ema_twin() const { return kind == LossKind::byol || kind == LossKind::dino; }
bool LossConfig::needs_prototypes() const { return kind == LossKind::swav; }
bool LossConfig::needs_dino_center() const { return kind == LossKind::dino; }

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(what) + ": shape mismatch " + shape_string(a.rows(), a.cols()) + " vs " +
                         shape_string(b.rows(), b.cols()));
  }
}

Tensor squared_distance_rows(const Tensor& a, const Tensor& b) { return ad::row_sum(ad::square(ad::sub(a, b))); }

Tensor constant_target(const Matrix& m) { return ad::stop_gradient(Tensor::constant(m)); }

}  // namespace

Tensor invariance_loss(const Tensor& z, const Tensor& z_w) {
  require_same_shape(z, z_w, "invariance_loss");
  return ad::scale(ad::mean(ad::rowwise_dot(z, z_w)), -1.0);
}

Tensor triplet_loss(const Tensor& z_a, const Tensor& z_p, const Tensor& z_n, double margin) {
  require_same_shape(z_a, z_p, "triplet_loss");
  require_same_shape(z_a, z_n, "triplet_loss");
  if (!(margin >= 0.0)) throw ParameterError("triplet_loss: margin must be >= 0");
  if (std::isinf(margin)) {
    return ad::mean(ad::sub(ad::rowwise_dot(z_a, z_n), ad::rowwise_dot(z_a, z_p)));
  }
  Tensor gap = ad::add_scalar(ad::sub(squared_distance_rows(z_a, z_p), squared_distance_rows(z_a, z_n)), margin);
  return ad::scale(ad::mean(ad::relu(gap)), 0.5);
}

Tensor infonce_loss(const Tensor& z_a, const Tensor& z_p, double temperature) {
  require_same_shape(z_a, z_p, "infonce_loss");
  if (!(temperature > 0.0)) throw ParameterError("infonce_loss: temperature must be > 0");
  Tensor sims = ad::matmul(z_a, ad::transpose(z_p));
  Tensor positive = ad::diagonal(sims);
  return ad::scale(ad::mean(ad::sub(ad::logsumexp_rows(sims, temperature), positive)), 1.0 / temperature);
}

Tensor infonce_loss(const Tensor& z_a, const Tensor& z_p, const std::vector<Tensor>& negatives,
                    double temperature) {
  require_same_shape(z_a, z_p, "infonce_loss");
  if (!(temperature > 0.0)) throw ParameterError("infonce_loss: temperature must be > 0");
  Tensor positive = ad::rowwise_dot(z_a, z_p);
  std::vector<Tensor> cols{positive};
  for (const auto& n : negatives) {
    require_same_shape(z_a, n, "infonce_loss negative");
    cols.push_back(ad::rowwise_dot(z_a, n));
  }
  Tensor logits = ad::concat_cols(cols);
  return ad::scale(ad::mean(ad::sub(ad::logsumexp_rows(logits, temperature), positive)), 1.0 / temperature);
}

Tensor infonce_loss_bank(const Tensor& z_a, const Tensor& z_p, const Tensor& bank, double temperature) {
  require_same_shape(z_a, z_p, "infonce_loss_bank");
  if (bank.cols() != z_a.cols()) throw DimensionError("infonce_loss_bank: bank dimension mismatch");
  if (!(temperature > 0.0)) throw ParameterError("infonce_loss_bank: temperature must be > 0");
  Tensor positive = ad::rowwise_dot(z_a, z_p);
  Tensor logits = ad::concat_cols({positive, ad::matmul(z_a, ad::transpose(bank))});
  return ad::scale(ad::mean(ad::sub(ad::logsumexp_rows(logits, temperature), positive)), 1.0 / temperature);
}

Tensor barlow_twins_loss(const Tensor& z_a, const Tensor& z_b, double lambda, bool use_decorrelation) {
  require_same_shape(z_a, z_b, "barlow_twins_loss");
  if (z_a.rows() < 2) throw BatchSizeError("barlow_twins_loss: need at least 2 rows");
  const double m = static_cast<double>(z_a.rows());
  Tensor corr = ad::scale(ad::matmul(ad::transpose(z_a), z_b), 1.0 / m);
  Tensor diag = ad::diagonal(corr);
  Tensor invariance = ad::sum(ad::square(ad::add_scalar(ad::scale(diag, -1.0), 1.0)));
  if (!use_decorrelation) return invariance;
  Tensor off_diagonal = ad::sub(ad::sum(ad::square(corr)), ad::sum(ad::square(diag)));
  return ad::add(invariance, ad::scale(off_diagonal, lambda));
}

Tensor batch_center(const Tensor& z, const Tensor& z_w) { return ad::col_mean(ad::concat_rows(z, z_w)); }

Tensor simple_objective(const Tensor& z, const Tensor& z_w, double lambda, CenterPenalty penalty,
                        const RowVector* prior_center, double momentum) {
  Tensor inv = invariance_loss(z, z_w);
  Tensor center = batch_center(z, z_w);
  if (prior_center != nullptr) {
    if (prior_center->size() != z.cols()) throw DimensionError("simple_objective: prior center dimension mismatch");
    Matrix prior(1, prior_center->size());
    prior.row(0) = *prior_center * momentum;
    center = ad::add(ad::scale(center, 1.0 - momentum), Tensor::constant(std::move(prior)));
  }
  Tensor sq = ad::sum(ad::square(center));
  Tensor pen = penalty == CenterPenalty::squared_norm ? sq : ad::sqrt(sq);
  return ad::scale(ad::sub(inv, ad::scale(pen, lambda)), 0.5);
}

Matrix sinkhorn_knopp(const Matrix& scores, double eps, int iters) {
  if (iters < 1) throw ParameterError("sinkhorn_knopp: iters must be >= 1");
  if (!(eps > 0.0)) throw ParameterError("sinkhorn_knopp: eps must be > 0");
  if (!scores.allFinite()) throw NumericError("sinkhorn_knopp: non-finite scores");
  if (scores.size() == 0) throw DimensionError("sinkhorn_knopp: empty scores");
  const double m = static_cast<double>(scores.rows());
  const double k = static_cast<double>(scores.cols());
  Matrix q = ((scores.array() - scores.maxCoeff()) / eps).exp().matrix();
  q /= q.sum();
  for (int it = 0; it < iters; ++it) {
    const RowVector col = q.colwise().sum();
    q = q.array().rowwise() / (col.array() * k);
    const Eigen::VectorXd row = q.rowwise().sum();
    q = q.array().colwise() / (row.array() * m);
  }
  q *= m;
  return q;
}

Tensor sinkhorn_knopp(const Tensor& scores, double eps, int iters) {
  return constant_target(sinkhorn_knopp(scores.value(), eps, iters));
}

Tensor simsiam_loss(const EncoderStack& enc, const PredictorHead* pred, const Tensor& x_a, const Tensor& x_b,
                    bool use_stop_gradient, bool use_predictor) {
  if (use_predictor && pred == nullptr) throw ContractError("simsiam_loss: predictor requested but not supplied");
  Tensor z_a = enc.forward(x_a);
  Tensor z_b = enc.forward(x_b);
  Tensor p_a = use_predictor ? pred->forward(z_a) : z_a;
  Tensor p_b = use_predictor ? pred->forward(z_b) : z_b;
  Tensor t_a = use_stop_gradient ? ad::stop_gradient(z_a) : z_a;
  Tensor t_b = use_stop_gradient ? ad::stop_gradient(z_b) : z_b;
  return ad::scale(ad::add(invariance_loss(p_a, t_b), invariance_loss(p_b, t_a)), 0.5);
}

Tensor byol_loss(const EncoderStack& online, const PredictorHead& pred, const EmaTwin& twin, const Tensor& x_a,
                 const Tensor& x_b) {
  Tensor p_a = pred.forward(online.forward(x_a));
  Tensor p_b = pred.forward(online.forward(x_b));
  Tensor t_a = constant_target(twin.embed(x_a.value()));
  Tensor t_b = constant_target(twin.embed(x_b.value()));
  return ad::scale(ad::add(invariance_loss(p_a, t_b), invariance_loss(p_b, t_a)), 0.5);
}

DinoCenterState DinoCenterState::zeros(Index dim, double momentum) {
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ParameterError("DinoCenterState: momentum must lie in [0, 1)");
  return {RowVector::Zero(dim), momentum};
}

void DinoCenterState::update(const RowVector& teacher_mean) {
  if (teacher_mean.size() != center.size()) throw DimensionError("DinoCenterState::update: dimension mismatch");
  center = momentum * center + (1.0 - momentum) * teacher_mean;
}

namespace {

Matrix teacher_distribution(const Matrix& teacher, const RowVector& center, double temperature, bool centered) {
  Matrix logits = teacher;
  if (centered) logits.rowwise() -= center;
  Matrix p(logits.rows(), logits.cols());
  for (Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    p.row(i) = ((logits.row(i).array() - mx) / temperature).exp().matrix();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

Tensor cross_entropy_rows(const Tensor& target, const Tensor& log_probs) {
  return ad::scale(ad::mean(ad::rowwise_dot(target, log_probs)), -1.0);
}

}  // namespace

DinoLossResult dino_loss(const EncoderStack& student, const EmaTwin& twin, const DinoCenterState& center,
                         const Tensor& x_a, const Tensor& x_b, double student_temperature,
                         double teacher_temperature, bool use_centering) {
  if (!(student_temperature > 0.0) || !(teacher_temperature > 0.0)) {
    throw ParameterError("dino_loss: temperatures must be > 0");
  }
  const Matrix t_a = twin.embed(x_a.value());
  const Matrix t_b = twin.embed(x_b.value());
  if (center.center.size() != t_a.cols()) throw DimensionError("dino_loss: center dimension mismatch");
  Tensor q_a = constant_target(teacher_distribution(t_a, center.center, teacher_temperature, use_centering));
  Tensor q_b = constant_target(teacher_distribution(t_b, center.center, teacher_temperature, use_centering));
  Tensor logp_a = ad::log_softmax_rows(student.forward(x_a), student_temperature);
  Tensor logp_b = ad::log_softmax_rows(student.forward(x_b), student_temperature);
  Tensor loss = ad::scale(ad::add(cross_entropy_rows(q_b, logp_a), cross_entropy_rows(q_a, logp_b)), 0.5);
  RowVector teacher_mean = (t_a.colwise().sum() + t_b.colwise().sum()) / static_cast<double>(t_a.rows() + t_b.rows());
  return {loss, teacher_mean};
}

Tensor swav_loss(const EncoderStack& enc, const PrototypeBank& protos, const Tensor& x_a, const Tensor& x_b,
                 double temperature, double sinkhorn_eps, int sinkhorn_iters) {
  if (!(temperature > 0.0)) throw ParameterError("swav_loss: temperature must be > 0");
  if (protos.dim() != enc.output_dim()) throw DimensionError("swav_loss: prototype dimension mismatch");
  Tensor c = ad::l2_normalize_rows(protos.prototypes);
  Tensor scores_a = ad::matmul(enc.forward(x_a), ad::transpose(c));
  Tensor scores_b = ad::matmul(enc.forward(x_b), ad::transpose(c));
  Tensor q_a = sinkhorn_knopp(scores_a, sinkhorn_eps, sinkhorn_iters);
  Tensor q_b = sinkhorn_knopp(scores_b, sinkhorn_eps, sinkhorn_iters);
  Tensor loss_a = cross_entropy_rows(q_b, ad::log_softmax_rows(scores_a, temperature));
  Tensor loss_b = cross_entropy_rows(q_a, ad::log_softmax_rows(scores_b, temperature));
  return ad::scale(ad::add(loss_a, loss_b), 0.5);
}

Tensor barlow_twins_objective(const EncoderStack& enc, const Tensor& x_a, const Tensor& x_b, double lambda,
                              bool use_decorrelation, double bn_eps) {
  Tensor a = ad::batch_norm_cols(enc.forward_raw(x_a), bn_eps);
  Tensor b = ad::batch_norm_cols(enc.forward_raw(x_b), bn_eps);
  return barlow_twins_loss(a, b, lambda, use_decorrelation);
}

double effective_bt_lambda(const LossConfig& cfg, Index batch_rows) {
  if (cfg.bt_lambda_mode == BtLambdaMode::inverse_sqrt_batch) {
    return 1.0 / std::sqrt(static_cast<double>(std::max<Index>(batch_rows, 1)));
  }
  return cfg.bt_lambda;
}

}  // namespace sslab
