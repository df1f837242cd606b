#include "sslab/registry.hpp"

#include <functional>
#include <map>

namespace sslab {

namespace {

ExperimentConfig blobs_base(const std::string& name, LossKind kind) {
  ExperimentConfig c;
  c.name = name;
  c.dataset.kind = DatasetKind::blobs;
  c.dataset.n_per_class = 100;
  c.dataset.num_classes = 3;
  c.dataset.sigma = 1.0;
  c.dataset.radius = 2.0;
  c.model.encoder_dims = {2, 64, 2};
  c.loss.kind = kind;
  c.optimizer.lr = 0.05;
  c.optimizer.batch_mode = BatchMode::mini_batch;
  c.optimizer.batch_size = 50;
  c.optimizer.epochs = 200;
  return c;
}

ExperimentConfig moons_base(const std::string& name, LossKind kind) {
  ExperimentConfig c = blobs_base(name, kind);
  c.dataset.kind = DatasetKind::moons;
  c.dataset.noise = 0.1;
  c.dataset.three_classes = true;
  return c;
}

ExperimentConfig on_dataset(const std::string& dataset, const std::string& name, LossKind kind) {
  return dataset == "moons" ? moons_base(name, kind) : blobs_base(name, kind);
}

// Linear D -> D -> D predictor starting near the identity. With a small
// learning rate it stays close to its start, so the online branch sees
// almost no predictor at all.
void use_linear_predictor(ExperimentConfig& c) {
  c.model.predictor_hidden = static_cast<int>(c.embedding_dim());
  c.model.predictor_activation = Activation::identity;
  c.model.predictor_init = InitScheme::near_identity;
}

Claim gap(const std::string& name, const std::string& metric, const std::string& lhs, const std::string& rhs,
          double margin) {
  Claim c;
  c.name = name;
  c.metric = metric;
  c.kind = ClaimKind::gap;
  c.lhs = lhs;
  c.rhs = rhs;
  c.margin = margin;
  return c;
}

Claim tolerance(const std::string& name, const std::string& metric, const std::string& lhs, const std::string& rhs,
                double tol, bool pooled_std = false) {
  Claim c = gap(name, metric, lhs, rhs, tol);
  c.kind = ClaimKind::tolerance;
  c.add_pooled_std = pooled_std;
  return c;
}

Claim bound(const std::string& name, const std::string& metric, const std::string& lhs, ClaimKind kind, double value,
            Reduction red = Reduction::final) {
  Claim c;
  c.name = name;
  c.metric = metric;
  c.kind = kind;
  c.lhs = lhs;
  c.value = value;
  c.reduce = red;
  return c;
}

NamedExperiment fig3_simple_vs_simsiam() {
  NamedExperiment e{"fig3-simple-vs-simsiam", "simple objective (lambda_L = -1) against SimSiam on blobs and moons",
                    {}, {}};
  for (const std::string ds : {"blobs", "moons"}) {
    ExperimentConfig simple = on_dataset(ds, e.key + "/" + ds + "-simple", LossKind::simple);
    simple.model.encoder_dims = {2, 64, 64, 2};
    simple.optimizer.lr = 0.1;
    simple.loss.simple_lambda = -1.0;
    ExperimentConfig simsiam = simple;
    simsiam.name = e.key + "/" + ds + "-simsiam";
    simsiam.loss.kind = LossKind::simsiam;
    e.variants.push_back(simple);
    e.variants.push_back(simsiam);
    e.claims.push_back(tolerance(ds + ": simple knn >= simsiam knn - pooled std", "knn_accuracy", ds + "-simple",
                                 ds + "-simsiam", 0.0, true));
    e.claims.push_back(bound(ds + ": simple center_norm < 0.3", "center_norm", ds + "-simple", ClaimKind::below, 0.3));
  }
  return e;
}

NamedExperiment fig4_simsiam_ablations() {
  NamedExperiment e{"fig4-simsiam-ablations", "SimSiam with and without predictor and stop-gradient", {}, {}};
  for (const std::string ds : {"blobs", "moons"}) {
    e.variants.push_back(on_dataset(ds, e.key + "/" + ds + "-standard", LossKind::simsiam));
    ExperimentConfig no_pred = on_dataset(ds, e.key + "/" + ds + "-no-predictor", LossKind::simsiam);
    no_pred.loss.use_predictor = false;
    e.variants.push_back(no_pred);
    ExperimentConfig no_sg = on_dataset(ds, e.key + "/" + ds + "-no-stop-gradient", LossKind::simsiam);
    no_sg.loss.use_stop_gradient = false;
    e.variants.push_back(no_sg);
    for (const std::string ab : {"no-predictor", "no-stop-gradient"}) {
      e.claims.push_back(gap(ds + ": center_norm " + ab + " > standard + 0.3", "center_norm", ds + "-" + ab,
                             ds + "-standard", 0.3));
      e.claims.push_back(gap(ds + ": knn standard > " + ab + " + 0.2", "knn_accuracy", ds + "-standard",
                             ds + "-" + ab, 0.2));
    }
  }
  return e;
}

NamedExperiment fig7_byol_momentum() {
  NamedExperiment e{"fig7-byol-momentum", "BYOL on blobs with EMA momentum 0.5, 0.9, 0.99", {}, {}};
  const std::vector<std::pair<std::string, double>> grid{{"eps-0.5", 0.5}, {"eps-0.9", 0.9}, {"eps-0.99", 0.99}};
  for (const auto& [label, eps] : grid) {
    ExperimentConfig c = blobs_base(e.key + "/" + label, LossKind::byol);
    use_linear_predictor(c);
    c.optimizer.multipliers.predictor = 0.01;
    c.loss.ema_momentum = eps;
    e.variants.push_back(c);
  }
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
    const auto& lo = grid[i].first;
    const auto& hi = grid[i + 1].first;
    e.claims.push_back(tolerance("center_norm " + lo + " >= " + hi, "center_norm", lo, hi, 0.0));
    e.claims.push_back(tolerance("knn " + hi + " >= " + lo, "knn_accuracy", hi, lo, 0.0));
  }
  return e;
}

NamedExperiment s21_collapse_grid() {
  NamedExperiment e{"s21-collapse-grid",
                    "pure invariance on 100 Gaussian points in 3-D, 10 augmentations each, projector 3->16->2",
                    {}, {}};
  for (const std::string mode : {"mini-batch", "full-batch"}) {
    for (const std::string aug : {"centered", "shifted"}) {
      ExperimentConfig c;
      c.name = e.key + "/" + mode + "-" + aug;
      c.dataset.kind = DatasetKind::gaussian;
      c.dataset.count = 100;
      c.dataset.dim = 3;
      c.augmentation.kind = aug == "centered" ? AugmentationKind::centered_jitter : AugmentationKind::shifted_jitter;
      c.augmentation.sigma = 1.0;
      c.augmentation.per_point = 10;
      c.model.encoder_dims = {3, 16, 2};
      c.loss.kind = LossKind::invariance;
      c.optimizer.lr = 0.1;
      if (mode == "mini-batch") {
        c.optimizer.batch_mode = BatchMode::mini_batch;
        c.optimizer.batch_size = 50;
        c.optimizer.epochs = 200;
      } else {
        c.optimizer.batch_mode = BatchMode::full_batch;
        c.optimizer.batch_size = 1000;
        c.optimizer.epochs = 500;
      }
      e.variants.push_back(c);
      const std::string v = mode + "-" + aug;
      e.claims.push_back(bound(v + ": center_norm > 0.8", "center_norm", v, ClaimKind::above, 0.8));
      e.claims.push_back(bound(v + ": std_mean < 0.05", "std_mean", v, ClaimKind::below, 0.05));
    }
  }
  return e;
}

NamedExperiment s22_dino_centering() {
  NamedExperiment e{"s22-dino-centering", "DINO on blobs with and without teacher centering", {}, {}};
  ExperimentConfig with = blobs_base(e.key + "/centering", LossKind::dino);
  with.model.encoder_dims = {2, 32, 8};
  ExperimentConfig without = with;
  without.name = e.key + "/no-centering";
  without.loss.use_centering = false;
  e.variants = {with, without};
  e.claims.push_back(gap("center_norm no-centering > centering + 0.3", "center_norm", "no-centering", "centering", 0.3));
  return e;
}

NamedExperiment s24_predictor_lr() {
  NamedExperiment e{"s24-predictor-lr", "SimSiam on blobs with predictor learning rate at 1%, 10%, 100%", {}, {}};
  const std::vector<std::pair<std::string, double>> grid{{"mult-0.01", 0.01}, {"mult-0.1", 0.1}, {"mult-1", 1.0}};
  for (const auto& [label, mult] : grid) {
    ExperimentConfig c = blobs_base(e.key + "/" + label, LossKind::simsiam);
    use_linear_predictor(c);
    c.optimizer.epochs = 400;
    c.optimizer.multipliers.predictor = mult;
    e.variants.push_back(c);
  }
  e.claims.push_back(bound("mult-0.01: center_norm > 0.8", "center_norm", "mult-0.01", ClaimKind::above, 0.8));
  e.claims.push_back(bound("mult-0.01: std_mean < 0.05", "std_mean", "mult-0.01", ClaimKind::below, 0.05));
  e.claims.push_back(bound("mult-1: center_norm < 0.8", "center_norm", "mult-1", ClaimKind::below, 0.8));
  e.claims.push_back(gap("knn mult-1 > mult-0.01 + 0.2", "knn_accuracy", "mult-1", "mult-0.01", 0.2));
  return e;
}

NamedExperiment bt_no_decor() {
  NamedExperiment e{"bt-no-decor", "Barlow Twins on blobs with and without the off-diagonal term", {}, {}};
  ExperimentConfig full = blobs_base(e.key + "/full", LossKind::barlow_twins);
  ExperimentConfig nodecor = full;
  nodecor.name = e.key + "/no-decorrelation";
  nodecor.loss.use_decorrelation = false;
  e.variants = {full, nodecor};
  e.claims.push_back(bound("no-decorrelation knn > chance + 0.15", "knn_accuracy", "no-decorrelation",
                           ClaimKind::above, 1.0 / 3.0 + 0.15));
  e.claims.push_back(gap("knn full > no-decorrelation", "knn_accuracy", "full", "no-decorrelation", 0.0));
  return e;
}

NamedExperiment swav_fixed_protos() {
  NamedExperiment e{"swav-fixed-protos", "SwAV on blobs with learnable and frozen prototypes", {}, {}};
  ExperimentConfig learn = blobs_base(e.key + "/learnable", LossKind::swav);
  learn.model.num_prototypes = 4;
  learn.loss.temperature = 0.5;
  learn.model.trainable_prototypes = true;
  ExperimentConfig fixed = learn;
  fixed.name = e.key + "/fixed";
  fixed.model.trainable_prototypes = false;
  e.variants = {learn, fixed};
  e.claims.push_back(bound("fixed: max center_norm < 0.5", "center_norm", "fixed", ClaimKind::below, 0.5,
                           Reduction::max));
  e.claims.push_back(tolerance("knn learnable >= fixed", "knn_accuracy", "learnable", "fixed", 0.0));
  return e;
}

const std::map<std::string, std::function<NamedExperiment()>>& registry() {
  static const std::map<std::string, std::function<NamedExperiment()>> r{
      {"fig3-simple-vs-simsiam", fig3_simple_vs_simsiam},
      {"fig4-simsiam-ablations", fig4_simsiam_ablations},
      {"fig7-byol-momentum", fig7_byol_momentum},
      {"s21-collapse-grid", s21_collapse_grid},
      {"s22-dino-centering", s22_dino_centering},
      {"s24-predictor-lr", s24_predictor_lr},
      {"bt-no-decor", bt_no_decor},
      {"swav-fixed-protos", swav_fixed_protos},
  };
  return r;
}

}  // namespace

const ExperimentConfig& NamedExperiment::variant(const std::string& short_name) const {
  for (const auto& v : variants) {
    if (variant_short_name(v) == short_name) return v;
  }
  throw UnknownExperimentError(key + ": no variant '" + short_name + "'");
}

std::string variant_short_name(const ExperimentConfig& cfg) {
  const auto slash = cfg.name.rfind('/');
  return slash == std::string::npos ? cfg.name : cfg.name.substr(slash + 1);
}

std::vector<std::string> named_experiment_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, _] : registry()) keys.push_back(k);
  return keys;
}

NamedExperiment named_experiment(const std::string& key) {
  const auto& r = registry();
  auto it = r.find(key);
  if (it == r.end()) {
    std::string msg = "unknown experiment '" + key + "'; available:";
    for (const auto& k : named_experiment_keys()) msg += " " + k;
    throw UnknownExperimentError(msg);
  }
  NamedExperiment e = it->second();
  for (const auto& v : e.variants) v.validate();
  return e;
}

}  // namespace sslab
