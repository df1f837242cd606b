#include "sslab/runner.hpp"

#include "sslab/checkpoint.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>

namespace sslab {

using ad::Tensor;

std::string format_metric(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string to_csv_row(const MetricsRecord& r) {
  auto opt = [](const std::optional<double>& v) { return v ? format_metric(*v) : std::string(); };
  std::string s = std::to_string(r.seed) + "," + std::to_string(r.epoch) + "," + std::to_string(r.step);
  for (const auto* v : {&r.loss, &r.center_norm, &r.mean_residual_norm, &r.std_mean, &r.delta_dist,
                        &r.knn_accuracy, &r.wall_time_ms}) {
    s += ",";
    s += opt(*v);
  }
  return s;
}

namespace {

// Sub-seed streams derived from one run seed.
enum SeedStream : std::uint64_t {
  kDatasetStream = 1,
  kAugmentStream,
  kEncoderStream,
  kPredictorStream,
  kPrototypeStream,
  kSamplerStream,
  kPairStream,
};

Matrix gather_rows(const Matrix& m, std::span<const Index> rows) {
  Matrix out(static_cast<Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = m.row(rows[i]);
  return out;
}

Tensor input(const Matrix& x) { return Tensor::constant(x); }

}  // namespace

TrainState TrainState::create(const ExperimentConfig& cfg, std::uint64_t run_seed) {
  TrainState st;
  const auto& m = cfg.model;
  const auto& loss = cfg.loss;
  const bool normalize = loss.kind != LossKind::barlow_twins;
  st.encoder = EncoderStack::init(m.encoder_dims, mix_seed(run_seed, kEncoderStream), m.init, m.activation, normalize);
  st.params.add_encoder(st.encoder, "encoder", ParamGroup::encoder);

  const int dim = static_cast<int>(cfg.embedding_dim());
  if (loss.needs_predictor()) {
    const int hidden = m.predictor_hidden > 0 ? m.predictor_hidden : 4 * dim;
    st.predictor = PredictorHead::init(dim, hidden, mix_seed(run_seed, kPredictorStream), m.predictor_activation,
                                       cfg.optimizer.multipliers.predictor, m.predictor_init);
    st.params.add_encoder(st.predictor->net, "predictor", ParamGroup::predictor);
  }
  if (loss.needs_ema_twin()) st.twin = EmaTwin::from(st.encoder, loss.ema_momentum);
  if (loss.needs_prototypes()) {
    st.prototypes = init_prototypes(m.num_prototypes, dim, mix_seed(run_seed, kPrototypeStream),
                                    m.trainable_prototypes);
    st.params.add("prototypes", st.prototypes->prototypes, ParamGroup::prototypes);
  }
  if (loss.needs_dino_center()) st.dino_center = DinoCenterState::zeros(dim, loss.center_momentum);
  st.check_components(loss);
  return st;
}

void TrainState::check_components(const LossConfig& loss) const {
  auto check = [](bool present, bool needed, const char* what) {
    if (present != needed) {
      throw ContractError(std::string("TrainState: ") + what + (needed ? " missing" : " present but unused"));
    }
  };
  check(predictor.has_value(), loss.needs_predictor(), "predictor");
  check(twin.has_value(), loss.needs_ema_twin(), "EMA twin");
  check(prototypes.has_value(), loss.needs_prototypes(), "prototype bank");
  check(dino_center.has_value(), loss.needs_dino_center(), "DINO center");
}

std::vector<NamedMatrix> TrainState::snapshot() const {
  std::vector<NamedMatrix> out = encoder.snapshot("encoder");
  if (predictor) {
    auto p = predictor->net.snapshot("predictor");
    out.insert(out.end(), p.begin(), p.end());
  }
  if (twin) {
    auto t = twin->shadow.snapshot("twin");
    out.insert(out.end(), t.begin(), t.end());
  }
  if (prototypes) out.push_back({"prototypes", prototypes->prototypes.value()});
  if (dino_center) {
    Matrix c(1, dino_center->center.size());
    c.row(0) = dino_center->center;
    out.push_back({"dino_center", c});
  }
  return out;
}

Matrix diagnostic_embeddings(const TrainState& state, const Matrix& x) {
  Matrix z = state.encoder.embed_raw(x);
  for (Index i = 0; i < z.rows(); ++i) {
    const double n = z.row(i).norm();
    z.row(i) /= std::max(n, 1e-12);
  }
  return z;
}

double train_step(TrainState& st, const ExperimentConfig& cfg, const Matrix& x_a, const Matrix& x_b) {
  const auto& l = cfg.loss;
  const Tensor a = input(x_a);
  const Tensor b = input(x_b);
  Tensor loss;
  RowVector teacher_mean;

  switch (l.kind) {
    case LossKind::invariance:
      loss = invariance_loss(st.encoder.forward(a), st.encoder.forward(b));
      break;
    case LossKind::triplet: {
      // Negative for row i is the anchor batch's row i + 1.
      Matrix x_n(x_a.rows(), x_a.cols());
      for (Index i = 0; i < x_a.rows(); ++i) x_n.row(i) = x_a.row((i + 1) % x_a.rows());
      loss = triplet_loss(st.encoder.forward(a), st.encoder.forward(b), st.encoder.forward(input(x_n)),
                          l.triplet_margin);
      break;
    }
    case LossKind::infonce:
      loss = infonce_loss(st.encoder.forward(a), st.encoder.forward(b), l.temperature);
      break;
    case LossKind::simsiam:
      loss = simsiam_loss(st.encoder, st.predictor ? &*st.predictor : nullptr, a, b, l.use_stop_gradient,
                          l.use_predictor);
      break;
    case LossKind::byol:
      loss = byol_loss(st.encoder, *st.predictor, *st.twin, a, b);
      break;
    case LossKind::dino: {
      auto r = dino_loss(st.encoder, *st.twin, *st.dino_center, a, b, l.student_temperature, l.teacher_temperature,
                         l.use_centering);
      loss = r.loss;
      teacher_mean = r.teacher_mean;
      break;
    }
    case LossKind::swav:
      loss = swav_loss(st.encoder, *st.prototypes, a, b, l.temperature, l.sinkhorn_eps, l.sinkhorn_iters);
      break;
    case LossKind::barlow_twins:
      loss = barlow_twins_objective(st.encoder, a, b, effective_bt_lambda(l, x_a.rows()), l.use_decorrelation,
                                    l.bn_eps);
      break;
    case LossKind::simple: {
      const Tensor za = st.encoder.forward(a);
      const Tensor zb = st.encoder.forward(b);
      const bool ema = l.simple_center_momentum > 0.0 && st.simple_center.has_value();
      loss = simple_objective(za, zb, l.simple_lambda, l.simple_penalty, ema ? &*st.simple_center : nullptr,
                              l.simple_center_momentum);
      if (l.simple_center_momentum > 0.0) {
        const RowVector batch = batch_center(za, zb).value().row(0);
        st.simple_center = ema ? RowVector(l.simple_center_momentum * *st.simple_center +
                                           (1.0 - l.simple_center_momentum) * batch)
                               : batch;
      }
      break;
    }
  }

  const double value = loss.item();
  if (!std::isfinite(value)) return value;
  ad::backward(loss);
  sgd_step(st.params, cfg.optimizer.lr, cfg.optimizer.multipliers);
  if (st.twin) ema_update(*st.twin, st.encoder);
  if (st.dino_center) st.dino_center->update(teacher_mean);
  ++st.step;
  return value;
}

TrainingData make_training_data(const ExperimentConfig& cfg, std::uint64_t run_seed) {
  TrainingData td;
  const auto& d = cfg.dataset;
  const std::uint64_t ds_seed = mix_seed(run_seed, kDatasetStream);
  switch (d.kind) {
    case DatasetKind::blobs:
      td.dataset = gen_blobs(d.n_per_class, d.num_classes, default_blob_centers(d.num_classes, d.radius), d.sigma,
                             ds_seed);
      break;
    case DatasetKind::moons: td.dataset = gen_moons(d.n_per_class, d.noise, ds_seed, d.three_classes); break;
    case DatasetKind::gaussian: td.dataset = gen_gaussian_points(d.count, d.dim, ds_seed); break;
  }
  AugmentationModel am;
  am.kind = cfg.augmentation.kind;
  am.sigma = cfg.augmentation.sigma;
  am.per_point = cfg.augmentation.per_point;
  if (am.kind == AugmentationKind::shifted_jitter) {
    if (cfg.augmentation.shift.empty()) {
      am.shift = default_shift(static_cast<int>(td.dataset.dim()));
    } else {
      am.shift = Eigen::Map<const RowVector>(cfg.augmentation.shift.data(),
                                             static_cast<Index>(cfg.augmentation.shift.size()));
    }
  }
  td.augmented = augment(td.dataset, am, mix_seed(run_seed, kAugmentStream));
  td.eval_points = td.augmented.points;
  td.eval_labels = td.augmented.labels;
  return td;
}

bool RunResult::aborted() const {
  return std::any_of(seeds.begin(), seeds.end(), [](const SeedRun& s) { return s.aborted; });
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << kMetricsHeader << '\n';
  for (const auto& r : records) out << to_csv_row(r) << '\n';
}

void write_aggregate_csv(const std::filesystem::path& path, const std::vector<SeedRun>& runs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  static const char* names[] = {"loss", "center_norm", "mean_residual_norm", "std_mean", "delta_dist", "knn_accuracy"};
  out << "epoch,step,num_seeds";
  for (const char* n : names) out << ',' << n << "_mean," << n << "_std";
  out << '\n';
  std::size_t ticks = 0;
  for (const auto& r : runs) ticks = std::max(ticks, r.records.size());
  for (std::size_t t = 0; t < ticks; ++t) {
    const MetricsRecord* first = nullptr;
    int present = 0;
    for (const auto& r : runs) {
      if (t < r.records.size()) {
        if (!first) first = &r.records[t];
        ++present;
      }
    }
    out << first->epoch << ',' << first->step << ',' << present;
    for (int m = 0; m < 6; ++m) {
      std::vector<double> vals;
      for (const auto& r : runs) {
        if (t >= r.records.size()) continue;
        const auto& rec = r.records[t];
        const std::optional<double>* fields[] = {&rec.loss,     &rec.center_norm, &rec.mean_residual_norm,
                                                 &rec.std_mean, &rec.delta_dist,  &rec.knn_accuracy};
        if (*fields[m]) vals.push_back(**fields[m]);
      }
      if (vals.empty()) {
        out << ",,";
        continue;
      }
      const double mean = std::accumulate(vals.begin(), vals.end(), 0.0) / static_cast<double>(vals.size());
      double var = 0.0;
      for (double v : vals) var += (v - mean) * (v - mean);
      const double sd = vals.size() > 1 ? std::sqrt(var / static_cast<double>(vals.size() - 1)) : 0.0;
      out << ',' << format_metric(mean) << ',' << format_metric(sd);
    }
    out << '\n';
  }
}

namespace {

std::filesystem::path run_directory(const ExperimentConfig& cfg, const RunOptions& opt) {
  const std::filesystem::path base = opt.out_dir.empty() ? std::filesystem::path(cfg.output.dir) : opt.out_dir;
  return base / cfg.name;
}

}  // namespace

SeedRun run_seed(const ExperimentConfig& cfg, std::uint64_t seed, const RunOptions& opt) {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();

  SeedRun run;
  run.seed = seed;
  run.data = make_training_data(cfg, seed);
  run.state = TrainState::create(cfg, seed);
  TrainState& st = run.state;
  const TrainingData& data = run.data;
  const bool class_pairs = cfg.augmentation.kind == AugmentationKind::class_as_augmentation;
  const Index n_train = data.augmented.points.rows();

  BatchSampler sampler(cfg.optimizer.batch_mode, cfg.optimizer.batch_size, mix_seed(seed, kSamplerStream));
  std::mt19937_64 pair_rng(mix_seed(seed, kPairStream));
  const bool knn_possible = data.dataset.num_classes >= 2 && cfg.diagnostics.knn_k < data.eval_points.rows();
  std::optional<RowVector> prev_mean;

  auto tick = [&](int epoch, std::optional<double> loss) {
    MetricsRecord rec;
    rec.seed = seed;
    rec.epoch = epoch;
    rec.step = st.step;
    rec.loss = loss;
    const Matrix z = diagnostic_embeddings(st, data.eval_points);
    const CenterEstimate c = estimate_center(z, CenterStrategy::full_dataset);
    const ResidualStats rs = residual_stats(z, c);
    rec.center_norm = c.norm;
    rec.mean_residual_norm = rs.mean_residual_norm;
    rec.std_mean = rs.std_mean;
    if (prev_mean) rec.delta_dist = delta_dist(c.s_hat, *prev_mean);
    prev_mean = c.s_hat;
    const bool last = epoch == cfg.optimizer.epochs;
    if (knn_possible && (epoch % cfg.diagnostics.knn_every == 0 || last)) {
      rec.knn_accuracy = knn_eval_loo(z, data.eval_labels, cfg.diagnostics.knn_k).accuracy;
    }
    if (cfg.diagnostics.record_wall_time) {
      rec.wall_time_ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
    }
    run.records.push_back(rec);
    if (opt.observer) opt.observer(TickSnapshot{cfg, seed, run.records.back(), st, data, z, c, rs});
  };

  tick(0, std::nullopt);
  for (int epoch = 1; epoch <= cfg.optimizer.epochs && !run.aborted; ++epoch) {
    double loss_sum = 0.0;
    int batches = 0;
    for (const auto& rows : sampler.epoch_batches(n_train, epoch)) {
      Matrix x_a;
      Matrix x_b;
      if (class_pairs) {
        x_a = gather_rows(data.dataset.points, rows);
        const auto partners = sample_positive_partners(data.dataset, rows, pair_rng);
        x_b = gather_rows(data.dataset.points, partners);
      } else {
        std::vector<Index> src(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) src[i] = data.augmented.source[static_cast<std::size_t>(rows[i])];
        x_a = gather_rows(data.dataset.points, src);
        x_b = gather_rows(data.augmented.points, rows);
      }
      const double v = train_step(st, cfg, x_a, x_b);
      if (!std::isfinite(v)) {
        MetricsRecord bad;
        bad.seed = seed;
        bad.epoch = epoch;
        bad.step = st.step;
        bad.loss = v;
        bad.non_finite = true;
        run.records.push_back(bad);
        run.aborted = true;
        if (!opt.quiet) std::cerr << cfg.name << " seed " << seed << ": non-finite loss at epoch " << epoch << '\n';
        break;
      }
      loss_sum += v;
      ++batches;
    }
    if (run.aborted) break;
    if (epoch % cfg.diagnostics.every == 0 || epoch == cfg.optimizer.epochs) {
      tick(epoch, loss_sum / std::max(batches, 1));
    }
  }

  if (opt.write_files) {
    const auto dir = run_directory(cfg, opt);
    std::filesystem::create_directories(dir);
    run.metrics_path = dir / ("seed_" + std::to_string(seed) + ".csv");
    write_metrics_csv(run.metrics_path, run.records);
    if (cfg.output.checkpoint && !run.aborted) {
      run.checkpoint_path = dir / ("seed_" + std::to_string(seed) + ".checkpoint.json");
      save_checkpoint(run.checkpoint_path, st.snapshot());
    }
  }
  return run;
}

RunResult run_experiment(const ExperimentConfig& cfg, const RunOptions& opt) {
  cfg.validate();
  RunResult result;
  result.name = cfg.name;
  result.run_dir = run_directory(cfg, opt);
  if (opt.write_files) {
    std::filesystem::create_directories(result.run_dir);
    save_config(result.run_dir / "config.json", cfg);
  }
  for (int i = 0; i < cfg.num_seeds; ++i) {
    result.seeds.push_back(run_seed(cfg, cfg.seed + static_cast<std::uint64_t>(i), opt));
  }
  if (opt.write_files) {
    result.aggregate_path = result.run_dir / "aggregate.csv";
    write_aggregate_csv(result.aggregate_path, result.seeds);
  }
  return result;
}

}  // namespace sslab
