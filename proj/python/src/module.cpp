#include "sslab/diagnostics.hpp"
#include "sslab/losses.hpp"
#include "sslab/registry.hpp"
#include "sslab/runner.hpp"
#include "sslab/toy_data.hpp"

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace sslab;
using ad::Tensor;

namespace {

py::tuple dataset_tuple(const ToyDataset& d) { return py::make_tuple(d.points, d.labels); }

// Value and gradient with respect to the first argument.
py::tuple value_and_grad(const std::function<Tensor(const Tensor&)>& f, const Matrix& x) {
  Tensor leaf = Tensor::leaf(x);
  Tensor out = f(leaf);
  ad::backward(out);
  return py::make_tuple(out.item(), leaf.has_grad() ? leaf.grad() : Matrix(Matrix::Zero(x.rows(), x.cols())));
}

py::dict record_dict(const MetricsRecord& r) {
  py::dict d;
  d["seed"] = r.seed;
  d["epoch"] = r.epoch;
  d["step"] = r.step;
  auto put = [&](const char* k, const std::optional<double>& v) { d[k] = v ? py::cast(*v) : py::none(); };
  put("loss", r.loss);
  put("center_norm", r.center_norm);
  put("mean_residual_norm", r.mean_residual_norm);
  put("std_mean", r.std_mean);
  put("delta_dist", r.delta_dist);
  put("knn_accuracy", r.knn_accuracy);
  d["non_finite"] = r.non_finite;
  return d;
}

py::list run_to_python(const ExperimentConfig& cfg, const std::string& out_dir) {
  RunOptions o;
  o.write_files = !out_dir.empty();
  o.out_dir = out_dir;
  const RunResult r = run_experiment(cfg, o);
  py::list seeds;
  for (const auto& s : r.seeds) {
    py::list recs;
    for (const auto& rec : s.records) recs.append(record_dict(rec));
    seeds.append(recs);
  }
  return seeds;
}

ExperimentConfig parse(const std::string& json_text) { return config_from_json(nlohmann::json::parse(json_text)); }

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Toy self-supervised learning lab: losses, toy data, collapse diagnostics";

  // Translators run newest first, so the base class goes in first.
  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<UnknownExperimentError>(m, "UnknownExperimentError", PyExc_KeyError);

  m.def("gen_blobs", [](int n, int classes, double radius, double sigma, std::uint64_t seed) {
    return dataset_tuple(gen_blobs(n, classes, default_blob_centers(classes, radius), sigma, seed));
  }, py::arg("n_per_class"), py::arg("num_classes") = 3, py::arg("radius") = 3.0, py::arg("sigma") = 0.5,
     py::arg("seed") = 0);
  m.def("gen_moons", [](int n, double noise, std::uint64_t seed, bool three) {
    return dataset_tuple(gen_moons(n, noise, seed, three));
  }, py::arg("n_per_class"), py::arg("noise") = 0.1, py::arg("seed") = 0, py::arg("three_classes") = true);
  m.def("gen_gaussian_points", [](int n, int d, std::uint64_t seed) {
    return gen_gaussian_points(n, d, seed).points;
  }, py::arg("count"), py::arg("dim"), py::arg("seed") = 0);

  m.def("invariance_loss", [](const Matrix& z, const Matrix& zw) {
    return value_and_grad([&](const Tensor& x) { return invariance_loss(x, Tensor::constant(zw)); }, z);
  });
  m.def("triplet_loss", [](const Matrix& za, const Matrix& zp, const Matrix& zn, double margin) {
    return value_and_grad([&](const Tensor& x) {
      return triplet_loss(x, Tensor::constant(zp), Tensor::constant(zn), margin);
    }, za);
  }, py::arg("z_a"), py::arg("z_p"), py::arg("z_n"), py::arg("margin") = std::numeric_limits<double>::infinity());
  m.def("infonce_loss", [](const Matrix& za, const Matrix& zp, double t) {
    return value_and_grad([&](const Tensor& x) { return infonce_loss(x, Tensor::constant(zp), t); }, za);
  }, py::arg("z_a"), py::arg("z_p"), py::arg("temperature") = 0.1);
  m.def("barlow_twins_loss", [](const Matrix& za, const Matrix& zb, double lambda, bool decor) {
    return value_and_grad([&](const Tensor& x) {
      return barlow_twins_loss(ad::batch_norm_cols(x), ad::batch_norm_cols(Tensor::constant(zb)), lambda, decor);
    }, za);
  }, py::arg("z_a"), py::arg("z_b"), py::arg("lambda_") = 5e-3, py::arg("use_decorrelation") = true);
  m.def("simple_objective", [](const Matrix& z, const Matrix& zw, double lambda) {
    return value_and_grad([&](const Tensor& x) { return simple_objective(x, Tensor::constant(zw), lambda); }, z);
  }, py::arg("z"), py::arg("z_w"), py::arg("lambda_") = -1.0);
  m.def("sinkhorn_knopp", py::overload_cast<const Matrix&, double, int>(&sinkhorn_knopp), py::arg("scores"),
        py::arg("eps") = 0.05, py::arg("iters") = 3);

  m.def("estimate_center", [](const Matrix& z) { return estimate_center(z).s_hat; });
  m.def("residual_stats", [](const Matrix& z) {
    const auto s = residual_stats(z, estimate_center(z));
    py::dict d;
    d["mean_residual_norm"] = s.mean_residual_norm;
    d["mean_sq_residual_norm"] = s.mean_sq_residual_norm;
    d["mean_sq_norm"] = s.mean_sq_norm;
    d["per_dimension_std"] = s.per_dimension_std;
    d["std_mean"] = s.std_mean;
    return d;
  });
  m.def("knn_accuracy", [](const Matrix& z, const std::vector<int>& labels, int k) {
    return knn_eval_loo(z, labels, k).accuracy;
  }, py::arg("embeddings"), py::arg("labels"), py::arg("k") = 5);
  m.def("is_collapsed", [](const Matrix& z, double center_hi, double std_lo) {
    return collapse_report(z, nullptr, {center_hi, std_lo}).collapsed;
  }, py::arg("embeddings"), py::arg("center_hi") = 0.8, py::arg("std_lo") = 0.05);

  m.def("named_experiment_keys", &named_experiment_keys);
  m.def("named_experiment_configs", [](const std::string& key) {
    std::vector<std::string> out;
    for (const auto& v : named_experiment(key).variants) out.push_back(to_json(v).dump());
    return out;
  }, "Variant configs of a registered experiment, as JSON strings.");
  m.def("validate_config", [](const std::string& text) { parse(text).validate(); });
  m.def("run", [](const std::string& text, const std::string& out_dir) { return run_to_python(parse(text), out_dir); },
        py::arg("config_json"), py::arg("out_dir") = "",
        "Run a JSON config; returns one list of tick records per seed. Files are written only with out_dir.");
  m.attr("METRICS_HEADER") = kMetricsHeader;
}
