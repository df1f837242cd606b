#include "sslab/config.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <set>
#include <sstream>

namespace sslab {

using nlohmann::json;

std::string to_string(DatasetKind k) {
  switch (k) {
    case DatasetKind::blobs: return "blobs";
    case DatasetKind::moons: return "moons";
    case DatasetKind::gaussian: return "gaussian";
  }
  return "blobs";
}

namespace {

DatasetKind dataset_kind_from_string(const std::string& s) {
  if (s == "blobs") return DatasetKind::blobs;
  if (s == "moons") return DatasetKind::moons;
  if (s == "gaussian") return DatasetKind::gaussian;
  throw ParameterError("unknown dataset kind '" + s + "' (blobs, moons, gaussian)");
}

// Walks one JSON object, handing out fields by name and remembering which keys
// were consumed so leftovers can be reported as unknown.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_, "expected an object");
  }

  std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  template <class T>
  void get(const std::string& key, T& out) {
    auto it = j_.find(key);
    if (it == j_.end()) return;
    seen_.insert(key);
    try {
      if constexpr (std::is_same_v<T, double>) {
        if (it->is_string()) {
          out = parse_special(it->template get<std::string>(), key);
          return;
        }
        if (!it->is_number()) throw ConfigError(child(key), "expected a number");
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!it->is_boolean()) throw ConfigError(child(key), "expected a boolean");
      } else if constexpr (std::is_integral_v<T>) {
        if (!it->is_number_integer()) throw ConfigError(child(key), "expected an integer");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!it->is_string()) throw ConfigError(child(key), "expected a string");
      }
      out = it->template get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(child(key), e.what());
    }
  }

  template <class E>
  void get_enum(const std::string& key, E& out, E (*parse)(const std::string&)) {
    std::string s;
    get(key, s);
    if (!seen_.count(key)) return;
    try {
      out = parse(s);
    } catch (const Error& e) {
      throw ConfigError(child(key), e.what());
    }
  }

  void object(const std::string& key, const std::function<void(ObjectReader&)>& fn) {
    auto it = j_.find(key);
    if (it == j_.end()) return;
    seen_.insert(key);
    ObjectReader sub(*it, child(key));
    fn(sub);
    sub.finish();
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(child(it.key()), "unknown key");
    }
  }

 private:
  double parse_special(const std::string& s, const std::string& key) const {
    if (s == "inf" || s == "infinity") return std::numeric_limits<double>::infinity();
    throw ConfigError(child(key), "expected a number");
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

json number_or_inf(double v) {
  if (std::isinf(v) && v > 0) return "inf";
  return v;
}

void require(bool ok, const std::string& path, const std::string& msg) {
  if (!ok) throw ConfigError(path, msg);
}

}  // namespace

Index ExperimentConfig::input_dim() const {
  switch (dataset.kind) {
    case DatasetKind::blobs:
    case DatasetKind::moons: return 2;
    case DatasetKind::gaussian: return dataset.dim;
  }
  return 2;
}

void ExperimentConfig::validate() const {
  require(num_seeds >= 1, "num_seeds", "must be >= 1");

  const auto& ds = dataset;
  switch (ds.kind) {
    case DatasetKind::blobs:
      require(ds.n_per_class >= 1, "dataset.n_per_class", "must be >= 1");
      require(ds.num_classes >= 2, "dataset.num_classes", "must be >= 2");
      require(ds.sigma > 0.0, "dataset.sigma", "must be > 0");
      require(ds.radius > 0.0, "dataset.radius", "must be > 0");
      break;
    case DatasetKind::moons:
      require(ds.n_per_class >= 2, "dataset.n_per_class", "must be >= 2");
      require(ds.noise >= 0.0, "dataset.noise", "must be >= 0");
      break;
    case DatasetKind::gaussian:
      require(ds.count >= 2, "dataset.count", "must be >= 2");
      require(ds.dim >= 1, "dataset.dim", "must be >= 1");
      break;
  }

  const auto& aug = augmentation;
  require(aug.sigma >= 0.0, "augmentation.sigma", "must be >= 0");
  require(aug.per_point >= 1, "augmentation.per_point", "must be >= 1");
  if (aug.kind == AugmentationKind::class_as_augmentation) {
    require(ds.kind != DatasetKind::gaussian, "augmentation.kind",
            "class_as_augmentation needs a labelled dataset");
  }
  if (!aug.shift.empty()) {
    require(static_cast<Index>(aug.shift.size()) == input_dim(), "augmentation.shift",
            "length must equal the input dimension " + std::to_string(input_dim()));
  }

  const auto& dims = model.encoder_dims;
  require(dims.size() >= 2, "model.encoder_dims", "needs at least input and output sizes");
  for (std::size_t i = 0; i < dims.size(); ++i) {
    require(dims[i] >= 1, "model.encoder_dims[" + std::to_string(i) + "]", "must be >= 1");
  }
  require(dims.front() == input_dim(), "model.encoder_dims[0]",
          "must equal the input dimension " + std::to_string(input_dim()));
  require(model.predictor_hidden >= 0, "model.predictor_hidden", "must be >= 0");
  if (loss.needs_prototypes()) require(model.num_prototypes >= 2, "model.num_prototypes", "must be >= 2");
  if (loss.kind == LossKind::barlow_twins || loss.needs_prototypes() || loss.kind == LossKind::dino) {
    require(embedding_dim() >= 2, "model.encoder_dims", "embedding dimension must be >= 2");
  }

  try {
    loss.validate();
  } catch (const Error& e) {
    // Messages read "loss.<field> must ...": lift the field into the path.
    const std::string msg = e.what();
    const auto space = msg.find(' ');
    if (msg.rfind("loss.", 0) == 0 && space != std::string::npos) {
      throw ConfigError(msg.substr(0, space), msg.substr(space + 1));
    }
    throw ConfigError("loss", msg);
  }

  const auto& opt = optimizer;
  require(opt.lr > 0.0 && std::isfinite(opt.lr), "optimizer.lr", "must be a positive finite number");
  require(opt.multipliers.encoder >= 0.0, "optimizer.multipliers.encoder", "must be >= 0");
  require(opt.multipliers.predictor >= 0.0, "optimizer.multipliers.predictor", "must be >= 0");
  require(opt.multipliers.prototypes >= 0.0, "optimizer.multipliers.prototypes", "must be >= 0");
  require(opt.batch_size >= 2, "optimizer.batch_size", "must be >= 2");
  require(opt.epochs >= 0, "optimizer.epochs", "must be >= 0");

  const auto& dg = diagnostics;
  require(dg.every >= 1, "diagnostics.every", "must be >= 1");
  require(dg.knn_every >= 1, "diagnostics.knn_every", "must be >= 1");
  require(dg.knn_k >= 1, "diagnostics.knn_k", "must be >= 1");
  require(dg.thresholds.center_hi > 0.0 && dg.thresholds.center_hi < 1.0, "diagnostics.thresholds.center_hi",
          "must lie in (0, 1)");
  require(dg.thresholds.std_lo > 0.0 && dg.thresholds.std_lo < 1.0, "diagnostics.thresholds.std_lo",
          "must lie in (0, 1)");
}

json to_json(const ExperimentConfig& c) {
  json j;
  j["name"] = c.name;
  j["seed"] = c.seed;
  j["num_seeds"] = c.num_seeds;
  j["dataset"] = {{"kind", to_string(c.dataset.kind)},   {"n_per_class", c.dataset.n_per_class},
                  {"num_classes", c.dataset.num_classes}, {"sigma", c.dataset.sigma},
                  {"radius", c.dataset.radius},           {"noise", c.dataset.noise},
                  {"three_classes", c.dataset.three_classes}, {"count", c.dataset.count},
                  {"dim", c.dataset.dim}};
  j["augmentation"] = {{"kind", to_string(c.augmentation.kind)},
                       {"sigma", c.augmentation.sigma},
                       {"shift", c.augmentation.shift},
                       {"per_point", c.augmentation.per_point}};
  j["model"] = {{"encoder_dims", c.model.encoder_dims},
                {"init", to_string(c.model.init)},
                {"activation", to_string(c.model.activation)},
                {"predictor_hidden", c.model.predictor_hidden},
                {"predictor_activation", to_string(c.model.predictor_activation)},
                {"predictor_init", to_string(c.model.predictor_init)},
                {"num_prototypes", c.model.num_prototypes},
                {"trainable_prototypes", c.model.trainable_prototypes}};
  const auto& l = c.loss;
  j["loss"] = {{"kind", to_string(l.kind)},
               {"temperature", l.temperature},
               {"student_temperature", l.student_temperature},
               {"teacher_temperature", l.teacher_temperature},
               {"triplet_margin", number_or_inf(l.triplet_margin)},
               {"bt_lambda", l.bt_lambda},
               {"bt_lambda_mode", to_string(l.bt_lambda_mode)},
               {"bn_eps", l.bn_eps},
               {"simple_lambda", l.simple_lambda},
               {"simple_penalty", to_string(l.simple_penalty)},
               {"simple_center_momentum", l.simple_center_momentum},
               {"ema_momentum", l.ema_momentum},
               {"center_momentum", l.center_momentum},
               {"sinkhorn_iters", l.sinkhorn_iters},
               {"sinkhorn_eps", l.sinkhorn_eps},
               {"use_stop_gradient", l.use_stop_gradient},
               {"use_predictor", l.use_predictor},
               {"use_centering", l.use_centering},
               {"use_decorrelation", l.use_decorrelation}};
  const auto& o = c.optimizer;
  j["optimizer"] = {{"lr", o.lr},
                    {"multipliers",
                     {{"encoder", o.multipliers.encoder},
                      {"predictor", o.multipliers.predictor},
                      {"prototypes", o.multipliers.prototypes}}},
                    {"batch_mode", to_string(o.batch_mode)},
                    {"batch_size", o.batch_size},
                    {"epochs", o.epochs}};
  const auto& d = c.diagnostics;
  j["diagnostics"] = {{"every", d.every},
                      {"knn_every", d.knn_every},
                      {"knn_k", d.knn_k},
                      {"thresholds", {{"center_hi", d.thresholds.center_hi}, {"std_lo", d.thresholds.std_lo}}},
                      {"record_wall_time", d.record_wall_time}};
  j["output"] = {{"dir", c.output.dir}, {"checkpoint", c.output.checkpoint}};
  return j;
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  ObjectReader r(j, "");
  r.get("name", c.name);
  r.get("seed", c.seed);
  r.get("num_seeds", c.num_seeds);
  r.object("dataset", [&](ObjectReader& s) {
    s.get_enum("kind", c.dataset.kind, dataset_kind_from_string);
    s.get("n_per_class", c.dataset.n_per_class);
    s.get("num_classes", c.dataset.num_classes);
    s.get("sigma", c.dataset.sigma);
    s.get("radius", c.dataset.radius);
    s.get("noise", c.dataset.noise);
    s.get("three_classes", c.dataset.three_classes);
    s.get("count", c.dataset.count);
    s.get("dim", c.dataset.dim);
  });
  r.object("augmentation", [&](ObjectReader& s) {
    s.get_enum("kind", c.augmentation.kind, augmentation_kind_from_string);
    s.get("sigma", c.augmentation.sigma);
    s.get("shift", c.augmentation.shift);
    s.get("per_point", c.augmentation.per_point);
  });
  r.object("model", [&](ObjectReader& s) {
    s.get("encoder_dims", c.model.encoder_dims);
    s.get_enum("init", c.model.init, init_scheme_from_string);
    s.get_enum("activation", c.model.activation, activation_from_string);
    s.get("predictor_hidden", c.model.predictor_hidden);
    s.get_enum("predictor_activation", c.model.predictor_activation, activation_from_string);
    s.get_enum("predictor_init", c.model.predictor_init, init_scheme_from_string);
    s.get("num_prototypes", c.model.num_prototypes);
    s.get("trainable_prototypes", c.model.trainable_prototypes);
  });
  r.object("loss", [&](ObjectReader& s) {
    auto& l = c.loss;
    s.get_enum("kind", l.kind, loss_kind_from_string);
    s.get("temperature", l.temperature);
    s.get("student_temperature", l.student_temperature);
    s.get("teacher_temperature", l.teacher_temperature);
    s.get("triplet_margin", l.triplet_margin);
    s.get("bt_lambda", l.bt_lambda);
    s.get_enum("bt_lambda_mode", l.bt_lambda_mode, bt_lambda_mode_from_string);
    s.get("bn_eps", l.bn_eps);
    s.get("simple_lambda", l.simple_lambda);
    s.get_enum("simple_penalty", l.simple_penalty, center_penalty_from_string);
    s.get("simple_center_momentum", l.simple_center_momentum);
    s.get("ema_momentum", l.ema_momentum);
    s.get("center_momentum", l.center_momentum);
    s.get("sinkhorn_iters", l.sinkhorn_iters);
    s.get("sinkhorn_eps", l.sinkhorn_eps);
    s.get("use_stop_gradient", l.use_stop_gradient);
    s.get("use_predictor", l.use_predictor);
    s.get("use_centering", l.use_centering);
    s.get("use_decorrelation", l.use_decorrelation);
  });
  r.object("optimizer", [&](ObjectReader& s) {
    auto& o = c.optimizer;
    s.get("lr", o.lr);
    s.object("multipliers", [&](ObjectReader& m) {
      m.get("encoder", o.multipliers.encoder);
      m.get("predictor", o.multipliers.predictor);
      m.get("prototypes", o.multipliers.prototypes);
    });
    s.get_enum("batch_mode", o.batch_mode, batch_mode_from_string);
    s.get("batch_size", o.batch_size);
    s.get("epochs", o.epochs);
  });
  r.object("diagnostics", [&](ObjectReader& s) {
    auto& d = c.diagnostics;
    s.get("every", d.every);
    s.get("knn_every", d.knn_every);
    s.get("knn_k", d.knn_k);
    s.object("thresholds", [&](ObjectReader& t) {
      t.get("center_hi", d.thresholds.center_hi);
      t.get("std_lo", d.thresholds.std_lo);
    });
    s.get("record_wall_time", d.record_wall_time);
  });
  r.object("output", [&](ObjectReader& s) {
    s.get("dir", c.output.dir);
    s.get("checkpoint", c.output.checkpoint);
  });
  r.finish();
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("", std::string("malformed config: ") + e.what());
  }
  return config_from_json(j);
}

void save_config(const std::filesystem::path& path, const ExperimentConfig& cfg) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << to_json(cfg).dump(2) << '\n';
}

void apply_override(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("", "override must look like key=value: " + assignment);
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);

  json value;
  try {
    value = json::parse(raw);
  } catch (const json::parse_error&) {
    value = raw;
  }

  json* node = &j;
  std::stringstream ss(key);
  std::string part;
  std::string walked;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    walked = walked.empty() ? parts[i] : walked + "." + parts[i];
    if (!node->is_object() || !node->contains(parts[i])) throw ConfigError(walked, "unknown key");
    node = &(*node)[parts[i]];
  }
  *node = value;
}

ExperimentConfig with_overrides(const ExperimentConfig& cfg, const std::vector<std::string>& assignments) {
  json j = to_json(cfg);
  for (const auto& a : assignments) apply_override(j, a);
  return config_from_json(j);
}

}  // namespace sslab
