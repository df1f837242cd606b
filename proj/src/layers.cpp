#include "sslab/layers.hpp"

#include <cmath>
#include <random>

namespace sslab {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::tanh: return "tanh";
    case Activation::relu: return "relu";
  }
  return "identity";
}

std::string to_string(InitScheme s) {
  switch (s) {
    case InitScheme::uniform_fan_in: return "uniform_fan_in";
    case InitScheme::biased: return "biased";
    case InitScheme::near_identity: return "near_identity";
  }
  return "uniform_fan_in";
}

Activation activation_from_string(const std::string& s) {
  if (s == "identity") return Activation::identity;
  if (s == "tanh") return Activation::tanh;
  if (s == "relu") return Activation::relu;
  throw ParameterError("unknown activation '" + s + "'");
}

InitScheme init_scheme_from_string(const std::string& s) {
  if (s == "uniform_fan_in") return InitScheme::uniform_fan_in;
  if (s == "biased") return InitScheme::biased;
  if (s == "near_identity") return InitScheme::near_identity;
  throw ParameterError("unknown init scheme '" + s + "'");
}

namespace {

ad::Tensor apply_activation(const ad::Tensor& x, Activation a) {
  switch (a) {
    case Activation::tanh: return ad::tanh(x);
    case Activation::relu: return ad::relu(x);
    case Activation::identity: break;
  }
  return x;
}

void apply_activation_inplace(Matrix& x, Activation a) {
  switch (a) {
    case Activation::tanh: x = x.array().tanh().matrix(); break;
    case Activation::relu: x = x.cwiseMax(0.0); break;
    case Activation::identity: break;
  }
}

}  // namespace

EncoderStack::EncoderStack(std::vector<LinearLayer> layers, bool output_normalize)
    : layers_(std::move(layers)), output_normalize_(output_normalize) {
  if (layers_.empty()) throw ParameterError("EncoderStack: no layers");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    if (l.bias.rows() != 1 || l.bias.cols() != l.weight.cols()) {
      throw DimensionError("EncoderStack: bias of layer " + std::to_string(i) + " does not match weight");
    }
    if (i > 0 && layers_[i - 1].weight.cols() != l.weight.rows()) {
      throw DimensionError("EncoderStack: layer " + std::to_string(i) + " does not chain");
    }
  }
}

EncoderStack EncoderStack::init(std::span<const int> dims, std::uint64_t seed, InitScheme scheme,
                                Activation hidden, bool output_normalize) {
  if (dims.size() < 2) throw ParameterError("init_encoder: need at least input and output dims");
  for (int d : dims) {
    if (d <= 0) throw ParameterError("init_encoder: dims must be positive");
  }
  std::mt19937_64 rng(seed);
  const double offset = scheme == InitScheme::biased ? kBiasedInitOffset : 0.0;
  std::vector<LinearLayer> layers;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const int fan_in = dims[i];
    const int fan_out = dims[i + 1];
    const bool identity = scheme == InitScheme::near_identity;
    const double bound = std::sqrt(3.0 / fan_in) * (identity ? kNearIdentityNoise : 1.0);
    std::uniform_real_distribution<double> dist(-bound, bound);
    Matrix w(fan_in, fan_out);
    for (Index r = 0; r < w.rows(); ++r) {
      for (Index c = 0; c < w.cols(); ++c) w(r, c) = dist(rng) + offset + (identity && r == c ? 1.0 : 0.0);
    }
    Matrix b = Matrix::Constant(1, fan_out, offset);
    const bool last = i + 2 == dims.size();
    layers.push_back({ad::Tensor::leaf(std::move(w)), ad::Tensor::leaf(std::move(b)),
                      last ? Activation::identity : hidden});
  }
  return EncoderStack(std::move(layers), output_normalize);
}

ad::Tensor EncoderStack::forward_raw(const ad::Tensor& x) const {
  if (x.cols() != input_dim()) {
    throw DimensionError("EncoderStack::forward: input has " + std::to_string(x.cols()) +
                         " columns, expected " + std::to_string(input_dim()));
  }
  ad::Tensor h = x;
  for (const auto& l : layers_) {
    h = apply_activation(ad::add_row(ad::matmul(h, l.weight), l.bias), l.activation);
  }
  return h;
}

ad::Tensor EncoderStack::forward(const ad::Tensor& x) const {
  ad::Tensor h = forward_raw(x);
  return output_normalize_ ? ad::l2_normalize_rows(h) : h;
}

Matrix EncoderStack::embed_raw(const Matrix& x) const {
  if (x.cols() != input_dim()) {
    throw DimensionError("EncoderStack::embed: input has " + std::to_string(x.cols()) +
                         " columns, expected " + std::to_string(input_dim()));
  }
  Matrix h = x;
  for (const auto& l : layers_) {
    Matrix next = h * l.weight.value();
    next.rowwise() += l.bias.value().row(0);
    apply_activation_inplace(next, l.activation);
    h = std::move(next);
  }
  return h;
}

Matrix EncoderStack::embed(const Matrix& x) const {
  Matrix h = embed_raw(x);
  if (output_normalize_) {
    // Same clamp as ad::l2_normalize_rows.
    for (Index i = 0; i < h.rows(); ++i) h.row(i) /= std::max(h.row(i).norm(), 1e-12);
  }
  return h;
}

Index EncoderStack::input_dim() const { return layers_.front().weight.rows(); }
Index EncoderStack::output_dim() const { return layers_.back().weight.cols(); }

EncoderStack EncoderStack::clone(bool requires_grad) const {
  std::vector<LinearLayer> copy;
  copy.reserve(layers_.size());
  for (const auto& l : layers_) {
    copy.push_back({ad::Tensor::leaf(l.weight.value(), requires_grad),
                    ad::Tensor::leaf(l.bias.value(), requires_grad), l.activation});
  }
  return EncoderStack(std::move(copy), output_normalize_);
}

std::vector<NamedMatrix> EncoderStack::snapshot(const std::string& prefix) const {
  std::vector<NamedMatrix> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    out.push_back({prefix + ".layer" + std::to_string(i) + ".weight", layers_[i].weight.value()});
    out.push_back({prefix + ".layer" + std::to_string(i) + ".bias", layers_[i].bias.value()});
  }
  return out;
}

void EncoderStack::restore(const std::vector<NamedMatrix>& params, const std::string& prefix) {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    for (auto* t : {&layers_[i].weight, &layers_[i].bias}) {
      const std::string name = prefix + ".layer" + std::to_string(i) +
                               (t == &layers_[i].weight ? ".weight" : ".bias");
      bool found = false;
      for (const auto& p : params) {
        if (p.name != name) continue;
        if (p.value.rows() != t->rows() || p.value.cols() != t->cols()) {
          throw DimensionError("restore: shape mismatch for " + name);
        }
        t->mutable_value() = p.value;
        found = true;
      }
      if (!found) throw ContractError("restore: missing parameter " + name);
    }
  }
}

PredictorHead PredictorHead::init(int dim, int hidden, std::uint64_t seed, Activation activation,
                                  double lr_multiplier, InitScheme scheme) {
  if (!(lr_multiplier >= 0.0)) throw ParameterError("PredictorHead: lr multiplier must be >= 0");
  const std::vector<int> dims{dim, hidden, dim};
  return {EncoderStack::init(dims, seed, scheme, activation, true), lr_multiplier};
}

EmaTwin EmaTwin::from(const EncoderStack& source, double momentum) {
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ParameterError("EmaTwin: momentum must lie in [0, 1)");
  return {source.clone(false), momentum};
}

void ema_update(EmaTwin& twin, const EncoderStack& source) {
  auto& dst = twin.shadow.layers();
  const auto& src = source.layers();
  if (dst.size() != src.size()) throw ContractError("ema_update: layer count drifted");
  const double eps = twin.momentum;
  for (std::size_t i = 0; i < src.size(); ++i) {
    for (auto [d, s] : {std::pair{&dst[i].weight, &src[i].weight}, std::pair{&dst[i].bias, &src[i].bias}}) {
      if (d->rows() != s->rows() || d->cols() != s->cols()) {
        throw ContractError("ema_update: parameter shape drifted in layer " + std::to_string(i));
      }
      Matrix& p = d->mutable_value();
      p = (1.0 - eps) * s->value() + eps * p;
    }
  }
}

PrototypeBank init_prototypes(int count, int dim, std::uint64_t seed, bool trainable) {
  if (count < 2 || dim < 2) throw ParameterError("init_prototypes: need K >= 2 and D >= 2");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix p(count, dim);
  for (Index i = 0; i < p.rows(); ++i) {
    for (Index j = 0; j < p.cols(); ++j) p(i, j) = normal(rng);
    p.row(i).normalize();
  }
  return {ad::Tensor::leaf(std::move(p), trainable), trainable};
}

double GroupMultipliers::of(ParamGroup g) const {
  switch (g) {
    case ParamGroup::encoder: return encoder;
    case ParamGroup::predictor: return predictor;
    case ParamGroup::prototypes: return prototypes;
  }
  return 1.0;
}

void ParameterSet::add(const std::string& name, const ad::Tensor& t, ParamGroup group) {
  items_.push_back({name, t, group});
}

void ParameterSet::add_encoder(const EncoderStack& enc, const std::string& prefix, ParamGroup group) {
  for (std::size_t i = 0; i < enc.layers().size(); ++i) {
    add(prefix + ".layer" + std::to_string(i) + ".weight", enc.layers()[i].weight, group);
    add(prefix + ".layer" + std::to_string(i) + ".bias", enc.layers()[i].bias, group);
  }
}

void ParameterSet::zero_grad() {
  for (auto& p : items_) {
    if (p.tensor.requires_grad()) p.tensor.zero_grad();
  }
}

void sgd_step(ParameterSet& params, double lr, const GroupMultipliers& multipliers) {
  if (!(lr >= 0.0)) throw ParameterError("sgd_step: lr must be >= 0");
  for (const auto& p : params.items()) {
    if (!p.tensor.requires_grad()) continue;
    if (!p.tensor.has_grad()) throw ContractError("sgd_step: parameter '" + p.name + "' has no gradient");
  }
  for (auto& p : params.items()) {
    if (!p.tensor.requires_grad()) continue;
    ad::Tensor t = p.tensor;
    const double step = lr * multipliers.of(p.group);
    if (step != 0.0) t.mutable_value() -= step * t.grad();
    t.zero_grad();
  }
}

}  // namespace sslab
