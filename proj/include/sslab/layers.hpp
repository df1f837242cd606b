#pragma once

#include "sslab/autodiff.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace sslab {

enum class Activation { identity, tanh, relu };
enum class InitScheme { uniform_fan_in, biased, near_identity };
enum class ParamGroup { encoder, predictor, prototypes };

std::string to_string(Activation a);
std::string to_string(InitScheme s);
Activation activation_from_string(const std::string& s);
InitScheme init_scheme_from_string(const std::string& s);

// Offset added to every weight and bias by InitScheme::biased. Shifts the
// pre-normalisation outputs off the origin, so embeddings crowd one side of
// the sphere.
inline constexpr double kBiasedInitOffset = 0.5;
// near_identity: W = I (zero padded) + U(-a, a) with a = this * sqrt(3 / fan_in).
inline constexpr double kNearIdentityNoise = 0.1;

struct LinearLayer {
  ad::Tensor weight;  // in x out, applied as x * W + b
  ad::Tensor bias;    // 1 x out
  Activation activation = Activation::identity;
};

struct NamedMatrix {
  std::string name;
  Matrix value;
};

// Linear -> activation blocks followed by optional row L2 normalisation.
class EncoderStack {
 public:
  EncoderStack() = default;
  EncoderStack(std::vector<LinearLayer> layers, bool output_normalize);

  // dims = (in, hidden..., out); hidden layers use `hidden`, the last layer
  // is linear. Weights ~ U(-sqrt(3/fan_in), sqrt(3/fan_in)), biases zero;
  // the biased scheme adds kBiasedInitOffset to both; near_identity starts
  // every layer at a padded identity plus small noise.
  static EncoderStack init(std::span<const int> dims, std::uint64_t seed,
                           InitScheme scheme = InitScheme::uniform_fan_in,
                           Activation hidden = Activation::tanh, bool output_normalize = true);

  ad::Tensor forward(const ad::Tensor& x) const;
  // Pre-normalisation output, on the graph.
  ad::Tensor forward_raw(const ad::Tensor& x) const;
  // Same maps evaluated without building a graph.
  Matrix embed(const Matrix& x) const;
  Matrix embed_raw(const Matrix& x) const;

  Index input_dim() const;
  Index output_dim() const;
  bool output_normalize() const { return output_normalize_; }
  const std::vector<LinearLayer>& layers() const { return layers_; }
  std::vector<LinearLayer>& layers() { return layers_; }

  // Deep copy; the copy's leaves require grad iff `requires_grad`.
  EncoderStack clone(bool requires_grad) const;
  std::vector<NamedMatrix> snapshot(const std::string& prefix) const;
  void restore(const std::vector<NamedMatrix>& params, const std::string& prefix);

 private:
  std::vector<LinearLayer> layers_;
  bool output_normalize_ = true;
};

struct PredictorHead {
  EncoderStack net;
  double learning_rate_multiplier = 1.0;

  // D -> hidden -> D with normalised output.
  static PredictorHead init(int dim, int hidden, std::uint64_t seed,
                            Activation activation = Activation::tanh, double lr_multiplier = 1.0,
                            InitScheme scheme = InitScheme::uniform_fan_in);
  ad::Tensor forward(const ad::Tensor& z) const { return net.forward(z); }
};

// Parameter-wise exponential moving average of a source encoder. Lives
// entirely outside the gradient record.
struct EmaTwin {
  EncoderStack shadow;
  double momentum = 0.99;

  static EmaTwin from(const EncoderStack& source, double momentum);
  Matrix embed(const Matrix& x) const { return shadow.embed(x); }
};

// p_ema <- (1 - momentum) * p + momentum * p_ema for every parameter.
void ema_update(EmaTwin& twin, const EncoderStack& source);

struct PrototypeBank {
  ad::Tensor prototypes;  // K x D
  bool trainable = false;

  Index count() const { return prototypes.rows(); }
  Index dim() const { return prototypes.cols(); }
};

// Rows are normalised standard Gaussians, i.e. uniform on the sphere.
PrototypeBank init_prototypes(int count, int dim, std::uint64_t seed, bool trainable);

struct ParamRef {
  std::string name;
  ad::Tensor tensor;
  ParamGroup group = ParamGroup::encoder;
};

struct GroupMultipliers {
  double encoder = 1.0;
  double predictor = 1.0;
  double prototypes = 1.0;
  double of(ParamGroup g) const;
};

class ParameterSet {
 public:
  void add(const std::string& name, const ad::Tensor& t, ParamGroup group);
  void add_encoder(const EncoderStack& enc, const std::string& prefix, ParamGroup group);
  const std::vector<ParamRef>& items() const { return items_; }
  std::size_t size() const { return items_.size(); }
  void zero_grad();

 private:
  std::vector<ParamRef> items_;
};

// p <- p - lr * multiplier(group) * grad(p), then grads are zeroed. Leaves
// that do not require grad are skipped. Throws ContractError when a trainable
// parameter has no accumulated gradient.
void sgd_step(ParameterSet& params, double lr, const GroupMultipliers& multipliers = {});

}  // namespace sslab
