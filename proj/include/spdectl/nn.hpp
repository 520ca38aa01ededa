#pragma once

#include <string>
#include <vector>

#include "spdectl/ops.hpp"
#include "spdectl/rng.hpp"

namespace spdectl::nn {

struct Parameter {
  std::string name;
  Tensor value;
};

/// Named trainable leaves in registration order.
class ParamStore {
 public:
  Tensor add(const std::string& name, Tensor value);
  const std::vector<Parameter>& list() const { return params_; }
  std::vector<Tensor> tensors() const;
  const Tensor& get(const std::string& name) const;
  std::size_t count() const;  // total scalar count

  /// Copies values from `other` by name; shapes must match.
  void load(const ParamStore& other);

  /// Freezes (false) or unfreezes every parameter. Frozen leaves are skipped
  /// by backward, so graphs through a frozen model only track other inputs.
  void set_requires_grad(bool flag) const;

 private:
  std::vector<Parameter> params_;
};

/// Uniform(-b, b) with b = sqrt(3 / fan_in), i.e. variance 1 / fan_in.
Tensor kaiming_uniform(const Shape& shape, std::size_t fan_in, CounterRng& rng, bool requires_grad = true);

enum class Activation { gelu, relu, tanh };
std::string to_string(Activation act);
Activation activation_from_string(const std::string& name);
Tensor activate(const Tensor& x, Activation act);

/// Stack of same-size convolutions: in -> width (layers-1 times) -> out.
/// Last layer starts at zero.
class ConvBackbone {
 public:
  ConvBackbone() = default;
  ConvBackbone(std::size_t in, std::size_t out, std::size_t width, std::size_t layers, std::size_t kernel, int dim,
               Padding padding, CounterRng& rng, ParamStore& store, const std::string& prefix);
  /// x: [B, in, s...] -> [B, out, s...]
  Tensor forward(const Tensor& x) const;

 private:
  std::vector<Tensor> kernels_, biases_;
  int dim_ = 1;
  Padding padding_ = Padding::zero;
};

/// Fourier-layer network: 1x1 lift, `layers` x (spectral + 1x1 path, gelu),
/// 1x1 projection to width, gelu, 1x1 to out (zero start).
class SpectralBackbone {
 public:
  SpectralBackbone() = default;
  SpectralBackbone(std::size_t in, std::size_t out, std::size_t width, std::size_t layers, std::size_t modes, int dim,
                   CounterRng& rng, ParamStore& store, const std::string& prefix);
  Tensor forward(const Tensor& x) const;

 private:
  Tensor conv1x1(const Tensor& x, const Tensor& w, const Tensor& b) const;

  Tensor lift_w_, lift_b_, proj_w_, proj_b_, out_w_, out_b_;
  std::vector<Tensor> spectral_, mix_w_, mix_b_;
  std::size_t modes_ = 0;
  int dim_ = 1;
};

/// Fully connected network; hidden activations `act`, linear output.
class Mlp {
 public:
  Mlp() = default;
  Mlp(const std::vector<std::size_t>& sizes, Activation act, bool zero_last, CounterRng& rng, ParamStore& store,
      const std::string& prefix);
  /// x: [B, sizes.front()] -> [B, sizes.back()]
  Tensor forward(const Tensor& x) const;

 private:
  std::vector<Tensor> weights_, biases_;
  Activation act_ = Activation::gelu;
};

}  // namespace spdectl::nn
