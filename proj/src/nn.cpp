#include "spdectl/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace spdectl::nn {

Tensor ParamStore::add(const std::string& name, Tensor value) {
  for (const auto& p : params_) {
    if (p.name == name) throw std::invalid_argument("duplicate parameter name '" + name + "'");
  }
  params_.push_back({name, value});
  return value;
}

std::vector<Tensor> ParamStore::tensors() const {
  std::vector<Tensor> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.value);
  return out;
}

const Tensor& ParamStore::get(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return p.value;
  }
  throw std::out_of_range("no parameter named '" + name + "'");
}

std::size_t ParamStore::count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.numel();
  return n;
}

void ParamStore::set_requires_grad(bool flag) const {
  for (auto& p : params_) p.value.node()->requires_grad = flag;
}

void ParamStore::load(const ParamStore& other) {
  if (other.params_.size() != params_.size()) throw std::invalid_argument("parameter count mismatch");
  for (auto& p : params_) {
    const Tensor& src = other.get(p.name);
    if (src.shape() != p.value.shape()) {
      throw std::invalid_argument("parameter '" + p.name + "' shape " + shape_str(src.shape()) + " expected " +
                                  shape_str(p.value.shape()));
    }
    auto dst = p.value.mutable_values();
    auto sv = src.values();
    std::copy(sv.begin(), sv.end(), dst.begin());
  }
}

Tensor kaiming_uniform(const Shape& shape, std::size_t fan_in, CounterRng& rng, bool requires_grad) {
  const double bound = std::sqrt(3.0 / static_cast<double>(fan_in));
  std::vector<double> v(numel_of(shape));
  for (auto& x : v) x = bound * (2.0 * rng.uniform() - 1.0);
  return Tensor(shape, std::move(v), requires_grad);
}

std::string to_string(Activation act) {
  switch (act) {
    case Activation::relu:
      return "relu";
    case Activation::tanh:
      return "tanh";
    case Activation::gelu:
      break;
  }
  return "gelu";
}

Activation activation_from_string(const std::string& name) {
  if (name == "gelu") return Activation::gelu;
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  throw std::invalid_argument("unknown activation '" + name + "'");
}

Tensor activate(const Tensor& x, Activation act) {
  switch (act) {
    case Activation::relu:
      return relu(x);
    case Activation::tanh:
      return tanh(x);
    case Activation::gelu:
      break;
  }
  return gelu(x);
}

namespace {

Shape bias_shape(std::size_t channels, int dim) {
  Shape s{channels};
  for (int d = 0; d < dim; ++d) s.push_back(1);
  return s;
}

Shape kernel_shape(std::size_t out, std::size_t in, std::size_t k, int dim) {
  Shape s{out, in};
  for (int d = 0; d < dim; ++d) s.push_back(k);
  return s;
}

}  // namespace

ConvBackbone::ConvBackbone(std::size_t in, std::size_t out, std::size_t width, std::size_t layers, std::size_t kernel,
                           int dim, Padding padding, CounterRng& rng, ParamStore& store, const std::string& prefix)
    : dim_(dim), padding_(padding) {
  if (layers < 1) throw std::invalid_argument("ConvBackbone needs at least one layer");
  std::size_t c = in;
  for (std::size_t i = 0; i < layers; ++i) {
    const bool last = i + 1 == layers;
    const std::size_t co = last ? out : width;
    const std::size_t fan_in = c * static_cast<std::size_t>(std::pow(kernel, dim));
    Tensor k = last ? Tensor::zeros(kernel_shape(co, c, kernel, dim), true)
                    : kaiming_uniform(kernel_shape(co, c, kernel, dim), fan_in, rng);
    kernels_.push_back(store.add(prefix + ".conv" + std::to_string(i) + ".weight", k));
    biases_.push_back(store.add(prefix + ".conv" + std::to_string(i) + ".bias", Tensor::zeros(bias_shape(co, dim), true)));
    c = co;
  }
}

Tensor ConvBackbone::forward(const Tensor& x) const {
  Tensor h = x;
  for (std::size_t i = 0; i < kernels_.size(); ++i) {
    h = add(conv(h, kernels_[i], padding_), biases_[i]);
    if (i + 1 < kernels_.size()) h = gelu(h);
  }
  return h;
}

SpectralBackbone::SpectralBackbone(std::size_t in, std::size_t out, std::size_t width, std::size_t layers,
                                   std::size_t modes, int dim, CounterRng& rng, ParamStore& store,
                                   const std::string& prefix)
    : modes_(modes), dim_(dim) {
  lift_w_ = store.add(prefix + ".lift.weight", kaiming_uniform(kernel_shape(width, in, 1, dim), in, rng));
  lift_b_ = store.add(prefix + ".lift.bias", Tensor::zeros(bias_shape(width, dim), true));
  const double scale = 1.0 / static_cast<double>(width * width);
  for (std::size_t i = 0; i < layers; ++i) {
    Shape ws = dim == 1 ? Shape{width, width, modes, 2} : Shape{width, width, 2 * modes, modes, 2};
    std::vector<double> v(numel_of(ws));
    for (auto& x : v) x = scale * rng.uniform();
    const std::string p = prefix + ".fourier" + std::to_string(i);
    spectral_.push_back(store.add(p + ".spectral", Tensor(ws, std::move(v), true)));
    mix_w_.push_back(store.add(p + ".mix.weight", kaiming_uniform(kernel_shape(width, width, 1, dim), width, rng)));
    mix_b_.push_back(store.add(p + ".mix.bias", Tensor::zeros(bias_shape(width, dim), true)));
  }
  proj_w_ = store.add(prefix + ".proj.weight", kaiming_uniform(kernel_shape(width, width, 1, dim), width, rng));
  proj_b_ = store.add(prefix + ".proj.bias", Tensor::zeros(bias_shape(width, dim), true));
  out_w_ = store.add(prefix + ".out.weight", Tensor::zeros(kernel_shape(out, width, 1, dim), true));
  out_b_ = store.add(prefix + ".out.bias", Tensor::zeros(bias_shape(out, dim), true));
}

Tensor SpectralBackbone::conv1x1(const Tensor& x, const Tensor& w, const Tensor& b) const {
  return add(conv(x, w, Padding::zero), b);
}

Tensor SpectralBackbone::forward(const Tensor& x) const {
  Tensor h = conv1x1(x, lift_w_, lift_b_);
  for (std::size_t i = 0; i < spectral_.size(); ++i) {
    h = gelu(add(spectral_multiply(h, spectral_[i], modes_), conv1x1(h, mix_w_[i], mix_b_[i])));
  }
  h = gelu(conv1x1(h, proj_w_, proj_b_));
  return conv1x1(h, out_w_, out_b_);
}

Mlp::Mlp(const std::vector<std::size_t>& sizes, Activation act, bool zero_last, CounterRng& rng, ParamStore& store,
         const std::string& prefix)
    : act_(act) {
  if (sizes.size() < 2) throw std::invalid_argument("Mlp needs input and output sizes");
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    const bool last = i + 2 == sizes.size();
    Tensor w = last && zero_last ? Tensor::zeros({sizes[i], sizes[i + 1]}, true)
                                 : kaiming_uniform({sizes[i], sizes[i + 1]}, sizes[i], rng);
    weights_.push_back(store.add(prefix + ".fc" + std::to_string(i) + ".weight", w));
    biases_.push_back(store.add(prefix + ".fc" + std::to_string(i) + ".bias", Tensor::zeros({sizes[i + 1]}, true)));
  }
}

Tensor Mlp::forward(const Tensor& x) const {
  Tensor h = x;
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    h = linear(h, weights_[i], biases_[i]);
    if (i + 1 < weights_.size()) h = activate(h, act_);
  }
  return h;
}

}  // namespace spdectl::nn
