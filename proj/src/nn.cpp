#include "han/nn.hpp"

#include <stdexcept>

#include "han/errors.hpp"

namespace han::nn {

Tensor apply_activation(const Tensor& x, Activation act) {
  switch (act) {
    case Activation::Relu: return relu(x);
    case Activation::Elu: return elu(x);
    case Activation::Sigmoid: return sigmoid(x);
    case Activation::None: break;
  }
  return x;
}

Tensor BatchNorm::forward(const Tensor& x, Mode mode) {
  return batchnorm2d(x, gamma, beta, running_mean, running_var, mode);
}

Tensor ConvBlock::forward(const Tensor& x, Mode mode) {
  const Conv2dGeometry geom{spec.stride, spec.padding};
  Tensor y = spec.transposed ? conv2d_transpose(x, kernel, bias, geom)
                             : conv2d(x, kernel, bias, geom);
  if (norm) y = norm->forward(y, mode);
  return apply_activation(y, spec.activation);
}

std::size_t ConvBlock::parameter_count() const {
  std::size_t n = kernel.numel() + bias.numel();
  if (norm) n += norm->gamma.numel() + norm->beta.numel();
  return n;
}

std::size_t parameter_count(const ConvSpec& spec) {
  std::size_t n = spec.in_channels * spec.out_channels * spec.kernel * spec.kernel + spec.out_channels;
  if (spec.batch_norm) n += 2 * spec.out_channels;
  return n;
}

void ParameterSet::add(const std::string& name, Tensor tensor) {
  if (find(name)) throw std::logic_error("duplicate parameter name: " + name);
  entries_.emplace_back(name, std::move(tensor));
}

const Tensor* ParameterSet::find(const std::string& name) const {
  for (const auto& [n, t] : entries_) {
    if (n == name) return &t;
  }
  return nullptr;
}

Tensor* ParameterSet::find(const std::string& name) {
  for (auto& [n, t] : entries_) {
    if (n == name) return &t;
  }
  return nullptr;
}

std::size_t ParameterSet::element_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : entries_) n += t.numel();
  return n;
}

void ParameterSet::clear_grads() {
  for (auto& [name, t] : entries_) t.clear_grad();
}

void ParameterSet::append(const std::string& prefix, const ParameterSet& other) {
  for (const auto& [name, t] : other) add(prefix + "." + name, t);
}

Tensor Initializer::normal(const Shape& shape, Real mean, Real stddev) {
  std::normal_distribution<Real> dist(mean, stddev);
  std::vector<Real> v(shape_numel(shape));
  for (auto& x : v) x = dist(rng_);
  return Tensor::from_data(shape, std::move(v), true);
}

ConvBlock Initializer::make_block(const ConvSpec& spec) {
  if (spec.in_channels == 0 || spec.out_channels == 0 || spec.kernel == 0 || spec.stride == 0) {
    throw UsageError("conv block extents must be positive");
  }
  ConvBlock block;
  block.spec = spec;
  const Shape kshape = spec.transposed
                           ? Shape{spec.in_channels, spec.out_channels, spec.kernel, spec.kernel}
                           : Shape{spec.out_channels, spec.in_channels, spec.kernel, spec.kernel};
  block.kernel = normal(kshape, 0.0, 0.02);
  block.bias = Tensor::zeros({spec.out_channels}, true);
  if (spec.batch_norm) {
    BatchNorm bn;
    bn.gamma = normal({spec.out_channels}, 1.0, 0.02);
    bn.beta = Tensor::zeros({spec.out_channels}, true);
    bn.running_mean = Tensor::zeros({spec.out_channels});
    bn.running_var = Tensor::full({spec.out_channels}, 1.0);
    block.norm = std::move(bn);
  }
  return block;
}

void register_block(const std::string& prefix, ConvBlock& block, ParameterSet& params,
                    ParameterSet& buffers) {
  params.add(prefix + ".weight", block.kernel);
  params.add(prefix + ".bias", block.bias);
  if (block.norm) {
    params.add(prefix + ".bn.gamma", block.norm->gamma);
    params.add(prefix + ".bn.beta", block.norm->beta);
    buffers.add(prefix + ".bn.running_mean", block.norm->running_mean);
    buffers.add(prefix + ".bn.running_var", block.norm->running_var);
  }
}

}  // namespace han::nn
