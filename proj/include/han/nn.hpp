#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "han/ops.hpp"
#include "han/tensor.hpp"

namespace han::nn {

enum class Activation { None, Relu, Elu, Sigmoid };

Tensor apply_activation(const Tensor& x, Activation act);

struct BatchNorm {
  Tensor gamma;
  Tensor beta;
  Tensor running_mean;
  Tensor running_var;

  Tensor forward(const Tensor& x, Mode mode);
};

struct ConvSpec {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t padding = 1;
  bool batch_norm = true;
  Activation activation = Activation::None;
  bool transposed = false;
};

// Conv (or transposed conv) -> BatchNorm -> activation, in that order.
// Transposed kernels are stored [c_in, c_out, k, k]; regular ones [c_out, c_in, k, k].
struct ConvBlock {
  ConvSpec spec;
  Tensor kernel;
  Tensor bias;
  std::optional<BatchNorm> norm;

  Tensor forward(const Tensor& x, Mode mode);
  std::size_t parameter_count() const;
};

// Ordered name -> tensor table. Names are unique; order is registration order.
class ParameterSet {
 public:
  void add(const std::string& name, Tensor tensor);
  const Tensor* find(const std::string& name) const;
  Tensor* find(const std::string& name);

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::size_t element_count() const;

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  void clear_grads();
  // Merges `other` under `prefix + "."`.
  void append(const std::string& prefix, const ParameterSet& other);

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

// Seeded source for every trainable tensor: kernels ~ N(0, 0.02),
// batch-norm gamma ~ N(1, 0.02), beta = 0, biases = 0.
class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}

  Tensor normal(const Shape& shape, Real mean, Real stddev);
  ConvBlock make_block(const ConvSpec& spec);

 private:
  std::mt19937_64 rng_;
};

// Registers the trainable tensors of `block` as <prefix>.weight, .bias,
// .bn.gamma, .bn.beta and the running stats as buffers.
void register_block(const std::string& prefix, ConvBlock& block, ParameterSet& params,
                    ParameterSet& buffers);

// Parameter count implied by a spec, without building the block.
std::size_t parameter_count(const ConvSpec& spec);

}  // namespace han::nn
