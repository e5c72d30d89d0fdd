#pragma once

#include <cstddef>
#include <vector>

#include "han/tensor.hpp"

namespace han {

// Elementwise arithmetic with numpy-style right-aligned broadcasting.
// Gradients are summed back over broadcast axes so grad shape == input shape.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, Real factor);
Tensor add_scalar(const Tensor& a, Real value);

Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a);

Shape broadcast_shape(const Shape& a, const Shape& b);

Tensor matmul(const Tensor& a, const Tensor& b);

Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor elu(const Tensor& x, Real alpha = 1.0);
// Natural log; throws std::domain_error on non-positive input.
Tensor log(const Tensor& x);
Tensor clamp(const Tensor& x, Real lo, Real hi);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// [n,c,h,w] -> [n,c], averaging each feature map.
Tensor mean_spatial(const Tensor& x);
Tensor reshape(const Tensor& x, const Shape& shape);

// Concatenation along `axis`; undefined tensors are skipped.
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor concat_channels(const Tensor& a, const Tensor& b);

Tensor upsample_nearest(const Tensor& x, std::size_t factor);

struct Conv2dGeometry {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

// Cross-correlation. x: [n,c_in,h,w], kernel: [c_out,c_in,kh,kw], bias: [c_out]
// or undefined. Output extent is floor((h + 2p - kh) / stride) + 1.
Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias,
              Conv2dGeometry geom);
Tensor conv2d(const Tensor& x, const Tensor& kernel, std::size_t stride,
              std::size_t padding);

// Adjoint of conv2d. x: [n,c_in,h,w], kernel: [c_in,c_out,kh,kw] (the same tensor
// a conv2d mapping c_out -> c_in would use). Output extent (h-1)*stride - 2p + kh.
Tensor conv2d_transpose(const Tensor& x, const Tensor& kernel, const Tensor& bias,
                        Conv2dGeometry geom);
Tensor conv2d_transpose(const Tensor& x, const Tensor& kernel, std::size_t stride,
                        std::size_t padding);

enum class Mode { Train, Eval };

struct BatchNormOptions {
  Real eps = 1e-5;
  // running = momentum * running + (1 - momentum) * batch
  Real momentum = 0.9;
};

// Per-channel normalization over (n, h, w). In train mode updates the running
// stats in place (running_var uses the unbiased batch variance).
Tensor batchnorm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                   Tensor& running_mean, Tensor& running_var, Mode mode,
                   BatchNormOptions opts = {});

}  // namespace han
