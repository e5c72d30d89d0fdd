#include <Eigen/Core>
#include <algorithm>
#include <string>

#include "han/errors.hpp"
#include "han/ops.hpp"

namespace han {

using detail::make_result;

namespace {

using RowMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const RowMat>;
using MMap = Eigen::Map<RowMat>;

// Sliding-window layout shared by conv2d and its transpose: a `channels` x
// `height` x `width` plane sampled by a kh x kw window into out_h x out_w spots.
struct Window {
  std::size_t channels, height, width;
  std::size_t kh, kw, stride, padding;
  std::size_t out_h, out_w;

  std::size_t rows() const { return channels * kh * kw; }
  std::size_t cols() const { return out_h * out_w; }
};

void im2col(const Real* img, const Window& g, Real* col) {
  const long pad = static_cast<long>(g.padding);
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        Real* row = col + ((c * g.kh + ki) * g.kw + kj) * g.cols();
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ki) - pad;
          Real* dst = row + oy * g.out_w;
          if (iy < 0 || iy >= static_cast<long>(g.height)) {
            std::fill_n(dst, g.out_w, 0.0);
            continue;
          }
          const Real* src = img + (c * g.height + static_cast<std::size_t>(iy)) * g.width;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kj) - pad;
            dst[ox] = (ix < 0 || ix >= static_cast<long>(g.width)) ? 0.0
                                                                   : src[static_cast<std::size_t>(ix)];
          }
        }
      }
    }
  }
}

// Scatter-add inverse of im2col; `img` must be zeroed by the caller.
void col2im(const Real* col, const Window& g, Real* img) {
  const long pad = static_cast<long>(g.padding);
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        const Real* row = col + ((c * g.kh + ki) * g.kw + kj) * g.cols();
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ki) - pad;
          if (iy < 0 || iy >= static_cast<long>(g.height)) continue;
          const Real* src = row + oy * g.out_w;
          Real* dst = img + (c * g.height + static_cast<std::size_t>(iy)) * g.width;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kj) - pad;
            if (ix >= 0 && ix < static_cast<long>(g.width)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

void check_conv_inputs(const Tensor& x, const Tensor& kernel, const Tensor& bias,
                       std::size_t bias_len, std::size_t stride, const char* op) {
  if (x.rank() != 4 || kernel.rank() != 4) {
    throw ShapeError(std::string(op) + " expects 4-d input and kernel, got " +
                     shape_to_string(x.shape()) + " and " + shape_to_string(kernel.shape()));
  }
  if (stride == 0) throw ShapeError(std::string(op) + " stride must be positive");
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != bias_len)) {
    throw ShapeError(std::string(op) + " bias shape " + shape_to_string(bias.shape()) +
                     " does not match " + std::to_string(bias_len) + " output channels");
  }
}

void add_bias(std::vector<Real>& out, const Tensor& bias, std::size_t n, std::size_t c,
              std::size_t plane) {
  if (!bias.defined()) return;
  const auto b = bias.data();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < c; ++k) {
      Real* p = out.data() + (i * c + k) * plane;
      for (std::size_t j = 0; j < plane; ++j) p[j] += b[k];
    }
  }
}

std::vector<Real> bias_grad(const std::vector<Real>& grad, std::size_t n, std::size_t c,
                            std::size_t plane) {
  std::vector<Real> g(c, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < c; ++k) {
      const Real* p = grad.data() + (i * c + k) * plane;
      Real s = 0;
      for (std::size_t j = 0; j < plane; ++j) s += p[j];
      g[k] += s;
    }
  }
  return g;
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias, Conv2dGeometry geom) {
  check_conv_inputs(x, kernel, bias, kernel.defined() ? kernel.dim(0) : 0, geom.stride, "conv2d");
  const std::size_t n = x.dim(0), c_in = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t c_out = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
  if (kernel.dim(1) != c_in) {
    throw ShapeError("conv2d channel mismatch: input " + shape_to_string(x.shape()) +
                     ", kernel " + shape_to_string(kernel.shape()));
  }
  const long span_h = static_cast<long>(h + 2 * geom.padding) - static_cast<long>(kh);
  const long span_w = static_cast<long>(w + 2 * geom.padding) - static_cast<long>(kw);
  if (span_h < 0 || span_w < 0) {
    throw ShapeError("conv2d kernel " + shape_to_string(kernel.shape()) +
                     " larger than padded input " + shape_to_string(x.shape()));
  }
  const Window g{c_in, h, w, kh, kw, geom.stride, geom.padding,
                 static_cast<std::size_t>(span_h) / geom.stride + 1,
                 static_cast<std::size_t>(span_w) / geom.stride + 1};
  const std::size_t K = g.rows(), P = g.cols(), in_plane = c_in * h * w;

  std::vector<Real> out(n * c_out * P);
  std::vector<Real> col(K * P);
  const CMap wmat(kernel.data().data(), c_out, K);
  for (std::size_t i = 0; i < n; ++i) {
    im2col(x.data().data() + i * in_plane, g, col.data());
    MMap(out.data() + i * c_out * P, c_out, P).noalias() = wmat * CMap(col.data(), K, P);
  }
  add_bias(out, bias, n, c_out, P);

  auto xi = x.impl_ptr();
  auto ki = kernel.impl_ptr();
  auto bi = bias.defined() ? bias.impl_ptr() : nullptr;
  std::vector<Tensor> inputs{x, kernel};
  if (bias.defined()) inputs.push_back(bias);
  return make_result(
      "conv2d", {n, c_out, g.out_h, g.out_w}, std::move(out), inputs,
      [xi, ki, bi, g, n, c_out, K, P, in_plane](const TensorImpl& o) {
        const CMap wm(ki->data.data(), c_out, K);
        std::vector<Real> col(K * P);
        std::vector<Real> dk, dx, dcol;
        if (ki->requires_grad) dk.assign(c_out * K, 0.0);
        if (xi->requires_grad) {
          dx.assign(n * in_plane, 0.0);
          dcol.resize(K * P);
        }
        for (std::size_t i = 0; i < n; ++i) {
          const CMap dy(o.grad.data() + i * c_out * P, c_out, P);
          if (!dk.empty()) {
            im2col(xi->data.data() + i * in_plane, g, col.data());
            MMap(dk.data(), c_out, K).noalias() += dy * CMap(col.data(), K, P).transpose();
          }
          if (!dx.empty()) {
            MMap(dcol.data(), K, P).noalias() = wm.transpose() * dy;
            col2im(dcol.data(), g, dx.data() + i * in_plane);
          }
        }
        if (!dk.empty()) ki->accumulate_grad(dk);
        if (!dx.empty()) xi->accumulate_grad(dx);
        if (bi && bi->requires_grad) bi->accumulate_grad(bias_grad(o.grad, n, c_out, P));
      });
}

Tensor conv2d(const Tensor& x, const Tensor& kernel, std::size_t stride, std::size_t padding) {
  return conv2d(x, kernel, Tensor(), {stride, padding});
}

Tensor conv2d_transpose(const Tensor& x, const Tensor& kernel, const Tensor& bias,
                        Conv2dGeometry geom) {
  check_conv_inputs(x, kernel, bias, kernel.defined() ? kernel.dim(1) : 0, geom.stride,
                    "conv2d_transpose");
  const std::size_t n = x.dim(0), c_in = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t c_out = kernel.dim(1), kh = kernel.dim(2), kw = kernel.dim(3);
  if (kernel.dim(0) != c_in) {
    throw ShapeError("conv2d_transpose channel mismatch: input " + shape_to_string(x.shape()) +
                     ", kernel " + shape_to_string(kernel.shape()));
  }
  const long out_h = static_cast<long>((h - 1) * geom.stride + kh) - 2 * static_cast<long>(geom.padding);
  const long out_w = static_cast<long>((w - 1) * geom.stride + kw) - 2 * static_cast<long>(geom.padding);
  if (out_h <= 0 || out_w <= 0) {
    throw ShapeError("conv2d_transpose geometry yields non-positive output for input " +
                     shape_to_string(x.shape()) + ", kernel " + shape_to_string(kernel.shape()));
  }
  // The transposed op scatters each input pixel through the window of the
  // forward conv that maps the (out_h, out_w) image back onto (h, w).
  const Window g{c_out, static_cast<std::size_t>(out_h), static_cast<std::size_t>(out_w),
                 kh, kw, geom.stride, geom.padding, h, w};
  const std::size_t K = g.rows(), P = g.cols(), out_plane = c_out * g.height * g.width;

  std::vector<Real> out(n * out_plane, 0.0);
  std::vector<Real> col(K * P);
  const CMap wmat(kernel.data().data(), c_in, K);
  for (std::size_t i = 0; i < n; ++i) {
    MMap(col.data(), K, P).noalias() =
        wmat.transpose() * CMap(x.data().data() + i * c_in * P, c_in, P);
    col2im(col.data(), g, out.data() + i * out_plane);
  }
  const std::size_t plane = g.height * g.width;
  add_bias(out, bias, n, c_out, plane);

  auto xi = x.impl_ptr();
  auto ki = kernel.impl_ptr();
  auto bi = bias.defined() ? bias.impl_ptr() : nullptr;
  std::vector<Tensor> inputs{x, kernel};
  if (bias.defined()) inputs.push_back(bias);
  return make_result(
      "conv2d_transpose", {n, c_out, g.height, g.width}, std::move(out), inputs,
      [xi, ki, bi, g, n, c_in, c_out, K, P, out_plane, plane](const TensorImpl& o) {
        const CMap wm(ki->data.data(), c_in, K);
        std::vector<Real> col(K * P);
        std::vector<Real> dk, dx;
        if (ki->requires_grad) dk.assign(c_in * K, 0.0);
        if (xi->requires_grad) dx.assign(n * c_in * P, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
          im2col(o.grad.data() + i * out_plane, g, col.data());
          const CMap dcol(col.data(), K, P);
          if (!dx.empty()) MMap(dx.data() + i * c_in * P, c_in, P).noalias() = wm * dcol;
          if (!dk.empty()) {
            MMap(dk.data(), c_in, K).noalias() +=
                CMap(xi->data.data() + i * c_in * P, c_in, P) * dcol.transpose();
          }
        }
        if (!dk.empty()) ki->accumulate_grad(dk);
        if (!dx.empty()) xi->accumulate_grad(dx);
        if (bi && bi->requires_grad) bi->accumulate_grad(bias_grad(o.grad, n, c_out, plane));
      });
}

Tensor conv2d_transpose(const Tensor& x, const Tensor& kernel, std::size_t stride,
                        std::size_t padding) {
  return conv2d_transpose(x, kernel, Tensor(), {stride, padding});
}

}  // namespace han
