#include <cmath>
#include <initializer_list>

#include "han/errors.hpp"
#include "han/ops.hpp"

namespace han {

Tensor batchnorm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                   Tensor& running_mean, Tensor& running_var, Mode mode,
                   BatchNormOptions opts) {
  if (x.rank() != 4) throw ShapeError("batchnorm2d expects [n,c,h,w], got " + shape_to_string(x.shape()));
  const std::size_t n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  for (const Tensor* t : std::initializer_list<const Tensor*>{&gamma, &beta, &running_mean, &running_var}) {
    if (t->rank() != 1 || t->dim(0) != c) {
      throw ShapeError("batchnorm2d parameter shape " + shape_to_string(t->shape()) +
                       " does not match " + std::to_string(c) + " channels");
    }
  }
  const std::size_t m = n * plane;
  if (mode == Mode::Train && m < 2) {
    throw ShapeError("batchnorm2d in train mode needs at least 2 values per channel, got " +
                     shape_to_string(x.shape()));
  }

  const auto dx = x.data();
  const auto g = gamma.data();
  const auto b = beta.data();
  std::vector<Real> xhat(dx.size());
  std::vector<Real> inv_std(c);
  for (std::size_t k = 0; k < c; ++k) {
    Real mu, var;
    if (mode == Mode::Train) {
      Real s = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const Real* p = dx.data() + (i * c + k) * plane;
        for (std::size_t j = 0; j < plane; ++j) s += p[j];
      }
      mu = s / static_cast<Real>(m);
      Real ss = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const Real* p = dx.data() + (i * c + k) * plane;
        for (std::size_t j = 0; j < plane; ++j) ss += (p[j] - mu) * (p[j] - mu);
      }
      var = ss / static_cast<Real>(m);
      auto rm = running_mean.mutable_data();
      auto rv = running_var.mutable_data();
      rm[k] = opts.momentum * rm[k] + (1 - opts.momentum) * mu;
      rv[k] = opts.momentum * rv[k] +
              (1 - opts.momentum) * var * static_cast<Real>(m) / static_cast<Real>(m - 1);
    } else {
      mu = running_mean.data()[k];
      var = running_var.data()[k];
    }
    inv_std[k] = 1.0 / std::sqrt(var + opts.eps);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t base = (i * c + k) * plane;
      for (std::size_t j = 0; j < plane; ++j) xhat[base + j] = (dx[base + j] - mu) * inv_std[k];
    }
  }

  std::vector<Real> out(dx.size());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < c; ++k) {
      const std::size_t base = (i * c + k) * plane;
      for (std::size_t j = 0; j < plane; ++j) out[base + j] = g[k] * xhat[base + j] + b[k];
    }
  }

  auto xi = x.impl_ptr();
  auto gi = gamma.impl_ptr();
  auto bi = beta.impl_ptr();
  const bool train = mode == Mode::Train;
  return detail::make_result(
      "batchnorm2d", x.shape(), std::move(out), {x, gamma, beta},
      [xi, gi, bi, xhat = std::move(xhat), inv_std, n, c, plane, m, train](const TensorImpl& o) {
        const auto& dy = o.grad;
        std::vector<Real> dgamma(c, 0.0), dbeta(c, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t k = 0; k < c; ++k) {
            const std::size_t base = (i * c + k) * plane;
            for (std::size_t j = 0; j < plane; ++j) {
              dgamma[k] += dy[base + j] * xhat[base + j];
              dbeta[k] += dy[base + j];
            }
          }
        }
        if (xi->requires_grad) {
          std::vector<Real> gx(dy.size());
          const Real inv_m = 1.0 / static_cast<Real>(m);
          for (std::size_t k = 0; k < c; ++k) {
            const Real scale = gi->data[k] * inv_std[k];
            for (std::size_t i = 0; i < n; ++i) {
              const std::size_t base = (i * c + k) * plane;
              for (std::size_t j = 0; j < plane; ++j) {
                // Batch statistics depend on x, so the mean and variance paths
                // contribute in train mode; eval mode is a fixed affine map.
                gx[base + j] = train ? scale * (dy[base + j] - inv_m * dbeta[k] -
                                                xhat[base + j] * inv_m * dgamma[k])
                                     : scale * dy[base + j];
              }
            }
          }
          xi->accumulate_grad(gx);
        }
        if (gi->requires_grad) gi->accumulate_grad(dgamma);
        if (bi->requires_grad) bi->accumulate_grad(dbeta);
      });
}

}  // namespace han
