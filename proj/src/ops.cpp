#include "han/ops.hpp"

#include <Eigen/Core>
#include <cmath>
#include <stdexcept>

#include "han/errors.hpp"

namespace han {

using detail::make_result;

namespace {

// Strides of `in` viewed against `out` (right-aligned); 0 on broadcast axes.
std::vector<std::size_t> broadcast_strides(const Shape& in, const Shape& out) {
  std::vector<std::size_t> strides(out.size(), 0);
  std::size_t stride = 1;
  const std::size_t offset = out.size() - in.size();
  for (std::size_t i = in.size(); i-- > 0;) {
    strides[offset + i] = in[i] == 1 ? 0 : stride;
    stride *= in[i];
  }
  return strides;
}

// Calls fn(out_index, a_index, b_index) over every element of `out`.
template <typename Fn>
void for_each_broadcast(const Shape& out, const Shape& a, const Shape& b, Fn&& fn) {
  const std::size_t n = shape_numel(out);
  if (a == out && b == out) {
    for (std::size_t i = 0; i < n; ++i) fn(i, i, i);
    return;
  }
  const auto sa = broadcast_strides(a, out);
  const auto sb = broadcast_strides(b, out);
  std::vector<std::size_t> idx(out.size(), 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t i = 0; i < n; ++i) {
    fn(i, ia, ib);
    for (std::size_t d = out.size(); d-- > 0;) {
      ++idx[d];
      ia += sa[d];
      ib += sb[d];
      if (idx[d] < out[d]) break;
      ia -= sa[d] * idx[d];
      ib -= sb[d] * idx[d];
      idx[d] = 0;
    }
  }
}

enum class BinaryOp { Add, Sub, Mul };

Tensor binary(const Tensor& a, const Tensor& b, BinaryOp op, const char* name) {
  const Shape out_shape = broadcast_shape(a.shape(), b.shape());
  std::vector<Real> out(shape_numel(out_shape));
  const auto da = a.data();
  const auto db = b.data();
  for_each_broadcast(out_shape, a.shape(), b.shape(),
                     [&](std::size_t i, std::size_t ia, std::size_t ib) {
                       switch (op) {
                         case BinaryOp::Add: out[i] = da[ia] + db[ib]; break;
                         case BinaryOp::Sub: out[i] = da[ia] - db[ib]; break;
                         case BinaryOp::Mul: out[i] = da[ia] * db[ib]; break;
                       }
                     });
  auto ai = a.impl_ptr();
  auto bi = b.impl_ptr();
  return make_result(name, out_shape, std::move(out), {a, b},
                     [ai, bi, op, out_shape](const TensorImpl& o) {
                       std::vector<Real> ga, gb;
                       if (ai->requires_grad) ga.assign(ai->data.size(), 0.0);
                       if (bi->requires_grad) gb.assign(bi->data.size(), 0.0);
                       for_each_broadcast(
                           out_shape, ai->shape, bi->shape,
                           [&](std::size_t i, std::size_t ia, std::size_t ib) {
                             const Real g = o.grad[i];
                             switch (op) {
                               case BinaryOp::Add:
                                 if (!ga.empty()) ga[ia] += g;
                                 if (!gb.empty()) gb[ib] += g;
                                 break;
                               case BinaryOp::Sub:
                                 if (!ga.empty()) ga[ia] += g;
                                 if (!gb.empty()) gb[ib] -= g;
                                 break;
                               case BinaryOp::Mul:
                                 if (!ga.empty()) ga[ia] += g * bi->data[ib];
                                 if (!gb.empty()) gb[ib] += g * ai->data[ia];
                                 break;
                             }
                           });
                       if (!ga.empty()) ai->accumulate_grad(ga);
                       if (!gb.empty()) bi->accumulate_grad(gb);
                     });
}

// Elementwise unary op whose derivative is expressed from (x, y).
template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& x, const char* name, Fwd fwd, Deriv deriv) {
  const auto dx = x.data();
  std::vector<Real> out(dx.size());
  for (std::size_t i = 0; i < dx.size(); ++i) out[i] = fwd(dx[i]);
  auto xi = x.impl_ptr();
  return make_result(name, x.shape(), std::move(out), {x}, [xi, deriv](const TensorImpl& o) {
    std::vector<Real> g(o.grad.size());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = o.grad[i] * deriv(xi->data[i], o.data[i]);
    xi->accumulate_grad(g);
  });
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + " expects rank " + std::to_string(rank) + ", got " +
                     shape_to_string(t.shape()));
  }
}

}  // namespace

Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const std::size_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw ShapeError("shapes " + shape_to_string(a) + " and " + shape_to_string(b) +
                       " are not broadcast-compatible");
    }
    out[i] = std::max(da, db);
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryOp::Add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryOp::Sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryOp::Mul, "mul"); }

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor scale(const Tensor& a, Real factor) {
  return unary(
      a, "scale", [factor](Real v) { return v * factor; },
      [factor](Real, Real) { return factor; });
}

Tensor add_scalar(const Tensor& a, Real value) {
  return unary(
      a, "add_scalar", [value](Real v) { return v + value; }, [](Real, Real) { return 1.0; });
}

Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
Tensor operator-(const Tensor& a) { return neg(a); }

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul inner dimensions differ: " + shape_to_string(a.shape()) + " x " +
                     shape_to_string(b.shape()));
  }
  using RowMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using CMap = Eigen::Map<const RowMat>;
  using MMap = Eigen::Map<RowMat>;
  std::vector<Real> out(m * n);
  MMap(out.data(), m, n).noalias() = CMap(a.data().data(), m, k) * CMap(b.data().data(), k, n);
  auto ai = a.impl_ptr();
  auto bi = b.impl_ptr();
  return make_result("matmul", {m, n}, std::move(out), {a, b}, [ai, bi, m, k, n](const TensorImpl& o) {
    CMap dc(o.grad.data(), m, n);
    if (ai->requires_grad) {
      std::vector<Real> ga(m * k);
      MMap(ga.data(), m, k).noalias() = dc * CMap(bi->data.data(), k, n).transpose();
      ai->accumulate_grad(ga);
    }
    if (bi->requires_grad) {
      std::vector<Real> gb(k * n);
      MMap(gb.data(), k, n).noalias() = CMap(ai->data.data(), m, k).transpose() * dc;
      bi->accumulate_grad(gb);
    }
  });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x, "sigmoid",
      [](Real v) {
        // Split by sign so exp never overflows.
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        const Real e = std::exp(v);
        return e / (1.0 + e);
      },
      [](Real, Real y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, "relu", [](Real v) { return v > 0 ? v : 0.0; },
      [](Real v, Real) { return v > 0 ? 1.0 : 0.0; });
}

Tensor elu(const Tensor& x, Real alpha) {
  return unary(
      x, "elu", [alpha](Real v) { return v > 0 ? v : alpha * std::expm1(v); },
      [alpha](Real v, Real y) { return v > 0 ? 1.0 : y + alpha; });
}

Tensor log(const Tensor& x) {
  for (Real v : x.data()) {
    if (std::isnan(v)) throw NumericalError("log of NaN");
    if (!(v > 0)) throw std::domain_error("log of non-positive value " + std::to_string(v));
  }
  return unary(
      x, "log", [](Real v) { return std::log(v); }, [](Real v, Real) { return 1.0 / v; });
}

Tensor clamp(const Tensor& x, Real lo, Real hi) {
  if (lo > hi) throw std::invalid_argument("clamp bounds out of order");
  return unary(
      x, "clamp", [lo, hi](Real v) { return std::clamp(v, lo, hi); },
      [lo, hi](Real v, Real) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

Tensor sum(const Tensor& x) {
  Real s = 0;
  for (Real v : x.data()) s += v;
  auto xi = x.impl_ptr();
  return make_result("sum", {1}, {s}, {x}, [xi](const TensorImpl& o) {
    xi->accumulate_grad(std::vector<Real>(xi->data.size(), o.grad[0]));
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<Real>(x.numel())); }

Tensor mean_spatial(const Tensor& x) {
  require_rank(x, 4, "mean_spatial");
  const std::size_t nc = x.dim(0) * x.dim(1);
  const std::size_t hw = x.dim(2) * x.dim(3);
  const auto dx = x.data();
  std::vector<Real> out(nc);
  for (std::size_t i = 0; i < nc; ++i) {
    Real s = 0;
    for (std::size_t j = 0; j < hw; ++j) s += dx[i * hw + j];
    out[i] = s / static_cast<Real>(hw);
  }
  auto xi = x.impl_ptr();
  return make_result("mean_spatial", {x.dim(0), x.dim(1)}, std::move(out), {x},
                     [xi, nc, hw](const TensorImpl& o) {
                       std::vector<Real> g(nc * hw);
                       const Real inv = 1.0 / static_cast<Real>(hw);
                       for (std::size_t i = 0; i < nc; ++i) {
                         for (std::size_t j = 0; j < hw; ++j) g[i * hw + j] = o.grad[i] * inv;
                       }
                       xi->accumulate_grad(g);
                     });
}

Tensor reshape(const Tensor& x, const Shape& shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("cannot reshape " + shape_to_string(x.shape()) + " to " +
                     shape_to_string(shape));
  }
  auto xi = x.impl_ptr();
  return make_result("reshape", shape, std::vector<Real>(x.data().begin(), x.data().end()), {x},
                     [xi](const TensorImpl& o) { xi->accumulate_grad(o.grad); });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  std::vector<Tensor> live;
  for (const auto& p : parts) {
    if (p.defined()) live.push_back(p);
  }
  if (live.empty()) throw ShapeError("concat of no tensors");
  if (live.size() == 1) return live.front();

  const Shape& ref = live.front().shape();
  if (axis >= ref.size()) throw ShapeError("concat axis out of range");
  Shape out_shape = ref;
  out_shape[axis] = 0;
  for (const auto& p : live) {
    const Shape& s = p.shape();
    bool ok = s.size() == ref.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d) ok = d == axis || s[d] == ref[d];
    if (!ok) {
      throw ShapeError("concat mismatch: " + shape_to_string(ref) + " vs " + shape_to_string(s));
    }
    out_shape[axis] += s[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= ref[d];
  for (std::size_t d = axis + 1; d < ref.size(); ++d) inner *= ref[d];
  const std::size_t out_row = out_shape[axis] * inner;

  std::vector<Real> out(shape_numel(out_shape));
  std::vector<std::size_t> widths;
  std::size_t offset = 0;
  for (const auto& p : live) {
    const std::size_t w = p.shape()[axis] * inner;
    const auto src = p.data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(src.begin() + o * w, w, out.begin() + o * out_row + offset);
    }
    widths.push_back(w);
    offset += w;
  }
  std::vector<std::shared_ptr<TensorImpl>> impls;
  for (const auto& p : live) impls.push_back(p.impl_ptr());
  return make_result("concat", out_shape, std::move(out), live,
                     [impls, widths, outer, out_row](const TensorImpl& o) {
                       std::size_t off = 0;
                       for (std::size_t k = 0; k < impls.size(); ++k) {
                         const std::size_t w = widths[k];
                         if (impls[k]->requires_grad) {
                           std::vector<Real> g(outer * w);
                           for (std::size_t r = 0; r < outer; ++r) {
                             std::copy_n(o.grad.begin() + r * out_row + off, w, g.begin() + r * w);
                           }
                           impls[k]->accumulate_grad(g);
                         }
                         off += w;
                       }
                     });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.defined() && b.defined()) {
    require_rank(a, 4, "concat_channels");
    require_rank(b, 4, "concat_channels");
    if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
      throw ShapeError("concat_channels spatial mismatch: " + shape_to_string(a.shape()) +
                       " vs " + shape_to_string(b.shape()));
    }
  }
  return concat({a, b}, 1);
}

Tensor upsample_nearest(const Tensor& x, std::size_t factor) {
  require_rank(x, 4, "upsample_nearest");
  if (factor < 1) throw std::invalid_argument("upsample factor must be >= 1");
  const std::size_t nc = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t oh = h * factor, ow = w * factor;
  const auto dx = x.data();
  std::vector<Real> out(nc * oh * ow);
  for (std::size_t p = 0; p < nc; ++p) {
    for (std::size_t r = 0; r < oh; ++r) {
      for (std::size_t c = 0; c < ow; ++c) {
        out[(p * oh + r) * ow + c] = dx[(p * h + r / factor) * w + c / factor];
      }
    }
  }
  auto xi = x.impl_ptr();
  return make_result("upsample_nearest", {x.dim(0), x.dim(1), oh, ow}, std::move(out), {x},
                     [xi, nc, h, w, factor, oh, ow](const TensorImpl& o) {
                       std::vector<Real> g(nc * h * w, 0.0);
                       for (std::size_t p = 0; p < nc; ++p) {
                         for (std::size_t r = 0; r < oh; ++r) {
                           for (std::size_t c = 0; c < ow; ++c) {
                             g[(p * h + r / factor) * w + c / factor] +=
                                 o.grad[(p * oh + r) * ow + c];
                           }
                         }
                       }
                       xi->accumulate_grad(g);
                     });
}

}  // namespace han
