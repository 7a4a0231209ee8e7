#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "kinface/numerics/autograd.hpp"

namespace kinface::ops {

template <Real T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <Real T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <Real T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

namespace detail {

template <Real T>
using NodePtr = std::shared_ptr<Node<T>>;

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw ShapeError(msg);
}

inline void require_same_shape(const char* op, const Shape& a, const Shape& b) {
  require(a == b, std::string(op) + ": shape mismatch " + shape_string(a) + " vs " + shape_string(b));
}

template <Real T, typename Fwd, typename Deriv>
Var<T> unary(const char* op, const Var<T>& x, Fwd fwd, Deriv deriv) {
  Tensor<T> out(x.shape());
  const auto& in = x.value();
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = fwd(in[i]);
  auto xn = x.node_ptr();
  return kinface::detail::make_result<T>(op, std::move(out), {xn}, [xn, deriv](Node<T>& self) {
    auto& g = xn->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * deriv(xn->value[i], self.value[i]);
  });
}

// Geometry shared by convolution and its transpose: the "image" side is
// [N, C, H, W] and the "patch" side is [C*K*K, N*OH*OW].
struct PatchGeometry {
  std::size_t batch, channels, height, width, kernel, stride, pad, out_h, out_w;

  std::size_t patch_rows() const { return channels * kernel * kernel; }
  std::size_t patch_cols() const { return batch * out_h * out_w; }
};

template <Real T>
void im2col(const T* image, const PatchGeometry& g, T* cols) {
  const std::size_t ncols = g.patch_cols();
  const std::ptrdiff_t H = static_cast<std::ptrdiff_t>(g.height);
  const std::ptrdiff_t W = static_cast<std::ptrdiff_t>(g.width);
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t kh = 0; kh < g.kernel; ++kh) {
      for (std::size_t kw = 0; kw < g.kernel; ++kw) {
        T* row = cols + ((c * g.kernel + kh) * g.kernel + kw) * ncols;
        for (std::size_t n = 0; n < g.batch; ++n) {
          const T* plane = image + (n * g.channels + c) * g.height * g.width;
          for (std::size_t oh = 0; oh < g.out_h; ++oh) {
            const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * g.stride + kh) - static_cast<std::ptrdiff_t>(g.pad);
            T* dst = row + (n * g.out_h + oh) * g.out_w;
            if (ih < 0 || ih >= H) {
              std::fill(dst, dst + g.out_w, T{0});
              continue;
            }
            for (std::size_t ow = 0; ow < g.out_w; ++ow) {
              const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * g.stride + kw) - static_cast<std::ptrdiff_t>(g.pad);
              dst[ow] = (iw < 0 || iw >= W) ? T{0} : plane[ih * W + iw];
            }
          }
        }
      }
    }
  }
}

// Adjoint of im2col; accumulates into image.
template <Real T>
void col2im(const T* cols, const PatchGeometry& g, T* image) {
  const std::size_t ncols = g.patch_cols();
  const std::ptrdiff_t H = static_cast<std::ptrdiff_t>(g.height);
  const std::ptrdiff_t W = static_cast<std::ptrdiff_t>(g.width);
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t kh = 0; kh < g.kernel; ++kh) {
      for (std::size_t kw = 0; kw < g.kernel; ++kw) {
        const T* row = cols + ((c * g.kernel + kh) * g.kernel + kw) * ncols;
        for (std::size_t n = 0; n < g.batch; ++n) {
          T* plane = image + (n * g.channels + c) * g.height * g.width;
          for (std::size_t oh = 0; oh < g.out_h; ++oh) {
            const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * g.stride + kh) - static_cast<std::ptrdiff_t>(g.pad);
            if (ih < 0 || ih >= H) continue;
            const T* src = row + (n * g.out_h + oh) * g.out_w;
            for (std::size_t ow = 0; ow < g.out_w; ++ow) {
              const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * g.stride + kw) - static_cast<std::ptrdiff_t>(g.pad);
              if (iw >= 0 && iw < W) plane[ih * W + iw] += src[ow];
            }
          }
        }
      }
    }
  }
}

// [N, C, HW] <-> [C, N*HW]
template <Real T>
void batch_to_channel_major(const T* src, std::size_t n, std::size_t c, std::size_t hw, T* dst) {
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) std::copy_n(src + (i * c + j) * hw, hw, dst + (j * n + i) * hw);
}

template <Real T>
void channel_major_to_batch(const T* src, std::size_t n, std::size_t c, std::size_t hw, T* dst) {
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) std::copy_n(src + (j * n + i) * hw, hw, dst + (i * c + j) * hw);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra

template <Real T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  detail::require(a.value().rank() == 2 && b.value().rank() == 2, "matmul: operands must be rank 2");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  detail::require(b.shape()[0] == k, "matmul: inner dimension mismatch " + shape_string(a.shape()) + " x " +
                                         shape_string(b.shape()));
  Tensor<T> out({m, n});
  MatrixMap<T>(out.data().data(), m, n).noalias() =
      ConstMatrixMap<T>(a.value().data().data(), m, k) * ConstMatrixMap<T>(b.value().data().data(), k, n);
  auto an = a.node_ptr(), bn = b.node_ptr();
  return kinface::detail::make_result<T>("matmul", std::move(out), {an, bn}, [an, bn, m, k, n](Node<T>& self) {
    ConstMatrixMap<T> g(self.grad.data().data(), m, n);
    if (an->requires_grad)
      MatrixMap<T>(an->grad_buffer().data().data(), m, k).noalias() +=
          g * ConstMatrixMap<T>(bn->value.data().data(), k, n).transpose();
    if (bn->requires_grad)
      MatrixMap<T>(bn->grad_buffer().data().data(), k, n).noalias() +=
          ConstMatrixMap<T>(an->value.data().data(), m, k).transpose() * g;
  });
}

/// Fully connected layer: x[B, in] * w[in, out] + b[out].
template <Real T>
Var<T> dense(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  detail::require(x.value().rank() == 2 && w.value().rank() == 2 && b.value().rank() == 1,
                  "dense: expected x[B,in], w[in,out], b[out]");
  const std::size_t batch = x.shape()[0], in = x.shape()[1], out_dim = w.shape()[1];
  detail::require(w.shape()[0] == in && b.shape()[0] == out_dim,
                  "dense: shape mismatch x" + shape_string(x.shape()) + " w" + shape_string(w.shape()) + " b" +
                      shape_string(b.shape()));
  Tensor<T> out({batch, out_dim});
  MatrixMap<T> y(out.data().data(), batch, out_dim);
  y.noalias() = ConstMatrixMap<T>(x.value().data().data(), batch, in) *
                ConstMatrixMap<T>(w.value().data().data(), in, out_dim);
  y.rowwise() += ConstMatrixMap<T>(b.value().data().data(), 1, out_dim).row(0);
  auto xn = x.node_ptr(), wn = w.node_ptr(), bn = b.node_ptr();
  return kinface::detail::make_result<T>(
      "dense", std::move(out), {xn, wn, bn}, [xn, wn, bn, batch, in, out_dim](Node<T>& self) {
        ConstMatrixMap<T> g(self.grad.data().data(), batch, out_dim);
        if (xn->requires_grad)
          MatrixMap<T>(xn->grad_buffer().data().data(), batch, in).noalias() +=
              g * ConstMatrixMap<T>(wn->value.data().data(), in, out_dim).transpose();
        if (wn->requires_grad)
          MatrixMap<T>(wn->grad_buffer().data().data(), in, out_dim).noalias() +=
              ConstMatrixMap<T>(xn->value.data().data(), batch, in).transpose() * g;
        if (bn->requires_grad)
          MatrixMap<T>(bn->grad_buffer().data().data(), 1, out_dim) += g.colwise().sum();
      });
}

/**
 * 2-D convolution over x[N, C, H, W] with w[O, C, K, K] and b[O].
 * Output spatial size is (H + 2*pad - K) / stride + 1.
 */
template <Real T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, std::size_t stride, std::size_t pad) {
  detail::require(x.value().rank() == 4 && w.value().rank() == 4 && b.value().rank() == 1,
                  "conv2d: expected x[N,C,H,W], w[O,C,K,K], b[O]");
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  const std::size_t N = xs[0], C = xs[1], H = xs[2], W = xs[3], O = ws[0], K = ws[2];
  detail::require(ws[1] == C && ws[3] == K && b.shape()[0] == O,
                  "conv2d: weight " + shape_string(ws) + " incompatible with input " + shape_string(xs));
  detail::require(stride > 0 && H + 2 * pad >= K && W + 2 * pad >= K, "conv2d: kernel larger than padded input");
  const detail::PatchGeometry geo{N, C, H, W, K, stride, pad, (H + 2 * pad - K) / stride + 1,
                                  (W + 2 * pad - K) / stride + 1};
  const std::size_t rows = geo.patch_rows(), cols_n = geo.patch_cols(), hw = geo.out_h * geo.out_w;

  AlignedVector<T> cols(rows * cols_n);
  detail::im2col(x.value().data().data(), geo, cols.data());
  AlignedVector<T> out_cm(O * cols_n);
  MatrixMap<T> y(out_cm.data(), O, cols_n);
  y.noalias() = ConstMatrixMap<T>(w.value().data().data(), O, rows) * ConstMatrixMap<T>(cols.data(), rows, cols_n);
  y.colwise() += ConstMatrixMap<T>(b.value().data().data(), O, 1).col(0);
  Tensor<T> out({N, O, geo.out_h, geo.out_w});
  detail::channel_major_to_batch(out_cm.data(), N, O, hw, out.data().data());

  auto xn = x.node_ptr(), wn = w.node_ptr(), bn = b.node_ptr();
  return kinface::detail::make_result<T>(
      "conv2d", std::move(out), {xn, wn, bn},
      [xn, wn, bn, geo, O, rows, cols_n, hw, cols = std::move(cols)](Node<T>& self) {
        AlignedVector<T> g_cm(O * cols_n);
        detail::batch_to_channel_major(self.grad.data().data(), geo.batch, O, hw, g_cm.data());
        ConstMatrixMap<T> g(g_cm.data(), O, cols_n);
        if (wn->requires_grad)
          MatrixMap<T>(wn->grad_buffer().data().data(), O, rows).noalias() +=
              g * ConstMatrixMap<T>(cols.data(), rows, cols_n).transpose();
        if (bn->requires_grad) MatrixMap<T>(bn->grad_buffer().data().data(), O, 1) += g.rowwise().sum();
        if (xn->requires_grad) {
          AlignedVector<T> dcols(rows * cols_n);
          MatrixMap<T>(dcols.data(), rows, cols_n).noalias() =
              ConstMatrixMap<T>(wn->value.data().data(), O, rows).transpose() * g;
          detail::col2im(dcols.data(), geo, xn->grad_buffer().data().data());
        }
      });
}

/**
 * Transposed 2-D convolution over x[N, C, H, W] with w[C, O, K, K] and b[O].
 * Output spatial size is (H - 1) * stride - 2*pad + K + output_pad; this is
 * the adjoint of conv2d with the same stride, padding and kernel.
 */
template <Real T>
Var<T> conv_transpose2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, std::size_t stride, std::size_t pad,
                        std::size_t output_pad) {
  detail::require(x.value().rank() == 4 && w.value().rank() == 4 && b.value().rank() == 1,
                  "conv_transpose2d: expected x[N,C,H,W], w[C,O,K,K], b[O]");
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  const std::size_t N = xs[0], C = xs[1], H = xs[2], W = xs[3], O = ws[1], K = ws[2];
  detail::require(ws[0] == C && ws[3] == K && b.shape()[0] == O,
                  "conv_transpose2d: weight " + shape_string(ws) + " incompatible with input " + shape_string(xs));
  detail::require(stride > 0 && output_pad < stride, "conv_transpose2d: output_pad must be below stride");
  const std::ptrdiff_t oh_s = static_cast<std::ptrdiff_t>((H - 1) * stride + K + output_pad) - 2 * static_cast<std::ptrdiff_t>(pad);
  const std::ptrdiff_t ow_s = static_cast<std::ptrdiff_t>((W - 1) * stride + K + output_pad) - 2 * static_cast<std::ptrdiff_t>(pad);
  detail::require(oh_s > 0 && ow_s > 0, "conv_transpose2d: non-positive output size");
  const std::size_t OH = static_cast<std::size_t>(oh_s), OW = static_cast<std::size_t>(ow_s);
  // Patch geometry of the output image seen as the input of the forward conv.
  const detail::PatchGeometry geo{N, O, OH, OW, K, stride, pad, H, W};
  const std::size_t rows = geo.patch_rows(), cols_n = geo.patch_cols(), hw = H * W;

  AlignedVector<T> x_cm(C * cols_n);
  detail::batch_to_channel_major(x.value().data().data(), N, C, hw, x_cm.data());
  AlignedVector<T> cols(rows * cols_n);
  MatrixMap<T>(cols.data(), rows, cols_n).noalias() =
      ConstMatrixMap<T>(w.value().data().data(), C, rows).transpose() * ConstMatrixMap<T>(x_cm.data(), C, cols_n);
  Tensor<T> out({N, O, OH, OW});
  detail::col2im(cols.data(), geo, out.data().data());
  {
    T* o = out.data().data();
    const T* bias = b.value().data().data();
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t c = 0; c < O; ++c) {
        T* plane = o + (n * O + c) * OH * OW;
        for (std::size_t i = 0; i < OH * OW; ++i) plane[i] += bias[c];
      }
  }

  auto xn = x.node_ptr(), wn = w.node_ptr(), bn = b.node_ptr();
  return kinface::detail::make_result<T>(
      "conv_transpose2d", std::move(out), {xn, wn, bn},
      [xn, wn, bn, geo, C, rows, cols_n, hw, x_cm = std::move(x_cm)](Node<T>& self) {
        const std::size_t N = geo.batch, O = geo.channels, plane = geo.height * geo.width;
        if (bn->requires_grad) {
          auto& bg = bn->grad_buffer();
          for (std::size_t n = 0; n < N; ++n)
            for (std::size_t c = 0; c < O; ++c) {
              const T* p = self.grad.data().data() + (n * O + c) * plane;
              T s{0};
              for (std::size_t i = 0; i < plane; ++i) s += p[i];
              bg[c] += s;
            }
        }
        if (!xn->requires_grad && !wn->requires_grad) return;
        AlignedVector<T> dcols(rows * cols_n);
        detail::im2col(self.grad.data().data(), geo, dcols.data());
        ConstMatrixMap<T> dc(dcols.data(), rows, cols_n);
        if (wn->requires_grad)
          MatrixMap<T>(wn->grad_buffer().data().data(), C, rows).noalias() +=
              ConstMatrixMap<T>(x_cm.data(), C, cols_n) * dc.transpose();
        if (xn->requires_grad) {
          AlignedVector<T> dx_cm(C * cols_n);
          MatrixMap<T>(dx_cm.data(), C, cols_n).noalias() = ConstMatrixMap<T>(wn->value.data().data(), C, rows) * dc;
          AlignedVector<T> dx(C * cols_n);
          detail::channel_major_to_batch(dx_cm.data(), N, C, hw, dx.data());
          auto& xg = xn->grad_buffer();
          for (std::size_t i = 0; i < dx.size(); ++i) xg[i] += dx[i];
        }
      });
}

// ---------------------------------------------------------------------------
// Elementwise

template <Real T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  detail::require_same_shape("add", a.shape(), b.shape());
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  auto an = a.node_ptr(), bn = b.node_ptr();
  return kinface::detail::make_result<T>("add", std::move(out), {an, bn}, [an, bn](Node<T>& self) {
    for (auto* p : {an.get(), bn.get()}) {
      if (!p->requires_grad) continue;
      auto& g = p->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

template <Real T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  detail::require_same_shape("sub", a.shape(), b.shape());
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
  auto an = a.node_ptr(), bn = b.node_ptr();
  return kinface::detail::make_result<T>("sub", std::move(out), {an, bn}, [an, bn](Node<T>& self) {
    if (an->requires_grad) {
      auto& g = an->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (bn->requires_grad) {
      auto& g = bn->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

template <Real T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  detail::require_same_shape("mul", a.shape(), b.shape());
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  auto an = a.node_ptr(), bn = b.node_ptr();
  return kinface::detail::make_result<T>("mul", std::move(out), {an, bn}, [an, bn](Node<T>& self) {
    if (an->requires_grad) {
      auto& g = an->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bn->value[i];
    }
    if (bn->requires_grad) {
      auto& g = bn->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * an->value[i];
    }
  });
}

/// Elementwise maximum; on ties the gradient goes to the first operand.
template <Real T>
Var<T> maximum(const Var<T>& a, const Var<T>& b) {
  detail::require_same_shape("maximum", a.shape(), b.shape());
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(a.value()[i], b.value()[i]);
  auto an = a.node_ptr(), bn = b.node_ptr();
  return kinface::detail::make_result<T>("maximum", std::move(out), {an, bn}, [an, bn](Node<T>& self) {
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const bool first = an->value[i] >= bn->value[i];
      Node<T>* p = first ? an.get() : bn.get();
      if (p->requires_grad) p->grad_buffer()[i] += self.grad[i];
    }
  });
}

template <Real T>
Var<T> scale(const Var<T>& x, T factor) {
  return detail::unary<T>("scale", x, [factor](T v) { return v * factor; }, [factor](T, T) { return factor; });
}

template <Real T>
Var<T> leaky_relu(const Var<T>& x, T slope) {
  return detail::unary<T>(
      "leaky_relu", x, [slope](T v) { return v > T{0} ? v : slope * v; },
      [slope](T v, T) { return v > T{0} ? T{1} : slope; });
}

template <Real T>
Var<T> relu(const Var<T>& x) {
  return leaky_relu<T>(x, T{0});
}

template <Real T>
Var<T> tanh(const Var<T>& x) {
  return detail::unary<T>("tanh", x, [](T v) { return std::tanh(v); }, [](T, T y) { return T{1} - y * y; });
}

template <Real T>
Var<T> sigmoid(const Var<T>& x) {
  return detail::unary<T>(
      "sigmoid", x,
      [](T v) {
        if (v >= T{0}) return T{1} / (T{1} + std::exp(-v));
        const T e = std::exp(v);
        return e / (T{1} + e);
      },
      [](T, T y) { return y * (T{1} - y); });
}

template <Real T>
Var<T> abs(const Var<T>& x) {
  return detail::unary<T>(
      "abs", x, [](T v) { return std::abs(v); },
      [](T v, T) { return v > T{0} ? T{1} : (v < T{0} ? T{-1} : T{0}); });
}

// ---------------------------------------------------------------------------
// Reductions and losses

template <Real T>
Var<T> sum(const Var<T>& x) {
  T s{0};
  for (auto v : x.value().data()) s += v;
  auto xn = x.node_ptr();
  return kinface::detail::make_result<T>("sum", Tensor<T>::scalar(s), {xn}, [xn](Node<T>& self) {
    auto& g = xn->grad_buffer();
    const T up = self.grad[0];
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += up;
  });
}

template <Real T>
Var<T> mean(const Var<T>& x) {
  const T k = static_cast<T>(x.value().size());
  T s{0};
  for (auto v : x.value().data()) s += v;
  auto xn = x.node_ptr();
  return kinface::detail::make_result<T>("mean", Tensor<T>::scalar(s / k), {xn}, [xn, k](Node<T>& self) {
    auto& g = xn->grad_buffer();
    const T up = self.grad[0] / k;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += up;
  });
}

/// Euclidean norm of the whole tensor. The subgradient at zero is zero.
template <Real T>
Var<T> l2_norm(const Var<T>& x) {
  T s{0};
  for (auto v : x.value().data()) s += v * v;
  const T norm = std::sqrt(s);
  auto xn = x.node_ptr();
  return kinface::detail::make_result<T>("l2_norm", Tensor<T>::scalar(norm), {xn}, [xn, norm](Node<T>& self) {
    if (norm == T{0}) return;
    auto& g = xn->grad_buffer();
    const T up = self.grad[0] / norm;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += up * xn->value[i];
  });
}

/// Per-row Euclidean norm of x[B, D] -> [B].
template <Real T>
Var<T> row_l2_norm(const Var<T>& x) {
  detail::require(x.value().rank() == 2, "row_l2_norm: expected rank-2 input");
  const std::size_t rows = x.shape()[0], cols = x.shape()[1];
  Tensor<T> out({rows});
  for (std::size_t r = 0; r < rows; ++r) {
    T s{0};
    for (std::size_t c = 0; c < cols; ++c) s += x.value()[r * cols + c] * x.value()[r * cols + c];
    out[r] = std::sqrt(s);
  }
  auto xn = x.node_ptr();
  return kinface::detail::make_result<T>("row_l2_norm", std::move(out), {xn}, [xn, rows, cols](Node<T>& self) {
    auto& g = xn->grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      if (self.value[r] == T{0}) continue;
      const T up = self.grad[r] / self.value[r];
      for (std::size_t c = 0; c < cols; ++c) g[r * cols + c] += up * xn->value[r * cols + c];
    }
  });
}

/// Per-row L1 norm of x[B, D] -> [B].
template <Real T>
Var<T> row_l1_norm(const Var<T>& x) {
  detail::require(x.value().rank() == 2, "row_l1_norm: expected rank-2 input");
  const std::size_t rows = x.shape()[0], cols = x.shape()[1];
  Tensor<T> out({rows});
  for (std::size_t r = 0; r < rows; ++r) {
    T s{0};
    for (std::size_t c = 0; c < cols; ++c) s += std::abs(x.value()[r * cols + c]);
    out[r] = s;
  }
  auto xn = x.node_ptr();
  return kinface::detail::make_result<T>("row_l1_norm", std::move(out), {xn}, [xn, rows, cols](Node<T>& self) {
    auto& g = xn->grad_buffer();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) {
        const T v = xn->value[r * cols + c];
        g[r * cols + c] += self.grad[r] * (v > T{0} ? T{1} : (v < T{0} ? T{-1} : T{0}));
      }
  });
}

/// Column statistics of x[B, F]: mean and biased variance, each [F].
template <Real T>
std::pair<Tensor<T>, Tensor<T>> column_moments(const Tensor<T>& x) {
  detail::require(x.rank() == 2 && x.dim(0) > 0, "column_moments: expected non-empty rank-2 input");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  Tensor<T> mean({cols}), var({cols});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) mean[c] += x[r * cols + c];
  for (auto& m : mean.data()) m /= static_cast<T>(rows);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      const T d = x[r * cols + c] - mean[c];
      var[c] += d * d;
    }
  for (auto& v : var.data()) v /= static_cast<T>(rows);
  return {std::move(mean), std::move(var)};
}

/// (x - mean) / sqrt(var + eps) per column of x[B, F], with fixed statistics.
template <Real T>
Var<T> standardize_columns(const Var<T>& x, const Tensor<T>& mean, const Tensor<T>& var, T eps) {
  detail::require(x.value().rank() == 2, "standardize_columns: expected rank-2 input");
  const std::size_t rows = x.shape()[0], cols = x.shape()[1];
  detail::require(mean.shape() == Shape{cols} && var.shape() == Shape{cols},
                  "standardize_columns: statistics must have one entry per column");
  std::vector<T> inv(cols);
  for (std::size_t c = 0; c < cols; ++c) {
    detail::require(var[c] + eps > T{0}, "standardize_columns: variance plus eps must be positive");
    inv[c] = T{1} / std::sqrt(var[c] + eps);
  }
  Tensor<T> out({rows, cols});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = (x.value()[r * cols + c] - mean[c]) * inv[c];
  auto xn = x.node_ptr();
  return kinface::detail::make_result<T>("standardize_columns", std::move(out), {xn},
                                         [xn, rows, cols, inv](Node<T>& self) {
                                           auto& g = xn->grad_buffer();
                                           for (std::size_t r = 0; r < rows; ++r)
                                             for (std::size_t c = 0; c < cols; ++c)
                                               g[r * cols + c] += self.grad[r * cols + c] * inv[c];
                                         });
}

/// Standardizes each column of x[B, F] with its own batch mean and biased
/// variance; the gradient flows through the statistics.
template <Real T>
Var<T> batch_standardize(const Var<T>& x, T eps) {
  detail::require(x.value().rank() == 2, "batch_standardize: expected rank-2 input");
  const std::size_t rows = x.shape()[0], cols = x.shape()[1];
  detail::require(rows > 0, "batch_standardize: empty batch");
  auto [mean, var] = column_moments(x.value());
  std::vector<T> inv(cols);
  for (std::size_t c = 0; c < cols; ++c) inv[c] = T{1} / std::sqrt(var[c] + eps);
  Tensor<T> out({rows, cols});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = (x.value()[r * cols + c] - mean[c]) * inv[c];
  auto xn = x.node_ptr();
  return kinface::detail::make_result<T>(
      "batch_standardize", std::move(out), {xn}, [xn, rows, cols, inv](Node<T>& self) {
        // dx = inv * (dy - mean(dy) - y * mean(dy * y)), per column
        auto& g = xn->grad_buffer();
        const T k = static_cast<T>(rows);
        for (std::size_t c = 0; c < cols; ++c) {
          T mg{0}, mgy{0};
          for (std::size_t r = 0; r < rows; ++r) {
            mg += self.grad[r * cols + c];
            mgy += self.grad[r * cols + c] * self.value[r * cols + c];
          }
          mg /= k;
          mgy /= k;
          for (std::size_t r = 0; r < rows; ++r)
            g[r * cols + c] += inv[c] * (self.grad[r * cols + c] - mg - self.value[r * cols + c] * mgy);
        }
      });
}

/// Mean squared difference between two same-shaped tensors.
template <Real T>
Var<T> mse(const Var<T>& a, const Var<T>& b) {
  detail::require_same_shape("mse", a.shape(), b.shape());
  const T k = static_cast<T>(a.value().size());
  T s{0};
  for (std::size_t i = 0; i < a.value().size(); ++i) {
    const T d = a.value()[i] - b.value()[i];
    s += d * d;
  }
  auto an = a.node_ptr(), bn = b.node_ptr();
  return kinface::detail::make_result<T>("mse", Tensor<T>::scalar(s / k), {an, bn}, [an, bn, k](Node<T>& self) {
    const T up = T{2} * self.grad[0] / k;
    for (std::size_t i = 0; i < an->value.size(); ++i) {
      const T d = up * (an->value[i] - bn->value[i]);
      if (an->requires_grad) an->grad_buffer()[i] += d;
      if (bn->requires_grad) bn->grad_buffer()[i] -= d;
    }
  });
}

/**
 * Mean binary cross-entropy of probabilities p against constant targets.
 * Probabilities are clamped to [eps, 1 - eps]; the clamp passes no gradient
 * outside that interval.
 */
template <Real T>
Var<T> binary_cross_entropy(const Var<T>& p, const Tensor<T>& target, T eps = T(1e-7)) {
  detail::require_same_shape("binary_cross_entropy", p.shape(), target.shape());
  const T lo = eps, hi = T{1} - eps;
  const T k = static_cast<T>(p.value().size());
  T s{0};
  for (std::size_t i = 0; i < p.value().size(); ++i) {
    const T q = std::clamp(p.value()[i], lo, hi);
    s -= target[i] * std::log(q) + (T{1} - target[i]) * std::log(T{1} - q);
  }
  auto pn = p.node_ptr();
  return kinface::detail::make_result<T>(
      "binary_cross_entropy", Tensor<T>::scalar(s / k), {pn}, [pn, target, lo, hi, k](Node<T>& self) {
        auto& g = pn->grad_buffer();
        const T up = self.grad[0] / k;
        for (std::size_t i = 0; i < g.size(); ++i) {
          const T q = pn->value[i];
          if (q < lo || q > hi) continue;
          g[i] -= up * (target[i] / q - (T{1} - target[i]) / (T{1} - q));
        }
      });
}

// ---------------------------------------------------------------------------
// Layout

template <Real T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  Tensor<T> out = x.value().reshaped(std::move(shape));
  auto xn = x.node_ptr();
  return kinface::detail::make_result<T>("reshape", std::move(out), {xn}, [xn](Node<T>& self) {
    auto& g = xn->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

/// Concatenates along `axis`; all other dimensions must agree.
template <Real T>
Var<T> concat(const std::vector<Var<T>>& parts, std::size_t axis) {
  detail::require(!parts.empty(), "concat: no inputs");
  const Shape& first = parts.front().shape();
  detail::require(axis < first.size(), "concat: axis out of range");
  std::size_t outer = 1, inner = 1, total_axis = 0;
  for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
  for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d) ok = d == axis || s[d] == first[d];
    detail::require(ok, "concat: incompatible shapes " + shape_string(first) + " and " + shape_string(s));
    widths.push_back(s[axis] * inner);
    total_axis += s[axis];
  }
  Shape out_shape = first;
  out_shape[axis] = total_axis;
  Tensor<T> out(out_shape);
  const std::size_t row = total_axis * inner;
  std::size_t offset = 0;
  std::vector<std::shared_ptr<Node<T>>> nodes;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const T* src = parts[k].value().data().data();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(src + o * widths[k], widths[k], out.data().data() + o * row + offset);
    offset += widths[k];
    nodes.push_back(parts[k].node_ptr());
  }
  return kinface::detail::make_result<T>("concat", std::move(out), nodes, [nodes, widths, outer, row](Node<T>& self) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      if (nodes[k]->requires_grad) {
        auto& g = nodes[k]->grad_buffer();
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t i = 0; i < widths[k]; ++i) g[o * widths[k] + i] += self.grad[o * row + off + i];
      }
      off += widths[k];
    }
  });
}

/// Tiles x[B, L] over space: out[b, l, h, w] = x[b, l].
template <Real T>
Var<T> broadcast_spatial(const Var<T>& x, std::size_t height, std::size_t width) {
  detail::require(x.value().rank() == 2, "broadcast_spatial: expected x[B,L]");
  const std::size_t B = x.shape()[0], L = x.shape()[1], hw = height * width;
  Tensor<T> out({B, L, height, width});
  for (std::size_t i = 0; i < B * L; ++i) std::fill_n(out.data().data() + i * hw, hw, x.value()[i]);
  auto xn = x.node_ptr();
  return kinface::detail::make_result<T>("broadcast_spatial", std::move(out), {xn}, [xn, B, L, hw](Node<T>& self) {
    auto& g = xn->grad_buffer();
    for (std::size_t i = 0; i < B * L; ++i) {
      T s{0};
      for (std::size_t j = 0; j < hw; ++j) s += self.grad[i * hw + j];
      g[i] += s;
    }
  });
}

}  // namespace kinface::ops
