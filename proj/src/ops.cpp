// Copyright 2026 The fbunet Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "fbunet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace fbunet
{
namespace
{

using detail::Node;

template <typename T>
Vec<T> * grad_of(Node<T> & self, std::size_t i)
{
  Node<T> & p = *self.parents[i];
  return p.requires_grad ? &p.grad_buffer() : nullptr;
}

template <typename T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;

void require_nonempty(const Shape & s, const char * op)
{
  if (s.numel() == 0) {
    throw ShapeError(std::string(op) + ": zero-sized input " + s.str());
  }
}

// Unfolds one (C, H, W) image into a (C*9, H*W) row-major patch matrix.
template <typename T>
void im2col3x3(const T * x, int channels, int height, int width, T * cols)
{
  const std::int64_t plane = std::int64_t{height} * width;
  for (int c = 0; c < channels; ++c) {
    const T * src_plane = x + c * plane;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        T * row = cols + ((c * 3 + ky) * 3 + kx) * plane;
        const int dy = ky - 1;
        const int dx = kx - 1;
        const int x0 = std::max(0, -dx);
        const int x1 = std::min(width, width - dx);
        for (int y = 0; y < height; ++y) {
          T * dst = row + std::int64_t{y} * width;
          const int iy = y + dy;
          if (iy < 0 || iy >= height) {
            std::fill(dst, dst + width, T(0));
            continue;
          }
          const T * src = src_plane + std::int64_t{iy} * width + dx;
          for (int xo = 0; xo < x0; ++xo) dst[xo] = T(0);
          std::copy(src + x0, src + x1, dst + x0);
          for (int xo = x1; xo < width; ++xo) dst[xo] = T(0);
        }
      }
    }
  }
}

// Adjoint of im2col3x3: scatter-adds patch gradients back onto the image.
template <typename T>
void col2im3x3(const T * cols, int channels, int height, int width, T * dx_img)
{
  const std::int64_t plane = std::int64_t{height} * width;
  for (int c = 0; c < channels; ++c) {
    T * dst_plane = dx_img + c * plane;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const T * row = cols + ((c * 3 + ky) * 3 + kx) * plane;
        const int dy = ky - 1;
        const int dx = kx - 1;
        const int x0 = std::max(0, -dx);
        const int x1 = std::min(width, width - dx);
        for (int y = 0; y < height; ++y) {
          const int iy = y + dy;
          if (iy < 0 || iy >= height) continue;
          const T * src = row + std::int64_t{y} * width;
          T * dst = dst_plane + std::int64_t{iy} * width + dx;
          for (int xo = x0; xo < x1; ++xo) dst[xo] += src[xo];
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T> & x, const Tensor<T> & weight, const Tensor<T> & bias)
{
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  require_nonempty(xs, "conv2d");
  require_nonempty(ws, "conv2d");
  if (ws.h != 3 || ws.w != 3) {
    throw ShapeError("conv2d: kernel must be 3x3, got " + ws.str());
  }
  if (ws.c != xs.c) {
    throw ShapeError("conv2d: weight expects " + std::to_string(ws.c) + " input channels, got " +
                     std::to_string(xs.c));
  }
  if (bias.numel() != ws.n) {
    throw ShapeError("conv2d: bias size does not match output channels");
  }
  const int cin = xs.c;
  const int cout = ws.n;
  const std::int64_t plane = xs.plane();
  const std::int64_t k = std::int64_t{cin} * 9;
  const Shape out_shape{xs.n, cout, xs.h, xs.w};

  Vec<T> out(out_shape.numel());
  RowMatrix<T> cols(k, plane);
  ConstMatMap<T> wmat(weight.data(), cout, k);
  const Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> b(bias.data(), cout);
  for (int n = 0; n < xs.n; ++n) {
    im2col3x3(x.data() + n * cin * plane, cin, xs.h, xs.w, cols.data());
    MatMap<T> o(out.data() + n * cout * plane, cout, plane);
    o.noalias() = wmat * cols;
    o.colwise() += b;
  }

  return Tensor<T>::make_result(
    out_shape, std::move(out), {x, weight, bias}, [xs, cin, cout, plane, k](Node<T> & self) {
      Vec<T> * gx = grad_of(self, 0);
      Vec<T> * gw = grad_of(self, 1);
      Vec<T> * gb = grad_of(self, 2);
      const T * xdata = self.parents[0]->values.data();
      ConstMatMap<T> wmat(self.parents[1]->values.data(), cout, k);
      RowMatrix<T> cols(k, plane);
      RowMatrix<T> dcols;
      for (int n = 0; n < xs.n; ++n) {
        ConstMatMap<T> dout(self.grad.data() + n * cout * plane, cout, plane);
        if (gb) {
          gb->matrix() += dout.rowwise().sum();
        }
        if (gw) {
          im2col3x3(xdata + n * cin * plane, cin, xs.h, xs.w, cols.data());
          MatMap<T>(gw->data(), cout, k).noalias() += dout * cols.transpose();
        }
        if (gx) {
          dcols.noalias() = wmat.transpose() * dout;
          col2im3x3(dcols.data(), cin, xs.h, xs.w, gx->data() + n * cin * plane);
        }
      }
    });
}

template <typename T>
Tensor<T> transposed_conv2d(const Tensor<T> & x, const Tensor<T> & weight, const Tensor<T> & bias)
{
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  require_nonempty(xs, "transposed_conv2d");
  require_nonempty(ws, "transposed_conv2d");
  if (ws.h != 2 || ws.w != 2) {
    throw ShapeError("transposed_conv2d: kernel must be 2x2, got " + ws.str());
  }
  if (ws.n != xs.c) {
    throw ShapeError("transposed_conv2d: weight expects " + std::to_string(ws.n) +
                     " input channels, got " + std::to_string(xs.c));
  }
  if (bias.numel() != ws.c) {
    throw ShapeError("transposed_conv2d: bias size does not match output channels");
  }
  const int cin = xs.c;
  const int cout = ws.c;
  const int h = xs.h;
  const int w = xs.w;
  const std::int64_t plane = xs.plane();
  const Shape out_shape{xs.n, cout, 2 * h, 2 * w};
  const std::int64_t out_plane = out_shape.plane();

  Vec<T> out(out_shape.numel());
  ConstMatMap<T> wmat(weight.data(), cin, std::int64_t{cout} * 4);
  RowMatrix<T> taps(std::int64_t{cout} * 4, plane);
  for (int n = 0; n < xs.n; ++n) {
    ConstMatMap<T> xin(x.data() + n * cin * plane, cin, plane);
    taps.noalias() = wmat.transpose() * xin;
    T * o = out.data() + n * cout * out_plane;
    for (int co = 0; co < cout; ++co) {
      const T bv = bias.data()[co];
      for (int tap = 0; tap < 4; ++tap) {
        const int a = tap / 2;
        const int b = tap % 2;
        const T * src = taps.data() + (co * 4 + tap) * plane;
        T * dst = o + co * out_plane;
        for (int i = 0; i < h; ++i) {
          for (int j = 0; j < w; ++j) {
            dst[(2 * i + a) * (2 * w) + 2 * j + b] = src[i * w + j] + bv;
          }
        }
      }
    }
  }

  return Tensor<T>::make_result(
    out_shape, std::move(out), {x, weight, bias},
    [xs, cin, cout, h, w, plane, out_plane](Node<T> & self) {
      Vec<T> * gx = grad_of(self, 0);
      Vec<T> * gw = grad_of(self, 1);
      Vec<T> * gb = grad_of(self, 2);
      ConstMatMap<T> wmat(self.parents[1]->values.data(), cin, std::int64_t{cout} * 4);
      RowMatrix<T> dtaps(std::int64_t{cout} * 4, plane);
      for (int n = 0; n < xs.n; ++n) {
        const T * dout = self.grad.data() + n * cout * out_plane;
        for (int co = 0; co < cout; ++co) {
          for (int tap = 0; tap < 4; ++tap) {
            const int a = tap / 2;
            const int b = tap % 2;
            T * dst = dtaps.data() + (co * 4 + tap) * plane;
            const T * src = dout + co * out_plane;
            for (int i = 0; i < h; ++i) {
              for (int j = 0; j < w; ++j) {
                dst[i * w + j] = src[(2 * i + a) * (2 * w) + 2 * j + b];
              }
            }
          }
        }
        if (gb) {
          for (int co = 0; co < cout; ++co) {
            (*gb)[co] += dtaps.middleRows(co * 4, 4).sum();
          }
        }
        if (gw) {
          ConstMatMap<T> xin(self.parents[0]->values.data() + n * cin * plane, cin, plane);
          MatMap<T>(gw->data(), cin, std::int64_t{cout} * 4).noalias() +=
            xin * dtaps.transpose();
        }
        if (gx) {
          MatMap<T>(gx->data() + n * cin * plane, cin, plane).noalias() += wmat * dtaps;
        }
      }
    });
}

template <typename T>
Tensor<T> maxpool2d(const Tensor<T> & x)
{
  const Shape xs = x.shape();
  require_nonempty(xs, "maxpool2d");
  if (xs.h % 2 != 0 || xs.w % 2 != 0) {
    throw ShapeError("maxpool2d: spatial dims must be even, got " + xs.str());
  }
  const Shape out_shape{xs.n, xs.c, xs.h / 2, xs.w / 2};
  Vec<T> out(out_shape.numel());
  std::vector<std::int64_t> argmax(static_cast<std::size_t>(out_shape.numel()));
  const T * src = x.data();
  std::int64_t o = 0;
  for (std::int64_t nc = 0; nc < std::int64_t{xs.n} * xs.c; ++nc) {
    const std::int64_t base = nc * xs.plane();
    for (int i = 0; i < out_shape.h; ++i) {
      for (int j = 0; j < out_shape.w; ++j, ++o) {
        std::int64_t best = base + std::int64_t{2 * i} * xs.w + 2 * j;
        const std::int64_t candidates[3] = {best + 1, best + xs.w, best + xs.w + 1};
        for (std::int64_t idx : candidates) {
          if (src[idx] > src[best]) best = idx;
        }
        out[o] = src[best];
        argmax[static_cast<std::size_t>(o)] = best;
      }
    }
  }
  return Tensor<T>::make_result(
    out_shape, std::move(out), {x}, [argmax = std::move(argmax)](Node<T> & self) {
      Vec<T> * gx = grad_of(self, 0);
      if (!gx) return;
      for (std::size_t o = 0; o < argmax.size(); ++o) {
        (*gx)[argmax[o]] += self.grad[static_cast<Eigen::Index>(o)];
      }
    });
}

template <typename T>
Tensor<T> pointwise(const Tensor<T> & x, Activation kind)
{
  Vec<T> out(x.numel());
  const auto & v = x.values();
  switch (kind) {
    case Activation::relu:
      out = v.max(T(0));
      break;
    case Activation::sigmoid:
      out = v.unaryExpr([](T a) { return stable_sigmoid(a); });
      break;
    case Activation::tanh:
      out = v.tanh();
      break;
  }
  return Tensor<T>::make_result(x.shape(), std::move(out), {x}, [kind](Node<T> & self) {
    Vec<T> * gx = grad_of(self, 0);
    if (!gx) return;
    const auto & y = self.values;
    switch (kind) {
      case Activation::relu:
        *gx += (self.parents[0]->values > T(0)).select(self.grad, T(0));
        break;
      case Activation::sigmoid:
        *gx += self.grad * y * (T(1) - y);
        break;
      case Activation::tanh:
        *gx += self.grad * (T(1) - y.square());
        break;
    }
  });
}

template <typename T>
Tensor<T> channel_softmax(const Tensor<T> & x)
{
  const Shape xs = x.shape();
  if (xs.c < 2) {
    throw ShapeError("channel_softmax: needs at least 2 channels, got " + xs.str());
  }
  const std::int64_t plane = xs.plane();
  Vec<T> out(xs.numel());
  for (int n = 0; n < xs.n; ++n) {
    ConstMatMap<T> in(x.data() + n * xs.c * plane, xs.c, plane);
    MatMap<T> y(out.data() + n * xs.c * plane, xs.c, plane);
    const Eigen::Matrix<T, 1, Eigen::Dynamic> peak = in.colwise().maxCoeff();
    y = (in.rowwise() - peak).array().exp().matrix();
    const Eigen::Matrix<T, 1, Eigen::Dynamic> total = y.colwise().sum();
    y.array().rowwise() /= total.array();
  }
  return Tensor<T>::make_result(xs, std::move(out), {x}, [xs, plane](Node<T> & self) {
    Vec<T> * gx = grad_of(self, 0);
    if (!gx) return;
    for (int n = 0; n < xs.n; ++n) {
      const std::int64_t off = n * xs.c * plane;
      ConstMatMap<T> y(self.values.data() + off, xs.c, plane);
      ConstMatMap<T> dy(self.grad.data() + off, xs.c, plane);
      MatMap<T> dx(gx->data() + off, xs.c, plane);
      const Eigen::Matrix<T, 1, Eigen::Dynamic> dot = y.cwiseProduct(dy).colwise().sum();
      dx.array() += y.array() * (dy.rowwise() - dot).array();
    }
  });
}

template <typename T>
Tensor<T> channel_concat(const Tensor<T> & a, const Tensor<T> & b)
{
  const Shape as = a.shape();
  const Shape bs = b.shape();
  if (as.n != bs.n || as.h != bs.h || as.w != bs.w) {
    throw ShapeError("channel_concat: mismatched shapes " + as.str() + " and " + bs.str());
  }
  const Shape out_shape{as.n, as.c + bs.c, as.h, as.w};
  const std::int64_t la = std::int64_t{as.c} * as.plane();
  const std::int64_t lb = std::int64_t{bs.c} * bs.plane();
  Vec<T> out(out_shape.numel());
  for (int n = 0; n < as.n; ++n) {
    out.segment(n * (la + lb), la) = a.values().segment(n * la, la);
    out.segment(n * (la + lb) + la, lb) = b.values().segment(n * lb, lb);
  }
  return Tensor<T>::make_result(out_shape, std::move(out), {a, b}, [as, la, lb](Node<T> & self) {
    Vec<T> * ga = grad_of(self, 0);
    Vec<T> * gb = grad_of(self, 1);
    for (int n = 0; n < as.n; ++n) {
      if (ga) ga->segment(n * la, la) += self.grad.segment(n * (la + lb), la);
      if (gb) gb->segment(n * lb, lb) += self.grad.segment(n * (la + lb) + la, lb);
    }
  });
}

template <typename T>
Tensor<T> channel_slice(const Tensor<T> & x, int begin, int count)
{
  const Shape xs = x.shape();
  if (begin < 0 || count < 0 || begin + count > xs.c) {
    throw ShapeError("channel_slice: range out of bounds for " + xs.str());
  }
  const Shape out_shape{xs.n, count, xs.h, xs.w};
  const std::int64_t plane = xs.plane();
  const std::int64_t len = count * plane;
  const std::int64_t stride = xs.c * plane;
  const std::int64_t off = begin * plane;
  Vec<T> out(out_shape.numel());
  for (int n = 0; n < xs.n; ++n) {
    out.segment(n * len, len) = x.values().segment(n * stride + off, len);
  }
  return Tensor<T>::make_result(
    out_shape, std::move(out), {x}, [xs, len, stride, off](Node<T> & self) {
      Vec<T> * gx = grad_of(self, 0);
      if (!gx) return;
      for (int n = 0; n < xs.n; ++n) {
        gx->segment(n * stride + off, len) += self.grad.segment(n * len, len);
      }
    });
}

template <typename T>
Tensor<T> elementwise(const Tensor<T> & a, const Tensor<T> & b, Elementwise kind)
{
  if (a.shape() != b.shape()) {
    throw ShapeError("elementwise: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  }
  Vec<T> out = kind == Elementwise::add ? Vec<T>(a.values() + b.values())
                                        : Vec<T>(a.values() * b.values());
  return Tensor<T>::make_result(a.shape(), std::move(out), {a, b}, [kind](Node<T> & self) {
    Vec<T> * ga = grad_of(self, 0);
    Vec<T> * gb = grad_of(self, 1);
    if (kind == Elementwise::add) {
      if (ga) *ga += self.grad;
      if (gb) *gb += self.grad;
    } else {
      if (ga) *ga += self.grad * self.parents[1]->values;
      if (gb) *gb += self.grad * self.parents[0]->values;
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T> & x, T factor)
{
  return Tensor<T>::make_result(
    x.shape(), Vec<T>(x.values() * factor), {x}, [factor](Node<T> & self) {
      if (Vec<T> * gx = grad_of(self, 0)) *gx += self.grad * factor;
    });
}

template <typename T>
Tensor<T> sum(const Tensor<T> & x)
{
  Vec<T> out(1);
  out[0] = x.values().sum();
  return Tensor<T>::make_result(Shape{1, 1, 1, 1}, std::move(out), {x}, [](Node<T> & self) {
    if (Vec<T> * gx = grad_of(self, 0)) *gx += self.grad[0];
  });
}

template <typename T>
Tensor<T> batchnorm(
  const Tensor<T> & x, const Tensor<T> & gamma, const Tensor<T> & beta, RunningStats<T> & stats,
  bool training)
{
  const Shape xs = x.shape();
  const int channels = xs.c;
  if (gamma.numel() != channels || beta.numel() != channels || stats.mean.size() != channels) {
    throw ShapeError("batchnorm: parameter size does not match channels of " + xs.str());
  }
  const std::int64_t plane = xs.plane();
  const std::int64_t count = std::int64_t{xs.n} * plane;
  if (training && count < 2) {
    throw ShapeError("batchnorm: training needs at least 2 values per channel, got " + xs.str());
  }
  const T eps = static_cast<T>(kBatchNormEpsilon);
  const T momentum = static_cast<T>(kBatchNormMomentum);
  Vec<T> mean(channels);
  Vec<T> inv_std(channels);
  const T * src = x.data();

  if (training) {
    for (int c = 0; c < channels; ++c) {
      double acc = 0.0;
      for (int n = 0; n < xs.n; ++n) {
        const T * p = src + (std::int64_t{n} * channels + c) * plane;
        for (std::int64_t i = 0; i < plane; ++i) acc += p[i];
      }
      const double mu = acc / static_cast<double>(count);
      double sq = 0.0;
      for (int n = 0; n < xs.n; ++n) {
        const T * p = src + (std::int64_t{n} * channels + c) * plane;
        for (std::int64_t i = 0; i < plane; ++i) {
          const double d = p[i] - mu;
          sq += d * d;
        }
      }
      const double var = sq / static_cast<double>(count);
      mean[c] = static_cast<T>(mu);
      inv_std[c] = static_cast<T>(1.0 / std::sqrt(var + kBatchNormEpsilon));
      stats.mean[c] = momentum * stats.mean[c] + (T(1) - momentum) * static_cast<T>(mu);
      stats.var[c] = momentum * stats.var[c] + (T(1) - momentum) * static_cast<T>(var);
    }
  } else {
    mean = stats.mean;
    inv_std = (stats.var + eps).rsqrt();
  }

  Vec<T> out(xs.numel());
  for (int n = 0; n < xs.n; ++n) {
    for (int c = 0; c < channels; ++c) {
      const std::int64_t off = (std::int64_t{n} * channels + c) * plane;
      const T a = gamma.data()[c] * inv_std[c];
      const T b = beta.data()[c] - a * mean[c];
      out.segment(off, plane) = x.values().segment(off, plane) * a + b;
    }
  }

  return Tensor<T>::make_result(
    xs, std::move(out), {x, gamma, beta},
    [xs, channels, plane, count, training, mean = std::move(mean),
     inv_std = std::move(inv_std)](Node<T> & self) {
      Vec<T> * gx = grad_of(self, 0);
      Vec<T> * gg = grad_of(self, 1);
      Vec<T> * gbeta = grad_of(self, 2);
      const Vec<T> & xv = self.parents[0]->values;
      const Vec<T> & gamma_v = self.parents[1]->values;
      for (int c = 0; c < channels; ++c) {
        double sum_dy = 0.0;
        double sum_dy_xhat = 0.0;
        for (int n = 0; n < xs.n; ++n) {
          const std::int64_t off = (std::int64_t{n} * channels + c) * plane;
          for (std::int64_t i = 0; i < plane; ++i) {
            const double dy = self.grad[off + i];
            sum_dy += dy;
            sum_dy_xhat += dy * (xv[off + i] - mean[c]) * inv_std[c];
          }
        }
        if (gg) (*gg)[c] += static_cast<T>(sum_dy_xhat);
        if (gbeta) (*gbeta)[c] += static_cast<T>(sum_dy);
        if (!gx) continue;
        const T scale_c = gamma_v[c] * inv_std[c];
        if (training) {
          const T mean_dy = static_cast<T>(sum_dy / static_cast<double>(count));
          const T mean_dy_xhat = static_cast<T>(sum_dy_xhat / static_cast<double>(count));
          for (int n = 0; n < xs.n; ++n) {
            const std::int64_t off = (std::int64_t{n} * channels + c) * plane;
            auto xhat = (xv.segment(off, plane) - mean[c]) * inv_std[c];
            gx->segment(off, plane) +=
              scale_c * (self.grad.segment(off, plane) - mean_dy - xhat * mean_dy_xhat);
          }
        } else {
          for (int n = 0; n < xs.n; ++n) {
            const std::int64_t off = (std::int64_t{n} * channels + c) * plane;
            gx->segment(off, plane) += scale_c * self.grad.segment(off, plane);
          }
        }
      }
    });
}

#define FBUNET_INSTANTIATE_OPS(T)                                                             \
  template Tensor<T> conv2d(const Tensor<T> &, const Tensor<T> &, const Tensor<T> &);         \
  template Tensor<T> transposed_conv2d(                                                       \
    const Tensor<T> &, const Tensor<T> &, const Tensor<T> &);                                 \
  template Tensor<T> maxpool2d(const Tensor<T> &);                                            \
  template Tensor<T> pointwise(const Tensor<T> &, Activation);                                \
  template Tensor<T> channel_softmax(const Tensor<T> &);                                      \
  template Tensor<T> channel_concat(const Tensor<T> &, const Tensor<T> &);                    \
  template Tensor<T> channel_slice(const Tensor<T> &, int, int);                              \
  template Tensor<T> elementwise(const Tensor<T> &, const Tensor<T> &, Elementwise);          \
  template Tensor<T> scale(const Tensor<T> &, T);                                             \
  template Tensor<T> sum(const Tensor<T> &);                                                  \
  template Tensor<T> batchnorm(                                                               \
    const Tensor<T> &, const Tensor<T> &, const Tensor<T> &, RunningStats<T> &, bool);

FBUNET_INSTANTIATE_OPS(float)
FBUNET_INSTANTIATE_OPS(double)

#undef FBUNET_INSTANTIATE_OPS

}  // namespace fbunet
