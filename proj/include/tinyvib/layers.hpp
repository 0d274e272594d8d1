#pragma once

// Reference float/double kernels for the CNN layers, channels-last layout.
// Forward kernels overwrite their outputs; backward kernels overwrite the
// input gradient and accumulate into weight/bias gradients.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>

#include "tinyvib/nn.hpp"

namespace tinyvib::layers {

struct ConvGeometry {
  Shape out;
  std::size_t pad_top = 0;
  std::size_t pad_left = 0;
};

inline ConvGeometry conv_geometry(const Conv2D& l, const Shape& in) {
  ConvGeometry g;
  g.out.c = l.c_out;
  if (l.padding == Padding::Same) {
    g.out.h = (in.h + l.stride - 1) / l.stride;
    g.out.w = (in.w + l.stride - 1) / l.stride;
    const std::size_t need_h = (g.out.h - 1) * l.stride + l.kh;
    const std::size_t need_w = (g.out.w - 1) * l.stride + l.kw;
    g.pad_top = need_h > in.h ? (need_h - in.h) / 2 : 0;
    g.pad_left = need_w > in.w ? (need_w - in.w) / 2 : 0;
  } else {
    g.out.h = in.h >= l.kh ? (in.h - l.kh) / l.stride + 1 : 0;
    g.out.w = in.w >= l.kw ? (in.w - l.kw) / l.stride + 1 : 0;
  }
  return g;
}

template <class T>
void relu_inplace(std::span<T> y) {
  for (T& v : y) v = v > T(0) ? v : T(0);
}

// Zeroes dy where the ReLU output was clamped.
template <class T>
void relu_backward(std::span<const T> y, std::span<T> dy) {
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (!(y[i] > T(0))) dy[i] = T(0);
  }
}

template <class T>
void conv2d_forward(const Conv2D& l, const Shape& in, std::span<const T> x, std::span<const T> w,
                    std::span<const T> b, std::span<T> y) {
  const ConvGeometry g = conv_geometry(l, in);
  for (std::size_t oy = 0; oy < g.out.h; ++oy) {
    for (std::size_t ox = 0; ox < g.out.w; ++ox) {
      for (std::size_t oc = 0; oc < l.c_out; ++oc) {
        T acc = b.empty() ? T(0) : b[oc];
        for (std::size_t ky = 0; ky < l.kh; ++ky) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * l.stride + ky) - static_cast<std::ptrdiff_t>(g.pad_top);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(in.h)) continue;
          for (std::size_t kx = 0; kx < l.kw; ++kx) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * l.stride + kx) - static_cast<std::ptrdiff_t>(g.pad_left);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(in.w)) continue;
            const T* xp = &x[(static_cast<std::size_t>(iy) * in.w + static_cast<std::size_t>(ix)) * in.c];
            const T* wp = &w[((oc * l.kh + ky) * l.kw + kx) * l.c_in];
            for (std::size_t ic = 0; ic < l.c_in; ++ic) acc += xp[ic] * wp[ic];
          }
        }
        y[(oy * g.out.w + ox) * l.c_out + oc] = acc;
      }
    }
  }
  if (l.act == Activation::Relu) relu_inplace(y);
}

// dy is the gradient w.r.t. the pre-activation output.
template <class T>
void conv2d_backward(const Conv2D& l, const Shape& in, std::span<const T> x, std::span<const T> w,
                     std::span<const T> dy, std::span<T> dx, std::span<T> dw, std::span<T> db) {
  const ConvGeometry g = conv_geometry(l, in);
  std::fill(dx.begin(), dx.end(), T(0));
  for (std::size_t oy = 0; oy < g.out.h; ++oy) {
    for (std::size_t ox = 0; ox < g.out.w; ++ox) {
      for (std::size_t oc = 0; oc < l.c_out; ++oc) {
        const T d = dy[(oy * g.out.w + ox) * l.c_out + oc];
        if (d == T(0)) continue;
        if (!db.empty()) db[oc] += d;
        for (std::size_t ky = 0; ky < l.kh; ++ky) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * l.stride + ky) - static_cast<std::ptrdiff_t>(g.pad_top);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(in.h)) continue;
          for (std::size_t kx = 0; kx < l.kw; ++kx) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * l.stride + kx) - static_cast<std::ptrdiff_t>(g.pad_left);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(in.w)) continue;
            const std::size_t xo = (static_cast<std::size_t>(iy) * in.w + static_cast<std::size_t>(ix)) * in.c;
            const std::size_t wo = ((oc * l.kh + ky) * l.kw + kx) * l.c_in;
            for (std::size_t ic = 0; ic < l.c_in; ++ic) {
              dw[wo + ic] += d * x[xo + ic];
              dx[xo + ic] += d * w[wo + ic];
            }
          }
        }
      }
    }
  }
}

template <class T>
void dense_forward(const Dense& l, std::span<const T> x, std::span<const T> w, std::span<const T> b,
                   std::span<T> y) {
  for (std::size_t o = 0; o < l.n_out; ++o) {
    T acc = b.empty() ? T(0) : b[o];
    const T* wp = &w[o * l.n_in];
    for (std::size_t i = 0; i < l.n_in; ++i) acc += wp[i] * x[i];
    y[o] = acc;
  }
  if (l.act == Activation::Relu) relu_inplace(y);
}

template <class T>
void dense_backward(const Dense& l, std::span<const T> x, std::span<const T> w, std::span<const T> dy,
                    std::span<T> dx, std::span<T> dw, std::span<T> db) {
  std::fill(dx.begin(), dx.end(), T(0));
  for (std::size_t o = 0; o < l.n_out; ++o) {
    const T d = dy[o];
    if (!db.empty()) db[o] += d;
    for (std::size_t i = 0; i < l.n_in; ++i) {
      dw[o * l.n_in + i] += d * x[i];
      dx[i] += d * w[o * l.n_in + i];
    }
  }
}

// Valid pooling, stride equal to the pool size.
inline Shape pool_shape(std::size_t ph, std::size_t pw, const Shape& in) { return {in.h / ph, in.w / pw, in.c}; }

template <class T>
void avgpool_forward(const AvgPool2D& l, const Shape& in, std::span<const T> x, std::span<T> y) {
  const Shape out = pool_shape(l.ph, l.pw, in);
  const T inv = T(1) / static_cast<T>(l.ph * l.pw);
  for (std::size_t oy = 0; oy < out.h; ++oy) {
    for (std::size_t ox = 0; ox < out.w; ++ox) {
      for (std::size_t c = 0; c < in.c; ++c) {
        T acc = T(0);
        for (std::size_t ky = 0; ky < l.ph; ++ky) {
          for (std::size_t kx = 0; kx < l.pw; ++kx) acc += x[((oy * l.ph + ky) * in.w + ox * l.pw + kx) * in.c + c];
        }
        y[(oy * out.w + ox) * in.c + c] = acc * inv;
      }
    }
  }
}

template <class T>
void avgpool_backward(const AvgPool2D& l, const Shape& in, std::span<const T> dy, std::span<T> dx) {
  const Shape out = pool_shape(l.ph, l.pw, in);
  const T inv = T(1) / static_cast<T>(l.ph * l.pw);
  std::fill(dx.begin(), dx.end(), T(0));
  for (std::size_t oy = 0; oy < out.h; ++oy) {
    for (std::size_t ox = 0; ox < out.w; ++ox) {
      for (std::size_t c = 0; c < in.c; ++c) {
        const T d = dy[(oy * out.w + ox) * in.c + c] * inv;
        for (std::size_t ky = 0; ky < l.ph; ++ky) {
          for (std::size_t kx = 0; kx < l.pw; ++kx) dx[((oy * l.ph + ky) * in.w + ox * l.pw + kx) * in.c + c] += d;
        }
      }
    }
  }
}

template <class T>
void maxpool_forward(const MaxPool2D& l, const Shape& in, std::span<const T> x, std::span<T> y) {
  const Shape out = pool_shape(l.ph, l.pw, in);
  for (std::size_t oy = 0; oy < out.h; ++oy) {
    for (std::size_t ox = 0; ox < out.w; ++ox) {
      for (std::size_t c = 0; c < in.c; ++c) {
        T best = x[((oy * l.ph) * in.w + ox * l.pw) * in.c + c];
        for (std::size_t ky = 0; ky < l.ph; ++ky) {
          for (std::size_t kx = 0; kx < l.pw; ++kx) {
            best = std::max(best, x[((oy * l.ph + ky) * in.w + ox * l.pw + kx) * in.c + c]);
          }
        }
        y[(oy * out.w + ox) * in.c + c] = best;
      }
    }
  }
}

// Gradient goes to the first maximal element of each window.
template <class T>
void maxpool_backward(const MaxPool2D& l, const Shape& in, std::span<const T> x, std::span<const T> dy,
                      std::span<T> dx) {
  const Shape out = pool_shape(l.ph, l.pw, in);
  std::fill(dx.begin(), dx.end(), T(0));
  for (std::size_t oy = 0; oy < out.h; ++oy) {
    for (std::size_t ox = 0; ox < out.w; ++ox) {
      for (std::size_t c = 0; c < in.c; ++c) {
        std::size_t arg = ((oy * l.ph) * in.w + ox * l.pw) * in.c + c;
        for (std::size_t ky = 0; ky < l.ph; ++ky) {
          for (std::size_t kx = 0; kx < l.pw; ++kx) {
            const std::size_t idx = ((oy * l.ph + ky) * in.w + ox * l.pw + kx) * in.c + c;
            if (x[idx] > x[arg]) arg = idx;
          }
        }
        dx[arg] += dy[(oy * out.w + ox) * in.c + c];
      }
    }
  }
}

template <class T>
void softmax(std::span<const T> logits, std::span<T> probs) {
  const T mx = *std::max_element(logits.begin(), logits.end());
  T sum = T(0);
  for (std::size_t i = 0; i < logits.size(); ++i) {
    probs[i] = std::exp(logits[i] - mx);
    sum += probs[i];
  }
  for (T& p : probs) p /= sum;
}

}  // namespace tinyvib::layers
