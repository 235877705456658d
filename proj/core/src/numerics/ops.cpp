// Copyright 2026 The memaudit Authors
// SPDX-License-Identifier: Apache-2.0

#include "memaudit/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "memaudit/errors.hpp"
#include "memaudit/numerics/gemm.hpp"

namespace memaudit::numerics {
namespace kernels {
namespace {

constexpr const char* kAxisNames[3] = {"D", "H", "W"};

long floor_div(long a, long b) {
  long q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

long ceil_div(long a, long b) { return -floor_div(-a, b); }

// Output positions o with 0 <= o*stride - pad + offset < in_extent.
void valid_range(std::size_t in_extent, std::size_t out_extent,
                 std::size_t offset, std::size_t stride, std::size_t pad,
                 std::size_t& lo, std::size_t& hi) {
  const long s = static_cast<long>(stride);
  const long shift = static_cast<long>(pad) - static_cast<long>(offset);
  const long l = std::max(0L, ceil_div(shift, s));
  const long h = std::min(static_cast<long>(out_extent),
                          floor_div(static_cast<long>(in_extent) - 1 + shift, s) + 1);
  lo = static_cast<std::size_t>(l);
  hi = static_cast<std::size_t>(std::max(l, h));
}

struct Batched {
  std::size_t batch;
  std::size_t channels;
  std::size_t extent[3];
};

Batched split_input(const Shape& s, const char* op) {
  if (s.size() == 4) return {1, s[0], {s[1], s[2], s[3]}};
  if (s.size() == 5) return {s[0], s[1], {s[2], s[3], s[4]}};
  throw ShapeError(std::string(op) + ": input must be [C,D,H,W] or [N,C,D,H,W], got " +
                   shape_to_string(s));
}

void check_kernel(const Shape& k, const char* op) {
  if (k.size() != 5 || k[2] != k[3] || k[2] != k[4]) {
    throw ShapeError(std::string(op) +
                     ": kernel must be [C_out,C_in,k,k,k], got " +
                     shape_to_string(k));
  }
}

// Offset of input element (id, ih, 0) shifted by the kernel column minus the
// padding. The shifted base may precede the row; only in-range columns from
// valid_range are dereferenced.
std::ptrdiff_t row_offset(const ConvDims& d, std::size_t id, std::size_t ih,
                          std::size_t kw) {
  return static_cast<std::ptrdiff_t>((id * d.in[1] + ih) * d.in[2] + kw) -
         static_cast<std::ptrdiff_t>(d.pad);
}

}  // namespace

ConvDims conv_dims(const Shape& input, const Shape& kernel, ConvGeometry geom) {
  check_kernel(kernel, "conv3d");
  if (geom.stride == 0) throw ShapeError("conv3d: stride must be positive");
  const Batched b = split_input(input, "conv3d");
  if (b.channels != kernel[1]) {
    throw ShapeError("conv3d: channel axis C has " + std::to_string(b.channels) +
                     " but kernel expects " + std::to_string(kernel[1]));
  }
  ConvDims d{};
  d.batch = b.batch;
  d.c_in = kernel[1];
  d.c_out = kernel[0];
  d.k = kernel[2];
  d.stride = geom.stride;
  d.pad = geom.pad;
  for (int a = 0; a < 3; ++a) {
    const std::size_t padded = b.extent[a] + 2 * geom.pad;
    if (d.k > padded) {
      throw ShapeError("conv3d: kernel extent " + std::to_string(d.k) +
                       " exceeds padded axis " + kAxisNames[a] + " (" +
                       std::to_string(padded) + ")");
    }
    d.in[a] = b.extent[a];
    d.out[a] = (padded - d.k) / geom.stride + 1;
  }
  return d;
}

ConvDims transposed_conv_dims(const Shape& input, const Shape& kernel,
                              ConvGeometry geom) {
  check_kernel(kernel, "transposed_conv3d");
  if (geom.stride == 0) {
    throw ShapeError("transposed_conv3d: stride must be positive");
  }
  const Batched b = split_input(input, "transposed_conv3d");
  if (b.channels != kernel[0]) {
    throw ShapeError("transposed_conv3d: channel axis C has " +
                     std::to_string(b.channels) + " but kernel expects " +
                     std::to_string(kernel[0]));
  }
  ConvDims d{};
  d.batch = b.batch;
  d.c_in = kernel[1];
  d.c_out = kernel[0];
  d.k = kernel[2];
  d.stride = geom.stride;
  d.pad = geom.pad;
  for (int a = 0; a < 3; ++a) {
    const long full = static_cast<long>((b.extent[a] - 1) * geom.stride + d.k);
    const long extent = full - 2 * static_cast<long>(geom.pad);
    if (extent <= 0) {
      throw ShapeError("transposed_conv3d: padding empties axis " +
                       std::string(kAxisNames[a]));
    }
    d.out[a] = b.extent[a];
    d.in[a] = static_cast<std::size_t>(extent);
  }
  return d;
}

namespace {

// Column matrix [C_in*k^3, out_vol] of one sample's zero-padded windows.
void im2col(const ConvDims& d, const double* x, double* col) {
  const std::size_t in_vol = d.in[0] * d.in[1] * d.in[2];
  const std::size_t out_vol = d.out[0] * d.out[1] * d.out[2];
  const std::size_t s = d.stride;
  std::size_t row = 0;
  for (std::size_t ci = 0; ci < d.c_in; ++ci) {
    const double* xc = x + ci * in_vol;
    for (std::size_t kd = 0; kd < d.k; ++kd) {
      std::size_t d0, d1;
      valid_range(d.in[0], d.out[0], kd, s, d.pad, d0, d1);
      for (std::size_t kh = 0; kh < d.k; ++kh) {
        std::size_t h0, h1;
        valid_range(d.in[1], d.out[1], kh, s, d.pad, h0, h1);
        for (std::size_t kw = 0; kw < d.k; ++kw, ++row) {
          std::size_t w0, w1;
          valid_range(d.in[2], d.out[2], kw, s, d.pad, w0, w1);
          double* c = col + row * out_vol;
          std::fill(c, c + out_vol, 0.0);
          for (std::size_t od = d0; od < d1; ++od) {
            const std::size_t id = od * s + kd - d.pad;
            for (std::size_t oh = h0; oh < h1; ++oh) {
              const std::size_t ih = oh * s + kh - d.pad;
              double* crow = c + (od * d.out[1] + oh) * d.out[2];
              const double* xrow = xc + row_offset(d, id, ih, kw);
              for (std::size_t ow = w0; ow < w1; ++ow) crow[ow] = xrow[ow * s];
            }
          }
        }
      }
    }
  }
}

// Scatter-adds a column matrix back onto one sample's input grid.
void col2im(const ConvDims& d, const double* col, double* x) {
  const std::size_t in_vol = d.in[0] * d.in[1] * d.in[2];
  const std::size_t out_vol = d.out[0] * d.out[1] * d.out[2];
  const std::size_t s = d.stride;
  std::size_t row = 0;
  for (std::size_t ci = 0; ci < d.c_in; ++ci) {
    double* xc = x + ci * in_vol;
    for (std::size_t kd = 0; kd < d.k; ++kd) {
      std::size_t d0, d1;
      valid_range(d.in[0], d.out[0], kd, s, d.pad, d0, d1);
      for (std::size_t kh = 0; kh < d.k; ++kh) {
        std::size_t h0, h1;
        valid_range(d.in[1], d.out[1], kh, s, d.pad, h0, h1);
        for (std::size_t kw = 0; kw < d.k; ++kw, ++row) {
          std::size_t w0, w1;
          valid_range(d.in[2], d.out[2], kw, s, d.pad, w0, w1);
          const double* c = col + row * out_vol;
          for (std::size_t od = d0; od < d1; ++od) {
            const std::size_t id = od * s + kd - d.pad;
            for (std::size_t oh = h0; oh < h1; ++oh) {
              const std::size_t ih = oh * s + kh - d.pad;
              const double* crow = c + (od * d.out[1] + oh) * d.out[2];
              double* xrow = xc + row_offset(d, id, ih, kw);
              for (std::size_t ow = w0; ow < w1; ++ow) xrow[ow * s] += crow[ow];
            }
          }
        }
      }
    }
  }
}

std::size_t col_rows(const ConvDims& d) { return d.c_in * d.k * d.k * d.k; }
std::size_t out_volume(const ConvDims& d) { return d.out[0] * d.out[1] * d.out[2]; }
std::size_t in_volume(const ConvDims& d) { return d.in[0] * d.in[1] * d.in[2]; }

}  // namespace

void conv_forward(const ConvDims& d, const double* x, const double* k, double* y) {
  const std::size_t rows = col_rows(d), ov = out_volume(d), iv = in_volume(d);
  std::vector<double> col(rows * ov);
  for (std::size_t n = 0; n < d.batch; ++n) {
    im2col(d, x + n * d.c_in * iv, col.data());
    // y[n] (c_out x ov) += K (c_out x rows) * col (rows x ov)
    gemm(false, false, d.c_out, ov, rows, k, col.data(), y + n * d.c_out * ov);
  }
}

void conv_backward_input(const ConvDims& d, const double* dy, const double* k,
                         double* dx) {
  const std::size_t rows = col_rows(d), ov = out_volume(d), iv = in_volume(d);
  std::vector<double> col(rows * ov);
  for (std::size_t n = 0; n < d.batch; ++n) {
    std::fill(col.begin(), col.end(), 0.0);
    // col (rows x ov) = K^T (rows x c_out) * dy[n] (c_out x ov)
    gemm(true, false, rows, ov, d.c_out, k, dy + n * d.c_out * ov, col.data());
    col2im(d, col.data(), dx + n * d.c_in * iv);
  }
}

void conv_backward_kernel(const ConvDims& d, const double* x, const double* dy,
                          double* dk) {
  const std::size_t rows = col_rows(d), ov = out_volume(d), iv = in_volume(d);
  std::vector<double> col(rows * ov);
  for (std::size_t n = 0; n < d.batch; ++n) {
    im2col(d, x + n * d.c_in * iv, col.data());
    // dK (c_out x rows) += dy[n] (c_out x ov) * col^T (ov x rows)
    gemm(false, true, d.c_out, rows, ov, dy + n * d.c_out * ov, col.data(), dk);
  }
}

}  // namespace kernels

namespace {

Shape conv_output_shape(const Shape& input, std::size_t channels,
                        const std::size_t (&extent)[3], std::size_t batch) {
  if (input.size() == 4) return {channels, extent[0], extent[1], extent[2]};
  return {batch, channels, extent[0], extent[1], extent[2]};
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shapes " + shape_to_string(a.shape()) +
                     " and " + shape_to_string(b.shape()) + " differ");
  }
}

}  // namespace

Tensor conv3d(const Tensor& input, const Tensor& kernel, ConvGeometry geom) {
  const auto d = kernels::conv_dims(input.shape(), kernel.shape(), geom);
  Tensor out(conv_output_shape(input.shape(), d.c_out, d.out, d.batch));
  kernels::conv_forward(d, input.data().data(), kernel.data().data(),
                        out.data().data());
  return out;
}

Tensor transposed_conv3d(const Tensor& input, const Tensor& kernel,
                         ConvGeometry geom) {
  const auto d =
      kernels::transposed_conv_dims(input.shape(), kernel.shape(), geom);
  Tensor out(conv_output_shape(input.shape(), d.c_in, d.in, d.batch));
  kernels::conv_backward_input(d, input.data().data(), kernel.data().data(),
                               out.data().data());
  return out;
}

Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  if (weights.rank() != 2) {
    throw ShapeError("dense: weights must be [m,n], got " +
                     shape_to_string(weights.shape()));
  }
  const std::size_t m = weights.dim(0);
  const std::size_t n = weights.dim(1);
  if (bias.shape() != Shape{m}) {
    throw ShapeError("dense: bias must be [" + std::to_string(m) + "], got " +
                     shape_to_string(bias.shape()));
  }
  std::size_t rows;
  Shape out_shape;
  if (input.rank() == 1 && input.dim(0) == n) {
    rows = 1;
    out_shape = {m};
  } else if (input.rank() == 2 && input.dim(1) == n) {
    rows = input.dim(0);
    out_shape = {rows, m};
  } else {
    throw ShapeError("dense: input " + shape_to_string(input.shape()) +
                     " does not end in feature axis of " + std::to_string(n));
  }
  Tensor out(out_shape);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = input.data().data() + r * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double* w = weights.data().data() + i * n;
      double acc = bias[i];
      for (std::size_t j = 0; j < n; ++j) acc += w[j] * x[j];
      out[r * m + i] = acc;
    }
  }
  return out;
}

Tensor leaky_relu(const Tensor& x, double slope) {
  Tensor out = x;
  for (double& v : out.data()) {
    if (v < 0.0) v *= slope;
  }
  return out;
}

Tensor tanh(const Tensor& x) {
  Tensor out = x;
  for (double& v : out.data()) v = std::tanh(v);
  return out;
}

double l1_loss(const Tensor& x, const Tensor& x_hat) {
  require_same_shape(x, x_hat, "l1_loss");
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += std::abs(x[i] - x_hat[i]);
  return acc / static_cast<double>(x.size());
}

double mse_loss(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mse_loss");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    acc += diff * diff;
  }
  return acc / static_cast<double>(a.size());
}

}  // namespace memaudit::numerics
