// Copyright 2026 The memaudit Authors
// SPDX-License-Identifier: Apache-2.0

// Forward kernels over plain tensors. The differentiable versions in
// autodiff.hpp call into these together with the matching backward kernels.

#pragma once

#include <cstddef>

#include "memaudit/numerics/tensor.hpp"

namespace memaudit::numerics {

inline constexpr double kDefaultLeakySlope = 0.2;

struct ConvGeometry {
  std::size_t stride = 1;
  std::size_t pad = 0;
};

/// 3D cross-correlation with zero padding.
/// input [C_in,D,H,W] or [N,C_in,D,H,W]; kernel [C_out,C_in,k,k,k].
Tensor conv3d(const Tensor& input, const Tensor& kernel, ConvGeometry geom);

/// Adjoint of conv3d with the same kernel tensor: maps C_out channels back to
/// C_in channels, output extent (D-1)*stride - 2*pad + k.
Tensor transposed_conv3d(const Tensor& input, const Tensor& kernel,
                         ConvGeometry geom);

/// input [n] or [N,n]; weights [m,n]; bias [m].
Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias);

Tensor leaky_relu(const Tensor& x, double slope = kDefaultLeakySlope);
Tensor tanh(const Tensor& x);

/// Mean absolute error.
double l1_loss(const Tensor& x, const Tensor& x_hat);
/// Mean squared error.
double mse_loss(const Tensor& a, const Tensor& b);

namespace kernels {

// Geometry resolved for a batched convolution.
struct ConvDims {
  std::size_t batch, c_in, c_out, k;
  std::size_t in[3];
  std::size_t out[3];
  std::size_t stride, pad;
};

ConvDims conv_dims(const Shape& input, const Shape& kernel, ConvGeometry geom);
ConvDims transposed_conv_dims(const Shape& input, const Shape& kernel,
                              ConvGeometry geom);

// `x` is [N,C_in,in...], `y` is [N,C_out,out...]; all raw row-major.
void conv_forward(const ConvDims& d, const double* x, const double* k,
                  double* y);
// Accumulates into dx.
void conv_backward_input(const ConvDims& d, const double* dy, const double* k,
                         double* dx);
// Accumulates into dk.
void conv_backward_kernel(const ConvDims& d, const double* x, const double* dy,
                          double* dk);

}  // namespace kernels

}  // namespace memaudit::numerics
