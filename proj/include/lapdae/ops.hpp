#pragma once

#include "lapdae/tensor.hpp"

namespace lapdae::ops {

// Conv semantics are cross-correlation (no kernel flip). Kernels are
// (out_ch, in_ch, K, K) for conv2d and (in_ch, out_ch, K, K) for
// conv_transpose2d. All kernels are pure functions of their inputs.

int64_t conv_out_size(int64_t in, int64_t k, int stride, int padding);
int64_t conv_transpose_out_size(int64_t in, int64_t k, int stride, int padding, int output_padding);

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int padding);
Tensor conv2d_grad_input(const Tensor& gy, const Tensor& w, int stride, int padding,
                         int64_t in_h, int64_t in_w);
Tensor conv2d_grad_kernel(const Tensor& gy, const Tensor& x, int stride, int padding, int64_t k);
Tensor conv2d_grad_bias(const Tensor& gy);

// Adjoint of conv2d with the same kernel/stride/padding. output_padding
// (< stride) grows the output by rows/columns that still receive kernel
// contributions when padding >= 1; it is what makes exact 2x upsampling
// (7 -> 14) expressible with an odd kernel.
Tensor conv_transpose2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int padding,
                        int output_padding = 0);
Tensor conv_transpose2d_grad_input(const Tensor& gy, const Tensor& w, int stride, int padding);
Tensor conv_transpose2d_grad_kernel(const Tensor& gy, const Tensor& x, int stride, int padding,
                                    int64_t k);
Tensor conv_transpose2d_grad_bias(const Tensor& gy);

Tensor relu(const Tensor& x);
Tensor relu_grad(const Tensor& x, const Tensor& gy);
Tensor sigmoid(const Tensor& x);
// y is the sigmoid output (grad = gy * y * (1 - y)).
Tensor sigmoid_grad(const Tensor& y, const Tensor& gy);

// Mean over all elements of (z - x)^2, accumulated in double.
double mse(const Tensor& z, const Tensor& x);
Tensor mse_grad_z(const Tensor& z, const Tensor& x);

// <a, b> accumulated in double; shapes must match.
double dot(const Tensor& a, const Tensor& b);

} // namespace lapdae::ops
