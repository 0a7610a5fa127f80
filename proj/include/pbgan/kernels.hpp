#pragma once

// Forward and adjoint kernels shared by the autodiff graph and by the
// graph-free paths (filter composition, inference).
//
// Images are [h, w, c]. Filters are (k0, k1, c_in, c_out) where k0 spans the
// image's first axis. For deconv2d the last filter axis is the output channel
// axis, so both layer kinds store the factorized axis last.

#include "pbgan/tensor.hpp"

namespace pbgan::kernels {

struct Conv2dGeometry {
  int stride = 1;
  int pad = 0;
};

int conv_out_extent(int in, int kernel, Conv2dGeometry g);
int deconv_out_extent(int in, int kernel, Conv2dGeometry g);

Tensor conv2d(const Tensor& input, const Tensor& filters, const Tensor& bias, Conv2dGeometry g);
Tensor conv2d_grad_input(const Tensor& grad_out, const Tensor& filters, const Shape& input_shape,
                         Conv2dGeometry g);
Tensor conv2d_grad_filters(const Tensor& input, const Tensor& grad_out, const Shape& filter_shape,
                           Conv2dGeometry g);

Tensor deconv2d(const Tensor& input, const Tensor& filters, const Tensor& bias, Conv2dGeometry g);
Tensor deconv2d_grad_input(const Tensor& grad_out, const Tensor& filters, const Shape& input_shape,
                           Conv2dGeometry g);
Tensor deconv2d_grad_filters(const Tensor& input, const Tensor& grad_out, const Shape& filter_shape,
                             Conv2dGeometry g);

/// Per-channel sum over spatial positions of a [h, w, c] tensor.
Tensor channel_sums(const Tensor& grad_out);

Tensor matmul(const Tensor& a, const Tensor& b);
/// a^T b without materializing the transpose.
Tensor matmul_tn(const Tensor& a, const Tensor& b);
/// a b^T without materializing the transpose.
Tensor matmul_nt(const Tensor& a, const Tensor& b);

}  // namespace pbgan::kernels
