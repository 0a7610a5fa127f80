#include "pbgan/kernels.hpp"

#include <string>

namespace pbgan::kernels {

namespace {

void check_geometry(Conv2dGeometry g) {
  if (g.stride < 1) throw ShapeError("stride must be >= 1");
  if (g.pad < 0) throw ShapeError("pad must be >= 0");
}

void check_operands(const char* op, const Tensor& input, const Tensor& filters, const Tensor* bias) {
  if (input.rank() != 3) throw ShapeError(std::string(op) + ": input must be [h,w,c], got " + shape_str(input.shape()));
  if (filters.rank() != 4) throw ShapeError(std::string(op) + ": filters must be rank 4, got " + shape_str(filters.shape()));
  if (filters.dim(2) != input.dim(2)) {
    throw ShapeError(std::string(op) + ": filter c_in " + std::to_string(filters.dim(2)) +
                     " does not match input channels " + std::to_string(input.dim(2)));
  }
  if (bias && (bias->rank() != 1 || bias->dim(0) != filters.dim(3))) {
    throw ShapeError(std::string(op) + ": bias must be [c_out], got " + shape_str(bias->shape()));
  }
}

// Visits every (small pixel, tap) pair of a strided convolution where the
// small tensor is the conv output / deconv input and the large tensor is the
// conv input / deconv output. fn(small_offset, large_offset, tap_offset)
// receives element offsets of channel 0.
template <typename Fn>
void for_each_tap(int small_h, int small_w, int large_h, int large_w, int large_c, int small_c, int k0, int k1,
                  Conv2dGeometry g, Fn&& fn) {
  const std::size_t tap_stride = static_cast<std::size_t>(large_c) * small_c;
  for (int y = 0; y < small_h; ++y) {
    for (int x = 0; x < small_w; ++x) {
      const std::size_t small_off = (static_cast<std::size_t>(y) * small_w + x) * small_c;
      for (int i = 0; i < k0; ++i) {
        const int ly = y * g.stride + i - g.pad;
        if (ly < 0 || ly >= large_h) continue;
        for (int j = 0; j < k1; ++j) {
          const int lx = x * g.stride + j - g.pad;
          if (lx < 0 || lx >= large_w) continue;
          const std::size_t large_off = (static_cast<std::size_t>(ly) * large_w + lx) * large_c;
          const std::size_t tap_off = (static_cast<std::size_t>(i) * k1 + j) * tap_stride;
          fn(small_off, large_off, tap_off);
        }
      }
    }
  }
}

}  // namespace

int conv_out_extent(int in, int kernel, Conv2dGeometry g) {
  check_geometry(g);
  const int span = in + 2 * g.pad - kernel;
  if (span < 0 || span % g.stride != 0) {
    throw ShapeError("conv2d: non-integral output extent for input " + std::to_string(in) + ", kernel " +
                     std::to_string(kernel) + ", stride " + std::to_string(g.stride) + ", pad " +
                     std::to_string(g.pad));
  }
  return span / g.stride + 1;
}

int deconv_out_extent(int in, int kernel, Conv2dGeometry g) {
  check_geometry(g);
  const int out = (in - 1) * g.stride - 2 * g.pad + kernel;
  if (out <= 0) throw ShapeError("deconv2d: non-positive output extent");
  return out;
}

Tensor conv2d(const Tensor& input, const Tensor& filters, const Tensor& bias, Conv2dGeometry g) {
  check_operands("conv2d", input, filters, &bias);
  const int h = input.dim(0), w = input.dim(1), ci = input.dim(2);
  const int k0 = filters.dim(0), k1 = filters.dim(1), co = filters.dim(3);
  const int oh = conv_out_extent(h, k0, g), ow = conv_out_extent(w, k1, g);

  Tensor out({oh, ow, co});
  auto o = out.data();
  const auto in = input.data();
  const auto f = filters.data();
  const auto b = bias.data();
  for (std::size_t p = 0; p < static_cast<std::size_t>(oh) * ow; ++p) {
    for (int c = 0; c < co; ++c) o[p * co + c] = b[c];
  }
  for_each_tap(oh, ow, h, w, ci, co, k0, k1, g, [&](std::size_t so, std::size_t lo, std::size_t to) {
    double* dst = &o[so];
    for (int c = 0; c < ci; ++c) {
      const double v = in[lo + c];
      const double* row = &f[to + static_cast<std::size_t>(c) * co];
      for (int k = 0; k < co; ++k) dst[k] += v * row[k];
    }
  });
  return out;
}

Tensor conv2d_grad_input(const Tensor& grad_out, const Tensor& filters, const Shape& input_shape,
                         Conv2dGeometry g) {
  const int h = input_shape[0], w = input_shape[1], ci = input_shape[2];
  const int k0 = filters.dim(0), k1 = filters.dim(1), co = filters.dim(3);
  Tensor gin(input_shape);
  auto gi = gin.data();
  const auto go = grad_out.data();
  const auto f = filters.data();
  for_each_tap(grad_out.dim(0), grad_out.dim(1), h, w, ci, co, k0, k1, g,
               [&](std::size_t so, std::size_t lo, std::size_t to) {
                 const double* src = &go[so];
                 for (int c = 0; c < ci; ++c) {
                   const double* row = &f[to + static_cast<std::size_t>(c) * co];
                   double acc = 0.0;
                   for (int k = 0; k < co; ++k) acc += src[k] * row[k];
                   gi[lo + c] += acc;
                 }
               });
  return gin;
}

Tensor conv2d_grad_filters(const Tensor& input, const Tensor& grad_out, const Shape& filter_shape,
                           Conv2dGeometry g) {
  const int h = input.dim(0), w = input.dim(1), ci = input.dim(2);
  const int k0 = filter_shape[0], k1 = filter_shape[1], co = filter_shape[3];
  Tensor gf(filter_shape);
  auto gfd = gf.data();
  const auto in = input.data();
  const auto go = grad_out.data();
  for_each_tap(grad_out.dim(0), grad_out.dim(1), h, w, ci, co, k0, k1, g,
               [&](std::size_t so, std::size_t lo, std::size_t to) {
                 const double* src = &go[so];
                 for (int c = 0; c < ci; ++c) {
                   const double v = in[lo + c];
                   double* row = &gfd[to + static_cast<std::size_t>(c) * co];
                   for (int k = 0; k < co; ++k) row[k] += v * src[k];
                 }
               });
  return gf;
}

Tensor deconv2d(const Tensor& input, const Tensor& filters, const Tensor& bias, Conv2dGeometry g) {
  check_operands("deconv2d", input, filters, &bias);
  const int h = input.dim(0), w = input.dim(1), ci = input.dim(2);
  const int k0 = filters.dim(0), k1 = filters.dim(1), co = filters.dim(3);
  const int oh = deconv_out_extent(h, k0, g), ow = deconv_out_extent(w, k1, g);

  Tensor out({oh, ow, co});
  auto o = out.data();
  const auto in = input.data();
  const auto f = filters.data();
  const auto b = bias.data();
  for (std::size_t p = 0; p < static_cast<std::size_t>(oh) * ow; ++p) {
    for (int c = 0; c < co; ++c) o[p * co + c] = b[c];
  }
  for_each_tap(h, w, oh, ow, co, ci, k0, k1, g, [&](std::size_t so, std::size_t lo, std::size_t to) {
    double* dst = &o[lo];
    for (int c = 0; c < ci; ++c) {
      const double v = in[so + c];
      const double* row = &f[to + static_cast<std::size_t>(c) * co];
      for (int k = 0; k < co; ++k) dst[k] += v * row[k];
    }
  });
  return out;
}

Tensor deconv2d_grad_input(const Tensor& grad_out, const Tensor& filters, const Shape& input_shape,
                           Conv2dGeometry g) {
  const int h = input_shape[0], w = input_shape[1], ci = input_shape[2];
  const int k0 = filters.dim(0), k1 = filters.dim(1), co = filters.dim(3);
  Tensor gin(input_shape);
  auto gi = gin.data();
  const auto go = grad_out.data();
  const auto f = filters.data();
  for_each_tap(h, w, grad_out.dim(0), grad_out.dim(1), co, ci, k0, k1, g,
               [&](std::size_t so, std::size_t lo, std::size_t to) {
                 const double* src = &go[lo];
                 for (int c = 0; c < ci; ++c) {
                   const double* row = &f[to + static_cast<std::size_t>(c) * co];
                   double acc = 0.0;
                   for (int k = 0; k < co; ++k) acc += src[k] * row[k];
                   gi[so + c] += acc;
                 }
               });
  return gin;
}

Tensor deconv2d_grad_filters(const Tensor& input, const Tensor& grad_out, const Shape& filter_shape,
                             Conv2dGeometry g) {
  const int h = input.dim(0), w = input.dim(1), ci = input.dim(2);
  const int k0 = filter_shape[0], k1 = filter_shape[1], co = filter_shape[3];
  Tensor gf(filter_shape);
  auto gfd = gf.data();
  const auto in = input.data();
  const auto go = grad_out.data();
  for_each_tap(h, w, grad_out.dim(0), grad_out.dim(1), co, ci, k0, k1, g,
               [&](std::size_t so, std::size_t lo, std::size_t to) {
                 const double* src = &go[lo];
                 for (int c = 0; c < ci; ++c) {
                   const double v = in[so + c];
                   double* row = &gfd[to + static_cast<std::size_t>(c) * co];
                   for (int k = 0; k < co; ++k) row[k] += v * src[k];
                 }
               });
  return gf;
}

Tensor channel_sums(const Tensor& grad_out) {
  const int c = grad_out.dim(grad_out.rank() - 1);
  Tensor s({c});
  auto sd = s.data();
  const auto g = grad_out.data();
  for (std::size_t i = 0; i < g.size(); ++i) sd[i % static_cast<std::size_t>(c)] += g[i];
  return s;
}

namespace {

void check_matrix(const char* op, const Tensor& t) {
  if (t.rank() != 2) throw ShapeError(std::string(op) + ": operand must be rank 2, got " + shape_str(t.shape()));
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_matrix("matmul", a);
  check_matrix("matmul", b);
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner extents differ " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  Tensor c({m, n});
  auto cd = c.data();
  const auto ad = a.data();
  const auto bd = b.data();
  for (int i = 0; i < m; ++i) {
    double* crow = &cd[static_cast<std::size_t>(i) * n];
    for (int p = 0; p < k; ++p) {
      const double v = ad[static_cast<std::size_t>(i) * k + p];
      const double* brow = &bd[static_cast<std::size_t>(p) * n];
      for (int j = 0; j < n; ++j) crow[j] += v * brow[j];
    }
  }
  return c;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  check_matrix("matmul_tn", a);
  check_matrix("matmul_tn", b);
  const int k = a.dim(0), m = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) throw ShapeError("matmul_tn: leading extents differ");
  Tensor c({m, n});
  auto cd = c.data();
  const auto ad = a.data();
  const auto bd = b.data();
  for (int p = 0; p < k; ++p) {
    const double* brow = &bd[static_cast<std::size_t>(p) * n];
    for (int i = 0; i < m; ++i) {
      const double v = ad[static_cast<std::size_t>(p) * m + i];
      double* crow = &cd[static_cast<std::size_t>(i) * n];
      for (int j = 0; j < n; ++j) crow[j] += v * brow[j];
    }
  }
  return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  check_matrix("matmul_nt", a);
  check_matrix("matmul_nt", b);
  const int m = a.dim(0), k = a.dim(1), n = b.dim(0);
  if (b.dim(1) != k) throw ShapeError("matmul_nt: trailing extents differ");
  Tensor c({m, n});
  auto cd = c.data();
  const auto ad = a.data();
  const auto bd = b.data();
  for (int i = 0; i < m; ++i) {
    const double* arow = &ad[static_cast<std::size_t>(i) * k];
    for (int j = 0; j < n; ++j) {
      const double* brow = &bd[static_cast<std::size_t>(j) * k];
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
      cd[static_cast<std::size_t>(i) * n + j] = acc;
    }
  }
  return c;
}

}  // namespace pbgan::kernels
