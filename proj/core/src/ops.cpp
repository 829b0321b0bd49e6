#include "facechannel/ops.hpp"

#include <algorithm>
#include <cmath>

namespace facechannel {

template <typename T>
Tensor<T> tensor_full(const Shape& shape, T value) {
  return Tensor<T>(shape, value);
}

template <typename T>
void gemm(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
          bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, T{0});
  constexpr std::size_t kBlockK = 128;
  constexpr std::size_t kBlockN = 1024;
  for (std::size_t n0 = 0; n0 < n; n0 += kBlockN) {
    const std::size_t nb = std::min(kBlockN, n - n0);
    for (std::size_t k0 = 0; k0 < k; k0 += kBlockK) {
      const std::size_t kend = std::min(k, k0 + kBlockK);
      for (std::size_t i = 0; i < m; ++i) {
        T* __restrict crow = c + i * n + n0;
        const T* arow = a + i * k;
        for (std::size_t p = k0; p < kend; ++p) {
          const T av = arow[p];
          if (av == T{0}) continue;
          const T* __restrict brow = b + p * n + n0;
          for (std::size_t j = 0; j < nb; ++j) crow[j] += av * brow[j];
        }
      }
    }
  }
}

template <typename T>
void transpose(const T* src, std::size_t rows, std::size_t cols, T* dst) {
  constexpr std::size_t kTile = 32;
  for (std::size_t r0 = 0; r0 < rows; r0 += kTile) {
    const std::size_t r1 = std::min(rows, r0 + kTile);
    for (std::size_t c0 = 0; c0 < cols; c0 += kTile) {
      const std::size_t c1 = std::min(cols, c0 + kTile);
      for (std::size_t r = r0; r < r1; ++r) {
        for (std::size_t c = c0; c < c1; ++c) dst[c * rows + r] = src[r * cols + c];
      }
    }
  }
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank(a.shape(), 2, "matmul lhs");
  require_rank(b.shape(), 2, "matmul rhs");
  if (a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul inner dimensions differ: " + shape_to_string(a.shape()) + " x " +
                     shape_to_string(b.shape()));
  }
  Tensor<T> c({a.dim(0), b.dim(1)});
  gemm(a.dim(0), b.dim(1), a.dim(1), a.raw(), b.raw(), c.raw(), false);
  return c;
}

ConvGeometry conv_geometry(std::size_t in_h, std::size_t in_w, std::size_t kernel_h,
                           std::size_t kernel_w, Padding padding, std::size_t stride) {
  if (stride == 0) throw ParameterError("convolution stride must be >= 1");
  if (kernel_h == 0 || kernel_w == 0) throw ShapeError("convolution kernel must be non-empty");
  ConvGeometry g;
  g.in_h = in_h;
  g.in_w = in_w;
  g.kernel_h = kernel_h;
  g.kernel_w = kernel_w;
  g.stride = stride;
  if (padding == Padding::kSame) {
    if (kernel_h % 2 == 0 || kernel_w % 2 == 0) {
      throw ShapeError("'same' padding requires odd kernel sizes");
    }
    g.out_h = (in_h + stride - 1) / stride;
    g.out_w = (in_w + stride - 1) / stride;
    const auto total = [&](std::size_t out, std::size_t in, std::size_t k) -> std::size_t {
      const std::size_t need = (out - 1) * stride + k;
      return need > in ? need - in : 0;
    };
    g.pad_top = total(g.out_h, in_h, kernel_h) / 2;
    g.pad_left = total(g.out_w, in_w, kernel_w) / 2;
  } else {
    if (kernel_h > in_h || kernel_w > in_w) {
      throw ShapeError("'valid' convolution kernel larger than input");
    }
    g.out_h = (in_h - kernel_h) / stride + 1;
    g.out_w = (in_w - kernel_w) / stride + 1;
  }
  return g;
}

namespace {

// col[(c*kh + i)*kw + j][oy*out_w + ox] = x[c][oy*s + i - pt][ox*s + j - pl]
template <typename T>
void im2col(const T* x, std::size_t channels, const ConvGeometry& g, T* col) {
  const std::size_t out_hw = g.out_h * g.out_w;
  for (std::size_t c = 0; c < channels; ++c) {
    const T* plane = x + c * g.in_h * g.in_w;
    for (std::size_t i = 0; i < g.kernel_h; ++i) {
      for (std::size_t j = 0; j < g.kernel_w; ++j) {
        T* row = col + ((c * g.kernel_h + i) * g.kernel_w + j) * out_hw;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + i) -
                          static_cast<std::ptrdiff_t>(g.pad_top);
          T* dst = row + oy * g.out_w;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) {
            std::fill(dst, dst + g.out_w, T{0});
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(iy) * g.in_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + j) -
                            static_cast<std::ptrdiff_t>(g.pad_left);
            dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.in_w))
                          ? T{0}
                          : src[static_cast<std::size_t>(ix)];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, std::size_t channels, const ConvGeometry& g, T* x) {
  const std::size_t out_hw = g.out_h * g.out_w;
  for (std::size_t c = 0; c < channels; ++c) {
    T* plane = x + c * g.in_h * g.in_w;
    for (std::size_t i = 0; i < g.kernel_h; ++i) {
      for (std::size_t j = 0; j < g.kernel_w; ++j) {
        const T* row = col + ((c * g.kernel_h + i) * g.kernel_w + j) * out_hw;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + i) -
                          static_cast<std::ptrdiff_t>(g.pad_top);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
          T* dst = plane + static_cast<std::size_t>(iy) * g.in_w;
          const T* src = row + oy * g.out_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + j) -
                            static_cast<std::ptrdiff_t>(g.pad_left);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.in_w)) {
              dst[static_cast<std::size_t>(ix)] += src[ox];
            }
          }
        }
      }
    }
  }
}

template <typename T>
void check_conv_shapes(const Tensor<T>& input, const Tensor<T>& kernel) {
  require_rank(input.shape(), 4, "conv2d input");
  require_rank(kernel.shape(), 4, "conv2d kernel");
  if (input.dim(1) != kernel.dim(1)) {
    throw ShapeError("conv2d channel mismatch: input " + shape_to_string(input.shape()) +
                     ", kernel " + shape_to_string(kernel.shape()));
  }
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias,
                 Padding padding, std::size_t stride) {
  check_conv_shapes(input, kernel);
  const std::size_t n = input.dim(0), cin = input.dim(1), cout = kernel.dim(0);
  if (bias.shape() != Shape{cout}) {
    throw ShapeError("conv2d bias must have shape [" + std::to_string(cout) + "]");
  }
  const auto g = conv_geometry(input.dim(2), input.dim(3), kernel.dim(2), kernel.dim(3), padding, stride);
  const std::size_t patch = cin * g.kernel_h * g.kernel_w;
  const std::size_t out_hw = g.out_h * g.out_w;
  const std::size_t in_plane = cin * g.in_h * g.in_w;

  Tensor<T> out({n, cout, g.out_h, g.out_w});
  std::vector<T> col(patch * out_hw);
  for (std::size_t s = 0; s < n; ++s) {
    im2col(input.raw() + s * in_plane, cin, g, col.data());
    T* dst = out.raw() + s * cout * out_hw;
    for (std::size_t o = 0; o < cout; ++o) std::fill(dst + o * out_hw, dst + (o + 1) * out_hw, bias[o]);
    gemm(cout, out_hw, patch, kernel.raw(), col.data(), dst, true);
  }
  return out;
}

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& dy,
                             Padding padding, std::size_t stride, bool need_input_grad,
                             bool need_param_grads) {
  check_conv_shapes(input, kernel);
  const std::size_t n = input.dim(0), cin = input.dim(1), cout = kernel.dim(0);
  const auto g = conv_geometry(input.dim(2), input.dim(3), kernel.dim(2), kernel.dim(3), padding, stride);
  if (dy.shape() != Shape{n, cout, g.out_h, g.out_w}) {
    throw ShapeError("conv2d_backward: upstream gradient has shape " + shape_to_string(dy.shape()));
  }
  const std::size_t patch = cin * g.kernel_h * g.kernel_w;
  const std::size_t out_hw = g.out_h * g.out_w;
  const std::size_t in_plane = cin * g.in_h * g.in_w;

  ConvGrads<T> grads;
  std::vector<T> col(patch * out_hw);
  std::vector<T> col_t;
  std::vector<T> kernel_t;
  if (need_param_grads) {
    grads.kernel = Tensor<T>::zeros_like(kernel);
    grads.bias = Tensor<T>::zeros({cout});
    col_t.resize(out_hw * patch);
  }
  if (need_input_grad) {
    grads.input = Tensor<T>::zeros_like(input);
    kernel_t.resize(patch * cout);
    transpose(kernel.raw(), cout, patch, kernel_t.data());
  }

  for (std::size_t s = 0; s < n; ++s) {
    const T* dys = dy.raw() + s * cout * out_hw;
    if (need_param_grads) {
      im2col(input.raw() + s * in_plane, cin, g, col.data());
      transpose(col.data(), patch, out_hw, col_t.data());
      gemm(cout, patch, out_hw, dys, col_t.data(), grads.kernel.raw(), true);
      for (std::size_t o = 0; o < cout; ++o) {
        T acc{0};
        for (std::size_t p = 0; p < out_hw; ++p) acc += dys[o * out_hw + p];
        grads.bias[o] += acc;
      }
    }
    if (need_input_grad) {
      gemm(patch, out_hw, cout, kernel_t.data(), dys, col.data(), false);
      col2im_add(col.data(), cin, g, grads.input.raw() + s * in_plane);
    }
  }
  return grads;
}

template <typename T>
MaxPoolResult<T> maxpool2(const Tensor<T>& input) {
  require_rank(input.shape(), 4, "maxpool2 input");
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (h % 2 != 0 || w % 2 != 0) {
    throw ShapeError("maxpool2 requires even spatial size, got " + shape_to_string(input.shape()));
  }
  const std::size_t oh = h / 2, ow = w / 2;
  MaxPoolResult<T> r;
  r.output = Tensor<T>({n, c, oh, ow});
  r.argmax.resize(r.output.size());
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const T* src = input.raw() + plane * h * w;
    T* dst = r.output.raw() + plane * oh * ow;
    std::uint8_t* mask = r.argmax.data() + plane * oh * ow;
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        const T* top = src + (2 * y) * w + 2 * x;
        const T window[4] = {top[0], top[1], top[w], top[w + 1]};
        std::uint8_t best = 0;
        for (std::uint8_t k = 1; k < 4; ++k) {
          if (window[k] > window[best]) best = k;
        }
        dst[y * ow + x] = window[best];
        mask[y * ow + x] = best;
      }
    }
  }
  return r;
}

template <typename T>
Tensor<T> maxpool2_backward(const Tensor<T>& dy, const std::vector<std::uint8_t>& argmax,
                            const Shape& input_shape) {
  require_rank(input_shape, 4, "maxpool2_backward input");
  const std::size_t n = input_shape[0], c = input_shape[1], h = input_shape[2], w = input_shape[3];
  const std::size_t oh = h / 2, ow = w / 2;
  if (dy.shape() != Shape{n, c, oh, ow} || argmax.size() != dy.size()) {
    throw ShapeError("maxpool2_backward: gradient shape " + shape_to_string(dy.shape()) +
                     " does not match input " + shape_to_string(input_shape));
  }
  Tensor<T> dx(input_shape);
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const T* g = dy.raw() + plane * oh * ow;
    const std::uint8_t* mask = argmax.data() + plane * oh * ow;
    T* dst = dx.raw() + plane * h * w;
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        const std::uint8_t k = mask[y * ow + x];
        dst[(2 * y + k / 2) * w + 2 * x + k % 2] = g[y * ow + x];
      }
    }
  }
  return dx;
}

template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& input, std::size_t out_h, std::size_t out_w) {
  require_rank(input.shape(), 3, "resize_bilinear input");
  if (out_h == 0 || out_w == 0) throw ShapeError("resize_bilinear target size must be positive");
  const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);

  struct Tap {
    std::size_t lo, hi;
    double frac;
  };
  const auto taps = [](std::size_t in, std::size_t out) {
    std::vector<Tap> t(out);
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t i = 0; i < out; ++i) {
      double src = (static_cast<double>(i) + 0.5) * scale - 0.5;
      src = std::clamp(src, 0.0, static_cast<double>(in - 1));
      const auto lo = static_cast<std::size_t>(std::floor(src));
      t[i] = {lo, std::min(lo + 1, in - 1), src - static_cast<double>(lo)};
    }
    return t;
  };
  const auto ty = taps(h, out_h);
  const auto tx = taps(w, out_w);

  Tensor<T> out({c, out_h, out_w});
  for (std::size_t ch = 0; ch < c; ++ch) {
    const T* src = input.raw() + ch * h * w;
    T* dst = out.raw() + ch * out_h * out_w;
    for (std::size_t y = 0; y < out_h; ++y) {
      const auto& vy = ty[y];
      for (std::size_t x = 0; x < out_w; ++x) {
        const auto& vx = tx[x];
        const double top = (1.0 - vx.frac) * src[vy.lo * w + vx.lo] + vx.frac * src[vy.lo * w + vx.hi];
        const double bot = (1.0 - vx.frac) * src[vy.hi * w + vx.lo] + vx.frac * src[vy.hi * w + vx.hi];
        dst[y * out_w + x] = static_cast<T>((1.0 - vy.frac) * top + vy.frac * bot);
      }
    }
  }
  return out;
}

#define FACECHANNEL_INSTANTIATE_OPS(T)                                                           \
  template Tensor<T> tensor_full<T>(const Shape&, T);                                            \
  template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&);                              \
  template void gemm<T>(std::size_t, std::size_t, std::size_t, const T*, const T*, T*, bool);    \
  template void transpose<T>(const T*, std::size_t, std::size_t, T*);                            \
  template Tensor<T> conv2d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Padding,    \
                               std::size_t);                                                     \
  template ConvGrads<T> conv2d_backward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, \
                                           Padding, std::size_t, bool, bool);                    \
  template MaxPoolResult<T> maxpool2<T>(const Tensor<T>&);                                       \
  template Tensor<T> maxpool2_backward<T>(const Tensor<T>&, const std::vector<std::uint8_t>&,    \
                                          const Shape&);                                         \
  template Tensor<T> resize_bilinear<T>(const Tensor<T>&, std::size_t, std::size_t);

FACECHANNEL_INSTANTIATE_OPS(float)
FACECHANNEL_INSTANTIATE_OPS(double)

#undef FACECHANNEL_INSTANTIATE_OPS

}  // namespace facechannel
