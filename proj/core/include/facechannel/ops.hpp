#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "facechannel/tensor.hpp"

namespace facechannel {

enum class Padding { kSame, kValid };

/// Tensor of the given shape with every element equal to `value`.
/// Throws ShapeError for an empty shape or a zero dimension.
template <typename T>
Tensor<T> tensor_full(const Shape& shape, T value);

/// Rank-2 matrix product [m,k] x [k,n] -> [m,n].
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

/// Raw row-major kernels used by the layers.
/// c[m,n] (+)= a[m,k] * b[k,n]
template <typename T>
void gemm(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
          bool accumulate);
/// dst[cols,rows] = transpose(src[rows,cols])
template <typename T>
void transpose(const T* src, std::size_t rows, std::size_t cols, T* dst);

struct ConvGeometry {
  std::size_t in_h = 0, in_w = 0;
  std::size_t kernel_h = 0, kernel_w = 0;
  std::size_t stride = 1;
  std::size_t pad_top = 0, pad_left = 0;
  std::size_t out_h = 0, out_w = 0;
};

/// Output geometry of a 2-D cross-correlation. `same` padding splits the total
/// pad evenly, the odd pixel going to the bottom/right.
ConvGeometry conv_geometry(std::size_t in_h, std::size_t in_w, std::size_t kernel_h,
                           std::size_t kernel_w, Padding padding, std::size_t stride);

/// Cross-correlation (no kernel flip) with zero padding.
/// input [N,Cin,H,W], kernel [Cout,Cin,kh,kw], bias [Cout] -> [N,Cout,H',W'].
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias,
                 Padding padding = Padding::kSame, std::size_t stride = 1);

template <typename T>
struct ConvGrads {
  Tensor<T> input;   // empty unless requested
  Tensor<T> kernel;
  Tensor<T> bias;
};

/// Gradients of conv2d given the upstream gradient `dy` of its output.
template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& dy,
                             Padding padding = Padding::kSame, std::size_t stride = 1,
                             bool need_input_grad = true, bool need_param_grads = true);

template <typename T>
struct MaxPoolResult {
  Tensor<T> output;
  /// Winning position per window, row-major inside the 2x2 window (0..3).
  std::vector<std::uint8_t> argmax;
};

/// Non-overlapping 2x2 max pooling. Ties go to the lowest position in the window.
template <typename T>
MaxPoolResult<T> maxpool2(const Tensor<T>& input);

template <typename T>
Tensor<T> maxpool2_backward(const Tensor<T>& dy, const std::vector<std::uint8_t>& argmax,
                            const Shape& input_shape);

/// Bilinear resize of a [C,H,W] image using half-pixel centres:
/// src = (dst + 0.5) * in / out - 0.5, clamped to the valid range.
template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& input, std::size_t out_h, std::size_t out_w);

}  // namespace facechannel
