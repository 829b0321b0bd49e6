#pragma once

#include "facechannel/tensor.hpp"

namespace facechannel {

template <typename T>
struct LossResult {
  double loss = 0.0;
  Tensor<T> grad;
};

/// Mean categorical cross-entropy of softmax outputs against target
/// distributions (one-hot or soft). `grad` is taken w.r.t. the pre-softmax
/// logits: (pred - target) / N. Rows of `target` must be non-negative and sum
/// to 1 within 1e-5 (DataError otherwise).
template <typename T>
LossResult<T> cross_entropy(const Tensor<T>& pred_probs, const Tensor<T>& target);

/// Mean squared error over all elements; `grad` is w.r.t. `pred`.
template <typename T>
LossResult<T> mse(const Tensor<T>& pred, const Tensor<T>& target);

inline constexpr double kLogEpsilon = 1e-9;

}  // namespace facechannel
