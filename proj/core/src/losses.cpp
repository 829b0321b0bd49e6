#include "facechannel/losses.hpp"

#include <cmath>

namespace facechannel {

template <typename T>
LossResult<T> cross_entropy(const Tensor<T>& pred_probs, const Tensor<T>& target) {
  if (pred_probs.rank() != 2 || pred_probs.shape() != target.shape()) {
    throw DataError("cross_entropy: prediction " + shape_to_string(pred_probs.shape()) + " and target " +
                    shape_to_string(target.shape()) + " must be equal [N,K] shapes");
  }
  const std::size_t n = pred_probs.dim(0), k = pred_probs.dim(1);
  LossResult<T> r;
  r.grad = Tensor<T>(pred_probs.shape());
  double total = 0.0;
  for (std::size_t s = 0; s < n; ++s) {
    double row_sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const double t = target[s * k + j];
      if (t < 0.0 || !std::isfinite(t)) throw DataError("cross_entropy: target row " + std::to_string(s) + " has a negative entry");
      row_sum += t;
      total -= t * std::log(static_cast<double>(pred_probs[s * k + j]) + kLogEpsilon);
      r.grad[s * k + j] = static_cast<T>((pred_probs[s * k + j] - t) / static_cast<double>(n));
    }
    if (std::abs(row_sum - 1.0) > 1e-5) {
      throw DataError("cross_entropy: target row " + std::to_string(s) + " sums to " + std::to_string(row_sum));
    }
  }
  r.loss = total / static_cast<double>(n);
  return r;
}

template <typename T>
LossResult<T> mse(const Tensor<T>& pred, const Tensor<T>& target) {
  if (pred.shape() != target.shape()) {
    throw DataError("mse: prediction " + shape_to_string(pred.shape()) + " and target " +
                    shape_to_string(target.shape()) + " differ");
  }
  LossResult<T> r;
  r.grad = Tensor<T>(pred.shape());
  const double count = static_cast<double>(pred.size());
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
    total += d * d;
    r.grad[i] = static_cast<T>(2.0 * d / count);
  }
  r.loss = total / count;
  return r;
}

template LossResult<float> cross_entropy<float>(const Tensor<float>&, const Tensor<float>&);
template LossResult<double> cross_entropy<double>(const Tensor<double>&, const Tensor<double>&);
template LossResult<float> mse<float>(const Tensor<float>&, const Tensor<float>&);
template LossResult<double> mse<double>(const Tensor<double>&, const Tensor<double>&);

}  // namespace facechannel
