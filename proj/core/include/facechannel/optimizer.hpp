#pragma once

#include <map>
#include <string>
#include <vector>

#include "facechannel/layer.hpp"
#include "facechannel/tensor.hpp"

namespace facechannel {

/// v <- momentum * v - lr * g;  p <- p + v
template <typename T>
void sgd_momentum_step(Tensor<T>& param, const Tensor<T>& grad, Tensor<T>& velocity, double lr,
                       double momentum);

/// SGD with classical momentum; one velocity tensor per parameter name.
template <typename T>
class SgdMomentum {
 public:
  SgdMomentum(double learning_rate, double momentum);

  void step(const std::vector<ParamRef<T>>& params);

  double learning_rate() const noexcept { return learning_rate_; }
  void set_learning_rate(double lr) noexcept { learning_rate_ = lr; }
  double momentum() const noexcept { return momentum_; }

  std::map<std::string, Tensor<T>>& state() noexcept { return velocity_; }
  const std::map<std::string, Tensor<T>>& state() const noexcept { return velocity_; }

 private:
  double learning_rate_;
  double momentum_;
  std::map<std::string, Tensor<T>> velocity_;
};

}  // namespace facechannel
