#include "facechannel/optimizer.hpp"

namespace facechannel {

template <typename T>
void sgd_momentum_step(Tensor<T>& param, const Tensor<T>& grad, Tensor<T>& velocity, double lr,
                       double momentum) {
  if (param.shape() != grad.shape() || param.shape() != velocity.shape()) {
    throw ShapeError("sgd_momentum_step: parameter, gradient and velocity shapes differ");
  }
  const T mu = static_cast<T>(momentum);
  const T rate = static_cast<T>(lr);
  for (std::size_t i = 0; i < param.size(); ++i) {
    velocity[i] = mu * velocity[i] - rate * grad[i];
    param[i] += velocity[i];
  }
}

template <typename T>
SgdMomentum<T>::SgdMomentum(double learning_rate, double momentum)
    : learning_rate_(learning_rate), momentum_(momentum) {
  if (!(learning_rate >= 0.0)) throw ParameterError("learning rate must be non-negative");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ParameterError("momentum must be in [0, 1)");
}

template <typename T>
void SgdMomentum<T>::step(const std::vector<ParamRef<T>>& params) {
  for (const auto& p : params) {
    auto it = velocity_.find(p.name);
    if (it == velocity_.end() || it->second.shape() != p.value->shape()) {
      it = velocity_.insert_or_assign(p.name, Tensor<T>::zeros_like(*p.value)).first;
    }
    sgd_momentum_step(*p.value, *p.grad, it->second, learning_rate_, momentum_);
  }
}

template void sgd_momentum_step<float>(Tensor<float>&, const Tensor<float>&, Tensor<float>&, double, double);
template void sgd_momentum_step<double>(Tensor<double>&, const Tensor<double>&, Tensor<double>&, double, double);
template class SgdMomentum<float>;
template class SgdMomentum<double>;

}  // namespace facechannel
