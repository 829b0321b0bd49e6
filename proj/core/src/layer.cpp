#include "facechannel/layer.hpp"

#include <cmath>

namespace facechannel {

std::string_view layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::kConv: return "conv";
    case LayerKind::kShunting: return "shunting";
    case LayerKind::kBatchNorm: return "batchnorm";
    case LayerKind::kRelu: return "relu";
    case LayerKind::kMaxPool: return "maxpool";
    case LayerKind::kDropout: return "dropout";
    case LayerKind::kFlatten: return "flatten";
    case LayerKind::kDense: return "dense";
  }
  return "unknown";
}

template <typename T>
void Layer<T>::zero_grad() {
  for (auto& p : parameters()) p.grad->fill(T{0});
}

template <typename T>
void he_uniform_init(Tensor<T>& t, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (auto& v : t.data()) v = static_cast<T>(rng.uniform(-bound, bound));
}

namespace {

[[noreturn]] void no_forward(const std::string& name) {
  throw Error("layer '" + name + "': backward called without a matching forward");
}

template <typename T>
void accumulate(Tensor<T>& into, const Tensor<T>& g) {
  for (std::size_t i = 0; i < into.size(); ++i) into[i] += g[i];
}

}  // namespace

// ---------------------------------------------------------------- conv

template <typename T>
Conv2dLayer<T>::Conv2dLayer(std::string name, std::size_t in_channels, std::size_t out_channels,
                            std::size_t kernel_size, Rng& rng)
    : Layer<T>(std::move(name)),
      kernel_({out_channels, in_channels, kernel_size, kernel_size}),
      bias_({out_channels}),
      kernel_grad_(kernel_.shape()),
      bias_grad_(bias_.shape()) {
  he_uniform_init(kernel_, in_channels * kernel_size * kernel_size, rng);
}

template <typename T>
Shape Conv2dLayer<T>::output_shape(const Shape& input) const {
  require_rank(input, 4, this->name());
  if (input[1] != kernel_.dim(1)) throw ShapeError(this->name() + ": channel mismatch " + shape_to_string(input));
  return {input[0], kernel_.dim(0), input[2], input[3]};
}

template <typename T>
Tensor<T> Conv2dLayer<T>::forward(const Tensor<T>& x, Mode, Rng&) {
  input_ = x;
  return conv2d(x, kernel_, bias_, Padding::kSame, 1);
}

template <typename T>
Tensor<T> Conv2dLayer<T>::backward(const Tensor<T>& dy, bool param_grads) {
  if (!input_) no_forward(this->name());
  const bool params = param_grads && this->trainable();
  auto g = conv2d_backward(*input_, kernel_, dy, Padding::kSame, 1, true, params);
  if (params) {
    accumulate(kernel_grad_, g.kernel);
    accumulate(bias_grad_, g.bias);
  }
  return std::move(g.input);
}

template <typename T>
std::vector<ParamRef<T>> Conv2dLayer<T>::parameters() {
  return {{"kernel", &kernel_, &kernel_grad_}, {"bias", &bias_, &bias_grad_}};
}

// ---------------------------------------------------------------- shunting

template <typename T>
ShuntingLayer<T>::ShuntingLayer(std::string name, std::size_t in_channels, std::size_t out_channels,
                                std::size_t kernel_size, ShuntingActivation activation, Rng& rng)
    : Layer<T>(std::move(name)), activation_(activation) {
  const Shape kshape{out_channels, in_channels, kernel_size, kernel_size};
  params_.main_kernel = Tensor<T>(kshape);
  params_.inhibitory_kernel = Tensor<T>(kshape);
  params_.main_bias = Tensor<T>({out_channels});
  params_.inhibitory_bias = Tensor<T>({out_channels});
  params_.decay_raw = Tensor<T>({out_channels}, static_cast<T>(decay_raw_for(1.0)));
  const std::size_t fan_in = in_channels * kernel_size * kernel_size;
  he_uniform_init(params_.main_kernel, fan_in, rng);
  he_uniform_init(params_.inhibitory_kernel, fan_in, rng);

  grads_.main_kernel = Tensor<T>(kshape);
  grads_.inhibitory_kernel = Tensor<T>(kshape);
  grads_.main_bias = Tensor<T>({out_channels});
  grads_.inhibitory_bias = Tensor<T>({out_channels});
  grads_.decay_raw = Tensor<T>({out_channels});
}

template <typename T>
Shape ShuntingLayer<T>::output_shape(const Shape& input) const {
  require_rank(input, 4, this->name());
  if (input[1] != params_.main_kernel.dim(1)) {
    throw ShapeError(this->name() + ": channel mismatch " + shape_to_string(input));
  }
  return {input[0], params_.main_kernel.dim(0), input[2], input[3]};
}

template <typename T>
Tensor<T> ShuntingLayer<T>::forward(const Tensor<T>& x, Mode, Rng&) {
  auto io = shunting_forward(x, params_, activation_);
  cache_ = std::move(io.cache);
  return std::move(io.output);
}

template <typename T>
Tensor<T> ShuntingLayer<T>::backward(const Tensor<T>& dy, bool param_grads) {
  if (!cache_) no_forward(this->name());
  const bool params = param_grads && this->trainable();
  auto g = shunting_backward(dy, *cache_, params_, true, params);
  if (params) {
    accumulate(grads_.main_kernel, g.main_kernel);
    accumulate(grads_.main_bias, g.main_bias);
    accumulate(grads_.inhibitory_kernel, g.inhibitory_kernel);
    accumulate(grads_.inhibitory_bias, g.inhibitory_bias);
    accumulate(grads_.decay_raw, g.decay_raw);
  }
  return std::move(g.input);
}

template <typename T>
std::vector<ParamRef<T>> ShuntingLayer<T>::parameters() {
  return {{"main_kernel", &params_.main_kernel, &grads_.main_kernel},
          {"main_bias", &params_.main_bias, &grads_.main_bias},
          {"inhibitory_kernel", &params_.inhibitory_kernel, &grads_.inhibitory_kernel},
          {"inhibitory_bias", &params_.inhibitory_bias, &grads_.inhibitory_bias},
          {"decay_raw", &params_.decay_raw, &grads_.decay_raw}};
}

// ---------------------------------------------------------------- batch norm

template <typename T>
BatchNormLayer<T>::BatchNormLayer(std::string name, std::size_t channels, double momentum)
    : Layer<T>(std::move(name)),
      params_(BatchNormParams<T>::identity(channels)),
      gamma_grad_({channels}),
      beta_grad_({channels}) {
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ParameterError(this->name() + ": momentum must be in [0,1)");
  params_.momentum = momentum;
}

template <typename T>
Tensor<T> BatchNormLayer<T>::forward(const Tensor<T>& x, Mode mode, Rng&) {
  const Mode effective = this->trainable() ? mode : Mode::kInfer;
  auto io = batchnorm_forward(x, params_, effective);
  cache_ = std::move(io.cache);
  return std::move(io.output);
}

template <typename T>
Tensor<T> BatchNormLayer<T>::backward(const Tensor<T>& dy, bool param_grads) {
  if (!cache_) no_forward(this->name());
  auto g = batchnorm_backward(dy, *cache_);
  if (param_grads && this->trainable()) {
    accumulate(gamma_grad_, g.gamma);
    accumulate(beta_grad_, g.beta);
  }
  return std::move(g.input);
}

template <typename T>
std::vector<ParamRef<T>> BatchNormLayer<T>::parameters() {
  return {{"gamma", &params_.gamma, &gamma_grad_}, {"beta", &params_.beta, &beta_grad_}};
}

template <typename T>
std::vector<BufferRef<T>> BatchNormLayer<T>::buffers() {
  return {{"running_mean", &params_.running_mean}, {"running_var", &params_.running_var}};
}

// ---------------------------------------------------------------- relu

template <typename T>
Tensor<T> ReluLayer<T>::forward(const Tensor<T>& x, Mode, Rng&) {
  auto io = relu_forward(x);
  cache_ = std::move(io.cache);
  return std::move(io.output);
}

template <typename T>
Tensor<T> ReluLayer<T>::backward(const Tensor<T>& dy, bool) {
  if (!cache_) no_forward(this->name());
  return relu_backward(dy, *cache_);
}

// ---------------------------------------------------------------- max pool

template <typename T>
Shape MaxPoolLayer<T>::output_shape(const Shape& input) const {
  require_rank(input, 4, this->name());
  if (input[2] % 2 || input[3] % 2) throw ShapeError(this->name() + ": odd spatial size " + shape_to_string(input));
  return {input[0], input[1], input[2] / 2, input[3] / 2};
}

template <typename T>
Tensor<T> MaxPoolLayer<T>::forward(const Tensor<T>& x, Mode, Rng&) {
  auto r = maxpool2(x);
  argmax_ = std::move(r.argmax);
  input_shape_ = x.shape();
  return std::move(r.output);
}

template <typename T>
Tensor<T> MaxPoolLayer<T>::backward(const Tensor<T>& dy, bool) {
  if (input_shape_.empty()) no_forward(this->name());
  return maxpool2_backward(dy, argmax_, input_shape_);
}

// ---------------------------------------------------------------- dropout

template <typename T>
DropoutLayer<T>::DropoutLayer(std::string name, double rate) : Layer<T>(std::move(name)), rate_(rate) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ParameterError("dropout rate must be in [0, 1)");
}

template <typename T>
Tensor<T> DropoutLayer<T>::forward(const Tensor<T>& x, Mode mode, Rng& rng) {
  auto io = dropout_forward(x, rate_, mode, rng);
  cache_ = std::move(io.cache);
  return std::move(io.output);
}

template <typename T>
Tensor<T> DropoutLayer<T>::backward(const Tensor<T>& dy, bool) {
  if (!cache_) no_forward(this->name());
  return dropout_backward(dy, *cache_);
}

// ---------------------------------------------------------------- flatten

template <typename T>
Shape FlattenLayer<T>::output_shape(const Shape& input) const {
  if (input.empty()) throw ShapeError(this->name() + ": empty shape");
  return {input[0], shape_numel(input) / input[0]};
}

template <typename T>
Tensor<T> FlattenLayer<T>::forward(const Tensor<T>& x, Mode, Rng&) {
  input_shape_ = x.shape();
  return x.reshaped(output_shape(x.shape()));
}

template <typename T>
Tensor<T> FlattenLayer<T>::backward(const Tensor<T>& dy, bool) {
  if (input_shape_.empty()) no_forward(this->name());
  return dy.reshaped(input_shape_);
}

// ---------------------------------------------------------------- dense

template <typename T>
DenseLayer<T>::DenseLayer(std::string name, std::size_t in_features, std::size_t units, Rng& rng)
    : Layer<T>(std::move(name)),
      weight_({in_features, units}),
      bias_({units}),
      weight_grad_(weight_.shape()),
      bias_grad_(bias_.shape()) {
  he_uniform_init(weight_, in_features, rng);
}

template <typename T>
Shape DenseLayer<T>::output_shape(const Shape& input) const {
  require_rank(input, 2, this->name());
  if (input[1] != weight_.dim(0)) throw ShapeError(this->name() + ": feature mismatch " + shape_to_string(input));
  return {input[0], weight_.dim(1)};
}

template <typename T>
Tensor<T> DenseLayer<T>::forward(const Tensor<T>& x, Mode, Rng&) {
  auto io = dense_forward(x, weight_, bias_);
  cache_ = std::move(io.cache);
  return std::move(io.output);
}

template <typename T>
Tensor<T> DenseLayer<T>::backward(const Tensor<T>& dy, bool param_grads) {
  if (!cache_) no_forward(this->name());
  const bool params = param_grads && this->trainable();
  auto g = dense_backward(dy, *cache_, weight_, true, params);
  if (params) {
    accumulate(weight_grad_, g.weight);
    accumulate(bias_grad_, g.bias);
  }
  return std::move(g.input);
}

template <typename T>
std::vector<ParamRef<T>> DenseLayer<T>::parameters() {
  return {{"weight", &weight_, &weight_grad_}, {"bias", &bias_, &bias_grad_}};
}

#define FACECHANNEL_INSTANTIATE_LAYER_CLASSES(T)                     \
  template class Layer<T>;                                           \
  template void he_uniform_init<T>(Tensor<T>&, std::size_t, Rng&);   \
  template class Conv2dLayer<T>;                                     \
  template class ShuntingLayer<T>;                                   \
  template class BatchNormLayer<T>;                                  \
  template class ReluLayer<T>;                                       \
  template class MaxPoolLayer<T>;                                    \
  template class DropoutLayer<T>;                                    \
  template class FlattenLayer<T>;                                    \
  template class DenseLayer<T>;

FACECHANNEL_INSTANTIATE_LAYER_CLASSES(float)
FACECHANNEL_INSTANTIATE_LAYER_CLASSES(double)

#undef FACECHANNEL_INSTANTIATE_LAYER_CLASSES

}  // namespace facechannel
