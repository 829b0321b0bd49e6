#pragma once

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "facechannel/layers.hpp"
#include "facechannel/rng.hpp"
#include "facechannel/tensor.hpp"

namespace facechannel {

enum class LayerKind { kConv, kShunting, kBatchNorm, kRelu, kMaxPool, kDropout, kFlatten, kDense };

std::string_view layer_kind_name(LayerKind kind);

/// Non-owning handle to a learnable tensor and its gradient accumulator.
template <typename T>
struct ParamRef {
  std::string name;
  Tensor<T>* value;
  Tensor<T>* grad;
};

/// Non-learnable state that is still part of the model (running statistics).
template <typename T>
struct BufferRef {
  std::string name;
  Tensor<T>* value;
};

/// A stateful layer. forward() keeps whatever backward() needs; backward()
/// returns the input gradient and, when asked and the layer is trainable,
/// accumulates parameter gradients.
template <typename T>
class Layer {
 public:
  explicit Layer(std::string name) : name_(std::move(name)) {}
  virtual ~Layer() = default;

  virtual LayerKind kind() const = 0;
  virtual Shape output_shape(const Shape& input) const = 0;
  virtual Tensor<T> forward(const Tensor<T>& x, Mode mode, Rng& rng) = 0;
  virtual Tensor<T> backward(const Tensor<T>& dy, bool param_grads) = 0;
  virtual std::unique_ptr<Layer> clone() const = 0;
  virtual void clear_cache() = 0;

  virtual std::vector<ParamRef<T>> parameters() { return {}; }
  virtual std::vector<BufferRef<T>> buffers() { return {}; }

  const std::string& name() const noexcept { return name_; }
  bool trainable() const noexcept { return trainable_; }
  void set_trainable(bool trainable) noexcept { trainable_ = trainable; }
  void zero_grad();

 protected:
  Layer(const Layer&) = default;
  Layer& operator=(const Layer&) = default;

 private:
  std::string name_;
  bool trainable_ = true;
};

/// Fills `t` from U(-sqrt(6/fan_in), sqrt(6/fan_in)).
template <typename T>
void he_uniform_init(Tensor<T>& t, std::size_t fan_in, Rng& rng);

template <typename T>
class Conv2dLayer final : public Layer<T> {
 public:
  Conv2dLayer(std::string name, std::size_t in_channels, std::size_t out_channels, std::size_t kernel_size,
              Rng& rng);

  LayerKind kind() const override { return LayerKind::kConv; }
  Shape output_shape(const Shape& input) const override;
  Tensor<T> forward(const Tensor<T>& x, Mode mode, Rng& rng) override;
  Tensor<T> backward(const Tensor<T>& dy, bool param_grads) override;
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Conv2dLayer>(*this); }
  void clear_cache() override { input_.reset(); }
  std::vector<ParamRef<T>> parameters() override;

  Tensor<T>& kernel() { return kernel_; }
  Tensor<T>& bias() { return bias_; }

 private:
  Tensor<T> kernel_, bias_;
  Tensor<T> kernel_grad_, bias_grad_;
  std::optional<Tensor<T>> input_;
};

template <typename T>
class ShuntingLayer final : public Layer<T> {
 public:
  ShuntingLayer(std::string name, std::size_t in_channels, std::size_t out_channels, std::size_t kernel_size,
                ShuntingActivation activation, Rng& rng);

  LayerKind kind() const override { return LayerKind::kShunting; }
  Shape output_shape(const Shape& input) const override;
  Tensor<T> forward(const Tensor<T>& x, Mode mode, Rng& rng) override;
  Tensor<T> backward(const Tensor<T>& dy, bool param_grads) override;
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<ShuntingLayer>(*this); }
  void clear_cache() override { cache_.reset(); }
  std::vector<ParamRef<T>> parameters() override;

  ShuntingParams<T>& params() { return params_; }
  const ShuntingParams<T>& params() const { return params_; }

 private:
  ShuntingParams<T> params_;
  ShuntingParams<T> grads_;
  ShuntingActivation activation_;
  std::optional<ShuntingCache<T>> cache_;
};

/// Batch normalization. A frozen (non-trainable) instance normalizes with its
/// running statistics even in train mode and never updates them.
template <typename T>
class BatchNormLayer final : public Layer<T> {
 public:
  BatchNormLayer(std::string name, std::size_t channels, double momentum = kBatchNormMomentum);

  LayerKind kind() const override { return LayerKind::kBatchNorm; }
  Shape output_shape(const Shape& input) const override { return input; }
  Tensor<T> forward(const Tensor<T>& x, Mode mode, Rng& rng) override;
  Tensor<T> backward(const Tensor<T>& dy, bool param_grads) override;
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<BatchNormLayer>(*this); }
  void clear_cache() override { cache_.reset(); }
  std::vector<ParamRef<T>> parameters() override;
  std::vector<BufferRef<T>> buffers() override;

  BatchNormParams<T>& params() { return params_; }

 private:
  BatchNormParams<T> params_;
  Tensor<T> gamma_grad_, beta_grad_;
  std::optional<BatchNormCache<T>> cache_;
};

template <typename T>
class ReluLayer final : public Layer<T> {
 public:
  using Layer<T>::Layer;
  LayerKind kind() const override { return LayerKind::kRelu; }
  Shape output_shape(const Shape& input) const override { return input; }
  Tensor<T> forward(const Tensor<T>& x, Mode mode, Rng& rng) override;
  Tensor<T> backward(const Tensor<T>& dy, bool param_grads) override;
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<ReluLayer>(*this); }
  void clear_cache() override { cache_.reset(); }

 private:
  std::optional<ReluCache<T>> cache_;
};

template <typename T>
class MaxPoolLayer final : public Layer<T> {
 public:
  using Layer<T>::Layer;
  LayerKind kind() const override { return LayerKind::kMaxPool; }
  Shape output_shape(const Shape& input) const override;
  Tensor<T> forward(const Tensor<T>& x, Mode mode, Rng& rng) override;
  Tensor<T> backward(const Tensor<T>& dy, bool param_grads) override;
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<MaxPoolLayer>(*this); }
  void clear_cache() override {
    argmax_.clear();
    input_shape_.clear();
  }

 private:
  std::vector<std::uint8_t> argmax_;
  Shape input_shape_;
};

template <typename T>
class DropoutLayer final : public Layer<T> {
 public:
  DropoutLayer(std::string name, double rate);
  LayerKind kind() const override { return LayerKind::kDropout; }
  Shape output_shape(const Shape& input) const override { return input; }
  Tensor<T> forward(const Tensor<T>& x, Mode mode, Rng& rng) override;
  Tensor<T> backward(const Tensor<T>& dy, bool param_grads) override;
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<DropoutLayer>(*this); }
  void clear_cache() override { cache_.reset(); }
  double rate() const noexcept { return rate_; }

 private:
  double rate_;
  std::optional<DropoutCache<T>> cache_;
};

template <typename T>
class FlattenLayer final : public Layer<T> {
 public:
  using Layer<T>::Layer;
  LayerKind kind() const override { return LayerKind::kFlatten; }
  Shape output_shape(const Shape& input) const override;
  Tensor<T> forward(const Tensor<T>& x, Mode mode, Rng& rng) override;
  Tensor<T> backward(const Tensor<T>& dy, bool param_grads) override;
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<FlattenLayer>(*this); }
  void clear_cache() override { input_shape_.clear(); }

 private:
  Shape input_shape_;
};

template <typename T>
class DenseLayer final : public Layer<T> {
 public:
  DenseLayer(std::string name, std::size_t in_features, std::size_t units, Rng& rng);

  LayerKind kind() const override { return LayerKind::kDense; }
  Shape output_shape(const Shape& input) const override;
  Tensor<T> forward(const Tensor<T>& x, Mode mode, Rng& rng) override;
  Tensor<T> backward(const Tensor<T>& dy, bool param_grads) override;
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<DenseLayer>(*this); }
  void clear_cache() override { cache_.reset(); }
  std::vector<ParamRef<T>> parameters() override;

  Tensor<T>& weight() { return weight_; }
  Tensor<T>& bias() { return bias_; }
  std::size_t units() const { return weight_.dim(1); }

 private:
  Tensor<T> weight_, bias_;
  Tensor<T> weight_grad_, bias_grad_;
  std::optional<DenseCache<T>> cache_;
};

}  // namespace facechannel
