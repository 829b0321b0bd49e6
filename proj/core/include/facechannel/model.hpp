#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "facechannel/layer.hpp"
#include "facechannel/rng.hpp"
#include "facechannel/tensor.hpp"

namespace facechannel {

/// Output layer description: K-way softmax or an (arousal, valence) tanh pair.
struct HeadSpec {
  enum class Kind { kCategorical, kDimensional };

  Kind kind = Kind::kCategorical;
  std::size_t classes = 8;

  static HeadSpec categorical(std::size_t k) { return {Kind::kCategorical, k}; }
  static HeadSpec dimensional() { return {Kind::kDimensional, 2}; }

  bool is_categorical() const noexcept { return kind == Kind::kCategorical; }
  std::size_t outputs() const noexcept { return is_categorical() ? classes : 2; }
  /// "K" for categorical heads, "av" for the dimensional head.
  std::string to_string() const;
  /// Accepts "K", "categorical:K", "av" and "dimensional".
  static HeadSpec parse(std::string_view text);

  friend bool operator==(const HeadSpec&, const HeadSpec&) = default;
};

/// Declarative topology. Each block is [conv -> BN -> ReLU] x count followed by
/// 2x2 max pooling and dropout; in the last block the final conv slot is the
/// shunting-inhibition layer followed by BN only.
struct ModelConfig {
  std::string name = "facechannel-v1-spec";
  std::size_t input_channels = 3;
  std::size_t input_size = 128;
  std::vector<std::size_t> block_channels{32, 64, 128, 128};
  /// Conv layers per block; the last block's count includes the shunting layer.
  std::vector<std::size_t> convs_per_block{2, 2, 3, 3};
  std::size_t shunting_channels = 64;
  std::size_t kernel_size = 3;
  std::size_t dense_units = 200;
  HeadSpec head = HeadSpec::categorical(8);
  double dropout_rate = 0.5;
  /// Running-statistics momentum of every batch-norm layer.
  double bn_momentum = kBatchNormMomentum;
  ShuntingActivation shunting_activation = ShuntingActivation::kNone;
  std::uint64_t seed = 0;

  /// 10 conv layers, 4 pools, 128x128 RGB input, 200-unit dense layer.
  static ModelConfig canonical(HeadSpec head = HeadSpec::categorical(8));
  /// Same block structure scaled down to 48x48 grayscale for desk-scale runs,
  /// with dropout 0.1 and batch-norm momentum 0.9 so a few hundred steps suffice.
  static ModelConfig tiny(HeadSpec head = HeadSpec::categorical(8));
  /// "canonical", "tiny", or a path to a JSON config file.
  static ModelConfig load(std::string_view preset_or_path);

  /// Throws ConfigError when the topology cannot be built.
  void validate() const;
  std::size_t conv_layer_count() const;
  std::size_t pool_count() const { return block_channels.size(); }
  /// Spatial size of the shunting layer output.
  std::size_t shunting_size() const;
  /// Length of the flattened feature vector fed to the dense layer.
  std::size_t flatten_size() const;

  std::string to_json() const;
  static ModelConfig from_json(std::string_view json);

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// A named tensor owned by the model (parameter or running statistic).
template <typename T>
struct NamedTensor {
  std::string name;
  const Tensor<T>* value;
  bool is_parameter;
};

template <typename T>
class Model {
 public:
  struct Output {
    Tensor<T> logits;
    /// softmax(logits) for categorical heads, tanh(logits) for dimensional ones.
    Tensor<T> predictions;
    /// Output of every layer, in order, when requested.
    std::vector<Tensor<T>> activations;
  };

  Model(ModelConfig config, std::vector<std::unique_ptr<Layer<T>>> layers);
  Model(const Model& other);
  Model& operator=(const Model& other);
  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;
  ~Model() = default;

  const ModelConfig& config() const noexcept { return config_; }
  std::size_t layer_count() const noexcept { return layers_.size(); }
  Layer<T>& layer(std::size_t i) { return *layers_.at(i); }
  const Layer<T>& layer(std::size_t i) const { return *layers_.at(i); }
  std::optional<std::size_t> find_layer(std::string_view name) const;
  /// Index of the output dense layer.
  std::size_t head_index() const { return layers_.size() - 1; }

  /// Input must be [N, input_channels, input_size, input_size].
  Output forward(const Tensor<T>& batch, Mode mode, Rng& rng, bool retain_activations = false);

  /// Backpropagates a gradient w.r.t. the logits. Returns the gradient w.r.t.
  /// the input of layer `stop_at` (default: stop below the lowest trainable
  /// layer, returning an empty tensor if nothing upstream needs it).
  Tensor<T> backward(const Tensor<T>& d_logits, bool param_grads = true,
                     std::optional<std::size_t> stop_at = std::nullopt);

  void zero_grad();
  void clear_caches();

  /// Parameters with fully qualified names ("<layer>.<param>").
  std::vector<ParamRef<T>> parameters(bool trainable_only = false);
  std::vector<BufferRef<T>> buffers();
  /// Every parameter and buffer, in checkpoint order.
  std::vector<NamedTensor<T>> named_tensors() const;

  void replace_layer(std::size_t index, std::unique_ptr<Layer<T>> layer);
  void set_head_spec(HeadSpec head) { config_.head = head; }

 private:
  ModelConfig config_;
  std::vector<std::unique_ptr<Layer<T>>> layers_;
};

/// Assembles the layer list described by `config`; weights are drawn from `rng`.
template <typename T>
Model<T> build_facechannel(const ModelConfig& config, Rng& rng);
/// Same, seeded from config.seed.
template <typename T>
Model<T> build_facechannel(const ModelConfig& config);

/// Exact element count over parameter tensors. Running statistics are never counted.
template <typename T>
std::size_t count_params(const Model<T>& model, bool trainable_only);

/// Marks every layer before the flatten step non-trainable (BN then uses running statistics).
template <typename T>
void freeze_convolutional_stack(Model<T>& model);
template <typename T>
void unfreeze_all(Model<T>& model);

/// Swaps in a freshly initialised output layer of the requested arity.
template <typename T>
void replace_head(Model<T>& model, HeadSpec head, Rng& rng);

/// Result of walking the layer list.
struct StructureAudit {
  std::size_t conv_layers = 0;  // conv + shunting
  std::size_t shunting_layers = 0;
  std::size_t pools = 0;
  bool batchnorm_after_every_conv = true;
  bool dropout_after_every_pool = true;
  std::vector<double> dropout_rates;
  std::size_t dense_units = 0;  // width of the hidden dense layer
  bool shunting_is_last_conv = false;
  std::vector<std::string> kinds;
};

template <typename T>
StructureAudit audit_structure(const Model<T>& model);

enum class TensorGroup {
  kAll,          // parameters and buffers
  kParameters,   // learnable tensors only
  kConvStack,    // every tensor of the layers before flatten
};

/// SHA-256 over names, shapes and raw bytes of the selected tensors.
template <typename T>
std::string tensor_hash(const Model<T>& model, TensorGroup group = TensorGroup::kAll);

/// Index of the layer that produces the flattened features (the conv stack ends before it).
template <typename T>
std::size_t flatten_index(const Model<T>& model);

}  // namespace facechannel
