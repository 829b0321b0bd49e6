#include "facechannel/model.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "facechannel/sha256.hpp"

namespace facechannel {

using nlohmann::json;

// ---------------------------------------------------------------- HeadSpec

std::string HeadSpec::to_string() const {
  return is_categorical() ? std::to_string(classes) : "av";
}

HeadSpec HeadSpec::parse(std::string_view text) {
  if (text == "av" || text == "dimensional") return dimensional();
  std::string_view digits = text;
  if (digits.starts_with("categorical:")) digits.remove_prefix(12);
  std::size_t k = 0;
  const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), k);
  if (ec != std::errc{} || ptr != digits.data() + digits.size() || k < 2) {
    throw ConfigError("head must be a class count >= 2 or 'av', got '" + std::string(text) + "'");
  }
  return categorical(k);
}

// ---------------------------------------------------------------- ModelConfig

ModelConfig ModelConfig::canonical(HeadSpec head) {
  ModelConfig c;
  c.head = head;
  return c;
}

ModelConfig ModelConfig::tiny(HeadSpec head) {
  ModelConfig c;
  c.name = "facechannel-tiny";
  c.input_channels = 1;
  c.input_size = 48;
  c.block_channels = {8, 16, 16, 16};
  c.convs_per_block = {1, 1, 1, 2};
  c.shunting_channels = 16;
  c.dense_units = 64;
  c.dropout_rate = 0.1;
  c.bn_momentum = 0.9;
  c.head = head;
  return c;
}

void ModelConfig::validate() const {
  if (input_channels != 1 && input_channels != 3) throw ConfigError("input_channels must be 1 or 3");
  if (block_channels.empty()) throw ConfigError("at least one block is required");
  if (block_channels.size() != convs_per_block.size()) {
    throw ConfigError("block_channels and convs_per_block must have the same length");
  }
  for (std::size_t b = 0; b < block_channels.size(); ++b) {
    if (block_channels[b] == 0) throw ConfigError("block widths must be positive");
    if (convs_per_block[b] == 0) throw ConfigError("every block needs at least one conv layer");
  }
  if (shunting_channels == 0) throw ConfigError("shunting_channels must be positive");
  if (kernel_size == 0 || kernel_size % 2 == 0) throw ConfigError("kernel_size must be odd");
  if (dense_units == 0) throw ConfigError("dense_units must be positive");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout_rate must be in [0, 1)");
  if (!(bn_momentum >= 0.0 && bn_momentum < 1.0)) throw ConfigError("bn_momentum must be in [0, 1)");
  if (head.is_categorical() && head.classes < 2) throw ConfigError("categorical head needs >= 2 classes");
  const std::size_t divisor = std::size_t{1} << block_channels.size();
  if (input_size == 0 || input_size % divisor != 0) {
    throw ConfigError("input_size " + std::to_string(input_size) + " must be divisible by 2^" +
                      std::to_string(block_channels.size()));
  }
}

std::size_t ModelConfig::conv_layer_count() const {
  std::size_t n = 0;
  for (auto c : convs_per_block) n += c;
  return n;
}

std::size_t ModelConfig::shunting_size() const {
  return input_size >> (block_channels.size() - 1);
}

std::size_t ModelConfig::flatten_size() const {
  const std::size_t s = input_size >> block_channels.size();
  return shunting_channels * s * s;
}

namespace {

std::string_view activation_name(ShuntingActivation a) {
  return a == ShuntingActivation::kRelu ? "relu" : "none";
}

ShuntingActivation parse_activation(std::string_view s) {
  if (s == "none") return ShuntingActivation::kNone;
  if (s == "relu") return ShuntingActivation::kRelu;
  throw ConfigError("unknown shunting activation '" + std::string(s) + "'");
}

}  // namespace

std::string ModelConfig::to_json() const {
  json j;
  j["name"] = name;
  j["input_channels"] = input_channels;
  j["input_size"] = input_size;
  j["block_channels"] = block_channels;
  j["convs_per_block"] = convs_per_block;
  j["shunting_channels"] = shunting_channels;
  j["kernel_size"] = kernel_size;
  j["dense_units"] = dense_units;
  j["head"] = head.to_string();
  j["dropout_rate"] = dropout_rate;
  j["bn_momentum"] = bn_momentum;
  j["shunting_activation"] = activation_name(shunting_activation);
  j["seed"] = seed;
  return j.dump();
}

ModelConfig ModelConfig::from_json(std::string_view text) {
  ModelConfig c;
  try {
    const json j = json::parse(text);
    if (!j.is_object()) throw ConfigError("model config must be a JSON object");
    c.name = j.value("name", c.name);
    c.input_channels = j.value("input_channels", c.input_channels);
    c.input_size = j.value("input_size", c.input_size);
    if (j.contains("block_channels")) c.block_channels = j.at("block_channels").get<std::vector<std::size_t>>();
    if (j.contains("convs_per_block")) c.convs_per_block = j.at("convs_per_block").get<std::vector<std::size_t>>();
    c.shunting_channels = j.value("shunting_channels", c.shunting_channels);
    c.kernel_size = j.value("kernel_size", c.kernel_size);
    c.dense_units = j.value("dense_units", c.dense_units);
    if (j.contains("head")) {
      const auto& h = j.at("head");
      c.head = HeadSpec::parse(h.is_number() ? std::to_string(h.get<std::size_t>()) : h.get<std::string>());
    }
    c.dropout_rate = j.value("dropout_rate", c.dropout_rate);
    c.bn_momentum = j.value("bn_momentum", c.bn_momentum);
    c.shunting_activation = parse_activation(j.value("shunting_activation", std::string("none")));
    c.seed = j.value("seed", c.seed);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid model config: ") + e.what());
  }
  c.validate();
  return c;
}

ModelConfig ModelConfig::load(std::string_view preset_or_path) {
  if (preset_or_path == "canonical") return canonical();
  if (preset_or_path == "tiny") return tiny();
  const std::string path(preset_or_path);
  std::ifstream in(path);
  if (!in) throw ConfigError("unknown config preset or unreadable file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

// ---------------------------------------------------------------- Model

template <typename T>
Model<T>::Model(ModelConfig config, std::vector<std::unique_ptr<Layer<T>>> layers)
    : config_(std::move(config)), layers_(std::move(layers)) {
  if (layers_.empty() || layers_.back()->kind() != LayerKind::kDense) {
    throw ConfigError("a model must end with a dense output layer");
  }
}

template <typename T>
Model<T>::Model(const Model& other) : config_(other.config_) {
  layers_.reserve(other.layers_.size());
  for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

template <typename T>
Model<T>& Model<T>::operator=(const Model& other) {
  if (this != &other) {
    Model copy(other);
    *this = std::move(copy);
  }
  return *this;
}

template <typename T>
std::optional<std::size_t> Model<T>::find_layer(std::string_view name) const {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i]->name() == name) return i;
  }
  return std::nullopt;
}

template <typename T>
typename Model<T>::Output Model<T>::forward(const Tensor<T>& batch, Mode mode, Rng& rng,
                                            bool retain_activations) {
  const Shape expected{config_.input_channels, config_.input_size, config_.input_size};
  if (batch.rank() != 4 || Shape(batch.shape().begin() + 1, batch.shape().end()) != expected) {
    throw ShapeError("model input must be [N," + std::to_string(config_.input_channels) + "," +
                     std::to_string(config_.input_size) + "," + std::to_string(config_.input_size) +
                     "], got " + shape_to_string(batch.shape()));
  }
  Output out;
  Tensor<T> x = batch;
  for (auto& layer : layers_) {
    x = layer->forward(x, mode, rng);
    if (retain_activations) out.activations.push_back(x);
  }
  out.predictions = config_.head.is_categorical() ? softmax(x) : x;
  if (!config_.head.is_categorical()) {
    for (auto& v : out.predictions.data()) v = std::tanh(v);
  }
  out.logits = std::move(x);
  return out;
}

template <typename T>
Tensor<T> Model<T>::backward(const Tensor<T>& d_logits, bool param_grads, std::optional<std::size_t> stop_at) {
  std::size_t stop = 0;
  if (stop_at) {
    stop = *stop_at;
  } else {
    // Nothing below the lowest trainable parameterised layer needs a gradient.
    stop = layers_.size();
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      if (layers_[i]->trainable() && !layers_[i]->parameters().empty()) {
        stop = i;
        break;
      }
    }
    if (stop == layers_.size()) return {};
  }
  Tensor<T> g = d_logits;
  for (std::size_t i = layers_.size(); i-- > stop;) g = layers_[i]->backward(g, param_grads);
  return g;
}

template <typename T>
void Model<T>::zero_grad() {
  for (auto& l : layers_) l->zero_grad();
}

template <typename T>
void Model<T>::clear_caches() {
  for (auto& l : layers_) l->clear_cache();
}

template <typename T>
std::vector<ParamRef<T>> Model<T>::parameters(bool trainable_only) {
  std::vector<ParamRef<T>> out;
  for (auto& l : layers_) {
    if (trainable_only && !l->trainable()) continue;
    for (auto& p : l->parameters()) out.push_back({l->name() + "." + p.name, p.value, p.grad});
  }
  return out;
}

template <typename T>
std::vector<BufferRef<T>> Model<T>::buffers() {
  std::vector<BufferRef<T>> out;
  for (auto& l : layers_) {
    for (auto& b : l->buffers()) out.push_back({l->name() + "." + b.name, b.value});
  }
  return out;
}

template <typename T>
std::vector<NamedTensor<T>> Model<T>::named_tensors() const {
  std::vector<NamedTensor<T>> out;
  for (const auto& l : layers_) {
    auto& layer = const_cast<Layer<T>&>(*l);
    for (auto& p : layer.parameters()) out.push_back({l->name() + "." + p.name, p.value, true});
    for (auto& b : layer.buffers()) out.push_back({l->name() + "." + b.name, b.value, false});
  }
  return out;
}

template <typename T>
void Model<T>::replace_layer(std::size_t index, std::unique_ptr<Layer<T>> layer) {
  layers_.at(index) = std::move(layer);
}

// ---------------------------------------------------------------- builders

template <typename T>
Model<T> build_facechannel(const ModelConfig& config, Rng& rng) {
  config.validate();
  std::vector<std::unique_ptr<Layer<T>>> layers;
  std::size_t channels = config.input_channels;
  const std::size_t blocks = config.block_channels.size();
  for (std::size_t b = 0; b < blocks; ++b) {
    const std::string prefix = "block" + std::to_string(b + 1) + ".";
    const bool last = b + 1 == blocks;
    const std::size_t plain_convs = last ? config.convs_per_block[b] - 1 : config.convs_per_block[b];
    for (std::size_t i = 0; i < plain_convs; ++i) {
      const std::string idx = std::to_string(i + 1);
      layers.push_back(std::make_unique<Conv2dLayer<T>>(prefix + "conv" + idx, channels,
                                                        config.block_channels[b], config.kernel_size, rng));
      channels = config.block_channels[b];
      layers.push_back(std::make_unique<BatchNormLayer<T>>(prefix + "bn" + idx, channels, config.bn_momentum));
      layers.push_back(std::make_unique<ReluLayer<T>>(prefix + "relu" + idx));
    }
    if (last) {
      layers.push_back(std::make_unique<ShuntingLayer<T>>(prefix + "shunting", channels, config.shunting_channels,
                                                          config.kernel_size, config.shunting_activation, rng));
      channels = config.shunting_channels;
      layers.push_back(std::make_unique<BatchNormLayer<T>>(prefix + "bn_shunting", channels, config.bn_momentum));
    }
    layers.push_back(std::make_unique<MaxPoolLayer<T>>(prefix + "pool"));
    layers.push_back(std::make_unique<DropoutLayer<T>>(prefix + "dropout", config.dropout_rate));
  }
  layers.push_back(std::make_unique<FlattenLayer<T>>("flatten"));
  layers.push_back(std::make_unique<DenseLayer<T>>("fc", config.flatten_size(), config.dense_units, rng));
  layers.push_back(std::make_unique<ReluLayer<T>>("fc_relu"));
  layers.push_back(std::make_unique<DenseLayer<T>>("head", config.dense_units, config.head.outputs(), rng));
  return Model<T>(config, std::move(layers));
}

template <typename T>
Model<T> build_facechannel(const ModelConfig& config) {
  Rng rng(config.seed);
  return build_facechannel<T>(config, rng);
}

template <typename T>
std::size_t count_params(const Model<T>& model, bool trainable_only) {
  std::size_t total = 0;
  for (std::size_t i = 0; i < model.layer_count(); ++i) {
    const auto& l = model.layer(i);
    if (trainable_only && !l.trainable()) continue;
    for (auto& p : const_cast<Layer<T>&>(l).parameters()) total += p.value->size();
  }
  return total;
}

template <typename T>
std::size_t flatten_index(const Model<T>& model) {
  for (std::size_t i = 0; i < model.layer_count(); ++i) {
    if (model.layer(i).kind() == LayerKind::kFlatten) return i;
  }
  throw ConfigError("model has no flatten layer");
}

template <typename T>
void freeze_convolutional_stack(Model<T>& model) {
  const std::size_t end = flatten_index(model);
  for (std::size_t i = 0; i < end; ++i) model.layer(i).set_trainable(false);
}

template <typename T>
void unfreeze_all(Model<T>& model) {
  for (std::size_t i = 0; i < model.layer_count(); ++i) model.layer(i).set_trainable(true);
}

template <typename T>
void replace_head(Model<T>& model, HeadSpec head, Rng& rng) {
  if (head.is_categorical() && head.classes < 2) throw ConfigError("categorical head needs >= 2 classes");
  const std::size_t idx = model.head_index();
  const bool trainable = model.layer(idx).trainable();
  auto fresh = std::make_unique<DenseLayer<T>>("head", model.config().dense_units, head.outputs(), rng);
  fresh->set_trainable(trainable);
  model.replace_layer(idx, std::move(fresh));
  model.set_head_spec(head);
}

template <typename T>
StructureAudit audit_structure(const Model<T>& model) {
  StructureAudit a;
  const std::size_t n = model.layer_count();
  const std::size_t flat = flatten_index(model);
  std::size_t last_conv = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& l = model.layer(i);
    a.kinds.emplace_back(layer_kind_name(l.kind()));
    switch (l.kind()) {
      case LayerKind::kShunting:
        ++a.shunting_layers;
        [[fallthrough]];
      case LayerKind::kConv:
        ++a.conv_layers;
        last_conv = i;
        if (i + 1 >= n || model.layer(i + 1).kind() != LayerKind::kBatchNorm) a.batchnorm_after_every_conv = false;
        break;
      case LayerKind::kMaxPool:
        ++a.pools;
        if (i + 1 >= n || model.layer(i + 1).kind() != LayerKind::kDropout) {
          a.dropout_after_every_pool = false;
        } else {
          a.dropout_rates.push_back(static_cast<const DropoutLayer<T>&>(model.layer(i + 1)).rate());
        }
        break;
      case LayerKind::kDense:
        if (i > flat && i != model.head_index() && a.dense_units == 0) {
          a.dense_units = const_cast<Layer<T>&>(l).parameters().front().value->dim(1);
        }
        break;
      default:
        break;
    }
  }
  a.shunting_is_last_conv = a.shunting_layers == 1 && model.layer(last_conv).kind() == LayerKind::kShunting;
  return a;
}

template <typename T>
std::string tensor_hash(const Model<T>& model, TensorGroup group) {
  Sha256 h;
  std::size_t conv_end = model.layer_count();
  if (group == TensorGroup::kConvStack) conv_end = flatten_index(model);
  std::vector<std::string> conv_names;
  for (std::size_t i = 0; i < conv_end; ++i) conv_names.push_back(model.layer(i).name() + ".");
  for (const auto& t : model.named_tensors()) {
    if (group == TensorGroup::kParameters && !t.is_parameter) continue;
    if (group == TensorGroup::kConvStack) {
      bool in_stack = false;
      for (const auto& prefix : conv_names) in_stack = in_stack || t.name.starts_with(prefix);
      if (!in_stack) continue;
    }
    h.update(t.name);
    h.update(shape_to_string(t.value->shape()));
    h.update(t.value->raw(), t.value->size() * sizeof(T));
  }
  return h.hex_digest();
}

#define FACECHANNEL_INSTANTIATE_MODEL(T)                                       \
  template class Model<T>;                                                     \
  template Model<T> build_facechannel<T>(const ModelConfig&, Rng&);            \
  template Model<T> build_facechannel<T>(const ModelConfig&);                  \
  template std::size_t count_params<T>(const Model<T>&, bool);                 \
  template std::size_t flatten_index<T>(const Model<T>&);                      \
  template void freeze_convolutional_stack<T>(Model<T>&);                      \
  template void unfreeze_all<T>(Model<T>&);                                    \
  template void replace_head<T>(Model<T>&, HeadSpec, Rng&);                    \
  template StructureAudit audit_structure<T>(const Model<T>&);                 \
  template std::string tensor_hash<T>(const Model<T>&, TensorGroup);

FACECHANNEL_INSTANTIATE_MODEL(float)
FACECHANNEL_INSTANTIATE_MODEL(double)

#undef FACECHANNEL_INSTANTIATE_MODEL

}  // namespace facechannel
