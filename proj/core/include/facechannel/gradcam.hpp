#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "facechannel/model.hpp"
#include "facechannel/tensor.hpp"

namespace facechannel {

struct SaliencyMap {
  /// [S,S] in [0,1] at the model input resolution; max is 1 unless identically 0.
  Tensor<float> heatmap;
  std::size_t target = 0;
  std::string layer_name;
};

/// Name of the layer GradCam reads by default (the shunting layer).
template <typename T>
std::string default_gradcam_layer(const Model<T>& model);

/// Standard GradCam: infer-mode forward keeping activations A of `layer_name`,
/// gradient of the target logit (pre-softmax or pre-tanh) w.r.t. A, channel
/// weights = spatial mean of that gradient, map = ReLU(sum_k w_k A_k),
/// bilinear upsampling to the input size, division by the max when above 1e-12.
/// `image` is [1,C,S,S] or [C,S,S]. The model is left untouched.
/// Throws ParameterError for an out-of-range target or unknown layer.
template <typename T>
SaliencyMap gradcam(Model<T>& model, const Tensor<T>& image, std::size_t target,
                    const std::optional<std::string>& layer_name = std::nullopt);

/// Writes a binary PPM: R = 0.5 gray + 0.5 heat, G = B = 0.5 gray, where gray
/// is the base image mapped to [0,1] (from [-1,1] when any value is negative,
/// RGB reduced to its channel mean) and resized to the heatmap.
void render_heatmap(const SaliencyMap& map, const Tensor<float>& base_image, const std::filesystem::path& out_path);

}  // namespace facechannel
