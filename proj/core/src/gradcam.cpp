#include "facechannel/gradcam.hpp"

#include <algorithm>

#include "facechannel/error.hpp"
#include "facechannel/netpbm.hpp"
#include "facechannel/ops.hpp"

namespace facechannel {

template <typename T>
std::string default_gradcam_layer(const Model<T>& model) {
  for (std::size_t i = 0; i < model.layer_count(); ++i) {
    if (model.layer(i).kind() == LayerKind::kShunting) return model.layer(i).name();
  }
  throw ConfigError("model has no shunting layer");
}

template <typename T>
SaliencyMap gradcam(Model<T>& model, const Tensor<T>& image, std::size_t target,
                    const std::optional<std::string>& layer_name) {
  const auto& cfg = model.config();
  const std::size_t outputs = cfg.head.outputs();
  if (target >= outputs) {
    throw ParameterError("gradcam target " + std::to_string(target) + " out of range (head has " +
                         std::to_string(outputs) + " outputs)");
  }
  const std::string name = layer_name.value_or(default_gradcam_layer(model));
  const auto index = model.find_layer(name);
  if (!index) throw ParameterError("gradcam: no layer named '" + name + "'");
  if (*index >= flatten_index(model)) throw ParameterError("gradcam: layer '" + name + "' is not spatial");

  Tensor<T> batch = image;
  if (batch.rank() == 3) batch = batch.reshaped({1, image.dim(0), image.dim(1), image.dim(2)});
  if (batch.rank() != 4 || batch.dim(0) != 1) throw ShapeError("gradcam expects a single image");

  Rng unused(0);
  auto out = model.forward(batch, Mode::kInfer, unused, true);
  Tensor<T> d_logits({1, outputs}, T(0));
  d_logits[target] = T(1);
  const Tensor<T> dA = model.backward(d_logits, false, *index + 1);
  const Tensor<T>& A = out.activations[*index];
  model.clear_caches();

  const std::size_t channels = A.dim(1), h = A.dim(2), w = A.dim(3), hw = h * w;
  Tensor<double> cam({1, h, w}, 0.0);
  for (std::size_t c = 0; c < channels; ++c) {
    double weight = 0.0;
    for (std::size_t i = 0; i < hw; ++i) weight += static_cast<double>(dA[c * hw + i]);
    weight /= static_cast<double>(hw);
    if (weight == 0.0) continue;
    for (std::size_t i = 0; i < hw; ++i) cam[i] += weight * static_cast<double>(A[c * hw + i]);
  }
  for (auto& v : cam.data()) v = std::max(v, 0.0);

  auto up = resize_bilinear(cam, cfg.input_size, cfg.input_size);
  const auto values = up.data();
  const double peak = values.empty() ? 0.0 : *std::max_element(values.begin(), values.end());
  SaliencyMap map{Tensor<float>({cfg.input_size, cfg.input_size}, 0.0f), target, name};
  if (peak > 1e-12) {
    for (std::size_t i = 0; i < values.size(); ++i) {
      map.heatmap[i] = static_cast<float>(std::clamp(values[i] / peak, 0.0, 1.0));
    }
  }
  return map;
}

void render_heatmap(const SaliencyMap& map, const Tensor<float>& base_image, const std::filesystem::path& out_path) {
  if (map.heatmap.rank() != 2) throw ShapeError("heatmap must be [H,W]");
  const std::size_t h = map.heatmap.dim(0), w = map.heatmap.dim(1);
  Tensor<float> base = base_image;
  if (base.rank() == 4 && base.dim(0) == 1) base = base.reshaped({base.dim(1), base.dim(2), base.dim(3)});
  if (base.rank() == 2) base = base.reshaped({1, base.dim(0), base.dim(1)});
  if (base.rank() != 3) throw ShapeError("base image must be [C,H,W]");

  const auto vals = base.data();
  const bool signed_range = std::any_of(vals.begin(), vals.end(), [](float v) { return v < 0.0f; });
  const std::size_t c = base.dim(0), plane = base.dim(1) * base.dim(2);
  Tensor<float> gray({1, base.dim(1), base.dim(2)}, 0.0f);
  for (std::size_t i = 0; i < plane; ++i) {
    float s = 0.0f;
    for (std::size_t k = 0; k < c; ++k) s += vals[k * plane + i];
    s /= static_cast<float>(c);
    gray[i] = signed_range ? (s + 1.0f) * 0.5f : s;
  }
  if (gray.dim(1) != h || gray.dim(2) != w) gray = resize_bilinear(gray, h, w);

  Tensor<float> rgb({3, h, w});
  for (std::size_t i = 0; i < h * w; ++i) {
    const float g = std::clamp(gray[i], 0.0f, 1.0f);
    rgb[i] = 0.5f * g + 0.5f * map.heatmap[i];
    rgb[h * w + i] = 0.5f * g;
    rgb[2 * h * w + i] = 0.5f * g;
  }
  write_image(rgb, out_path);
}

template std::string default_gradcam_layer<float>(const Model<float>&);
template std::string default_gradcam_layer<double>(const Model<double>&);
template SaliencyMap gradcam<float>(Model<float>&, const Tensor<float>&, std::size_t,
                                    const std::optional<std::string>&);
template SaliencyMap gradcam<double>(Model<double>&, const Tensor<double>&, std::size_t,
                                     const std::optional<std::string>&);

}  // namespace facechannel
