#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "facechannel/tensor.hpp"

namespace facechannel {

/// Decodes binary 8-bit PGM (P5 -> C=1) or PPM (P6 -> C=3) into [C,H,W] with
/// values p / maxval in [0,1]. Throws DecodeError on bad magic or truncation.
Tensor<float> decode_netpbm(std::string_view bytes);
Tensor<float> decode_image(const std::filesystem::path& path);

/// Encodes [1,H,W] as P5 or [3,H,W] as P6 with maxval 255; values are
/// clamped to [0,1] and rounded to the nearest level.
std::string encode_netpbm(const Tensor<float>& image);
void write_image(const Tensor<float>& image, const std::filesystem::path& path);

}  // namespace facechannel
