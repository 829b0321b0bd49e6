#include "facechannel/netpbm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>

namespace facechannel {

namespace {

class HeaderReader {
 public:
  explicit HeaderReader(std::string_view bytes) : bytes_(bytes) {}

  std::size_t next_number() {
    skip_space_and_comments();
    std::size_t value = 0;
    std::size_t digits = 0;
    while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
      value = value * 10 + static_cast<std::size_t>(bytes_[pos_] - '0');
      if (++digits > 9) throw DecodeError("netpbm: header number too large");
      ++pos_;
    }
    if (digits == 0) throw DecodeError("netpbm: malformed header");
    return value;
  }

  /// Exactly one whitespace byte separates maxval from the raster.
  std::size_t raster_offset() {
    if (pos_ >= bytes_.size() || !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
      throw DecodeError("netpbm: missing separator before raster");
    }
    return pos_ + 1;
  }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const char c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::string_view bytes_;
  std::size_t pos_ = 2;
};

}  // namespace

Tensor<float> decode_netpbm(std::string_view bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    throw DecodeError("netpbm: expected P5 or P6 magic");
  }
  const std::size_t channels = bytes[1] == '5' ? 1 : 3;
  HeaderReader header(bytes);
  const std::size_t width = header.next_number();
  const std::size_t height = header.next_number();
  const std::size_t maxval = header.next_number();
  if (width == 0 || height == 0) throw DecodeError("netpbm: zero image dimension");
  if (maxval == 0 || maxval > 255) throw DecodeError("netpbm: only 8-bit images are supported");
  const std::size_t offset = header.raster_offset();
  const std::size_t pixels = width * height;
  if (bytes.size() - std::min(offset, bytes.size()) < pixels * channels) {
    throw DecodeError("netpbm: truncated raster");
  }
  Tensor<float> img({channels, height, width});
  const auto* raster = reinterpret_cast<const unsigned char*>(bytes.data() + offset);
  const float scale = 1.0f / static_cast<float>(maxval);
  for (std::size_t p = 0; p < pixels; ++p) {
    for (std::size_t c = 0; c < channels; ++c) {
      img[c * pixels + p] = std::min(1.0f, static_cast<float>(raster[p * channels + c]) * scale);
    }
  }
  return img;
}

Tensor<float> decode_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image '" + path.string() + "'");
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_netpbm(bytes);
  } catch (const DecodeError& e) {
    throw DecodeError(path.string() + ": " + e.what());
  }
}

std::string encode_netpbm(const Tensor<float>& image) {
  require_rank(image.shape(), 3, "encode_netpbm");
  const std::size_t channels = image.dim(0), height = image.dim(1), width = image.dim(2);
  if (channels != 1 && channels != 3) throw ShapeError("encode_netpbm: image must have 1 or 3 channels");
  std::string out = (channels == 1 ? "P5\n" : "P6\n") + std::to_string(width) + " " + std::to_string(height) +
                    "\n255\n";
  const std::size_t pixels = width * height;
  out.reserve(out.size() + pixels * channels);
  for (std::size_t p = 0; p < pixels; ++p) {
    for (std::size_t c = 0; c < channels; ++c) {
      const float v = std::clamp(image[c * pixels + p], 0.0f, 1.0f);
      out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0f))));
    }
  }
  return out;
}

void write_image(const Tensor<float>& image, const std::filesystem::path& path) {
  const std::string bytes = encode_netpbm(image);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write image '" + path.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing image '" + path.string() + "'");
}

}  // namespace facechannel
