#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "facechannel/model.hpp"

namespace facechannel {

/// On-disk layout:
///   bytes 0-3   magic "FCH1"
///   bytes 4-7   u32 little-endian length L of the header
///   next L      UTF-8 JSON header: {version, config, routine, frozen,
///               tensors: [{name, dtype, shape, offset, length}],
///               optimizer_state: [...same...], payload_sha256}
///   rest        payload: little-endian IEEE-754 tensors, offsets relative to its start
inline constexpr char kCheckpointMagic[4] = {'F', 'C', 'H', '1'};
inline constexpr int kCheckpointVersion = 1;

template <typename T>
using TensorMap = std::map<std::string, Tensor<T>>;

template <typename T>
struct Checkpoint {
  Model<T> model;
  TensorMap<T> optimizer_state;
  /// Free-form provenance label, e.g. "scratch", "pretrain", "finetune".
  std::string routine;
};

/// Throws IoError when the file cannot be written.
template <typename T>
void save_checkpoint(const Model<T>& model, const std::filesystem::path& path,
                     const TensorMap<T>* optimizer_state = nullptr, const std::string& routine = "");

/// Throws CorruptCheckpointError on bad magic, version, header, hash or
/// tensor directory, and IoError when the file cannot be opened.
template <typename T>
Checkpoint<T> read_checkpoint(const std::filesystem::path& path);

template <typename T>
Model<T> load_checkpoint(const std::filesystem::path& path) {
  return read_checkpoint<T>(path).model;
}

}  // namespace facechannel
