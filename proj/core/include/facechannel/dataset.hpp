#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "facechannel/manifest.hpp"
#include "facechannel/model.hpp"
#include "facechannel/rng.hpp"
#include "facechannel/tensor.hpp"

namespace facechannel {

inline constexpr std::size_t kCanonicalImageSize = 128;

/// Bilinear resize to size x size, channel conversion (gray is replicated to
/// RGB, RGB is reduced to ITU-R BT.601 luma) and the affine map x -> 2x - 1.
/// Input is a decoded [C,H,W] image in [0,1].
Tensor<float> preprocess(const Tensor<float>& image, std::size_t target_channels,
                         std::size_t size = kCanonicalImageSize);

/// Decoded, preprocessed examples held in memory.
template <typename T>
struct Dataset {
  Tensor<T> images;   // [N,C,S,S] in [-1,1]
  Tensor<T> targets;  // [N,K] distributions (labels one-hot) or [N,2] arousal/valence
  bool dimensional = false;
  std::vector<std::string> class_names;

  std::size_t size() const { return images.empty() ? 0 : images.dim(0); }
  /// Head arity that matches these targets.
  HeadSpec head() const;
  Dataset subset(const std::vector<std::size_t>& indices) const;
};

/// Loads every manifest image through decode_image + preprocess. Throws
/// DataError on an empty manifest.
template <typename T>
Dataset<T> load_dataset(const Manifest& manifest, std::size_t channels, std::size_t size);

template <typename T>
struct Batch {
  Tensor<T> images;
  Tensor<T> targets;
  std::vector<std::size_t> indices;
};

/// Iterates a dataset in batches; the final partial batch is kept. With a
/// shuffle seed, every call to start_epoch() draws a new Fisher-Yates
/// permutation from one Rng stream, so the sequence of epoch orders depends
/// only on the seed.
template <typename T>
class BatchIterator {
 public:
  BatchIterator(const Dataset<T>& data, std::size_t batch_size, std::optional<std::uint64_t> shuffle_seed);

  void start_epoch();
  bool next(Batch<T>& batch);
  const std::vector<std::size_t>& order() const noexcept { return order_; }
  std::size_t batches_per_epoch() const noexcept;

 private:
  const Dataset<T>* data_;
  std::size_t batch_size_;
  std::optional<Rng> rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

}  // namespace facechannel
