#include "facechannel/dataset.hpp"

#include <algorithm>
#include <numeric>

#include "facechannel/netpbm.hpp"
#include "facechannel/ops.hpp"

namespace facechannel {

Tensor<float> preprocess(const Tensor<float>& image, std::size_t target_channels, std::size_t size) {
  require_rank(image.shape(), 3, "preprocess");
  if (target_channels != 1 && target_channels != 3) throw ParameterError("target channels must be 1 or 3");
  const std::size_t c = image.dim(0);
  if (c != 1 && c != 3) throw ShapeError("preprocess: images must have 1 or 3 channels");
  const bool same_size = image.dim(1) == size && image.dim(2) == size;
  const Tensor<float> resized = same_size ? image : resize_bilinear(image, size, size);
  const std::size_t plane = size * size;

  Tensor<float> out({target_channels, size, size});
  if (c == target_channels) {
    out = resized;
  } else if (c == 1) {
    for (std::size_t ch = 0; ch < 3; ++ch) std::copy(resized.raw(), resized.raw() + plane, out.raw() + ch * plane);
  } else {
    for (std::size_t p = 0; p < plane; ++p) {
      out[p] = 0.299f * resized[p] + 0.587f * resized[plane + p] + 0.114f * resized[2 * plane + p];
    }
  }
  for (auto& v : out.data()) v = 2.0f * v - 1.0f;
  return out;
}

template <typename T>
HeadSpec Dataset<T>::head() const {
  if (dimensional) return HeadSpec::dimensional();
  return HeadSpec::categorical(targets.dim(1));
}

template <typename T>
Dataset<T> Dataset<T>::subset(const std::vector<std::size_t>& indices) const {
  if (indices.empty()) throw DataError("subset: no indices");
  Shape ishape = images.shape();
  Shape tshape = targets.shape();
  ishape[0] = tshape[0] = indices.size();
  const std::size_t istride = shape_numel(images.shape()) / images.dim(0);
  const std::size_t tstride = targets.dim(1);
  Dataset out{Tensor<T>(ishape), Tensor<T>(tshape), dimensional, class_names};
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::size_t src = indices[i];
    if (src >= size()) throw DataError("subset: index out of range");
    std::copy_n(images.raw() + src * istride, istride, out.images.raw() + i * istride);
    std::copy_n(targets.raw() + src * tstride, tstride, out.targets.raw() + i * tstride);
  }
  return out;
}

template <typename T>
Dataset<T> load_dataset(const Manifest& manifest, std::size_t channels, std::size_t size) {
  if (manifest.empty()) throw DataError("dataset is empty");
  const std::size_t n = manifest.size();
  Dataset<T> ds;
  ds.dimensional = manifest.is_dimensional();
  const std::size_t k = ds.dimensional ? 2 : manifest.num_classes();
  if (!ds.dimensional && k < 2) throw DataError("categorical datasets need at least two classes");
  ds.class_names = manifest.class_names;
  if (!ds.dimensional && ds.class_names.empty()) {
    for (std::size_t i = 0; i < k; ++i) ds.class_names.push_back("class" + std::to_string(i));
  }
  ds.images = Tensor<T>({n, channels, size, size});
  ds.targets = Tensor<T>({n, k});
  const std::size_t stride = channels * size * size;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& rec = manifest.records[i];
    const auto img = preprocess(decode_image(manifest.resolve(rec)), channels, size);
    std::copy(img.raw(), img.raw() + stride, ds.images.raw() + i * stride);
    T* row = ds.targets.raw() + i * k;
    if (rec.target.kind == TargetKind::kLabel) {
      const auto label = static_cast<std::size_t>(rec.target.values.front());
      if (label >= k) throw DataError("label " + std::to_string(label) + " out of range");
      row[label] = T{1};
    } else {
      if (rec.target.values.size() != k) throw DataError("target width differs from " + std::to_string(k));
      for (std::size_t j = 0; j < k; ++j) row[j] = static_cast<T>(rec.target.values[j]);
    }
  }
  return ds;
}

template <typename T>
BatchIterator<T>::BatchIterator(const Dataset<T>& data, std::size_t batch_size,
                                std::optional<std::uint64_t> shuffle_seed)
    : data_(&data), batch_size_(batch_size) {
  if (batch_size == 0) throw ParameterError("batch size must be >= 1");
  if (shuffle_seed) rng_.emplace(*shuffle_seed);
  order_.resize(data.size());
  start_epoch();
}

template <typename T>
void BatchIterator<T>::start_epoch() {
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  if (rng_) rng_->shuffle(std::span<std::size_t>(order_));
  cursor_ = 0;
}

template <typename T>
std::size_t BatchIterator<T>::batches_per_epoch() const noexcept {
  return (order_.size() + batch_size_ - 1) / batch_size_;
}

template <typename T>
bool BatchIterator<T>::next(Batch<T>& batch) {
  if (cursor_ >= order_.size()) return false;
  const std::size_t end = std::min(order_.size(), cursor_ + batch_size_);
  batch.indices.assign(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                       order_.begin() + static_cast<std::ptrdiff_t>(end));
  cursor_ = end;
  Shape ishape = data_->images.shape();
  Shape tshape = data_->targets.shape();
  ishape[0] = tshape[0] = batch.indices.size();
  batch.images = Tensor<T>(ishape);
  batch.targets = Tensor<T>(tshape);
  const std::size_t istride = shape_numel(ishape) / ishape[0];
  const std::size_t tstride = tshape[1];
  for (std::size_t i = 0; i < batch.indices.size(); ++i) {
    const std::size_t src = batch.indices[i];
    std::copy_n(data_->images.raw() + src * istride, istride, batch.images.raw() + i * istride);
    std::copy_n(data_->targets.raw() + src * tstride, tstride, batch.targets.raw() + i * tstride);
  }
  return true;
}

template struct Dataset<float>;
template struct Dataset<double>;
template Dataset<float> load_dataset<float>(const Manifest&, std::size_t, std::size_t);
template Dataset<double> load_dataset<double>(const Manifest&, std::size_t, std::size_t);
template class BatchIterator<float>;
template class BatchIterator<double>;

}  // namespace facechannel
