#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "facechannel/dataset.hpp"
#include "facechannel/metrics.hpp"
#include "facechannel/model.hpp"
#include "facechannel/optimizer.hpp"

namespace facechannel {

/// scratch: train every layer from initialisation; pretrain_only: same, but the
/// result is meant to be reused on another task as is; pretrain_then_finetune:
/// freeze the conv stack and train only the dense layers.
enum class Routine { kScratch, kPretrainOnly, kPretrainThenFinetune };
enum class LossKind { kCrossEntropy, kMse };

std::string_view routine_name(Routine r);
Routine parse_routine(std::string_view text);

struct TrainSpec {
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::uint64_t seed = 0;
  Routine routine = Routine::kScratch;
  /// Defaults to the loss matching the model head.
  std::optional<LossKind> loss;
  /// Learning rate is multiplied by lr_decay after `plateau_patience` epochs
  /// without a new best training loss. patience 0 disables the schedule.
  double lr_decay = 0.5;
  std::size_t plateau_patience = 10;

  /// Throws ParameterError. A zero learning rate is accepted (parameters stay fixed).
  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  /// Accuracy (categorical) or mean CCC over both dimensions, in infer mode.
  double train_metric = 0.0;
  std::optional<double> val_loss;
  std::optional<double> val_metric;
  double learning_rate = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;

  /// Header "epoch,train_loss,train_metric,val_loss,val_metric"; missing
  /// validation values are empty fields. Values use shortest round-trip form.
  std::string to_csv() const;
  void write_csv(const std::filesystem::path& path) const;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// One optimisation step on a batch in train mode. Returns the batch loss.
template <typename T>
double train_step(Model<T>& model, const Batch<T>& batch, LossKind loss, SgdMomentum<T>& optimizer, Rng& rng);

/// Trains `model` in place. Shuffling and dropout draw from streams derived
/// from spec.seed only. Throws ConfigError when the data does not fit the head.
/// When `optimizer` is given its state carries over between calls.
template <typename T>
TrainHistory train(Model<T>& model, const Dataset<T>& data, const TrainSpec& spec,
                   std::type_identity_t<const Dataset<T>*> validation = nullptr, std::type_identity_t<SgdMomentum<T>*> optimizer = nullptr,
                   const EpochCallback& on_epoch = {});

/// freeze_convolutional_stack followed by train. Requires spec.routine ==
/// pretrain_then_finetune.
template <typename T>
TrainHistory fine_tune(Model<T>& model, const Dataset<T>& data, const TrainSpec& spec,
                       std::type_identity_t<const Dataset<T>*> validation = nullptr, std::type_identity_t<SgdMomentum<T>*> optimizer = nullptr,
                       const EpochCallback& on_epoch = {});

/// Infer-mode predictions (softmax or tanh outputs) for the whole dataset.
template <typename T>
Tensor<T> predict(Model<T>& model, const Tensor<T>& images, std::size_t batch_size = 64);

/// Accuracy / per-class accuracy (argmax against argmax) or CCC per dimension.
/// Throws DataError on an empty dataset and ConfigError on a head mismatch.
template <typename T>
EvalReport evaluate(Model<T>& model, const Dataset<T>& data);

/// Report from precomputed predictions; `class_names` may be empty.
template <typename T>
EvalReport evaluate_predictions(const Tensor<T>& predictions, const Tensor<T>& targets, bool dimensional,
                                const std::vector<std::string>& class_names = {});

/// Throws ConfigError when `data` cannot be used with the head of `config`.
template <typename T>
void check_head_matches(const ModelConfig& config, const Dataset<T>& data);

}  // namespace facechannel
