#include "facechannel/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>

#include "facechannel/error.hpp"
#include "facechannel/losses.hpp"

namespace facechannel {

namespace {

std::string format_real(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

LossKind loss_for(const HeadSpec& head) {
  return head.is_categorical() ? LossKind::kCrossEntropy : LossKind::kMse;
}

// Loss and its gradient w.r.t. the logits.
template <typename T>
LossResult<T> loss_and_grad(const typename Model<T>::Output& out, const Tensor<T>& target, LossKind kind) {
  if (kind == LossKind::kCrossEntropy) return cross_entropy(out.predictions, target);
  auto r = mse(out.predictions, target);
  // Through tanh: d tanh(z)/dz = 1 - y^2.
  const auto y = out.predictions.data();
  auto g = r.grad.data();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] *= T(1) - y[i] * y[i];
  return r;
}

double metric_of(const EvalReport& r) {
  if (r.accuracy) return *r.accuracy;
  return 0.5 * (r.ccc_arousal.value_or(0.0) + r.ccc_valence.value_or(0.0));
}

template <typename T>
double dataset_loss(const Tensor<T>& predictions, const Tensor<T>& targets, LossKind kind) {
  return kind == LossKind::kCrossEntropy ? cross_entropy(predictions, targets).loss
                                         : mse(predictions, targets).loss;
}

}  // namespace

std::string_view routine_name(Routine r) {
  switch (r) {
    case Routine::kScratch: return "scratch";
    case Routine::kPretrainOnly: return "pretrain";
    case Routine::kPretrainThenFinetune: return "finetune";
  }
  return "";
}

Routine parse_routine(std::string_view text) {
  if (text == "scratch") return Routine::kScratch;
  if (text == "pretrain" || text == "pretrain_only") return Routine::kPretrainOnly;
  if (text == "finetune" || text == "pretrain_then_finetune") return Routine::kPretrainThenFinetune;
  throw ParameterError("unknown routine '" + std::string(text) + "'");
}

void TrainSpec::validate() const {
  if (batch_size < 1) throw ParameterError("batch_size must be >= 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ParameterError("learning_rate must be a finite non-negative number");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ParameterError("momentum must be in [0,1)");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ParameterError("lr_decay must be in (0,1]");
}

std::string TrainHistory::to_csv() const {
  std::string out = "epoch,train_loss,train_metric,val_loss,val_metric\n";
  for (const auto& e : epochs) {
    out += std::to_string(e.epoch) + ',' + format_real(e.train_loss) + ',' + format_real(e.train_metric) + ',';
    if (e.val_loss) out += format_real(*e.val_loss);
    out += ',';
    if (e.val_metric) out += format_real(*e.val_metric);
    out += '\n';
  }
  return out;
}

void TrainHistory::write_csv(const std::filesystem::path& path) const {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write history '" + path.string() + "'");
  f << to_csv();
  if (!f) throw IoError("failed writing history '" + path.string() + "'");
}

template <typename T>
void check_head_matches(const ModelConfig& config, const Dataset<T>& data) {
  const HeadSpec want = data.head();
  if (config.head != want) {
    throw ConfigError("model head '" + config.head.to_string() + "' does not match the dataset targets ('" +
                      want.to_string() + "')");
  }
}

template <typename T>
double train_step(Model<T>& model, const Batch<T>& batch, LossKind loss, SgdMomentum<T>& optimizer, Rng& rng) {
  model.zero_grad();
  const auto out = model.forward(batch.images, Mode::kTrain, rng);
  const auto r = loss_and_grad<T>(out, batch.targets, loss);
  model.backward(r.grad, true);
  optimizer.step(model.parameters(true));
  model.clear_caches();
  return r.loss;
}

template <typename T>
Tensor<T> predict(Model<T>& model, const Tensor<T>& images, std::size_t batch_size) {
  if (images.rank() != 4 || images.dim(0) == 0) throw ShapeError("predict: expected a non-empty [N,C,H,W] batch");
  const std::size_t n = images.dim(0);
  const std::size_t stride = images.size() / n;
  const std::size_t k = model.config().head.outputs();
  Tensor<T> out({n, k});
  Rng unused(0);
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t m = std::min(batch_size, n - start);
    Shape s = images.shape();
    s[0] = m;
    Tensor<T> chunk(s);
    std::copy_n(images.raw() + start * stride, m * stride, chunk.raw());
    const auto o = model.forward(chunk, Mode::kInfer, unused);
    std::copy_n(o.predictions.raw(), m * k, out.raw() + start * k);
  }
  model.clear_caches();
  return out;
}

template <typename T>
EvalReport evaluate_predictions(const Tensor<T>& predictions, const Tensor<T>& targets, bool dimensional,
                                const std::vector<std::string>& class_names) {
  if (targets.rank() != 2 || targets.dim(0) == 0) throw DataError("evaluation set is empty");
  if (predictions.shape() != targets.shape()) {
    throw ShapeError("predictions " + shape_to_string(predictions.shape()) + " vs targets " +
                     shape_to_string(targets.shape()));
  }
  const std::size_t n = targets.dim(0);
  EvalReport r;
  r.samples = n;
  if (dimensional) {
    std::vector<double> pa(n), pv(n), ta(n), tv(n);
    for (std::size_t i = 0; i < n; ++i) {
      pa[i] = predictions[i * 2];
      pv[i] = predictions[i * 2 + 1];
      ta[i] = targets[i * 2];
      tv[i] = targets[i * 2 + 1];
    }
    if (n >= 2) {
      r.ccc_arousal = ccc(pa, ta);
      r.ccc_valence = ccc(pv, tv);
    } else {
      r.ccc_arousal = r.ccc_valence = 0.0;
    }
    return r;
  }
  const std::size_t k = targets.dim(1);
  std::vector<std::size_t> hits(k, 0), totals(k, 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto truth = argmax_row(targets, i);
    const bool hit = argmax_row(predictions, i) == truth;
    correct += hit;
    hits[truth] += hit;
    ++totals[truth];
  }
  r.accuracy = static_cast<double>(correct) / static_cast<double>(n);
  for (std::size_t c = 0; c < k; ++c) {
    if (!totals[c]) continue;
    const std::string name = c < class_names.size() ? class_names[c] : std::to_string(c);
    r.per_class[name] = static_cast<double>(hits[c]) / static_cast<double>(totals[c]);
  }
  return r;
}

template <typename T>
EvalReport evaluate(Model<T>& model, const Dataset<T>& data) {
  if (data.size() == 0) throw DataError("evaluation set is empty");
  check_head_matches(model.config(), data);
  return evaluate_predictions(predict(model, data.images), data.targets, data.dimensional, data.class_names);
}

template <typename T>
TrainHistory train(Model<T>& model, const Dataset<T>& data, const TrainSpec& spec, std::type_identity_t<const Dataset<T>*> validation,
                   std::type_identity_t<SgdMomentum<T>*> optimizer, const EpochCallback& on_epoch) {
  spec.validate();
  if (data.size() == 0) throw DataError("training set is empty");
  check_head_matches(model.config(), data);
  if (validation) check_head_matches(model.config(), *validation);
  const LossKind loss = spec.loss.value_or(loss_for(model.config().head));
  if (loss != loss_for(model.config().head)) {
    throw ConfigError(std::string("loss does not fit a ") +
                      (model.config().head.is_categorical() ? "categorical" : "dimensional") + " head");
  }

  std::optional<SgdMomentum<T>> own;
  if (!optimizer) optimizer = &own.emplace(spec.learning_rate, spec.momentum);
  optimizer->set_learning_rate(spec.learning_rate);

  Rng root(spec.seed);
  const std::uint64_t shuffle_seed = root.next_u64();
  Rng dropout_rng = root.split();
  BatchIterator<T> batches(data, spec.batch_size, shuffle_seed);

  TrainHistory history;
  double best_loss = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  for (std::size_t epoch = 1; epoch <= spec.epochs; ++epoch) {
    batches.start_epoch();
    Batch<T> batch;
    double loss_sum = 0.0;
    while (batches.next(batch)) {
      loss_sum += train_step(model, batch, loss, *optimizer, dropout_rng) * static_cast<double>(batch.indices.size());
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(data.size());
    rec.learning_rate = optimizer->learning_rate();
    rec.train_metric = metric_of(evaluate_predictions(predict(model, data.images), data.targets, data.dimensional));
    if (validation && validation->size()) {
      const auto pred = predict(model, validation->images);
      rec.val_loss = dataset_loss(pred, validation->targets, loss);
      rec.val_metric = metric_of(evaluate_predictions(pred, validation->targets, validation->dimensional));
    }
    history.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (rec.train_loss < best_loss) {
      best_loss = rec.train_loss;
      since_best = 0;
    } else if (spec.plateau_patience && ++since_best >= spec.plateau_patience) {
      optimizer->set_learning_rate(optimizer->learning_rate() * spec.lr_decay);
      since_best = 0;
    }
  }
  return history;
}

template <typename T>
TrainHistory fine_tune(Model<T>& model, const Dataset<T>& data, const TrainSpec& spec, std::type_identity_t<const Dataset<T>*> validation,
                       std::type_identity_t<SgdMomentum<T>*> optimizer, const EpochCallback& on_epoch) {
  if (spec.routine != Routine::kPretrainThenFinetune) {
    throw ConfigError("fine_tune requires the pretrain_then_finetune routine");
  }
  freeze_convolutional_stack(model);
  return train(model, data, spec, validation, optimizer, on_epoch);
}

#define FC_INSTANTIATE(T)                                                                                       \
  template void check_head_matches<T>(const ModelConfig&, const Dataset<T>&);                                   \
  template double train_step<T>(Model<T>&, const Batch<T>&, LossKind, SgdMomentum<T>&, Rng&);                   \
  template Tensor<T> predict<T>(Model<T>&, const Tensor<T>&, std::size_t);                                       \
  template EvalReport evaluate_predictions<T>(const Tensor<T>&, const Tensor<T>&, bool,                          \
                                              const std::vector<std::string>&);                                  \
  template EvalReport evaluate<T>(Model<T>&, const Dataset<T>&);                                                 \
  template TrainHistory train<T>(Model<T>&, const Dataset<T>&, const TrainSpec&, const Dataset<T>*,              \
                                 SgdMomentum<T>*, const EpochCallback&);                                      \
  template TrainHistory fine_tune<T>(Model<T>&, const Dataset<T>&, const TrainSpec&, const Dataset<T>*,          \
                                     SgdMomentum<T>*, const EpochCallback&);

FC_INSTANTIATE(float)
FC_INSTANTIATE(double)

}  // namespace facechannel
