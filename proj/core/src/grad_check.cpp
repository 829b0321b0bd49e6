#include "facechannel/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "facechannel/losses.hpp"

namespace facechannel {

std::size_t GradCheckReport::checked() const {
  std::size_t n = 0;
  for (const auto& e : entries) n += e.checked;
  return n;
}

std::size_t GradCheckReport::kinks() const {
  std::size_t n = 0;
  for (const auto& e : entries) n += e.kinks;
  return n;
}

GradCheckReport compare_with_central_differences(const std::function<double()>& objective,
                                                 std::vector<GradProbe>& probes, double tolerance,
                                                 double step, std::size_t max_elements,
                                                 std::uint64_t sample_seed) {
  Rng sampler(sample_seed);
  GradCheckReport report;
  report.tolerance = tolerance;
  for (auto& probe : probes) {
    if (probe.analytic.shape() != probe.value->shape()) {
      throw ShapeError("grad_check: analytic gradient for '" + probe.name + "' has the wrong shape");
    }
    GradCheckEntry entry;
    entry.name = probe.name;
    double max_diff = 0.0, scale = 0.0;
    auto& values = *probe.value;
    std::vector<std::size_t> indices(values.size());
    std::iota(indices.begin(), indices.end(), std::size_t{0});
    if (max_elements && indices.size() > max_elements) {
      sampler.shuffle(std::span<std::size_t>(indices));
      indices.resize(max_elements);
    }
    for (const std::size_t i : indices) {
      const double original = values[i];
      const auto central = [&](double h) {
        values[i] = original + h;
        const double plus = objective();
        values[i] = original - h;
        const double minus = objective();
        values[i] = original;
        return (plus - minus) / (2.0 * h);
      };
      const double numeric = central(step);
      const double wide = central(2.0 * step);
      const double analytic = probe.analytic[i];
      const double local = std::max({std::abs(numeric), std::abs(wide), kGradCheckFloor});
      if (std::abs(numeric - wide) > 0.1 * tolerance * local) {
        ++entry.kinks;
        continue;
      }
      max_diff = std::max(max_diff, std::abs(analytic - numeric));
      scale = std::max({scale, std::abs(analytic), std::abs(numeric)});
      ++entry.checked;
    }
    entry.max_abs_error = max_diff;
    entry.max_rel_error = max_diff / std::max(scale, kGradCheckFloor);
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.entries.push_back(std::move(entry));
  }
  report.passed = report.max_rel_error < tolerance;
  return report;
}

GradCheckReport grad_check(Layer<double>& layer, const Shape& input_shape, double tolerance,
                           std::uint64_t seed, Mode mode) {
  Rng rng(seed);
  Tensor<double> x(input_shape);
  for (auto& v : x.data()) v = rng.uniform(-1.0, 1.0);
  const std::uint64_t forward_seed = rng.next_u64();

  Rng probe_rng(forward_seed);
  const Tensor<double> y0 = layer.forward(x, mode, probe_rng);
  Tensor<double> upstream(y0.shape());
  for (auto& v : upstream.data()) v = rng.uniform(-1.0, 1.0);

  // Analytic pass.
  layer.zero_grad();
  Rng analytic_rng(forward_seed);
  layer.forward(x, mode, analytic_rng);
  std::vector<GradProbe> probes;
  probes.push_back({"input", &x, layer.backward(upstream, true)});
  if (layer.trainable()) {
    for (auto& p : layer.parameters()) probes.push_back({p.name, p.value, *p.grad});
  }

  const auto objective = [&]() {
    Rng r(forward_seed);
    const auto y = layer.forward(x, mode, r);
    double total = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) total += upstream[i] * y[i];
    return total;
  };
  return compare_with_central_differences(objective, probes, tolerance);
}

GradCheckReport grad_check_model(Model<double>& model, std::size_t batch, double tolerance, std::uint64_t seed,
                                 std::size_t max_elements) {
  const auto& cfg = model.config();
  Rng rng(seed);
  Tensor<double> x({batch, cfg.input_channels, cfg.input_size, cfg.input_size});
  for (auto& v : x.data()) v = rng.uniform(-1.0, 1.0);
  const std::size_t k = cfg.head.outputs();
  Tensor<double> target({batch, k}, 0.0);
  for (std::size_t n = 0; n < batch; ++n) {
    if (cfg.head.is_categorical()) {
      target[n * k + rng.uniform_index(k)] = 1.0;
    } else {
      for (std::size_t j = 0; j < k; ++j) target[n * k + j] = rng.uniform(-1.0, 1.0);
    }
  }
  const std::uint64_t forward_seed = rng.next_u64();
  const std::uint64_t sample_seed = rng.next_u64();

  // The training loss adds 1e-9 inside the log, which its (p - t)/N gradient
  // ignores; the exact log-softmax form is what that gradient differentiates.
  const auto exact_ce = [&](const Tensor<double>& logits) {
    double total = 0.0;
    for (std::size_t n = 0; n < batch; ++n) {
      const double* z = logits.raw() + n * k;
      const double m = *std::max_element(z, z + k);
      double lse = 0.0;
      for (std::size_t j = 0; j < k; ++j) lse += std::exp(z[j] - m);
      lse = m + std::log(lse);
      for (std::size_t j = 0; j < k; ++j) total -= target[n * k + j] * (z[j] - lse);
    }
    return total / static_cast<double>(batch);
  };
  const auto loss_of = [&](const Model<double>::Output& out, bool with_grad) {
    if (cfg.head.is_categorical()) {
      auto r = cross_entropy(out.predictions, target);
      r.loss = exact_ce(out.logits);
      return r;
    }
    auto r = mse(out.predictions, target);
    if (with_grad) {
      for (std::size_t i = 0; i < r.grad.size(); ++i) {
        r.grad[i] *= 1.0 - out.predictions[i] * out.predictions[i];
      }
    }
    return r;
  };

  model.zero_grad();
  Rng analytic_rng(forward_seed);
  const auto out = model.forward(x, Mode::kTrain, analytic_rng);
  std::vector<GradProbe> probes;
  probes.push_back({"input", &x, model.backward(loss_of(out, true).grad, true, 0)});
  for (auto& p : model.parameters(true)) probes.push_back({p.name, p.value, *p.grad});
  model.clear_caches();

  const auto objective = [&]() {
    Rng r(forward_seed);
    return loss_of(model.forward(x, Mode::kTrain, r), false).loss;
  };
  auto report = compare_with_central_differences(objective, probes, tolerance, kGradCheckStep, max_elements,
                                                 sample_seed);
  model.clear_caches();
  return report;
}

}  // namespace facechannel
