#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "facechannel/layer.hpp"
#include "facechannel/model.hpp"
#include "facechannel/tensor.hpp"

namespace facechannel {

struct GradCheckEntry {
  std::string name;
  /// max_i |analytic_i - numeric_i| / max(max_i |analytic_i|, max_i |numeric_i|, kGradCheckFloor)
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t checked = 0;
  /// Elements skipped because the objective is not smooth within +/-2 step there.
  std::size_t kinks = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;

  std::size_t checked() const;
  std::size_t kinks() const;
};

/// One tensor whose analytic gradient is compared against central differences.
struct GradProbe {
  std::string name;
  Tensor<double>* value;
  Tensor<double> analytic;
};

inline constexpr double kGradCheckStep = 1e-5;
/// Lower bound on the error denominator. Tensors whose true gradient is zero
/// (a conv bias feeding batch norm) are then judged by absolute error.
inline constexpr double kGradCheckFloor = 1e-3;

/// Perturbs every element of every probe by +/-step, re-evaluates `objective`
/// and compares the central difference with the probe's analytic gradient.
/// An element whose step and 2*step central differences disagree by more than
/// tolerance/10 (relative) sits on a kink of ReLU or max pooling; it is
/// counted in `kinks` and excluded from the error.
/// The error is relative to each tensor's largest gradient magnitude, so
/// near-zero entries do not dominate.
/// With `max_elements` > 0, at most that many elements per tensor are probed,
/// drawn without replacement from Rng(sample_seed).
GradCheckReport compare_with_central_differences(const std::function<double()>& objective,
                                                 std::vector<GradProbe>& probes, double tolerance,
                                                 double step = kGradCheckStep, std::size_t max_elements = 0,
                                                 std::uint64_t sample_seed = 0);

/// Checks a single layer on a random input of `input_shape` against the scalar
/// objective sum(r * layer(x)) for a fixed random r. Every forward pass reuses
/// the same Rng seed, so stochastic layers see one fixed mask. Parameters of a
/// frozen layer are not probed.
GradCheckReport grad_check(Layer<double>& layer, const Shape& input_shape, double tolerance,
                           std::uint64_t seed, Mode mode = Mode::kTrain);

/// End-to-end check of a whole model: objective is the head loss (exact
/// log-softmax cross-entropy, or tanh + MSE) of a train-mode forward on a random [batch, C, S, S] input
/// against random targets. Probes the input and every trainable parameter,
/// sampling at most `max_elements` entries per tensor (0 = all).
GradCheckReport grad_check_model(Model<double>& model, std::size_t batch, double tolerance, std::uint64_t seed,
                                 std::size_t max_elements = 0);

}  // namespace facechannel
