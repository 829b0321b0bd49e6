#pragma once

// Differentiable building blocks as pure functions. Each *_forward returns the
// output together with the cache its *_backward needs; backward must be given
// the cache from the matching forward call.

#include <cstdint>
#include <vector>

#include "facechannel/ops.hpp"
#include "facechannel/rng.hpp"
#include "facechannel/tensor.hpp"

namespace facechannel {

enum class Mode { kTrain, kInfer };

template <typename T, typename Cache>
struct LayerIO {
  Tensor<T> output;
  Cache cache;
};

// ---------------------------------------------------------------- ReLU

template <typename T>
struct ReluCache {
  Tensor<T> input;
};

template <typename T>
LayerIO<T, ReluCache<T>> relu_forward(const Tensor<T>& x);
/// Subgradient at exactly zero is 0.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& dy, const ReluCache<T>& cache);

// ---------------------------------------------------------------- shunting inhibition

/// Optional activation after the divisive step. Both u and I are already
/// rectified, so S >= 0 and kRelu leaves the forward value unchanged.
enum class ShuntingActivation { kNone, kRelu };

/// Lower bound of the effective decay: a = softplus(decay_raw) + kMinDecay.
inline constexpr double kMinDecay = 0.01;

template <typename T>
struct ShuntingParams {
  Tensor<T> main_kernel;        // [n, Cin, kh, kw]
  Tensor<T> main_bias;          // [n]
  Tensor<T> inhibitory_kernel;  // [n, Cin, kh, kw]
  Tensor<T> inhibitory_bias;    // [n]
  Tensor<T> decay_raw;          // [n]
};

/// decay_raw value for which the effective decay equals `decay`.
double decay_raw_for(double decay);
double softplus(double z);
double sigmoid(double z);

template <typename T>
struct ShuntingCache {
  Tensor<T> input;
  Tensor<T> main_pre;        // conv(x, main_kernel) + main_bias
  Tensor<T> inhibitory_pre;  // conv(x, inhibitory_kernel) + inhibitory_bias
  Tensor<T> excitation;      // u = relu(main_pre)
  Tensor<T> inhibition;      // I = relu(inhibitory_pre)
  Tensor<T> decay;           // effective decay per channel [n]
  Tensor<T> output;          // S
  ShuntingActivation activation = ShuntingActivation::kNone;
};

/// S = u / (a + I) with u = relu(conv_main(x)), I = relu(conv_inh(x)) and one
/// learned decay a per output channel, all convolutions `same`, stride 1.
template <typename T>
LayerIO<T, ShuntingCache<T>> shunting_forward(const Tensor<T>& x, const ShuntingParams<T>& p,
                                              ShuntingActivation activation = ShuntingActivation::kNone);

template <typename T>
struct ShuntingGrads {
  Tensor<T> input;
  Tensor<T> main_kernel;
  Tensor<T> main_bias;
  Tensor<T> inhibitory_kernel;
  Tensor<T> inhibitory_bias;
  Tensor<T> decay_raw;
};

template <typename T>
ShuntingGrads<T> shunting_backward(const Tensor<T>& d_output, const ShuntingCache<T>& cache,
                                   const ShuntingParams<T>& p, bool need_input_grad = true,
                                   bool need_param_grads = true);

// ---------------------------------------------------------------- batch normalization

inline constexpr double kBatchNormEpsilon = 1e-5;
inline constexpr double kBatchNormMomentum = 0.99;

template <typename T>
struct BatchNormParams {
  Tensor<T> gamma;
  Tensor<T> beta;
  Tensor<T> running_mean;
  Tensor<T> running_var;
  double momentum = kBatchNormMomentum;
  double epsilon = kBatchNormEpsilon;

  static BatchNormParams identity(std::size_t channels);
};

template <typename T>
struct BatchNormCache {
  Tensor<T> normalized;  // pre-affine activations
  Tensor<T> inv_std;     // [C]
  Tensor<T> gamma;       // copy of gamma at forward time
  bool batch_statistics = false;
};

/// Accepts [N,C,H,W] or [N,C]. Train mode normalizes with the biased batch
/// variance and updates running = momentum*running + (1-momentum)*batch.
template <typename T>
LayerIO<T, BatchNormCache<T>> batchnorm_forward(const Tensor<T>& x, BatchNormParams<T>& p, Mode mode);

template <typename T>
struct BatchNormGrads {
  Tensor<T> input;
  Tensor<T> gamma;
  Tensor<T> beta;
};

template <typename T>
BatchNormGrads<T> batchnorm_backward(const Tensor<T>& dy, const BatchNormCache<T>& cache);

// ---------------------------------------------------------------- dropout

template <typename T>
struct DropoutCache {
  /// Empty when the layer was a pass-through; else entries in {0, 1/(1-rate)}.
  std::vector<T> mask;
};

/// Inverted dropout: inference is the identity.
template <typename T>
LayerIO<T, DropoutCache<T>> dropout_forward(const Tensor<T>& x, double rate, Mode mode, Rng& rng);
template <typename T>
Tensor<T> dropout_backward(const Tensor<T>& dy, const DropoutCache<T>& cache);

// ---------------------------------------------------------------- dense

template <typename T>
struct DenseCache {
  Tensor<T> input;
};

/// y = x W + b with x [N,D], W [D,U], b [U].
template <typename T>
LayerIO<T, DenseCache<T>> dense_forward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

template <typename T>
struct DenseGrads {
  Tensor<T> input;
  Tensor<T> weight;
  Tensor<T> bias;
};

template <typename T>
DenseGrads<T> dense_backward(const Tensor<T>& dy, const DenseCache<T>& cache, const Tensor<T>& weight,
                             bool need_input_grad = true, bool need_param_grads = true);

// ---------------------------------------------------------------- softmax

/// Row-wise softmax of [N,K] with max subtraction.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x);

}  // namespace facechannel
