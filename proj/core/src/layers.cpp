#include "facechannel/layers.hpp"

#include <algorithm>
#include <cmath>

namespace facechannel {

// ---------------------------------------------------------------- ReLU

template <typename T>
LayerIO<T, ReluCache<T>> relu_forward(const Tensor<T>& x) {
  LayerIO<T, ReluCache<T>> io{x, {x}};
  for (auto& v : io.output.data()) v = v > T{0} ? v : T{0};
  return io;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& dy, const ReluCache<T>& cache) {
  if (dy.shape() != cache.input.shape()) throw ShapeError("relu_backward: gradient shape mismatch");
  Tensor<T> dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i) {
    if (!(cache.input[i] > T{0})) dx[i] = T{0};
  }
  return dx;
}

// ---------------------------------------------------------------- shunting inhibition

double softplus(double z) {
  return std::log1p(std::exp(-std::abs(z))) + std::max(z, 0.0);
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double decay_raw_for(double decay) {
  if (!(decay > kMinDecay)) throw ParameterError("effective decay must exceed the minimum decay");
  return std::log(std::expm1(decay - kMinDecay));
}

namespace {

template <typename T>
void check_shunting_params(const Tensor<T>& x, const ShuntingParams<T>& p) {
  require_rank(x.shape(), 4, "shunting input");
  if (p.main_kernel.shape() != p.inhibitory_kernel.shape()) {
    throw ShapeError("shunting: main and inhibitory kernels differ in shape");
  }
  require_rank(p.main_kernel.shape(), 4, "shunting kernel");
  const Shape channel_shape{p.main_kernel.dim(0)};
  if (p.main_bias.shape() != channel_shape || p.inhibitory_bias.shape() != channel_shape ||
      p.decay_raw.shape() != channel_shape) {
    throw ShapeError("shunting: bias/decay tensors must have one entry per output channel");
  }
}

}  // namespace

template <typename T>
LayerIO<T, ShuntingCache<T>> shunting_forward(const Tensor<T>& x, const ShuntingParams<T>& p,
                                              ShuntingActivation activation) {
  check_shunting_params(x, p);
  LayerIO<T, ShuntingCache<T>> io;
  auto& c = io.cache;
  c.input = x;
  c.activation = activation;
  c.main_pre = conv2d(x, p.main_kernel, p.main_bias, Padding::kSame, 1);
  c.inhibitory_pre = conv2d(x, p.inhibitory_kernel, p.inhibitory_bias, Padding::kSame, 1);
  c.excitation = relu_forward(c.main_pre).output;
  c.inhibition = relu_forward(c.inhibitory_pre).output;

  const std::size_t channels = p.decay_raw.size();
  c.decay = Tensor<T>({channels});
  for (std::size_t k = 0; k < channels; ++k) {
    c.decay[k] = static_cast<T>(softplus(static_cast<double>(p.decay_raw[k])) + kMinDecay);
  }

  const std::size_t n = x.dim(0);
  const std::size_t hw = c.excitation.dim(2) * c.excitation.dim(3);
  c.output = Tensor<T>(c.excitation.shape());
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t k = 0; k < channels; ++k) {
      const std::size_t base = (s * channels + k) * hw;
      const T a = c.decay[k];
      for (std::size_t i = base; i < base + hw; ++i) {
        c.output[i] = c.excitation[i] / (a + c.inhibition[i]);
      }
    }
  }
  // S >= 0 already, so a trailing ReLU is the identity on the forward path.
  io.output = c.output;
  return io;
}

template <typename T>
ShuntingGrads<T> shunting_backward(const Tensor<T>& d_output, const ShuntingCache<T>& cache,
                                   const ShuntingParams<T>& p, bool need_input_grad,
                                   bool need_param_grads) {
  if (d_output.shape() != cache.output.shape()) {
    throw ShapeError("shunting_backward: gradient shape mismatch");
  }
  const std::size_t n = d_output.dim(0);
  const std::size_t channels = d_output.dim(1);
  const std::size_t hw = d_output.dim(2) * d_output.dim(3);

  Tensor<T> d_main_pre(d_output.shape());
  Tensor<T> d_inh_pre(d_output.shape());
  std::vector<double> d_decay(channels, 0.0);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t k = 0; k < channels; ++k) {
      const std::size_t base = (s * channels + k) * hw;
      const T a = cache.decay[k];
      double decay_acc = 0.0;
      for (std::size_t i = base; i < base + hw; ++i) {
        T ds = d_output[i];
        if (cache.activation == ShuntingActivation::kRelu && !(cache.output[i] > T{0})) ds = T{0};
        const T denom = a + cache.inhibition[i];
        // dS/du = 1/(a+I);  dS/dI = dS/da = -u/(a+I)^2 = -S/(a+I)
        const T d_shared = -ds * cache.output[i] / denom;
        d_main_pre[i] = cache.main_pre[i] > T{0} ? ds / denom : T{0};
        d_inh_pre[i] = cache.inhibitory_pre[i] > T{0} ? d_shared : T{0};
        decay_acc += static_cast<double>(d_shared);
      }
      d_decay[k] += decay_acc;
    }
  }

  ShuntingGrads<T> g;
  auto main = conv2d_backward(cache.input, p.main_kernel, d_main_pre, Padding::kSame, 1,
                              need_input_grad, need_param_grads);
  auto inh = conv2d_backward(cache.input, p.inhibitory_kernel, d_inh_pre, Padding::kSame, 1,
                             need_input_grad, need_param_grads);
  if (need_input_grad) {
    g.input = std::move(main.input);
    for (std::size_t i = 0; i < g.input.size(); ++i) g.input[i] += inh.input[i];
  }
  if (need_param_grads) {
    g.main_kernel = std::move(main.kernel);
    g.main_bias = std::move(main.bias);
    g.inhibitory_kernel = std::move(inh.kernel);
    g.inhibitory_bias = std::move(inh.bias);
    g.decay_raw = Tensor<T>({channels});
    for (std::size_t k = 0; k < channels; ++k) {
      g.decay_raw[k] = static_cast<T>(d_decay[k] * sigmoid(static_cast<double>(p.decay_raw[k])));
    }
  }
  return g;
}

// ---------------------------------------------------------------- batch normalization

template <typename T>
BatchNormParams<T> BatchNormParams<T>::identity(std::size_t channels) {
  BatchNormParams<T> p;
  p.gamma = Tensor<T>({channels}, T{1});
  p.beta = Tensor<T>({channels}, T{0});
  p.running_mean = Tensor<T>({channels}, T{0});
  p.running_var = Tensor<T>({channels}, T{1});
  return p;
}

namespace {

struct BnLayout {
  std::size_t n, c, spatial;
};

BnLayout bn_layout(const Shape& shape) {
  if (shape.size() == 4) return {shape[0], shape[1], shape[2] * shape[3]};
  if (shape.size() == 2) return {shape[0], shape[1], 1};
  throw ShapeError("batchnorm expects [N,C,H,W] or [N,C], got " + shape_to_string(shape));
}

}  // namespace

template <typename T>
LayerIO<T, BatchNormCache<T>> batchnorm_forward(const Tensor<T>& x, BatchNormParams<T>& p, Mode mode) {
  const auto l = bn_layout(x.shape());
  const Shape channel_shape{l.c};
  if (p.gamma.shape() != channel_shape || p.beta.shape() != channel_shape ||
      p.running_mean.shape() != channel_shape || p.running_var.shape() != channel_shape) {
    throw ShapeError("batchnorm parameters do not match " + std::to_string(l.c) + " channels");
  }

  LayerIO<T, BatchNormCache<T>> io;
  auto& cache = io.cache;
  cache.batch_statistics = mode == Mode::kTrain;
  cache.gamma = p.gamma;
  cache.inv_std = Tensor<T>(channel_shape);
  std::vector<double> mean(l.c), var(l.c);

  if (mode == Mode::kTrain) {
    const std::size_t count = l.n * l.spatial;
    if (count < 2) {
      throw ShapeError("batchnorm train mode needs at least two values per channel");
    }
    for (std::size_t ch = 0; ch < l.c; ++ch) {
      double sum = 0.0;
      for (std::size_t s = 0; s < l.n; ++s) {
        const T* v = x.raw() + (s * l.c + ch) * l.spatial;
        for (std::size_t i = 0; i < l.spatial; ++i) sum += v[i];
      }
      mean[ch] = sum / static_cast<double>(count);
      double sq = 0.0;
      for (std::size_t s = 0; s < l.n; ++s) {
        const T* v = x.raw() + (s * l.c + ch) * l.spatial;
        for (std::size_t i = 0; i < l.spatial; ++i) {
          const double d = v[i] - mean[ch];
          sq += d * d;
        }
      }
      var[ch] = sq / static_cast<double>(count);
      p.running_mean[ch] =
          static_cast<T>(p.momentum * p.running_mean[ch] + (1.0 - p.momentum) * mean[ch]);
      p.running_var[ch] = static_cast<T>(p.momentum * p.running_var[ch] + (1.0 - p.momentum) * var[ch]);
    }
  } else {
    for (std::size_t ch = 0; ch < l.c; ++ch) {
      mean[ch] = p.running_mean[ch];
      var[ch] = p.running_var[ch];
    }
  }

  cache.normalized = Tensor<T>(x.shape());
  io.output = Tensor<T>(x.shape());
  for (std::size_t ch = 0; ch < l.c; ++ch) {
    const double inv_std = 1.0 / std::sqrt(var[ch] + p.epsilon);
    cache.inv_std[ch] = static_cast<T>(inv_std);
    const T m = static_cast<T>(mean[ch]);
    const T is = static_cast<T>(inv_std);
    for (std::size_t s = 0; s < l.n; ++s) {
      const std::size_t base = (s * l.c + ch) * l.spatial;
      for (std::size_t i = base; i < base + l.spatial; ++i) {
        const T xhat = (x[i] - m) * is;
        cache.normalized[i] = xhat;
        io.output[i] = p.gamma[ch] * xhat + p.beta[ch];
      }
    }
  }
  return io;
}

template <typename T>
BatchNormGrads<T> batchnorm_backward(const Tensor<T>& dy, const BatchNormCache<T>& cache) {
  if (dy.shape() != cache.normalized.shape()) throw ShapeError("batchnorm_backward: gradient shape mismatch");
  const auto l = bn_layout(dy.shape());
  BatchNormGrads<T> g;
  g.input = Tensor<T>(dy.shape());
  g.gamma = Tensor<T>({l.c});
  g.beta = Tensor<T>({l.c});
  const double count = static_cast<double>(l.n * l.spatial);
  for (std::size_t ch = 0; ch < l.c; ++ch) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (std::size_t s = 0; s < l.n; ++s) {
      const std::size_t base = (s * l.c + ch) * l.spatial;
      for (std::size_t i = base; i < base + l.spatial; ++i) {
        sum_dy += dy[i];
        sum_dy_xhat += static_cast<double>(dy[i]) * cache.normalized[i];
      }
    }
    g.beta[ch] = static_cast<T>(sum_dy);
    g.gamma[ch] = static_cast<T>(sum_dy_xhat);
    const double scale = static_cast<double>(cache.gamma[ch]) * cache.inv_std[ch];
    for (std::size_t s = 0; s < l.n; ++s) {
      const std::size_t base = (s * l.c + ch) * l.spatial;
      for (std::size_t i = base; i < base + l.spatial; ++i) {
        if (cache.batch_statistics) {
          g.input[i] = static_cast<T>(scale * (dy[i] - sum_dy / count -
                                               cache.normalized[i] * sum_dy_xhat / count));
        } else {
          g.input[i] = static_cast<T>(scale * dy[i]);
        }
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------- dropout

template <typename T>
LayerIO<T, DropoutCache<T>> dropout_forward(const Tensor<T>& x, double rate, Mode mode, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ParameterError("dropout rate must be in [0, 1)");
  LayerIO<T, DropoutCache<T>> io{x, {}};
  if (mode == Mode::kInfer || rate == 0.0) return io;
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  io.cache.mask.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T m = rng.uniform() < rate ? T{0} : keep_scale;
    io.cache.mask[i] = m;
    io.output[i] = x[i] * m;
  }
  return io;
}

template <typename T>
Tensor<T> dropout_backward(const Tensor<T>& dy, const DropoutCache<T>& cache) {
  if (cache.mask.empty()) return dy;
  if (cache.mask.size() != dy.size()) throw ShapeError("dropout_backward: gradient shape mismatch");
  Tensor<T> dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= cache.mask[i];
  return dx;
}

// ---------------------------------------------------------------- dense

template <typename T>
LayerIO<T, DenseCache<T>> dense_forward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  require_rank(x.shape(), 2, "dense input");
  require_rank(weight.shape(), 2, "dense weight");
  if (x.dim(1) != weight.dim(0) || bias.shape() != Shape{weight.dim(1)}) {
    throw ShapeError("dense shape mismatch: x " + shape_to_string(x.shape()) + ", W " +
                     shape_to_string(weight.shape()) + ", b " + shape_to_string(bias.shape()));
  }
  const std::size_t n = x.dim(0), units = weight.dim(1);
  LayerIO<T, DenseCache<T>> io;
  io.output = Tensor<T>({n, units});
  for (std::size_t s = 0; s < n; ++s) {
    std::copy(bias.raw(), bias.raw() + units, io.output.raw() + s * units);
  }
  gemm(n, units, x.dim(1), x.raw(), weight.raw(), io.output.raw(), true);
  io.cache.input = x;
  return io;
}

template <typename T>
DenseGrads<T> dense_backward(const Tensor<T>& dy, const DenseCache<T>& cache, const Tensor<T>& weight,
                             bool need_input_grad, bool need_param_grads) {
  const std::size_t n = cache.input.dim(0), d = weight.dim(0), units = weight.dim(1);
  if (dy.shape() != Shape{n, units}) throw ShapeError("dense_backward: gradient shape mismatch");
  DenseGrads<T> g;
  if (need_param_grads) {
    std::vector<T> x_t(d * n);
    transpose(cache.input.raw(), n, d, x_t.data());
    g.weight = Tensor<T>({d, units});
    gemm(d, units, n, x_t.data(), dy.raw(), g.weight.raw(), false);
    g.bias = Tensor<T>({units});
    for (std::size_t s = 0; s < n; ++s) {
      for (std::size_t u = 0; u < units; ++u) g.bias[u] += dy[s * units + u];
    }
  }
  if (need_input_grad) {
    std::vector<T> w_t(units * d);
    transpose(weight.raw(), d, units, w_t.data());
    g.input = Tensor<T>({n, d});
    gemm(n, d, units, dy.raw(), w_t.data(), g.input.raw(), false);
  }
  return g;
}

// ---------------------------------------------------------------- softmax

template <typename T>
Tensor<T> softmax(const Tensor<T>& x) {
  require_rank(x.shape(), 2, "softmax input");
  const std::size_t n = x.dim(0), k = x.dim(1);
  Tensor<T> y(x.shape());
  for (std::size_t s = 0; s < n; ++s) {
    const T* row = x.raw() + s * k;
    const T mx = *std::max_element(row, row + k);
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) total += std::exp(static_cast<double>(row[j] - mx));
    for (std::size_t j = 0; j < k; ++j) {
      y[s * k + j] = static_cast<T>(std::exp(static_cast<double>(row[j] - mx)) / total);
    }
  }
  return y;
}

#define FACECHANNEL_INSTANTIATE_LAYERS(T)                                                              \
  template LayerIO<T, ReluCache<T>> relu_forward<T>(const Tensor<T>&);                                 \
  template Tensor<T> relu_backward<T>(const Tensor<T>&, const ReluCache<T>&);                          \
  template LayerIO<T, ShuntingCache<T>> shunting_forward<T>(const Tensor<T>&, const ShuntingParams<T>&, \
                                                            ShuntingActivation);                       \
  template ShuntingGrads<T> shunting_backward<T>(const Tensor<T>&, const ShuntingCache<T>&,            \
                                                 const ShuntingParams<T>&, bool, bool);                \
  template struct BatchNormParams<T>;                                                                  \
  template LayerIO<T, BatchNormCache<T>> batchnorm_forward<T>(const Tensor<T>&, BatchNormParams<T>&,   \
                                                              Mode);                                   \
  template BatchNormGrads<T> batchnorm_backward<T>(const Tensor<T>&, const BatchNormCache<T>&);        \
  template LayerIO<T, DropoutCache<T>> dropout_forward<T>(const Tensor<T>&, double, Mode, Rng&);       \
  template Tensor<T> dropout_backward<T>(const Tensor<T>&, const DropoutCache<T>&);                    \
  template LayerIO<T, DenseCache<T>> dense_forward<T>(const Tensor<T>&, const Tensor<T>&,              \
                                                      const Tensor<T>&);                               \
  template DenseGrads<T> dense_backward<T>(const Tensor<T>&, const DenseCache<T>&, const Tensor<T>&,   \
                                           bool, bool);                                                \
  template Tensor<T> softmax<T>(const Tensor<T>&);

FACECHANNEL_INSTANTIATE_LAYERS(float)
FACECHANNEL_INSTANTIATE_LAYERS(double)

#undef FACECHANNEL_INSTANTIATE_LAYERS

}  // namespace facechannel
