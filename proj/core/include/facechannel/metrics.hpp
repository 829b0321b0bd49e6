#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "facechannel/tensor.hpp"

namespace facechannel {

/// Population (divide-by-n) moments of two paired sequences.
struct CccComponents {
  double mean_x = 0.0;
  double mean_y = 0.0;
  double var_x = 0.0;
  double var_y = 0.0;
  double covariance = 0.0;
  /// NaN when either variance is zero.
  double pearson = 0.0;
};

/// Throws DataError for unequal lengths or fewer than two samples.
CccComponents ccc_components(std::span<const double> x, std::span<const double> y);

/// Concordance correlation coefficient
///   2 rho sx sy / (sx^2 + sy^2 + (mx - my)^2)
/// with population variances; returns 0 when the denominator is below 1e-12.
double ccc(std::span<const double> x, std::span<const double> y);

/// Pearson correlation; 0 when either sequence is constant.
double pearson(std::span<const double> x, std::span<const double> y);

/// Index of the largest entry of row `row` in an [N,K] tensor (first on ties).
template <typename T>
std::size_t argmax_row(const Tensor<T>& t, std::size_t row);

struct EvalReport {
  std::size_t samples = 0;
  std::optional<double> accuracy;
  std::optional<double> ccc_arousal;
  std::optional<double> ccc_valence;
  /// Accuracy per true class, only for classes present in the data.
  std::map<std::string, double> per_class;

  /// {accuracy?, ccc_arousal?, ccc_valence?, per_class?}
  std::string to_json() const;
};

}  // namespace facechannel
