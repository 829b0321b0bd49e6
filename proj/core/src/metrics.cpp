#include "facechannel/metrics.hpp"

#include <cmath>
#include <limits>
#include <nlohmann/json.hpp>

#include "facechannel/error.hpp"

namespace facechannel {

CccComponents ccc_components(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DataError("ccc: sequences have different lengths");
  if (x.size() < 2) throw DataError("ccc: at least two samples are required");
  const double n = static_cast<double>(x.size());
  CccComponents c;
  for (std::size_t i = 0; i < x.size(); ++i) {
    c.mean_x += x[i];
    c.mean_y += y[i];
  }
  c.mean_x /= n;
  c.mean_y /= n;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - c.mean_x, dy = y[i] - c.mean_y;
    c.var_x += dx * dx;
    c.var_y += dy * dy;
    c.covariance += dx * dy;
  }
  c.var_x /= n;
  c.var_y /= n;
  c.covariance /= n;
  c.pearson = (c.var_x > 0.0 && c.var_y > 0.0) ? c.covariance / std::sqrt(c.var_x * c.var_y)
                                               : std::numeric_limits<double>::quiet_NaN();
  return c;
}

double ccc(std::span<const double> x, std::span<const double> y) {
  const auto c = ccc_components(x, y);
  const double mean_gap = c.mean_x - c.mean_y;
  const double denom = c.var_x + c.var_y + mean_gap * mean_gap;
  if (denom < 1e-12) return 0.0;
  // rho * sx * sy is the covariance.
  return 2.0 * c.covariance / denom;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  const auto c = ccc_components(x, y);
  return std::isnan(c.pearson) ? 0.0 : c.pearson;
}

template <typename T>
std::size_t argmax_row(const Tensor<T>& t, std::size_t row) {
  const std::size_t k = t.dim(1);
  std::size_t best = 0;
  for (std::size_t j = 1; j < k; ++j) {
    if (t[row * k + j] > t[row * k + best]) best = j;
  }
  return best;
}

template std::size_t argmax_row<float>(const Tensor<float>&, std::size_t);
template std::size_t argmax_row<double>(const Tensor<double>&, std::size_t);

std::string EvalReport::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  j["samples"] = samples;
  if (accuracy) j["accuracy"] = *accuracy;
  if (ccc_arousal) j["ccc_arousal"] = *ccc_arousal;
  if (ccc_valence) j["ccc_valence"] = *ccc_valence;
  if (!per_class.empty()) j["per_class"] = per_class;
  return j.dump(2);
}

}  // namespace facechannel
