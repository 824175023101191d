#pragma once

#include <cmath>

namespace ordsim {

/// Logistic CDF, evaluated without overflow for large |t|.
inline double sigmoid(double t) noexcept {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

/// log(sigmoid(t)) = -log1p(exp(-t)), stable on both tails.
inline double log_sigmoid(double t) noexcept {
  if (t >= 0.0) return -std::log1p(std::exp(-t));
  return t - std::log1p(std::exp(t));
}

/// Logistic density sigmoid(t) * sigmoid(-t).
inline double logistic_density(double t) noexcept {
  const double s = sigmoid(t);
  return s * sigmoid(-t);
}

inline double logit(double p) noexcept { return std::log(p) - std::log1p(-p); }

/// log(sigmoid(upper) - sigmoid(lower)) for upper > lower, computed as
/// log sigmoid(upper) + log sigmoid(-lower) + log(1 - exp(lower - upper)).
/// Returns -inf when upper <= lower.
inline double log_sigmoid_diff(double upper, double lower) noexcept {
  if (!(upper > lower)) return -INFINITY;
  return log_sigmoid(upper) + log_sigmoid(-lower) + std::log(-std::expm1(lower - upper));
}

}  // namespace ordsim
