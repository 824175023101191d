#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <boost/math/distributions/students_t.hpp>

namespace ordsim {

/// Standard normal upper tail P(Z > z).
inline double normal_upper_tail(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

/// Student t upper tail P(T > t) with `df` degrees of freedom.
inline double student_upper_tail(double t, double df) {
  if (!(df > 0.0)) throw std::invalid_argument("student_upper_tail: df must be positive");
  const boost::math::students_t dist(df);
  return boost::math::cdf(boost::math::complement(dist, t));
}

struct Reference {
  enum class Kind { Normal, Student } kind = Kind::Normal;
  double df = 0.0;

  static Reference normal() { return {}; }
  static Reference student(double df) { return {Kind::Student, df}; }
};

struct TestResult {
  double estimate = 0.0;
  double std_error = 1.0;
  double statistic = 0.0;
  double p_value = 1.0;
  bool rejected = false;
};

/// Two-sided Wald test of estimate = 0.
inline TestResult wald_test(double estimate, double std_error, double alpha = 0.05,
                            Reference reference = Reference::normal()) {
  if (!(std_error > 0.0) || !std::isfinite(std_error))
    throw std::invalid_argument("wald_test: standard error must be positive and finite");
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("wald_test: alpha must lie in (0, 1)");
  TestResult t;
  t.estimate = estimate;
  t.std_error = std_error;
  t.statistic = estimate / std_error;
  const double a = std::abs(t.statistic);
  const double tail = reference.kind == Reference::Kind::Normal ? normal_upper_tail(a) : student_upper_tail(a, reference.df);
  t.p_value = std::min(1.0, 2.0 * tail);
  t.rejected = t.p_value < alpha;
  return t;
}

}  // namespace ordsim
