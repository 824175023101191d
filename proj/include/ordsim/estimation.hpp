#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "ordsim/logistic.hpp"
#include "ordsim/model.hpp"

namespace ordsim {

/// Post-fit ordering check behind FitStatus::NonMonotoneFit.
enum class MonotoneCheck {
  Thresholds,    // fitted cutpoints must be strictly increasing
  TrainingData,  // additionally, every training row must have valid category probabilities
  Off,
};

inline std::string_view to_string(MonotoneCheck c) {
  switch (c) {
    case MonotoneCheck::Thresholds: return "thresholds";
    case MonotoneCheck::TrainingData: return "data";
    case MonotoneCheck::Off: return "off";
  }
  return "?";
}

inline MonotoneCheck parse_monotone_check(std::string_view s) {
  for (MonotoneCheck c : {MonotoneCheck::Thresholds, MonotoneCheck::TrainingData, MonotoneCheck::Off})
    if (s == to_string(c)) return c;
  throw std::invalid_argument("unknown monotone check '" + std::string(s) + "' (thresholds, data, off)");
}

struct FitOptions {
  int max_iterations = 100;
  double gradient_tolerance = 1e-6;
  double ll_rel_tolerance = 1e-10;
  int max_step_halvings = 30;
  MonotoneCheck monotone_check = MonotoneCheck::Thresholds;

  void validate() const {
    if (max_iterations <= 0 || !(gradient_tolerance > 0.0) || !(ll_rel_tolerance > 0.0) || max_step_halvings <= 0)
      throw std::invalid_argument("FitOptions: all settings must be positive");
  }
};

enum class FitStatus {
  Converged,
  MaxIterations,
  SingularInformation,
  UndefinedLikelihood,
  NonMonotoneFit,
  GenerationFailed,  // set by the simulation when no dataset could be drawn
};

inline std::string_view to_string(FitStatus s) {
  switch (s) {
    case FitStatus::Converged: return "Converged";
    case FitStatus::MaxIterations: return "MaxIterations";
    case FitStatus::SingularInformation: return "SingularInformation";
    case FitStatus::UndefinedLikelihood: return "UndefinedLikelihood";
    case FitStatus::NonMonotoneFit: return "NonMonotoneFit";
    case FitStatus::GenerationFailed: return "GenerationFailed";
  }
  return "?";
}

inline FitStatus parse_fit_status(std::string_view s) {
  for (FitStatus st : {FitStatus::Converged, FitStatus::MaxIterations, FitStatus::SingularInformation,
                       FitStatus::UndefinedLikelihood, FitStatus::NonMonotoneFit, FitStatus::GenerationFailed})
    if (s == to_string(st)) return st;
  throw std::invalid_argument("unknown fit status '" + std::string(s) + "'");
}

struct FitResult {
  std::variant<ModelParams, LinearParams> params;
  Eigen::VectorXd estimates;   // packed order; for the linear model (intercept, slopes)
  Eigen::VectorXd std_errors;  // aligned with `estimates`; empty unless converged
  double log_likelihood = -INFINITY;
  FitStatus status = FitStatus::MaxIterations;
  int iterations = 0;
  double max_abs_score = INFINITY;
  std::vector<double> ll_history;  // log-likelihood after each accepted step, starting value first

  bool converged() const { return status == FitStatus::Converged; }
};

namespace detail {

// Starting thresholds: empirical cumulative logits, forced strictly increasing.
inline Eigen::VectorXd initial_thresholds(const Dataset& data) {
  std::vector<double> counts(static_cast<std::size_t>(data.k), 0.0);
  for (int y : data.outcomes) counts[static_cast<std::size_t>(y - 1)] += 1.0;
  const double n = static_cast<double>(data.outcomes.size());
  Eigen::VectorXd theta(data.k - 1);
  double cum = 0.0;
  for (int r = 0; r < data.k - 1; ++r) {
    cum += counts[static_cast<std::size_t>(r)];
    const double q = std::clamp(cum / n, 1e-6, 1.0 - 1e-6);
    theta[r] = logit(q);
    if (r > 0 && theta[r] <= theta[r - 1]) theta[r] = theta[r - 1] + 1e-6;
  }
  return theta;
}

// Inverse of a symmetric positive definite matrix, or empty if not PD.
inline Eigen::MatrixXd spd_inverse(const Eigen::MatrixXd& m) {
  if (!m.allFinite()) return {};
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) return {};
  Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(m.rows(), m.cols()));
  if (!inv.allFinite()) return {};
  return inv;
}

}  // namespace detail

/// Maximum likelihood fit of a cumulative logit model by damped Newton.
///
/// Each iteration solves I(v) d = U(v) for the observed information I and
/// score U, then halves the step while the log-likelihood would decrease or
/// become undefined. When the information is not positive definite, or no
/// halved step is acceptable, a ridge is added to I and the search repeated.
/// The fit stops when max|U| < gradient_tolerance, or when a full Newton step
/// changes the log-likelihood by less than ll_rel_tolerance (relative).
inline FitResult fit_ordinal(ModelKind kind, const Dataset& data, const FitOptions& options = {}) {
  options.validate();
  data.validate();
  const ParamLayout L{kind, data.k, static_cast<int>(data.p())};
  const int P = L.size();

  Eigen::VectorXd v = Eigen::VectorXd::Zero(P);
  v.head(L.k - 1) = detail::initial_thresholds(data);

  FitResult result;
  LikelihoodEval cur = evaluate(L, v, data, Derivatives::Hessian);
  if (!cur.defined) {
    result.status = FitStatus::UndefinedLikelihood;
    result.params = unpack(L, v);
    result.estimates = v;
    return result;
  }
  result.ll_history.push_back(cur.value);

  bool converged = false;
  FitStatus failure = FitStatus::MaxIterations;
  int iter = 0;
  for (; iter < options.max_iterations; ++iter) {
    if (cur.score.lpNorm<Eigen::Infinity>() < options.gradient_tolerance) {
      converged = true;
      break;
    }
    const Eigen::MatrixXd info = -cur.hessian;
    const double diag_scale = std::max(1.0, info.diagonal().cwiseAbs().maxCoeff());
    const double stall = 2.0 * options.ll_rel_tolerance * std::max(1.0, std::abs(cur.value));

    bool accepted = false, full_step = false, any_defined = false;
    double decrement = INFINITY;
    Eigen::VectorXd cand;
    double ridge = 0.0;
    for (int attempt = 0; attempt < 10 && !accepted; ++attempt) {
      Eigen::MatrixXd m = info;
      m.diagonal().array() += ridge;
      Eigen::LLT<Eigen::MatrixXd> llt(m);
      if (llt.info() != Eigen::Success) {
        ridge = ridge == 0.0 ? 1e-6 * diag_scale : ridge * 100.0;
        continue;
      }
      const Eigen::VectorXd dir = llt.solve(cur.score);
      if (!dir.allFinite()) {
        ridge = ridge == 0.0 ? 1e-6 * diag_scale : ridge * 100.0;
        continue;
      }
      if (ridge == 0.0) decrement = cur.score.dot(dir);
      const bool negligible = ridge == 0.0 && decrement < stall;
      double t = 1.0;
      for (int h = 0; h <= options.max_step_halvings; ++h, t *= 0.5) {
        cand = v + t * dir;
        const LikelihoodEval e = evaluate(L, cand, data);
        if (e.defined) any_defined = true;
        if (e.defined && e.value >= cur.value) {
          accepted = true;
          full_step = h == 0 && ridge == 0.0;
          break;
        }
        if (negligible) break;
      }
      if (!accepted && negligible) break;
      if (!accepted) ridge = ridge == 0.0 ? 1e-4 * diag_scale : ridge * 100.0;
    }

    if (!accepted) {
      // Stalled at numerical precision: the predicted gain is below tolerance.
      if (decrement < stall) {
        converged = true;
      } else {
        failure = any_defined ? FitStatus::MaxIterations : FitStatus::UndefinedLikelihood;
      }
      break;
    }

    const double previous = cur.value;
    v = cand;
    cur = evaluate(L, v, data, Derivatives::Hessian);
    result.ll_history.push_back(cur.value);
    if (full_step && std::abs(cur.value - previous) < options.ll_rel_tolerance * std::max(1e-300, std::abs(previous))) {
      ++iter;
      converged = true;
      break;
    }
  }

  result.iterations = iter;
  result.params = unpack(L, v);
  result.estimates = v;
  result.log_likelihood = cur.value;
  result.max_abs_score = cur.score.lpNorm<Eigen::Infinity>();
  if (!converged) {
    result.status = failure;
    return result;
  }

  const Eigen::MatrixXd cov = detail::spd_inverse(-cur.hessian);
  if (cov.size() == 0 || (cov.diagonal().array() <= 0.0).any()) {
    result.status = FitStatus::SingularInformation;
    return result;
  }
  if (options.monotone_check != MonotoneCheck::Off) {
    bool ordered = true;
    for (int r = 1; r < L.k - 1; ++r) ordered = ordered && v[r] > v[r - 1];
    for (Eigen::Index i = 0; ordered && options.monotone_check == MonotoneCheck::TrainingData && i < data.n(); ++i)
      ordered = category_probs(L, v, data.covariates.row(i).data()).valid;
    if (!ordered) {
      result.status = FitStatus::NonMonotoneFit;
      return result;
    }
  }
  result.status = FitStatus::Converged;
  result.std_errors = cov.diagonal().array().sqrt();
  return result;
}

/// Ordinary least squares on the category index (1..k) with an intercept.
/// Standard errors from sigma2 (X'X)^{-1}, sigma2 = RSS / (n - p - 1).
inline FitResult fit_linear(const Dataset& data) {
  data.validate();
  const Eigen::Index n = data.n(), p = data.p();
  if (n <= p + 1) throw std::invalid_argument("fit_linear: need n > p + 1 observations");

  Eigen::MatrixXd X(n, p + 1);
  X.col(0).setOnes();
  X.rightCols(p) = data.covariates;
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) y[i] = data.outcomes[static_cast<std::size_t>(i)];

  FitResult result;
  result.iterations = 1;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  if (qr.rank() < p + 1) {
    result.status = FitStatus::SingularInformation;
    result.params = LinearParams{};
    return result;
  }
  const Eigen::VectorXd coef = qr.solve(y);
  const double rss = (y - X * coef).squaredNorm();
  const double sigma2 = rss / static_cast<double>(n - p - 1);
  const Eigen::MatrixXd xtx_inv = detail::spd_inverse(X.transpose() * X);
  if (xtx_inv.size() == 0) {
    result.status = FitStatus::SingularInformation;
    result.params = LinearParams{};
    return result;
  }

  LinearParams lp;
  lp.intercept = coef[0];
  lp.slopes = coef.tail(p);
  lp.sigma2 = sigma2;
  result.params = lp;
  result.estimates = coef;
  result.max_abs_score = 0.0;
  const double ml_var = rss / static_cast<double>(n);
  if (!(sigma2 > 0.0)) {
    // Perfect fit: coefficients are exact but no standard errors exist.
    result.log_likelihood = INFINITY;
    result.status = FitStatus::SingularInformation;
    return result;
  }
  result.std_errors = (sigma2 * xtx_inv.diagonal()).array().sqrt();
  result.log_likelihood = -0.5 * static_cast<double>(n) * (std::log(2.0 * std::numbers::pi * ml_var) + 1.0);
  result.status = FitStatus::Converged;
  return result;
}

}  // namespace ordsim
