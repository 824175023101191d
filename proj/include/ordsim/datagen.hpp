#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ordsim/logistic.hpp"
#include "ordsim/model.hpp"
#include "ordsim/rng.hpp"
#include "ordsim/scenario.hpp"

namespace ordsim {

struct DatagenConfig {
  // Skewed setting for k in {3,5}: p_r = floor + (1 - k*floor) * growth^r / sum_j growth^j.
  // With these defaults the k = 7 recipe lands within 0.005 of the published cutpoints.
  double skewed_floor = 0.06;
  double skewed_growth = std::numbers::e;
  // Lowest and middle category weight relative to the others.
  double unstructured_factor = 2.2;
  double covariate_sd = 0.5;
  int min_category_count = 5;
  int max_observation_attempts = 10000;
  int max_dataset_redraws = 10000;

  void validate() const {
    std::vector<std::string> bad;
    if (!(skewed_floor >= 0.0 && skewed_floor * 7.0 < 1.0)) bad.emplace_back("skewed_floor");
    if (!(skewed_growth > 0.0)) bad.emplace_back("skewed_growth");
    if (!(unstructured_factor > 0.0)) bad.emplace_back("unstructured_factor");
    if (!(covariate_sd > 0.0)) bad.emplace_back("covariate_sd");
    if (min_category_count < 0) bad.emplace_back("min_category_count");
    if (max_observation_attempts < 1) bad.emplace_back("max_observation_attempts");
    if (max_dataset_redraws < 0) bad.emplace_back("max_dataset_redraws");
    if (!bad.empty()) {
      std::string msg = "invalid data generation settings: ";
      for (std::size_t i = 0; i < bad.size(); ++i) msg += (i ? ", " : "") + bad[i];
      throw std::invalid_argument(msg);
    }
  }
};

/// Published skewed cutpoints for seven categories.
inline const std::vector<double>& published_skewed_k7() {
  static const std::vector<double> values{-2.74, -1.96, -1.45, -1.00, -0.50, 0.29};
  return values;
}

namespace detail {
inline void check_supported_k(int k) {
  if (k != 3 && k != 5 && k != 7) throw std::invalid_argument("threshold settings support k in {3,5,7}, got " + std::to_string(k));
}

inline std::vector<double> skewed_recipe(int k, const DatagenConfig& cfg) {
  std::vector<double> w(static_cast<std::size_t>(k));
  double total = 0.0;
  for (int r = 0; r < k; ++r) total += (w[static_cast<std::size_t>(r)] = std::pow(cfg.skewed_growth, r + 1));
  std::vector<double> probs(static_cast<std::size_t>(k));
  for (int r = 0; r < k; ++r)
    probs[static_cast<std::size_t>(r)] = cfg.skewed_floor + (1.0 - k * cfg.skewed_floor) * w[static_cast<std::size_t>(r)] / total;
  return probs;
}

inline std::vector<double> thresholds_from_probs(const std::vector<double>& probs) {
  std::vector<double> theta;
  double cum = 0.0;
  for (std::size_t r = 0; r + 1 < probs.size(); ++r) {
    cum += probs[r];
    theta.push_back(logit(cum));
  }
  return theta;
}
}  // namespace detail

/// Skewed distribution produced by the growth recipe, for any supported k.
inline std::vector<double> skewed_recipe_probs(int k, const DatagenConfig& cfg = {}) {
  detail::check_supported_k(k);
  return detail::skewed_recipe(k, cfg);
}

/// Target marginal distribution of Y (all effects zero) for a setting.
inline std::vector<double> target_distribution(int k, ThetaSetting setting, const DatagenConfig& cfg = {}) {
  detail::check_supported_k(k);
  std::vector<double> probs(static_cast<std::size_t>(k));
  switch (setting) {
    case ThetaSetting::Uniform:
      std::fill(probs.begin(), probs.end(), 1.0 / k);
      break;
    case ThetaSetting::Skewed:
      if (k == 7) {
        double prev = 0.0;
        for (int r = 0; r < 6; ++r) {
          const double c = sigmoid(published_skewed_k7()[static_cast<std::size_t>(r)]);
          probs[static_cast<std::size_t>(r)] = c - prev;
          prev = c;
        }
        probs[6] = 1.0 - prev;
      } else {
        probs = detail::skewed_recipe(k, cfg);
      }
      break;
    case ThetaSetting::Unstructured: {
      const int middle = k / 2;  // 0-based index of the middle category
      double total = 0.0;
      for (int r = 0; r < k; ++r)
        total += (probs[static_cast<std::size_t>(r)] = (r == 0 || r == middle) ? cfg.unstructured_factor : 1.0);
      for (double& q : probs) q /= total;
      break;
    }
  }
  return probs;
}

/// Cutpoints theta_r = logit(P(Y <= r)) of the target distribution. Skewed
/// k = 7 returns the published vector verbatim.
inline Thresholds thresholds_for(int k, ThetaSetting setting, const DatagenConfig& cfg = {}) {
  detail::check_supported_k(k);
  if (setting == ThetaSetting::Skewed && k == 7) return Thresholds(published_skewed_k7());
  return Thresholds(detail::thresholds_from_probs(target_distribution(k, setting, cfg)));
}

/// Signed per-category pattern of the CSO effect u (multiplied by u).
inline std::vector<double> cso_pattern(int k) {
  if (k == 5) return {-1.0, 1.0, 1.0, -1.0};
  if (k == 7) return {-1.0, 0.0, 1.0, 1.0, 0.0, -1.0};
  throw std::invalid_argument("CSO data generation supports k in {5,7}, got " + std::to_string(k));
}

struct TrueParams {
  ModelParams params;
  std::vector<int> informative_set;  // 0-based covariate indices with non-zero effects

  bool is_informative(int j) const { return j < static_cast<int>(informative_set.size()); }
};

inline TrueParams true_params_for(const ScenarioSpec& s, const DatagenConfig& cfg = {}) {
  s.validate();
  if (s.dgp == ModelKind::CSO && s.k == 3) throw std::invalid_argument("no CSO data generation for k = 3");
  TrueParams t;
  t.params = ModelParams::zero(s.dgp, s.k, s.p);
  t.params.thresholds = thresholds_for(s.k, s.theta, cfg).as_vector();
  for (int j = 0; j < s.informative; ++j) t.informative_set.push_back(j);
  for (int j : t.informative_set) {
    if (s.dgp == ModelKind::CSO) {
      const std::vector<double> pattern = cso_pattern(s.k);
      for (int r = 0; r < s.k - 1; ++r) t.params.category_location(j, r) = pattern[static_cast<std::size_t>(r)] * s.beta;
    } else {
      t.params.location[j] = s.beta;
      if (has_dispersion(s.dgp)) t.params.dispersion[j] = s.gamma_or_zero();
    }
  }
  return t;
}

/// n x p matrix of independent N(0, sd^2) draws, filled row by row.
inline RowMatrix draw_covariates(Stream& rng, Eigen::Index n, Eigen::Index p, double sd = 0.5) {
  if (n <= 0 || p <= 0) throw std::invalid_argument("draw_covariates: n and p must be positive");
  RowMatrix x(n, p);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < p; ++j) x(i, j) = rng.normal(0.0, sd);
  return x;
}

struct OutcomeDraw {
  int category = 0;  // 0 when the attempt cap was hit
  int attempts = 0;
};

/// Draws Y for covariate vector `x` (length p). While the category
/// probabilities at x are invalid, x is replaced by a fresh covariate draw.
/// The category is the smallest r with u <= P(Y <= r | x) for one uniform u.
inline OutcomeDraw draw_outcome(Stream& rng, const ParamLayout& layout, const Eigen::VectorXd& packed, double* x,
                                int max_attempts = 10000, double covariate_sd = 0.5) {
  OutcomeDraw out;
  while (true) {
    ++out.attempts;
    const CategoryProbs cp = category_probs(layout, packed, x);
    if (cp.valid) {
      const double u = rng.uniform();
      double cum = 0.0;
      out.category = layout.k;
      for (int r = 0; r < layout.k - 1; ++r) {
        cum += cp.probs[r];
        if (u < cum) {
          out.category = r + 1;
          break;
        }
      }
      return out;
    }
    if (out.attempts >= max_attempts) return out;
    for (int j = 0; j < layout.p; ++j) x[j] = rng.normal(0.0, covariate_sd);
  }
}

inline OutcomeDraw draw_outcome(Stream& rng, const TrueParams& truth, Eigen::VectorXd& x, int max_attempts = 10000,
                                double covariate_sd = 0.5) {
  const ParamLayout L = ParamLayout::of(truth.params);
  if (x.size() != L.p) throw std::invalid_argument("draw_outcome: covariate vector length does not match model");
  const Eigen::VectorXd packed = pack(truth.params);
  return draw_outcome(rng, L, packed, x.data(), max_attempts, covariate_sd);
}

struct GenDiagnostics {
  long long observation_redraws = 0;  // covariate vectors discarded for invalid probabilities
  long long dataset_redraws = 0;      // whole datasets discarded for sparse categories
  bool aborted = false;
};

struct GeneratedDataset {
  Dataset data;
  GenDiagnostics diagnostics;
};

/// Draws one dataset for the scenario. A dataset in which some category has
/// fewer than `min_category_count` observations is discarded and redrawn.
inline GeneratedDataset generate_dataset(Stream& rng, const ScenarioSpec& s, const DatagenConfig& cfg = {}) {
  cfg.validate();
  const TrueParams truth = true_params_for(s, cfg);
  const ParamLayout L = ParamLayout::of(truth.params);
  const Eigen::VectorXd packed = pack(truth.params);

  GeneratedDataset out;
  out.data.k = s.k;
  out.data.outcomes.assign(static_cast<std::size_t>(s.n), 0);
  out.data.covariates.resize(s.n, s.p);
  std::vector<int> counts(static_cast<std::size_t>(s.k));
  while (true) {
    std::fill(counts.begin(), counts.end(), 0);
    for (int i = 0; i < s.n; ++i) {
      double* x = out.data.covariates.row(i).data();
      for (int j = 0; j < s.p; ++j) x[j] = rng.normal(0.0, cfg.covariate_sd);
      const OutcomeDraw d = draw_outcome(rng, L, packed, x, cfg.max_observation_attempts, cfg.covariate_sd);
      out.diagnostics.observation_redraws += d.attempts - 1;
      if (d.category == 0) {
        out.diagnostics.aborted = true;
        return out;
      }
      out.data.outcomes[static_cast<std::size_t>(i)] = d.category;
      ++counts[static_cast<std::size_t>(d.category - 1)];
    }
    if (*std::min_element(counts.begin(), counts.end()) >= cfg.min_category_count) return out;
    if (out.diagnostics.dataset_redraws >= cfg.max_dataset_redraws) {
      out.diagnostics.aborted = true;
      return out;
    }
    ++out.diagnostics.dataset_redraws;
  }
}

}  // namespace ordsim
