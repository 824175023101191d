#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ordsim/model.hpp"

namespace ordsim {

enum class ThetaSetting { Uniform, Skewed, Unstructured };

inline constexpr ThetaSetting kAllThetaSettings[] = {ThetaSetting::Uniform, ThetaSetting::Skewed,
                                                     ThetaSetting::Unstructured};

inline std::string_view to_string(ThetaSetting s) {
  switch (s) {
    case ThetaSetting::Uniform: return "Uniform";
    case ThetaSetting::Skewed: return "Skewed";
    case ThetaSetting::Unstructured: return "Unstructured";
  }
  return "?";
}

inline ThetaSetting parse_theta_setting(std::string_view s) {
  for (ThetaSetting t : kAllThetaSettings)
    if (s == to_string(t)) return t;
  throw std::invalid_argument("unknown theta setting '" + std::string(s) + "'");
}

/// One cell of the simulation grid.
struct ScenarioSpec {
  int id = 0;
  ModelKind dgp = ModelKind::PO;
  int n = 250;
  int p = 5;
  int informative = 0;  // m: the first m covariates carry the effects
  int k = 3;
  double beta = 0.0;    // location effect, or u for CSO
  std::optional<double> gamma;  // dispersion effect, LSH/LSC only
  ThetaSetting theta = ThetaSetting::Uniform;
  std::uint64_t master_seed = 20240001;

  double gamma_or_zero() const { return gamma.value_or(0.0); }

  void validate() const {
    std::vector<std::string> bad;
    if (n <= 0) bad.emplace_back("n");
    if (p < 1) bad.emplace_back("p");
    if (informative < 0 || informative > p) bad.emplace_back("informative");
    if (k < 3) bad.emplace_back("k");
    if (!std::isfinite(beta)) bad.emplace_back("beta");
    if (dgp == ModelKind::CSO && k != 5 && k != 7) bad.emplace_back("k (CSO data needs k in {5,7})");
    if (has_dispersion(dgp) != gamma.has_value()) bad.emplace_back("gamma (present iff dgp is LSH or LSC)");
    if (gamma && !std::isfinite(*gamma)) bad.emplace_back("gamma");
    const bool all_zero = beta == 0.0 && gamma_or_zero() == 0.0;
    if (informative == 0 && !all_zero) bad.emplace_back("informative (m=0 requires all effects 0)");
    if (!bad.empty()) {
      std::string msg = "invalid scenario " + std::to_string(id) + ": ";
      for (std::size_t i = 0; i < bad.size(); ++i) msg += (i ? ", " : "") + bad[i];
      throw std::invalid_argument(msg);
    }
  }
};

/// Factor levels of the grid.
struct GridConfig {
  std::vector<ModelKind> dgps{ModelKind::PO, ModelKind::CSO, ModelKind::LSH, ModelKind::LSC};
  std::vector<int> n_levels{250, 500, 1000};
  std::vector<int> p_levels{5, 35};
  std::vector<int> k_levels{3, 5, 7};
  std::vector<ThetaSetting> theta_settings{ThetaSetting::Uniform, ThetaSetting::Skewed, ThetaSetting::Unstructured};
  std::vector<int> informative_levels{1, 4};  // m=0 is added once for the all-zero effect
  std::vector<double> effect_grid{0.0, 0.1, 0.2, 0.5, 1.0, 2.0};
  std::vector<double> pairing_anchors{0.0, 1.0};  // beta x {0,1} and gamma x {0,1}
  std::uint64_t master_seed = 20240001;

  void validate() const {
    std::vector<std::string> bad;
    if (dgps.empty()) bad.emplace_back("dgps");
    if (n_levels.empty()) bad.emplace_back("n_levels");
    for (int n : n_levels)
      if (n <= 0) bad.emplace_back("n_levels");
    if (p_levels.empty()) bad.emplace_back("p_levels");
    if (k_levels.empty()) bad.emplace_back("k_levels");
    for (int k : k_levels)
      if (k != 3 && k != 5 && k != 7) bad.emplace_back("k_levels (supported: 3, 5, 7)");
    if (theta_settings.empty()) bad.emplace_back("theta_settings");
    if (effect_grid.empty()) bad.emplace_back("effect_grid");
    for (double e : effect_grid)
      if (!std::isfinite(e) || e < 0.0) bad.emplace_back("effect_grid (finite, non-negative)");
    for (int m : informative_levels)
      if (m < 1) bad.emplace_back("informative_levels (m >= 1; m = 0 is implied by zero effects)");
    for (int p : p_levels) {
      if (p < 1) bad.emplace_back("p_levels");
      for (int m : informative_levels)
        if (m > p) bad.emplace_back("informative_levels (m > p)");
    }
    if (!bad.empty()) {
      std::string msg = "invalid grid configuration: ";
      for (std::size_t i = 0; i < bad.size(); ++i) msg += (i ? ", " : "") + bad[i];
      throw std::invalid_argument(msg);
    }
  }
};

/// (beta, gamma) pairs for the dispersion DGPs: every grid value of one effect
/// combined with each anchor value of the other, duplicates removed, in
/// (beta, gamma) lexicographic order.
inline std::vector<std::pair<double, double>> dispersion_pairs(const GridConfig& cfg) {
  std::vector<std::pair<double, double>> pairs;
  for (double b : cfg.effect_grid)
    for (double g : cfg.pairing_anchors) pairs.emplace_back(b, g);
  for (double g : cfg.effect_grid)
    for (double b : cfg.pairing_anchors) pairs.emplace_back(b, g);
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
  return pairs;
}

/// Full Cartesian grid. Loop order (and therefore scenario_id) is
/// dgp, k, theta setting, p, n, effect(s), informative count.
/// Scenarios with all effects zero appear once with m = 0.
inline std::vector<ScenarioSpec> enumerate_grid(const GridConfig& cfg) {
  cfg.validate();
  std::vector<ScenarioSpec> out;
  auto add = [&](ScenarioSpec s) {
    s.id = static_cast<int>(out.size());
    s.master_seed = cfg.master_seed;
    s.validate();
    out.push_back(s);
  };
  for (ModelKind dgp : cfg.dgps) {
    std::vector<std::pair<double, double>> effects;
    if (has_dispersion(dgp)) {
      effects = dispersion_pairs(cfg);
    } else {
      for (double b : cfg.effect_grid) effects.emplace_back(b, 0.0);
      std::sort(effects.begin(), effects.end());
      effects.erase(std::unique(effects.begin(), effects.end()), effects.end());
    }
    for (int k : cfg.k_levels) {
      if (dgp == ModelKind::CSO && k == 3) continue;
      for (ThetaSetting theta : cfg.theta_settings)
        for (int p : cfg.p_levels)
          for (int n : cfg.n_levels)
            for (const auto& [b, g] : effects) {
              ScenarioSpec s;
              s.dgp = dgp;
              s.k = k;
              s.theta = theta;
              s.p = p;
              s.n = n;
              s.beta = b;
              if (has_dispersion(dgp)) s.gamma = g;
              if (b == 0.0 && g == 0.0) {
                s.informative = 0;
                add(s);
              } else {
                for (int m : cfg.informative_levels) {
                  s.informative = m;
                  add(s);
                }
              }
            }
    }
  }
  return out;
}

/// Published size of the full simulation grid.
inline constexpr int kPublishedGridCount = 4032;

inline std::map<std::string, int> grid_breakdown(const std::vector<ScenarioSpec>& grid) {
  std::map<std::string, int> counts;
  for (const ScenarioSpec& s : grid) ++counts[std::string(to_string(s.dgp))];
  return counts;
}

}  // namespace ordsim
