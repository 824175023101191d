#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "ordsim/datagen.hpp"
#include "ordsim/estimation.hpp"
#include "ordsim/model.hpp"
#include "ordsim/rng.hpp"
#include "ordsim/scenario.hpp"
#include "ordsim/wald.hpp"

namespace ordsim {

/// Models fitted in every replication: the linear model plus the four cumulative models.
enum class FittedModel { LM, PO, CSO, LSH, LSC };

inline constexpr FittedModel kAllFittedModels[] = {FittedModel::LM, FittedModel::PO, FittedModel::CSO,
                                                   FittedModel::LSH, FittedModel::LSC};

inline std::string_view to_string(FittedModel m) {
  switch (m) {
    case FittedModel::LM: return "LM";
    case FittedModel::PO: return "PO";
    case FittedModel::CSO: return "CSO";
    case FittedModel::LSH: return "LSH";
    case FittedModel::LSC: return "LSC";
  }
  return "?";
}

inline FittedModel parse_fitted_model(std::string_view s) {
  for (FittedModel m : kAllFittedModels)
    if (s == to_string(m)) return m;
  throw std::invalid_argument("unknown model '" + std::string(s) + "' (expected LM, PO, CSO, LSH or LSC)");
}

inline ModelKind ordinal_kind(FittedModel m) {
  switch (m) {
    case FittedModel::PO: return ModelKind::PO;
    case FittedModel::CSO: return ModelKind::CSO;
    case FittedModel::LSH: return ModelKind::LSH;
    case FittedModel::LSC: return ModelKind::LSC;
    case FittedModel::LM: break;
  }
  throw std::invalid_argument("the linear model has no ordinal kind");
}

enum class Block { Location, Dispersion, Category };

inline std::string_view to_string(Block b) {
  switch (b) {
    case Block::Location: return "location";
    case Block::Dispersion: return "dispersion";
    case Block::Category: return "category";
  }
  return "?";
}

inline Block parse_block(std::string_view s) {
  for (Block b : {Block::Location, Block::Dispersion, Block::Category})
    if (s == to_string(b)) return b;
  throw std::invalid_argument("unknown parameter block '" + std::string(s) + "'");
}

/// Identifies one tested parameter of one fitted model.
struct ParamKey {
  FittedModel model = FittedModel::PO;
  Block block = Block::Location;
  int covariate = 1;  // 1-based
  int category = 0;   // 1-based category r for CSO, 0 otherwise

  auto tie() const { return std::tie(model, block, covariate, category); }
  bool operator<(const ParamKey& o) const { return tie() < o.tie(); }
  bool operator==(const ParamKey& o) const { return tie() == o.tie(); }
};

struct ParamRecord {
  ParamKey key;
  bool informative = false;  // covariate carries an effect in the DGP
  double true_value = NAN;   // NaN when the fitted model does not nest the DGP
  FitStatus status = FitStatus::MaxIterations;
  // Present only when status == Converged.
  std::optional<TestResult> test;
};

struct ModelOutcome {
  FittedModel model = FittedModel::PO;
  FitStatus status = FitStatus::MaxIterations;
  int iterations = 0;
};

struct ReplicationRecord {
  int scenario_id = 0;
  int rep_index = 0;
  GenDiagnostics generation;
  std::vector<ModelOutcome> fits;
  std::vector<ParamRecord> params;
};

struct SimOptions {
  std::vector<FittedModel> models{std::begin(kAllFittedModels), std::end(kAllFittedModels)};
  double alpha = 0.05;
  FitOptions fit;
  DatagenConfig datagen;
};

/// Tested parameters of a fitted model, in packed order.
inline std::vector<ParamKey> tested_parameters(FittedModel model, int p, int k) {
  std::vector<ParamKey> keys;
  if (model == FittedModel::CSO) {
    for (int r = 1; r <= k - 1; ++r)
      for (int j = 1; j <= p; ++j) keys.push_back({model, Block::Category, j, r});
    return keys;
  }
  for (int j = 1; j <= p; ++j) keys.push_back({model, Block::Location, j, 0});
  if (model == FittedModel::LSH || model == FittedModel::LSC)
    for (int j = 1; j <= p; ++j) keys.push_back({model, Block::Dispersion, j, 0});
  return keys;
}

/// True value of a tested parameter, or NaN when it is not identified because
/// the fitted model does not nest the data-generating model. Covariates without
/// effect are independent of everything else, so their coefficient is zero in
/// every fitted model.
inline double true_value(const ScenarioSpec& s, const TrueParams& truth, const ParamKey& key) {
  const int j = key.covariate - 1;
  if (!truth.is_informative(j)) return 0.0;
  if (key.model == FittedModel::LM) return NAN;

  ModelKind effective = s.dgp;
  if (has_dispersion(s.dgp) && s.gamma_or_zero() == 0.0) effective = ModelKind::PO;
  if (s.dgp == ModelKind::CSO && s.beta == 0.0) effective = ModelKind::PO;

  const ModelParams& tp = truth.params;
  const double beta = s.dgp == ModelKind::CSO ? 0.0 : tp.location[j];
  const double gamma = has_dispersion(s.dgp) ? tp.dispersion[j] : 0.0;
  switch (effective) {
    case ModelKind::PO:
      if (key.block == Block::Dispersion) return 0.0;
      return beta;
    case ModelKind::LSH:
      if (key.model == FittedModel::LSH) return key.block == Block::Location ? beta : gamma;
      if (key.model == FittedModel::CSO) return beta + (key.category - 0.5 * s.k) * gamma;
      return NAN;
    case ModelKind::LSC:
      if (key.model == FittedModel::LSC) return key.block == Block::Location ? beta : gamma;
      return NAN;
    case ModelKind::CSO:
      if (key.model == FittedModel::CSO) return tp.category_location(j, key.category - 1);
      return NAN;
  }
  return NAN;
}

/// Draws one dataset for (scenario, rep_index), fits every requested model and
/// runs a two-sided Wald test for each location and dispersion parameter.
/// Ordinal models use the normal reference, the linear model Student t with
/// n - p - 1 degrees of freedom.
inline ReplicationRecord run_replication(const ScenarioSpec& s, int rep_index, const SimOptions& opt = {}) {
  s.validate();
  ReplicationRecord rec;
  rec.scenario_id = s.id;
  rec.rep_index = rep_index;

  Stream rng(s.master_seed, static_cast<std::uint64_t>(s.id), static_cast<std::uint64_t>(rep_index));
  const GeneratedDataset gen = generate_dataset(rng, s, opt.datagen);
  rec.generation = gen.diagnostics;
  const TrueParams truth = true_params_for(s, opt.datagen);

  for (FittedModel model : opt.models) {
    ModelOutcome outcome{model, FitStatus::GenerationFailed, 0};
    std::optional<FitResult> fit;
    if (!gen.diagnostics.aborted) {
      fit = model == FittedModel::LM ? fit_linear(gen.data) : fit_ordinal(ordinal_kind(model), gen.data, opt.fit);
      outcome.status = fit->status;
      outcome.iterations = fit->iterations;
    }
    rec.fits.push_back(outcome);

    const ParamLayout layout{model == FittedModel::LM ? ModelKind::PO : ordinal_kind(model), s.k, s.p};
    for (const ParamKey& key : tested_parameters(model, s.p, s.k)) {
      ParamRecord pr;
      pr.key = key;
      pr.informative = truth.is_informative(key.covariate - 1);
      pr.true_value = true_value(s, truth, key);
      pr.status = outcome.status;
      if (outcome.status == FitStatus::Converged) {
        int index = 0;
        Reference ref = Reference::normal();
        if (model == FittedModel::LM) {
          index = key.covariate;  // after the intercept
          ref = Reference::student(static_cast<double>(s.n - s.p - 1));
        } else if (key.block == Block::Category) {
          index = layout.category(key.covariate - 1, key.category - 1);
        } else if (key.block == Block::Location) {
          index = layout.location(key.covariate - 1);
        } else {
          index = layout.dispersion(key.covariate - 1);
        }
        pr.test = wald_test(fit->estimates[index], fit->std_errors[index], opt.alpha, ref);
      }
      rec.params.push_back(pr);
    }
  }
  return rec;
}

// ---------------------------------------------------------------------------
// Aggregation

struct AggregateRow {
  int scenario_id = 0;
  ParamKey key;
  bool informative = false;
  double true_value = NAN;
  int reps = 0;
  int n_converged = 0;
  double convergence_rate = 0.0;
  double mean_estimate = NAN;
  double bias = NAN;            // over converged reps; NaN when the true value is unknown
  double rejection_rate = NAN;  // alpha-error when true_value == 0, power otherwise
  bool reported = false;        // n_converged >= ceil(0.05 * reps)

  std::string_view metric() const { return true_value == 0.0 ? "alpha" : "power"; }
};

struct ConvergenceRow {
  int scenario_id = 0;
  FittedModel model = FittedModel::PO;
  int reps = 0;
  std::map<FitStatus, int> status_counts;
  long long observation_redraws = 0;
  long long dataset_redraws = 0;
  long long dataset_redraws_max = 0;
  int aborted = 0;

  int count(FitStatus s) const {
    const auto it = status_counts.find(s);
    return it == status_counts.end() ? 0 : it->second;
  }
  double convergence_rate() const { return reps ? static_cast<double>(count(FitStatus::Converged)) / reps : 0.0; }
};

inline int reporting_threshold(int reps) { return static_cast<int>(std::ceil(0.05 * reps - 1e-9)); }

/// Streaming accumulator. Feeding records in (scenario_id, rep_index) order
/// gives results that do not depend on the order records were produced in.
class Aggregator {
 public:
  void add(const ReplicationRecord& rec) {
    for (const ParamRecord& pr : rec.params) {
      Acc& a = params_[{rec.scenario_id, pr.key}];
      a.informative = pr.informative;
      a.true_value = pr.true_value;
      ++a.reps;
      if (pr.status == FitStatus::Converged && pr.test) {
        ++a.converged;
        a.sum_estimate += pr.test->estimate;
        if (!std::isnan(pr.true_value)) a.sum_bias += pr.test->estimate - pr.true_value;
        if (pr.test->rejected) ++a.rejections;
      }
    }
    for (const ModelOutcome& fo : rec.fits) {
      ConvergenceRow& c = conv_[{rec.scenario_id, fo.model}];
      c.scenario_id = rec.scenario_id;
      c.model = fo.model;
      ++c.reps;
      ++c.status_counts[fo.status];
      c.observation_redraws += rec.generation.observation_redraws;
      c.dataset_redraws += rec.generation.dataset_redraws;
      c.dataset_redraws_max = std::max(c.dataset_redraws_max, rec.generation.dataset_redraws);
      if (rec.generation.aborted) ++c.aborted;
    }
  }

  std::vector<AggregateRow> rows() const {
    std::vector<AggregateRow> out;
    out.reserve(params_.size());
    for (const auto& [key, a] : params_) {
      AggregateRow row;
      row.scenario_id = key.first;
      row.key = key.second;
      row.informative = a.informative;
      row.true_value = a.true_value;
      row.reps = a.reps;
      row.n_converged = a.converged;
      row.convergence_rate = a.reps ? static_cast<double>(a.converged) / a.reps : 0.0;
      if (a.converged > 0) {
        row.mean_estimate = a.sum_estimate / a.converged;
        if (!std::isnan(a.true_value)) row.bias = a.sum_bias / a.converged;
        row.rejection_rate = static_cast<double>(a.rejections) / a.converged;
      }
      row.reported = a.converged >= reporting_threshold(a.reps) && a.converged > 0;
      out.push_back(row);
    }
    return out;
  }

  std::vector<ConvergenceRow> convergence() const {
    std::vector<ConvergenceRow> out;
    for (const auto& [key, c] : conv_) out.push_back(c);
    return out;
  }

 private:
  struct Acc {
    bool informative = false;
    double true_value = NAN;
    int reps = 0;
    int converged = 0;
    int rejections = 0;
    double sum_estimate = 0.0;
    double sum_bias = 0.0;
  };
  std::map<std::pair<int, ParamKey>, Acc> params_;
  std::map<std::pair<int, FittedModel>, ConvergenceRow> conv_;
};

inline void sort_records(std::vector<ReplicationRecord>& records) {
  std::sort(records.begin(), records.end(), [](const ReplicationRecord& a, const ReplicationRecord& b) {
    return std::tie(a.scenario_id, a.rep_index) < std::tie(b.scenario_id, b.rep_index);
  });
}

/// Bias, rejection rate and convergence per (scenario, model, parameter).
inline std::vector<AggregateRow> aggregate(std::vector<ReplicationRecord> records) {
  sort_records(records);
  Aggregator agg;
  for (const ReplicationRecord& r : records) agg.add(r);
  return agg.rows();
}

struct BiasPair {
  int scenario_id = 0;
  double location_bias = NAN;
  double dispersion_bias = NAN;
};

/// Per-scenario mean bias of the location and dispersion blocks of `model`
/// over informative covariates with known truth; reported scenarios only.
inline std::vector<BiasPair> bias_pairs(const std::vector<AggregateRow>& rows, FittedModel model) {
  std::map<int, std::array<double, 4>> acc;  // loc sum, loc n, disp sum, disp n
  for (const AggregateRow& r : rows) {
    if (r.key.model != model || !r.informative || !r.reported || std::isnan(r.bias)) continue;
    auto& a = acc[r.scenario_id];
    if (r.key.block == Block::Location) {
      a[0] += r.bias;
      a[1] += 1;
    } else if (r.key.block == Block::Dispersion) {
      a[2] += r.bias;
      a[3] += 1;
    }
  }
  std::vector<BiasPair> out;
  for (const auto& [sid, a] : acc)
    if (a[1] > 0 && a[3] > 0) out.push_back({sid, a[0] / a[1], a[2] / a[3]});
  return out;
}

/// Pearson correlation of (location bias, dispersion bias) across settings.
/// Undefined (nullopt) with fewer than three settings or zero variance.
inline std::optional<double> correlation_of_biases(const std::vector<BiasPair>& pairs) {
  if (pairs.size() < 3) return std::nullopt;
  const double n = static_cast<double>(pairs.size());
  double mx = 0.0, my = 0.0;
  for (const BiasPair& p : pairs) {
    mx += p.location_bias;
    my += p.dispersion_bias;
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (const BiasPair& p : pairs) {
    const double dx = p.location_bias - mx, dy = p.dispersion_bias - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) return std::nullopt;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace ordsim
