#include <algorithm>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "ordsim/simulation.hpp"

using namespace ordsim;

namespace {

ScenarioSpec scenario(ModelKind dgp, int k, int n, int p, int m, double beta, std::optional<double> gamma = {}) {
  ScenarioSpec s;
  s.id = 17;
  s.dgp = dgp;
  s.k = k;
  s.n = n;
  s.p = p;
  s.informative = m;
  s.beta = beta;
  s.gamma = gamma;
  return s;
}

ReplicationRecord fake_record(int sid, int rep, FitStatus status, double estimate, bool rejected, double truth) {
  ReplicationRecord r;
  r.scenario_id = sid;
  r.rep_index = rep;
  r.fits.push_back({FittedModel::PO, status, 3});
  ParamRecord pr;
  pr.key = {FittedModel::PO, Block::Location, 1, 0};
  pr.informative = truth != 0.0;
  pr.true_value = truth;
  pr.status = status;
  if (status == FitStatus::Converged) pr.test = TestResult{estimate, 0.1, estimate / 0.1, rejected ? 0.01 : 0.5, rejected};
  r.params.push_back(pr);
  return r;
}

}  // namespace

TEST(Grid, DispersionPairs) {
  const auto pairs = dispersion_pairs(GridConfig{});
  EXPECT_EQ(pairs.size(), 20u);
  EXPECT_TRUE(std::is_sorted(pairs.begin(), pairs.end()));
}

TEST(Grid, ShapeAndIds) {
  const std::vector<ScenarioSpec> grid = enumerate_grid(GridConfig{});
  std::set<int> ids;
  for (const ScenarioSpec& s : grid) {
    ids.insert(s.id);
    if (s.dgp == ModelKind::CSO) EXPECT_NE(s.k, 3);
    if (s.informative == 0) {
      EXPECT_EQ(s.beta, 0.0);
      EXPECT_EQ(s.gamma_or_zero(), 0.0);
    } else {
      EXPECT_TRUE(s.beta != 0.0 || s.gamma_or_zero() != 0.0);
    }
  }
  EXPECT_EQ(ids.size(), grid.size());
  EXPECT_EQ(*ids.begin(), 0);
  EXPECT_EQ(*ids.rbegin(), static_cast<int>(grid.size()) - 1);

  const auto counts = grid_breakdown(grid);
  // 18 (n, p, theta) cells per k; PO: 11 scenarios per cell, LSH/LSC: 39, CSO: 11 for k in {5, 7}.
  EXPECT_EQ(counts.at("PO"), 3 * 18 * 11);
  EXPECT_EQ(counts.at("LSH"), 3 * 18 * 39);
  EXPECT_EQ(counts.at("LSC"), 3 * 18 * 39);
  EXPECT_EQ(counts.at("CSO"), 2 * 18 * 11);
  EXPECT_EQ(grid.size(), 5202u);

  // Stable across calls.
  const std::vector<ScenarioSpec> again = enumerate_grid(GridConfig{});
  for (std::size_t i = 0; i < grid.size(); i += 97) {
    EXPECT_EQ(grid[i].dgp, again[i].dgp);
    EXPECT_EQ(grid[i].beta, again[i].beta);
    EXPECT_EQ(grid[i].n, again[i].n);
  }
}

TEST(Grid, ValidationListsFields) {
  GridConfig cfg;
  cfg.k_levels = {4};
  cfg.n_levels = {};
  try {
    enumerate_grid(cfg);
    FAIL() << "expected a validation error";
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("k_levels"), std::string::npos);
    EXPECT_NE(msg.find("n_levels"), std::string::npos);
  }
}

TEST(Scenario, Invariants) {
  EXPECT_THROW(scenario(ModelKind::PO, 3, 250, 5, 1, 1.0, 1.0).validate(), std::invalid_argument);
  EXPECT_THROW(scenario(ModelKind::CSO, 3, 250, 5, 1, 1.0).validate(), std::invalid_argument);
  EXPECT_THROW(scenario(ModelKind::PO, 3, 250, 5, 0, 1.0).validate(), std::invalid_argument);
  EXPECT_NO_THROW(scenario(ModelKind::LSH, 3, 250, 5, 1, 0.0, 1.0).validate());
}

TEST(TestedParameters, Shapes) {
  EXPECT_EQ(tested_parameters(FittedModel::LM, 5, 3).size(), 5u);
  EXPECT_EQ(tested_parameters(FittedModel::PO, 5, 3).size(), 5u);
  EXPECT_EQ(tested_parameters(FittedModel::LSH, 5, 3).size(), 10u);
  EXPECT_EQ(tested_parameters(FittedModel::LSC, 35, 7).size(), 70u);
  const auto cso = tested_parameters(FittedModel::CSO, 2, 4);
  ASSERT_EQ(cso.size(), 6u);
  EXPECT_EQ(cso[0].category, 1);
  EXPECT_EQ(cso[1].covariate, 2);
  EXPECT_EQ(cso[2].category, 2);
}

TEST(Replication, Deterministic) {
  const ScenarioSpec s = scenario(ModelKind::LSH, 3, 250, 5, 1, 0.5, 1.0);
  const ReplicationRecord a = run_replication(s, 3), b = run_replication(s, 3);
  ASSERT_EQ(a.params.size(), b.params.size());
  for (std::size_t i = 0; i < a.params.size(); ++i) {
    EXPECT_EQ(a.params[i].status, b.params[i].status);
    ASSERT_EQ(a.params[i].test.has_value(), b.params[i].test.has_value());
    if (a.params[i].test) EXPECT_EQ(a.params[i].test->estimate, b.params[i].test->estimate);
  }
  const ReplicationRecord c = run_replication(s, 4);
  ASSERT_TRUE(a.params[0].test && c.params[0].test);
  EXPECT_NE(a.params[0].test->estimate, c.params[0].test->estimate);
}

TEST(Replication, NullScenarioHasZeroTruth) {
  const ReplicationRecord r = run_replication(scenario(ModelKind::PO, 3, 250, 5, 0, 0.0), 0);
  // LM 5 + PO 5 + CSO 10 + LSH 10 + LSC 10
  EXPECT_EQ(r.params.size(), 40u);
  EXPECT_EQ(r.fits.size(), 5u);
  for (const ParamRecord& p : r.params) {
    EXPECT_EQ(p.true_value, 0.0);
    EXPECT_FALSE(p.informative);
    EXPECT_EQ(p.test.has_value(), p.status == FitStatus::Converged);
  }
}

TEST(Replication, CsoZeroCategoriesAreNull) {
  const ScenarioSpec s = scenario(ModelKind::CSO, 7, 250, 5, 1, 1.0);
  const TrueParams truth = true_params_for(s);
  const std::vector<double> want{-1.0, 0.0, 1.0, 1.0, 0.0, -1.0};
  for (int r = 1; r <= 6; ++r)
    EXPECT_EQ(true_value(s, truth, {FittedModel::CSO, Block::Category, 1, r}), want[static_cast<std::size_t>(r - 1)]);
  EXPECT_TRUE(std::isnan(true_value(s, truth, {FittedModel::PO, Block::Location, 1, 0})));
  EXPECT_EQ(true_value(s, truth, {FittedModel::PO, Block::Location, 2, 0}), 0.0);
}

TEST(Replication, NestedTruths) {
  const ScenarioSpec po = scenario(ModelKind::PO, 5, 250, 5, 1, 0.5);
  const TrueParams tp = true_params_for(po);
  EXPECT_EQ(true_value(po, tp, {FittedModel::CSO, Block::Category, 1, 3}), 0.5);
  EXPECT_EQ(true_value(po, tp, {FittedModel::LSC, Block::Dispersion, 1, 0}), 0.0);
  EXPECT_TRUE(std::isnan(true_value(po, tp, {FittedModel::LM, Block::Location, 1, 0})));

  const ScenarioSpec lsh = scenario(ModelKind::LSH, 5, 250, 5, 1, 0.5, 1.0);
  const TrueParams tl = true_params_for(lsh);
  EXPECT_EQ(true_value(lsh, tl, {FittedModel::CSO, Block::Category, 1, 1}), 0.5 + (1 - 2.5) * 1.0);
  EXPECT_EQ(true_value(lsh, tl, {FittedModel::LSH, Block::Dispersion, 1, 0}), 1.0);
  EXPECT_TRUE(std::isnan(true_value(lsh, tl, {FittedModel::LSC, Block::Location, 1, 0})));
  EXPECT_TRUE(std::isnan(true_value(lsh, tl, {FittedModel::PO, Block::Location, 1, 0})));
}

TEST(Replication, SumRule) {
  // m = 1, p = 5: per model block, four null covariates and one with an effect.
  const ScenarioSpec s = scenario(ModelKind::LSH, 5, 250, 5, 1, 0.5, 1.0);
  const ReplicationRecord r = run_replication(s, 0);
  std::map<std::tuple<FittedModel, Block, int>, std::pair<int, int>> counts;  // (alpha, power)
  for (const ParamRecord& p : r.params) {
    auto& c = counts[{p.key.model, p.key.block, p.key.category}];
    (p.informative ? c.second : c.first) += 1;
  }
  for (const auto& [key, c] : counts) {
    EXPECT_EQ(c.first, 4);
    EXPECT_EQ(c.second, 1);
  }
}

TEST(Aggregate, RejectionRateAndBias) {
  std::vector<ReplicationRecord> recs;
  const bool rej[] = {true, false, true, true};
  const double est[] = {1.1, 0.9, 1.1, 0.9};
  for (int i = 0; i < 4; ++i) recs.push_back(fake_record(0, i, FitStatus::Converged, est[i], rej[i], 1.0));
  const auto rows = aggregate(recs);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_DOUBLE_EQ(rows[0].rejection_rate, 0.75);
  EXPECT_NEAR(rows[0].bias, 0.0, 1e-15);
  EXPECT_EQ(rows[0].metric(), "power");
  EXPECT_TRUE(rows[0].reported);
}

TEST(Aggregate, ReportingFilter) {
  EXPECT_EQ(reporting_threshold(2000), 100);
  EXPECT_EQ(reporting_threshold(500), 25);
  EXPECT_EQ(reporting_threshold(10), 1);
  std::vector<ReplicationRecord> recs;
  for (int i = 0; i < 2000; ++i)
    recs.push_back(fake_record(0, i, i < 80 ? FitStatus::Converged : FitStatus::MaxIterations, 0.1, false, 0.0));
  const auto rows = aggregate(recs);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].n_converged, 80);
  EXPECT_FALSE(rows[0].reported);
  EXPECT_EQ(rows[0].metric(), "alpha");
  // Non-converged reps do not enter bias or rejection rate.
  EXPECT_NEAR(rows[0].bias, 0.1, 1e-12);
  EXPECT_DOUBLE_EQ(rows[0].convergence_rate, 0.04);

  recs.push_back(fake_record(0, 2000, FitStatus::Converged, 0.1, false, 0.0));
  for (int i = 81; i < 100; ++i) recs[static_cast<std::size_t>(i)] = fake_record(0, i, FitStatus::Converged, 0.1, false, 0.0);
  EXPECT_FALSE(aggregate(recs)[0].reported);  // 100 of 2001 is below ceil(100.05)
}

TEST(Aggregate, ShuffleInvariance) {
  std::vector<ReplicationRecord> recs;
  for (int sid = 0; sid < 2; ++sid)
    for (int rep = 0; rep < 6; ++rep) recs.push_back(run_replication(scenario(ModelKind::PO, 3, 250, 5, 1, 0.5), rep));
  for (std::size_t i = 6; i < recs.size(); ++i) recs[i].scenario_id = 1;
  const auto base = aggregate(recs);
  std::mt19937_64 gen(3);
  for (int t = 0; t < 5; ++t) {
    std::shuffle(recs.begin(), recs.end(), gen);
    const auto rows = aggregate(recs);
    ASSERT_EQ(rows.size(), base.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      EXPECT_EQ(rows[i].key, base[i].key);
      EXPECT_EQ(rows[i].n_converged, base[i].n_converged);
      EXPECT_EQ(std::isnan(rows[i].bias), std::isnan(base[i].bias));
      if (!std::isnan(rows[i].bias)) EXPECT_EQ(rows[i].bias, base[i].bias);
      if (!std::isnan(rows[i].rejection_rate)) EXPECT_EQ(rows[i].rejection_rate, base[i].rejection_rate);
    }
  }
}

TEST(Aggregate, GenerationFailureCountsAsNonConverged) {
  std::vector<ReplicationRecord> recs{fake_record(0, 0, FitStatus::GenerationFailed, 0.0, false, 0.0),
                                      fake_record(0, 1, FitStatus::Converged, 0.2, true, 0.0)};
  recs[0].generation.aborted = true;
  Aggregator agg;
  for (const auto& r : recs) agg.add(r);
  const auto rows = agg.rows();
  EXPECT_EQ(rows[0].n_converged, 1);
  EXPECT_DOUBLE_EQ(rows[0].convergence_rate, 0.5);
  const auto conv = agg.convergence();
  ASSERT_EQ(conv.size(), 1u);
  EXPECT_EQ(conv[0].aborted, 1);
  EXPECT_EQ(conv[0].count(FitStatus::GenerationFailed), 1);
}

TEST(Correlation, Examples) {
  std::vector<BiasPair> linear{{0, 1.0, 2.0}, {1, 2.0, 4.0}, {2, 3.0, 6.0}, {3, -1.0, -2.0}};
  ASSERT_TRUE(correlation_of_biases(linear).has_value());
  EXPECT_NEAR(*correlation_of_biases(linear), 1.0, 1e-12);
  std::vector<BiasPair> constant{{0, 1.0, 0.5}, {1, 2.0, 0.5}, {2, 3.0, 0.5}};
  EXPECT_FALSE(correlation_of_biases(constant).has_value());
  EXPECT_FALSE(correlation_of_biases({{0, 1.0, 2.0}, {1, 2.0, 1.0}}).has_value());
  std::vector<BiasPair> anti{{0, 1.0, -1.0}, {1, 2.0, -2.5}, {2, 3.0, -2.9}};
  EXPECT_LT(*correlation_of_biases(anti), 0.0);
}
