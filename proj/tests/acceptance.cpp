// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
// Quantitative criteria run 500 replications per scenario with the default seed.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "ordsim/commands.hpp"
#include "test_util.hpp"

using namespace ordsim;
namespace fs = std::filesystem;

namespace {

constexpr int kReps = 500;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double x, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, x);
  return buf;
}

std::vector<ScenarioSpec> scenarios(const std::string& filter) {
  const auto f = cli::ScenarioFilter::parse(filter);
  std::vector<ScenarioSpec> out;
  for (const ScenarioSpec& s : enumerate_grid({}))
    if (f.matches(s)) out.push_back(s);
  if (out.empty()) throw std::runtime_error("no scenario matches " + filter);
  return out;
}

ScenarioSpec one_scenario(const std::string& filter) {
  const auto s = scenarios(filter);
  if (s.size() != 1) throw std::runtime_error(filter + " matches " + std::to_string(s.size()) + " scenarios");
  return s.front();
}

struct RunResult {
  std::vector<AggregateRow> rows;
  std::vector<ConvergenceRow> convergence;
};

RunResult run(const std::vector<ScenarioSpec>& ss, std::vector<FittedModel> models, int reps = kReps) {
  SimOptions opt;
  opt.models = std::move(models);
  Aggregator agg;
  for (const ScenarioSpec& s : ss)
    for (int r = 0; r < reps; ++r) agg.add(run_replication(s, r, opt));
  return {agg.rows(), agg.convergence()};
}

struct Mean {
  double sum = 0.0;
  int n = 0;
  double lo = INFINITY, hi = -INFINITY;
  void add(double x) {
    sum += x;
    ++n;
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  double value() const { return n ? sum / n : NAN; }
};

// Rejection rates of the reported true-zero parameters of one model block.
// Criteria compare the mean; the range is printed alongside.
Mean null_rejection(const RunResult& r, FittedModel m, std::optional<Block> b = {}) {
  Mean out;
  for (const AggregateRow& a : r.rows)
    if (a.key.model == m && (!b || a.key.block == *b) && a.reported && a.true_value == 0.0) out.add(a.rejection_rate);
  return out;
}

double convergence_rate(const RunResult& r, FittedModel m) {
  int conv = 0, reps = 0;
  for (const ConvergenceRow& c : r.convergence)
    if (c.model == m) {
      conv += c.count(FitStatus::Converged);
      reps += c.reps;
    }
  return reps ? static_cast<double>(conv) / reps : NAN;
}

// ---------------------------------------------------------------------------

Outcome gradient_oracle() {
  std::mt19937_64 gen(101);
  double worst = 0.0;
  for (ModelKind kind : kAllOrdinalKinds) {
    const ModelParams truth = testing::random_params(gen, kind, 4, 2);
    Dataset d;
    d.k = 4;
    d.covariates = testing::random_covariates(gen, 50, 2);
    d.outcomes.resize(50);
    std::uniform_int_distribution<int> cat(1, 4);
    for (int& y : d.outcomes) y = cat(gen);
    for (int y = 1; y <= 4; ++y) d.outcomes[static_cast<std::size_t>(y - 1)] = y;
    const ParamLayout L = ParamLayout::of(truth);
    const Eigen::VectorXd v = pack(truth);
    const Eigen::VectorXd analytic = evaluate(L, v, d, Derivatives::Gradient).score;
    const Eigen::VectorXd numeric = testing::fd_gradient(L, v, d);
    worst = std::max(worst, (analytic - numeric).norm() / std::max(1e-12, numeric.norm()));
  }
  return {worst < 1e-5, "max relative error " + fmt(worst)};
}

Outcome reduction_identities() {
  std::mt19937_64 gen(202);
  std::normal_distribution<double> nd(0.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int k = 3 + trial % 5, p = 1 + trial % 4;
    const ModelParams po = testing::random_params(gen, ModelKind::PO, k, p);
    ModelParams lsh = ModelParams::zero(ModelKind::LSH, k, p), lsc = ModelParams::zero(ModelKind::LSC, k, p),
                cso = ModelParams::zero(ModelKind::CSO, k, p);
    for (ModelParams* m : {&lsh, &lsc, &cso}) m->thresholds = po.thresholds;
    lsh.location = lsc.location = po.location;
    for (int r = 0; r < k - 1; ++r) cso.category_location.col(r) = po.location;
    Eigen::VectorXd x(p);
    for (int j = 0; j < p; ++j) x[j] = 2.0 * nd(gen);
    const Eigen::VectorXd ref = category_probs(po, x).probs;
    for (const ModelParams* m : {&lsh, &lsc, &cso})
      worst = std::max(worst, (category_probs(*m, x).probs - ref).lpNorm<Eigen::Infinity>());
  }
  return {worst <= 1e-12, "max abs difference " + fmt(worst)};
}

Eigen::VectorXd irls_logistic(const RowMatrix& x, const std::vector<int>& z) {
  const Eigen::Index n = x.rows(), p = x.cols();
  Eigen::MatrixXd X(n, p + 1);
  X.col(0).setOnes();
  X.rightCols(p) = x;
  Eigen::VectorXd b = Eigen::VectorXd::Zero(p + 1);
  for (int it = 0; it < 100; ++it) {
    const Eigen::VectorXd eta = X * b;
    Eigen::VectorXd w(n), work(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double mu = 1.0 / (1.0 + std::exp(-eta[i]));
      w[i] = mu * (1.0 - mu);
      work[i] = eta[i] + (z[static_cast<std::size_t>(i)] - mu) / w[i];
    }
    const Eigen::VectorXd next = (X.transpose() * w.asDiagonal() * X).ldlt().solve(X.transpose() * w.asDiagonal() * work);
    const double change = (next - b).lpNorm<Eigen::Infinity>();
    b = next;
    if (change < 1e-13) break;
  }
  return b;
}

Outcome binary_oracle() {
  std::mt19937_64 gen(303);
  double worst = 0.0;
  int failed = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const Dataset d = testing::random_dataset(gen, 200, 3, 2, 1.0);
    std::vector<int> z(d.outcomes.size());
    std::transform(d.outcomes.begin(), d.outcomes.end(), z.begin(), [](int y) { return y == 1 ? 1 : 0; });
    const FitResult fit = fit_ordinal(ModelKind::PO, d);
    if (!fit.converged()) {
      ++failed;
      continue;
    }
    worst = std::max(worst, (fit.estimates - irls_logistic(d.covariates, z)).lpNorm<Eigen::Infinity>());
  }
  return {failed == 0 && worst < 1e-6, "max coefficient difference " + fmt(worst) + ", non-converged " + std::to_string(failed)};
}

Outcome nesting() {
  std::mt19937_64 gen(404);
  int checked = 0, violations = 0;
  double worst = -INFINITY;
  for (int trial = 0; trial < 20; ++trial) {
    const Dataset d = testing::random_dataset(gen, 300, 2, 5);
    const FitResult po = fit_ordinal(ModelKind::PO, d), lsh = fit_ordinal(ModelKind::LSH, d),
                    cso = fit_ordinal(ModelKind::CSO, d);
    if (!po.converged() || !lsh.converged() || !cso.converged()) continue;
    ++checked;
    const double gap = std::max(po.log_likelihood - lsh.log_likelihood, lsh.log_likelihood - cso.log_likelihood);
    worst = std::max(worst, gap);
    if (gap > 1e-6) ++violations;
  }
  return {checked > 0 && violations == 0, std::to_string(checked) + "/20 datasets with all fits converged, " +
                                              std::to_string(violations) + " violations, largest gap " + fmt(worst)};
}

Outcome datagen_law() {
  double worst = 0.0;
  std::string where;
  for (ThetaSetting theta : kAllThetaSettings)
    for (int k : {3, 5, 7}) {
      ScenarioSpec s;
      s.dgp = ModelKind::PO;
      s.k = k;
      s.theta = theta;
      s.n = 5000;
      s.p = 1;
      const std::vector<double> target = target_distribution(k, theta);
      std::vector<long long> counts(static_cast<std::size_t>(k));
      long long total = 0;
      for (int rep = 0; rep < 200; ++rep) {
        Stream rng(7, static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(rep));
        for (int y : generate_dataset(rng, s).data.outcomes) ++counts[static_cast<std::size_t>(y - 1)];
        total += s.n;
      }
      double tv = 0.0;
      for (int r = 0; r < k; ++r)
        tv += std::abs(static_cast<double>(counts[static_cast<std::size_t>(r)]) / total - target[static_cast<std::size_t>(r)]);
      tv *= 0.5;
      if (tv > worst) {
        worst = tv;
        where = std::string(to_string(theta)) + " k=" + std::to_string(k);
      }
    }
  const double first = sigmoid(thresholds_for(7, ThetaSetting::Skewed)[0]);
  return {worst < 0.005 && std::abs(first - 0.0607) <= 0.0010,
          "max TV " + fmt(worst) + " (" + where + "), Skewed k=7 P(Y=1) " + fmt(first)};
}

Outcome determinism() {
  const fs::path a = fs::temp_directory_path() / "ordsim_acceptance_a", b = fs::temp_directory_path() / "ordsim_acceptance_b";
  std::string text[2];
  std::ostringstream log;
  for (int i = 0; i < 2; ++i) {
    const fs::path dir = i ? b : a;
    fs::remove_all(dir);
    cli::RunConfig cfg;
    cfg.reps = 10;
    cfg.threads = i ? 2 : 1;
    cfg.out_dir = dir.string();
    cfg.filter = cli::ScenarioFilter::parse("dgp=LSH,n=250,k=5,p=5,theta=Skewed,m=1,beta=0.5,gamma=1");
    cli::cmd_simulate(cfg, log);
    std::ifstream in(dir / "replications.csv", std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    text[i] = os.str();
  }
  const bool same = !text[0].empty() && text[0] == text[1];
  return {same, std::string(same ? "identical" : "different") + " replications.csv (" + std::to_string(text[0].size()) +
                    " bytes, threads 1 vs 2)"};
}

const char* kBaseline = "dgp=PO,p=5,k=3,theta=Uniform,m=0";

Outcome baseline_alpha() {
  const auto r = run({one_scenario(std::string(kBaseline) + ",n=1000")}, {FittedModel::LM, FittedModel::PO});
  const Mean po = null_rejection(r, FittedModel::PO, Block::Location), lm = null_rejection(r, FittedModel::LM);
  const auto in_band = [](double a) { return a >= 0.03 && a <= 0.07; };
  return {in_band(po.value()) && in_band(lm.value()), "PO location " + fmt(po.value()) + " (per covariate " + fmt(po.lo) +
                                                         ".." + fmt(po.hi) + "), LM slopes " + fmt(lm.value()) +
                                                         " (per covariate " + fmt(lm.lo) + ".." + fmt(lm.hi) + ")"};
}

Outcome lsh_dispersion_inflation() {
  const auto r = run({one_scenario(std::string(kBaseline) + ",n=250")}, {FittedModel::LSH});
  const Mean d = null_rejection(r, FittedModel::LSH, Block::Dispersion);
  return {d.value() >= 0.05 && d.value() <= 0.12,
          "LSH dispersion alpha " + fmt(d.value()) + " (per covariate " + fmt(d.lo) + ".." + fmt(d.hi) + ")"};
}

Outcome skewed_blowup() {
  const auto r = run({one_scenario("dgp=PO,p=5,k=3,theta=Skewed,m=0,n=250")},
                     {FittedModel::LM, FittedModel::PO, FittedModel::LSH});
  const Mean d = null_rejection(r, FittedModel::LSH, Block::Dispersion), po = null_rejection(r, FittedModel::PO),
             lm = null_rejection(r, FittedModel::LM);
  return {d.value() > 0.30 && po.value() < 0.10 && lm.value() < 0.10,
          "LSH dispersion alpha " + fmt(d.value()) + ", PO " + fmt(po.value()) + " (max " + fmt(po.hi) + "), LM " +
              fmt(lm.value()) + " (max " + fmt(lm.hi) + "), k=3"};
}

Outcome many_covariate_lsc() {
  const auto r500 = run({one_scenario("dgp=PO,p=35,k=3,theta=Uniform,m=0,n=500")}, {FittedModel::LSC});
  const auto r250 = run({one_scenario("dgp=PO,p=35,k=3,theta=Uniform,m=0,n=250")}, {FittedModel::LSC});
  const Mean loc = null_rejection(r500, FittedModel::LSC, Block::Location),
             disp = null_rejection(r500, FittedModel::LSC, Block::Dispersion);
  const double conv = convergence_rate(r250, FittedModel::LSC);
  return {loc.value() > 0.10 && disp.value() > 0.10 && conv < 0.05,
          "n=500 alpha location " + fmt(loc.value()) + ", dispersion " + fmt(disp.value()) +
              "; n=250 convergence rate " + fmt(conv)};
}

Outcome cso_inflation() {
  const auto r = run({one_scenario("dgp=PO,p=5,k=7,theta=Uniform,m=0,n=250")}, {FittedModel::CSO});
  const Mean c = null_rejection(r, FittedModel::CSO);
  return {c.value() >= 0.10 && c.value() <= 0.22, "CSO alpha mean " + fmt(c.value()) + " over " + std::to_string(c.n) +
                                                      " parameters (" + fmt(c.lo) + ".." + fmt(c.hi) +
                                                      "), convergence " + fmt(convergence_rate(r, FittedModel::CSO))};
}

Outcome cso_self_dgp() {
  const auto ss = scenarios("dgp=CSO,p=5,k=7,theta=Uniform,m=1,n=250,beta=1");
  const auto r = run({ss.front()}, {FittedModel::CSO});
  // The informative covariate's category effects that are zero by construction.
  Mean zero;
  std::string cats;
  for (const AggregateRow& a : r.rows)
    if (a.key.model == FittedModel::CSO && a.informative && a.true_value == 0.0 && a.reported) {
      zero.add(a.rejection_rate);
      cats += (cats.empty() ? "" : ",") + std::to_string(a.key.category);
    }
  return {zero.n == 2 && zero.lo >= 0.40, "alpha of true-zero category effects (categories " + cats + ") " +
                                              fmt(zero.lo) + ".." + fmt(zero.hi) + ", convergence " +
                                              fmt(convergence_rate(r, FittedModel::CSO))};
}

Outcome bias_signs() {
  const auto r = run(scenarios("dgp=PO,p=5,k=5,theta=Uniform,n=250,beta=2"),
                     {FittedModel::PO, FittedModel::CSO, FittedModel::LSH});
  std::map<FittedModel, Mean> bias;
  for (const AggregateRow& a : r.rows)
    if (a.informative && a.reported && !std::isnan(a.bias) && a.key.block != Block::Dispersion)
      bias[a.key.model].add(a.bias);
  const double po = bias[FittedModel::PO].value(), cso = bias[FittedModel::CSO].value(),
               lsh = bias[FittedModel::LSH].value();
  return {po > 0.0 && cso < 0.0 && lsh < 0.0, "mean bias PO " + fmt(po) + ", CSO " + fmt(cso) + ", LSH " + fmt(lsh)};
}

Outcome bias_correlations() {
  std::map<FittedModel, std::optional<double>> corr;
  std::map<FittedModel, std::size_t> count;
  for (FittedModel m : {FittedModel::LSH, FittedModel::LSC}) {
    std::vector<ScenarioSpec> ss;
    for (const ScenarioSpec& s : scenarios("dgp=" + std::string(to_string(m)) + ",p=5,k=3,theta=Uniform,m=1,n=250"))
      if (s.beta != 0.0 || s.gamma_or_zero() != 0.0) ss.push_back(s);
    const auto r = run(ss, {m});
    const auto pairs = bias_pairs(r.rows, m);
    corr[m] = correlation_of_biases(pairs);
    count[m] = pairs.size();
  }
  const auto show = [](const std::optional<double>& c) { return c ? fmt(*c) : std::string("undefined"); };
  const auto& lsh = corr[FittedModel::LSH];
  const auto& lsc = corr[FittedModel::LSC];
  return {lsh && lsc && *lsh > 0.0 && *lsc < 0.0,
          "LSH " + show(lsh) + " over " + std::to_string(count[FittedModel::LSH]) + " settings, LSC " + show(lsc) +
              " over " + std::to_string(count[FittedModel::LSC]) + " settings"};
}

Outcome grid_audit() {
  std::ostringstream out;
  cli::RunConfig cfg;
  cli::cmd_grid(cfg, out, false);
  const std::string text = out.str();
  const std::size_t total = enumerate_grid({}).size();
  bool ok = text.find("grid_count=" + std::to_string(total) + "\n") != std::string::npos &&
            text.find("published_grid_count=4032\n") != std::string::npos;
  for (const char* dgp : {"PO", "CSO", "LSH", "LSC"})
    ok = ok && text.find(std::string("grid_count.") + dgp + "=") != std::string::npos;

  const fs::path dir = fs::temp_directory_path() / "ordsim_acceptance_grid";
  fs::remove_all(dir);
  cfg.reps = 1;
  cfg.threads = 1;
  cfg.out_dir = dir.string();
  cfg.models = {FittedModel::PO};
  cfg.filter = cli::ScenarioFilter::parse("id=0");
  std::ostringstream log;
  cli::cmd_simulate(cfg, log);
  const auto manifest = cli::read_manifest(dir / "manifest").values;
  ok = ok && manifest.count("grid_deviation") && manifest.at("grid_count") == std::to_string(total);
  return {ok, std::to_string(total) + " scenarios vs 4032 published, manifest deviation " +
                  (manifest.count("grid_deviation") ? manifest.at("grid_deviation") : std::string("missing"))};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"gradient oracle", gradient_oracle},
      {"reduction identities", reduction_identities},
      {"binary oracle", binary_oracle},
      {"nesting", nesting},
      {"datagen law", datagen_law},
      {"determinism", determinism},
      {"baseline alpha", baseline_alpha},
      {"LSH dispersion inflation", lsh_dispersion_inflation},
      {"skewed blow-up", skewed_blowup},
      {"many-covariate LSC", many_covariate_lsc},
      {"CSO category inflation", cso_inflation},
      {"CSO self-DGP", cso_self_dgp},
      {"bias signs", bias_signs},
      {"bias correlations", bias_correlations},
      {"grid audit", grid_audit},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!o.pass) ++failed;
    std::cout << "criterion " << (i + 1) << " " << (o.pass ? "PASS" : "FAIL") << " " << criteria[i].first << ": "
              << o.detail << " [" << fmt(secs, 3) << "s]" << std::endl;
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size() << " criteria passed"
            << std::endl;
  return failed ? 1 : 0;
}
