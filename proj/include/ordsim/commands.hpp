#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "ordsim/csv.hpp"
#include "ordsim/simulation.hpp"

namespace ordsim::cli {

namespace fs = std::filesystem;

// Exit codes: 0 success, 1 fit did not converge, 2 validation, 3 I/O, 4 resume mismatch.
enum ExitCode : int { kOk = 0, kNotConverged = 1, kValidation = 2, kIo = 3, kResumeMismatch = 4 };

struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ResumeMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Scenario filter

/// Conjunction of clauses "key=v1|v2|...". Keys: id, dgp, n, p, k, m, theta, beta, gamma.
class ScenarioFilter {
 public:
  ScenarioFilter() = default;

  static ScenarioFilter parse(std::string_view text) {
    ScenarioFilter f;
    for (std::string_view clause : csv::split(text, ',')) {
      if (clause.empty()) continue;
      const std::size_t eq = clause.find('=');
      if (eq == std::string_view::npos || eq == 0 || eq + 1 == clause.size())
        throw ValidationError("filter clause '" + std::string(clause) + "' is not key=value");
      const std::string key(clause.substr(0, eq));
      static const std::set<std::string> keys{"id", "dgp", "n", "p", "k", "m", "theta", "beta", "gamma"};
      if (!keys.count(key)) throw ValidationError("unknown filter key '" + key + "'");
      std::vector<std::string> values;
      for (std::string_view v : csv::split(clause.substr(eq + 1), '|')) values.emplace_back(v);
      for (const std::string& v : values) check_value(key, v);
      f.clauses_.emplace_back(key, values);
    }
    return f;
  }

  bool matches(const ScenarioSpec& s) const {
    for (const auto& [key, values] : clauses_) {
      const bool any = std::any_of(values.begin(), values.end(), [&](const std::string& v) { return match(s, key, v); });
      if (!any) return false;
    }
    return true;
  }

  bool empty() const { return clauses_.empty(); }

  std::string to_string() const {
    std::string out;
    for (const auto& [key, values] : clauses_) {
      if (!out.empty()) out += ',';
      out += key + '=';
      for (std::size_t i = 0; i < values.size(); ++i) out += (i ? "|" : "") + values[i];
    }
    return out;
  }

 private:
  static void check_value(const std::string& key, const std::string& v) {
    try {
      if (key == "dgp") parse_model_kind(v);
      else if (key == "theta") parse_theta_setting(v);
      else if (key == "beta" || key == "gamma") csv::parse_double(v);
      else csv::parse_int<int>(v);
    } catch (const std::invalid_argument&) {
      throw ValidationError("bad filter value '" + v + "' for key '" + key + "'");
    }
  }

  static bool match(const ScenarioSpec& s, const std::string& key, const std::string& v) {
    if (key == "dgp") return parse_model_kind(v) == s.dgp;
    if (key == "theta") return parse_theta_setting(v) == s.theta;
    if (key == "beta") return csv::parse_double(v) == s.beta;
    if (key == "gamma") return csv::parse_double(v) == s.gamma_or_zero();
    const int x = csv::parse_int<int>(v);
    if (key == "id") return x == s.id;
    if (key == "n") return x == s.n;
    if (key == "p") return x == s.p;
    if (key == "k") return x == s.k;
    if (key == "m") return x == s.informative;
    return false;
  }

  std::vector<std::pair<std::string, std::vector<std::string>>> clauses_;
};

// ---------------------------------------------------------------------------
// Run configuration

struct RunConfig {
  int reps = 2000;
  double alpha = 0.05;
  unsigned threads = 0;  // 0: hardware concurrency
  std::string out_dir = "ordsim-out";
  ScenarioFilter filter;
  std::vector<FittedModel> models{std::begin(kAllFittedModels), std::end(kAllFittedModels)};
  GridConfig grid;
  DatagenConfig datagen;
  FitOptions fit;

  std::uint64_t master_seed() const { return grid.master_seed; }

  void validate() const {
    std::vector<std::string> bad;
    if (reps < 1) bad.emplace_back("reps must be >= 1");
    if (!(alpha > 0.0 && alpha < 1.0)) bad.emplace_back("alpha must lie in (0, 1)");
    if (models.empty()) bad.emplace_back("models must not be empty");
    if (out_dir.empty()) bad.emplace_back("out_dir must not be empty");
    if (!bad.empty()) {
      std::string msg = "invalid run configuration: ";
      for (std::size_t i = 0; i < bad.size(); ++i) msg += (i ? "; " : "") + bad[i];
      throw ValidationError(msg);
    }
    try {
      grid.validate();
      datagen.validate();
      fit.validate();
    } catch (const std::invalid_argument& e) {
      throw ValidationError(e.what());
    }
  }

  SimOptions sim_options() const {
    SimOptions o;
    o.models = models;
    o.alpha = alpha;
    o.fit = fit;
    o.datagen = datagen;
    return o;
  }

  /// Every setting that influences results, one key=value per line, fixed order.
  std::string canonical_text() const {
    std::ostringstream os;
    auto list = [&](const char* key, const auto& xs, auto fmt) {
      os << key << '=';
      bool first = true;
      for (const auto& x : xs) {
        os << (first ? "" : ",") << fmt(x);
        first = false;
      }
      os << '\n';
    };
    auto num = [](double x) { return csv::format_double(x); };
    auto integer = [](int x) { return std::to_string(x); };
    auto named = [](auto x) { return std::string(ordsim::to_string(x)); };
    os << "reps=" << reps << '\n';
    os << "alpha=" << num(alpha) << '\n';
    os << "seed=" << grid.master_seed << '\n';
    os << "filter=" << filter.to_string() << '\n';
    list("models", models, named);
    list("dgps", grid.dgps, named);
    list("n_levels", grid.n_levels, integer);
    list("p_levels", grid.p_levels, integer);
    list("k_levels", grid.k_levels, integer);
    list("theta_settings", grid.theta_settings, named);
    list("informative_levels", grid.informative_levels, integer);
    list("effect_grid", grid.effect_grid, num);
    list("pairing_anchors", grid.pairing_anchors, num);
    os << "skewed_floor=" << num(datagen.skewed_floor) << '\n';
    os << "skewed_growth=" << num(datagen.skewed_growth) << '\n';
    os << "unstructured_factor=" << num(datagen.unstructured_factor) << '\n';
    os << "covariate_sd=" << num(datagen.covariate_sd) << '\n';
    os << "min_category_count=" << datagen.min_category_count << '\n';
    os << "max_observation_attempts=" << datagen.max_observation_attempts << '\n';
    os << "max_dataset_redraws=" << datagen.max_dataset_redraws << '\n';
    os << "max_iterations=" << fit.max_iterations << '\n';
    os << "gradient_tolerance=" << num(fit.gradient_tolerance) << '\n';
    os << "ll_rel_tolerance=" << num(fit.ll_rel_tolerance) << '\n';
    os << "max_step_halvings=" << fit.max_step_halvings << '\n';
    os << "monotone_check=" << ordsim::to_string(fit.monotone_check) << '\n';
    return os.str();
  }

  std::string hash() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(csv::fnv1a(canonical_text())));
    return buf;
  }
};

namespace detail {

inline std::string trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return std::string(s);
}

template <class T, class F>
std::vector<T> parse_list(std::string_view v, F f) {
  std::vector<T> out;
  for (std::string_view item : csv::split(v, ','))
    if (!item.empty()) out.push_back(f(item));
  return out;
}

inline std::vector<FittedModel> parse_models(std::string_view v) {
  std::vector<FittedModel> out;
  for (std::string_view item : csv::split(v, ',')) {
    if (item.empty()) continue;
    const FittedModel m = parse_fitted_model(item);
    if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
  }
  // Canonical order keeps output independent of how the subset was spelled.
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace detail

/// Applies one key=value setting to `cfg`. Throws ValidationError.
inline void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value) {
  using detail::parse_list;
  auto as_int = [](std::string_view s) { return csv::parse_int<int>(s); };
  auto as_double = [](std::string_view s) { return csv::parse_double(s); };
  try {
    if (key == "reps") cfg.reps = as_int(value);
    else if (key == "alpha") cfg.alpha = as_double(value);
    else if (key == "seed") cfg.grid.master_seed = csv::parse_int<std::uint64_t>(value);
    else if (key == "threads") cfg.threads = value == "auto" ? 0u : csv::parse_int<unsigned>(value);
    else if (key == "out_dir") cfg.out_dir = value;
    else if (key == "filter") cfg.filter = ScenarioFilter::parse(value);
    else if (key == "models") cfg.models = detail::parse_models(value);
    else if (key == "dgps") cfg.grid.dgps = parse_list<ModelKind>(value, parse_model_kind);
    else if (key == "n_levels") cfg.grid.n_levels = parse_list<int>(value, as_int);
    else if (key == "p_levels") cfg.grid.p_levels = parse_list<int>(value, as_int);
    else if (key == "k_levels") cfg.grid.k_levels = parse_list<int>(value, as_int);
    else if (key == "theta_settings") cfg.grid.theta_settings = parse_list<ThetaSetting>(value, parse_theta_setting);
    else if (key == "informative_levels") cfg.grid.informative_levels = parse_list<int>(value, as_int);
    else if (key == "effect_grid") cfg.grid.effect_grid = parse_list<double>(value, as_double);
    else if (key == "pairing_anchors") cfg.grid.pairing_anchors = parse_list<double>(value, as_double);
    else if (key == "skewed_floor") cfg.datagen.skewed_floor = as_double(value);
    else if (key == "skewed_growth") cfg.datagen.skewed_growth = as_double(value);
    else if (key == "unstructured_factor") cfg.datagen.unstructured_factor = as_double(value);
    else if (key == "covariate_sd") cfg.datagen.covariate_sd = as_double(value);
    else if (key == "min_category_count") cfg.datagen.min_category_count = as_int(value);
    else if (key == "max_observation_attempts") cfg.datagen.max_observation_attempts = as_int(value);
    else if (key == "max_dataset_redraws") cfg.datagen.max_dataset_redraws = as_int(value);
    else if (key == "max_iterations") cfg.fit.max_iterations = as_int(value);
    else if (key == "gradient_tolerance") cfg.fit.gradient_tolerance = as_double(value);
    else if (key == "ll_rel_tolerance") cfg.fit.ll_rel_tolerance = as_double(value);
    else if (key == "max_step_halvings") cfg.fit.max_step_halvings = as_int(value);
    else if (key == "monotone_check") cfg.fit.monotone_check = parse_monotone_check(value);
    else throw ValidationError("unknown configuration key '" + key + "'");
  } catch (const ValidationError&) {
    throw;
  } catch (const std::exception& e) {
    throw ValidationError("configuration key '" + key + "': " + e.what());
  }
}

/// Reads a key=value configuration file; '#' starts a comment.
inline void load_config_file(RunConfig& cfg, const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read configuration file '" + path.string() + "'");
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const std::size_t hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = detail::trim(line);
    if (t.empty()) continue;
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    try {
      apply_setting(cfg, detail::trim(std::string_view(t).substr(0, eq)), detail::trim(std::string_view(t).substr(eq + 1)));
    } catch (const ValidationError& e) {
      throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

// ---------------------------------------------------------------------------
// grid

inline std::string grid_audit(const std::vector<ScenarioSpec>& grid) {
  std::ostringstream os;
  const long long count = static_cast<long long>(grid.size());
  os << "grid_count=" << count << '\n';
  for (const auto& [dgp, n] : grid_breakdown(grid)) os << "grid_count." << dgp << '=' << n << '\n';
  os << "published_grid_count=" << kPublishedGridCount << '\n';
  const long long diff = count - kPublishedGridCount;
  os << "grid_deviation=" << (diff > 0 ? "+" : "") << diff << '\n';
  os << "grid_agreement=" << (diff == 0 ? "yes" : "no") << '\n';
  return os.str();
}

inline std::string scenarios_csv(const std::vector<ScenarioSpec>& grid) {
  std::string out = "scenario_id,dgp,k,theta,p,n,informative,beta,gamma\n";
  for (const ScenarioSpec& s : grid)
    out += csv::Row()
               .add(s.id)
               .add(to_string(s.dgp))
               .add(s.k)
               .add(to_string(s.theta))
               .add(s.p)
               .add(s.n)
               .add(s.informative)
               .add(s.beta)
               .add(s.gamma ? *s.gamma : NAN)
               .str();
  return out;
}

inline std::string thresholds_csv(const DatagenConfig& cfg) {
  std::string out = "k,theta_setting,r,theta,category_prob\n";
  for (int k : {3, 5, 7})
    for (ThetaSetting t : kAllThetaSettings) {
      const Thresholds th = thresholds_for(k, t, cfg);
      const std::vector<double> probs = target_distribution(k, t, cfg);
      for (int r = 0; r < k; ++r)
        out += csv::Row()
                   .add(k)
                   .add(to_string(t))
                   .add(r + 1)
                   .add(r < k - 1 ? th[static_cast<std::size_t>(r)] : NAN)
                   .add(probs[static_cast<std::size_t>(r)])
                   .str();
    }
  return out;
}

inline void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << content;
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

inline void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory '" + dir.string() + "'");
}

inline std::vector<ScenarioSpec> selected_scenarios(const RunConfig& cfg) {
  std::vector<ScenarioSpec> out;
  for (const ScenarioSpec& s : enumerate_grid(cfg.grid))
    if (cfg.filter.matches(s)) out.push_back(s);
  return out;
}

/// Prints the scenario count with a per-DGP breakdown; optionally writes
/// scenarios.csv and thresholds.csv.
inline int cmd_grid(const RunConfig& cfg, std::ostream& out, bool write_files) {
  cfg.validate();
  const std::vector<ScenarioSpec> grid = enumerate_grid(cfg.grid);
  out << grid_audit(grid);
  std::vector<ScenarioSpec> selected;
  for (const ScenarioSpec& s : grid)
    if (cfg.filter.matches(s)) selected.push_back(s);
  if (!cfg.filter.empty()) out << "selected=" << selected.size() << '\n';
  if (write_files) {
    ensure_dir(cfg.out_dir);
    write_file(fs::path(cfg.out_dir) / "scenarios.csv", scenarios_csv(selected));
    write_file(fs::path(cfg.out_dir) / "thresholds.csv", thresholds_csv(cfg.datagen));
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// fit

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
  std::vector<int> source_lines;
};

inline Table read_table(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read '" + path.string() + "'");
  Table t;
  std::string line;
  int lineno = 0;
  char delim = ',';
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    if (t.columns.empty()) {
      delim = line.find('\t') != std::string::npos ? '\t' : ',';
      for (std::string_view c : csv::split(line, delim)) t.columns.emplace_back(c);
      continue;
    }
    std::vector<std::string> row;
    for (std::string_view c : csv::split(line, delim)) row.emplace_back(c);
    if (row.size() != t.columns.size())
      throw ValidationError(path.string() + ": line " + std::to_string(lineno) + ": expected " +
                            std::to_string(t.columns.size()) + " fields, found " + std::to_string(row.size()));
    t.rows.push_back(std::move(row));
    t.source_lines.push_back(lineno);
  }
  if (t.columns.empty()) throw ValidationError(path.string() + ": empty file");
  return t;
}

struct LoadedData {
  Dataset data;
  std::vector<std::string> covariate_names;
};

/// Builds a dataset from a table with a `y` column (integers 1..k) and numeric covariates.
inline LoadedData to_dataset(const Table& t, std::optional<int> k, const std::string& source) {
  const auto ycol = std::find(t.columns.begin(), t.columns.end(), "y");
  if (ycol == t.columns.end()) throw ValidationError(source + ": no 'y' column");
  const std::size_t yi = static_cast<std::size_t>(ycol - t.columns.begin());
  if (t.columns.size() < 2) throw ValidationError(source + ": no covariate columns");
  if (t.rows.empty()) throw ValidationError(source + ": no data rows");

  LoadedData out;
  for (std::size_t c = 0; c < t.columns.size(); ++c)
    if (c != yi) out.covariate_names.push_back(t.columns[c]);
  const Eigen::Index n = static_cast<Eigen::Index>(t.rows.size());
  const Eigen::Index p = static_cast<Eigen::Index>(out.covariate_names.size());
  out.data.covariates.resize(n, p);
  out.data.outcomes.resize(t.rows.size());
  int ymax = 0;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    auto where = [&](std::size_t c) {
      return source + ": line " + std::to_string(t.source_lines[i]) + ", column '" + t.columns[c] + "'";
    };
    Eigen::Index j = 0;
    for (std::size_t c = 0; c < t.columns.size(); ++c) {
      const std::string& cell = t.rows[i][c];
      if (c == yi) {
        try {
          out.data.outcomes[i] = csv::parse_int<int>(cell);
        } catch (const std::invalid_argument&) {
          throw ValidationError(where(c) + ": outcome '" + cell + "' is not an integer");
        }
        if (out.data.outcomes[i] < 1) throw ValidationError(where(c) + ": outcome must be >= 1");
        ymax = std::max(ymax, out.data.outcomes[i]);
      } else {
        double v = NAN;
        try {
          v = csv::parse_double(cell);
        } catch (const std::invalid_argument&) {
        }
        if (!std::isfinite(v)) throw ValidationError(where(c) + ": '" + cell + "' is not a finite number");
        out.data.covariates(static_cast<Eigen::Index>(i), j++) = v;
      }
    }
  }
  out.data.k = k.value_or(ymax);
  for (std::size_t i = 0; i < t.rows.size(); ++i)
    if (out.data.outcomes[i] > out.data.k)
      throw ValidationError(source + ": line " + std::to_string(t.source_lines[i]) + ": outcome " +
                            std::to_string(out.data.outcomes[i]) + " outside 1.." + std::to_string(out.data.k));
  return out;
}

/// Fits each requested model and prints a coefficient table per model.
/// Returns kNotConverged if any fit did not converge.
inline int cmd_fit(const fs::path& input, const std::vector<FittedModel>& models, std::optional<int> k, double alpha,
                   const FitOptions& fit_options, std::ostream& out) {
  if (models.empty()) throw ValidationError("no model selected");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("alpha must lie in (0, 1)");
  const LoadedData ld = to_dataset(read_table(input), k, input.string());
  const Dataset& d = ld.data;
  for (FittedModel m : models)
    if (m != FittedModel::LM && d.k < 3)
      throw ValidationError("ordinal model " + std::string(to_string(m)) + " requires k >= 3, got k = " + std::to_string(d.k));

  int code = kOk;
  bool first = true;
  for (FittedModel m : models) {
    FitResult fit;
    std::vector<std::string> names;
    Reference ref = Reference::normal();
    if (m == FittedModel::LM) {
      if (d.n() <= d.p() + 1) throw ValidationError("linear model needs more rows than covariates + 1");
      fit = fit_linear(d);
      names.push_back("(intercept)");
      for (const std::string& c : ld.covariate_names) names.push_back("slope[" + c + "]");
      ref = Reference::student(static_cast<double>(d.n() - d.p() - 1));
    } else {
      try {
        fit = fit_ordinal(ordinal_kind(m), d, fit_options);
      } catch (const std::invalid_argument& e) {
        throw ValidationError(e.what());
      }
      names = parameter_names(ParamLayout{ordinal_kind(m), d.k, static_cast<int>(d.p())}, ld.covariate_names);
    }
    if (!fit.converged()) code = kNotConverged;

    if (!first) out << '\n';
    first = false;
    out << "# model=" << to_string(m) << " status=" << to_string(fit.status) << " iterations=" << fit.iterations
        << " loglik=" << csv::format_double(m == FittedModel::LM ? NAN : fit.log_likelihood) << " n=" << d.n()
        << " k=" << d.k << '\n';
    out << "term,estimate,std_error,statistic,p_value\n";
    for (Eigen::Index i = 0; i < fit.estimates.size(); ++i) {
      csv::Row row;
      row.add(names[static_cast<std::size_t>(i)]).add(fit.estimates[i]);
      if (fit.converged()) {
        const TestResult t = wald_test(fit.estimates[i], fit.std_errors[i], alpha, ref);
        row.add(t.std_error).add(t.statistic).add(t.p_value);
      } else {
        row.add(NAN).add(NAN).add(NAN);
      }
      out << row.str();
    }
  }
  return code;
}

// ---------------------------------------------------------------------------
// simulate

inline const char* kReplicationsHeader =
    "scenario_id,rep,model,block,covariate,category,status,iterations,informative,true_value,estimate,std_error,"
    "statistic,p_value,rejected,observation_redraws,dataset_redraws,generation_aborted\n";

inline std::string replication_rows(const ReplicationRecord& rec) {
  std::map<FittedModel, int> iterations;
  for (const ModelOutcome& m : rec.fits) iterations[m.model] = m.iterations;
  std::string out;
  for (const ParamRecord& p : rec.params) {
    csv::Row row;
    row.add(rec.scenario_id)
        .add(rec.rep_index)
        .add(to_string(p.key.model))
        .add(to_string(p.key.block))
        .add(p.key.covariate)
        .add(p.key.category)
        .add(to_string(p.status))
        .add(iterations[p.key.model])
        .add(p.informative)
        .add(p.true_value);
    if (p.test) {
      row.add(p.test->estimate).add(p.test->std_error).add(p.test->statistic).add(p.test->p_value).add(p.test->rejected);
    } else {
      row.add(NAN).add(NAN).add(NAN).add(NAN).add("NA");
    }
    row.add(static_cast<long long>(rec.generation.observation_redraws))
        .add(static_cast<long long>(rec.generation.dataset_redraws))
        .add(rec.generation.aborted);
    out += row.str();
  }
  return out;
}

/// Reads replications.csv back into records, one per (scenario_id, rep) group,
/// in file order.
class ReplicationReader {
 public:
  explicit ReplicationReader(const fs::path& path) : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw IoError("cannot read '" + path.string() + "'");
    std::string header;
    std::getline(in_, header);
    if (header + '\n' != kReplicationsHeader) throw IoError(path.string() + ": unexpected header");
    line_ = 1;
  }

  /// Next complete group. Partial trailing lines raise IoError.
  std::optional<ReplicationRecord> next() {
    ReplicationRecord rec;
    bool have = false;
    while (true) {
      if (!pending_) {
        std::string line;
        if (!std::getline(in_, line)) break;
        ++line_;
        if (line.empty()) continue;
        pending_ = parse_line(line);
      }
      const Parsed& p = *pending_;
      if (have && (p.scenario_id != rec.scenario_id || p.rep != rec.rep_index)) break;
      if (!have) {
        rec.scenario_id = p.scenario_id;
        rec.rep_index = p.rep;
        rec.generation = p.generation;
        have = true;
      }
      if (rec.fits.empty() || rec.fits.back().model != p.param.key.model)
        rec.fits.push_back({p.param.key.model, p.param.status, p.iterations});
      rec.params.push_back(p.param);
      pending_.reset();
    }
    if (!have) return std::nullopt;
    return rec;
  }

 private:
  struct Parsed {
    int scenario_id = 0;
    int rep = 0;
    int iterations = 0;
    ParamRecord param;
    GenDiagnostics generation;
  };

  Parsed parse_line(const std::string& line) const {
    const auto f = csv::split(line, ',');
    if (f.size() != 18) throw IoError(path_.string() + ": line " + std::to_string(line_) + " is incomplete");
    try {
      Parsed p;
      p.scenario_id = csv::parse_int<int>(f[0]);
      p.rep = csv::parse_int<int>(f[1]);
      p.param.key = {parse_fitted_model(f[2]), parse_block(f[3]), csv::parse_int<int>(f[4]), csv::parse_int<int>(f[5])};
      p.param.status = parse_fit_status(f[6]);
      p.iterations = csv::parse_int<int>(f[7]);
      p.param.informative = f[8] == "1";
      p.param.true_value = csv::parse_double(f[9]);
      if (f[14] != "NA") {
        TestResult t;
        t.estimate = csv::parse_double(f[10]);
        t.std_error = csv::parse_double(f[11]);
        t.statistic = csv::parse_double(f[12]);
        t.p_value = csv::parse_double(f[13]);
        t.rejected = f[14] == "1";
        p.param.test = t;
      }
      p.generation.observation_redraws = csv::parse_int<long long>(f[15]);
      p.generation.dataset_redraws = csv::parse_int<long long>(f[16]);
      p.generation.aborted = f[17] == "1";
      return p;
    } catch (const std::invalid_argument& e) {
      throw IoError(path_.string() + ": line " + std::to_string(line_) + ": " + e.what());
    }
  }

  std::ifstream in_;
  fs::path path_;
  int line_ = 0;
  std::optional<Parsed> pending_;
};

inline std::size_t rows_per_replication(const RunConfig& cfg, const ScenarioSpec& s) {
  std::size_t n = 0;
  for (FittedModel m : cfg.models) n += tested_parameters(m, s.p, s.k).size();
  return n;
}

struct ManifestInfo {
  std::map<std::string, std::string> values;
};

inline ManifestInfo read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read '" + path.string() + "'");
  ManifestInfo m;
  std::string line;
  while (std::getline(in, line)) {
    const std::size_t eq = line.find('=');
    if (eq != std::string::npos) m.values[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return m;
}

/// Scans an existing replications.csv, truncates it after the last complete
/// (scenario_id, rep) group and returns the completed pairs.
inline std::set<std::pair<int, int>> recover_progress(const fs::path& path, const RunConfig& cfg,
                                                      const std::map<int, const ScenarioSpec*>& by_id) {
  std::set<std::pair<int, int>> done;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line) || line + '\n' != kReplicationsHeader) {
    in.close();
    write_file(path, kReplicationsHeader);
    return done;
  }
  std::uintmax_t good_end = static_cast<std::uintmax_t>(in.tellg());
  std::pair<int, int> current{-1, -1};
  std::size_t rows = 0, expected = 0;
  while (std::getline(in, line)) {
    if (in.eof()) break;  // no trailing newline: interrupted mid-line
    const auto f = csv::split(line, ',');
    if (f.size() != 18) break;
    std::pair<int, int> key;
    try {
      key = {csv::parse_int<int>(f[0]), csv::parse_int<int>(f[1])};
    } catch (const std::invalid_argument&) {
      break;
    }
    if (key != current) {
      const auto it = by_id.find(key.first);
      if (it == by_id.end()) throw ResumeMismatch("replications.csv contains scenario " + std::to_string(key.first) +
                                                  " which is not part of this run");
      current = key;
      rows = 0;
      expected = rows_per_replication(cfg, *it->second);
    }
    ++rows;
    if (rows == expected) {
      done.insert(current);
      good_end = static_cast<std::uintmax_t>(in.tellg());
    }
  }
  in.close();
  fs::resize_file(path, good_end);
  return done;
}

struct SimulateResult {
  std::size_t scenarios = 0;
  std::size_t replications_run = 0;
  std::size_t replications_resumed = 0;
};

inline std::string summary_csv(const std::vector<AggregateRow>& rows, const std::map<int, const ScenarioSpec*>& by_id) {
  std::string out =
      "scenario_id,dgp,k,theta,p,n,informative_count,beta,gamma,model,block,covariate,category,informative,"
      "true_value,metric,reps,n_converged,convergence_rate,mean_estimate,bias,rejection_rate,reported\n";
  for (const AggregateRow& r : rows) {
    const ScenarioSpec& s = *by_id.at(r.scenario_id);
    out += csv::Row()
               .add(r.scenario_id)
               .add(to_string(s.dgp))
               .add(s.k)
               .add(to_string(s.theta))
               .add(s.p)
               .add(s.n)
               .add(s.informative)
               .add(s.beta)
               .add(s.gamma ? *s.gamma : NAN)
               .add(to_string(r.key.model))
               .add(to_string(r.key.block))
               .add(r.key.covariate)
               .add(r.key.category)
               .add(r.informative)
               .add(r.true_value)
               .add(r.metric())
               .add(r.reps)
               .add(r.n_converged)
               .add(r.convergence_rate)
               .add(r.mean_estimate)
               .add(r.bias)
               .add(r.rejection_rate)
               .add(r.reported)
               .str();
  }
  return out;
}

inline std::string convergence_csv(const std::vector<ConvergenceRow>& rows) {
  std::string out =
      "scenario_id,model,reps,converged,max_iterations,singular_information,undefined_likelihood,non_monotone_fit,"
      "generation_failed,convergence_rate,observation_redraws,dataset_redraws,dataset_redraws_max,generation_aborted\n";
  for (const ConvergenceRow& c : rows)
    out += csv::Row()
               .add(c.scenario_id)
               .add(to_string(c.model))
               .add(c.reps)
               .add(c.count(FitStatus::Converged))
               .add(c.count(FitStatus::MaxIterations))
               .add(c.count(FitStatus::SingularInformation))
               .add(c.count(FitStatus::UndefinedLikelihood))
               .add(c.count(FitStatus::NonMonotoneFit))
               .add(c.count(FitStatus::GenerationFailed))
               .add(c.convergence_rate())
               .add(static_cast<long long>(c.observation_redraws))
               .add(static_cast<long long>(c.dataset_redraws))
               .add(static_cast<long long>(c.dataset_redraws_max))
               .add(c.aborted)
               .str();
  return out;
}

namespace detail {

/// Runs `count` jobs on `threads` workers and hands results to `sink` in job
/// order. At most `window` results are buffered.
inline void ordered_parallel(std::size_t count, unsigned threads, const std::function<std::string(std::size_t)>& job,
                             const std::function<void(const std::string&)>& sink) {
  if (threads <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) sink(job(i));
    return;
  }
  const std::size_t window = static_cast<std::size_t>(threads) * 8;
  std::mutex mu;
  std::condition_variable cv;
  std::map<std::size_t, std::string> ready;
  std::size_t next_job = 0, written = 0;
  std::exception_ptr error;

  auto worker = [&] {
    while (true) {
      std::size_t i;
      {
        std::unique_lock lock(mu);
        cv.wait(lock, [&] { return error || next_job >= count || next_job < written + window; });
        if (error || next_job >= count) return;
        i = next_job++;
      }
      std::string result;
      try {
        result = job(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!error) error = std::current_exception();
        cv.notify_all();
        return;
      }
      std::lock_guard lock(mu);
      ready.emplace(i, std::move(result));
      cv.notify_all();
    }
  };

  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  try {
    while (written < count) {
      std::string chunk;
      {
        std::unique_lock lock(mu);
        cv.wait(lock, [&] { return error || ready.count(written); });
        if (error) break;
        chunk = std::move(ready[written]);
        ready.erase(written);
      }
      sink(chunk);
      std::lock_guard lock(mu);
      ++written;
      cv.notify_all();
    }
  } catch (...) {
    std::lock_guard lock(mu);
    if (!error) error = std::current_exception();
    cv.notify_all();
  }
  for (std::thread& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace detail

/// Recomputes summary.csv and convergence.csv from replications.csv.
inline void write_summaries(const fs::path& dir, const std::map<int, const ScenarioSpec*>& by_id) {
  ReplicationReader reader(dir / "replications.csv");
  Aggregator agg;
  while (auto rec = reader.next()) agg.add(*rec);
  write_file(dir / "summary.csv", summary_csv(agg.rows(), by_id));
  write_file(dir / "convergence.csv", convergence_csv(agg.convergence()));
}

inline int cmd_simulate(const RunConfig& cfg, std::ostream& log, SimulateResult* result = nullptr) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  const std::vector<ScenarioSpec> grid = enumerate_grid(cfg.grid);
  std::vector<ScenarioSpec> selected;
  for (const ScenarioSpec& s : grid)
    if (cfg.filter.matches(s)) selected.push_back(s);
  if (selected.empty()) throw ValidationError("the filter selects no scenarios");
  std::map<int, const ScenarioSpec*> by_id;
  for (const ScenarioSpec& s : selected) by_id[s.id] = &s;

  const fs::path dir(cfg.out_dir);
  ensure_dir(dir);
  const fs::path reps_path = dir / "replications.csv", manifest_path = dir / "manifest";

  std::set<std::pair<int, int>> done;
  if (fs::exists(reps_path)) {
    if (!fs::exists(manifest_path))
      throw ResumeMismatch("'" + reps_path.string() + "' exists without a manifest; refusing to resume");
    const ManifestInfo m = read_manifest(manifest_path);
    const auto it = m.values.find("config_hash");
    if (it == m.values.end() || it->second != cfg.hash())
      throw ResumeMismatch("existing run in '" + dir.string() + "' has config hash " +
                           (it == m.values.end() ? std::string("<none>") : it->second) + ", this run has " +
                           cfg.hash() + " (different seed or settings); use a fresh --out-dir");
    done = recover_progress(reps_path, cfg, by_id);
  } else {
    write_file(reps_path, kReplicationsHeader);
  }

  const unsigned threads = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
  auto manifest = [&](const std::string& status, std::size_t written) {
    std::ostringstream os;
    os << "format_version=1\n";
    os << "status=" << status << '\n';
    os << "config_hash=" << cfg.hash() << '\n';
    os << "master_seed=" << cfg.master_seed() << '\n';
    std::istringstream canon(cfg.canonical_text());
    for (std::string line; std::getline(canon, line);) os << "config." << line << '\n';
    os << grid_audit(grid);
    os << "selected_scenarios=" << selected.size() << '\n';
    os << "replications_expected=" << selected.size() * static_cast<std::size_t>(cfg.reps) << '\n';
    os << "replications_written=" << written << '\n';
    os << "threads=" << threads << '\n';
    os << "wall_seconds="
       << csv::format_double(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()) << '\n';
    write_file(manifest_path, os.str());
  };
  write_file(dir / "scenarios.csv", scenarios_csv(selected));
  write_file(dir / "thresholds.csv", thresholds_csv(cfg.datagen));
  manifest("partial", done.size());

  std::vector<std::pair<const ScenarioSpec*, int>> work;
  for (const ScenarioSpec& s : selected)
    for (int r = 0; r < cfg.reps; ++r)
      if (!done.count({s.id, r})) work.emplace_back(&s, r);
  if (!done.empty()) log << "resuming: " << done.size() << " replications already on disk\n";

  const SimOptions opt = cfg.sim_options();
  {
    std::ofstream out(reps_path, std::ios::binary | std::ios::app);
    if (!out) throw IoError("cannot append to '" + reps_path.string() + "'");
    std::size_t written = 0;
    detail::ordered_parallel(
        work.size(), threads,
        [&](std::size_t i) { return replication_rows(run_replication(*work[i].first, work[i].second, opt)); },
        [&](const std::string& rows) {
          out << rows;
          out.flush();
          if (!out) throw IoError("write failed for '" + reps_path.string() + "'");
          if (++written % 1000 == 0) log << written << "/" << work.size() << " replications\n";
        });
  }

  write_summaries(dir, by_id);
  manifest("complete", done.size() + work.size());
  if (result) *result = {selected.size(), work.size(), done.size()};
  log << "wrote " << work.size() << " replications (" << done.size() << " resumed) for " << selected.size()
      << " scenarios to " << dir.string() << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------
// report

struct SummaryRow {
  int scenario_id = 0;
  std::string dgp, theta;
  int k = 0, p = 0, n = 0, m = 0;
  double beta = 0.0, gamma = NAN;
  AggregateRow agg;
};

inline std::vector<SummaryRow> read_summary(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("missing artifact '" + path.string() + "' (run simulate first)");
  std::string line;
  std::getline(in, line);
  std::map<std::string, std::size_t> col;
  {
    const auto h = csv::split(line, ',');
    for (std::size_t i = 0; i < h.size(); ++i) col[std::string(h[i])] = i;
  }
  for (const char* need : {"scenario_id", "dgp", "k", "theta", "p", "n", "informative_count", "beta", "gamma", "model",
                           "block", "covariate", "category", "informative", "true_value", "reps", "n_converged",
                           "convergence_rate", "mean_estimate", "bias", "rejection_rate", "reported"})
    if (!col.count(need)) throw IoError(path.string() + ": missing column '" + need + "'");
  std::vector<SummaryRow> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = csv::split(line, ',');
    if (f.size() != col.size()) throw IoError(path.string() + ": line " + std::to_string(lineno) + " is malformed");
    auto get = [&](const char* c) { return f[col.at(c)]; };
    try {
      SummaryRow r;
      r.scenario_id = csv::parse_int<int>(get("scenario_id"));
      r.dgp = std::string(get("dgp"));
      r.theta = std::string(get("theta"));
      r.k = csv::parse_int<int>(get("k"));
      r.p = csv::parse_int<int>(get("p"));
      r.n = csv::parse_int<int>(get("n"));
      r.m = csv::parse_int<int>(get("informative_count"));
      r.beta = csv::parse_double(get("beta"));
      r.gamma = csv::parse_double(get("gamma"));
      AggregateRow& a = r.agg;
      a.scenario_id = r.scenario_id;
      a.key = {parse_fitted_model(get("model")), parse_block(get("block")), csv::parse_int<int>(get("covariate")),
               csv::parse_int<int>(get("category"))};
      a.informative = get("informative") == "1";
      a.true_value = csv::parse_double(get("true_value"));
      a.reps = csv::parse_int<int>(get("reps"));
      a.n_converged = csv::parse_int<int>(get("n_converged"));
      a.convergence_rate = csv::parse_double(get("convergence_rate"));
      a.mean_estimate = csv::parse_double(get("mean_estimate"));
      a.bias = csv::parse_double(get("bias"));
      a.rejection_rate = csv::parse_double(get("rejection_rate"));
      a.reported = get("reported") == "1";
      rows.push_back(std::move(r));
    } catch (const std::invalid_argument& e) {
      throw IoError(path.string() + ": line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return rows;
}

namespace detail {

struct GroupKey {
  int scenario_id;
  FittedModel model;
  Block block;
  int category;
  auto tie() const { return std::tie(scenario_id, model, block, category); }
  bool operator<(const GroupKey& o) const { return tie() < o.tie(); }
};

inline csv::Row scenario_prefix(const SummaryRow& r) {
  csv::Row row;
  row.add(r.scenario_id).add(r.dgp).add(r.k).add(r.theta).add(r.p).add(r.n).add(r.m).add(r.beta).add(r.gamma);
  row.add(to_string(r.agg.key.model)).add(to_string(r.agg.key.block)).add(r.agg.key.category);
  return row;
}

inline constexpr const char* kGroupColumns = "scenario_id,dgp,k,theta,p,n,informative_count,beta,gamma,model,block,category";

struct Mean {
  double sum = 0.0;
  int n = 0;
  void add(double x) {
    sum += x;
    ++n;
  }
  double value() const { return n ? sum / n : NAN; }
};

}  // namespace detail

/// Builds alpha_table.csv, power_table.csv, bias_table.csv and report.txt from
/// summary.csv (and manifest when present). Only reported rows are used.
inline int cmd_report(const fs::path& dir, std::ostream& out) {
  const std::vector<SummaryRow> rows = read_summary(dir / "summary.csv");
  using detail::GroupKey;
  using detail::Mean;

  // Parameter groups: (scenario, model, block, CSO category).
  std::map<GroupKey, std::vector<const SummaryRow*>> groups;
  for (const SummaryRow& r : rows)
    if (r.agg.reported) groups[{r.scenario_id, r.agg.key.model, r.agg.key.block, r.agg.key.category}].push_back(&r);

  std::string alpha = std::string(detail::kGroupColumns) + ",n_params,alpha\n";
  std::string power = std::string(detail::kGroupColumns) + ",effect_group,n_params,true_value,rejection_rate,metric\n";
  std::string bias = std::string(detail::kGroupColumns) + ",informative,n_params,true_value,mean_bias\n";
  for (const auto& [key, members] : groups) {
    const SummaryRow& first = *members.front();
    Mean a, pw, truth, b_inf, b_null, t_inf;
    bool all_zero = true;
    const bool null_scenario = first.m == 0 || (first.beta == 0.0 && !(first.gamma != 0.0));
    for (const SummaryRow* r : members) {
      const AggregateRow& g = r->agg;
      if (g.true_value == 0.0) a.add(g.rejection_rate);
      const bool in_effect_group = null_scenario || g.informative;
      if (in_effect_group) {
        pw.add(g.rejection_rate);
        truth.add(g.true_value);
        if (g.true_value != 0.0) all_zero = false;
      }
      if (!std::isnan(g.bias)) {
        if (g.informative) {
          b_inf.add(g.bias);
          t_inf.add(g.true_value);
        } else {
          b_null.add(g.bias);
        }
      }
    }
    if (a.n) alpha += detail::scenario_prefix(first).add(a.n).add(a.value()).str();
    if (pw.n)
      power += detail::scenario_prefix(first)
                   .add(null_scenario ? "all" : "informative")
                   .add(pw.n)
                   .add(truth.value())
                   .add(pw.value())
                   .add(all_zero ? "alpha" : "power")
                   .str();
    if (b_inf.n) bias += detail::scenario_prefix(first).add(true).add(b_inf.n).add(t_inf.value()).add(b_inf.value()).str();
    if (b_null.n) bias += detail::scenario_prefix(first).add(false).add(b_null.n).add(0.0).add(b_null.value()).str();
  }
  write_file(dir / "alpha_table.csv", alpha);
  write_file(dir / "power_table.csv", power);
  write_file(dir / "bias_table.csv", bias);

  // Text summary.
  std::ostringstream rep;
  std::set<int> scenarios, reported_scenarios;
  for (const SummaryRow& r : rows) {
    scenarios.insert(r.scenario_id);
    if (r.agg.reported) reported_scenarios.insert(r.scenario_id);
  }
  rep << "scenarios: " << scenarios.size() << " (" << reported_scenarios.size()
      << " with at least one reported parameter)\n";
  if (fs::exists(dir / "manifest")) {
    const ManifestInfo m = read_manifest(dir / "manifest");
    for (const char* k : {"grid_count", "published_grid_count", "grid_deviation", "status"})
      if (m.values.count(k)) rep << k << ": " << m.values.at(k) << '\n';
  }

  rep << "\nmean alpha-error by model and block (reported null parameters):\n";
  std::map<std::pair<std::string, std::string>, std::pair<Mean, Mean>> by_dgp;  // (dgp, model/block) -> alpha, conv
  std::map<std::string, Mean> conv;
  for (const SummaryRow& r : rows) {
    const std::string mb = std::string(to_string(r.agg.key.model)) + "/" + std::string(to_string(r.agg.key.block));
    conv[std::string(to_string(r.agg.key.model))].add(r.agg.convergence_rate);
    if (r.agg.reported && r.agg.true_value == 0.0) by_dgp[{r.dgp, mb}].first.add(r.agg.rejection_rate);
  }
  for (const auto& [key, v] : by_dgp)
    rep << "  dgp=" << key.first << " " << key.second << ": " << csv::format_double(v.first.value()) << " ("
        << v.first.n << " parameters)\n";

  rep << "\nmean convergence rate by model:\n";
  for (const auto& [model, m] : conv) rep << "  " << model << ": " << csv::format_double(m.value()) << '\n';

  rep << "\nmean bias of informative parameters with known truth, by data-generating model:\n";
  std::map<std::pair<std::string, std::string>, Mean> bias_by;
  for (const SummaryRow& r : rows)
    if (r.agg.reported && r.agg.informative && !std::isnan(r.agg.bias))
      bias_by[{r.dgp, std::string(to_string(r.agg.key.model)) + "/" + std::string(to_string(r.agg.key.block))}].add(
          r.agg.bias);
  for (const auto& [key, m] : bias_by)
    rep << "  dgp=" << key.first << " " << key.second << ": " << csv::format_double(m.value()) << " (" << m.n << ")\n";

  rep << "\ncorrelation of location and dispersion bias across settings:\n";
  for (FittedModel model : {FittedModel::LSH, FittedModel::LSC}) {
    std::vector<AggregateRow> own;
    const std::string self(to_string(model));
    for (const SummaryRow& r : rows)
      if (r.dgp == self) own.push_back(r.agg);
    const auto pairs = bias_pairs(own, model);
    const auto c = correlation_of_biases(pairs);
    rep << "  " << self << " (data from " << self << ", " << pairs.size() << " settings): "
        << (c ? csv::format_double(*c) : std::string("undefined")) << '\n';
  }
  write_file(dir / "report.txt", rep.str());
  out << rep.str();
  return kOk;
}

}  // namespace ordsim::cli
