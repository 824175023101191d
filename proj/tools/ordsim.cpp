#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ordsim/commands.hpp"

namespace {

using namespace ordsim::cli;

// Settings given on the command line; applied after the config file.
struct Overrides {
  std::string config;
  std::vector<std::pair<std::string, std::string>> values;
  std::string reps, seed, alpha, threads, out_dir, filter, models;

  void add_to(CLI::App* app, bool run_options) {
    app->add_option("--config", config, "key = value configuration file")->check(CLI::ExistingFile);
    app->add_option("--seed", seed, "master seed");
    app->add_option("--out-dir", out_dir, "output directory");
    app->add_option("--filter", filter, "scenario filter, e.g. dgp=PO|LSH,n=250,k=3");
    if (!run_options) return;
    app->add_option("--reps", reps, "replications per scenario");
    app->add_option("--alpha", alpha, "nominal significance level");
    app->add_option("--threads", threads, "worker threads (0 = all cores)");
    app->add_option("--models", models, "comma-separated subset of LM,PO,CSO,LSH,LSC");
  }

  RunConfig build() const {
    RunConfig cfg;
    if (!config.empty()) load_config_file(cfg, config);
    auto set = [&](const char* key, const std::string& v) {
      if (!v.empty()) apply_setting(cfg, key, v);
    };
    set("reps", reps);
    set("seed", seed);
    set("alpha", alpha);
    set("threads", threads);
    set("out_dir", out_dir);
    set("filter", filter);
    set("models", models);
    return cfg;
  }
};

int run(int argc, char** argv) {
  CLI::App app{"Simulation study of cumulative logit models for ordinal outcomes"};
  app.require_subcommand(1);

  Overrides sim_opts, grid_opts;

  auto* fit = app.add_subcommand("fit", "fit models to a CSV/TSV file with an integer 'y' column");
  std::string input, fit_models = "PO";
  std::optional<int> k;
  double fit_alpha = 0.05;
  std::string monotone = "thresholds";
  fit->add_option("input", input, "data file")->required()->check(CLI::ExistingFile);
  fit->add_option("--k", k, "number of outcome categories (default: largest y)");
  fit->add_option("--models", fit_models, "comma-separated subset of LM,PO,CSO,LSH,LSC");
  fit->add_option("--alpha", fit_alpha, "significance level for the Wald tests");
  fit->add_option("--monotone-check", monotone, "thresholds, data or off");

  auto* simulate = app.add_subcommand("simulate", "run the Monte Carlo study");
  sim_opts.add_to(simulate, true);

  auto* report = app.add_subcommand("report", "build summary tables from a finished run");
  std::string report_dir = "ordsim-out";
  report->add_option("dir", report_dir, "run directory");
  report->add_option("--out-dir", report_dir, "run directory");

  auto* grid = app.add_subcommand("grid", "print the scenario grid size");
  bool write_grid = false;
  grid_opts.add_to(grid, false);
  grid->add_flag("--write", write_grid, "also write scenarios.csv and thresholds.csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kValidation;
  }

  if (*fit) {
    ordsim::FitOptions fo;
    try {
      fo.monotone_check = ordsim::parse_monotone_check(monotone);
    } catch (const std::invalid_argument& e) {
      throw ValidationError(e.what());
    }
    std::vector<ordsim::FittedModel> models;
    try {
      models = detail::parse_models(fit_models);
    } catch (const std::invalid_argument& e) {
      throw ValidationError(e.what());
    }
    return cmd_fit(input, models, k, fit_alpha, fo, std::cout);
  }
  if (*simulate) return cmd_simulate(sim_opts.build(), std::cerr);
  if (*report) return cmd_report(report_dir, std::cout);
  if (*grid) return cmd_grid(grid_opts.build(), std::cout, write_grid);
  return kValidation;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const ResumeMismatch& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kResumeMismatch;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIo;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIo;
  }
}
