// lmmix: batch front end for fitting mixtures of local mixture models.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "lmmix/cli.hpp"

namespace {

// --config is applied before flag parsing so explicit flags win.
std::string find_config_path(int argc, char** argv) {
  for (int i = 1; i < argc - 1; ++i)
    if (std::string(argv[i]) == "--config") return argv[i + 1];
  return "";
}

void add_family_options(CLI::App* cmd, lmmix::RunConfig& config) {
  cmd->add_option("--family", config.family, "normal or binomial");
  cmd->add_option("--sigma", config.sigma,
                  "normal: shared sigma, or one per anchor (comma separated)")
      ->delimiter(',');
  cmd->add_option("--trials", config.trials, "binomial: number of trials n");
}

void add_grid_options(CLI::App* cmd, lmmix::RunConfig& config, std::vector<double>& range) {
  cmd->add_option("--mu", config.mu, "explicit anchor means (comma separated)")->delimiter(',');
  cmd->add_option("--range", range, "mean range lo,hi for automatic grid design")
      ->delimiter(',')
      ->expected(2);
  cmd->add_option("--delta", config.delta, "density approximation tolerance for the grid");
}

void add_em_options(CLI::App* cmd, lmmix::RunConfig& config) {
  cmd->add_option("--gamma", config.em.gamma, "pruning threshold in (0,1)");
  cmd->add_option("--tol", config.em.tol, "outer relative log-likelihood tolerance");
  cmd->add_option("--max-iter", config.em.max_iter, "outer iteration cap");
  cmd->add_option("--inner-tol", config.em.inner.tol, "per-component solver tolerance");
  cmd->add_option("--inner-max-iter", config.em.inner.max_iter, "per-component iteration cap");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mixtures of local mixture models over a fixed grid"};
  app.require_subcommand(1);
  app.fallthrough();  // --config may appear after the subcommand name

  lmmix::RunConfig config;
  const std::string config_path = find_config_path(argc, argv);
  if (!config_path.empty()) {
    try {
      lmmix::apply_config_file(config, config_path);
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 1;
    }
  }
  std::string config_flag;
  app.add_option("--config", config_flag, "key<TAB>value config file (flags override)");

  std::vector<double> range;
  std::string report_path, model_path, samples_out;
  double lo = 0.0, hi = 0.0;
  int points = 201;
  double mu0 = 0.0;
  std::vector<double> lambda_in;
  lmmix::SimSpec spec;
  std::vector<std::string> component_specs;

  CLI::App* fit = app.add_subcommand("fit", "fit a mixture of LMMs to a data file");
  fit->add_option("--data", config.data_path, "observations, one per line");
  fit->add_option("--out", config.model_out, "write the fitted model (key-value)");
  fit->add_option("--report", report_path, "write the report here instead of stdout");
  add_family_options(fit, config);
  add_grid_options(fit, config, range);
  add_em_options(fit, config);

  CLI::App* density = app.add_subcommand("density", "tabulate a fitted model");
  density->add_option("--model", model_path, "model file from fit")->required();
  density->add_option("--lo", lo, "left end of the x-range")->required();
  density->add_option("--hi", hi, "right end of the x-range")->required();
  density->add_option("--points", points, "rows for continuous families");
  density->add_option("--out", report_path, "write the table here instead of stdout");

  CLI::App* grid = app.add_subcommand("grid", "design a grid for a mean range");
  add_family_options(grid, config);
  grid->add_option("--range", range, "mean range lo,hi")->delimiter(',')->expected(2);
  grid->add_option("--delta", config.delta, "density approximation tolerance");
  grid->add_option("--out", report_path, "write the grid here instead of stdout");

  CLI::App* simulate = app.add_subcommand("simulate", "sample a normal mixture and fit it");
  simulate->add_option("--components", component_specs,
                       "weight:mean:sd triples (comma separated)")
      ->delimiter(',')
      ->required();
  simulate->add_option("--n", spec.sample_size, "sample size")->required();
  simulate->add_option("--seed", spec.seed, "RNG seed");
  simulate->add_option("--samples-out", samples_out, "dump the raw sample, one value per line");
  simulate->add_option("--out", config.model_out, "write the fitted model (key-value)");
  simulate->add_option("--report", report_path, "write the report here instead of stdout");
  add_family_options(simulate, config);
  add_grid_options(simulate, config, range);
  add_em_options(simulate, config);

  CLI::App* check = app.add_subcommand("check", "classify a lambda against the feasible region");
  check->add_option("--mu0", mu0, "anchor mean")->required();
  check->add_option("--lambda", lambda_in, "four coefficients (comma separated)")
      ->delimiter(',')
      ->expected(4)
      ->required();
  add_family_options(check, config);

  CLI11_PARSE(app, argc, argv);

  if (range.size() == 2) {
    config.range_lo = range[0];
    config.range_hi = range[1];
    config.has_range = true;
  }

  std::ofstream report_file;
  std::ostream* out = &std::cout;
  if (!report_path.empty()) {
    report_file.open(report_path);
    if (!report_file) {
      std::cerr << "error: cannot write " << report_path << "\n";
      return 1;
    }
    out = &report_file;
  }

  if (fit->parsed()) return lmmix::cmd_fit(config, *out, std::cerr);
  if (density->parsed()) return lmmix::cmd_density(model_path, lo, hi, points, *out, std::cerr);
  if (grid->parsed()) return lmmix::cmd_grid(config, *out, std::cerr);
  if (check->parsed()) {
    lmmix::Lambda lam{lambda_in[0], lambda_in[1], lambda_in[2], lambda_in[3]};
    return lmmix::cmd_check(config, mu0, lam, *out, std::cerr);
  }
  if (simulate->parsed()) {
    for (const std::string& s : component_specs) {
      lmmix::SimComponent c;
      if (std::sscanf(s.c_str(), "%lf:%lf:%lf", &c.weight, &c.mean, &c.sd) != 3) {
        std::cerr << "error: bad component spec '" << s << "', expected weight:mean:sd\n";
        return 1;
      }
      spec.components.push_back(c);
    }
    return lmmix::cmd_simulate(spec, config, samples_out, *out, std::cerr);
  }
  return 1;
}
