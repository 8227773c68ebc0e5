// Command implementations behind the lmmix binary. Each cmd_* function is a
// plain testable function taking a RunConfig and output streams and
// returning the process exit code; the binary's main only parses flags.
//
// Exit codes: fit 0 converged / 2 finished without converging / 1 error;
// check 0 interior / 3 boundary / 4 infeasible; everything else 0 / 1.
#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "lmmix/emfit.hpp"
#include "lmmix/gridsel.hpp"
#include "lmmix/io.hpp"
#include "lmmix/rng.hpp"

namespace lmmix {

struct RunConfig {
  std::string family = "normal";
  std::vector<double> sigma = {1.0};  // shared value or one per anchor
  int trials = 0;                     // binomial only

  std::vector<double> mu;  // explicit anchors; empty means derive from range/delta
  double range_lo = 0.0;
  double range_hi = 0.0;
  bool has_range = false;
  double delta = 1e-3;

  EmConfig em;

  std::string data_path;
  std::string model_out;
};

struct SimComponent {
  double weight = 0.0;
  double mean = 0.0;
  double sd = 0.0;
};

struct SimSpec {
  std::vector<SimComponent> components;
  int sample_size = 0;
  std::uint64_t seed = 0;
};

inline BaseFamily make_family(const RunConfig& config) {
  if (config.family == "normal") return BaseFamily::normal(config.sigma.empty() ? 1.0 : config.sigma[0]);
  if (config.family == "binomial") return BaseFamily::binomial(config.trials);
  throw std::invalid_argument("unknown family '" + config.family + "' (normal or binomial)");
}

inline std::vector<double> anchor_means(const RunConfig& config, const BaseFamily& family) {
  if (!config.mu.empty()) {
    for (double m : config.mu) detail::require_mean(family, m);
    return config.mu;
  }
  if (!config.has_range)
    throw std::invalid_argument("no grid: give explicit anchors (--mu) or a range with --range/--delta");
  return build_grid(family, config.range_lo, config.range_hi, config.delta).support_points();
}

// "key<TAB>value" config files share the data-file comment rules. Flags given
// on the command line take precedence; the caller applies this first.
inline void apply_config_file(RunConfig& config, const std::string& path) {
  const auto kv = read_key_value(path);
  auto get = [&](const char* key) -> const std::string* {
    auto it = kv.find(key);
    return it == kv.end() ? nullptr : &it->second;
  };
  if (auto v = get("family")) config.family = *v;
  if (auto v = get("sigma")) config.sigma = split_doubles(*v, path + ": sigma");
  if (auto v = get("trials")) config.trials = std::stoi(*v);
  if (auto v = get("mu")) config.mu = split_doubles(*v, path + ": mu");
  if (auto v = get("range")) {
    const auto ends = split_doubles(*v, path + ": range");
    if (ends.size() != 2) throw std::runtime_error(path + ": range needs two values");
    config.range_lo = ends[0];
    config.range_hi = ends[1];
    config.has_range = true;
  }
  if (auto v = get("delta")) config.delta = detail::parse_double(*v, path + ": delta");
  if (auto v = get("gamma")) config.em.gamma = detail::parse_double(*v, path + ": gamma");
  if (auto v = get("tol")) config.em.tol = detail::parse_double(*v, path + ": tol");
  if (auto v = get("max-iter")) config.em.max_iter = std::stoi(*v);
  if (auto v = get("inner-tol")) config.em.inner.tol = detail::parse_double(*v, path + ": inner-tol");
  if (auto v = get("inner-max-iter")) config.em.inner.max_iter = std::stoi(*v);
  if (auto v = get("data")) config.data_path = *v;
  if (auto v = get("out")) config.model_out = *v;
}

namespace detail {

inline void write_fit_report(std::ostream& out, const FitReport& report) {
  out << "order: " << report.order << "\n";
  out << "converged: " << (report.converged ? "yes" : "no") << " (iterations: "
      << report.iterations << ")\n";
  out << "loglik: " << format_double(report.loglik_trace.back()) << "\n";
  out << "components:\n";
  out << "  idx\torigin\tmu\trho\tlambda\n";
  for (std::size_t l = 0; l < report.model.components.size(); ++l) {
    const Component& c = report.model.components[l];
    out << "  " << l << "\t" << c.origin_index << "\t" << format_double(c.mu) << "\t"
        << format_double(c.rho) << "\t"
        << join_doubles({c.lambda[0], c.lambda[1], c.lambda[2], c.lambda[3]}) << "\n";
  }
  out << "loglik trace:";
  for (double v : report.loglik_trace) out << " " << format_double(v);
  out << "\n";
  if (report.pruning_history.empty()) {
    out << "pruning history: none\n";
  } else {
    out << "pruning history:\n";
    for (const PruneEvent& e : report.pruning_history) {
      out << "  iteration " << e.iteration << ": removed origin";
      for (int idx : e.origin_indices) out << " " << idx;
      out << "\n";
    }
  }
}

}  // namespace detail

// Fit a mixture of LMMs to a data file. Writes the human-readable report to
// `report_out` and, when config.model_out is set, the key-value model file.
inline int cmd_fit(const RunConfig& config, std::ostream& report_out, std::ostream& err) {
  try {
    const std::vector<double> data = read_observations(config.data_path);
    if (data.empty()) {
      err << "error: no observations in " << config.data_path << "\n";
      return 1;
    }
    const BaseFamily family = make_family(config);
    const std::vector<double> mus = anchor_means(config, family);
    const MixtureModel init = family.is_discrete()
                                  ? initial_mixture(family, mus)
                                  : initial_mixture(family, mus, config.sigma);
    const FitReport report = fit(data, init, config.em);
    detail::write_fit_report(report_out, report);
    if (!config.model_out.empty())
      save_model_file(config.model_out, report.model, report.loglik_trace.back(),
                      report.converged, report.iterations);
    return report.converged ? 0 : 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

// Tabulate a fitted model: x, h(x), then one column per component density.
inline int cmd_density(const std::string& model_path, double lo, double hi, int points,
                       std::ostream& out, std::ostream& err) {
  try {
    if (!(lo <= hi)) throw std::invalid_argument("empty x-range");
    const LoadedModel loaded = load_model_file(model_path);
    const MixtureDensity h(loaded.model);
    std::vector<LmmDensity> g;
    for (const Component& c : loaded.model.components) g.emplace_back(Lmm(c.family, c.mu, c.lambda));

    std::vector<double> xs;
    if (loaded.model.components.front().family.is_discrete()) {
      const int n = loaded.model.components.front().family.trials();
      if (lo < 0.0 || hi > double(n))
        throw std::domain_error("x-range outside the binomial support {0,...," +
                                std::to_string(n) + "}");
      for (int x = int(std::ceil(lo)); x <= int(std::floor(hi)); ++x) xs.push_back(double(x));
    } else {
      if (points < 2) throw std::invalid_argument("need at least 2 points");
      for (int i = 0; i < points; ++i)
        xs.push_back(lo + (hi - lo) * double(i) / double(points - 1));
    }

    out << "x\th";
    for (std::size_t l = 0; l < g.size(); ++l) out << "\tg" << l;
    out << "\n";
    for (double x : xs) {
      out << format_double(x) << "\t" << format_double(h(x));
      for (const auto& gl : g) out << "\t" << format_double(gl(x));
      out << "\n";
    }
    return 0;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

// Design a grid for a mean range and tolerance; key-value output.
inline int cmd_grid(const RunConfig& config, std::ostream& out, std::ostream& err) {
  try {
    if (!config.has_range) throw std::invalid_argument("grid needs --range");
    const BaseFamily family = make_family(config);
    const GridSpec grid = build_grid(family, config.range_lo, config.range_hi, config.delta);
    out << "family\t" << config.family << "\n";
    if (family.is_discrete())
      out << "n\t" << family.trials() << "\n";
    else
      out << "sigma\t" << format_double(family.sigma0()) << "\n";
    out << "delta\t" << format_double(config.delta) << "\n";
    out << "count\t" << grid.intervals.size() << "\n";
    out << "mu\t" << join_doubles(grid.support_points()) << "\n";
    for (std::size_t i = 0; i < grid.intervals.size(); ++i) {
      const GridInterval& iv = grid.intervals[i];
      out << "interval_" << i << "\t"
          << join_doubles({iv.lo, iv.hi, iv.mu, iv.epsilon, iv.m_bound}) << "\n";
    }
    return 0;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

// Feasibility report for one lambda; exit code encodes the status.
inline int cmd_check(const RunConfig& config, double mu0, const Lambda& lambda, std::ostream& out,
                     std::ostream& err) {
  try {
    const BaseFamily family = make_family(config);
    const FeasibilityReport rep = check_feasibility(family, mu0, lambda);
    out << "status\t" << to_string(rep.status) << "\n";
    out << "min_value\t" << format_double(rep.min_value) << "\n";
    out << "argmin\t" << (rep.argmin ? format_double(*rep.argmin) : std::string("none")) << "\n";
    out << "margin\t" << format_double(rep.margin) << "\n";
    switch (rep.status) {
      case FeasibilityStatus::kInterior: return 0;
      case FeasibilityStatus::kBoundary: return 3;
      case FeasibilityStatus::kInfeasible: return 4;
    }
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

inline std::vector<double> simulate_sample(const SimSpec& spec) {
  double total = 0.0;
  for (const SimComponent& c : spec.components) {
    if (!(c.sd > 0.0)) throw std::invalid_argument("simulate: sd must be positive");
    total += c.weight;
  }
  if (std::fabs(total - 1.0) > 1e-9)
    throw std::invalid_argument("simulate: weights sum to " + format_double(total) +
                                ", expected 1");
  if (spec.sample_size <= 0) throw std::invalid_argument("simulate: sample size must be positive");

  Rng rng(spec.seed);
  std::vector<double> sample;
  sample.reserve(std::size_t(spec.sample_size));
  for (int i = 0; i < spec.sample_size; ++i) {
    const double u = rng.next_uniform();
    double acc = 0.0;
    std::size_t pick = spec.components.size() - 1;
    for (std::size_t k = 0; k < spec.components.size(); ++k) {
      acc += spec.components[k].weight;
      if (u < acc) {
        pick = k;
        break;
      }
    }
    sample.push_back(spec.components[pick].mean + spec.components[pick].sd * rng.next_normal());
  }
  return sample;
}

// Draw a sample from a finite normal mixture, optionally dump it, fit the
// LMM mixture, and emit sorted-sample / fitted-quantile pairs for QQ
// plotting. Everything is keyed by the seed; identical inputs give
// byte-identical output.
inline int cmd_simulate(const SimSpec& spec, const RunConfig& config,
                        const std::string& samples_out, std::ostream& out, std::ostream& err) {
  try {
    std::vector<double> sample = simulate_sample(spec);
    if (!samples_out.empty()) {
      std::ofstream f(samples_out);
      if (!f) throw std::runtime_error("cannot write samples file: " + samples_out);
      for (double x : sample) f << format_double(x) << "\n";
    }

    const bool can_fit = !config.mu.empty() || config.has_range;
    if (!can_fit) {
      out << "n\t" << sample.size() << "\n";
      out << "order\tnot fitted (no grid given)\n";
      return 0;
    }

    const BaseFamily family = make_family(config);
    const std::vector<double> mus = anchor_means(config, family);
    const MixtureModel init = initial_mixture(family, mus, config.sigma);
    const FitReport report = fit(sample, init, config.em);
    if (!config.model_out.empty())
      save_model_file(config.model_out, report.model, report.loglik_trace.back(),
                      report.converged, report.iterations);

    out << "n\t" << sample.size() << "\n";
    out << "order\t" << report.order << "\n";
    out << "converged\t" << (report.converged ? 1 : 0) << "\n";
    out << "loglik\t" << format_double(report.loglik_trace.back()) << "\n";

    // fitted quantiles at p_i = (i - 1/2)/n against the sorted sample
    std::sort(sample.begin(), sample.end());
    const MixtureDensity h(report.model);
    double blo = report.model.components.front().mu, bhi = blo, smax = 0.0;
    for (const Component& c : report.model.components) {
      blo = std::min(blo, c.mu);
      bhi = std::max(bhi, c.mu);
      smax = std::max(smax, c.family.sigma0());
    }
    blo -= 15.0 * smax;
    bhi += 15.0 * smax;
    out << "qq\tsample\tfitted\n";
    for (std::size_t i = 0; i < sample.size(); ++i) {
      const double p = (double(i) + 0.5) / double(sample.size());
      double lo = blo, hi = bhi;
      for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (h.cdf(mid) < p ? lo : hi) = mid;
      }
      out << "qq\t" << format_double(sample[i]) << "\t" << format_double(0.5 * (lo + hi)) << "\n";
    }
    return report.converged ? 0 : 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace lmmix
