// Fitting discrete mixtures of LMMs over a fixed grid of anchor means:
// responsibilities, proportion updates, gamma-threshold pruning, hard
// classification, and per-component constrained MLE by projected gradient
// ascent. The outer loop follows steps 1-3 literally: pruning restarts
// step 1 with lambda unchanged; classification is hard with ties broken
// toward the smallest index; components left with an empty class are pruned.
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "lmmix/expfam.hpp"
#include "lmmix/lmm.hpp"

namespace lmmix {

class FitFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An observation with zero density under every component has no valid
// responsibility row; the fit cannot proceed.
class DegenerateObservation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Component {
  double rho = 0.0;
  double mu = 0.0;
  BaseFamily family;  // per-component sigma allowed for the normal family
  Lambda lambda{};
  int origin_index = 0;  // position in the initial grid, stable across pruning
};

struct MixtureModel {
  std::vector<Component> components;

  std::size_t order() const { return components.size(); }

  void validate() const {
    if (components.empty()) throw std::invalid_argument("MixtureModel: no components");
    double total = 0.0;
    for (std::size_t l = 0; l < components.size(); ++l) {
      const Component& c = components[l];
      detail::require_mean(c.family, c.mu);
      if (!(c.rho >= 0.0)) throw std::invalid_argument("MixtureModel: negative proportion");
      total += c.rho;
      if (l > 0 && !(components[l - 1].mu < c.mu))
        throw std::invalid_argument("MixtureModel: component means must be strictly increasing");
    }
    if (std::fabs(total - 1.0) > 1e-12)
      throw std::invalid_argument("MixtureModel: proportions sum to " + std::to_string(total));
  }
};

// Uniform proportions, lambda = 0, one component per anchor mean.
// sigmas: one per anchor, or a single shared value (ignored for binomial).
inline MixtureModel initial_mixture(const BaseFamily& family, const std::vector<double>& mus,
                                    const std::vector<double>& sigmas = {}) {
  if (mus.empty()) throw std::invalid_argument("initial_mixture: no anchor means");
  for (std::size_t l = 1; l < mus.size(); ++l)
    if (!(mus[l - 1] < mus[l]))
      throw std::invalid_argument("initial_mixture: anchor means must be strictly increasing");
  if (family.kind() == FamilyKind::kNormalFixedVar && sigmas.size() > 1 &&
      sigmas.size() != mus.size())
    throw std::invalid_argument("initial_mixture: need one sigma, or one per anchor");

  MixtureModel model;
  for (std::size_t l = 0; l < mus.size(); ++l) {
    Component c{1.0 / double(mus.size()), mus[l], family, {}, int(l)};
    if (family.kind() == FamilyKind::kNormalFixedVar && !sigmas.empty())
      c.family = BaseFamily::normal(sigmas.size() == 1 ? sigmas[0] : sigmas[l]);
    detail::require_mean(c.family, c.mu);
    model.components.push_back(c);
  }
  model.validate();
  return model;
}

using Matrix = std::vector<std::vector<double>>;

// w[i][l] proportional to rho_l * g_l(x_i); rows sum to 1.
inline Matrix responsibilities(const MixtureModel& model, const std::vector<double>& data) {
  model.validate();
  const std::size_t L = model.components.size();
  std::vector<LmmDensity> g;
  g.reserve(L);
  for (const Component& c : model.components) g.emplace_back(Lmm(c.family, c.mu, c.lambda));

  Matrix w(data.size(), std::vector<double>(L, 0.0));
  for (std::size_t i = 0; i < data.size(); ++i) {
    double denom = 0.0;
    for (std::size_t l = 0; l < L; ++l) {
      w[i][l] = model.components[l].rho * g[l](data[i]);
      denom += w[i][l];
    }
    if (!(denom > 0.0))
      throw DegenerateObservation("observation " + std::to_string(i) + " (x = " +
                                  std::to_string(data[i]) +
                                  ") has zero density under every component");
    for (std::size_t l = 0; l < L; ++l) w[i][l] /= denom;
  }
  return w;
}

inline std::vector<double> update_proportions(const Matrix& w) {
  if (w.empty()) throw std::invalid_argument("update_proportions: no observations");
  const std::size_t L = w.front().size();
  std::vector<double> rho(L, 0.0);
  for (const auto& row : w)
    for (std::size_t l = 0; l < L; ++l) rho[l] += row[l];
  for (double& r : rho) r /= double(w.size());
  return rho;
}

// Drops every component with rho_l < gamma and renormalizes the survivors.
// Returns the surviving model and the origin indices of what was removed.
inline std::pair<MixtureModel, std::vector<int>> prune(const MixtureModel& model,
                                                       const std::vector<double>& rho,
                                                       double gamma) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("prune: gamma must be in (0,1)");
  if (rho.size() != model.components.size())
    throw std::invalid_argument("prune: rho size mismatch");

  MixtureModel out;
  std::vector<int> removed;
  double total = 0.0;
  for (std::size_t l = 0; l < rho.size(); ++l) {
    if (rho[l] < gamma) {
      removed.push_back(model.components[l].origin_index);
    } else {
      Component c = model.components[l];
      c.rho = rho[l];
      total += rho[l];
      out.components.push_back(c);
    }
  }
  if (out.components.empty())
    throw FitFailure("prune: every component fell below gamma = " + std::to_string(gamma) +
                     "; choose a smaller gamma");
  for (Component& c : out.components) c.rho /= total;
  return {std::move(out), std::move(removed)};
}

// Hard assignment: argmax responsibility, ties to the smallest index.
inline std::vector<int> classify(const Matrix& w) {
  std::vector<int> assign(w.size(), 0);
  for (std::size_t i = 0; i < w.size(); ++i) {
    int best = 0;
    for (std::size_t l = 1; l < w[i].size(); ++l)
      if (w[i][l] > w[i][best]) best = int(l);
    assign[i] = best;
  }
  return assign;
}

struct InnerConfig {
  double tol = 1e-9;
  int max_iter = 200;
};

struct EmConfig {
  double gamma = 0.15;
  double tol = 1e-8;
  int max_iter = 500;
  InnerConfig inner;
  long long seed = 0;  // reserved; the fit path is deterministic
};

namespace detail {

inline double component_loglik(const BaseFamily& family, double mu,
                               const std::vector<double>& data, const Lambda& lambda) {
  const LmmDensity g(Lmm(family, mu, lambda));
  double ll = 0.0;
  for (double x : data) {
    const double v = g(x);
    if (!(v > 0.0))
      return -std::numeric_limits<double>::infinity();
    ll += std::log(v);
  }
  return ll;
}

}  // namespace detail

// Maximizes sum_i log g(x_i; mu, lambda) over the closure of the feasible
// region. The objective is concave (log of an affine function of lambda,
// summed), so projected gradient ascent with an Armijo backtracking line
// search converges; every step is capped at 0.99 of the feasible extent in
// the search direction, keeping all iterates strictly interior.
inline Lambda component_mle(const BaseFamily& family, double mu, const std::vector<double>& data,
                            Lambda lambda_init, const InnerConfig& inner = {}) {
  if (data.empty()) throw std::invalid_argument("component_mle: empty data subset");
  detail::require_mean(family, mu);

  FeasibilityReport feas = check_feasibility(family, mu, lambda_init);
  if (feas.status == FeasibilityStatus::kInfeasible)
    throw std::invalid_argument("component_mle: lambda_init is infeasible");
  if (feas.status == FeasibilityStatus::kBoundary) {
    // the segment from the origin to lambda_init is interior except its tip
    for (double& l : lambda_init) l *= 1.0 - 1e-6;
  }

  std::array<QPolynomial, kOrder> q;
  for (int j = 1; j <= kOrder; ++j) q[j - 1] = q_polynomial(family, mu, j);

  Lambda lambda = lambda_init;
  double ll = detail::component_loglik(family, mu, data, lambda);
  if (!std::isfinite(ll))
    throw std::invalid_argument("component_mle: non-finite log-likelihood at lambda_init");

  constexpr double kArmijo = 1e-4;
  for (int iter = 0; iter < inner.max_iter; ++iter) {
    // gradient of sum log(1 + <lambda, q(x_i)>) is sum q_j(x_i)/factor(x_i)
    Lambda grad{};
    const LmmDensity g(Lmm(family, mu, lambda));
    for (double x : data) {
      const double f = g.factor(x);
      if (!(f > 0.0)) throw FitFailure("component_mle: interior iterate lost positivity");
      for (int j = 0; j < kOrder; ++j) grad[j] += q[j](x) / f;
    }
    double gnorm = 0.0;
    for (double gj : grad) gnorm += gj * gj;
    gnorm = std::sqrt(gnorm);
    if (gnorm < inner.tol) break;

    const double extent = max_feasible_step(family, mu, lambda, grad);
    double step = std::isfinite(extent) ? 0.99 * extent : 1.0 / gnorm;
    if (!(step > 0.0)) break;

    bool accepted = false;
    double trial_ll = 0.0;
    Lambda candidate{};
    while (step * gnorm > 1e-16) {
      for (int j = 0; j < kOrder; ++j) candidate[j] = lambda[j] + step * grad[j];
      const double trial = detail::component_loglik(family, mu, data, candidate);
      if (std::isfinite(trial) && trial >= ll + kArmijo * step * gnorm * gnorm) {
        accepted = true;
        trial_ll = trial;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;  // no ascent found along the gradient; at the constrained optimum
    const double rel = std::fabs(trial_ll - ll) / std::max(1.0, std::fabs(ll));
    lambda = candidate;
    ll = trial_ll;
    if (rel < inner.tol) break;
  }
  return lambda;
}

// h(x) = sum_l rho_l g_l(x); precomputes the component evaluators.
class MixtureDensity {
 public:
  explicit MixtureDensity(const MixtureModel& model) : model_(model) {
    model_.validate();
    for (const Component& c : model_.components) g_.emplace_back(Lmm(c.family, c.mu, c.lambda));
  }

  double operator()(double x) const {
    double h = 0.0;
    for (std::size_t l = 0; l < g_.size(); ++l) h += model_.components[l].rho * g_[l](x);
    return h;
  }

  // normal-family models only
  double cdf(double t) const {
    double h = 0.0;
    for (std::size_t l = 0; l < g_.size(); ++l)
      h += model_.components[l].rho * lmm_cdf(g_[l].model(), t);
    return h;
  }

  const MixtureModel& model() const { return model_; }

 private:
  MixtureModel model_;
  std::vector<LmmDensity> g_;
};

inline double loglik(const MixtureModel& model, const std::vector<double>& data) {
  model.validate();
  std::vector<LmmDensity> g;
  g.reserve(model.components.size());
  for (const Component& c : model.components) g.emplace_back(Lmm(c.family, c.mu, c.lambda));
  double ll = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    double h = 0.0;
    for (std::size_t l = 0; l < g.size(); ++l) h += model.components[l].rho * g[l](data[i]);
    if (!(h > 0.0))
      throw DegenerateObservation("observation " + std::to_string(i) + " (x = " +
                                  std::to_string(data[i]) +
                                  ") has zero density under every component");
    ll += std::log(h);
  }
  return ll;
}

struct PruneEvent {
  int iteration = 0;
  std::vector<int> origin_indices;
};

struct FitReport {
  MixtureModel model;
  std::size_t order = 0;
  std::vector<double> loglik_trace;
  std::vector<PruneEvent> pruning_history;
  std::vector<int> assignments;
  bool converged = false;
  int iterations = 0;
};

// Outer loop. Per iteration: step 1 computes responsibilities and updates
// proportions; step 2 prunes all components under gamma and restarts step 1
// (lambda untouched) until none fall below; step 3 hard-classifies and runs
// the constrained MLE per class, pruning any component with an empty class.
// Converged when the relative log-likelihood change drops below tol in an
// iteration with no pruning.
inline FitReport fit(const std::vector<double>& data, MixtureModel model,
                     const EmConfig& config = {}) {
  if (data.empty()) throw std::invalid_argument("fit: no observations");
  if (!(config.gamma > 0.0 && config.gamma < 1.0))
    throw std::invalid_argument("fit: gamma must be in (0,1)");
  model.validate();

  FitReport report;
  report.loglik_trace.push_back(loglik(model, data));

  double prev_ll = report.loglik_trace.back();
  for (int iter = 1; iter <= config.max_iter; ++iter) {
    report.iterations = iter;
    bool pruned_this_iter = false;

    // step 1 (+ step 2 restarts)
    Matrix w = responsibilities(model, data);
    std::vector<double> rho = update_proportions(w);
    while (std::any_of(rho.begin(), rho.end(), [&](double r) { return r < config.gamma; })) {
      auto [survivors, removed] = prune(model, rho, config.gamma);
      model = std::move(survivors);
      report.pruning_history.push_back({iter, std::move(removed)});
      pruned_this_iter = true;
      w = responsibilities(model, data);
      rho = update_proportions(w);
    }
    for (std::size_t l = 0; l < model.components.size(); ++l) model.components[l].rho = rho[l];

    // step 3: classify, then per-class constrained MLE
    report.assignments = classify(w);
    std::vector<std::vector<double>> classes(model.components.size());
    for (std::size_t i = 0; i < data.size(); ++i)
      classes[std::size_t(report.assignments[i])].push_back(data[i]);

    std::vector<int> empty_removed;
    MixtureModel updated;
    for (std::size_t l = 0; l < model.components.size(); ++l) {
      if (classes[l].empty()) {
        empty_removed.push_back(model.components[l].origin_index);
        continue;
      }
      Component c = model.components[l];
      c.lambda = component_mle(c.family, c.mu, classes[l], c.lambda, config.inner);
      updated.components.push_back(c);
    }
    if (updated.components.empty())
      throw FitFailure("fit: every component lost its class; choose a smaller gamma");
    if (!empty_removed.empty()) {
      double total = 0.0;
      for (const Component& c : updated.components) total += c.rho;
      for (Component& c : updated.components) c.rho /= total;
      report.pruning_history.push_back({iter, std::move(empty_removed)});
      pruned_this_iter = true;
      // assignments refer to pruned components; recompute for the survivors
      report.assignments = classify(responsibilities(updated, data));
    }
    model = std::move(updated);

    const double ll = loglik(model, data);
    report.loglik_trace.push_back(ll);
    const double rel = std::fabs(ll - prev_ll) / std::max(1.0, std::fabs(prev_ll));
    prev_ll = ll;
    if (!pruned_this_iter && rel < config.tol) {
      report.converged = true;
      break;
    }
  }

  report.model = std::move(model);
  report.order = report.model.order();
  return report;
}

}  // namespace lmmix
