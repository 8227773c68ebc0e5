// Grid selection for mixtures of LMMs: invert the Taylor-remainder bound
//   (eps1 + eps2) * eps^5 * M / 120 <= delta,   eps = max(eps1, eps2),
// to get the interval half-width around each anchor, cover the requested
// mean range greedily, and verify the local-approximation guarantee on
// concrete mixing distributions.
#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "lmmix/expfam.hpp"
#include "lmmix/lmm.hpp"

namespace lmmix {

struct ToleranceBudget {
  double delta = 0.0;
  double epsilon1 = 0.0;
  double epsilon2 = 0.0;

  double epsilon() const { return std::max(epsilon1, epsilon2); }
};

struct GridInterval {
  double lo = 0.0;
  double hi = 0.0;
  double mu = 0.0;       // anchor, inside [lo, hi]
  double epsilon = 0.0;  // half-width used for this interval
  double m_bound = 0.0;  // fifth-derivative bound on this interval
};

struct GridSpec {
  BaseFamily family;
  double delta = 0.0;
  std::vector<GridInterval> intervals;  // ordered, interiors disjoint, union covers the range

  std::vector<double> support_points() const {
    std::vector<double> mus;
    mus.reserve(intervals.size());
    for (const auto& iv : intervals) mus.push_back(iv.mu);
    return mus;
  }
};

// Uniform bound on |d^5 f/dm^5| over means m in [lo, hi].
// Normal: independent of m (translation family). Binomial: the envelope
// max(|L|, U) times the mass at the mode, maximized over a 1024-point m-grid
// (the envelope is smooth in m, so the grid maximum is adequate and keeps
// the computation deterministic).
inline double fifth_derivative_bound(const BaseFamily& family, double lo, double hi) {
  if (!(lo <= hi)) throw std::invalid_argument("fifth_derivative_bound: empty region");
  if (family.kind() == FamilyKind::kNormalFixedVar)
    return normal_fifth_derivative_bound(family.sigma0());
  const int n = family.trials();
  if (!(lo > 0.0) || !(hi < double(n)))
    throw std::domain_error("fifth_derivative_bound: binomial mean region must stay strictly inside (0,n)");
  const int kGrid = 1024;
  double best = 0.0;
  for (int i = 0; i < kGrid; ++i) {
    const double m = (kGrid == 1 || lo == hi)
                         ? lo
                         : lo + (hi - lo) * double(i) / double(kGrid - 1);
    const RemainderEnvelope env = binomial_remainder_envelope(n, m);
    const double q5 = std::max(std::fabs(env.lower), env.upper);
    best = std::max(best, q5 * density(family, double(env.x_star), m));
  }
  return best;
}

// Largest symmetric half-width eps with 2*eps^6*M/120 <= delta, i.e.
// eps = (60*delta/M)^(1/6), with M the fifth-derivative bound on the region.
inline double epsilon_for_delta(const BaseFamily& family, double lo, double hi, double delta) {
  if (!(delta > 0.0)) throw std::invalid_argument("epsilon_for_delta: delta must be positive");
  const double m_bound = fifth_derivative_bound(family, lo, hi);
  return std::pow(60.0 * delta / m_bound, 1.0 / 6.0);
}

// Greedy left-to-right cover of [a, b] with intervals [mu-eps, mu+eps].
// Normal: eps is uniform, L = ceil((b-a)/(2 eps)) intervals. Binomial: M
// depends on the interval, so each interval's eps is recomputed once from
// the local M of a tentative interval built with the range-wide eps.
// A width-zero range yields a single point grid.
inline GridSpec build_grid(const BaseFamily& family, double a, double b, double delta) {
  if (!(a <= b)) throw std::invalid_argument("build_grid: need a <= b");
  if (!family.mean_valid(a) || !family.mean_valid(b))
    throw std::domain_error("build_grid: range outside the family's valid means");
  constexpr std::size_t kMaxPoints = 1000000;

  GridSpec grid{family, delta, {}};
  if (a == b) {
    const double m_bound = fifth_derivative_bound(family, a, b);
    const double eps = epsilon_for_delta(family, a, b, delta);
    grid.intervals.push_back({a, b, a, eps, m_bound});
    return grid;
  }

  if (family.kind() == FamilyKind::kNormalFixedVar) {
    const double m_bound = fifth_derivative_bound(family, a, b);
    const double eps = epsilon_for_delta(family, a, b, delta);
    const std::size_t count = std::size_t(std::ceil((b - a) / (2.0 * eps)));
    if (count > kMaxPoints)
      throw std::length_error("build_grid: " + std::to_string(count) +
                              " support points needed; raise delta");
    for (std::size_t l = 0; l < count; ++l) {
      const double mu = a + (2.0 * double(l) + 1.0) * eps;
      grid.intervals.push_back({a + 2.0 * double(l) * eps, a + 2.0 * double(l + 1) * eps, mu, eps, m_bound});
    }
    return grid;
  }

  const double mean_cap = double(family.trials()) - 1e-9;
  double lo = a;
  while (lo < b) {
    // seed with the point bound at the left edge, then refine on the
    // tentative interval once (the envelope varies smoothly in m)
    double eps = epsilon_for_delta(family, lo, lo, delta);
    double m_bound = 0.0;
    for (int pass = 0; pass < 2; ++pass) {
      const double probe_hi = std::min(lo + 2.0 * eps, mean_cap);
      m_bound = fifth_derivative_bound(family, lo, probe_hi);
      eps = std::pow(60.0 * delta / m_bound, 1.0 / 6.0);
    }
    grid.intervals.push_back({lo, lo + 2.0 * eps, lo + eps, eps, m_bound});
    if (grid.intervals.size() > kMaxPoints)
      throw std::length_error("build_grid: more than " + std::to_string(kMaxPoints) +
                              " support points needed; raise delta");
    lo += 2.0 * eps;
  }
  return grid;
}

struct MixingAtom {
  double mu = 0.0;
  double weight = 0.0;
};

// Outcome of checking one mixing distribution against the remainder bound.
struct LocalApproxReport {
  double sup_error = 0.0;  // sup over x_grid of |mixture - induced LMM|
  double bound = 0.0;      // (eps1+eps2) * eps^5 * M / 120
  double m_bound = 0.0;
  Lambda lambda{};         // induced Taylor coefficients
  FeasibilityReport feasibility;
};

// Builds the LMM induced by a small-support mixing distribution Q,
//   lambda_j = sum_k w_k (mu_k - mu0)^j / j!,
// and measures the worst discrepancy between the true mixture density and
// the LMM over x_grid. The report carries the theoretical bound so callers
// can assert sup_error <= bound.
inline LocalApproxReport verify_local_approx(const BaseFamily& family, double mu0,
                                             const std::vector<MixingAtom>& mixing,
                                             const ToleranceBudget& budget,
                                             const std::vector<double>& x_grid) {
  if (mixing.empty()) throw std::invalid_argument("verify_local_approx: empty mixing distribution");
  if (!(budget.epsilon1 > 0.0) || !(budget.epsilon2 > 0.0))
    throw std::invalid_argument("verify_local_approx: interval half-widths must be positive");
  detail::require_mean(family, mu0);

  const double lo = mu0 - budget.epsilon1;
  const double hi = mu0 + budget.epsilon2;
  double total = 0.0;
  for (const auto& atom : mixing) {
    if (!(atom.weight >= 0.0)) throw std::invalid_argument("verify_local_approx: negative weight");
    if (atom.mu < lo || atom.mu > hi)
      throw std::invalid_argument("verify_local_approx: atom at " + std::to_string(atom.mu) +
                                  " outside [mu0-eps1, mu0+eps2]");
    detail::require_mean(family, atom.mu);
    total += atom.weight;
  }
  if (std::fabs(total - 1.0) > 1e-9)
    throw std::invalid_argument("verify_local_approx: weights sum to " + std::to_string(total));

  LocalApproxReport rep;
  double fact = 1.0;
  for (int j = 1; j <= kOrder; ++j) {
    fact *= double(j);
    double lj = 0.0;
    for (const auto& atom : mixing) lj += atom.weight * std::pow(atom.mu - mu0, j);
    rep.lambda[j - 1] = lj / fact;
  }

  rep.feasibility = check_feasibility(family, mu0, rep.lambda);
  rep.m_bound = fifth_derivative_bound(family, lo, hi);
  const double eps = budget.epsilon();
  rep.bound = (budget.epsilon1 + budget.epsilon2) * std::pow(eps, 5) * rep.m_bound / 120.0;

  const Lmm model(family, mu0, rep.lambda);
  const LmmDensity g(model);
  double worst = 0.0;
  for (double x : x_grid) {
    double mix = 0.0;
    for (const auto& atom : mixing) mix += atom.weight * density(family, x, atom.mu);
    // evaluate the LMM through the raw factor so a slightly negative value
    // near the boundary is measured, not clamped
    const double lmm = density(family, x, mu0) * g.factor(x);
    worst = std::max(worst, std::fabs(mix - lmm));
  }
  rep.sup_error = worst;
  return rep;
}

}  // namespace lmmix
