// Local mixture models of order 4: the perturbed density
//   g(x; mu0, lambda) = f(x; mu0) * (1 + sum_j lambda_j q_j(x; mu0)),
// the convex parameter region where the correction factor stays nonnegative
// on the whole sample space, and the low-order moments of g.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "lmmix/expfam.hpp"
#include "lmmix/poly_roots.hpp"

namespace lmmix {

inline constexpr int kOrder = 4;
using Lambda = std::array<double, kOrder>;

// Raised when a density evaluation meets a correction factor below the
// numerical tolerance, i.e. lambda is outside the feasible region.
class ConstraintViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Lmm {
  BaseFamily family;
  double mu0;
  Lambda lambda{};

  Lmm(BaseFamily f, double mean, Lambda lam = {}) : family(f), mu0(mean), lambda(lam) {
    detail::require_mean(family, mu0);
  }
};

enum class FeasibilityStatus { kInterior, kBoundary, kInfeasible };

inline const char* to_string(FeasibilityStatus s) {
  switch (s) {
    case FeasibilityStatus::kInterior: return "interior";
    case FeasibilityStatus::kBoundary: return "boundary";
    case FeasibilityStatus::kInfeasible: return "infeasible";
  }
  return "?";
}

struct FeasibilityReport {
  FeasibilityStatus status = FeasibilityStatus::kInterior;
  // inf over the sample space of the correction factor 1 + sum lambda_j q_j.
  // -inf when the polynomial is unbounded below (normal family, in which
  // case argmin is empty).
  double min_value = 0.0;
  std::optional<double> argmin;
  double margin = 0.0;  // max(min_value, 0): distance to the zero level
};

// Hyperplane coefficients (1, q_1(x), ..., q_4(x)) of the supporting
// constraint at sample point x: lambda is feasible at x iff
// h[0] + sum_j h[j] lambda_j >= 0.
inline std::array<double, kOrder + 1> boundary_hyperplane(const BaseFamily& family, double mu0,
                                                          double x) {
  detail::require_mean(family, mu0);
  detail::require_sample_point(family, x);
  std::array<double, kOrder + 1> h{};
  h[0] = 1.0;
  for (int j = 1; j <= kOrder; ++j) h[j] = q_polynomial(family, mu0, j)(x);
  return h;
}

namespace detail {

// Coefficients of 1 + sum lambda_j q_j(x;mu0) in powers of z = x - mu0
// (normal family). c[k] multiplies z^k.
inline std::array<double, kOrder + 1> normal_factor_coef(double sigma0, const Lambda& lambda) {
  const double s2 = sigma0 * sigma0;
  const double s4 = s2 * s2, s6 = s4 * s2, s8 = s4 * s4;
  std::array<double, kOrder + 1> c{};
  c[0] = 1.0 - lambda[1] / s2 + 3.0 * lambda[3] / s4;
  c[1] = lambda[0] / s2 - 3.0 * lambda[2] / s4;
  c[2] = lambda[1] / s4 - 6.0 * lambda[3] / s6;
  c[3] = lambda[2] / s6;
  c[4] = lambda[3] / s8;
  return c;
}

inline double eval_poly(const std::array<double, kOrder + 1>& c, int deg, double z) {
  double v = c[deg];
  for (int i = deg - 1; i >= 0; --i) v = v * z + c[i];
  return v;
}

}  // namespace detail

// Exact feasibility via the global minimum of the correction factor.
//
// Normal family: the factor is a polynomial in z = x - mu0 whose effective
// degree decides the outcome. Leading coefficients below kDegenerateTol are
// treated as zero. Odd effective degree (or negative quartic leader) makes
// the factor unbounded below, hence infeasible with min_value = -inf.
// Otherwise the global minimum is found among the real roots of the
// derivative (closed-form cubic) or the vertex of the parabola.
//
// Binomial family: exhaustive scan over x in {0,...,n}.
//
// Status is boundary when |min_value| <= kBoundaryBand, infeasible when
// min_value < -kBoundaryBand.
inline constexpr double kDegenerateTol = 1e-14;
inline constexpr double kBoundaryBand = 1e-10;

inline FeasibilityReport check_feasibility(const BaseFamily& family, double mu0,
                                           const Lambda& lambda) {
  detail::require_mean(family, mu0);
  for (double l : lambda)
    if (!std::isfinite(l)) throw std::invalid_argument("check_feasibility: lambda must be finite");

  FeasibilityReport rep;
  if (family.kind() == FamilyKind::kBinomial) {
    const int n = family.trials();
    double best = std::numeric_limits<double>::infinity();
    int best_x = 0;
    std::array<QPolynomial, kOrder> q;
    for (int j = 1; j <= kOrder; ++j) q[j - 1] = q_polynomial(family, mu0, j);
    for (int x = 0; x <= n; ++x) {
      double v = 1.0;
      for (int j = 0; j < kOrder; ++j) v += lambda[j] * q[j](double(x));
      if (v < best) {
        best = v;
        best_x = x;
      }
    }
    rep.min_value = best;
    rep.argmin = double(best_x);
  } else {
    const auto c = detail::normal_factor_coef(family.sigma0(), lambda);
    int deg = kOrder;
    while (deg > 0 && std::fabs(c[deg]) <= kDegenerateTol) --deg;

    if (deg == 0) {
      rep.min_value = c[0];
      rep.argmin = std::nullopt;  // constant factor, minimum everywhere
    } else if (deg == 1 || deg == 3 || (deg == 4 && c[4] < 0.0)) {
      rep.min_value = -std::numeric_limits<double>::infinity();
      rep.argmin = std::nullopt;
    } else if (deg == 2) {
      if (c[2] < 0.0) {
        rep.min_value = -std::numeric_limits<double>::infinity();
        rep.argmin = std::nullopt;
      } else {
        const double z = -c[1] / (2.0 * c[2]);
        rep.min_value = detail::eval_poly(c, 2, z);
        rep.argmin = mu0 + z;
      }
    } else {
      // positive quartic: global minimum at a real root of the derivative
      const RealRoots st = solve_cubic(4.0 * c[4], 3.0 * c[3], 2.0 * c[2], c[1]);
      double best = std::numeric_limits<double>::infinity();
      double best_z = 0.0;
      for (int k = 0; k < st.count; ++k) {
        double z = st.root[k];
        // one guarded Newton step on the derivative sharpens the stationary point
        const double d1 = ((4.0 * c[4] * z + 3.0 * c[3]) * z + 2.0 * c[2]) * z + c[1];
        const double d2 = (12.0 * c[4] * z + 6.0 * c[3]) * z + 2.0 * c[2];
        if (d2 != 0.0) {
          const double step = d1 / d2;
          if (std::isfinite(step) && std::fabs(step) < 1.0) z -= step;
        }
        const double v = detail::eval_poly(c, 4, z);
        if (v < best) {
          best = v;
          best_z = z;
        }
      }
      rep.min_value = best;
      rep.argmin = mu0 + best_z;
    }
  }

  if (rep.min_value < -kBoundaryBand)
    rep.status = FeasibilityStatus::kInfeasible;
  else if (rep.min_value <= kBoundaryBand)
    rep.status = FeasibilityStatus::kBoundary;
  else
    rep.status = FeasibilityStatus::kInterior;
  rep.margin = std::max(rep.min_value, 0.0);
  return rep;
}

// Returns sup { t >= 0 : lambda + t * direction is feasible (not infeasible) },
// or +inf when no finite cap exists below 1e8. Bisection on the feasibility
// status; the feasible set is convex so the feasible t form an interval.
inline double max_feasible_step(const BaseFamily& family, double mu0, const Lambda& lambda,
                                const Lambda& direction) {
  double norm = 0.0;
  for (double d : direction) norm += d * d;
  if (norm == 0.0) return std::numeric_limits<double>::infinity();

  auto feasible_at = [&](double t) {
    Lambda probe;
    for (int j = 0; j < kOrder; ++j) probe[j] = lambda[j] + t * direction[j];
    return check_feasibility(family, mu0, probe).status != FeasibilityStatus::kInfeasible;
  };

  if (!feasible_at(0.0))
    throw std::invalid_argument("max_feasible_step: starting lambda is infeasible");

  double lo = 0.0, hi = 1.0;
  const double cap = 1e8;
  while (feasible_at(hi)) {
    lo = hi;
    hi *= 2.0;
    if (hi > cap) return std::numeric_limits<double>::infinity();
  }
  for (int it = 0; it < 100 && hi - lo > 1e-10 * std::max(1.0, lo); ++it) {
    const double mid = 0.5 * (lo + hi);
    if (feasible_at(mid))
      lo = mid;
    else
      hi = mid;
  }
  return lo;
}

// Correction factor 1 + sum_j lambda_j q_j(x; mu0), evaluated stably.
inline double correction_factor(const Lmm& model, double x) {
  if (model.family.kind() == FamilyKind::kNormalFixedVar) {
    const auto c = detail::normal_factor_coef(model.family.sigma0(), model.lambda);
    return detail::eval_poly(c, kOrder, x - model.mu0);
  }
  double v = 1.0;
  for (int j = 1; j <= kOrder; ++j)
    v += model.lambda[j - 1] * q_polynomial(model.family, model.mu0, j)(x);
  return v;
}

// g(x; mu0, lambda). Tiny negative factors (rounding at the boundary) are
// clamped to zero; anything below -kFactorTol signals an infeasible lambda.
inline constexpr double kFactorTol = 1e-8;

inline double lmm_density(const Lmm& model, double x) {
  detail::require_sample_point(model.family, x);
  double factor = correction_factor(model, x);
  if (factor < 0.0) {
    if (factor < -kFactorTol)
      throw ConstraintViolation("lmm_density: correction factor " + std::to_string(factor) +
                                " at x = " + std::to_string(x) +
                                "; lambda violates the nonnegativity constraint");
    factor = 0.0;
  }
  return density(model.family, x, model.mu0) * factor;
}

// Precomputes the q polynomials once for repeated evaluation over a sample.
class LmmDensity {
 public:
  explicit LmmDensity(const Lmm& model) : model_(model) {
    if (model.family.kind() == FamilyKind::kNormalFixedVar) {
      coef_ = detail::normal_factor_coef(model.family.sigma0(), model.lambda);
    } else {
      for (int j = 1; j <= kOrder; ++j) q_[j - 1] = q_polynomial(model.family, model.mu0, j);
    }
  }

  double factor(double x) const {
    if (model_.family.kind() == FamilyKind::kNormalFixedVar)
      return detail::eval_poly(coef_, kOrder, x - model_.mu0);
    double v = 1.0;
    for (int j = 0; j < kOrder; ++j) v += model_.lambda[j] * q_[j](x);
    return v;
  }

  double operator()(double x) const {
    detail::require_sample_point(model_.family, x);
    double f = factor(x);
    if (f < 0.0) {
      if (f < -kFactorTol)
        throw ConstraintViolation("LmmDensity: correction factor " + std::to_string(f) +
                                  " at x = " + std::to_string(x));
      f = 0.0;
    }
    return density(model_.family, x, model_.mu0) * f;
  }

  const Lmm& model() const { return model_; }

 private:
  Lmm model_;
  std::array<double, kOrder + 1> coef_{};
  std::array<QPolynomial, kOrder> q_{};
};

// P(X <= t) for a normal-family LMM. Integrating each derivative term gives
//   int_{-inf}^t f^(j)(x;mu) dx = -q_{j-1}(t;mu) f(t;mu)   (q_0 = 1),
// so the CDF is Phi((t-mu)/sigma) - f(t;mu) * sum_j lambda_j q_{j-1}(t;mu).
inline double lmm_cdf(const Lmm& model, double t) {
  if (model.family.kind() != FamilyKind::kNormalFixedVar)
    throw std::invalid_argument("lmm_cdf: normal family only");
  const double s = model.family.sigma0();
  const double z = (t - model.mu0) / s;
  double tail = model.lambda[0];
  for (int j = 2; j <= kOrder; ++j)
    tail += model.lambda[j - 1] * q_polynomial(model.family, model.mu0, j - 1)(t);
  return 0.5 * std::erfc(-z / 1.4142135623730951) - density(model.family, t, model.mu0) * tail;
}

struct Moments {
  double mean = 0.0;
  double variance = 0.0;
  double third_central = 0.0;
};

// Closed-form moments of the order-4 normal LMM with base deviation sigma0:
//   mean          = mu0 + lambda_1
//   variance      = sigma0^2 + 2 lambda_2 - lambda_1^2
//   third central = 6 lambda_3 + 2 lambda_1^3 - 6 lambda_1 lambda_2
// (the sigma0 terms cancel in the third central moment).
inline Moments normal_moments(const Lmm& model) {
  if (model.family.kind() != FamilyKind::kNormalFixedVar)
    throw std::invalid_argument("normal_moments: model is not a normal-family LMM");
  const double s2 = model.family.sigma0() * model.family.sigma0();
  const double l1 = model.lambda[0], l2 = model.lambda[1], l3 = model.lambda[2];
  Moments m;
  m.mean = model.mu0 + l1;
  m.variance = s2 + 2.0 * l2 - l1 * l1;
  m.third_central = 6.0 * l3 + 2.0 * l1 * l1 * l1 - 6.0 * l1 * l2;
  return m;
}

}  // namespace lmmix
