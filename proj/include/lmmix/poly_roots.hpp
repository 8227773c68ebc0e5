// Real-root solvers for low-degree polynomials. Closed forms with one Newton
// polish each; used by the feasibility minimizer on the normal family where
// the stationary points of a quartic come from its derivative cubic.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

namespace lmmix {

struct RealRoots {
  int count = 0;
  std::array<double, 3> root{};
};

// a x^2 + b x + c = 0. Returns only real roots; a may be 0 (linear case).
inline RealRoots solve_quadratic(double a, double b, double c) {
  RealRoots r;
  if (a == 0.0) {
    if (b != 0.0) {
      r.count = 1;
      r.root[0] = -c / b;
    }
    return r;
  }
  const double disc = b * b - 4.0 * a * c;
  if (disc < 0.0) return r;
  const double sq = std::sqrt(disc);
  // avoid cancellation by computing the larger-magnitude root first
  const double q = -0.5 * (b + (b >= 0.0 ? sq : -sq));
  r.count = (disc == 0.0) ? 1 : 2;
  r.root[0] = q / a;
  if (r.count == 2) r.root[1] = (q != 0.0) ? c / q : (-b / a - r.root[0]);
  if (r.count == 2 && r.root[0] > r.root[1]) std::swap(r.root[0], r.root[1]);
  return r;
}

// a x^3 + b x^2 + c x + d = 0, all real roots in ascending order. Depressed
// cubic via t = x + b/(3a); trigonometric branch when three real roots,
// Cardano otherwise. Each root gets one Newton step against the original
// coefficients to undo the shift's rounding.
inline RealRoots solve_cubic(double a, double b, double c, double d) {
  if (a == 0.0) return solve_quadratic(b, c, d);
  const double inv_a = 1.0 / a;
  const double bb = b * inv_a, cc = c * inv_a, dd = d * inv_a;
  const double shift = bb / 3.0;
  const double p = cc - bb * bb / 3.0;
  const double q = 2.0 * bb * bb * bb / 27.0 - bb * cc / 3.0 + dd;

  auto polish = [&](double x) {
    for (int it = 0; it < 2; ++it) {
      const double f = ((a * x + b) * x + c) * x + d;
      const double fp = (3.0 * a * x + 2.0 * b) * x + c;
      if (fp != 0.0) {
        const double step = f / fp;
        if (std::isfinite(step) && std::fabs(step) < 1.0) x -= step;
      }
    }
    return x;
  };

  RealRoots r;
  const double disc = 0.25 * q * q + p * p * p / 27.0;
  if (disc > 0.0) {
    const double sq = std::sqrt(disc);
    const double u = std::cbrt(-0.5 * q + sq);
    const double v = std::cbrt(-0.5 * q - sq);
    r.count = 1;
    r.root[0] = polish(u + v - shift);
    return r;
  }
  if (p == 0.0 && q == 0.0) {
    r.count = 1;
    r.root[0] = polish(-shift);
    return r;
  }
  // three real roots (disc <= 0, p < 0)
  const double m = 2.0 * std::sqrt(-p / 3.0);
  double arg = 3.0 * q / (p * m);
  if (arg > 1.0) arg = 1.0;
  if (arg < -1.0) arg = -1.0;
  const double theta = std::acos(arg) / 3.0;
  r.count = 3;
  for (int k = 0; k < 3; ++k)
    r.root[k] = polish(m * std::cos(theta - 2.0943951023931953 * double(k)) - shift);
  std::sort(r.root.begin(), r.root.begin() + 3);
  return r;
}

}  // namespace lmmix
