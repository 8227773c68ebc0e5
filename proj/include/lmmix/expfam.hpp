// Base exponential families (normal with fixed variance, binomial) in the
// mean parametrization, the derivative-ratio polynomials q_j = f^(j)/f, and
// the fifth-derivative envelopes that drive grid spacing.
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace lmmix {

inline constexpr double kSqrt2Pi = 2.5066282746310005024;

enum class FamilyKind { kNormalFixedVar, kBinomial };

// Tagged value type: either a normal density with fixed standard deviation
// sigma0, or a binomial mass function with n trials. Both are parametrized
// by the mean mu (for the binomial, mu = n*p must be strictly inside (0,n)).
class BaseFamily {
 public:
  static BaseFamily normal(double sigma0) {
    if (!(sigma0 > 0.0) || !std::isfinite(sigma0))
      throw std::invalid_argument("BaseFamily::normal: sigma0 must be positive");
    BaseFamily f;
    f.kind_ = FamilyKind::kNormalFixedVar;
    f.sigma0_ = sigma0;
    return f;
  }

  // n >= 6: the fifth derivative needs five distinct falling factors and the
  // mode x* one more trial to stay interior.
  static BaseFamily binomial(int trials) {
    if (trials < 6)
      throw std::invalid_argument("BaseFamily::binomial: need at least 6 trials");
    BaseFamily f;
    f.kind_ = FamilyKind::kBinomial;
    f.trials_ = trials;
    return f;
  }

  FamilyKind kind() const { return kind_; }
  bool is_discrete() const { return kind_ == FamilyKind::kBinomial; }

  double sigma0() const {
    if (kind_ != FamilyKind::kNormalFixedVar)
      throw std::logic_error("BaseFamily: sigma0() on non-normal family");
    return sigma0_;
  }
  int trials() const {
    if (kind_ != FamilyKind::kBinomial)
      throw std::logic_error("BaseFamily: trials() on non-binomial family");
    return trials_;
  }

  bool mean_valid(double mu) const {
    if (!std::isfinite(mu)) return false;
    if (kind_ == FamilyKind::kBinomial) return mu > 0.0 && mu < double(trials_);
    return true;
  }

  // Smallest/largest sample point (binomial); normal support is all of R.
  double support_min() const { return is_discrete() ? 0.0 : -std::numeric_limits<double>::infinity(); }
  double support_max() const { return is_discrete() ? double(trials_) : std::numeric_limits<double>::infinity(); }

  bool operator==(const BaseFamily&) const = default;

 private:
  BaseFamily() = default;
  FamilyKind kind_ = FamilyKind::kNormalFixedVar;
  double sigma0_ = 1.0;
  int trials_ = 0;
};

// q_j(x;mu0) = f^(j)(x;mu0)/f(x;mu0), a degree-j polynomial in x.
// Normal coefficients are stored in powers of (x - anchor) to avoid
// cancellation at large |mu0|; binomial coefficients in powers of x.
struct QPolynomial {
  int degree = 0;
  double anchor = 0.0;
  bool centered = false;
  std::array<double, 6> coef{};  // coef[0..degree]

  double operator()(double x) const {
    const double t = centered ? x - anchor : x;
    double v = coef[degree];
    for (int i = degree - 1; i >= 0; --i) v = v * t + coef[i];
    return v;
  }
};

namespace detail {

inline void require_sample_point(const BaseFamily& family, double x) {
  if (!std::isfinite(x)) throw std::domain_error("sample point must be finite");
  if (family.is_discrete()) {
    if (x < 0.0 || x > double(family.trials()) || std::floor(x) != x)
      throw std::domain_error("binomial sample point must be an integer in {0,...,n}");
  }
}

inline void require_mean(const BaseFamily& family, double mu) {
  if (!family.mean_valid(mu))
    throw std::domain_error("mean " + std::to_string(mu) + " outside the family's valid range");
}

inline double log_binomial_coefficient(int n, int x) {
  return std::lgamma(double(n) + 1.0) - std::lgamma(double(x) + 1.0) -
         std::lgamma(double(n - x) + 1.0);
}

// Falling factorial a(a-1)...(a-i+1). Integer-exact in double for the
// magnitudes used here (i <= 5, a <= a few thousand).
inline double falling(double a, int i) {
  double r = 1.0;
  for (int t = 0; t < i; ++t) r *= (a - double(t));
  return r;
}

}  // namespace detail

// f(x;mu): normal density or binomial mass, normalized over the sample space.
inline double density(const BaseFamily& family, double x, double mu) {
  detail::require_mean(family, mu);
  detail::require_sample_point(family, x);
  if (family.kind() == FamilyKind::kNormalFixedVar) {
    const double s = family.sigma0();
    const double z = (x - mu) / s;
    return std::exp(-0.5 * z * z) / (kSqrt2Pi * s);
  }
  const int n = family.trials();
  const double lp = detail::log_binomial_coefficient(n, int(x)) + x * std::log(mu) +
                    (double(n) - x) * std::log(double(n) - mu) - double(n) * std::log(double(n));
  return std::exp(lp);
}

// q_j(x;mu) for j in 1..5.
//
// Normal: the recurrence q_{j+1}(z) = z/sigma0^2 * q_j(z) - q_j'(z) in the
// centered variable z = x - mu (differentiation in mu flips the sign of d/dz),
// which at sigma0 = 1 yields the Hermite-type polynomials z, z^2-1, z^3-3z,
// z^4-6z^2+3, z^5-10z^3+15z.
//
// Binomial: the Leibniz expansion of d^j/dmu^j [mu^x (n-mu)^(n-x)],
//   q_j(x;mu) = sum_{i=0}^{j} C(j,i) (x)_i (n-x)_{j-i} (-1)^(j-i)
//               / (mu^i (n-mu)^(j-i)),
// expanded into monomial coefficients. The integer convolutions are exact in
// double precision for n <= 64 (all intermediates are integers below 2^53).
inline QPolynomial q_polynomial(const BaseFamily& family, double mu, int j) {
  if (j < 1 || j > 5) throw std::invalid_argument("q_polynomial: j must be in 1..5");
  detail::require_mean(family, mu);

  QPolynomial q;
  q.degree = j;
  q.anchor = mu;

  if (family.kind() == FamilyKind::kNormalFixedVar) {
    q.centered = true;
    const double inv_s2 = 1.0 / (family.sigma0() * family.sigma0());
    std::array<double, 6> cur{};  // q_0 = 1
    cur[0] = 1.0;
    int deg = 0;
    for (int step = 0; step < j; ++step) {
      std::array<double, 6> next{};
      for (int i = 0; i <= deg; ++i) next[i + 1] += cur[i] * inv_s2;   // z/s^2 * q
      for (int i = 1; i <= deg; ++i) next[i - 1] -= double(i) * cur[i];  // - q'
      cur = next;
      ++deg;
    }
    q.coef = cur;
    return q;
  }

  const int n = family.trials();
  q.centered = false;
  std::array<double, 6> acc{};
  for (int i = 0; i <= j; ++i) {
    // expand (x)_i = prod_{t<i} (x - t) and (n-x)_{j-i} = prod_{t<j-i} (n-t - x)
    std::array<double, 6> a{};
    a[0] = 1.0;
    int da = 0;
    for (int t = 0; t < i; ++t) {
      std::array<double, 6> r{};
      for (int k = 0; k <= da; ++k) {
        r[k + 1] += a[k];
        r[k] += a[k] * (-double(t));
      }
      a = r;
      ++da;
    }
    std::array<double, 6> b{};
    b[0] = 1.0;
    int db = 0;
    for (int t = 0; t < j - i; ++t) {
      std::array<double, 6> r{};
      for (int k = 0; k <= db; ++k) {
        r[k] += b[k] * double(n - t);
        r[k + 1] -= b[k];
      }
      b = r;
      ++db;
    }
    // binomial C(j,i), sign, and the mean-dependent denominator
    double cji = 1.0;
    for (int t = 0; t < i; ++t) cji = cji * double(j - t) / double(t + 1);
    const double sign = ((j - i) % 2 == 0) ? 1.0 : -1.0;
    const double scale = cji * sign / (std::pow(mu, i) * std::pow(double(n) - mu, j - i));
    for (int ka = 0; ka <= da; ++ka)
      for (int kb = 0; kb <= db; ++kb) acc[ka + kb] += a[ka] * b[kb] * scale;
  }
  q.coef = acc;
  return q;
}

// sup over x and m of |d^5 f / d m^5| for the normal family with standard
// deviation sigma. In the substituted variable y = (x-m)/sigma^2 the fifth
// derivative is
//   (y^5 - 10 y^3/sigma^2 + 15 y/sigma^4) * exp(-sigma^2 y^2/2) / (sqrt(2 pi) sigma).
// Note the Gaussian factor: with this substitution the exponent is
// -sigma^2 y^2/2, not -y^2/(2 sigma^2); the two agree only at sigma = 1.
// Using the latter would break the defining property M >= |f^(5)| for
// sigma < 1 (finite-difference probes in the test suite pin this down).
// Deterministic: fixed 4096-point grid, then golden-section polish.
inline double normal_fifth_derivative_bound(double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma))
    throw std::invalid_argument("normal_fifth_derivative_bound: sigma must be positive");
  const double s2 = sigma * sigma;
  auto magnitude = [&](double y) {
    const double p = ((y * y - 10.0 / s2) * y * y + 15.0 / (s2 * s2)) * y;
    return std::fabs(p) * std::exp(-0.5 * s2 * y * y) / (kSqrt2Pi * sigma);
  };
  const double half_range = 8.0 * sigma * std::max(1.0, 1.0 / s2);
  const int grid_points = 4096;
  double best = 0.0;
  int best_i = 0;
  for (int i = 0; i < grid_points; ++i) {
    const double y = -half_range + 2.0 * half_range * double(i) / double(grid_points - 1);
    const double v = magnitude(y);
    if (v > best) {
      best = v;
      best_i = i;
    }
  }
  // polish inside the bracketing cell
  const double step = 2.0 * half_range / double(grid_points - 1);
  double lo = -half_range + step * double(best_i - 1);
  double hi = lo + 2.0 * step;
  const double gr = 0.6180339887498949;
  double a = hi - gr * (hi - lo), b = lo + gr * (hi - lo);
  double fa = magnitude(a), fb = magnitude(b);
  for (int it = 0; it < 200 && hi - lo > 1e-14 * half_range; ++it) {
    if (fa < fb) {
      lo = a;
      a = b;
      fa = fb;
      b = lo + gr * (hi - lo);
      fb = magnitude(b);
    } else {
      hi = b;
      b = a;
      fb = fa;
      a = hi - gr * (hi - lo);
      fa = magnitude(a);
    }
  }
  return std::max(best, std::max(fa, fb));
}

// Uniform envelope for q_5(x;n,m) over x in {0,...,n}, and the mode x*.
// With gamma0 = n(n-1)(n-2)(n-3)(n-4):
//   L(n,m) = -gamma0 (5n^4 + 10n^2 m^2 + m^4) / ((n-m)^5 m^4)
//   U(n,m) =  gamma0 (n^5 + 10n^3 m^2 + 5n m^4 - m^5) / ((n-m)^5 m^5)
//   x*     = floor(m(n+1)/n)
// guaranteeing L < q_5(x;n,m) < U for every x, and f(x;n,m) <= f(x*;n,m).
// Sign rule: U > |L| exactly when m < n/2 (equality at m = n/2).
struct RemainderEnvelope {
  double lower = 0.0;   // L(n,m)
  double upper = 0.0;   // U(n,m)
  int x_star = 0;       // mode of the mass function

  bool upper_dominates() const { return upper > std::fabs(lower); }
};

inline RemainderEnvelope binomial_remainder_envelope(int n, double m) {
  if (n < 6) throw std::invalid_argument("binomial_remainder_envelope: need n >= 6");
  if (!(m > 0.0) || !(m < double(n)))
    throw std::domain_error("binomial_remainder_envelope: m must lie strictly in (0,n)");
  const double gamma0 = detail::falling(double(n), 5);
  const double nm = double(n) - m;
  const double nm5 = nm * nm * nm * nm * nm;
  const double m2 = m * m, m4 = m2 * m2;
  const double n2 = double(n) * double(n), n4 = n2 * n2;
  RemainderEnvelope env;
  env.lower = -gamma0 * (5.0 * n4 + 10.0 * n2 * m2 + m4) / (nm5 * m4);
  env.upper = gamma0 * (n4 * double(n) + 10.0 * n2 * double(n) * m2 + 5.0 * double(n) * m4 - m4 * m) /
              (nm5 * m4 * m);
  env.x_star = int(std::floor(m * double(n + 1) / double(n)));
  return env;
}

}  // namespace lmmix
