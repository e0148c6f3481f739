// SPDX-License-Identifier: Apache-2.0
#include "core/dists.hpp"

#include "core/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace splitplot {

namespace {

void require_level(double level, const char* what) {
  if (!(level > 0.0 && level < 1.0)) {
    fail(ErrorKind::domain, std::string(what) + ": level must lie in (0, 1), got " + std::to_string(level));
  }
}

void require_df(double df, const char* what) {
  if (!(df > 0.0) || !std::isfinite(df)) {
    fail(ErrorKind::domain, std::string(what) + ": degrees of freedom must be positive, got " + std::to_string(df));
  }
}

double horner(double r, std::initializer_list<double> c) {
  double acc = 0.0;
  for (auto it = std::rbegin(c); it != std::rend(c); ++it) acc = acc * r + *it;
  return acc;
}

// log of x^a e^{-x} / Gamma(a)
double log_gamma_prefactor(double a, double x) { return a * std::log(x) - x - std::lgamma(a); }

constexpr double kEps = std::numeric_limits<double>::epsilon();
constexpr int kMaxIter = 100000;

double gamma_p_series(double a, double x) {
  double term = 1.0 / a;
  double sum = term;
  for (int n = 1; n < kMaxIter; ++n) {
    term *= x / (a + n);
    sum += term;
    if (std::abs(term) < std::abs(sum) * kEps) break;
  }
  return sum * std::exp(log_gamma_prefactor(a, x));
}

// Modified Lentz evaluation of the continued fraction for Q(a, x).
double gamma_q_fraction(double a, double x) {
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < kMaxIter; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < kEps) break;
  }
  return std::exp(log_gamma_prefactor(a, x)) * h;
}

}  // namespace

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_quantile(double level) {
  require_level(level, "normal_quantile");
  const double q = level - 0.5;
  double x;
  if (std::abs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    x = q *
        horner(r, {3.3871328727963666080e0, 1.3314166789178437745e+2, 1.9715909503065514427e+3,
                   1.3731693765509461125e+4, 4.5921953931549871457e+4, 6.7265770927008700853e+4,
                   3.3430575583588128105e+4, 2.5090809287301226727e+3}) /
        horner(r, {1.0, 4.2313330701600911252e+1, 6.8718700749205790830e+2, 5.3941960214247511077e+3,
                   2.1213794301586595867e+4, 3.9307895800092710610e+4, 2.8729085735721942674e+4,
                   5.2264952788528545610e+3});
  } else {
    double r = std::sqrt(-std::log(std::min(level, 1.0 - level)));
    if (r <= 5.0) {
      r -= 1.6;
      x = horner(r, {1.42343711074968357734e0, 4.63033784615654529590e0, 5.76949722146069140550e0,
                     3.64784832476320460504e0, 1.27045825245236838258e0, 2.41780725177450611770e-1,
                     2.27238449892691845833e-2, 7.74545014278341407640e-4}) /
          horner(r, {1.0, 2.05319162663775882187e0, 1.67638483018380384940e0, 6.89767334985100004550e-1,
                     1.48103976427480074590e-1, 1.51986665636164571966e-2, 5.47593808499534494600e-4,
                     1.05075007164441684324e-9});
    } else {
      r -= 5.0;
      x = horner(r, {6.65790464350110377720e0, 5.46378491116411436990e0, 1.78482653991729133580e0,
                     2.96560571828504891230e-1, 2.65321895265761230930e-2, 1.24266094738807843860e-3,
                     2.71155556874348757815e-5, 2.01033439929228813265e-7}) /
          horner(r, {1.0, 5.99832206555887937690e-1, 1.36929880922735805310e-1, 1.48753612908506148525e-2,
                     7.86869131145613259100e-4, 1.84631831751005468180e-5, 1.42151175831644588870e-7,
                     2.04426310338993978564e-15});
    }
    if (q < 0.0) x = -x;
  }
  // Newton polish on whichever tail is smaller.
  const double density = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  if (density > 0.0) {
    const double resid = level < 0.5 ? normal_cdf(x) - level : (1.0 - level) - normal_cdf(-x);
    x -= resid / density;
  }
  return x;
}

double gamma_p(double a, double x) {
  if (!(a > 0.0) || x < 0.0) fail(ErrorKind::domain, "gamma_p: need a > 0 and x >= 0");
  if (x == 0.0) return 0.0;
  if (x < a + 1.0) return gamma_p_series(a, x);
  return 1.0 - gamma_q_fraction(a, x);
}

double gamma_q(double a, double x) {
  if (!(a > 0.0) || x < 0.0) fail(ErrorKind::domain, "gamma_q: need a > 0 and x >= 0");
  if (x == 0.0) return 1.0;
  if (x < a + 1.0) return 1.0 - gamma_p_series(a, x);
  return gamma_q_fraction(a, x);
}

double chisq_cdf(double x, double df) {
  require_df(df, "chisq_cdf");
  if (x <= 0.0) return 0.0;
  return gamma_p(0.5 * df, 0.5 * x);
}

double chisq_quantile(double level, double df) {
  require_level(level, "chisq_quantile");
  require_df(df, "chisq_quantile");
  const double a = 0.5 * df;
  // Work on the smaller tail so levels near 1 keep full relative accuracy.
  const bool upper = level > 0.5;
  const double target = upper ? 1.0 - level : level;
  auto residual = [&](double x) {
    return upper ? target - gamma_q(a, 0.5 * x) : gamma_p(a, 0.5 * x) - target;
  };
  auto log_density = [&](double x) { return (a - 1.0) * std::log(x) - 0.5 * x - a * std::numbers::ln2 - std::lgamma(a); };

  // Wilson-Hilferty start, with the small-x power law when it goes negative.
  const double z = normal_quantile(level);
  const double c = 2.0 / (9.0 * df);
  double x = df * std::pow(1.0 - c + z * std::sqrt(c), 3);
  if (!(x > 0.0)) x = std::pow(level * std::exp(std::lgamma(a + 1.0) + a * std::numbers::ln2), 1.0 / a);
  if (!(x > 0.0) || !std::isfinite(x)) x = df;

  double lo = 0.0;
  double hi = std::max(x, 1.0);
  while (residual(hi) < 0.0) {
    lo = hi;
    hi *= 2.0;
    if (!std::isfinite(hi)) fail(ErrorKind::domain, "chisq_quantile: failed to bracket the root");
  }
  x = std::clamp(x, lo, hi);

  for (int iter = 0; iter < 500; ++iter) {
    const double r = residual(x);
    if (r == 0.0) return x;
    if (r < 0.0) lo = x; else hi = x;
    double next = x - r / std::exp(log_density(x));
    if (!(next > lo && next < hi) || !std::isfinite(next)) next = 0.5 * (lo + hi);
    if (std::abs(next - x) <= 1e-15 * std::max(std::abs(x), 1e-300) || hi - lo <= 1e-15 * hi) return next;
    x = next;
  }
  return x;
}

double kf_quantile(double level, double df) {
  require_df(df, "kf_quantile");
  return (chisq_quantile(level, df) - df) / std::sqrt(2.0 * df);
}

std::vector<double> weighted_chisq_sample(std::span<const double> weights, std::size_t count, RngStream& rng) {
  double norm2 = 0.0;
  for (double w : weights) {
    if (!std::isfinite(w)) fail(ErrorKind::domain, "weighted_chisq_sample: non-finite weight");
    norm2 += w * w;
  }
  if (norm2 > 1.0 + 1e-8) {
    fail(ErrorKind::domain, "weighted_chisq_sample: sum of squared weights " + std::to_string(norm2) + " exceeds 1");
  }
  const double normal_weight = std::sqrt(std::max(0.0, 1.0 - norm2));
  std::vector<double> out(count);
  for (double& draw : out) {
    double acc = 0.0;
    for (double w : weights) {
      const double g = rng.normal();
      acc += w * (g * g - 1.0);
    }
    draw = acc / std::numbers::sqrt2 + normal_weight * rng.normal();
  }
  return out;
}

}  // namespace splitplot
