#include "gentau/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace gentau::stats {

namespace {

constexpr int kMaxIter = 500;
constexpr double kEps = std::numeric_limits<double>::epsilon();
constexpr double kTiny = std::numeric_limits<double>::min() / kEps;

// Lower incomplete gamma by series, valid for x < a + 1.
double gamma_p_series(double a, double x) {
  double ap = a;
  double sum = 1.0 / a;
  double del = sum;
  for (int n = 0; n < kMaxIter; ++n) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::fabs(del) < std::fabs(sum) * kEps) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Upper incomplete gamma by Lentz continued fraction, valid for x >= a + 1.
double gamma_q_cf(double a, double x) {
  double b = x + 1.0 - a;
  double c = 1.0 / kTiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= kMaxIter; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = b + an / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace

double gamma_p(double a, double x) {
  if (a <= 0.0) throw std::invalid_argument("gamma_p: a must be positive");
  if (x < 0.0) throw std::invalid_argument("gamma_p: x must be nonnegative");
  if (x == 0.0) return 0.0;
  if (x < a + 1.0) return gamma_p_series(a, x);
  return 1.0 - gamma_q_cf(a, x);
}

double gamma_q(double a, double x) {
  if (a <= 0.0) throw std::invalid_argument("gamma_q: a must be positive");
  if (x < 0.0) throw std::invalid_argument("gamma_q: x must be nonnegative");
  if (x == 0.0) return 1.0;
  if (x < a + 1.0) return 1.0 - gamma_p_series(a, x);
  return gamma_q_cf(a, x);
}

double chisq_cdf(double x, double df) {
  if (x <= 0.0) return 0.0;
  return gamma_p(0.5 * df, 0.5 * x);
}

double chisq_sf(double x, double df) {
  if (x <= 0.0) return 1.0;
  return gamma_q(0.5 * df, 0.5 * x);
}

double chisq_quantile(double prob, double df) {
  if (prob <= 0.0 || prob >= 1.0)
    throw std::invalid_argument("chisq_quantile: prob must be in (0,1)");
  // Bracket, then bisect; the CDF is monotone and cheap.
  double lo = 0.0;
  double hi = std::max(1.0, df);
  while (chisq_cdf(hi, df) < prob) hi *= 2.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (chisq_cdf(mid, df) < prob)
      lo = mid;
    else
      hi = mid;
    if (hi - lo < 1e-12 * (1.0 + hi)) break;
  }
  return 0.5 * (lo + hi);
}

double noncentral_chisq_cdf(double x, double df, double ncp) {
  if (x <= 0.0) return 0.0;
  if (ncp < 0.0) throw std::invalid_argument("noncentral_chisq_cdf: ncp < 0");
  if (ncp == 0.0) return chisq_cdf(x, df);

  const double half = 0.5 * ncp;
  // Start at the modal Poisson term and expand both ways until the
  // remaining mass is below tolerance.
  const int k0 = static_cast<int>(half);
  double log_w0 = -half + k0 * std::log(half) - std::lgamma(k0 + 1.0);
  double w_up = std::exp(log_w0);
  double w_down = w_up;
  double cdf = w_up * chisq_cdf(x, df + 2.0 * k0);
  double mass = w_up;

  int k_up = k0;
  int k_down = k0;
  for (int iter = 0; iter < 100000 && mass < 1.0 - 1e-12; ++iter) {
    bool moved = false;
    if (w_up > 0.0) {
      ++k_up;
      w_up *= half / k_up;
      cdf += w_up * chisq_cdf(x, df + 2.0 * k_up);
      mass += w_up;
      moved = true;
      if (w_up < 1e-17 * (1.0 + mass)) w_up = 0.0;
    }
    if (k_down > 0) {
      w_down *= k_down / half;
      --k_down;
      cdf += w_down * chisq_cdf(x, df + 2.0 * k_down);
      mass += w_down;
      moved = true;
      if (k_down == 0) w_down = 0.0;
    }
    if (!moved) break;
  }
  return std::min(1.0, cdf);
}

double noncentral_chisq_sf(double x, double df, double ncp) {
  return 1.0 - noncentral_chisq_cdf(x, df, ncp);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double logistic(double x) {
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double log1pexp(double x) {
  if (x > 35.0) return x;
  if (x < -35.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

double ks_statistic_uniform(std::span<const double> values) {
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const double n = static_cast<double>(v.size());
  double d = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double f = v[i];
    d = std::max(d, (i + 1) / n - f);
    d = std::max(d, f - i / n);
  }
  return d;
}

double ks_pvalue(double d, std::size_t n) {
  const double sn = std::sqrt(static_cast<double>(n));
  const double t = (sn + 0.12 + 0.11 / sn) * d;
  // Kolmogorov tail series.
  double sum = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = 2.0 * std::pow(-1.0, k - 1) * std::exp(-2.0 * k * k * t * t);
    sum += term;
    if (std::fabs(term) < 1e-12) break;
  }
  return std::clamp(sum, 0.0, 1.0);
}

double ks_distance(std::span<const double> a, std::span<const double> b) {
  std::vector<double> x(a.begin(), a.end());
  std::vector<double> y(b.begin(), b.end());
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  const double nx = static_cast<double>(x.size());
  const double ny = static_cast<double>(y.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < x.size() && j < y.size()) {
    const double t = std::min(x[i], y[j]);
    while (i < x.size() && x[i] <= t) ++i;
    while (j < y.size() && y[j] <= t) ++j;
    d = std::max(d, std::fabs(i / nx - j / ny));
  }
  return d;
}

}  // namespace gentau::stats
