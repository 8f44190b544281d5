#pragma once

#include <cstddef>
#include <span>

// Distribution functions used throughout the test statistics. Everything is
// plain double precision; no special-function library is required.

namespace gentau::stats {

/// Regularized lower incomplete gamma P(a, x).
double gamma_p(double a, double x);

/// Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x).
double gamma_q(double a, double x);

/// Central chi-square CDF with (possibly fractional) df > 0.
double chisq_cdf(double x, double df);

/// Upper tail P(X > x) for central chi-square.
double chisq_sf(double x, double df);

/// Quantile of the central chi-square distribution, 0 < prob < 1.
double chisq_quantile(double prob, double df);

/// Noncentral chi-square CDF via the Poisson mixture of central CDFs.
/// The series is truncated once the remaining Poisson mass drops below
/// 1e-12. df > 0, ncp >= 0.
double noncentral_chisq_cdf(double x, double df, double ncp);

/// Upper tail of the noncentral chi-square.
double noncentral_chisq_sf(double x, double df, double ncp);

/// Standard normal CDF.
double normal_cdf(double x);

/// Logistic function 1 / (1 + exp(-x)), stable for large |x|.
double logistic(double x);

/// log(1 + exp(x)) without overflow.
double log1pexp(double x);

/// One-sample Kolmogorov-Smirnov statistic against U(0,1).
/// `values` need not be sorted.
double ks_statistic_uniform(std::span<const double> values);

/// Asymptotic KS p-value with the usual small-sample correction.
double ks_pvalue(double d, std::size_t n);

/// Two-sample KS distance between empirical CDFs; inputs need not be sorted.
double ks_distance(std::span<const double> a, std::span<const double> b);

}  // namespace gentau::stats
