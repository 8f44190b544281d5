#pragma once

#include "gentau/types.hpp"

#include <optional>

namespace gentau {

/// Cumulative-logit model  logit P(Y <= k | z) = alpha_k + delta'z,
/// k = 0..K-2 for a K-level response. Positive delta'z raises the
/// probability of low trait values, matching the conventions of the
/// association models built on top of it.
struct PropOddsFit {
  Vector alpha;  // K-1 cumulative intercepts, nondecreasing
  Vector delta;  // covariate coefficients
  int levels = 0;
  double loglik = 0.0;
  bool converged = false;
  int iterations = 0;
};

class NonConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SeparationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Maximum likelihood by damped Newton iterations. Monotone alpha is kept by
/// construction: alpha_0 is free and the increments are log-parameterized.
/// Converges when the score max-norm drops below `tol` (default 1e-8) within
/// `max_iter` iterations. Throws SeparationError when any |delta| passes 30
/// (no finite MLE) and NonConvergenceError otherwise on failure.
///
/// `y` holds levels in {0..levels-1}; `Z` is n x q (q may be 0);
/// levels is inferred as max(y)+1 unless given.
PropOddsFit fit_cumulative_logit(const Eigen::VectorXi& y, const Matrix& Z,
                                 int levels = -1, double tol = 1e-8,
                                 int max_iter = 100);

/// Weighted variant: observation i contributes weight w_i >= 0 to the
/// log-likelihood, and `offsets` (when nonempty) adds a fixed per-row term
/// to the linear predictor. Used by the EM machinery, where
/// pseudo-observations carry posterior weights and frozen coefficients enter
/// through the offset. An optional warm start skips the empirical-logit
/// init. With `require_convergence` false the best iterate is returned
/// instead of throwing, which is what a generalized-EM M-step needs.
PropOddsFit fit_cumulative_logit_weighted(
    const Eigen::VectorXi& y, const Matrix& Z, const Vector& weights,
    int levels = -1, const std::optional<PropOddsFit>& init = std::nullopt,
    double tol = 1e-8, int max_iter = 100, const Vector& offsets = Vector(),
    bool require_convergence = true);

/// Fitted P(Y <= k | z). Boundary convention: k = -1 gives 0 and
/// k = levels-1 gives 1; interior k uses logistic(alpha_k + delta'z).
double gamma_hat(const PropOddsFit& fit, int k, const Vector& z);

/// Log-likelihood of (y, Z) under fixed parameters; shared by the fitter and
/// by model evaluation elsewhere.
double cumulative_logit_loglik(const Eigen::VectorXi& y, const Matrix& Z,
                               const Vector& alpha, const Vector& delta);

/// Analytic score w.r.t. (alpha_0..alpha_{K-2}, delta).
Vector cumulative_logit_score(const Eigen::VectorXi& y, const Matrix& Z,
                              const Vector& alpha, const Vector& delta);

}  // namespace gentau
