#include "gentau/propodds.hpp"

#include "gentau/stats.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <sstream>

namespace gentau {

namespace {

constexpr double kSeparationBound = 30.0;

// alpha from the reparameterized vector psi = (a0, d_1.., delta..):
// alpha_k = a0 + sum_{j<=k} exp(d_j).
Vector alphas_from_psi(const Vector& psi, int m) {
  Vector alpha(m);
  alpha[0] = psi[0];
  for (int k = 1; k < m; ++k) alpha[k] = alpha[k - 1] + std::exp(psi[k]);
  return alpha;
}

struct ScoreInfo {
  double loglik;
  Vector grad;   // w.r.t. (alpha_0..alpha_{m-1}, delta)
  Matrix hess;   // same space
};

ScoreInfo evaluate(const Eigen::VectorXi& y, const Matrix& Z, const Vector& w,
                   const Vector& offsets, const Vector& alpha, const Vector& delta,
                   bool with_hessian) {
  const int m = static_cast<int>(alpha.size());
  const int q = static_cast<int>(delta.size());
  const int dim = m + q;
  ScoreInfo out{0.0, Vector::Zero(dim), Matrix::Zero(dim, dim)};

  const bool has_z = q > 0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double wi = w[i];
    if (wi == 0.0) continue;
    const int k = y[i];
    double eta = has_z ? delta.dot(Z.row(i)) : 0.0;
    if (offsets.size() > 0) eta += offsets[i];

    const bool has_u = k <= m - 1;   // upper cut exists unless top level
    const bool has_l = k >= 1;       // lower cut exists unless bottom level
    const double su = has_u ? stats::logistic(alpha[k] + eta) : 1.0;
    const double sl = has_l ? stats::logistic(alpha[k - 1] + eta) : 0.0;
    const double cell = su - sl;
    if (cell <= 0.0) {
      out.loglik = -std::numeric_limits<double>::infinity();
      return out;
    }
    out.loglik += wi * std::log(cell);

    const double du = has_u ? su * (1.0 - su) : 0.0;  // sigma'(u)
    const double dl = has_l ? sl * (1.0 - sl) : 0.0;
    const double gu = du / cell;
    const double gl = -dl / cell;

    if (has_u) out.grad[k] += wi * gu;
    if (has_l) out.grad[k - 1] += wi * gl;
    if (has_z) out.grad.tail(q) += wi * (gu + gl) * Z.row(i).transpose();

    if (!with_hessian) continue;
    const double huu = has_u ? du * (1.0 - 2.0 * su) / cell - gu * gu : 0.0;
    const double hll = has_l ? -dl * (1.0 - 2.0 * sl) / cell - gl * gl : 0.0;
    const double hul = (has_u && has_l) ? du * dl / (cell * cell) : 0.0;

    if (has_u) out.hess(k, k) += wi * huu;
    if (has_l) out.hess(k - 1, k - 1) += wi * hll;
    if (has_u && has_l) {
      out.hess(k, k - 1) += wi * hul;
      out.hess(k - 1, k) += wi * hul;
    }
    if (has_z) {
      const auto zi = Z.row(i).transpose();
      const double hee = huu + hll + 2.0 * hul;
      if (has_u) {
        out.hess.block(k, m, 1, q) += wi * (huu + hul) * zi.transpose();
        out.hess.block(m, k, q, 1) += wi * (huu + hul) * zi;
      }
      if (has_l) {
        out.hess.block(k - 1, m, 1, q) += wi * (hll + hul) * zi.transpose();
        out.hess.block(m, k - 1, q, 1) += wi * (hll + hul) * zi;
      }
      out.hess.bottomRightCorner(q, q) += wi * hee * (zi * zi.transpose());
    }
  }
  return out;
}

// Empirical cumulative logits for initialization; increments clamped so the
// log-parameterization stays finite.
Vector initial_alpha(const Eigen::VectorXi& y, const Vector& w, int levels) {
  Vector counts = Vector::Zero(levels);
  double total = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    counts[y[i]] += w[i];
    total += w[i];
  }
  Vector alpha(levels - 1);
  double cum = 0.0;
  for (int k = 0; k < levels - 1; ++k) {
    cum += counts[k];
    double p = cum / total;
    p = std::clamp(p, 1e-6, 1.0 - 1e-6);
    alpha[k] = std::log(p / (1.0 - p));
  }
  for (int k = 1; k < levels - 1; ++k)
    if (alpha[k] <= alpha[k - 1] + 1e-6) alpha[k] = alpha[k - 1] + 1e-6;
  return alpha;
}

}  // namespace

double cumulative_logit_loglik(const Eigen::VectorXi& y, const Matrix& Z,
                               const Vector& alpha, const Vector& delta) {
  const Vector w = Vector::Ones(y.size());
  return evaluate(y, Z, w, Vector(), alpha, delta, false).loglik;
}

Vector cumulative_logit_score(const Eigen::VectorXi& y, const Matrix& Z,
                              const Vector& alpha, const Vector& delta) {
  const Vector w = Vector::Ones(y.size());
  return evaluate(y, Z, w, Vector(), alpha, delta, false).grad;
}

PropOddsFit fit_cumulative_logit(const Eigen::VectorXi& y, const Matrix& Z,
                                 int levels, double tol, int max_iter) {
  return fit_cumulative_logit_weighted(y, Z, Vector::Ones(y.size()), levels,
                                       std::nullopt, tol, max_iter);
}

PropOddsFit fit_cumulative_logit_weighted(const Eigen::VectorXi& y, const Matrix& Z,
                                          const Vector& weights, int levels,
                                          const std::optional<PropOddsFit>& init,
                                          double tol, int max_iter,
                                          const Vector& offsets,
                                          bool require_convergence) {
  if (y.size() == 0) throw std::invalid_argument("fit_cumulative_logit: empty response");
  if (Z.cols() > 0 && Z.rows() != y.size())
    throw std::invalid_argument("fit_cumulative_logit: design row mismatch");
  if (weights.size() != y.size())
    throw std::invalid_argument("fit_cumulative_logit: weight length mismatch");

  if (levels < 0) levels = y.maxCoeff() + 1;
  int observed = 0;
  {
    std::vector<bool> seen(levels, false);
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      if (y[i] < 0 || y[i] >= levels)
        throw std::invalid_argument("fit_cumulative_logit: level out of range");
      if (weights[i] > 0.0 && !seen[y[i]]) {
        seen[y[i]] = true;
        ++observed;
      }
    }
  }
  if (observed < 2)
    throw std::invalid_argument("fit_cumulative_logit: fewer than 2 observed levels");

  const int m = levels - 1;
  const int q = static_cast<int>(Z.cols());
  const int dim = m + q;

  // psi = (alpha_0, log increments, delta)
  Vector psi(dim);
  if (init && init->alpha.size() == m && init->delta.size() == q) {
    psi[0] = init->alpha[0];
    for (int k = 1; k < m; ++k)
      psi[k] = std::log(std::max(init->alpha[k] - init->alpha[k - 1], 1e-8));
    psi.tail(q) = init->delta;
  } else {
    const Vector a0 = initial_alpha(y, weights, levels);
    psi[0] = a0[0];
    for (int k = 1; k < m; ++k) psi[k] = std::log(a0[k] - a0[k - 1]);
    psi.tail(q).setZero();
  }

  if (offsets.size() > 0 && offsets.size() != y.size())
    throw std::invalid_argument("fit_cumulative_logit: offset length mismatch");

  Vector alpha = alphas_from_psi(psi, m);
  Vector delta = psi.tail(q);
  ScoreInfo cur = evaluate(y, Z, weights, offsets, alpha, delta, true);

  PropOddsFit fit;
  fit.levels = levels;
  int iter = 0;
  for (; iter < max_iter; ++iter) {
    if (cur.grad.lpNorm<Eigen::Infinity>() < tol) break;

    // chain rule into psi space
    Matrix J = Matrix::Zero(dim, dim);
    for (int k = 0; k < m; ++k) {
      J(k, 0) = 1.0;
      for (int j = 1; j <= k; ++j) J(k, j) = std::exp(psi[j]);
    }
    J.bottomRightCorner(q, q).setIdentity();
    Vector grad_psi = J.transpose() * cur.grad;
    Matrix hess_psi = J.transpose() * cur.hess * J;
    for (int j = 1; j < m; ++j) {
      double tail_grad = 0.0;
      for (int k = j; k < m; ++k) tail_grad += cur.grad[k];
      hess_psi(j, j) += tail_grad * std::exp(psi[j]);
    }

    // Newton direction on the negated Hessian; ridge until it is an ascent
    // direction.
    Vector step;
    double ridge = 0.0;
    for (int attempt = 0; attempt < 12; ++attempt) {
      Matrix A = -hess_psi;
      if (ridge > 0.0) A.diagonal().array() += ridge;
      Eigen::LDLT<Matrix> ldlt(A);
      if (ldlt.info() == Eigen::Success) {
        step = ldlt.solve(grad_psi);
        if (step.dot(grad_psi) > 0.0 && step.allFinite()) break;
      }
      ridge = ridge == 0.0 ? 1e-4 : ridge * 10.0;
      step = grad_psi;  // gradient fallback
    }

    // backtracking on the log-likelihood
    double scale = 1.0;
    bool improved = false;
    for (int half = 0; half < 60; ++half) {
      const Vector cand = psi + scale * step;
      const Vector a = alphas_from_psi(cand, m);
      const Vector d = cand.tail(q);
      if (d.lpNorm<Eigen::Infinity>() > kSeparationBound) {
        std::ostringstream os;
        os << "complete separation suspected: |delta| exceeded " << kSeparationBound
           << " at iteration " << iter;
        throw SeparationError(os.str());
      }
      const ScoreInfo cand_info = evaluate(y, Z, weights, offsets, a, d, true);
      if (std::isfinite(cand_info.loglik) && cand_info.loglik > cur.loglik) {
        psi = cand;
        alpha = a;
        delta = d;
        cur = cand_info;
        improved = true;
        break;
      }
      scale *= 0.5;
    }
    if (!improved) break;  // cannot move; report score norm below
  }

  if (q > 0 && delta.lpNorm<Eigen::Infinity>() > kSeparationBound)
    throw SeparationError("complete separation suspected: |delta| exceeded 30");

  fit.alpha = alpha;
  fit.delta = delta;
  fit.loglik = cur.loglik;
  fit.iterations = iter;
  fit.converged = cur.grad.lpNorm<Eigen::Infinity>() < tol;
  if (!fit.converged && require_convergence &&
      cur.grad.lpNorm<Eigen::Infinity>() > 1e-4) {
    std::ostringstream os;
    os << "cumulative-logit fit did not converge: " << iter
       << " iterations, score max-norm " << cur.grad.lpNorm<Eigen::Infinity>();
    throw NonConvergenceError(os.str());
  }
  return fit;
}

double gamma_hat(const PropOddsFit& fit, int k, const Vector& z) {
  if (k < -1 || k > fit.levels - 1)
    throw std::invalid_argument("gamma_hat: level outside [-1, K-1]");
  if (k == -1) return 0.0;
  if (k == fit.levels - 1) return 1.0;
  const double eta = fit.delta.size() > 0 ? fit.delta.dot(z) : 0.0;
  return stats::logistic(fit.alpha[k] + eta);
}

}  // namespace gentau
