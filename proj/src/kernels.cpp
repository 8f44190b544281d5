#include "gentau/kernels.hpp"

#include "gentau/pedigree.hpp"
#include "gentau/propodds.hpp"
#include "gentau/stats.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace gentau {

Vector trait_kernel(const TraitVector& ti, const TraitVector& tj,
                    std::span<const TraitSpec> specs) {
  const Eigen::Index p = ti.values.size();
  if (tj.values.size() != p || static_cast<Eigen::Index>(specs.size()) != p)
    throw std::invalid_argument("trait_kernel: component kind mismatch");
  if (!ti.complete() || !tj.complete())
    throw std::invalid_argument("trait_kernel: missing trait component");
  Vector f(p);
  for (Eigen::Index k = 0; k < p; ++k) {
    const double d = ti.values[k] - tj.values[k];
    f[k] = specs[k].kind == TraitKind::ordinal ? static_cast<double>((d > 0) - (d < 0)) : d;
  }
  return f;
}

Vector CovariateScaler::apply(const Vector& z_cont) const {
  Vector out = z_cont - mean;
  for (Eigen::Index k = 0; k < out.size(); ++k)
    if (sd[k] > 0.0) out[k] /= sd[k];
  return out;
}

CovariateScaler fit_scaler(const Cohort& cohort) {
  const Eigen::Index q = static_cast<Eigen::Index>(cohort.covariate_spec.cont_names.size());
  CovariateScaler scaler{Vector::Zero(q), Vector::Ones(q)};
  if (q == 0 || cohort.covariates.empty()) return scaler;

  double n = 0.0;
  Vector sum = Vector::Zero(q);
  Vector sumsq = Vector::Zero(q);
  for (const auto& [id, cv] : cohort.covariates) {
    sum += cv.z_cont;
    sumsq += cv.z_cont.cwiseProduct(cv.z_cont);
    n += 1.0;
  }
  scaler.mean = sum / n;
  for (Eigen::Index k = 0; k < q; ++k) {
    const double var = sumsq[k] / n - scaler.mean[k] * scaler.mean[k];
    scaler.sd[k] = var > 0.0 ? std::sqrt(var) : 0.0;
  }
  return scaler;
}

double covariate_weight(const CovariateVector& zi, const CovariateVector& zj,
                        const WeightConfig& cfg) {
  if (zi.z_cat != zj.z_cat) return 0.0;
  if (zi.z_cont.size() == 0) return 1.0;
  if (cfg.bandwidth <= 0.0)
    throw std::invalid_argument("covariate_weight: bandwidth must be positive");
  const double u2 = (zi.z_cont - zj.z_cont).squaredNorm();
  return std::exp(-u2 / (2.0 * cfg.bandwidth * cfg.bandwidth));
}

double default_bandwidth(const Cohort& cohort, const CovariateScaler& scaler) {
  std::vector<Vector> zs;
  zs.reserve(cohort.covariates.size());
  // deterministic order: walk pedigrees, not the hash map
  for (const auto& ped : cohort.pedigrees) {
    for (const auto& ind : ped.members) {
      auto it = cohort.covariates.find(ind.id);
      if (it != cohort.covariates.end() && it->second.z_cont.size() > 0)
        zs.push_back(scaler.apply(it->second.z_cont));
    }
  }
  std::vector<double> dists;
  dists.reserve(zs.size() * (zs.size() - 1) / 2);
  for (std::size_t i = 0; i < zs.size(); ++i)
    for (std::size_t j = i + 1; j < zs.size(); ++j) {
      const double d = (zs[i] - zs[j]).norm();
      if (d > 0.0) dists.push_back(d);
    }
  if (dists.empty()) return 1.0;
  const std::size_t mid = dists.size() / 2;
  std::nth_element(dists.begin(), dists.begin() + mid, dists.end());
  return dists[mid];
}

Matrix covariate_design(const Cohort& cohort, std::span<const std::string> ids) {
  return covariate_design(cohort, ids, cohort.covariate_spec.cont_names,
                          cohort.covariate_spec.cat_names);
}

Matrix covariate_design(const Cohort& cohort, std::span<const std::string> ids,
                        std::span<const std::string> cont_names,
                        std::span<const std::string> cat_names) {
  const CovariateScaler scaler = fit_scaler(cohort);

  auto column_of = [](const std::vector<std::string>& names, const std::string& n) {
    for (std::size_t k = 0; k < names.size(); ++k)
      if (names[k] == n) return k;
    throw std::invalid_argument("unknown covariate '" + n + "'");
  };
  std::vector<std::size_t> cont_cols, cat_cols;
  for (const auto& n : cont_names)
    cont_cols.push_back(column_of(cohort.covariate_spec.cont_names, n));
  for (const auto& n : cat_names)
    cat_cols.push_back(column_of(cohort.covariate_spec.cat_names, n));

  // observed levels per categorical covariate; smallest code is reference
  std::vector<std::vector<int>> levels(cat_cols.size());
  for (std::size_t c = 0; c < cat_cols.size(); ++c) {
    std::set<int> seen;
    for (const auto& id : ids) {
      auto it = cohort.covariates.find(id);
      if (it == cohort.covariates.end())
        throw std::invalid_argument("covariate_design: no covariates for '" + id + "'");
      seen.insert(it->second.z_cat[cat_cols[c]]);
    }
    levels[c].assign(std::next(seen.begin()), seen.end());
  }

  std::size_t n_dummy = 0;
  for (const auto& lv : levels) n_dummy += lv.size();

  Matrix Z(static_cast<Eigen::Index>(ids.size()),
           static_cast<Eigen::Index>(cont_cols.size() + n_dummy));
  for (std::size_t r = 0; r < ids.size(); ++r) {
    const CovariateVector& cv = cohort.covariates.at(ids[r]);
    const Vector zc = scaler.apply(cv.z_cont);
    Eigen::Index col = 0;
    for (std::size_t k : cont_cols) Z(static_cast<Eigen::Index>(r), col++) = zc[static_cast<Eigen::Index>(k)];
    for (std::size_t c = 0; c < cat_cols.size(); ++c)
      for (int lv : levels[c])
        Z(static_cast<Eigen::Index>(r), col++) = cv.z_cat[cat_cols[c]] == lv ? 1.0 : 0.0;
  }
  return Z;
}

namespace {

// Binomial-logit fit: y_i successes out of trials_i with logit link,
// intercept plus covariates. Damped Newton; used for the carrier and
// allele-count propensity routes.
struct BinomFit {
  Vector coef;
  Vector se;
  int iterations = 0;
  bool converged = false;
};

BinomFit fit_binomial_logit(const Vector& y, const Vector& trials, const Matrix& Z) {
  const Eigen::Index n = y.size();
  const Eigen::Index q = Z.cols() + 1;
  Matrix X(n, q);
  X.col(0).setOnes();
  if (Z.cols() > 0) X.rightCols(Z.cols()) = Z;

  Vector beta = Vector::Zero(q);
  {
    // intercept at the empirical logit
    const double p = std::clamp(y.sum() / trials.sum(), 1e-6, 1.0 - 1e-6);
    beta[0] = std::log(p / (1.0 - p));
  }

  auto loglik = [&](const Vector& b) {
    const Vector eta = X * b;
    double ll = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      ll += y[i] * eta[i] - trials[i] * stats::log1pexp(eta[i]);
    return ll;
  };

  double cur = loglik(beta);
  BinomFit out;
  Matrix info(q, q);
  for (int iter = 0; iter < 100; ++iter) {
    const Vector eta = X * beta;
    Vector mu(n), w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double p = stats::logistic(eta[i]);
      mu[i] = trials[i] * p;
      w[i] = trials[i] * p * (1.0 - p);
    }
    const Vector grad = X.transpose() * (y - mu);
    info = X.transpose() * w.asDiagonal() * X;
    out.iterations = iter;
    if (grad.lpNorm<Eigen::Infinity>() < 1e-8) {
      out.converged = true;
      break;
    }
    Vector step = info.ldlt().solve(grad);
    double scale = 1.0;
    for (int half = 0; half < 50; ++half) {
      const Vector cand = beta + scale * step;
      if (cand.tail(q - 1).size() > 0 &&
          cand.tail(q - 1).lpNorm<Eigen::Infinity>() > 30.0)
        throw SeparationError("genomic_propensity: separation (|coef| > 30)");
      const double ll = loglik(cand);
      if (ll > cur) {
        beta = cand;
        cur = ll;
        break;
      }
      scale *= 0.5;
    }
  }
  if (!out.converged) {
    const Vector eta = X * beta;
    Vector mu(n);
    for (Eigen::Index i = 0; i < n; ++i) mu[i] = trials[i] * stats::logistic(eta[i]);
    const double gnorm = (X.transpose() * (y - mu)).lpNorm<Eigen::Infinity>();
    if (gnorm > 1e-4) {
      std::ostringstream os;
      os << "genomic_propensity: logistic fit did not converge after "
         << out.iterations << " iterations, score max-norm " << gnorm;
      throw NonConvergenceError(os.str());
    }
    out.converged = true;
  }
  out.coef = beta;
  out.se = info.inverse().diagonal().cwiseMax(0.0).cwiseSqrt();
  return out;
}

}  // namespace

PropensityResult genomic_propensity(const Cohort& cohort, const std::string& marker_id,
                                    int chosen_allele, GenotypeCoding coding,
                                    ModeOfInheritance moi) {
  if (!cohort.has_covariates())
    throw std::invalid_argument("genomic_propensity: cohort has no covariates");
  const MarkerData& marker = cohort.marker(marker_id);

  std::vector<std::string> ids;
  std::vector<int> counts;
  for (const auto& ped : cohort.pedigrees) {
    for (const auto& ind : ped.members) {
      const auto c = allele_count(marker.call_for(ind.id), chosen_allele);
      if (!c || !cohort.covariates.count(ind.id)) continue;
      ids.push_back(ind.id);
      counts.push_back(*c);
    }
  }
  if (ids.empty())
    throw DegenerateMarkerError("genomic_propensity: no usable genotypes at " + marker_id);

  const Matrix Z = covariate_design(cohort, ids);
  const Eigen::Index n = static_cast<Eigen::Index>(ids.size());

  PropensityResult res;
  const bool binary_route =
      moi != ModeOfInheritance::additive || coding == GenotypeCoding::allele_count;

  if (binary_route && moi != ModeOfInheritance::additive) {
    // carrier indicator, same under either coding
    Vector y(n), trials = Vector::Ones(n);
    for (Eigen::Index i = 0; i < n; ++i)
      y[i] = moi == ModeOfInheritance::dominant ? (counts[i] >= 1 ? 1.0 : 0.0)
                                                : (counts[i] == 2 ? 1.0 : 0.0);
    if (y.sum() == 0.0 || y.sum() == static_cast<double>(n))
      throw DegenerateMarkerError("genomic_propensity: carrier status is constant at " +
                                  marker_id);
    const BinomFit fit = fit_binomial_logit(y, trials, Z);
    res.coef = fit.coef;
    res.coef_se = fit.se;
    res.iterations = fit.iterations;
    res.converged = fit.converged;
    res.model = moi == ModeOfInheritance::dominant ? "logistic(carrier)" : "logistic(homozygote)";
    Matrix X(n, fit.coef.size());
    X.col(0).setOnes();
    if (Z.cols() > 0) X.rightCols(Z.cols()) = Z;
    const Vector eta = X * fit.coef;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double p = stats::logistic(eta[i]);
      res.propensity[ids[i]] = y[i] == 1.0 ? p : 1.0 - p;
    }
    return res;
  }

  if (coding == GenotypeCoding::allele_count) {
    // additive: each allele slot is one Bernoulli trial
    Vector y(n), trials = Vector::Constant(n, 2.0);
    for (Eigen::Index i = 0; i < n; ++i) y[i] = counts[i];
    if (y.sum() == 0.0 || y.sum() == 2.0 * static_cast<double>(n))
      throw DegenerateMarkerError("genomic_propensity: marker " + marker_id +
                                  " is monomorphic");
    const BinomFit fit = fit_binomial_logit(y, trials, Z);
    res.coef = fit.coef;
    res.coef_se = fit.se;
    res.iterations = fit.iterations;
    res.converged = fit.converged;
    res.model = "binomial2(allele count)";
    Matrix X(n, fit.coef.size());
    X.col(0).setOnes();
    if (Z.cols() > 0) X.rightCols(Z.cols()) = Z;
    const Vector eta = X * fit.coef;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double p = stats::logistic(eta[i]);
      const int c = counts[i];
      const double binom = c == 1 ? 2.0 * p * (1.0 - p) : (c == 2 ? p * p : (1.0 - p) * (1.0 - p));
      res.propensity[ids[i]] = binom;
    }
    return res;
  }

  // genotype coding, additive: proportional odds on the ordered count
  Eigen::VectorXi y(n);
  for (Eigen::Index i = 0; i < n; ++i) y[i] = counts[i];
  const PropOddsFit fit = fit_cumulative_logit(y, Z, 3);
  res.iterations = fit.iterations;
  res.converged = fit.converged;
  res.model = "propodds(genotype)";
  res.coef.resize(fit.alpha.size() + fit.delta.size());
  res.coef << fit.alpha, fit.delta;
  res.coef_se = Vector::Zero(res.coef.size());  // not exposed for this route
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vector z = Z.cols() > 0 ? Vector(Z.row(i).transpose()) : Vector();
    res.propensity[ids[i]] = gamma_hat(fit, counts[i], z) - gamma_hat(fit, counts[i] - 1, z);
  }
  return res;
}

}  // namespace gentau
