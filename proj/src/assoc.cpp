#include "gentau/assoc.hpp"

#include "gentau/pedigree.hpp"
#include "gentau/propodds.hpp"
#include "gentau/stats.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace gentau {

std::string method_name(AssocMethod m) {
  switch (m) {
    case AssocMethod::tdt: return "tdt";
    case AssocMethod::qtdt: return "qtdt";
    case AssocMethod::otdt: return "otdt";
    case AssocMethod::otdt_adjusted: return "otdt_adjusted";
    case AssocMethod::gen_tau: return "gen_tau";
    case AssocMethod::gen_tau_weighted: return "gen_tau_weighted";
  }
  return "unknown";
}

std::vector<std::pair<int, double>> OffspringTransmissionLaw::support() const {
  std::vector<std::pair<int, double>> s;
  for (int c = 0; c < 3; ++c)
    if (prob[c] > 0.0) s.emplace_back(c, prob[c]);
  return s;
}

OffspringTransmissionLaw mendelian_offspring_law(const GenotypeCall& father,
                                                 const GenotypeCall& mother,
                                                 int chosen_allele) {
  if (father.missing || mother.missing)
    throw std::invalid_argument("mendelian_offspring_law: missing parental genotype");
  // probability each parent transmits the chosen allele
  const double pf = 0.5 * static_cast<double>(*allele_count(father, chosen_allele));
  const double pm = 0.5 * static_cast<double>(*allele_count(mother, chosen_allele));
  OffspringTransmissionLaw law;
  law.prob[0] = (1.0 - pf) * (1.0 - pm);
  law.prob[1] = pf * (1.0 - pm) + (1.0 - pf) * pm;
  law.prob[2] = pf * pm;
  return law;
}

namespace detail {

std::vector<int> resolve_traits(const Cohort& cohort,
                                const std::vector<std::string>& selection) {
  std::vector<int> idx;
  if (selection.empty()) {
    idx.resize(cohort.trait_specs.size());
    std::iota(idx.begin(), idx.end(), 0);
  } else {
    for (const auto& name : selection) idx.push_back(cohort.trait_index(name));
  }
  if (idx.empty()) throw std::invalid_argument("no traits selected");
  return idx;
}

std::vector<Subject> collect_sample(const Cohort& cohort, const MarkerData& marker,
                                    int chosen_allele,
                                    const std::vector<int>& trait_idx,
                                    bool need_covariates) {
  const CovariateScaler scaler =
      need_covariates ? fit_scaler(cohort) : CovariateScaler{Vector(), Vector()};

  std::vector<Subject> sample;
  auto try_add = [&](const Individual& ind, double e0, double v0, int c) {
    auto t_it = cohort.traits.find(ind.id);
    if (t_it == cohort.traits.end()) return;
    TraitVector selected;
    selected.values.resize(static_cast<Eigen::Index>(trait_idx.size()));
    for (std::size_t k = 0; k < trait_idx.size(); ++k)
      selected.values[static_cast<Eigen::Index>(k)] = t_it->second.values[trait_idx[k]];
    if (!selected.complete()) return;

    Subject s;
    s.id = ind.id;
    s.c = c;
    s.e0 = e0;
    s.v0 = v0;
    s.traits = std::move(selected);
    if (need_covariates) {
      auto z_it = cohort.covariates.find(ind.id);
      if (z_it == cohort.covariates.end()) return;
      s.z.z_cont = scaler.apply(z_it->second.z_cont);
      s.z.z_cat = z_it->second.z_cat;
      s.has_z = true;
    }
    sample.push_back(std::move(s));
  };

  if (cohort.mode == CohortMode::family) {
    for (const auto& ped : cohort.pedigrees) {
      for (std::size_t i : ped.nonfounder_idx) {
        const Individual& child = ped.members[i];
        const GenotypeCall& gc = marker.call_for(child.id);
        const GenotypeCall& gf = marker.call_for(*child.father_id);
        const GenotypeCall& gm = marker.call_for(*child.mother_id);
        if (gc.missing || gf.missing || gm.missing) continue;
        const auto law = mendelian_offspring_law(gf, gm, chosen_allele);
        try_add(child, law.mean(), law.variance(), *allele_count(gc, chosen_allele));
      }
    }
  } else {
    for (const auto& ped : cohort.pedigrees) {
      for (const auto& ind : ped.members) {
        const GenotypeCall& g = marker.call_for(ind.id);
        if (g.missing) continue;
        try_add(ind, 0.0, 0.0, *allele_count(g, chosen_allele));
      }
    }
    // unconditional moments from the sample itself
    if (sample.size() >= 2) {
      double mean = 0.0;
      for (const auto& s : sample) mean += s.c;
      mean /= static_cast<double>(sample.size());
      double var = 0.0;
      for (const auto& s : sample) var += (s.c - mean) * (s.c - mean);
      var /= static_cast<double>(sample.size() - 1);
      for (auto& s : sample) {
        s.e0 = mean;
        s.v0 = var;
      }
    }
  }
  return sample;
}

}  // namespace detail

namespace {

using detail::Subject;

void require_marker_informative(const std::vector<Subject>& sample,
                                const std::string& marker_id) {
  for (const auto& s : sample)
    if (s.v0 > 0.0) return;
  throw DegenerateMarkerError("marker " + marker_id +
                              " carries no transmission variance "
                              "(monomorphic or all informative parents homozygous)");
}

/// chi-square through the Moore-Penrose pseudo-inverse of V; df = rank.
void quadratic_form(const Vector& d, const Matrix& V, AssocResult& out) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(V);
  const Vector evals = es.eigenvalues();
  const double lmax = evals.size() > 0 ? evals.maxCoeff() : 0.0;
  const double tol = 1e-10 * std::max(lmax, 0.0);

  double stat = 0.0;
  int rank = 0;
  for (Eigen::Index k = 0; k < evals.size(); ++k) {
    if (evals[k] > tol && evals[k] > 0.0) {
      const double proj = es.eigenvectors().col(k).dot(d);
      stat += proj * proj / evals[k];
      ++rank;
    }
  }
  if (rank == 0) {
    // no variance anywhere: the deviation is identically zero as well
    out.statistic = 0.0;
    out.df = 1;
    out.p_value = 1.0;
    return;
  }
  out.statistic = stat;
  out.df = rank;
  out.p_value = stats::chisq_sf(stat, static_cast<double>(rank));
}

AssocResult scalar_score_result(const std::string& marker_id, AssocMethod method,
                                const std::vector<Subject>& sample,
                                const std::vector<double>& w) {
  double S = 0.0, E = 0.0, V = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    S += w[i] * sample[i].c;
    E += w[i] * sample[i].e0;
    V += w[i] * w[i] * sample[i].v0;
  }
  if (V <= 0.0)
    throw DegenerateVarianceError(method_name(method) +
                                  ": zero conditional variance (weights vanish on every "
                                  "informative transmission)");
  AssocResult out;
  out.marker_id = marker_id;
  out.method = method;
  out.n_used = static_cast<int>(sample.size());
  out.S = Vector::Constant(1, S);
  out.E0_S = Vector::Constant(1, E);
  out.Var0_S = Matrix::Constant(1, 1, V);
  out.statistic = (S - E) * (S - E) / V;
  out.df = 1;
  out.p_value = stats::chisq_sf(out.statistic, 1.0);
  return out;
}

int require_single_ordinal(const Cohort& cohort, const std::string& trait_name) {
  const int t = cohort.trait_index(trait_name);
  if (cohort.trait_specs[t].kind != TraitKind::ordinal)
    throw std::invalid_argument("trait '" + trait_name + "' is not ordinal");
  return t;
}

}  // namespace

AssocResult gen_tau_statistic(const Cohort& cohort, const std::string& marker_id,
                              int chosen_allele,
                              const std::vector<std::string>& trait_selection,
                              const std::optional<WeightConfig>& weights) {
  const MarkerData& marker = cohort.marker(marker_id);
  const std::vector<int> trait_idx = detail::resolve_traits(cohort, trait_selection);
  const bool weighted = weights.has_value();

  auto sample = detail::collect_sample(cohort, marker, chosen_allele, trait_idx, weighted);
  const std::size_t n = sample.size();
  if (n < 2)
    throw std::invalid_argument("gen_tau: fewer than 2 usable subjects at " + marker_id);
  require_marker_informative(sample, marker_id);

  WeightConfig cfg;
  if (weighted) {
    cfg = *weights;
    if (cfg.bandwidth <= 0.0) cfg.bandwidth = default_bandwidth(cohort, fit_scaler(cohort));
  }

  std::vector<TraitSpec> specs;
  for (int t : trait_idx) specs.push_back(cohort.trait_specs[t]);
  const Eigen::Index p = static_cast<Eigen::Index>(trait_idx.size());

  // linear form: u_bar_i = n^{-1} sum_{j != i} F_ij w_ij
  Matrix ubar = Matrix::Zero(p, static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const Vector f = trait_kernel(sample[i].traits, sample[j].traits, specs);
      const double w = weighted ? covariate_weight(sample[i].z, sample[j].z, cfg) : 1.0;
      ubar.col(static_cast<Eigen::Index>(i)) += w * f;
      ubar.col(static_cast<Eigen::Index>(j)) -= w * f;  // antisymmetry
    }
  }
  ubar /= static_cast<double>(n);

  const double scale = 2.0 / static_cast<double>(n - 1);
  Vector S = Vector::Zero(p);
  Vector E0 = Vector::Zero(p);
  Matrix V0 = Matrix::Zero(p, p);
  for (std::size_t i = 0; i < n; ++i) {
    const auto u = ubar.col(static_cast<Eigen::Index>(i));
    S += u * static_cast<double>(sample[i].c);
    E0 += u * sample[i].e0;
    V0 += sample[i].v0 * (u * u.transpose());
  }
  S *= scale;
  E0 *= scale;
  V0 *= scale * scale;

  AssocResult out;
  out.marker_id = marker_id;
  out.method = weighted ? AssocMethod::gen_tau_weighted : AssocMethod::gen_tau;
  out.n_used = static_cast<int>(n);
  out.S = S;
  out.E0_S = E0;
  out.Var0_S = V0;
  quadratic_form(S - E0, V0, out);
  return out;
}

AssocResult otdt_statistic(const Cohort& cohort, const std::string& marker_id,
                           int chosen_allele, const std::string& trait_name) {
  const MarkerData& marker = cohort.marker(marker_id);
  const int t = require_single_ordinal(cohort, trait_name);

  auto sample = detail::collect_sample(cohort, marker, chosen_allele, {t}, false);
  if (sample.size() < 2)
    throw std::invalid_argument("otdt: fewer than 2 usable subjects at " + marker_id);
  require_marker_informative(sample, marker_id);

  // R+/R- from the level histogram of the entire usable sample
  const int levels = cohort.trait_specs[t].levels;
  std::vector<double> count(levels, 0.0);
  for (const auto& s : sample) count[static_cast<int>(s.traits.values[0])] += 1.0;
  std::vector<double> below(levels, 0.0), above(levels, 0.0);
  for (int k = 1; k < levels; ++k) below[k] = below[k - 1] + count[k - 1];
  for (int k = levels - 2; k >= 0; --k) above[k] = above[k + 1] + count[k + 1];

  std::vector<double> w(sample.size());
  bool any = false;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const int y = static_cast<int>(sample[i].traits.values[0]);
    w[i] = above[y] - below[y];
    any = any || w[i] != 0.0;
  }
  if (!any)
    throw DegenerateVarianceError("otdt: all trait values tied, score has zero variance");
  return scalar_score_result(marker_id, AssocMethod::otdt, sample, w);
}

AssocResult otdt_adjusted_statistic(const Cohort& cohort, const std::string& marker_id,
                                    int chosen_allele, const std::string& trait_name,
                                    const std::vector<std::string>& covariate_selection) {
  const MarkerData& marker = cohort.marker(marker_id);
  const int t = require_single_ordinal(cohort, trait_name);
  // a covariate-free cohort degrades to an intercept-only null model
  const bool use_covariates = cohort.has_covariates();

  auto sample = detail::collect_sample(cohort, marker, chosen_allele, {t}, use_covariates);
  if (sample.size() < 2)
    throw std::invalid_argument("otdt_adjusted: fewer than 2 usable subjects at " + marker_id);
  require_marker_informative(sample, marker_id);

  // null model: trait on covariates, no genetic term
  std::vector<std::string> cont_sel, cat_sel;
  if (covariate_selection.empty()) {
    cont_sel = cohort.covariate_spec.cont_names;
    cat_sel = cohort.covariate_spec.cat_names;
  } else {
    for (const auto& name : covariate_selection) {
      const auto& cs = cohort.covariate_spec;
      if (std::find(cs.cont_names.begin(), cs.cont_names.end(), name) != cs.cont_names.end())
        cont_sel.push_back(name);
      else if (std::find(cs.cat_names.begin(), cs.cat_names.end(), name) != cs.cat_names.end())
        cat_sel.push_back(name);
      else
        throw std::invalid_argument("unknown covariate '" + name + "'");
    }
  }
  std::vector<std::string> ids;
  for (const auto& s : sample) ids.push_back(s.id);
  const Matrix Z = use_covariates
                       ? covariate_design(cohort, ids, cont_sel, cat_sel)
                       : Matrix(static_cast<Eigen::Index>(sample.size()), 0);

  const int levels = cohort.trait_specs[t].levels;
  Eigen::VectorXi y(static_cast<Eigen::Index>(sample.size()));
  for (std::size_t i = 0; i < sample.size(); ++i)
    y[static_cast<Eigen::Index>(i)] = static_cast<int>(sample[i].traits.values[0]);
  if (y.minCoeff() == y.maxCoeff())
    throw DegenerateVarianceError("otdt_adjusted: all trait values tied, score has zero variance");

  const PropOddsFit fit = fit_cumulative_logit(y, Z, levels);
  if (!fit.converged)
    throw NonConvergenceError("otdt_adjusted: null cumulative-logit fit did not converge");

  // weight: fitted P(Y > y_i | z) - P(Y < y_i | z)
  std::vector<double> w(sample.size());
  bool any = false;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const Vector z = Z.cols() > 0 ? Vector(Z.row(static_cast<Eigen::Index>(i)).transpose())
                                  : Vector();
    const int yi = y[static_cast<Eigen::Index>(i)];
    w[i] = 1.0 - gamma_hat(fit, yi, z) - gamma_hat(fit, yi - 1, z);
    if (std::fabs(w[i]) > 1e-12) any = true;
  }
  if (!any)
    throw DegenerateVarianceError("otdt_adjusted: all model weights vanish (tied traits)");
  return scalar_score_result(marker_id, AssocMethod::otdt_adjusted, sample, w);
}

AssocResult weighted_score_statistic(const Cohort& cohort, const std::string& marker_id,
                                     int chosen_allele, ScoreWeight weight_fn,
                                     const std::string& trait_name,
                                     const std::unordered_map<std::string, double>* custom_weights) {
  if (cohort.mode != CohortMode::family)
    throw std::invalid_argument("weighted_score_statistic requires family mode");
  const MarkerData& marker = cohort.marker(marker_id);

  std::vector<int> trait_idx;
  if (weight_fn == ScoreWeight::centered_trait) {
    const int t = cohort.trait_index(trait_name);
    const TraitKind kind = cohort.trait_specs[t].kind;
    if (kind == TraitKind::ordinal)
      throw std::invalid_argument("centered_trait weights need a quantitative or binary trait");
    trait_idx.push_back(t);
  }

  auto sample = detail::collect_sample(cohort, marker, chosen_allele, trait_idx, false);
  if (sample.empty())
    throw std::invalid_argument("weighted_score: no usable offspring at " + marker_id);
  require_marker_informative(sample, marker_id);

  std::vector<double> w(sample.size(), 1.0);
  AssocMethod method = AssocMethod::tdt;
  if (weight_fn == ScoreWeight::centered_trait) {
    method = AssocMethod::qtdt;
    double ybar = 0.0;
    for (const auto& s : sample) ybar += s.traits.values[0];
    ybar /= static_cast<double>(sample.size());
    bool nonzero = false;
    for (std::size_t i = 0; i < sample.size(); ++i) {
      w[i] = sample[i].traits.values[0] - ybar;
      nonzero = nonzero || w[i] != 0.0;
    }
    if (!nonzero)
      throw DegenerateVarianceError("qtdt: constant trait gives an all-zero weight vector");
  } else if (weight_fn == ScoreWeight::custom) {
    // reported under the tdt label: still a weighted transmission score
    if (custom_weights == nullptr)
      throw std::invalid_argument("custom weights requested but none supplied");
    bool nonzero = false;
    for (std::size_t i = 0; i < sample.size(); ++i) {
      auto it = custom_weights->find(sample[i].id);
      w[i] = it == custom_weights->end() ? 0.0 : it->second;
      nonzero = nonzero || w[i] != 0.0;
    }
    if (!nonzero) throw DegenerateVarianceError("custom weight vector is identically zero");
  }
  return scalar_score_result(marker_id, method, sample, w);
}

KendallTau kendall_tau(const Vector& x, const Vector& y) {
  if (x.size() != y.size())
    throw std::invalid_argument("kendall_tau: length mismatch");
  const Eigen::Index n = x.size();
  if (n < 2) throw std::invalid_argument("kendall_tau: need at least 2 observations");

  KendallTau out;
  long sum = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double prod = (x[i] - x[j]) * (y[i] - y[j]);
      if (prod > 0.0) {
        ++out.concordant;
        ++sum;
      } else if (prod < 0.0) {
        ++out.discordant;
        --sum;
      }
    }
  }
  const double pairs = 0.5 * static_cast<double>(n) * static_cast<double>(n - 1);
  out.U = static_cast<double>(sum) / pairs;
  const double var0 =
      static_cast<double>(n) * static_cast<double>(n - 1) * (2.0 * n + 5.0) / 18.0;
  out.tau = static_cast<double>(sum) / std::sqrt(var0);
  return out;
}

}  // namespace gentau
