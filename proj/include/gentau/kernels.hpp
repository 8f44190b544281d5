#pragma once

#include "gentau/types.hpp"

#include <span>
#include <string>
#include <unordered_map>

namespace gentau {

/// Pairwise covariate weight W(||z_co_i - z_co_j||) * I(z_ca_i == z_ca_j)
/// with the Gaussian profile W(u) = exp(-u^2 / 2h^2).
struct WeightConfig {
  double bandwidth = 0.0;  // h > 0; <= 0 means "use the cohort default"
  enum class Kernel { gaussian } kernel = Kernel::gaussian;
};

/// Componentwise trait kernel F_ij: identity on differences for quantitative
/// and binary components, sign for ordinal ones. Antisymmetric by
/// construction. Throws on kind/shape mismatch or missing components.
Vector trait_kernel(const TraitVector& ti, const TraitVector& tj,
                    std::span<const TraitSpec> specs);

/// Marker kernel D_ij = c_i - c_j for allele counts in {0,1,2}.
inline int marker_kernel(int c_i, int c_j) { return c_i - c_j; }

/// Standardization of the continuous covariate block (mean 0, sd 1),
/// estimated once per cohort; constant columns are left unscaled.
struct CovariateScaler {
  Vector mean;
  Vector sd;
  Vector apply(const Vector& z_cont) const;
};

CovariateScaler fit_scaler(const Cohort& cohort);

/// Weight for one pair of (already standardized) covariate vectors.
double covariate_weight(const CovariateVector& zi, const CovariateVector& zj,
                        const WeightConfig& cfg);

/// Default bandwidth: median of the nonzero pairwise distances between
/// standardized continuous covariate blocks. Falls back to 1 when there are
/// no continuous covariates or no nonzero distances.
double default_bandwidth(const Cohort& cohort, const CovariateScaler& scaler);

enum class GenotypeCoding { allele_count, genotype };
enum class ModeOfInheritance { additive, dominant, recessive };

/// Genomic propensity scores: fitted P(G = g_i | Z = z_i) per individual.
///
///   allele_count coding: dominant/recessive collapse the count to a carrier
///   indicator (c>=1, c==2) fitted by logistic regression; additive models
///   the two allele slots as a 2-trial binomial logit.
///   genotype coding: proportional-odds regression on the ordered count
///   {0,1,2} for additive inheritance; dominant/recessive reduce to the same
///   carrier logistic models as above (two genotype classes are
///   indistinguishable under those modes).
struct PropensityResult {
  std::unordered_map<std::string, double> propensity;
  Vector coef;     // intercept(s) first, then covariate coefficients
  Vector coef_se;  // from the observed information at the optimum
  int iterations = 0;
  bool converged = false;
  std::string model;  // human-readable description of the fitted route
};

PropensityResult genomic_propensity(const Cohort& cohort, const std::string& marker_id,
                                    int chosen_allele, GenotypeCoding coding,
                                    ModeOfInheritance moi);

/// Dummy-coded design matrix (no intercept column) for the given individual
/// ids: standardized continuous covariates followed by indicator columns for
/// each non-reference level of each categorical covariate.
Matrix covariate_design(const Cohort& cohort, std::span<const std::string> ids);

/// Same, restricted to the named covariate columns.
Matrix covariate_design(const Cohort& cohort, std::span<const std::string> ids,
                        std::span<const std::string> cont_names,
                        std::span<const std::string> cat_names);

}  // namespace gentau
