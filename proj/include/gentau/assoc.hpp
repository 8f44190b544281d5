#pragma once

#include "gentau/kernels.hpp"
#include "gentau/types.hpp"

#include <array>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace gentau {

/// Trait-side (or weight-side) zero variance: all traits tied, constant
/// weights, and similar. Distinct from DegenerateMarkerError so callers can
/// report the cause.
class DegenerateVarianceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class AssocMethod { tdt, qtdt, otdt, otdt_adjusted, gen_tau, gen_tau_weighted };

std::string method_name(AssocMethod m);

struct AssocResult {
  std::string marker_id;
  AssocMethod method = AssocMethod::gen_tau;
  double statistic = 0.0;
  int df = 1;
  double p_value = 1.0;
  Vector S;       // score vector, length p (length 1 for the scalar tests)
  Vector E0_S;    // conditional null mean of S
  Matrix Var0_S;  // conditional null variance of S
  int n_used = 0;
};

/// Distribution of the offspring chosen-allele count given both parental
/// genotypes, under independent equiprobable transmissions.
struct OffspringTransmissionLaw {
  std::array<double, 3> prob{0.0, 0.0, 0.0};  // P(C = 0), P(C = 1), P(C = 2)

  double mean() const { return prob[1] + 2.0 * prob[2]; }
  double variance() const {
    const double m = mean();
    return prob[1] + 4.0 * prob[2] - m * m;
  }
  std::vector<std::pair<int, double>> support() const;
};

OffspringTransmissionLaw mendelian_offspring_law(const GenotypeCall& father,
                                                 const GenotypeCall& mother,
                                                 int chosen_allele);

/// Generalized Kendall's tau test. Computes the U-statistic score through its
/// linear form, the exact conditional null moments (Mendelian transmission
/// law per offspring in family mode, sample moments of the allele count in
/// case-control mode), and the chi-square statistic with a pseudo-inverse
/// when Var0(S) is rank deficient (df = numerical rank).
///
/// `trait_selection`: trait names to include; empty selects every trait.
/// `weights`: enables the covariate-weighted variant; a nonpositive bandwidth
/// is replaced by the cohort default (median nonzero pairwise distance).
AssocResult gen_tau_statistic(const Cohort& cohort, const std::string& marker_id,
                              int chosen_allele,
                              const std::vector<std::string>& trait_selection = {},
                              const std::optional<WeightConfig>& weights = std::nullopt);

/// Ordinal-trait transmission test: S = sum_i [R+(y_i) - R-(y_i)] c_i where
/// R+/R- count offspring in the entire usable sample with larger/smaller
/// trait values (ties count toward neither).
AssocResult otdt_statistic(const Cohort& cohort, const std::string& marker_id,
                           int chosen_allele, const std::string& trait_name);

/// Covariate-adjusted ordinal score: the count weight is replaced by the
/// model-based difference P(Y > y_i | z_i) - P(Y < y_i | z_i) under the
/// fitted null cumulative-logit model.
AssocResult otdt_adjusted_statistic(const Cohort& cohort, const std::string& marker_id,
                                    int chosen_allele, const std::string& trait_name,
                                    const std::vector<std::string>& covariate_selection = {});

enum class ScoreWeight { unit, centered_trait, custom };

/// Weighted transmission score sum_i w_i c_i with conditional Mendelian
/// moments; unit weights give the classic TDT, centered traits the QTDT.
/// Family mode only.
AssocResult weighted_score_statistic(
    const Cohort& cohort, const std::string& marker_id, int chosen_allele,
    ScoreWeight weight_fn, const std::string& trait_name = {},
    const std::unordered_map<std::string, double>* custom_weights = nullptr);

struct KendallTau {
  double U = 0.0;    // averaged sign kernel, in [-1, 1]
  double tau = 0.0;  // concordant-discordant sum over sqrt(n(n-1)(2n+5)/18)
  long concordant = 0;
  long discordant = 0;
};

KendallTau kendall_tau(const Vector& x, const Vector& y);

/// Internals shared with the scan driver and the test suites.
namespace detail {

struct Subject {
  std::string id;
  int c = 0;        // chosen-allele count
  double e0 = 0.0;  // null mean of C
  double v0 = 0.0;  // null variance of C
  TraitVector traits;
  CovariateVector z;  // standardized continuous block
  bool has_z = false;
};

/// Usable subjects for a marker: in family mode, offspring with their own and
/// both parental genotypes present; in case-control mode every genotyped
/// subject. Subjects missing a selected trait component (or covariates when
/// required) are dropped.
std::vector<Subject> collect_sample(const Cohort& cohort, const MarkerData& marker,
                                    int chosen_allele,
                                    const std::vector<int>& trait_idx,
                                    bool need_covariates);

std::vector<int> resolve_traits(const Cohort& cohort,
                                const std::vector<std::string>& selection);

}  // namespace detail

}  // namespace gentau
