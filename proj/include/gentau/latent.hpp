#pragma once

#include "gentau/types.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace gentau {

/// Parameters of the latent-variable segregation model. The trait is ordinal
/// with K levels; `alpha` holds the K-1 nondecreasing level intercepts.
/// `gamma` weights the latent features (U1, U2-sum, U2-product): a shared
/// environment switch, an additive genetic dose, and the product term whose
/// coefficient captures a recessive component.
struct LatentParams {
  double theta1 = 0.5;  // P(U1 = 1), in (0,1)
  double theta2 = 0.5;  // founder latent allele frequency, in (0,1)
  Vector beta;          // covariate effects, length p (possibly 0)
  Eigen::Vector3d gamma = Eigen::Vector3d::Zero();
  Vector alpha;         // K-1 nondecreasing intercepts

  int levels() const { return static_cast<int>(alpha.size()) + 1; }
};

/// Which parameters stay frozen at their init values during fitting.
struct LatentFitMask {
  bool theta1 = false;
  bool theta2 = false;
  bool beta = false;
  bool gamma1 = false;
  bool gamma2 = false;
  bool gamma3 = false;
};

struct LatentFitResult {
  LatentParams params;
  double loglik = 0.0;            // unpenalized, at the fitted parameters
  double penalized_loglik = 0.0;  // loglik + boundary penalty
  bool converged = false;
  int iterations = 0;  // outer EM iterations of the winning start
  int best_start = -1;
};

/// One family's observations: covariate rows (n_members x p, p may be 0)
/// and trait levels aligned with pedigree member order.
struct FamilyData {
  const Pedigree* pedigree = nullptr;
  Matrix covariates;
  Eigen::VectorXi traits;
};

class EnumerationLimitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Boundary-repelling penalty added to the log-likelihood during fitting:
/// kPenaltyEps * [log t1 + log(1-t1) + log t2 + log(1-t2)].
inline constexpr double kPenaltyEps = 1e-2;
double latent_penalty(const LatentParams& params);

/// Samples trait levels for one family: U1 ~ Bernoulli(theta1), founder U2
/// bits iid Bernoulli(theta2), one fair U3 coin per parent-offspring pair,
/// deterministic propagation of U2 to nonfounders, then each trait from the
/// conditional cumulative-logit law. Deterministic given the seed.
std::vector<int> generate_family(const Pedigree& ped, const Matrix& covariates,
                                 const LatentParams& params, std::uint64_t seed);

/// Same, with the family's U1 forced (used by the published simulation
/// protocol, which couples U1 to the covariate construction).
std::vector<int> generate_family_given_u1(const Pedigree& ped, const Matrix& covariates,
                                          const LatentParams& params, std::uint64_t seed,
                                          int u1);

/// Exact marginal log-likelihood of one family by enumerating the
/// independent latent bits {U1} + {founder U2} + {U3}: 2^(1 + 2F + s)
/// configurations in log-sum-exp form. When gamma2 = gamma3 = 0 the U2/U3
/// layers integrate out and only U1 is enumerated. Throws
/// EnumerationLimitError when the full latent space exceeds 2^24.
double latent_loglik(const FamilyData& family, const LatentParams& params);
double latent_loglik(std::span<const FamilyData> families, const LatentParams& params);

/// Full-enumeration likelihood regardless of the collapse shortcut; the
/// collapsed and enumerated values agree whenever gamma2 = gamma3 = 0.
double latent_loglik_enumerated(const FamilyData& family, const LatentParams& params);

/// Penalized maximum likelihood by coordinate ascent: closed-form EM updates
/// for the thetas alternated with damped Newton steps on (beta, gamma,
/// alpha-increments). Five starts (the supplied init plus four jittered);
/// a start converges when the penalized log-likelihood improves by less than
/// 1e-7; throws if every start exhausts 500 outer iterations.
LatentFitResult latent_fit(std::span<const FamilyData> families,
                           const LatentFitMask& mask, const LatentParams& init);

struct LrtResult {
  double stat = 0.0;
  bool reject_at_05 = false;
  double threshold = 0.0;
  LatentFitResult null_fit;
  LatentFitResult alt_fit;
};

/// Rejection threshold for the 0.5*chi2_0 + 0.5*chi2_1 mixture reference.
double lrt_mixture_threshold(double alpha_level);

/// Likelihood-ratio test of gamma1 = 0 with gamma2 = gamma3 = 0 throughout.
/// Covariates are used by both fits when `include_covariates` is set and
/// ignored entirely otherwise.
LrtResult lrt_gamma1(std::span<const FamilyData> families, bool include_covariates);

/// Parametric-bootstrap check of the LRT threshold: refits the null on the
/// data, simulates `replicates` datasets from it, and returns the empirical
/// (1 - alpha_level) quantile of the bootstrap LRT statistics.
double calibrate_lrt_threshold(std::span<const FamilyData> families,
                               bool include_covariates, int replicates,
                               double alpha_level, std::uint64_t seed,
                               int threads = 1);

struct Table1Config {
  int replicates = 10000;
  int families = 200;
  std::vector<double> beta_grid{0.0, 1.0, 5.0, 10.0};
  std::vector<double> gamma1_grid{0.0, 1.0, 2.0};
  double theta1 = 0.3;
  Vector alpha = (Vector(2) << -1.0, 1.0).finished();
  std::uint64_t seed = 1;
  int threads = 1;
};

/// The published simulation protocol: per replicate, `families` families of
/// seven members; one covariate x = 0.9 r2 + 0.2 r1 whose family term r1
/// also drives U1; the test deliberately ignores the covariate. Returns the
/// rejection fraction of lrt_gamma1 for each (beta, gamma1) grid cell.
Matrix table1_study(const Table1Config& config);

/// Data for one replicate of the protocol above (exposed for the simulate
/// command and the test suites).
std::vector<FamilyData> generate_table1_replicate(const Table1Config& config,
                                                  std::vector<Pedigree>& structures,
                                                  double beta, double gamma1,
                                                  std::uint64_t seed);

}  // namespace gentau
