#pragma once

#include "gentau/types.hpp"

#include <filesystem>

namespace gentau {

/// Alternative-hypothesis specification for the tau-family statistic:
/// null variance Sigma0, alternative variance Sigma1, and the shift mu in
/// the mean of S between the two hypotheses.
struct AltSpec {
  Matrix sigma0;
  Matrix sigma1;
  Vector mu;

  Eigen::Index dim() const { return mu.size(); }
};

/// The statistic under the alternative: sum of e_i * chi2_1(phi_i) with
/// e the eigenvalues of Sigma1^{1/2} Sigma0^{-1} Sigma1^{1/2} (descending)
/// and phi from mu mapped through the same eigenbasis.
struct WeightedChiSq {
  Vector e;
  Vector phi;
  Matrix Q;  // orthonormal, Q M Q' = diag(e)
  bool sigma0_pseudo_inverted = false;
};

/// chi2_l(upsilon) moment-matched to the weighted sum, with the
/// location-scale map used for tail evaluation.
struct ApproxChiSq {
  double l = 1.0;
  double upsilon = 0.0;
  double mu_q = 0.0, sigma_q = 1.0;  // mean/sd of the weighted sum
  double mu_x = 0.0, sigma_x = 1.0;  // mean/sd of the reference chi-square
  bool skew_dominant = false;        // which matching case was selected
};

WeightedChiSq alt_distribution(const AltSpec& spec);

ApproxChiSq match_moments(const WeightedChiSq& w);

/// Approximate upper tail P(sum e_i chi2_1(phi_i) > q).
double approx_tail(const ApproxChiSq& approx, double q);

/// Power of the level-`alpha` chi2_p test under the alternative `spec`.
double power(const AltSpec& spec, double alpha);

/// Reads an AltSpec from TSV with `#sigma0`, `#sigma1`, `#mu` section
/// markers, each followed by its matrix rows.
AltSpec read_alt_spec(const std::filesystem::path& path);

}  // namespace gentau
