#pragma once

#include "gentau/latent.hpp"
#include "gentau/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace gentau {

/// Whole-cohort simulator: founder genotypes in Hardy-Weinberg proportions,
/// Mendelian transmission to offspring, traits from the latent segregation
/// model. Markers are independent of the traits unless a causal marker is
/// requested, in which case its allele count enters the trait model as one
/// extra covariate with coefficient `causal_beta`.
struct SimulateConfig {
  int families = 100;
  std::string structure = "trio";  // trio | figure1 | table1 | nuclear:<k>
  LatentParams params;             // alpha defines the ordinal trait levels
  std::string trait_name = "y";

  int n_markers = 0;
  std::vector<double> maf{0.3};  // recycled across markers; allele 1 is the minor one

  int causal_marker = -1;  // index into markers, -1 for none
  double causal_beta = 0.0;

  enum class Covariates { none, std_normal, table1 } covariates = Covariates::none;
  int n_std_normal = 1;  // continuous N(0,1) covariates when std_normal

  std::uint64_t seed = 1;
};

/// Builds `families` copies of the configured structure and simulates them.
Cohort simulate_cohort(const SimulateConfig& config);

/// Same, over caller-supplied family structures (sizes may differ).
Cohort simulate_cohort(std::vector<Pedigree> structures, const SimulateConfig& config);

}  // namespace gentau
