#include "gentau/simulate.hpp"

#include "gentau/pedigree.hpp"
#include "gentau/rng.hpp"

#include <charconv>
#include <stdexcept>

namespace gentau {

namespace {

double uniform01(std::mt19937_64& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

Pedigree build_structure(const std::string& kind, const std::string& family_id) {
  if (kind == "trio") return make_trio(family_id);
  if (kind == "figure1") return make_figure1_family(family_id);
  if (kind == "table1") return make_table1_family(family_id);
  if (kind.rfind("nuclear:", 0) == 0) {
    int k = 0;
    const auto s = kind.substr(8);
    const auto res = std::from_chars(s.data(), s.data() + s.size(), k);
    if (res.ec != std::errc() || k < 1)
      throw std::invalid_argument("bad nuclear family size in '" + kind + "'");
    return make_nuclear_family(family_id, k);
  }
  throw std::invalid_argument("unknown family structure '" + kind + "'");
}

}  // namespace

Cohort simulate_cohort(const SimulateConfig& config) {
  std::vector<Pedigree> structures;
  structures.reserve(static_cast<std::size_t>(config.families));
  for (int i = 0; i < config.families; ++i)
    structures.push_back(build_structure(config.structure, "fam" + std::to_string(i + 1)));
  return simulate_cohort(std::move(structures), config);
}

Cohort simulate_cohort(std::vector<Pedigree> structures, const SimulateConfig& config) {
  if (config.maf.empty()) throw std::invalid_argument("simulate_cohort: empty maf list");
  if (config.causal_marker >= config.n_markers)
    throw std::invalid_argument("simulate_cohort: causal marker index out of range");

  Cohort cohort;
  cohort.mode = CohortMode::family;
  cohort.pedigrees = std::move(structures);

  for (int m = 0; m < config.n_markers; ++m)
    cohort.markers.push_back(MarkerData{"m" + std::to_string(m + 1), {}});

  TraitSpec spec;
  spec.name = config.trait_name;
  spec.kind = TraitKind::ordinal;
  spec.levels = config.params.levels();
  cohort.trait_specs.push_back(spec);

  const bool table1_cov = config.covariates == SimulateConfig::Covariates::table1;
  const bool normal_cov = config.covariates == SimulateConfig::Covariates::std_normal;
  if (table1_cov) {
    cohort.covariate_spec.cont_names = {"x"};
  } else if (normal_cov) {
    for (int k = 0; k < config.n_std_normal; ++k)
      cohort.covariate_spec.cont_names.push_back("z" + std::to_string(k + 1));
  }
  const int n_cov = static_cast<int>(cohort.covariate_spec.cont_names.size());
  if (config.params.beta.size() != n_cov)
    throw std::invalid_argument("simulate_cohort: beta length must match covariate count");

  for (std::size_t fi = 0; fi < cohort.pedigrees.size(); ++fi) {
    Pedigree& ped = cohort.pedigrees[fi];
    auto rng = make_rng(sub_seed(config.seed, fi));
    const std::size_t n = ped.size();

    // genotypes: founders in HW proportions, offspring by transmission
    std::vector<int> causal_count(n, 0);
    for (int m = 0; m < config.n_markers; ++m) {
      const double maf = config.maf[static_cast<std::size_t>(m) % config.maf.size()];
      std::vector<GenotypeCall> calls(n);
      for (std::size_t t : ped.topo_order) {
        const Individual& ind = ped.members[t];
        GenotypeCall g;
        if (ind.is_founder()) {
          const int a = uniform01(rng) < maf ? 1 : 2;
          const int b = uniform01(rng) < maf ? 1 : 2;
          g = GenotypeCall::make(a, b);
        } else {
          const GenotypeCall& gf = calls[ped.index_of(*ind.father_id)];
          const GenotypeCall& gm = calls[ped.index_of(*ind.mother_id)];
          const int a = uniform01(rng) < 0.5 ? gf.allele_a : gf.allele_b;
          const int b = uniform01(rng) < 0.5 ? gm.allele_a : gm.allele_b;
          g = GenotypeCall::make(a, b);
        }
        calls[t] = g;
      }
      for (std::size_t j = 0; j < n; ++j) {
        cohort.markers[static_cast<std::size_t>(m)].calls[ped.members[j].id] = calls[j];
        if (m == config.causal_marker)
          causal_count[j] = *allele_count(calls[j], 1);
      }
    }

    // covariates
    Matrix X(static_cast<Eigen::Index>(n), n_cov);
    int forced_u1 = -1;
    if (table1_cov) {
      const double r1 = uniform01(rng);
      forced_u1 = r1 <= config.params.theta1 ? 1 : 0;
      for (std::size_t j = 0; j < n; ++j)
        X(static_cast<Eigen::Index>(j), 0) = 0.9 * uniform01(rng) + 0.2 * r1;
    } else if (normal_cov) {
      std::normal_distribution<double> gauss(0.0, 1.0);
      for (std::size_t j = 0; j < n; ++j)
        for (int k = 0; k < n_cov; ++k) X(static_cast<Eigen::Index>(j), k) = gauss(rng);
    }

    // traits from the latent model; the causal allele count rides along as
    // one extra covariate column
    Matrix Xt = X;
    LatentParams par = config.params;
    if (config.causal_marker >= 0) {
      Xt.conservativeResize(Eigen::NoChange, n_cov + 1);
      for (std::size_t j = 0; j < n; ++j)
        Xt(static_cast<Eigen::Index>(j), n_cov) = causal_count[j];
      Vector beta(n_cov + 1);
      beta << par.beta, config.causal_beta;
      par.beta = beta;
    }
    const std::uint64_t trait_seed = rng();
    const std::vector<int> traits =
        forced_u1 >= 0
            ? generate_family_given_u1(ped, Xt, par, trait_seed, forced_u1)
            : generate_family(ped, Xt, par, trait_seed);

    for (std::size_t j = 0; j < n; ++j) {
      TraitVector tv;
      tv.values = Vector::Constant(1, static_cast<double>(traits[j]));
      cohort.traits[ped.members[j].id] = tv;
      if (n_cov > 0) {
        CovariateVector cv;
        cv.z_cont = X.row(static_cast<Eigen::Index>(j)).transpose();
        cohort.covariates[ped.members[j].id] = cv;
      }
    }
  }

  finalize_cohort(cohort);
  return cohort;
}

}  // namespace gentau
