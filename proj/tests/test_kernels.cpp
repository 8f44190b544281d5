#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "gentau/kernels.hpp"
#include "gentau/pedigree.hpp"
#include "gentau/stats.hpp"
#include "test_helpers.hpp"

#include <cmath>
#include <random>

using namespace gentau;

namespace {

TraitVector tv(std::initializer_list<double> values) {
  TraitVector t;
  t.values = Vector(static_cast<Eigen::Index>(values.size()));
  Eigen::Index k = 0;
  for (double v : values) t.values[k++] = v;
  return t;
}

std::vector<TraitSpec> specs(std::initializer_list<TraitKind> kinds) {
  std::vector<TraitSpec> out;
  int i = 0;
  for (TraitKind k : kinds)
    out.push_back(TraitSpec{"t" + std::to_string(i++), k, k == TraitKind::ordinal ? 3 : 0});
  return out;
}

CovariateVector cov(std::initializer_list<double> cont, std::initializer_list<int> cat = {}) {
  CovariateVector z;
  z.z_cont = Vector(static_cast<Eigen::Index>(cont.size()));
  Eigen::Index k = 0;
  for (double v : cont) z.z_cont[k++] = v;
  z.z_cat.assign(cat.begin(), cat.end());
  return z;
}

}  // namespace

TEST_CASE("trait kernel: identity for quantitative, sign for ordinal") {
  const auto sq = specs({TraitKind::quantitative});
  CHECK(trait_kernel(tv({3.5}), tv({1.5}), sq)[0] == doctest::Approx(2.0));

  const auto so = specs({TraitKind::ordinal});
  CHECK(trait_kernel(tv({2}), tv({0}), so)[0] == 1.0);
  CHECK(trait_kernel(tv({0}), tv({2}), so)[0] == -1.0);
  CHECK(trait_kernel(tv({1}), tv({1}), so)[0] == 0.0);

  const auto sb = specs({TraitKind::binary});
  CHECK(trait_kernel(tv({1}), tv({0}), sb)[0] == 1.0);

  // equal vectors map to the zero vector
  const auto mixed = specs({TraitKind::quantitative, TraitKind::ordinal});
  CHECK(trait_kernel(tv({0.7, 2}), tv({0.7, 2}), mixed).norm() == 0.0);

  CHECK_THROWS(trait_kernel(tv({1.0}), tv({1.0, 2.0}), sq));
}

TEST_CASE("trait and marker kernels are antisymmetric; sign hits only -1,0,1") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> unif(-3, 3);
  std::uniform_int_distribution<int> lvl(0, 2);
  const auto sp = specs({TraitKind::quantitative, TraitKind::ordinal, TraitKind::binary});
  for (int t = 0; t < 200; ++t) {
    const auto a = tv({unif(rng), double(lvl(rng)), double(lvl(rng) % 2)});
    const auto b = tv({unif(rng), double(lvl(rng)), double(lvl(rng) % 2)});
    const Vector fab = trait_kernel(a, b, sp);
    const Vector fba = trait_kernel(b, a, sp);
    CHECK((fab + fba).norm() == doctest::Approx(0.0));
    CHECK((std::fabs(fab[1]) == 0.0 || std::fabs(fab[1]) == 1.0));
  }
  CHECK(marker_kernel(2, 0) == 2);
  CHECK(marker_kernel(1, 1) == 0);
  CHECK(marker_kernel(0, 2) == -2);
}

TEST_CASE("covariate weight: analytic values and symmetry") {
  WeightConfig cfg;
  cfg.bandwidth = 2.0;

  const auto zi = cov({1.0, 2.0}, {1});
  CHECK(covariate_weight(zi, zi, cfg) == doctest::Approx(1.0));

  const auto zj_cat = cov({1.0, 2.0}, {2});
  CHECK(covariate_weight(zi, zj_cat, cfg) == 0.0);

  // distance exactly h
  const auto zj = cov({1.0 + 2.0, 2.0}, {1});
  CHECK(covariate_weight(zi, zj, cfg) == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
  CHECK(covariate_weight(zj, zi, cfg) == doctest::Approx(covariate_weight(zi, zj, cfg)));
}

TEST_CASE("covariate weight decreases with continuous distance") {
  WeightConfig cfg;
  cfg.bandwidth = 1.3;
  double prev = 1.1;
  for (double d : {0.0, 0.2, 0.5, 1.0, 2.0, 4.0}) {
    const double w = covariate_weight(cov({0.0}), cov({d}), cfg);
    CHECK(w <= prev);
    CHECK(w >= 0.0);
    CHECK(w <= 1.0);
    prev = w;
  }
}

TEST_CASE("default bandwidth is the median nonzero standardized distance") {
  Cohort cohort = testutil::trio_cohort({{{1, 2}, {1, 2}, {1, 2}, 1.0}});
  cohort.covariate_spec.cont_names = {"z"};
  cohort.covariates["f1_f"] = cov({0.0});
  cohort.covariates["f1_m"] = cov({1.0});
  cohort.covariates["f1_c"] = cov({2.0});
  const auto scaler = fit_scaler(cohort);
  // standardized points are equally spaced; pairwise distances d, d, 2d
  const double d = 1.0 / scaler.sd[0];
  CHECK(default_bandwidth(cohort, scaler) == doctest::Approx(d).epsilon(1e-12));
}

TEST_CASE("intercept-only propensity equals the empirical carrier frequency") {
  // 6 carrier fathers out of 10 trios; children copy the carrier allele
  std::vector<testutil::TrioSpec> trios;
  for (int i = 0; i < 10; ++i) {
    const int a = i < 6 ? 1 : 2;
    trios.push_back({{a, 2}, {2, 2}, {a, 2}, 1.0});
  }
  Cohort cohort = testutil::trio_cohort(trios);
  cohort.covariate_spec.cont_names = {"z"};
  for (const auto& ped : cohort.pedigrees)
    for (const auto& ind : ped.members) cohort.covariates[ind.id] = cov({1.0});

  const auto res = genomic_propensity(cohort, "m1", 1, GenotypeCoding::allele_count,
                                      ModeOfInheritance::dominant);
  // carriers: 6 fathers + 6 children = 12 of 30
  const double freq = 12.0 / 30.0;
  for (const auto& [id, p] : res.propensity) {
    const auto c = allele_count(cohort.markers[0].call_for(id), 1);
    const double expected = *c >= 1 ? freq : 1.0 - freq;
    CHECK(p == doctest::Approx(expected).epsilon(1e-6));
  }
}

TEST_CASE("single binary covariate gives the two stratum frequencies") {
  std::vector<testutil::TrioSpec> trios;
  for (int i = 0; i < 40; ++i) {
    const int a = (i % 5 == 0) ? 1 : 2;  // some carriers
    trios.push_back({{a, 2}, {2, 2}, {2, 2}, 1.0});
  }
  Cohort cohort = testutil::trio_cohort(trios);
  cohort.covariate_spec.cat_names = {"site"};
  std::mt19937_64 rng(23);
  for (const auto& ped : cohort.pedigrees)
    for (const auto& ind : ped.members)
      cohort.covariates[ind.id] = cov({}, {static_cast<int>(rng() % 2)});

  const auto res = genomic_propensity(cohort, "m1", 1, GenotypeCoding::allele_count,
                                      ModeOfInheritance::dominant);

  // oracle: empirical carrier frequency per stratum
  double n_str[2] = {0, 0}, carriers[2] = {0, 0};
  for (const auto& ped : cohort.pedigrees) {
    for (const auto& ind : ped.members) {
      const auto c = allele_count(cohort.markers[0].call_for(ind.id), 1);
      const int s = cohort.covariates.at(ind.id).z_cat[0];
      n_str[s] += 1.0;
      carriers[s] += *c >= 1 ? 1.0 : 0.0;
    }
  }
  for (const auto& [id, p] : res.propensity) {
    const int s = cohort.covariates.at(id).z_cat[0];
    const auto c = allele_count(cohort.markers[0].call_for(id), 1);
    const double f = carriers[s] / n_str[s];
    CHECK(p == doctest::Approx(*c >= 1 ? f : 1.0 - f).epsilon(1e-4));
  }
}

TEST_CASE("logistic-law simulation recovers the propensity coefficients") {
  // 5000 unrelated subjects, carrier status from a known logistic law
  Cohort cohort;
  cohort.mode = CohortMode::case_control;
  cohort.markers.push_back(MarkerData{"m1", {}});
  cohort.trait_specs.push_back(TraitSpec{"y", TraitKind::binary, 2});
  cohort.covariate_spec.cont_names = {"z"};

  const double b0 = -0.4, b1 = 0.8;
  std::mt19937_64 rng(31);
  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> unif(0, 1);
  for (int i = 0; i < 5000; ++i) {
    const std::string id = "s" + std::to_string(i);
    Pedigree ped;
    ped.family_id = id;
    ped.members.push_back(testutil::person(id, id + "_1"));
    cohort.pedigrees.push_back(ped);
    const double z = gauss(rng);
    const bool carrier = unif(rng) < stats::logistic(b0 + b1 * z);
    cohort.markers[0].calls[id + "_1"] = carrier ? GenotypeCall::make(1, 2)
                                                 : GenotypeCall::make(2, 2);
    cohort.covariates[id + "_1"] = cov({z});
    TraitVector t;
    t.values = Vector::Constant(1, 0.0);
    cohort.traits[id + "_1"] = t;
  }
  finalize_cohort(cohort);

  const auto res = genomic_propensity(cohort, "m1", 1, GenotypeCoding::allele_count,
                                      ModeOfInheritance::dominant);
  REQUIRE(res.converged);
  REQUIRE(res.coef.size() == 2);
  // covariates are standardized internally: recover the slope on the raw scale
  const auto scaler = fit_scaler(cohort);
  const double slope_raw = res.coef[1] / scaler.sd[0];
  const double slope_se_raw = res.coef_se[1] / scaler.sd[0];
  CHECK(std::fabs(slope_raw - b1) < 3.0 * slope_se_raw);
}

TEST_CASE("proportional-odds propensity is a genotype distribution") {
  std::vector<testutil::TrioSpec> trios;
  std::mt19937_64 rng(41);
  for (int i = 0; i < 60; ++i) {
    auto draw = [&]() { return rng() % 2 ? 1 : 2; };
    trios.push_back({{draw(), draw()}, {draw(), draw()}, {2, 2}, 1.0});
    trios.back().child = {trios.back().father.first, trios.back().mother.first};
  }
  Cohort cohort = testutil::trio_cohort(trios);
  cohort.covariate_spec.cont_names = {"z"};
  std::normal_distribution<double> gauss;
  for (const auto& ped : cohort.pedigrees)
    for (const auto& ind : ped.members) cohort.covariates[ind.id] = cov({gauss(rng)});

  const auto res = genomic_propensity(cohort, "m1", 1, GenotypeCoding::genotype,
                                      ModeOfInheritance::additive);
  CHECK(res.model == "propodds(genotype)");
  for (const auto& [id, p] : res.propensity) {
    CHECK(p > 0.0);
    CHECK(p < 1.0);
  }
}

TEST_CASE("propensity requires covariates and a polymorphic marker") {
  auto cohort = testutil::trio_cohort({{{1, 2}, {1, 2}, {1, 2}, 1.0}});
  CHECK_THROWS_AS(genomic_propensity(cohort, "m1", 1, GenotypeCoding::allele_count,
                                     ModeOfInheritance::dominant),
                  std::invalid_argument);

  auto mono = testutil::trio_cohort({{{2, 2}, {2, 2}, {2, 2}, 1.0}});
  mono.covariate_spec.cont_names = {"z"};
  for (const auto& ped : mono.pedigrees)
    for (const auto& ind : ped.members) mono.covariates[ind.id] = cov({0.5});
  CHECK_THROWS_AS(genomic_propensity(mono, "m1", 1, GenotypeCoding::allele_count,
                                     ModeOfInheritance::dominant),
                  DegenerateMarkerError);
}
