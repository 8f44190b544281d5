#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "gentau/assoc.hpp"
#include "gentau/kernels.hpp"
#include "gentau/pedigree.hpp"
#include "gentau/simulate.hpp"
#include "gentau/stats.hpp"
#include "test_helpers.hpp"

#include <algorithm>
#include <cmath>
#include <random>

using namespace gentau;
using testutil::TrioSpec;

namespace {

bool close(double a, double b, double tol) {
  return std::fabs(a - b) <= tol * std::max({1.0, std::fabs(a), std::fabs(b)});
}

// ---------------------------------------------------------------------------
// Independent oracles. These re-derive the statistics from their defining
// formulas with plain double loops, sharing no code with the library paths
// they check.
// ---------------------------------------------------------------------------

// sign/identity kernel computed from scratch
Vector oracle_kernel(const Vector& ti, const Vector& tj, const std::vector<TraitKind>& kinds) {
  Vector f(ti.size());
  for (Eigen::Index k = 0; k < ti.size(); ++k) {
    const double d = ti[k] - tj[k];
    if (kinds[static_cast<std::size_t>(k)] == TraitKind::ordinal)
      f[k] = d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0);
    else
      f[k] = d;
  }
  return f;
}

// U-statistic by the literal pairwise double loop
Vector oracle_pair_sum(const std::vector<int>& c, const std::vector<Vector>& traits,
                       const std::vector<TraitKind>& kinds,
                       const std::vector<std::vector<double>>* w = nullptr) {
  const std::size_t n = c.size();
  Vector s = Vector::Zero(traits[0].size());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double wij = w ? (*w)[i][j] : 1.0;
      s += (c[i] - c[j]) * wij * oracle_kernel(traits[i], traits[j], kinds);
    }
  return s * 2.0 / (static_cast<double>(n) * static_cast<double>(n - 1));
}

// exhaustive enumeration of every informative-meiosis outcome; returns exact
// E[S] and Var[S] of the pair-sum statistic
struct MomentOracle {
  Vector mean;
  Matrix var;
};

struct ChildSetup {
  int base = 0;                 // deterministic allele copies from homozygous parents
  std::vector<int> meiosis;     // indices of the informative meioses feeding c_i
};

MomentOracle oracle_moments(const std::vector<ChildSetup>& setup,
                            const std::vector<Vector>& traits,
                            const std::vector<TraitKind>& kinds, int n_meioses,
                            const std::vector<std::vector<double>>* w = nullptr) {
  const Eigen::Index p = traits[0].size();
  MomentOracle out{Vector::Zero(p), Matrix::Zero(p, p)};
  Matrix second = Matrix::Zero(p, p);
  const std::size_t n_outcomes = std::size_t(1) << n_meioses;
  for (std::size_t mask = 0; mask < n_outcomes; ++mask) {
    std::vector<int> c(setup.size());
    for (std::size_t i = 0; i < setup.size(); ++i) {
      c[i] = setup[i].base;
      for (int m : setup[i].meiosis) c[i] += (mask >> m) & 1;
    }
    const Vector s = oracle_pair_sum(c, traits, kinds, w);
    out.mean += s;
    second += s * s.transpose();
  }
  out.mean /= static_cast<double>(n_outcomes);
  second /= static_cast<double>(n_outcomes);
  out.var = second - out.mean * out.mean.transpose();
  return out;
}

// trio cohorts with known genotypes drawn uniformly over HW-ish proportions
Cohort random_trio_cohort(int n, std::mt19937_64& rng, int levels = 3,
                          double maf = 0.4) {
  std::uniform_real_distribution<double> unif(0, 1);
  std::vector<TrioSpec> trios;
  for (int i = 0; i < n; ++i) {
    auto allele = [&]() { return unif(rng) < maf ? 1 : 2; };
    const int fa = allele(), fb = allele(), ma = allele(), mb = allele();
    const int ca = unif(rng) < 0.5 ? fa : fb;
    const int cb = unif(rng) < 0.5 ? ma : mb;
    const double y = std::floor(unif(rng) * levels);
    trios.push_back({{fa, fb}, {ma, mb}, {ca, cb}, y});
  }
  return testutil::trio_cohort(trios, TraitKind::ordinal, levels);
}

}  // namespace

TEST_CASE("Mendelian offspring law: the three textbook crosses") {
  const auto het = GenotypeCall::make(1, 2);
  const auto homA = GenotypeCall::make(1, 1);
  const auto homa = GenotypeCall::make(2, 2);

  const auto cross = mendelian_offspring_law(het, het, 1);
  CHECK(cross.prob[0] == doctest::Approx(0.25));
  CHECK(cross.prob[1] == doctest::Approx(0.5));
  CHECK(cross.prob[2] == doctest::Approx(0.25));
  CHECK(cross.mean() == doctest::Approx(1.0));
  CHECK(cross.variance() == doctest::Approx(0.5));

  const auto fixed = mendelian_offspring_law(homA, homA, 1);
  CHECK(fixed.prob[2] == doctest::Approx(1.0));
  CHECK(fixed.support().size() == 1);
  CHECK(fixed.variance() == doctest::Approx(0.0));

  const auto single = mendelian_offspring_law(het, homa, 1);
  CHECK(single.prob[0] == doctest::Approx(0.5));
  CHECK(single.prob[1] == doctest::Approx(0.5));
  CHECK(single.prob[2] == doctest::Approx(0.0));

  CHECK_THROWS(mendelian_offspring_law(GenotypeCall::none(), het, 1));
}

TEST_CASE("gen_tau: constant traits give a zero statistic, not an error") {
  std::vector<TrioSpec> trios;
  for (int i = 0; i < 8; ++i) trios.push_back({{1, 2}, {1, 2}, {1, 2}, 1.0});
  const auto cohort = testutil::trio_cohort(trios);
  const auto res = gen_tau_statistic(cohort, "m1", 1);
  CHECK(res.statistic == 0.0);
  CHECK(res.p_value == 1.0);
  CHECK(res.n_used == 8);
}

TEST_CASE("gen_tau: monomorphic marker raises a degenerate-marker error") {
  std::vector<TrioSpec> trios;
  for (int i = 0; i < 8; ++i) trios.push_back({{2, 2}, {2, 2}, {2, 2}, double(i % 3)});
  const auto cohort = testutil::trio_cohort(trios);
  CHECK_THROWS_AS(gen_tau_statistic(cohort, "m1", 1), DegenerateMarkerError);
  // fewer than 2 usable offspring
  const auto one = testutil::trio_cohort({{{1, 2}, {1, 2}, {1, 1}, 1.0}});
  CHECK_THROWS_AS(gen_tau_statistic(one, "m1", 1), std::invalid_argument);
}

TEST_CASE("gen_tau matches the pairwise double-loop statistic on 6 trios, 2 ordinal traits") {
  // hand-built: 6 trios, all parents het so every child is usable
  std::mt19937_64 rng(2718);
  std::uniform_real_distribution<double> unif(0, 1);
  std::vector<TrioSpec> trios;
  std::vector<Vector> traits;
  std::vector<int> counts;
  for (int i = 0; i < 6; ++i) {
    const int ca = unif(rng) < 0.5 ? 1 : 2;
    const int cb = unif(rng) < 0.5 ? 1 : 2;
    trios.push_back({{1, 2}, {1, 2}, {ca, cb}, 0.0});
    counts.push_back((ca == 1) + (cb == 1));
  }
  Cohort cohort = testutil::trio_cohort(trios);
  cohort.trait_specs = {TraitSpec{"y1", TraitKind::ordinal, 3},
                        TraitSpec{"y2", TraitKind::ordinal, 4}};
  for (int i = 0; i < 6; ++i) {
    const std::string fam = "f" + std::to_string(i + 1);
    for (const char* suffix : {"_f", "_m", "_c"}) {
      Vector v(2);
      v << std::floor(unif(rng) * 3), std::floor(unif(rng) * 4);
      cohort.traits[fam + suffix].values = v;
      if (std::string(suffix) == "_c") traits.push_back(v);
    }
  }

  const auto res = gen_tau_statistic(cohort, "m1", 1);
  const std::vector<TraitKind> kinds{TraitKind::ordinal, TraitKind::ordinal};
  const Vector s_oracle = oracle_pair_sum(counts, traits, kinds);
  CHECK((res.S - s_oracle).lpNorm<Eigen::Infinity>() < 1e-12);

  // moments against exhaustive enumeration: every child has two informative
  // meioses (both parents het)
  std::vector<ChildSetup> setup(6);
  for (int i = 0; i < 6; ++i) setup[i] = ChildSetup{0, {2 * i, 2 * i + 1}};
  const auto mom = oracle_moments(setup, traits, kinds, 12);
  CHECK((res.E0_S - mom.mean).lpNorm<Eigen::Infinity>() < 1e-12);
  CHECK((res.Var0_S - mom.var).lpNorm<Eigen::Infinity>() < 1e-12);

  // chi-square recomputed from the oracle moments
  Eigen::SelfAdjointEigenSolver<Matrix> es(mom.var);
  const Vector d = s_oracle - mom.mean;
  double stat = 0.0;
  for (Eigen::Index k = 0; k < es.eigenvalues().size(); ++k)
    if (es.eigenvalues()[k] > 1e-10 * es.eigenvalues().maxCoeff())
      stat += std::pow(es.eigenvectors().col(k).dot(d), 2) / es.eigenvalues()[k];
  CHECK(close(res.statistic, stat, 1e-12));
}

TEST_CASE("family-mode moments match exhaustive enumeration on mixed informativeness") {
  // 4 children with 0, 1, 1, 2 informative meioses (<= 6 total)
  std::vector<TrioSpec> trios = {
      {{1, 1}, {2, 2}, {1, 2}, 2.0},  // no informative meiosis
      {{1, 2}, {2, 2}, {1, 2}, 0.0},  // father informative
      {{2, 2}, {1, 2}, {2, 2}, 1.0},  // mother informative
      {{1, 2}, {1, 2}, {1, 1}, 2.0},  // both informative
  };
  Cohort cohort = testutil::trio_cohort(trios);
  const auto res = gen_tau_statistic(cohort, "m1", 1);

  std::vector<Vector> traits;
  for (const auto& t : trios) traits.push_back(Vector::Constant(1, t.child_trait));
  const std::vector<TraitKind> kinds{TraitKind::ordinal};
  std::vector<ChildSetup> setup = {
      {1, {}},        // hom-het: one forced copy
      {0, {0}},       // het father
      {0, {1}},       // het mother
      {0, {2, 3}},    // two meioses
  };
  const auto mom = oracle_moments(setup, traits, kinds, 4);
  CHECK((res.E0_S - mom.mean).lpNorm<Eigen::Infinity>() < 1e-12);
  CHECK((res.Var0_S - mom.var).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("linear form equals pair sum for the weighted statistic") {
  std::mt19937_64 rng(91);
  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> unif(0, 1);

  Cohort cohort = random_trio_cohort(25, rng);
  cohort.covariate_spec.cont_names = {"z1", "z2"};
  cohort.covariate_spec.cat_names = {"site"};
  for (const auto& ped : cohort.pedigrees) {
    for (const auto& ind : ped.members) {
      CovariateVector cv;
      cv.z_cont = (Vector(2) << gauss(rng), gauss(rng)).finished();
      cv.z_cat = {static_cast<int>(rng() % 2)};
      cohort.covariates[ind.id] = cv;
    }
  }

  WeightConfig cfg;
  cfg.bandwidth = 1.7;
  const auto res = gen_tau_statistic(cohort, "m1", 1, {}, cfg);

  // oracle weights from the standardized covariates
  const auto scaler = fit_scaler(cohort);
  std::vector<int> counts;
  std::vector<Vector> traits;
  std::vector<CovariateVector> zs;
  for (const auto& ped : cohort.pedigrees) {
    const auto& child = ped.members[2];
    const auto c = allele_count(cohort.markers[0].call_for(child.id), 1);
    const auto cf = allele_count(cohort.markers[0].call_for(*child.father_id), 1);
    const auto cm = allele_count(cohort.markers[0].call_for(*child.mother_id), 1);
    if (!c || !cf || !cm) continue;
    counts.push_back(*c);
    traits.push_back(cohort.traits.at(child.id).values);
    CovariateVector cv = cohort.covariates.at(child.id);
    cv.z_cont = scaler.apply(cv.z_cont);
    zs.push_back(cv);
  }
  REQUIRE(static_cast<int>(counts.size()) == res.n_used);

  std::vector<std::vector<double>> w(counts.size(), std::vector<double>(counts.size(), 0.0));
  for (std::size_t i = 0; i < counts.size(); ++i)
    for (std::size_t j = 0; j < counts.size(); ++j) {
      const double d2 = (zs[i].z_cont - zs[j].z_cont).squaredNorm();
      w[i][j] = zs[i].z_cat == zs[j].z_cat ? std::exp(-d2 / (2 * 1.7 * 1.7)) : 0.0;
    }
  const Vector s_oracle =
      oracle_pair_sum(counts, traits, {TraitKind::ordinal}, &w);
  CHECK((res.S - s_oracle).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("allele relabeling negates the centered score and preserves the test") {
  std::mt19937_64 rng(5150);
  const Cohort cohort = random_trio_cohort(40, rng);
  const auto res1 = gen_tau_statistic(cohort, "m1", 1);
  const auto res2 = gen_tau_statistic(cohort, "m1", 2);
  CHECK(((res1.S - res1.E0_S) + (res2.S - res2.E0_S)).lpNorm<Eigen::Infinity>() < 1e-12);
  CHECK(close(res1.statistic, res2.statistic, 1e-12));
  CHECK(close(res1.p_value, res2.p_value, 1e-12));
}

TEST_CASE("adding a constant to a quantitative trait changes nothing") {
  std::mt19937_64 rng(33);
  std::normal_distribution<double> gauss;
  Cohort cohort = random_trio_cohort(30, rng);
  cohort.trait_specs = {TraitSpec{"y", TraitKind::quantitative, 0}};
  for (auto& [id, tv] : cohort.traits) tv.values[0] = gauss(rng);

  const auto before = gen_tau_statistic(cohort, "m1", 1);
  for (auto& [id, tv] : cohort.traits) tv.values[0] += 7.25;
  const auto after = gen_tau_statistic(cohort, "m1", 1);
  CHECK(close(before.statistic, after.statistic, 1e-12));
  CHECK(close(before.p_value, after.p_value, 1e-12));
}

TEST_CASE("case-control gen_tau is monotone in the squared sample covariance") {
  // fixed traits, fixed genotype multiset, random pairings: the chi-square
  // must order datasets exactly as the squared covariance does
  std::mt19937_64 rng(404);
  std::normal_distribution<double> gauss;
  const int n = 60;
  Vector y(n);
  for (int i = 0; i < n; ++i) y[i] = gauss(rng);
  std::vector<int> base_counts(n);
  for (int i = 0; i < n; ++i) base_counts[i] = i % 3;

  std::vector<double> stats_out, cov2;
  for (int rep = 0; rep < 100; ++rep) {
    std::shuffle(base_counts.begin(), base_counts.end(), rng);

    Cohort cohort;
    cohort.mode = CohortMode::case_control;
    cohort.markers.push_back(MarkerData{"m1", {}});
    cohort.trait_specs.push_back(TraitSpec{"y", TraitKind::quantitative, 0});
    for (int i = 0; i < n; ++i) {
      const std::string id = "s" + std::to_string(i);
      Pedigree ped;
      ped.family_id = id;
      ped.members.push_back(testutil::person(id, id + "_1"));
      cohort.pedigrees.push_back(ped);
      const int c = base_counts[i];
      cohort.markers[0].calls[id + "_1"] =
          c == 0 ? GenotypeCall::make(2, 2)
                 : (c == 1 ? GenotypeCall::make(1, 2) : GenotypeCall::make(1, 1));
      TraitVector tv;
      tv.values = Vector::Constant(1, y[i]);
      cohort.traits[id + "_1"] = tv;
    }
    finalize_cohort(cohort);

    stats_out.push_back(gen_tau_statistic(cohort, "m1", 1).statistic);
    double cy = 0.0, cc = 0.0;
    for (int i = 0; i < n; ++i) {
      cy += y[i];
      cc += base_counts[i];
    }
    cy /= n;
    cc /= n;
    double cov = 0.0;
    for (int i = 0; i < n; ++i) cov += (y[i] - cy) * (base_counts[i] - cc);
    cov2.push_back(cov * cov);
  }
  // rank agreement over all pairs
  for (std::size_t a = 0; a < stats_out.size(); ++a)
    for (std::size_t b = a + 1; b < stats_out.size(); ++b) {
      if (std::fabs(cov2[a] - cov2[b]) < 1e-12) continue;
      CHECK((stats_out[a] < stats_out[b]) == (cov2[a] < cov2[b]));
    }
}

TEST_CASE("otdt equals gen_tau with the sign kernel on one ordinal trait") {
  std::mt19937_64 rng(860);
  for (int rep = 0; rep < 20; ++rep) {
    const Cohort cohort = random_trio_cohort(50, rng);
    AssocResult a, b;
    try {
      a = otdt_statistic(cohort, "m1", 1, "y");
    } catch (const DegenerateVarianceError&) {
      continue;  // all traits tied in this draw
    }
    b = gen_tau_statistic(cohort, "m1", 1, {"y"});
    CHECK(close(a.statistic, b.statistic, 1e-10));
    CHECK(close(a.p_value, b.p_value, 1e-10));
  }
}

TEST_CASE("otdt: tie saturation raises the documented zero-variance error") {
  std::vector<TrioSpec> trios;
  for (int i = 0; i < 10; ++i) trios.push_back({{1, 2}, {1, 2}, {1, 1}, 1.0});
  const auto cohort = testutil::trio_cohort(trios);
  CHECK_THROWS_AS(otdt_statistic(cohort, "m1", 1, "y"), DegenerateVarianceError);
  // and an ordinal trait is required
  auto quant = cohort;
  quant.trait_specs[0].kind = TraitKind::quantitative;
  CHECK_THROWS_AS(otdt_statistic(quant, "m1", 1, "y"), std::invalid_argument);
}

TEST_CASE("otdt: one informative meiosis uses transmission mean one half") {
  // two trios so R+/R- are not all zero; the second child is uninformative
  const auto cohort = testutil::trio_cohort(
      {{{1, 2}, {2, 2}, {1, 2}, 2.0}, {{1, 1}, {1, 1}, {1, 1}, 0.0}});
  const auto res = otdt_statistic(cohort, "m1", 1, "y");
  // weights: child1 has R+ - R- = 0 - 1 = -1; child2: 1 - 0 = +1
  // E0 = -1 * 0.5 + 1 * 2 ; child1 law: {0:1/2, 1:1/2}
  CHECK(res.E0_S[0] == doctest::Approx(-0.5 + 2.0).epsilon(1e-12));
  CHECK(res.Var0_S(0, 0) == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("covariate-free otdt_adjusted equals the frequency-weight evaluation") {
  std::mt19937_64 rng(1999);
  for (int rep = 0; rep < 10; ++rep) {
    const Cohort cohort = random_trio_cohort(60, rng);
    AssocResult adj;
    try {
      adj = otdt_adjusted_statistic(cohort, "m1", 1, "y");
    } catch (const DegenerateVarianceError&) {
      continue;
    }

    // oracle: weights from empirical cumulative frequencies of the usable
    // children, moments from the Mendelian law
    std::vector<int> counts, ys;
    std::vector<double> e0, v0;
    for (const auto& ped : cohort.pedigrees) {
      const auto& child = ped.members[2];
      const auto c = allele_count(cohort.markers[0].call_for(child.id), 1);
      const auto cf = allele_count(cohort.markers[0].call_for(*child.father_id), 1);
      const auto cm = allele_count(cohort.markers[0].call_for(*child.mother_id), 1);
      if (!c || !cf || !cm) continue;
      counts.push_back(*c);
      ys.push_back(static_cast<int>(cohort.traits.at(child.id).values[0]));
      const double pf = *cf / 2.0, pm = *cm / 2.0;
      e0.push_back(pf + pm);
      v0.push_back(pf * (1 - pf) + pm * (1 - pm));
    }
    const double n = static_cast<double>(counts.size());
    double cum[4] = {0, 0, 0, 0};  // cumulative counts for K = 3
    for (int yv : ys) cum[yv + 1] += 1.0;
    for (int k = 1; k < 4; ++k) cum[k] += cum[k - 1];

    double S = 0, E = 0, V = 0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
      const double f_y = cum[ys[i] + 1] / n;      // P(Y <= y)
      const double f_ym1 = cum[ys[i]] / n;        // P(Y <= y-1)
      const double w = 1.0 - f_y - f_ym1;
      S += w * counts[i];
      E += w * e0[i];
      V += w * w * v0[i];
    }
    CHECK(close(adj.statistic, (S - E) * (S - E) / V, 1e-10));
    CHECK(close(adj.p_value, stats::chisq_sf(adj.statistic, 1), 1e-12));
  }
}

TEST_CASE("uniform binary trait: otdt_adjusted weights are +-1/2 and match the QTDT") {
  // equal counts of levels 0 and 1 among usable children
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> unif(0, 1);
  std::vector<TrioSpec> trios;
  for (int i = 0; i < 30; ++i) {
    auto allele = [&]() { return unif(rng) < 0.5 ? 1 : 2; };
    const int fa = allele(), fb = allele(), ma = allele(), mb = allele();
    trios.push_back({{fa, fb},
                     {ma, mb},
                     {unif(rng) < 0.5 ? fa : fb, unif(rng) < 0.5 ? ma : mb},
                     double(i % 2)});
  }
  Cohort cohort = testutil::trio_cohort(trios, TraitKind::ordinal, 2);
  // second trait column: the same values coded binary, for the QTDT side
  cohort.trait_specs.push_back(TraitSpec{"yb", TraitKind::binary, 2});
  for (auto& [id, tv] : cohort.traits) {
    Vector v(2);
    v << tv.values[0], tv.values[0];
    tv.values = v;
  }

  const auto adj = otdt_adjusted_statistic(cohort, "m1", 1, "y");
  const auto qtdt = weighted_score_statistic(cohort, "m1", 1, ScoreWeight::centered_trait, "yb");
  // S_adj = -S_qtdt when the trait is uniform, so the tests coincide
  CHECK(close(adj.statistic, qtdt.statistic, 1e-10));
  CHECK(close(adj.p_value, qtdt.p_value, 1e-10));
  CHECK(adj.S[0] == doctest::Approx(-qtdt.S[0]).epsilon(1e-10));
  // the half-weights show up as S = (sum_{y=0} c - sum_{y=1} c) / 2
  double half_sum = 0.0;
  for (const auto& ped : cohort.pedigrees) {
    const auto& child = ped.members[2];
    const auto c = allele_count(cohort.markers[0].call_for(child.id), 1);
    const double y = cohort.traits.at(child.id).values[0];
    half_sum += (y == 0.0 ? 0.5 : -0.5) * *c;
  }
  CHECK(adj.S[0] == doctest::Approx(half_sum).epsilon(1e-10));
}

TEST_CASE("otdt_adjusted: all-tied traits raise the zero-variance error") {
  std::vector<TrioSpec> trios;
  for (int i = 0; i < 10; ++i) trios.push_back({{1, 2}, {1, 2}, {1, 1}, 1.0});
  const auto cohort = testutil::trio_cohort(trios);
  CHECK_THROWS_AS(otdt_adjusted_statistic(cohort, "m1", 1, "y"), DegenerateVarianceError);
}

TEST_CASE("unit-weight score reduces to transmitted-vs-untransmitted counting") {
  std::mt19937_64 rng(642);
  const Cohort cohort = random_trio_cohort(80, rng);
  const auto res = weighted_score_statistic(cohort, "m1", 1, ScoreWeight::unit);

  // direct count: b = transmissions of allele 1 attributable to het parents
  double b = 0.0, n_het = 0.0;
  for (const auto& ped : cohort.pedigrees) {
    const auto& child = ped.members[2];
    const auto c = allele_count(cohort.markers[0].call_for(child.id), 1);
    const auto cf = allele_count(cohort.markers[0].call_for(*child.father_id), 1);
    const auto cm = allele_count(cohort.markers[0].call_for(*child.mother_id), 1);
    if (!c || !cf || !cm) continue;
    int fixed = 0;
    if (*cf != 1) fixed += *cf / 2;
    if (*cm != 1) fixed += *cm / 2;
    n_het += (*cf == 1) + (*cm == 1);
    b += *c - fixed;
  }
  CHECK(res.S[0] - res.E0_S[0] == doctest::Approx(b - n_het / 2.0).epsilon(1e-12));
  CHECK(res.Var0_S(0, 0) == doctest::Approx(n_het / 4.0).epsilon(1e-12));
  // McNemar form of the classic TDT
  const double untransmitted = n_het - b;
  const double mcnemar = (b - untransmitted) * (b - untransmitted) / (b + untransmitted);
  CHECK(close(res.statistic, mcnemar, 1e-12));
}

TEST_CASE("constant trait makes the centered-trait weights an error") {
  std::vector<TrioSpec> trios;
  for (int i = 0; i < 6; ++i) trios.push_back({{1, 2}, {1, 2}, {1, 1}, 0.5});
  auto cohort = testutil::trio_cohort(trios, TraitKind::quantitative);
  CHECK_THROWS_AS(
      weighted_score_statistic(cohort, "m1", 1, ScoreWeight::centered_trait, "y"),
      DegenerateVarianceError);
  // and case-control mode is rejected outright
  auto cc = testutil::trio_cohort({{{1, 2}, {1, 2}, {1, 1}, 1.0}});
  cc.mode = CohortMode::case_control;
  CHECK_THROWS_AS(weighted_score_statistic(cc, "m1", 1, ScoreWeight::unit),
                  std::invalid_argument);
}

TEST_CASE("one informative transmission can never push p below 0.3") {
  // single het father, everything else fixed: both outcomes enumerate to
  // the same chi-square of 1
  for (int outcome = 0; outcome < 2; ++outcome) {
    const int child_a = outcome == 0 ? 1 : 2;
    const auto cohort = testutil::trio_cohort({{{1, 2}, {2, 2}, {child_a, 2}, 2.0},
                                               {{1, 1}, {1, 1}, {1, 1}, 0.0}});
    std::unordered_map<std::string, double> w{{"f1_c", 1.0}, {"f2_c", 0.0}};
    const auto res =
        weighted_score_statistic(cohort, "m1", 1, ScoreWeight::custom, "", &w);
    CHECK(res.statistic == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(res.p_value >= 0.3);
  }
}

TEST_CASE("Kendall tau: full concordance, full discordance, brute force") {
  const Vector x3 = (Vector(3) << 1, 2, 3).finished();
  CHECK(kendall_tau(x3, x3).U == doctest::Approx(1.0));

  const Vector x2 = (Vector(2) << 1, 2).finished();
  const Vector y2 = (Vector(2) << 2, 1).finished();
  CHECK(kendall_tau(x2, y2).U == doctest::Approx(-1.0));

  std::mt19937_64 rng(13);
  std::normal_distribution<double> gauss;
  Vector x(10), y(10);
  for (int i = 0; i < 10; ++i) {
    x[i] = gauss(rng);
    y[i] = gauss(rng);
  }
  const auto kt = kendall_tau(x, y);
  long conc = 0, disc = 0;
  for (int i = 0; i < 10; ++i)
    for (int j = i + 1; j < 10; ++j) {
      const double prod = (x[i] - x[j]) * (y[i] - y[j]);
      conc += prod > 0;
      disc += prod < 0;
    }
  CHECK(kt.concordant == conc);
  CHECK(kt.discordant == disc);
  const double var0 = 10.0 * 9.0 * 25.0 / 18.0;
  CHECK(kt.tau == doctest::Approx((conc - disc) / std::sqrt(var0)).epsilon(1e-12));
  CHECK_THROWS(kendall_tau(x2, x3));
}

TEST_CASE("null calibration smoke test for gen_tau on trio cohorts") {
  // reduced version of the acceptance run: 1500 null cohorts of 250 trios
  std::mt19937_64 rng(20240801);
  int rejections = 0;
  const int reps = 1500;
  for (int rep = 0; rep < reps; ++rep) {
    const Cohort cohort = random_trio_cohort(250, rng);
    try {
      rejections += gen_tau_statistic(cohort, "m1", 1).p_value < 0.05;
    } catch (const DegenerateMarkerError&) {
      // essentially impossible at this size; count as non-rejection
    }
  }
  const double rate = static_cast<double>(rejections) / reps;
  CHECK(rate > 0.030);
  CHECK(rate < 0.072);
}

TEST_CASE("missing genotypes exclude subjects per the stated policy") {
  // child 2's father genotype missing -> that child is excluded
  Cohort cohort = testutil::trio_cohort({{{1, 2}, {1, 2}, {1, 1}, 0.0},
                                         {{1, 2}, {1, 2}, {1, 2}, 1.0},
                                         {{1, 2}, {1, 2}, {2, 2}, 2.0}});
  cohort.markers[0].calls.erase("f2_f");
  const auto res = gen_tau_statistic(cohort, "m1", 1);
  CHECK(res.n_used == 2);
}
