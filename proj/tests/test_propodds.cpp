#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "gentau/propodds.hpp"
#include "gentau/stats.hpp"

#include <cmath>
#include <random>

using namespace gentau;

namespace {

// independent data generator for the fitting tests
struct Sim {
  Eigen::VectorXi y;
  Matrix Z;
};

Sim simulate_po(int n, const Vector& alpha, const Vector& delta, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> unif(0, 1);
  const int K = static_cast<int>(alpha.size()) + 1;
  Sim sim;
  sim.y.resize(n);
  sim.Z.resize(n, delta.size());
  for (int i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < delta.size(); ++j) sim.Z(i, j) = gauss(rng);
    const double eta = delta.size() > 0 ? delta.dot(sim.Z.row(i)) : 0.0;
    const double u = unif(rng);
    int level = K - 1;
    for (int k = 0; k < K - 1; ++k) {
      if (u <= stats::logistic(alpha[k] + eta)) {
        level = k;
        break;
      }
    }
    sim.y[i] = level;
  }
  return sim;
}

Eigen::VectorXi levels_vector(std::initializer_list<std::pair<int, int>> counts) {
  int total = 0;
  for (auto [lvl, n] : counts) total += n;
  Eigen::VectorXi y(total);
  int r = 0;
  for (auto [lvl, n] : counts)
    for (int i = 0; i < n; ++i) y[r++] = lvl;
  return y;
}

}  // namespace

TEST_CASE("intercept-only MLE sits at the empirical cumulative logits") {
  const auto y = levels_vector({{0, 25}, {1, 50}, {2, 25}});
  const auto fit = fit_cumulative_logit(y, Matrix(100, 0), 3);
  REQUIRE(fit.converged);
  CHECK(fit.alpha[0] == doctest::Approx(std::log(0.25 / 0.75)).epsilon(1e-8));
  CHECK(fit.alpha[1] == doctest::Approx(std::log(0.75 / 0.25)).epsilon(1e-8));
  CHECK(fit.alpha[0] == doctest::Approx(-1.09861).epsilon(1e-4));
}

TEST_CASE("fitted log-likelihood dominates the truth on the fitting sample") {
  const Vector alpha = (Vector(1) << 0.3).finished();
  const Vector delta = (Vector(1) << -0.7).finished();
  const auto sim = simulate_po(200, alpha, delta, 99);
  const auto fit = fit_cumulative_logit(sim.y, sim.Z, 2);
  REQUIRE(fit.converged);
  const double at_truth = cumulative_logit_loglik(sim.y, sim.Z, alpha, delta);
  CHECK(fit.loglik >= at_truth - 1e-10);
}

TEST_CASE("coarse-to-fine grid maximization agrees with the Newton fit") {
  // n = 50, one continuous covariate, K = 3: parameters (a0, a1, d)
  const Vector alpha = (Vector(2) << -0.8, 0.9).finished();
  const Vector delta = (Vector(1) << 0.6).finished();
  const auto sim = simulate_po(50, alpha, delta, 7);
  const auto fit = fit_cumulative_logit(sim.y, sim.Z, 3);
  REQUIRE(fit.converged);

  // independent oracle: refine a 3-d grid around a wide initial box
  double lo[3] = {-4.0, -4.0, -4.0};
  double hi[3] = {4.0, 4.0, 4.0};
  double best[3] = {0, 0, 0};
  for (int round = 0; round < 12; ++round) {
    double best_ll = -1e300;
    const int steps = 12;
    for (int i0 = 0; i0 <= steps; ++i0)
      for (int i1 = 0; i1 <= steps; ++i1)
        for (int i2 = 0; i2 <= steps; ++i2) {
          const double a0 = lo[0] + (hi[0] - lo[0]) * i0 / steps;
          const double a1 = lo[1] + (hi[1] - lo[1]) * i1 / steps;
          const double d = lo[2] + (hi[2] - lo[2]) * i2 / steps;
          if (a1 < a0) continue;
          const double ll = cumulative_logit_loglik(
              sim.y, sim.Z, (Vector(2) << a0, a1).finished(),
              (Vector(1) << d).finished());
          if (ll > best_ll) {
            best_ll = ll;
            best[0] = a0;
            best[1] = a1;
            best[2] = d;
          }
        }
    for (int k = 0; k < 3; ++k) {
      const double width = (hi[k] - lo[k]) / steps;
      lo[k] = best[k] - width;
      hi[k] = best[k] + width;
    }
  }
  CHECK(std::fabs(fit.alpha[0] - best[0]) < 1e-4);
  CHECK(std::fabs(fit.alpha[1] - best[1]) < 1e-4);
  CHECK(std::fabs(fit.delta[0] - best[2]) < 1e-4);
}

TEST_CASE("analytic score matches central finite differences") {
  const Vector alpha_true = (Vector(2) << -1.0, 0.5).finished();
  const Vector delta_true = (Vector(2) << 0.4, -0.3).finished();
  const auto sim = simulate_po(120, alpha_true, delta_true, 1234);

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> unif(-0.8, 0.8);
  for (int trial = 0; trial < 20; ++trial) {
    Vector alpha(2), delta(2);
    alpha[0] = -1.0 + unif(rng);
    alpha[1] = alpha[0] + 0.3 + std::fabs(unif(rng));
    delta[0] = unif(rng);
    delta[1] = unif(rng);

    const Vector g = cumulative_logit_score(sim.y, sim.Z, alpha, delta);
    const double h = 1e-5;
    for (int k = 0; k < 4; ++k) {
      Vector ap = alpha, am = alpha, dp = delta, dm = delta;
      if (k < 2) {
        ap[k] += h;
        am[k] -= h;
      } else {
        dp[k - 2] += h;
        dm[k - 2] -= h;
      }
      const double fd = (cumulative_logit_loglik(sim.y, sim.Z, ap, dp) -
                         cumulative_logit_loglik(sim.y, sim.Z, am, dm)) /
                        (2.0 * h);
      const double scale = std::max(1.0, std::fabs(fd));
      CHECK(std::fabs(g[k] - fd) / scale < 1e-4);
    }
  }
}

TEST_CASE("fitted cell probabilities sum to one") {
  const Vector alpha = (Vector(2) << -0.5, 0.7).finished();
  const Vector delta = (Vector(1) << 0.25).finished();
  const auto sim = simulate_po(80, alpha, delta, 2);
  const auto fit = fit_cumulative_logit(sim.y, sim.Z, 3);
  for (int i = 0; i < 10; ++i) {
    const Vector z = sim.Z.row(i).transpose();
    double total = 0.0;
    for (int k = 0; k < 3; ++k)
      total += gamma_hat(fit, k, z) - gamma_hat(fit, k - 1, z);
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("intercept-only score equations reproduce the observed margins") {
  const auto y = levels_vector({{0, 13}, {1, 29}, {2, 41}, {3, 17}});
  const auto fit = fit_cumulative_logit(y, Matrix(100, 0), 4);
  REQUIRE(fit.converged);
  const Vector z;
  const double freqs[4] = {0.13, 0.29, 0.41, 0.17};
  for (int k = 0; k < 4; ++k) {
    const double cell = gamma_hat(fit, k, z) - gamma_hat(fit, k - 1, z);
    CHECK(cell == doctest::Approx(freqs[k]).epsilon(1e-7));
  }
}

TEST_CASE("gamma_hat boundary conventions and monotonicity") {
  const auto y = levels_vector({{0, 25}, {1, 50}, {2, 25}});
  const auto fit = fit_cumulative_logit(y, Matrix(100, 0), 3);
  const Vector z;
  CHECK(gamma_hat(fit, -1, z) == 0.0);
  CHECK(gamma_hat(fit, 2, z) == 1.0);
  CHECK(gamma_hat(fit, 0, z) == doctest::Approx(0.25).epsilon(1e-8));
  CHECK_THROWS(gamma_hat(fit, 5, z));

  // monotone in k at random covariate points
  const Vector alpha = (Vector(3) << -1.2, 0.1, 1.4).finished();
  const Vector delta = (Vector(2) << 0.8, -0.5).finished();
  const auto sim = simulate_po(300, alpha, delta, 8);
  const auto fit2 = fit_cumulative_logit(sim.y, sim.Z, 4);
  std::mt19937_64 rng(6);
  std::normal_distribution<double> gauss;
  for (int t = 0; t < 50; ++t) {
    Vector zz(2);
    zz << gauss(rng), gauss(rng);
    double prev = 0.0;
    for (int k = -1; k <= 3; ++k) {
      const double g = gamma_hat(fit2, k, zz);
      CHECK(g >= prev - 1e-12);
      prev = g;
    }
  }
}

TEST_CASE("degenerate inputs raise the documented errors") {
  // fewer than 2 observed levels
  const auto y_const = levels_vector({{0, 30}});
  CHECK_THROWS_AS(fit_cumulative_logit(y_const, Matrix(30, 0), 3), std::invalid_argument);

  // complete separation: the covariate perfectly orders the response, so
  // the coefficient races off to infinity
  Eigen::VectorXi y(40);
  Matrix Z(40, 1);
  for (int i = 0; i < 40; ++i) {
    y[i] = i < 20 ? 0 : 1;
    Z(i, 0) = i < 20 ? 0.05 : -0.05;
  }
  CHECK_THROWS_AS(fit_cumulative_logit(y, Z, 2), SeparationError);
}

TEST_CASE("weighted fit reduces to replication of observations") {
  // fitting (y, w=2) must equal fitting the duplicated sample
  const Vector alpha = (Vector(1) << 0.2).finished();
  const Vector delta = (Vector(1) << -0.5).finished();
  const auto sim = simulate_po(60, alpha, delta, 77);

  Eigen::VectorXi y2(120);
  Matrix Z2(120, 1);
  for (int i = 0; i < 60; ++i) {
    y2[i] = sim.y[i];
    y2[60 + i] = sim.y[i];
    Z2(i, 0) = sim.Z(i, 0);
    Z2(60 + i, 0) = sim.Z(i, 0);
  }
  const auto fit_w = fit_cumulative_logit_weighted(sim.y, sim.Z, Vector::Constant(60, 2.0), 2);
  const auto fit_d = fit_cumulative_logit(y2, Z2, 2);
  CHECK(fit_w.alpha[0] == doctest::Approx(fit_d.alpha[0]).epsilon(1e-7));
  CHECK(fit_w.delta[0] == doctest::Approx(fit_d.delta[0]).epsilon(1e-7));
  CHECK(fit_w.loglik == doctest::Approx(fit_d.loglik).epsilon(1e-9));
}

TEST_CASE("offsets shift the linear predictor") {
  // with offset o and no covariates, fitted alpha equals the no-offset fit
  // minus o when the offset is constant
  const auto y = levels_vector({{0, 30}, {1, 50}, {2, 20}});
  const Vector offsets = Vector::Constant(100, 0.7);
  const auto fit0 = fit_cumulative_logit(y, Matrix(100, 0), 3);
  const auto fit1 = fit_cumulative_logit_weighted(y, Matrix(100, 0), Vector::Ones(100), 3,
                                                  std::nullopt, 1e-8, 100, offsets);
  CHECK(fit1.alpha[0] == doctest::Approx(fit0.alpha[0] - 0.7).epsilon(1e-7));
  CHECK(fit1.alpha[1] == doctest::Approx(fit0.alpha[1] - 0.7).epsilon(1e-7));
}
