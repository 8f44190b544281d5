#include "gentau/power.hpp"

#include "gentau/stats.hpp"
#include "gentau/types.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <fstream>
#include <sstream>

namespace gentau {

namespace {

void require_square(const Matrix& m, Eigen::Index p, const char* name) {
  if (m.rows() != p || m.cols() != p)
    throw std::invalid_argument(std::string(name) + " must be " + std::to_string(p) +
                                "x" + std::to_string(p));
  if (!m.isApprox(m.transpose(), 1e-8))
    throw std::invalid_argument(std::string(name) + " must be symmetric");
}

}  // namespace

WeightedChiSq alt_distribution(const AltSpec& spec) {
  const Eigen::Index p = spec.dim();
  if (p == 0) throw std::invalid_argument("alt_distribution: empty spec");
  require_square(spec.sigma0, p, "Sigma0");
  require_square(spec.sigma1, p, "Sigma1");

  Eigen::SelfAdjointEigenSolver<Matrix> es1(spec.sigma1);
  const double l1max = es1.eigenvalues().maxCoeff();
  if (es1.eigenvalues().minCoeff() <= 1e-12 * std::max(l1max, 1.0))
    throw std::invalid_argument("alt_distribution: Sigma1 is not positive definite");
  const Vector d_sqrt = es1.eigenvalues().cwiseSqrt();
  const Matrix s1_half =
      es1.eigenvectors() * d_sqrt.asDiagonal() * es1.eigenvectors().transpose();
  const Matrix s1_half_inv = es1.eigenvectors() * d_sqrt.cwiseInverse().asDiagonal() *
                             es1.eigenvectors().transpose();

  WeightedChiSq out;

  // Sigma0 inverse, falling back to the pseudo-inverse when rank deficient
  Eigen::SelfAdjointEigenSolver<Matrix> es0(spec.sigma0);
  const double l0max = es0.eigenvalues().maxCoeff();
  if (l0max <= 0.0)
    throw std::invalid_argument("alt_distribution: Sigma0 has no positive eigenvalue");
  const double tol0 = 1e-10 * l0max;
  Vector inv0 = Vector::Zero(p);
  for (Eigen::Index k = 0; k < p; ++k) {
    if (es0.eigenvalues()[k] > tol0)
      inv0[k] = 1.0 / es0.eigenvalues()[k];
    else
      out.sigma0_pseudo_inverted = true;
  }
  const Matrix sigma0_inv =
      es0.eigenvectors() * inv0.asDiagonal() * es0.eigenvectors().transpose();

  Matrix m = s1_half * sigma0_inv * s1_half;
  m = 0.5 * (m + m.transpose());

  Eigen::SelfAdjointEigenSolver<Matrix> esm(m);
  // descending order
  out.e.resize(p);
  out.Q.resize(p, p);
  for (Eigen::Index k = 0; k < p; ++k) {
    out.e[k] = std::max(esm.eigenvalues()[p - 1 - k], 0.0);
    out.Q.row(k) = esm.eigenvectors().col(p - 1 - k).transpose();
  }
  const Vector mu_r = out.Q * (s1_half_inv * spec.mu);
  out.phi = mu_r.cwiseProduct(mu_r);
  return out;
}

ApproxChiSq match_moments(const WeightedChiSq& w) {
  if (w.e.size() == 0 || w.e.maxCoeff() <= 0.0)
    throw std::invalid_argument("match_moments: need at least one positive weight");

  // c_k = sum e^k + k sum e^k phi (one degree of freedom per component)
  double c[5] = {0, 0, 0, 0, 0};
  for (int k = 1; k <= 4; ++k) {
    for (Eigen::Index i = 0; i < w.e.size(); ++i) {
      const double ek = std::pow(w.e[i], k);
      c[k] += ek + k * ek * (w.phi.size() > 0 ? w.phi[i] : 0.0);
    }
  }

  const double s1 = c[3] / std::pow(c[2], 1.5);
  const double s2 = c[4] / (c[2] * c[2]);

  ApproxChiSq out;
  out.mu_q = c[1];
  out.sigma_q = std::sqrt(2.0 * c[2]);

  double a;
  if (s1 * s1 > s2) {
    // skewness can be matched exactly alongside the first two moments
    a = 1.0 / (s1 - std::sqrt(s1 * s1 - s2));
    out.upsilon = s1 * a * a * a - a * a;
    out.l = a * a - 2.0 * out.upsilon;
    out.skew_dominant = true;
  } else {
    a = 1.0 / s1;
    out.upsilon = 0.0;
    out.l = c[2] * c[2] * c[2] / (c[3] * c[3]);
    out.skew_dominant = false;
  }
  out.mu_x = out.l + out.upsilon;
  out.sigma_x = std::sqrt(2.0) * a;
  return out;
}

double approx_tail(const ApproxChiSq& approx, double q) {
  const double t = (q - approx.mu_q) / approx.sigma_q;
  const double x = t * approx.sigma_x + approx.mu_x;
  if (x <= 0.0) return 1.0;
  return stats::noncentral_chisq_sf(x, approx.l, approx.upsilon);
}

double power(const AltSpec& spec, double alpha) {
  if (alpha <= 0.0 || alpha >= 1.0)
    throw std::invalid_argument("power: alpha must be in (0,1)");
  const WeightedChiSq w = alt_distribution(spec);
  const ApproxChiSq approx = match_moments(w);
  const double q =
      stats::chisq_quantile(1.0 - alpha, static_cast<double>(spec.dim()));
  return approx_tail(approx, q);
}

AltSpec read_alt_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open spec file " + path.string());

  std::vector<std::vector<double>> sigma0, sigma1, mu;
  std::vector<std::vector<double>>* target = nullptr;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line == "#sigma0") { target = &sigma0; continue; }
    if (line == "#sigma1") { target = &sigma1; continue; }
    if (line == "#mu") { target = &mu; continue; }
    if (line[0] == '#') continue;
    if (target == nullptr)
      throw ParseError(path.string() + ":" + std::to_string(line_no) +
                       ": data before any section marker");
    std::vector<double> row;
    std::istringstream is(line);
    double v;
    while (is >> v) row.push_back(v);
    if (row.empty())
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": bad row");
    target->push_back(std::move(row));
  }
  const std::size_t p = sigma0.size();
  if (p == 0 || sigma1.size() != p || mu.size() != 1 || mu[0].size() != p)
    throw ParseError(path.string() + ": expected pxp #sigma0, pxp #sigma1 and a p-entry #mu row");

  AltSpec spec;
  spec.sigma0.resize(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p));
  spec.sigma1.resize(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p));
  spec.mu.resize(static_cast<Eigen::Index>(p));
  for (std::size_t i = 0; i < p; ++i) {
    if (sigma0[i].size() != p || sigma1[i].size() != p)
      throw ParseError(path.string() + ": ragged matrix rows");
    for (std::size_t j = 0; j < p; ++j) {
      spec.sigma0(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = sigma0[i][j];
      spec.sigma1(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = sigma1[i][j];
    }
    spec.mu[static_cast<Eigen::Index>(i)] = mu[0][i];
  }
  return spec;
}

}  // namespace gentau
