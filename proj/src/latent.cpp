#include "gentau/latent.hpp"

#include "gentau/pedigree.hpp"
#include "gentau/propodds.hpp"
#include "gentau/rng.hpp"
#include "gentau/stats.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <sstream>
#include <thread>

namespace gentau {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr int kMaxOuterIterations = 500;
constexpr double kOuterTol = 1e-7;
constexpr int kEnumerationBitLimit = 24;

double log_cell(int y, const Vector& alpha, double eta) {
  const int m = static_cast<int>(alpha.size());
  const double upper = y <= m - 1 ? stats::logistic(alpha[y] + eta) : 1.0;
  const double lower = y >= 1 ? stats::logistic(alpha[y - 1] + eta) : 0.0;
  const double cell = upper - lower;
  return cell > 0.0 ? std::log(cell) : kNegInf;
}

double lse2(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

int sample_level(const Vector& alpha, double eta, double u) {
  const int m = static_cast<int>(alpha.size());
  for (int k = 0; k < m; ++k)
    if (u <= stats::logistic(alpha[k] + eta)) return k;
  return m;  // top level
}

double uniform01(std::mt19937_64& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

// Latent feature row a_j = (u1, g, g==2) contracted with gamma; g is the
// member's U2 bit sum, whose product term is 1 exactly when g == 2.
double gamma_term(const Eigen::Vector3d& gamma, int u1, int g) {
  return gamma[0] * u1 + gamma[1] * g + gamma[2] * (g == 2 ? 1.0 : 0.0);
}

struct MemberPlan {
  std::size_t member = 0;      // index into pedigree members
  bool founder = false;
  std::size_t founder_pos = 0;  // founders: position among founders
  std::size_t father = 0;       // nonfounders: parent member indices
  std::size_t mother = 0;
  std::size_t pair_base = 0;    // nonfounders: first of its two U3 slots
};

// Propagation layout in parents-first order.
struct Plan {
  std::vector<MemberPlan> order;
  std::size_t founders = 0;
  std::size_t pairs = 0;
  int bits() const { return static_cast<int>(1 + 2 * founders + pairs); }
};

Plan make_plan(const Pedigree& ped) {
  Plan plan;
  plan.founders = ped.founder_idx.size();
  plan.pairs = ped.parent_offspring_pairs();

  std::vector<std::size_t> founder_pos(ped.size(), 0);
  for (std::size_t f = 0; f < ped.founder_idx.size(); ++f)
    founder_pos[ped.founder_idx[f]] = f;
  std::vector<std::size_t> nonfounder_pos(ped.size(), 0);
  for (std::size_t nf = 0; nf < ped.nonfounder_idx.size(); ++nf)
    nonfounder_pos[ped.nonfounder_idx[nf]] = nf;

  for (std::size_t i : ped.topo_order) {
    const Individual& ind = ped.members[i];
    MemberPlan mp;
    mp.member = i;
    mp.founder = ind.is_founder();
    if (mp.founder) {
      mp.founder_pos = founder_pos[i];
    } else {
      mp.father = ped.index_of(*ind.father_id);
      mp.mother = ped.index_of(*ind.mother_id);
      mp.pair_base = 2 * nonfounder_pos[i];
    }
    plan.order.push_back(mp);
  }
  return plan;
}

void check_family(const FamilyData& fam, const LatentParams& params) {
  if (fam.pedigree == nullptr)
    throw std::invalid_argument("latent model: family without pedigree");
  const auto n = static_cast<Eigen::Index>(fam.pedigree->size());
  if (fam.traits.size() != n)
    throw std::invalid_argument("latent model: trait length mismatch in family " +
                                fam.pedigree->family_id);
  if (fam.covariates.size() > 0 && fam.covariates.rows() != n)
    throw std::invalid_argument("latent model: covariate rows mismatch in family " +
                                fam.pedigree->family_id);
  if (fam.covariates.cols() != params.beta.size())
    throw std::invalid_argument("latent model: beta length does not match covariates");
  const int K = params.levels();
  for (Eigen::Index j = 0; j < n; ++j)
    if (fam.traits[j] < 0 || fam.traits[j] >= K)
      throw std::invalid_argument("latent model: trait level outside 0..K-1");
  for (Eigen::Index k = 1; k < params.alpha.size(); ++k)
    if (params.alpha[k] < params.alpha[k - 1])
      throw std::invalid_argument("latent model: alpha must be nondecreasing");
}

// Per-member log cell probabilities for each latent class (u1, g).
// logp(j, 3*u1 + g).
Matrix class_log_probs(const FamilyData& fam, const LatentParams& params) {
  const Eigen::Index n = fam.traits.size();
  const Vector eta_x = fam.covariates.cols() > 0
                           ? Vector(fam.covariates * params.beta)
                           : Vector::Zero(n);
  Matrix logp(n, 6);
  for (Eigen::Index j = 0; j < n; ++j)
    for (int u1 = 0; u1 < 2; ++u1)
      for (int g = 0; g < 3; ++g)
        logp(j, 3 * u1 + g) =
            log_cell(fam.traits[j], params.alpha,
                     eta_x[j] + gamma_term(params.gamma, u1, g));
  return logp;
}

bool collapsed_model(const LatentParams& params) {
  return params.gamma[1] == 0.0 && params.gamma[2] == 0.0;
}

// gamma2 = gamma3 = 0: the U2/U3 layers integrate out, leaving a two-term
// mixture over U1.
double collapsed_loglik(const FamilyData& fam, const LatentParams& params,
                        double* posterior_u1) {
  const Matrix logp = class_log_probs(fam, params);
  double ll0 = 0.0, ll1 = 0.0;
  for (Eigen::Index j = 0; j < fam.traits.size(); ++j) {
    ll0 += logp(j, 0);
    ll1 += logp(j, 3);
  }
  const double t0 = params.theta1 > 0.0 ? std::log(params.theta1) + ll1 : kNegInf;
  const double t1 = params.theta1 < 1.0 ? std::log1p(-params.theta1) + ll0 : kNegInf;
  const double total = lse2(t0, t1);
  if (posterior_u1 != nullptr)
    *posterior_u1 = total == kNegInf ? 0.0 : std::exp(t0 - total);
  return total;
}

struct FullPosteriors {
  double u1 = 0.0;                  // E[U1 | data]
  Vector founder_bits;              // E[bit | data], 2F entries
  Matrix member_class;              // n x 6, P(u1, g_j | data)
};

// Full enumeration over independent bits. Bit layout: bit 0 = U1, then two
// bits per founder (founder order), then the U3 bits (two per nonfounder).
double full_loglik(const FamilyData& fam, const LatentParams& params,
                   FullPosteriors* post) {
  const Plan plan = make_plan(*fam.pedigree);
  if (plan.bits() > kEnumerationBitLimit) {
    std::ostringstream os;
    os << "family " << fam.pedigree->family_id << " needs 2^" << plan.bits()
       << " latent configurations (limit 2^" << kEnumerationBitLimit
       << "); fix gamma2 = gamma3 = 0 to enable the collapsed likelihood";
    throw EnumerationLimitError(os.str());
  }
  const Matrix logp = class_log_probs(fam, params);
  const Eigen::Index n = fam.traits.size();

  const double log_t1 = params.theta1 > 0.0 ? std::log(params.theta1) : kNegInf;
  const double log_t1c = params.theta1 < 1.0 ? std::log1p(-params.theta1) : kNegInf;
  const double log_t2 = params.theta2 > 0.0 ? std::log(params.theta2) : kNegInf;
  const double log_t2c = params.theta2 < 1.0 ? std::log1p(-params.theta2) : kNegInf;
  const double log_half = std::log(0.5);

  const std::uint64_t n_cfg = std::uint64_t(1) << plan.bits();
  std::vector<int> u2a(fam.pedigree->size()), u2b(fam.pedigree->size());

  auto config_logw = [&](std::uint64_t cfg, std::vector<int>* g_out) -> double {
    const int u1 = static_cast<int>(cfg & 1);
    double logw = u1 ? log_t1 : log_t1c;
    if (logw == kNegInf) return kNegInf;
    logw += static_cast<double>(plan.pairs) * log_half;
    for (const MemberPlan& mp : plan.order) {
      if (mp.founder) {
        const int b1 = static_cast<int>((cfg >> (1 + 2 * mp.founder_pos)) & 1);
        const int b2 = static_cast<int>((cfg >> (2 + 2 * mp.founder_pos)) & 1);
        u2a[mp.member] = b1;
        u2b[mp.member] = b2;
        logw += (b1 ? log_t2 : log_t2c) + (b2 ? log_t2 : log_t2c);
        if (logw == kNegInf) return kNegInf;
      } else {
        const int tf = static_cast<int>((cfg >> (1 + 2 * plan.founders + mp.pair_base)) & 1);
        const int tm = static_cast<int>((cfg >> (2 + 2 * plan.founders + mp.pair_base)) & 1);
        u2a[mp.member] = tf ? u2a[mp.father] : u2b[mp.father];
        u2b[mp.member] = tm ? u2a[mp.mother] : u2b[mp.mother];
      }
    }
    for (Eigen::Index j = 0; j < n; ++j) {
      const int g = u2a[j] + u2b[j];
      logw += logp(j, 3 * u1 + g);
      if (g_out != nullptr) (*g_out)[j] = g;
    }
    return logw;
  };

  // streaming log-sum-exp
  double max_logw = kNegInf;
  double scaled_sum = 0.0;
  for (std::uint64_t cfg = 0; cfg < n_cfg; ++cfg) {
    const double logw = config_logw(cfg, nullptr);
    if (logw == kNegInf) continue;
    if (logw > max_logw) {
      scaled_sum = scaled_sum * std::exp(max_logw - logw) + 1.0;
      max_logw = logw;
    } else {
      scaled_sum += std::exp(logw - max_logw);
    }
  }
  const double total = max_logw == kNegInf ? kNegInf : max_logw + std::log(scaled_sum);

  if (post != nullptr && total != kNegInf) {
    post->u1 = 0.0;
    post->founder_bits = Vector::Zero(static_cast<Eigen::Index>(2 * plan.founders));
    post->member_class = Matrix::Zero(n, 6);
    std::vector<int> g(fam.pedigree->size());
    for (std::uint64_t cfg = 0; cfg < n_cfg; ++cfg) {
      const double logw = config_logw(cfg, &g);
      if (logw == kNegInf) continue;
      const double w = std::exp(logw - total);
      const int u1 = static_cast<int>(cfg & 1);
      post->u1 += w * u1;
      for (std::size_t f = 0; f < plan.founders; ++f) {
        post->founder_bits[static_cast<Eigen::Index>(2 * f)] +=
            w * static_cast<double>((cfg >> (1 + 2 * f)) & 1);
        post->founder_bits[static_cast<Eigen::Index>(2 * f + 1)] +=
            w * static_cast<double>((cfg >> (2 + 2 * f)) & 1);
      }
      for (Eigen::Index j = 0; j < n; ++j) post->member_class(j, 3 * u1 + g[j]) += w;
    }
  }
  return total;
}

}  // namespace

double latent_penalty(const LatentParams& params) {
  auto term = [](double t) {
    return t > 0.0 && t < 1.0 ? std::log(t) + std::log1p(-t) : kNegInf;
  };
  return kPenaltyEps * (term(params.theta1) + term(params.theta2));
}

std::vector<int> generate_family(const Pedigree& ped, const Matrix& covariates,
                                 const LatentParams& params, std::uint64_t seed) {
  auto rng = make_rng(seed);
  const int u1 = uniform01(rng) < params.theta1 ? 1 : 0;
  return generate_family_given_u1(ped, covariates, params, rng(), u1);
}

std::vector<int> generate_family_given_u1(const Pedigree& ped, const Matrix& covariates,
                                          const LatentParams& params, std::uint64_t seed,
                                          int u1) {
  FamilyData probe{&ped, covariates, Eigen::VectorXi::Zero(static_cast<Eigen::Index>(ped.size()))};
  check_family(probe, params);

  auto rng = make_rng(seed);
  const Plan plan = make_plan(ped);

  std::vector<int> u2a(ped.size()), u2b(ped.size());
  // founder bits in founder order, then U3 coins in nonfounder order
  std::vector<int> founder_bits(2 * plan.founders);
  for (auto& b : founder_bits) b = uniform01(rng) < params.theta2 ? 1 : 0;
  std::vector<int> coins(plan.pairs);
  for (auto& c : coins) c = uniform01(rng) < 0.5 ? 1 : 0;

  for (const MemberPlan& mp : plan.order) {
    if (mp.founder) {
      u2a[mp.member] = founder_bits[2 * mp.founder_pos];
      u2b[mp.member] = founder_bits[2 * mp.founder_pos + 1];
    } else {
      u2a[mp.member] = coins[mp.pair_base] ? u2a[mp.father] : u2b[mp.father];
      u2b[mp.member] = coins[mp.pair_base + 1] ? u2a[mp.mother] : u2b[mp.mother];
    }
  }

  std::vector<int> traits(ped.size());
  for (std::size_t j = 0; j < ped.size(); ++j) {
    const double eta_x =
        covariates.cols() > 0
            ? covariates.row(static_cast<Eigen::Index>(j)).dot(params.beta)
            : 0.0;
    const double eta =
        eta_x + gamma_term(params.gamma, u1, u2a[j] + u2b[j]);
    traits[j] = sample_level(params.alpha, eta, uniform01(rng));
  }
  return traits;
}

double latent_loglik(const FamilyData& family, const LatentParams& params) {
  check_family(family, params);
  if (collapsed_model(params)) return collapsed_loglik(family, params, nullptr);
  return full_loglik(family, params, nullptr);
}

double latent_loglik_enumerated(const FamilyData& family, const LatentParams& params) {
  check_family(family, params);
  return full_loglik(family, params, nullptr);
}

double latent_loglik(std::span<const FamilyData> families, const LatentParams& params) {
  double total = 0.0;
  for (const auto& fam : families) total += latent_loglik(fam, params);
  return total;
}

namespace {

// ---------------------------------------------------------------------------
// Penalized EM fitting
// ---------------------------------------------------------------------------

struct EmDesign {
  // pseudo-observation rows: per family, per member, per latent class
  Eigen::VectorXi y;
  Matrix Z;        // free-coefficient columns
  Vector offsets;  // contribution of frozen coefficients
  // row block bookkeeping
  std::vector<std::size_t> family_row_start;
  int classes = 0;  // 2 (collapsed) or 6 (full)
  // free-coefficient layout inside Z after the covariate block
  int beta_cols = 0;
  int col_gamma1 = -1, col_gamma2 = -1, col_gamma3 = -1;
};

EmDesign build_design(std::span<const FamilyData> families, const LatentFitMask& mask,
                      const LatentParams& init, bool collapsed) {
  EmDesign d;
  d.classes = collapsed ? 2 : 6;
  std::size_t rows = 0;
  for (const auto& fam : families) rows += fam.pedigree->size() * d.classes;

  const int p = static_cast<int>(init.beta.size());
  d.beta_cols = mask.beta ? 0 : p;
  int cols = d.beta_cols;
  if (!mask.gamma1) d.col_gamma1 = cols++;
  if (!mask.gamma2 && !collapsed) d.col_gamma2 = cols++;
  if (!mask.gamma3 && !collapsed) d.col_gamma3 = cols++;

  d.y.resize(static_cast<Eigen::Index>(rows));
  d.Z = Matrix::Zero(static_cast<Eigen::Index>(rows), cols);
  d.offsets = Vector::Zero(static_cast<Eigen::Index>(rows));

  std::size_t r = 0;
  for (const auto& fam : families) {
    d.family_row_start.push_back(r);
    const Eigen::Index n = fam.traits.size();
    for (Eigen::Index j = 0; j < n; ++j) {
      for (int cls = 0; cls < d.classes; ++cls) {
        const int u1 = collapsed ? cls : cls / 3;
        const int g = collapsed ? 0 : cls % 3;
        const auto row = static_cast<Eigen::Index>(r);
        d.y[row] = fam.traits[j];
        double off = 0.0;
        if (p > 0) {
          if (mask.beta)
            off += fam.covariates.row(j).dot(init.beta);
          else
            d.Z.row(row).head(p) = fam.covariates.row(j);
        }
        if (d.col_gamma1 >= 0)
          d.Z(row, d.col_gamma1) = u1;
        else
          off += init.gamma[0] * u1;
        if (!collapsed) {
          if (d.col_gamma2 >= 0)
            d.Z(row, d.col_gamma2) = g;
          else
            off += init.gamma[1] * g;
          if (d.col_gamma3 >= 0)
            d.Z(row, d.col_gamma3) = (g == 2 ? 1.0 : 0.0);
          else
            off += init.gamma[2] * (g == 2 ? 1.0 : 0.0);
        }
        d.offsets[row] = off;
        ++r;
      }
    }
  }
  return d;
}

void unpack_coefficients(const EmDesign& d, const PropOddsFit& fit, LatentParams& params) {
  params.alpha = fit.alpha;
  if (d.beta_cols > 0) params.beta = fit.delta.head(d.beta_cols);
  if (d.col_gamma1 >= 0) params.gamma[0] = fit.delta[d.col_gamma1];
  if (d.col_gamma2 >= 0) params.gamma[1] = fit.delta[d.col_gamma2];
  if (d.col_gamma3 >= 0) params.gamma[2] = fit.delta[d.col_gamma3];
}

Vector pack_coefficients(const EmDesign& d, const LatentParams& params) {
  Vector delta = Vector::Zero(d.Z.cols());
  if (d.beta_cols > 0) delta.head(d.beta_cols) = params.beta;
  if (d.col_gamma1 >= 0) delta[d.col_gamma1] = params.gamma[0];
  if (d.col_gamma2 >= 0) delta[d.col_gamma2] = params.gamma[1];
  if (d.col_gamma3 >= 0) delta[d.col_gamma3] = params.gamma[2];
  return delta;
}

struct EmState {
  LatentParams params;
  double penalized_loglik = kNegInf;
  double loglik = kNegInf;
  bool converged = false;
  int iterations = 0;
};

// One EM run from a given start. `aggregate` enables the level-count fast
// path (collapsed model, no covariate columns): sufficient statistics reduce
// to weighted level counts per U1 class.
EmState run_em(std::span<const FamilyData> families, const LatentFitMask& mask,
               const LatentParams& start, bool collapsed, const EmDesign* design,
               const Matrix* level_counts) {
  EmState st;
  st.params = start;
  const double n_families = static_cast<double>(families.size());
  const int K = start.levels();
  const bool aggregate = level_counts != nullptr;

  double total_founder_bits = 0.0;
  for (const auto& fam : families)
    total_founder_bits += 2.0 * static_cast<double>(fam.pedigree->founder_idx.size());

  const bool gamma1_free = design->col_gamma1 >= 0;
  Vector weights;
  Eigen::VectorXi agg_y;
  Matrix agg_Z;
  Vector agg_offsets;
  if (aggregate) {
    agg_y.resize(2 * K);
    agg_Z = Matrix::Zero(2 * K, gamma1_free ? 1 : 0);
    agg_offsets = Vector::Zero(2 * K);
    for (int u1 = 0; u1 < 2; ++u1)
      for (int k = 0; k < K; ++k) {
        agg_y[u1 * K + k] = k;
        if (gamma1_free)
          agg_Z(u1 * K + k, 0) = u1;
        else
          agg_offsets[u1 * K + k] = start.gamma[0] * u1;  // frozen
      }
    weights = Vector::Zero(2 * K);
  } else {
    weights = Vector::Zero(design->y.size());
  }

  PropOddsFit warm;
  warm.levels = K;

  double prev = kNegInf;
  for (int iter = 1; iter <= kMaxOuterIterations; ++iter) {
    st.iterations = iter;

    // E-step: posteriors and the current penalized marginal log-likelihood
    double marginal = 0.0;
    double sum_q = 0.0;
    double sum_bits = 0.0;
    if (aggregate) {
      Vector logp0(K), logp1(K);
      for (int k = 0; k < K; ++k) {
        logp0[k] = log_cell(k, st.params.alpha, 0.0);
        logp1[k] = log_cell(k, st.params.alpha, st.params.gamma[0]);
      }
      weights.setZero();
      for (Eigen::Index i = 0; i < level_counts->rows(); ++i) {
        double ll0 = 0.0, ll1 = 0.0;
        for (int k = 0; k < K; ++k) {
          ll0 += (*level_counts)(i, k) * logp0[k];
          ll1 += (*level_counts)(i, k) * logp1[k];
        }
        const double t1 = st.params.theta1 > 0.0 ? std::log(st.params.theta1) + ll1 : kNegInf;
        const double t0 = st.params.theta1 < 1.0 ? std::log1p(-st.params.theta1) + ll0 : kNegInf;
        const double tot = lse2(t0, t1);
        marginal += tot;
        const double q = tot == kNegInf ? 0.0 : std::exp(t1 - tot);
        sum_q += q;
        for (int k = 0; k < K; ++k) {
          weights[k] += (1.0 - q) * (*level_counts)(i, k);
          weights[K + k] += q * (*level_counts)(i, k);
        }
      }
    } else if (collapsed) {
      weights.setZero();
      for (std::size_t fi = 0; fi < families.size(); ++fi) {
        double q = 0.0;
        marginal += collapsed_loglik(families[fi], st.params, &q);
        sum_q += q;
        const std::size_t base = design->family_row_start[fi];
        const Eigen::Index n = families[fi].traits.size();
        for (Eigen::Index j = 0; j < n; ++j) {
          weights[static_cast<Eigen::Index>(base) + 2 * j] = 1.0 - q;
          weights[static_cast<Eigen::Index>(base) + 2 * j + 1] = q;
        }
      }
    } else {
      weights.setZero();
      for (std::size_t fi = 0; fi < families.size(); ++fi) {
        FullPosteriors post;
        marginal += full_loglik(families[fi], st.params, &post);
        sum_q += post.u1;
        sum_bits += post.founder_bits.sum();
        const std::size_t base = design->family_row_start[fi];
        const Eigen::Index n = families[fi].traits.size();
        for (Eigen::Index j = 0; j < n; ++j)
          for (int cls = 0; cls < 6; ++cls)
            weights[static_cast<Eigen::Index>(base) + 6 * j + cls] = post.member_class(j, cls);
      }
    }
    const double penalized = marginal + latent_penalty(st.params);
    st.loglik = marginal;
    st.penalized_loglik = penalized;
    if (penalized - prev < kOuterTol && iter > 1) {
      st.converged = true;
      break;
    }
    prev = penalized;

    // M-step, thetas: closed form with the boundary penalty folded in
    if (!mask.theta1)
      st.params.theta1 = (sum_q + kPenaltyEps) / (n_families + 2.0 * kPenaltyEps);
    if (!mask.theta2) {
      if (collapsed)
        st.params.theta2 = 0.5;  // no likelihood information; penalty optimum
      else
        st.params.theta2 = (sum_bits + kPenaltyEps) / (total_founder_bits + 2.0 * kPenaltyEps);
    }

    // M-step, (beta, gamma, alpha): damped Newton on the weighted
    // cumulative-logit expected complete-data likelihood
    const Eigen::VectorXi& y_rows = aggregate ? agg_y : design->y;
    const Matrix& Z_rows = aggregate ? agg_Z : design->Z;
    const Vector& offs = aggregate ? agg_offsets : design->offsets;
    warm.alpha = st.params.alpha;
    if (aggregate)
      warm.delta = gamma1_free ? Vector::Constant(1, st.params.gamma[0]) : Vector();
    else
      warm.delta = pack_coefficients(*design, st.params);
    const PropOddsFit m_fit = fit_cumulative_logit_weighted(
        y_rows, Z_rows, weights, K, warm, 1e-9, 40, offs,
        /*require_convergence=*/false);
    if (aggregate) {
      st.params.alpha = m_fit.alpha;
      if (gamma1_free) st.params.gamma[0] = m_fit.delta[0];
    } else {
      unpack_coefficients(*design, m_fit, st.params);
    }
  }
  return st;
}

LatentParams jitter_start(const LatentParams& init, const LatentFitMask& mask,
                          int start_index) {
  auto rng = make_rng(0x5eedULL + static_cast<std::uint64_t>(start_index));
  auto u = [&](double a, double b) {
    return std::uniform_real_distribution<double>(a, b)(rng);
  };
  LatentParams p = init;
  auto jitter_theta = [&](double t) {
    const double logit = std::log(t / (1.0 - t)) + u(-1.5, 1.5);
    return 1.0 / (1.0 + std::exp(-logit));
  };
  if (!mask.theta1) p.theta1 = jitter_theta(std::clamp(init.theta1, 0.05, 0.95));
  if (!mask.theta2) p.theta2 = jitter_theta(std::clamp(init.theta2, 0.05, 0.95));
  if (!mask.beta)
    for (Eigen::Index k = 0; k < p.beta.size(); ++k) p.beta[k] += u(-0.5, 0.5);
  if (!mask.gamma1) p.gamma[0] += u(-1.0, 1.0);
  if (!mask.gamma2) p.gamma[1] += u(-1.0, 1.0);
  if (!mask.gamma3) p.gamma[2] += u(-1.0, 1.0);
  p.alpha[0] += u(-0.3, 0.3);
  for (Eigen::Index k = 1; k < p.alpha.size(); ++k) {
    const double inc = (init.alpha[k] - init.alpha[k - 1]) * std::exp(u(-0.5, 0.5));
    p.alpha[k] = p.alpha[k - 1] + std::max(inc, 1e-4);
  }
  return p;
}

}  // namespace

LatentFitResult latent_fit(std::span<const FamilyData> families,
                           const LatentFitMask& mask, const LatentParams& init) {
  if (families.empty()) throw std::invalid_argument("latent_fit: no families");
  for (const auto& fam : families) check_family(fam, init);

  const bool collapsed = mask.gamma2 && mask.gamma3 && init.gamma[1] == 0.0 &&
                         init.gamma[2] == 0.0;
  if (!collapsed) {
    // full enumeration must be feasible for every family
    for (const auto& fam : families) {
      const Plan plan = make_plan(*fam.pedigree);
      if (plan.bits() > kEnumerationBitLimit) {
        std::ostringstream os;
        os << "latent_fit: family " << fam.pedigree->family_id << " needs 2^"
           << plan.bits() << " configurations (limit 2^" << kEnumerationBitLimit << ")";
        throw EnumerationLimitError(os.str());
      }
    }
  }
  const bool aggregate = collapsed && init.beta.size() == 0;

  const int K = init.levels();
  EmDesign design;
  Matrix level_counts;
  if (aggregate) {
    level_counts = Matrix::Zero(static_cast<Eigen::Index>(families.size()), K);
    for (std::size_t i = 0; i < families.size(); ++i)
      for (Eigen::Index j = 0; j < families[i].traits.size(); ++j)
        level_counts(static_cast<Eigen::Index>(i), families[i].traits[j]) += 1.0;
    // a design shell so the gamma1 column bookkeeping stays uniform
    design.col_gamma1 = mask.gamma1 ? -1 : 0;
  } else {
    design = build_design(families, mask, init, collapsed);
  }

  LatentFitResult best;
  best.penalized_loglik = kNegInf;
  bool any_converged = false;
  for (int s = 0; s < 5; ++s) {
    const LatentParams start = s == 0 ? init : jitter_start(init, mask, s);
    EmState st = run_em(families, mask, start, collapsed, &design,
                        aggregate ? &level_counts : nullptr);
    if (!st.converged) continue;
    any_converged = true;
    if (st.penalized_loglik > best.penalized_loglik) {
      best.params = st.params;
      best.loglik = st.loglik;
      best.penalized_loglik = st.penalized_loglik;
      best.converged = true;
      best.iterations = st.iterations;
      best.best_start = s;
    }
  }
  if (!any_converged)
    throw NonConvergenceError("latent_fit: no start converged within 500 outer iterations");
  return best;
}

double lrt_mixture_threshold(double alpha_level) {
  if (alpha_level <= 0.0 || alpha_level >= 0.5)
    throw std::invalid_argument("lrt_mixture_threshold: alpha must be in (0, 0.5)");
  // P(mix > t) = 0.5 P(chi2_1 > t) for t > 0
  return stats::chisq_quantile(1.0 - 2.0 * alpha_level, 1.0);
}

namespace {

std::vector<FamilyData> strip_covariates(std::span<const FamilyData> families) {
  std::vector<FamilyData> out;
  out.reserve(families.size());
  for (const auto& fam : families)
    out.push_back(FamilyData{fam.pedigree, Matrix(fam.traits.size(), 0), fam.traits});
  return out;
}

Vector pooled_alpha_init(std::span<const FamilyData> families, int K) {
  Vector counts = Vector::Zero(K);
  for (const auto& fam : families)
    for (Eigen::Index j = 0; j < fam.traits.size(); ++j) counts[fam.traits[j]] += 1.0;
  const double total = counts.sum();
  Vector alpha(K - 1);
  double cum = 0.0;
  for (int k = 0; k < K - 1; ++k) {
    cum += counts[k];
    const double pr = std::clamp(cum / total, 1e-6, 1.0 - 1e-6);
    alpha[k] = std::log(pr / (1.0 - pr));
  }
  for (int k = 1; k < K - 1; ++k)
    if (alpha[k] <= alpha[k - 1] + 1e-6) alpha[k] = alpha[k - 1] + 1e-6;
  return alpha;
}

int infer_levels(std::span<const FamilyData> families) {
  int top = 1;
  for (const auto& fam : families)
    for (Eigen::Index j = 0; j < fam.traits.size(); ++j)
      top = std::max(top, fam.traits[j]);
  return top + 1;
}

}  // namespace

LrtResult lrt_gamma1(std::span<const FamilyData> families, bool include_covariates) {
  const std::vector<FamilyData> stripped =
      include_covariates ? std::vector<FamilyData>() : strip_covariates(families);
  std::span<const FamilyData> data =
      include_covariates ? families : std::span<const FamilyData>(stripped);

  const int K = infer_levels(data);
  const int p = static_cast<int>(data.front().covariates.cols());

  LatentParams init;
  init.theta1 = 0.5;
  init.theta2 = 0.5;
  init.beta = Vector::Zero(p);
  init.gamma.setZero();
  init.alpha = pooled_alpha_init(data, K);

  LatentFitMask null_mask;
  null_mask.gamma1 = null_mask.gamma2 = null_mask.gamma3 = true;
  null_mask.theta1 = null_mask.theta2 = true;  // no latent term under the null

  LrtResult out;
  out.null_fit = latent_fit(data, null_mask, init);

  LatentFitMask alt_mask;
  alt_mask.gamma2 = alt_mask.gamma3 = true;

  // anchored at the null solution: EM only climbs from there, so the LRT
  // statistic stays nonnegative
  LatentParams alt_init = out.null_fit.params;
  alt_init.theta1 = 0.5;
  alt_init.theta2 = 0.5;
  alt_init.gamma.setZero();
  out.alt_fit = latent_fit(data, alt_mask, alt_init);

  out.stat = 2.0 * (out.alt_fit.loglik - out.null_fit.loglik);
  out.threshold = lrt_mixture_threshold(0.05);
  out.reject_at_05 = out.stat > out.threshold;
  return out;
}

double calibrate_lrt_threshold(std::span<const FamilyData> families,
                               bool include_covariates, int replicates,
                               double alpha_level, std::uint64_t seed, int threads) {
  const std::vector<FamilyData> stripped =
      include_covariates ? std::vector<FamilyData>() : strip_covariates(families);
  std::span<const FamilyData> data =
      include_covariates ? families : std::span<const FamilyData>(stripped);

  const int K = infer_levels(data);
  const int p = static_cast<int>(data.front().covariates.cols());
  LatentParams init;
  init.beta = Vector::Zero(p);
  init.alpha = pooled_alpha_init(data, K);
  LatentFitMask null_mask;
  null_mask.gamma1 = null_mask.gamma2 = null_mask.gamma3 = true;
  null_mask.theta1 = null_mask.theta2 = true;
  const LatentFitResult null_fit = latent_fit(data, null_mask, init);

  std::vector<double> stats_out(static_cast<std::size_t>(replicates), 0.0);
  std::atomic<int> next{0};
  auto worker = [&]() {
    while (true) {
      const int r = next.fetch_add(1);
      if (r >= replicates) return;
      // traits under the fitted null: plain cumulative-logit draws
      std::vector<FamilyData> boot;
      boot.reserve(data.size());
      auto rng = make_rng(sub_seed(seed, static_cast<std::uint64_t>(r)));
      for (const auto& fam : data) {
        FamilyData b{fam.pedigree, fam.covariates,
                     Eigen::VectorXi::Zero(fam.traits.size())};
        for (Eigen::Index j = 0; j < fam.traits.size(); ++j) {
          const double eta = fam.covariates.cols() > 0
                                 ? fam.covariates.row(j).dot(null_fit.params.beta)
                                 : 0.0;
          b.traits[j] = sample_level(null_fit.params.alpha, eta, uniform01(rng));
        }
        boot.push_back(std::move(b));
      }
      stats_out[static_cast<std::size_t>(r)] = lrt_gamma1(boot, include_covariates).stat;
    }
  };
  std::vector<std::thread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  std::sort(stats_out.begin(), stats_out.end());
  const auto idx = static_cast<std::size_t>(
      std::clamp((1.0 - alpha_level) * static_cast<double>(replicates), 0.0,
                 static_cast<double>(replicates - 1)));
  return stats_out[idx];
}

std::vector<FamilyData> generate_table1_replicate(const Table1Config& config,
                                                  std::vector<Pedigree>& structures,
                                                  double beta, double gamma1,
                                                  std::uint64_t seed) {
  if (structures.empty()) {
    structures.reserve(static_cast<std::size_t>(config.families));
    for (int i = 0; i < config.families; ++i)
      structures.push_back(make_table1_family("fam" + std::to_string(i + 1)));
  }
  auto rng = make_rng(seed);
  std::vector<FamilyData> out;
  out.reserve(structures.size());
  for (auto& ped : structures) {
    const Eigen::Index n = static_cast<Eigen::Index>(ped.size());
    FamilyData fam{&ped, Matrix(n, 1), Eigen::VectorXi(n)};
    // the family draw r1 both thresholds U1 and enters every member's x
    const double r1 = uniform01(rng);
    const int u1 = r1 <= config.theta1 ? 1 : 0;
    for (Eigen::Index j = 0; j < n; ++j)
      fam.covariates(j, 0) = 0.9 * uniform01(rng) + 0.2 * r1;
    // gamma2 = gamma3 = 0 here, so traits depend on U2/U3 in no way
    for (Eigen::Index j = 0; j < n; ++j) {
      const double eta = beta * fam.covariates(j, 0) + gamma1 * u1;
      fam.traits[j] = sample_level(config.alpha, eta, uniform01(rng));
    }
    out.push_back(std::move(fam));
  }
  return out;
}

Matrix table1_study(const Table1Config& config) {
  const std::size_t n_beta = config.beta_grid.size();
  const std::size_t n_gamma = config.gamma1_grid.size();
  const std::size_t cells = n_beta * n_gamma;
  const std::size_t total = cells * static_cast<std::size_t>(config.replicates);

  std::vector<std::uint8_t> reject(total, 0);
  std::atomic<std::size_t> next{0};

  auto worker = [&]() {
    std::vector<Pedigree> structures;  // reused across replicates
    while (true) {
      const std::size_t task = next.fetch_add(1);
      if (task >= total) return;
      const std::size_t cell = task / static_cast<std::size_t>(config.replicates);
      const std::size_t rep = task % static_cast<std::size_t>(config.replicates);
      const double beta = config.beta_grid[cell / n_gamma];
      const double gamma1 = config.gamma1_grid[cell % n_gamma];
      const auto fams = generate_table1_replicate(
          config, structures, beta, gamma1, sub_seed(config.seed, task));
      reject[task] = lrt_gamma1(fams, /*include_covariates=*/false).reject_at_05 ? 1 : 0;
    }
  };

  const int n_threads = std::max(1, config.threads);
  std::vector<std::thread> pool;
  for (int t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  Matrix rates(static_cast<Eigen::Index>(n_beta), static_cast<Eigen::Index>(n_gamma));
  for (std::size_t b = 0; b < n_beta; ++b)
    for (std::size_t g = 0; g < n_gamma; ++g) {
      const std::size_t cell = b * n_gamma + g;
      std::size_t count = 0;
      for (int r = 0; r < config.replicates; ++r)
        count += reject[cell * static_cast<std::size_t>(config.replicates) +
                        static_cast<std::size_t>(r)];
      rates(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(g)) =
          static_cast<double>(count) / static_cast<double>(config.replicates);
    }
  return rates;
}

}  // namespace gentau
