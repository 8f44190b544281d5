#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace gentau {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class Sex { male, female, unknown };

enum class CohortMode { family, case_control };

enum class TraitKind { quantitative, binary, ordinal };

/// Unordered genotype at one marker. Allele codes are small nonnegative
/// integers (multi-allelic markers are supported); 0 in input files means
/// missing, internally we keep an explicit flag.
struct GenotypeCall {
  int allele_a = 0;
  int allele_b = 0;
  bool missing = true;

  static GenotypeCall make(int a, int b) {
    GenotypeCall g;
    // unordered pair semantics: store sorted
    g.allele_a = std::min(a, b);
    g.allele_b = std::max(a, b);
    g.missing = false;
    return g;
  }
  static GenotypeCall none() { return GenotypeCall{}; }

  bool operator==(const GenotypeCall& o) const {
    if (missing != o.missing) return false;
    if (missing) return true;
    return allele_a == o.allele_a && allele_b == o.allele_b;
  }
  bool has_allele(int a) const {
    return !missing && (allele_a == a || allele_b == a);
  }
};

struct Individual {
  std::string id;
  std::string family_id;
  std::optional<std::string> father_id;
  std::optional<std::string> mother_id;
  Sex sex = Sex::unknown;

  bool is_founder() const { return !father_id.has_value(); }
};

/// One family. Member order is file order; `topo_order` lists member indices
/// parents-before-children for latent-variable propagation.
struct Pedigree {
  std::string family_id;
  std::vector<Individual> members;
  std::vector<std::size_t> founder_idx;
  std::vector<std::size_t> nonfounder_idx;
  std::vector<std::size_t> topo_order;

  std::size_t size() const { return members.size(); }
  /// Parent-offspring pair count: two per nonfounder (both parents are
  /// required to be in the pedigree when present at all).
  std::size_t parent_offspring_pairs() const { return 2 * nonfounder_idx.size(); }

  /// Member index by individual id; throws on unknown id.
  std::size_t index_of(const std::string& id) const;
};

struct MarkerData {
  std::string marker_id;
  std::unordered_map<std::string, GenotypeCall> calls;

  const GenotypeCall& call_for(const std::string& individual_id) const {
    static const GenotypeCall kMissing{};
    auto it = calls.find(individual_id);
    return it == calls.end() ? kMissing : it->second;
  }
};

/// Hybrid multi-trait phenotype. `values` holds quantitative values, 0/1 for
/// binary, or the ordinal level; NaN marks a missing component.
struct TraitVector {
  Vector values;
  bool complete() const { return !values.hasNaN(); }
};

struct TraitSpec {
  std::string name;
  TraitKind kind = TraitKind::quantitative;
  int levels = 0;  // K for ordinal traits, 2 for binary, 0 otherwise
};

/// Covariates split into a continuous block and a categorical block.
struct CovariateVector {
  Vector z_cont;
  std::vector<int> z_cat;
};

struct CovariateSpec {
  std::vector<std::string> cont_names;
  std::vector<std::string> cat_names;
};

struct Cohort {
  CohortMode mode = CohortMode::family;
  std::vector<Pedigree> pedigrees;
  std::vector<MarkerData> markers;
  std::vector<TraitSpec> trait_specs;
  std::unordered_map<std::string, TraitVector> traits;
  CovariateSpec covariate_spec;
  std::unordered_map<std::string, CovariateVector> covariates;

  bool has_covariates() const { return !covariates.empty(); }
  const MarkerData& marker(const std::string& marker_id) const;
  int trait_index(const std::string& name) const;
  std::size_t n_individuals() const;
};

/// Raised by parse/validation failures; message carries the line number when
/// one is known.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a statistic cannot be formed because the marker carries no
/// transmission (or sample) variance: monomorphic marker, all parents
/// homozygous, and similar.
class DegenerateMarkerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace gentau
