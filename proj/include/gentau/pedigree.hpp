#pragma once

#include "gentau/types.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace gentau {

/// One Mendelian inconsistency: the offspring genotype cannot be produced
/// from the parental genotypes at `marker_id`.
struct MendelViolation {
  std::string family_id;
  std::string individual_id;
  std::string marker_id;
};

/// Reads the pedigree/phenotype(/covariate) triple described in the README
/// and returns a fully linked cohort. Throws ParseError on malformed input,
/// dangling parent references, duplicate ids, or type mismatches.
Cohort parse_cohort(const std::filesystem::path& ped_file,
                    const std::filesystem::path& phen_file,
                    const std::optional<std::filesystem::path>& cov_file = std::nullopt,
                    CohortMode mode = CohortMode::family);

/// Pedigree structure and genotypes only (no phenotypes); enough for
/// Mendelian validation.
Cohort parse_ped_file(const std::filesystem::path& ped_file,
                      CohortMode mode = CohortMode::family);

/// Writes the cohort back out in the same formats parse_cohort reads;
/// parse(serialize(c)) reproduces c field for field.
void write_ped_file(const Cohort& cohort, const std::filesystem::path& path);
void write_phen_file(const Cohort& cohort, const std::filesystem::path& path);
void write_cov_file(const Cohort& cohort, const std::filesystem::path& path);

/// Every (family, individual) whose genotype at `marker_id` is impossible
/// given both parental genotypes. Offspring with a missing genotype or a
/// missing parental genotype are skipped. Throws on unknown marker ids.
std::vector<MendelViolation> validate_mendelian(const Cohort& cohort,
                                                const std::string& marker_id);

/// Copies of `chosen_allele` in the call, in {0,1,2}; nullopt if missing.
std::optional<int> allele_count(const GenotypeCall& call, int chosen_allele);

/// Observed allele codes at a marker, ascending.
std::vector<int> observed_alleles(const MarkerData& marker);

/// Minor allele: the least frequent observed allele, counted over founders in
/// family mode and over everyone otherwise; ties break toward the smaller
/// code. Throws DegenerateMarkerError if no calls are present.
int minor_allele(const Cohort& cohort, const MarkerData& marker);

/// Rebuilds founder/nonfounder partition and the parents-first order;
/// called by parse_cohort and by code that constructs pedigrees directly.
/// Throws ParseError on dangling parents, half-specified parents, or cycles.
void finalize_pedigree(Pedigree& ped);

/// Convenience for tests and the simulator: link + index a hand-built cohort.
void finalize_cohort(Cohort& cohort);

/// Standard family shapes. Member ids are "<family_id>_<k>", 1-based.
/// Trio: father, mother, child.
Pedigree make_trio(const std::string& family_id);
/// Three-generation shape: two parents, four siblings, one sibling's spouse
/// (a founder), and a child of that couple. 8 members, 3 founders.
Pedigree make_figure1_family(const std::string& family_id);
/// Seven-member variant used by the simulation study: two parents, three
/// siblings, a spouse, and a grandchild. 7 members, 3 founders.
Pedigree make_table1_family(const std::string& family_id);
/// Two parents with `n_children` children.
Pedigree make_nuclear_family(const std::string& family_id, int n_children);

}  // namespace gentau
