#include "gentau/pedigree.hpp"

#include <algorithm>
#include <cmath>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_set>

namespace gentau {

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find('\t', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

[[noreturn]] void fail(const std::filesystem::path& file, std::size_t line_no,
                       const std::string& what) {
  throw ParseError(file.string() + ":" + std::to_string(line_no) + ": " + what);
}

int parse_int(const std::string& s, const std::filesystem::path& file,
              std::size_t line_no, const char* what) {
  int v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    fail(file, line_no, std::string("expected integer for ") + what + ", got '" + s + "'");
  return v;
}

double parse_double(const std::string& s, const std::filesystem::path& file,
                    std::size_t line_no, const char* what) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    fail(file, line_no, std::string("expected number for ") + what + ", got '" + s + "'");
  }
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

void read_ped(const std::filesystem::path& path, Cohort& cohort) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open pedigree file " + path.string());

  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> marker_ids;
  // family id -> index in cohort.pedigrees, insertion ordered
  std::map<std::string, std::size_t, std::less<>> family_index;
  std::unordered_set<std::string> seen_ids;

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line.rfind("#markers", 0) == 0) {
      auto cols = split_tabs(line);
      marker_ids.assign(cols.begin() + 1, cols.end());
      cohort.markers.clear();
      for (const auto& id : marker_ids) cohort.markers.push_back(MarkerData{id, {}});
      continue;
    }
    const auto cols = split_tabs(line);
    const std::size_t expected = 5 + 2 * marker_ids.size();
    if (cols.size() != expected)
      fail(path, line_no,
           "expected " + std::to_string(expected) + " columns, got " +
               std::to_string(cols.size()));

    Individual ind;
    ind.family_id = cols[0];
    ind.id = cols[1];
    if (ind.family_id.empty() || ind.id.empty())
      fail(path, line_no, "empty family or individual id");
    if (!seen_ids.insert(ind.id).second)
      fail(path, line_no, "duplicate individual id '" + ind.id + "'");

    const bool has_father = cols[2] != "0";
    const bool has_mother = cols[3] != "0";
    if (has_father != has_mother)
      fail(path, line_no, "individual '" + ind.id + "' has exactly one parent specified");
    if (has_father) ind.father_id = cols[2];
    if (has_mother) ind.mother_id = cols[3];

    const int sex_code = parse_int(cols[4], path, line_no, "sex");
    switch (sex_code) {
      case 1: ind.sex = Sex::male; break;
      case 2: ind.sex = Sex::female; break;
      case 0: ind.sex = Sex::unknown; break;
      default: fail(path, line_no, "sex must be 0, 1, or 2");
    }

    for (std::size_t m = 0; m < marker_ids.size(); ++m) {
      const int a = parse_int(cols[5 + 2 * m], path, line_no, "allele");
      const int b = parse_int(cols[6 + 2 * m], path, line_no, "allele");
      if (a < 0 || b < 0) fail(path, line_no, "negative allele code");
      if ((a == 0) != (b == 0))
        fail(path, line_no, "half-missing genotype for '" + ind.id + "'");
      if (a != 0) cohort.markers[m].calls[ind.id] = GenotypeCall::make(a, b);
    }

    auto it = family_index.find(ind.family_id);
    if (it == family_index.end()) {
      it = family_index.emplace(ind.family_id, cohort.pedigrees.size()).first;
      cohort.pedigrees.push_back(Pedigree{ind.family_id, {}, {}, {}, {}});
    }
    cohort.pedigrees[it->second].members.push_back(std::move(ind));
  }

  for (auto& ped : cohort.pedigrees) finalize_pedigree(ped);
}

TraitKind parse_trait_kind(const std::string& s, int& levels,
                           const std::filesystem::path& path, std::size_t line_no) {
  if (s == "quant") { levels = 0; return TraitKind::quantitative; }
  if (s == "binary") { levels = 2; return TraitKind::binary; }
  if (s.rfind("ordinal:", 0) == 0) {
    levels = parse_int(s.substr(8), path, line_no, "ordinal level count");
    if (levels < 2) fail(path, line_no, "ordinal traits need at least 2 levels");
    return TraitKind::ordinal;
  }
  fail(path, line_no, "unknown trait type '" + s + "'");
}

void read_phen(const std::filesystem::path& path, Cohort& cohort) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open phenotype file " + path.string());

  std::string line;
  std::size_t line_no = 0;

  if (!std::getline(in, line)) throw ParseError(path.string() + ": empty file");
  ++line_no;
  auto header = split_tabs(line);
  if (header.empty() || header[0] != "id")
    fail(path, line_no, "first header column must be 'id'");

  if (!std::getline(in, line)) fail(path, line_no, "missing #types row");
  ++line_no;
  auto types = split_tabs(line);
  if (types.empty() || types[0] != "#types" || types.size() != header.size())
    fail(path, line_no, "#types row must align with the header");

  cohort.trait_specs.clear();
  for (std::size_t k = 1; k < header.size(); ++k) {
    TraitSpec spec;
    spec.name = header[k];
    spec.kind = parse_trait_kind(types[k], spec.levels, path, line_no);
    cohort.trait_specs.push_back(spec);
  }

  const std::size_t p = cohort.trait_specs.size();
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cols = split_tabs(line);
    if (cols.size() != p + 1)
      fail(path, line_no, "expected " + std::to_string(p + 1) + " columns");
    TraitVector tv;
    tv.values.resize(static_cast<Eigen::Index>(p));
    for (std::size_t k = 0; k < p; ++k) {
      const std::string& cell = cols[k + 1];
      if (cell == "NA") {
        tv.values[static_cast<Eigen::Index>(k)] = std::nan("");
        continue;
      }
      const TraitSpec& spec = cohort.trait_specs[k];
      const double v = parse_double(cell, path, line_no, spec.name.c_str());
      if (spec.kind != TraitKind::quantitative) {
        if (v != std::floor(v) || v < 0 || v > spec.levels - 1)
          fail(path, line_no,
               "trait '" + spec.name + "' value " + cell + " outside declared levels");
      }
      tv.values[static_cast<Eigen::Index>(k)] = v;
    }
    if (!cohort.traits.emplace(cols[0], std::move(tv)).second)
      fail(path, line_no, "duplicate phenotype row for '" + cols[0] + "'");
  }
}

void read_cov(const std::filesystem::path& path, Cohort& cohort) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open covariate file " + path.string());

  std::string line;
  std::size_t line_no = 0;

  if (!std::getline(in, line)) throw ParseError(path.string() + ": empty file");
  ++line_no;
  auto header = split_tabs(line);
  if (header.empty() || header[0] != "id")
    fail(path, line_no, "first header column must be 'id'");

  if (!std::getline(in, line)) fail(path, line_no, "missing #types row");
  ++line_no;
  auto types = split_tabs(line);
  if (types.empty() || types[0] != "#types" || types.size() != header.size())
    fail(path, line_no, "#types row must align with the header");

  // continuous columns first, categorical second; remember source order
  std::vector<std::size_t> cont_cols, cat_cols;
  for (std::size_t k = 1; k < header.size(); ++k) {
    if (types[k] == "cont") {
      cont_cols.push_back(k);
      cohort.covariate_spec.cont_names.push_back(header[k]);
    } else if (types[k] == "cat") {
      cat_cols.push_back(k);
      cohort.covariate_spec.cat_names.push_back(header[k]);
    } else {
      fail(path, line_no, "covariate type must be 'cont' or 'cat'");
    }
  }

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cols = split_tabs(line);
    if (cols.size() != header.size())
      fail(path, line_no, "expected " + std::to_string(header.size()) + " columns");
    CovariateVector cv;
    cv.z_cont.resize(static_cast<Eigen::Index>(cont_cols.size()));
    for (std::size_t k = 0; k < cont_cols.size(); ++k)
      cv.z_cont[static_cast<Eigen::Index>(k)] =
          parse_double(cols[cont_cols[k]], path, line_no, "covariate");
    for (std::size_t k : cat_cols)
      cv.z_cat.push_back(parse_int(cols[k], path, line_no, "categorical covariate"));
    if (!cohort.covariates.emplace(cols[0], std::move(cv)).second)
      fail(path, line_no, "duplicate covariate row for '" + cols[0] + "'");
  }
}

}  // namespace

std::size_t Pedigree::index_of(const std::string& id) const {
  for (std::size_t i = 0; i < members.size(); ++i)
    if (members[i].id == id) return i;
  throw std::out_of_range("no member '" + id + "' in family " + family_id);
}

const MarkerData& Cohort::marker(const std::string& marker_id) const {
  for (const auto& m : markers)
    if (m.marker_id == marker_id) return m;
  throw std::out_of_range("unknown marker '" + marker_id + "'");
}

int Cohort::trait_index(const std::string& name) const {
  for (std::size_t k = 0; k < trait_specs.size(); ++k)
    if (trait_specs[k].name == name) return static_cast<int>(k);
  throw std::out_of_range("unknown trait '" + name + "'");
}

std::size_t Cohort::n_individuals() const {
  std::size_t n = 0;
  for (const auto& ped : pedigrees) n += ped.size();
  return n;
}

void finalize_pedigree(Pedigree& ped) {
  ped.founder_idx.clear();
  ped.nonfounder_idx.clear();
  ped.topo_order.clear();

  std::unordered_map<std::string, std::size_t> idx;
  for (std::size_t i = 0; i < ped.members.size(); ++i) {
    if (!idx.emplace(ped.members[i].id, i).second)
      throw ParseError("duplicate individual id '" + ped.members[i].id +
                       "' in family " + ped.family_id);
  }

  for (std::size_t i = 0; i < ped.members.size(); ++i) {
    const Individual& ind = ped.members[i];
    if (ind.father_id.has_value() != ind.mother_id.has_value())
      throw ParseError("individual '" + ind.id + "' has exactly one parent specified");
    if (ind.is_founder()) {
      ped.founder_idx.push_back(i);
      continue;
    }
    ped.nonfounder_idx.push_back(i);
    for (const auto& pid : {*ind.father_id, *ind.mother_id}) {
      if (!idx.count(pid))
        throw ParseError("individual '" + ind.id + "' references parent '" + pid +
                         "' absent from family " + ped.family_id);
    }
  }

  // parents-first order; a cycle leaves members unplaced
  std::vector<bool> placed(ped.members.size(), false);
  while (ped.topo_order.size() < ped.members.size()) {
    bool progress = false;
    for (std::size_t i = 0; i < ped.members.size(); ++i) {
      if (placed[i]) continue;
      const Individual& ind = ped.members[i];
      const bool ready = ind.is_founder() ||
                         (placed[idx.at(*ind.father_id)] && placed[idx.at(*ind.mother_id)]);
      if (ready) {
        placed[i] = true;
        ped.topo_order.push_back(i);
        progress = true;
      }
    }
    if (!progress)
      throw ParseError("pedigree cycle detected in family " + ped.family_id);
  }
}

void finalize_cohort(Cohort& cohort) {
  std::unordered_set<std::string> ids;
  for (auto& ped : cohort.pedigrees) {
    finalize_pedigree(ped);
    for (const auto& m : ped.members) {
      if (!ids.insert(m.id).second)
        throw ParseError("duplicate individual id '" + m.id + "' across families");
    }
  }
  if (cohort.mode == CohortMode::case_control) {
    for (const auto& ped : cohort.pedigrees)
      if (!ped.nonfounder_idx.empty())
        throw ParseError("case_control mode requires unrelated singletons; family " +
                         ped.family_id + " has parent links");
  }
  for (const auto& m : cohort.markers)
    for (const auto& [id, call] : m.calls)
      if (!ids.count(id))
        throw ParseError("marker " + m.marker_id + " references unknown individual '" + id + "'");
  for (const auto& [id, tv] : cohort.traits) {
    if (!ids.count(id)) throw ParseError("phenotype row for unknown individual '" + id + "'");
    if (static_cast<std::size_t>(tv.values.size()) != cohort.trait_specs.size())
      throw ParseError("phenotype width mismatch for '" + id + "'");
  }
  for (const auto& [id, cv] : cohort.covariates) {
    if (!ids.count(id)) throw ParseError("covariate row for unknown individual '" + id + "'");
    if (static_cast<std::size_t>(cv.z_cont.size()) != cohort.covariate_spec.cont_names.size() ||
        cv.z_cat.size() != cohort.covariate_spec.cat_names.size())
      throw ParseError("covariate width mismatch for '" + id + "'");
  }
}

Cohort parse_cohort(const std::filesystem::path& ped_file,
                    const std::filesystem::path& phen_file,
                    const std::optional<std::filesystem::path>& cov_file,
                    CohortMode mode) {
  Cohort cohort;
  cohort.mode = mode;
  read_ped(ped_file, cohort);
  read_phen(phen_file, cohort);
  if (cov_file) read_cov(*cov_file, cohort);
  finalize_cohort(cohort);
  return cohort;
}

Cohort parse_ped_file(const std::filesystem::path& ped_file, CohortMode mode) {
  Cohort cohort;
  cohort.mode = mode;
  read_ped(ped_file, cohort);
  finalize_cohort(cohort);
  return cohort;
}

void write_ped_file(const Cohort& cohort, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  out << "#markers";
  for (const auto& m : cohort.markers) out << '\t' << m.marker_id;
  out << '\n';
  for (const auto& ped : cohort.pedigrees) {
    for (const auto& ind : ped.members) {
      out << ped.family_id << '\t' << ind.id << '\t'
          << (ind.father_id ? *ind.father_id : "0") << '\t'
          << (ind.mother_id ? *ind.mother_id : "0") << '\t'
          << (ind.sex == Sex::male ? 1 : ind.sex == Sex::female ? 2 : 0);
      for (const auto& m : cohort.markers) {
        const GenotypeCall& g = m.call_for(ind.id);
        if (g.missing)
          out << "\t0\t0";
        else
          out << '\t' << g.allele_a << '\t' << g.allele_b;
      }
      out << '\n';
    }
  }
}

void write_phen_file(const Cohort& cohort, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  out << "id";
  for (const auto& spec : cohort.trait_specs) out << '\t' << spec.name;
  out << "\n#types";
  for (const auto& spec : cohort.trait_specs) {
    switch (spec.kind) {
      case TraitKind::quantitative: out << "\tquant"; break;
      case TraitKind::binary: out << "\tbinary"; break;
      case TraitKind::ordinal: out << "\tordinal:" << spec.levels; break;
    }
  }
  out << '\n';
  for (const auto& ped : cohort.pedigrees) {
    for (const auto& ind : ped.members) {
      auto it = cohort.traits.find(ind.id);
      if (it == cohort.traits.end()) continue;
      out << ind.id;
      for (Eigen::Index k = 0; k < it->second.values.size(); ++k) {
        const double v = it->second.values[k];
        if (std::isnan(v))
          out << "\tNA";
        else
          out << '\t' << format_double(v);
      }
      out << '\n';
    }
  }
}

void write_cov_file(const Cohort& cohort, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  out << "id";
  for (const auto& n : cohort.covariate_spec.cont_names) out << '\t' << n;
  for (const auto& n : cohort.covariate_spec.cat_names) out << '\t' << n;
  out << "\n#types";
  for (std::size_t k = 0; k < cohort.covariate_spec.cont_names.size(); ++k) out << "\tcont";
  for (std::size_t k = 0; k < cohort.covariate_spec.cat_names.size(); ++k) out << "\tcat";
  out << '\n';
  for (const auto& ped : cohort.pedigrees) {
    for (const auto& ind : ped.members) {
      auto it = cohort.covariates.find(ind.id);
      if (it == cohort.covariates.end()) continue;
      out << ind.id;
      for (Eigen::Index k = 0; k < it->second.z_cont.size(); ++k)
        out << '\t' << format_double(it->second.z_cont[k]);
      for (int v : it->second.z_cat) out << '\t' << v;
      out << '\n';
    }
  }
}

std::vector<MendelViolation> validate_mendelian(const Cohort& cohort,
                                                const std::string& marker_id) {
  const MarkerData& marker = cohort.marker(marker_id);
  std::vector<MendelViolation> violations;
  for (const auto& ped : cohort.pedigrees) {
    for (std::size_t i : ped.nonfounder_idx) {
      const Individual& child = ped.members[i];
      const GenotypeCall& gc = marker.call_for(child.id);
      const GenotypeCall& gf = marker.call_for(*child.father_id);
      const GenotypeCall& gm = marker.call_for(*child.mother_id);
      if (gc.missing || gf.missing || gm.missing) continue;
      // consistent iff one allele can come from each parent
      const bool ok = (gf.has_allele(gc.allele_a) && gm.has_allele(gc.allele_b)) ||
                      (gf.has_allele(gc.allele_b) && gm.has_allele(gc.allele_a));
      if (!ok) violations.push_back({ped.family_id, child.id, marker_id});
    }
  }
  return violations;
}

std::optional<int> allele_count(const GenotypeCall& call, int chosen_allele) {
  if (call.missing) return std::nullopt;
  return (call.allele_a == chosen_allele ? 1 : 0) +
         (call.allele_b == chosen_allele ? 1 : 0);
}

std::vector<int> observed_alleles(const MarkerData& marker) {
  std::set<int> alleles;
  for (const auto& [id, call] : marker.calls) {
    if (call.missing) continue;
    alleles.insert(call.allele_a);
    alleles.insert(call.allele_b);
  }
  return {alleles.begin(), alleles.end()};
}

namespace {

Individual person(const std::string& fam, int k, Sex sex,
                  std::optional<int> father = std::nullopt,
                  std::optional<int> mother = std::nullopt) {
  Individual ind;
  ind.family_id = fam;
  ind.id = fam + "_" + std::to_string(k);
  ind.sex = sex;
  if (father) ind.father_id = fam + "_" + std::to_string(*father);
  if (mother) ind.mother_id = fam + "_" + std::to_string(*mother);
  return ind;
}

}  // namespace

Pedigree make_trio(const std::string& family_id) {
  Pedigree ped;
  ped.family_id = family_id;
  ped.members.push_back(person(family_id, 1, Sex::male));
  ped.members.push_back(person(family_id, 2, Sex::female));
  ped.members.push_back(person(family_id, 3, Sex::unknown, 1, 2));
  finalize_pedigree(ped);
  return ped;
}

Pedigree make_figure1_family(const std::string& family_id) {
  Pedigree ped;
  ped.family_id = family_id;
  ped.members.push_back(person(family_id, 1, Sex::male));
  ped.members.push_back(person(family_id, 2, Sex::female));
  for (int k = 3; k <= 6; ++k)
    ped.members.push_back(person(family_id, k, k % 2 ? Sex::male : Sex::female, 1, 2));
  ped.members.push_back(person(family_id, 7, Sex::female));       // spouse of sibling 3
  ped.members.push_back(person(family_id, 8, Sex::unknown, 3, 7));  // grandchild
  finalize_pedigree(ped);
  return ped;
}

Pedigree make_table1_family(const std::string& family_id) {
  Pedigree ped;
  ped.family_id = family_id;
  ped.members.push_back(person(family_id, 1, Sex::male));
  ped.members.push_back(person(family_id, 2, Sex::female));
  for (int k = 3; k <= 5; ++k)
    ped.members.push_back(person(family_id, k, k % 2 ? Sex::male : Sex::female, 1, 2));
  ped.members.push_back(person(family_id, 6, Sex::female));        // spouse of sibling 3
  ped.members.push_back(person(family_id, 7, Sex::unknown, 3, 6));  // grandchild
  finalize_pedigree(ped);
  return ped;
}

Pedigree make_nuclear_family(const std::string& family_id, int n_children) {
  Pedigree ped;
  ped.family_id = family_id;
  ped.members.push_back(person(family_id, 1, Sex::male));
  ped.members.push_back(person(family_id, 2, Sex::female));
  for (int k = 0; k < n_children; ++k)
    ped.members.push_back(person(family_id, 3 + k, k % 2 ? Sex::female : Sex::male, 1, 2));
  finalize_pedigree(ped);
  return ped;
}

int minor_allele(const Cohort& cohort, const MarkerData& marker) {
  std::map<int, std::size_t> counts;
  auto tally = [&](const std::string& id) {
    const GenotypeCall& g = marker.call_for(id);
    if (g.missing) return;
    ++counts[g.allele_a];
    ++counts[g.allele_b];
  };
  if (cohort.mode == CohortMode::family) {
    for (const auto& ped : cohort.pedigrees)
      for (std::size_t i : ped.founder_idx) tally(ped.members[i].id);
    // pedigrees with no genotyped founders still contribute nothing; fall
    // back to everyone if founders carry no calls at all
    if (counts.empty())
      for (const auto& ped : cohort.pedigrees)
        for (const auto& ind : ped.members) tally(ind.id);
  } else {
    for (const auto& ped : cohort.pedigrees)
      for (const auto& ind : ped.members) tally(ind.id);
  }
  if (counts.empty())
    throw DegenerateMarkerError("marker " + marker.marker_id + " has no genotype calls");
  int best = counts.begin()->first;
  std::size_t best_count = counts.begin()->second;
  for (const auto& [allele, count] : counts) {
    if (count < best_count) {
      best = allele;
      best_count = count;
    }
  }
  return best;
}

}  // namespace gentau
