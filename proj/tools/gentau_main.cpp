#include "gentau/assoc.hpp"
#include "gentau/kernels.hpp"
#include "gentau/latent.hpp"
#include "gentau/pedigree.hpp"
#include "gentau/power.hpp"
#include "gentau/rng.hpp"
#include "gentau/simulate.hpp"
#include "gentau/stats.hpp"
#include "gentau/version.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

namespace {

using namespace gentau;

std::string fmt(double v, int precision = 10) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  if (s.empty()) return out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(',', start);
    if (pos == std::string::npos) {
      out.push_back(s.substr(start));
      break;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

std::vector<double> parse_double_list(const std::string& s) {
  std::vector<double> out;
  for (const auto& tok : split_csv(s))
    if (!tok.empty()) out.push_back(std::stod(tok));
  return out;
}

// key=value config files; '#' starts a comment line
std::map<std::string, std::string> read_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("bad config line (expected key=value): " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

struct OutputFile {
  std::ofstream file;
  std::ostream* os = &std::cout;
  explicit OutputFile(const std::string& path) {
    if (path != "-" && !path.empty()) {
      file.open(path);
      if (!file) throw std::runtime_error("cannot write " + path);
      os = &file;
    }
  }
  std::ostream& stream() { return *os; }
};

// ---------------------------------------------------------------------------
// scan
// ---------------------------------------------------------------------------

struct ScanOptions {
  std::string ped, phen, cov, out = "-";
  std::string mode = "family";
  std::string method = "gen_tau";
  std::string traits;      // comma separated, empty = all
  std::string covariates;  // comma separated, empty = all
  std::string allele_map;  // marker_id <tab> allele overrides
  double bandwidth = 0.0;
  int threads = 1;
  bool tolerate_degenerate = false;
};

int run_scan(const ScanOptions& opt) {
  const CohortMode mode =
      opt.mode == "case_control" ? CohortMode::case_control : CohortMode::family;
  const Cohort cohort = parse_cohort(
      opt.ped, opt.phen,
      opt.cov.empty() ? std::nullopt : std::make_optional<std::filesystem::path>(opt.cov),
      mode);

  const std::vector<std::string> trait_sel = split_csv(opt.traits);
  const std::vector<std::string> cov_sel = split_csv(opt.covariates);

  std::map<std::string, int> allele_override;
  if (!opt.allele_map.empty()) {
    std::ifstream in(opt.allele_map);
    if (!in) throw std::runtime_error("cannot open allele map " + opt.allele_map);
    std::string marker;
    int allele;
    while (in >> marker >> allele) allele_override[marker] = allele;
  }

  std::optional<WeightConfig> weights;
  double resolved_bandwidth = 0.0;
  if (opt.method == "gen_tau_weighted") {
    if (!cohort.has_covariates())
      throw std::runtime_error("gen_tau_weighted requires a covariate file");
    WeightConfig cfg;
    cfg.bandwidth = opt.bandwidth > 0.0
                        ? opt.bandwidth
                        : default_bandwidth(cohort, fit_scaler(cohort));
    resolved_bandwidth = cfg.bandwidth;
    weights = cfg;
  }
  if (opt.method == "otdt_adjusted" && !cohort.has_covariates())
    throw std::runtime_error("otdt_adjusted requires a covariate file");
  const bool needs_single_trait =
      opt.method == "otdt" || opt.method == "otdt_adjusted" || opt.method == "qtdt";
  if (needs_single_trait && trait_sel.size() != 1)
    throw std::runtime_error("--method " + opt.method + " needs exactly one --traits entry");

  struct Row {
    std::string text;
    bool ok = true;
  };
  std::vector<Row> rows(cohort.markers.size());
  std::atomic<std::size_t> next{0};

  auto evaluate_marker = [&](std::size_t m) {
    const MarkerData& marker = cohort.markers[m];
    std::ostringstream os;
    Row row;
    try {
      const auto ov = allele_override.find(marker.marker_id);
      const int chosen = ov != allele_override.end() ? ov->second : minor_allele(cohort, marker);
      AssocResult res;
      if (opt.method == "gen_tau" || opt.method == "gen_tau_weighted") {
        res = gen_tau_statistic(cohort, marker.marker_id, chosen, trait_sel, weights);
      } else if (opt.method == "otdt") {
        res = otdt_statistic(cohort, marker.marker_id, chosen, trait_sel[0]);
      } else if (opt.method == "otdt_adjusted") {
        res = otdt_adjusted_statistic(cohort, marker.marker_id, chosen, trait_sel[0], cov_sel);
      } else if (opt.method == "tdt") {
        res = weighted_score_statistic(cohort, marker.marker_id, chosen, ScoreWeight::unit);
      } else if (opt.method == "qtdt") {
        res = weighted_score_statistic(cohort, marker.marker_id, chosen,
                                       ScoreWeight::centered_trait, trait_sel[0]);
      } else {
        throw std::runtime_error("unknown method " + opt.method);
      }
      os << res.marker_id << '\t' << method_name(res.method) << '\t' << fmt(res.statistic)
         << '\t' << res.df << '\t' << fmt(res.p_value) << '\t' << res.n_used << "\tok";
    } catch (const DegenerateMarkerError&) {
      os << marker.marker_id << '\t' << opt.method << "\tNA\tNA\tNA\tNA\tdegenerate";
      row.ok = false;
    } catch (const DegenerateVarianceError&) {
      os << marker.marker_id << '\t' << opt.method << "\tNA\tNA\tNA\tNA\tdegenerate";
      row.ok = false;
    }
    row.text = os.str();
    rows[m] = std::move(row);
  };

  auto worker = [&]() {
    while (true) {
      const std::size_t m = next.fetch_add(1);
      if (m >= cohort.markers.size()) return;
      evaluate_marker(m);
    }
  };
  std::vector<std::thread> pool;
  for (int t = 1; t < std::max(1, opt.threads); ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  OutputFile out(opt.out);
  out.stream() << "#meta version=" << kVersion << "\n#meta command=scan\n"
               << "#meta mode=" << opt.mode << " method=" << opt.method << "\n"
               << "#meta allele_policy="
               << (opt.allele_map.empty() ? "minor" : "map:" + opt.allele_map) << "\n";
  if (weights)
    out.stream() << "#meta weight_bandwidth=" << fmt(resolved_bandwidth)
                 << " covariates_standardized=1\n";
  out.stream() << "marker_id\tmethod\tstatistic\tdf\tp_value\tn_used\tstatus\n";
  bool all_ok = true;
  for (const auto& row : rows) {
    out.stream() << row.text << '\n';
    all_ok = all_ok && row.ok;
  }
  return all_ok || opt.tolerate_degenerate ? 0 : 1;
}

// ---------------------------------------------------------------------------
// validate
// ---------------------------------------------------------------------------

int run_validate(const std::string& ped, const std::string& marker_id,
                 const std::string& out_path) {
  const Cohort cohort = parse_ped_file(ped);
  OutputFile out(out_path);
  out.stream() << "#meta version=" << kVersion << "\n#meta command=validate\n"
               << "family_id\tindividual_id\tmarker_id\n";
  std::size_t total = 0;
  for (const auto& marker : cohort.markers) {
    if (!marker_id.empty() && marker.marker_id != marker_id) continue;
    for (const auto& v : validate_mendelian(cohort, marker.marker_id)) {
      out.stream() << v.family_id << '\t' << v.individual_id << '\t' << v.marker_id << '\n';
      ++total;
    }
  }
  std::cerr << total << " Mendelian violation(s)\n";
  return 0;
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

SimulateConfig simulate_config_from_file(const std::string& path) {
  const auto kv = read_config(path);
  auto get = [&](const std::string& key, const std::string& fallback) {
    auto it = kv.find(key);
    return it == kv.end() ? fallback : it->second;
  };

  SimulateConfig cfg;
  cfg.families = std::stoi(get("families", "100"));
  cfg.structure = get("structure", "trio");
  cfg.trait_name = get("trait", "y");

  const auto alpha = parse_double_list(get("alpha", "-1,1"));
  cfg.params.alpha = Eigen::Map<const Vector>(alpha.data(), static_cast<Eigen::Index>(alpha.size()));
  cfg.params.theta1 = std::stod(get("theta1", "0.3"));
  cfg.params.theta2 = std::stod(get("theta2", "0.5"));
  const auto gamma = parse_double_list(get("gamma", "0,0,0"));
  if (gamma.size() != 3) throw std::runtime_error("gamma needs exactly 3 entries");
  cfg.params.gamma = Eigen::Vector3d(gamma[0], gamma[1], gamma[2]);

  const std::string cov = get("covariates", "none");
  if (cov == "none") {
    cfg.covariates = SimulateConfig::Covariates::none;
  } else if (cov == "table1") {
    cfg.covariates = SimulateConfig::Covariates::table1;
  } else if (cov.rfind("std_normal", 0) == 0) {
    cfg.covariates = SimulateConfig::Covariates::std_normal;
    const auto colon = cov.find(':');
    cfg.n_std_normal = colon == std::string::npos ? 1 : std::stoi(cov.substr(colon + 1));
  } else {
    throw std::runtime_error("covariates must be none, table1, or std_normal[:k]");
  }
  const auto beta = parse_double_list(get("beta", ""));
  cfg.params.beta = Eigen::Map<const Vector>(beta.data(), static_cast<Eigen::Index>(beta.size()));

  cfg.n_markers = std::stoi(get("markers", "0"));
  const auto maf = parse_double_list(get("maf", "0.3"));
  if (!maf.empty()) cfg.maf = maf;
  cfg.causal_marker = std::stoi(get("causal_marker", "0")) - 1;  // 1-based, 0 = none
  cfg.causal_beta = std::stod(get("causal_beta", "0"));
  return cfg;
}

int run_simulate(const std::string& config_path, std::uint64_t seed,
                 const std::string& prefix) {
  SimulateConfig cfg = simulate_config_from_file(config_path);
  cfg.seed = seed;
  const Cohort cohort = simulate_cohort(cfg);
  write_ped_file(cohort, prefix + ".ped");
  write_phen_file(cohort, prefix + ".phen");
  if (cohort.has_covariates()) write_cov_file(cohort, prefix + ".cov");
  std::cerr << "wrote " << cohort.pedigrees.size() << " families, "
            << cohort.n_individuals() << " individuals\n";
  return 0;
}

// ---------------------------------------------------------------------------
// seg-study
// ---------------------------------------------------------------------------

int run_seg_study(const std::string& config_path, std::uint64_t seed, int threads,
                  const std::string& out_path) {
  const auto kv = read_config(config_path);
  auto get = [&](const std::string& key, const std::string& fallback) {
    auto it = kv.find(key);
    return it == kv.end() ? fallback : it->second;
  };

  Table1Config cfg;
  cfg.replicates = std::stoi(get("replicates", "10000"));
  cfg.families = std::stoi(get("families", "200"));
  cfg.theta1 = std::stod(get("theta1", "0.3"));
  cfg.beta_grid = parse_double_list(get("beta", "0,1,5,10"));
  cfg.gamma1_grid = parse_double_list(get("gamma1", "0,1,2"));
  const auto alpha = parse_double_list(get("alpha", "-1,1"));
  cfg.alpha = Eigen::Map<const Vector>(alpha.data(), static_cast<Eigen::Index>(alpha.size()));
  cfg.seed = seed;
  cfg.threads = threads;

  const Matrix rates = table1_study(cfg);

  OutputFile out(out_path);
  out.stream() << "#meta version=" << kVersion << "\n#meta command=seg-study\n"
               << "#meta seed=" << seed << " replicates=" << cfg.replicates
               << " families=" << cfg.families << "\n"
               << "#meta penalty_eps=" << fmt(kPenaltyEps)
               << " lrt_threshold=" << fmt(lrt_mixture_threshold(0.05)) << "\n";
  out.stream() << "beta";
  for (double g : cfg.gamma1_grid) out.stream() << "\tgamma1=" << fmt(g);
  out.stream() << '\n';
  for (Eigen::Index b = 0; b < rates.rows(); ++b) {
    out.stream() << fmt(cfg.beta_grid[static_cast<std::size_t>(b)]);
    for (Eigen::Index g = 0; g < rates.cols(); ++g) out.stream() << '\t' << fmt(rates(b, g));
    out.stream() << '\n';
  }
  return 0;
}

// ---------------------------------------------------------------------------
// power
// ---------------------------------------------------------------------------

int run_power(const std::string& spec_path, const std::string& alphas,
              const std::string& out_path) {
  const AltSpec spec = read_alt_spec(spec_path);
  const WeightedChiSq w = alt_distribution(spec);
  if (w.sigma0_pseudo_inverted)
    std::cerr << "warning: Sigma0 is singular; using its pseudo-inverse\n";
  const ApproxChiSq approx = match_moments(w);

  OutputFile out(out_path);
  out.stream() << "#meta version=" << kVersion << "\n#meta command=power\n"
               << "#meta df=" << fmt(approx.l) << " noncentrality=" << fmt(approx.upsilon)
               << " case=" << (approx.skew_dominant ? "skew" : "kurtosis") << "\n"
               << "alpha\tpower\n";
  for (const auto& tok : split_csv(alphas)) {
    const double alpha = std::stod(tok);
    const double q = stats::chisq_quantile(1.0 - alpha, static_cast<double>(spec.dim()));
    out.stream() << fmt(alpha) << '\t' << fmt(approx_tail(approx, q)) << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Family-based and case-control association tests for ordinal, "
               "quantitative, binary, and multivariate traits"};
  app.set_version_flag("--version", gentau::kVersion);
  app.require_subcommand(1);

  ScanOptions scan_opt;
  auto* scan = app.add_subcommand("scan", "Run an association scan over all markers");
  scan->add_option("--ped", scan_opt.ped, "Pedigree/genotype file")->required();
  scan->add_option("--phen", scan_opt.phen, "Phenotype file")->required();
  scan->add_option("--cov", scan_opt.cov, "Covariate file");
  scan->add_option("--mode", scan_opt.mode, "family or case_control")
      ->check(CLI::IsMember({"family", "case_control"}));
  scan->add_option("--method", scan_opt.method, "Test statistic")
      ->check(CLI::IsMember({"gen_tau", "gen_tau_weighted", "otdt", "otdt_adjusted",
                             "tdt", "qtdt"}));
  scan->add_option("--traits", scan_opt.traits, "Comma-separated trait names (default all)");
  scan->add_option("--covariates", scan_opt.covariates,
                   "Comma-separated covariate names (default all)");
  scan->add_option("--weight-bandwidth", scan_opt.bandwidth,
                   "Gaussian weight bandwidth (0 = cohort median distance)");
  scan->add_option("--allele-map", scan_opt.allele_map,
                   "TSV of marker_id and chosen allele overrides");
  scan->add_option("--threads", scan_opt.threads, "Worker threads");
  scan->add_option("--out", scan_opt.out, "Output TSV path or - for stdout");
  scan->add_flag("--tolerate-degenerate", scan_opt.tolerate_degenerate,
                 "Exit 0 even when degenerate marker rows are present");

  std::string val_ped, val_marker, val_out = "-";
  auto* validate = app.add_subcommand("validate", "Report Mendelian inconsistencies");
  validate->add_option("--ped", val_ped, "Pedigree/genotype file")->required();
  validate->add_option("--marker", val_marker, "Restrict to one marker id");
  validate->add_option("--out", val_out, "Output TSV path or - for stdout");

  std::string sim_config, sim_prefix;
  std::uint64_t sim_seed = 0;
  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic cohort");
  simulate->add_option("--config", sim_config, "key=value config file")->required();
  simulate->add_option("--seed", sim_seed, "Random seed")->required();
  simulate->add_option("--out-prefix", sim_prefix, "Output path prefix")->required();

  std::string study_config, study_out = "-";
  std::uint64_t study_seed = 0;
  int study_threads = 1;
  auto* seg = app.add_subcommand("seg-study", "Segregation-model rejection-rate study");
  seg->add_option("--config", study_config, "key=value config file")->required();
  seg->add_option("--seed", study_seed, "Random seed")->required();
  seg->add_option("--threads", study_threads, "Worker threads");
  seg->add_option("--out", study_out, "Output TSV path or - for stdout");

  std::string power_spec, power_alphas = "0.05", power_out = "-";
  auto* power_cmd = app.add_subcommand("power", "Approximate power for a tau-family test");
  power_cmd->add_option("--spec", power_spec, "AltSpec TSV (sigma0, sigma1, mu)")->required();
  power_cmd->add_option("--alpha", power_alphas, "Comma-separated significance levels");
  power_cmd->add_option("--out", power_out, "Output TSV path or - for stdout");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*scan) return run_scan(scan_opt);
    if (*validate) return run_validate(val_ped, val_marker, val_out);
    if (*simulate) return run_simulate(sim_config, sim_seed, sim_prefix);
    if (*seg) return run_seg_study(study_config, study_seed, study_threads, study_out);
    if (*power_cmd) return run_power(power_spec, power_alphas, power_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
