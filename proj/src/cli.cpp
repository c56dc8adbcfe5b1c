#include "robglm/cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "robglm/init.hpp"
#include "robglm/io.hpp"
#include "robglm/mrc.hpp"
#include "robglm/simulate.hpp"

namespace robglm {

namespace {

using nlohmann::json;

json vector_json(const VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

json index_json(const std::vector<Eigen::Index>& idx) {
  json a = json::array();
  for (Eigen::Index i : idx) a.push_back(static_cast<long long>(i));
  return a;
}

const char* family_name(const FamilySpec& fam) {
  return fam.kind == Family::NegBin ? "negative-binomial" : "beta";
}

FamilySpec family_from_name(const std::string& name) {
  if (name == "nb" || name == "negbin" || name == "negative-binomial") return negbin_family();
  if (name == "beta") return beta_family();
  throw data_error("unknown family '" + name + "' (choose nb or beta)");
}

void write_text(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << text;
    if (!text.empty() && text.back() != '\n') out << "\n";
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw data_error("cannot write '" + path + "'");
  f << text;
}

// ----------------------------------------------------------------------
// shared ingestion options
// ----------------------------------------------------------------------
struct DataArgs {
  std::string path;
  std::string family = "nb";
  std::string response;
  std::vector<std::string> covariates;
  bool freq = false;
  std::string count_col = "count";
  double shift = 0.0;

  void attach(CLI::App* cmd) {
    cmd->add_option("input", path, "CSV file with a header row")->required();
    cmd->add_option("--family", family, "response family: nb or beta")
        ->capture_default_str();
    cmd->add_option("--response", response,
                    "response column (default: first column)");
    cmd->add_option("--covariates", covariates,
                    "comma-separated covariate columns (default: none)")
        ->delimiter(',');
    cmd->add_flag("--freq", freq,
                  "rows are value/count pairs; expand by the count column");
    cmd->add_option("--count-col", count_col, "count column used with --freq")
        ->capture_default_str();
    cmd->add_option("--shift", shift, "subtract this from the response (e.g. 1 for stay-1)")
        ->capture_default_str();
  }

  FamilySpec spec_family() const { return family_from_name(family); }

  Dataset load(const FamilySpec& fam) const {
    ColumnSpec spec;
    spec.response = response;
    spec.covariates = covariates;
    spec.count = freq ? count_col : "";
    spec.shift = shift;
    return ingest_csv(path, spec, fam);
  }
};

ThetaEstimate theta_from_flags(const std::vector<double>& beta, double alpha) {
  ThetaEstimate t;
  t.beta = Eigen::Map<const VectorXd>(beta.data(), static_cast<Eigen::Index>(beta.size()));
  t.alpha = alpha;
  return t;
}

int fit_main(const DataArgs& dat, const PipelineConfig& cfg, bool ml_only,
             const std::string& out_path, const std::string& qq_path, std::ostream& out,
             std::ostream& err) {
  FamilySpec fam = dat.spec_family();
  Dataset data = dat.load(fam);

  if (ml_only) {
    MlResult ml = ml_fit(data, fam);
    write_text(out_path, ml_report_json(ml, fam), out);
    if (!qq_path.empty()) {
      RngStream rng(cfg.seed, 0x71u);
      RqrDiagnostics diag = rqr_compute(ml.theta, data, fam, rng);
      attach_cutoffs(diag, cfg.zeta1, cfg.zeta2);
      write_text(qq_path, qq_csv(diag), out);
    }
    if (!ml.converged) {
      err << "warning: maximum-likelihood optimization did not converge\n";
      return 2;
    }
    return 0;
  }

  FitReport report = cml_pipeline(data, fam, cfg);
  write_text(out_path, fit_report_json(report), out);
  if (!qq_path.empty()) {
    RngStream rng(cfg.seed, 0x71u);
    RqrDiagnostics diag = rqr_compute(report.theta, data, fam, rng);
    attach_cutoffs(diag, cfg.zeta1, cfg.zeta2);
    write_text(qq_path, qq_csv(diag), out);
  }
  if (report.any_diverged) {
    err << "warning: at least one conditional refit diverged and fell back to its start\n";
    return 2;
  }
  return 0;
}

int diagnose_main(const DataArgs& dat, const std::vector<double>& beta, double alpha,
                  double zeta1, double zeta2, std::uint64_t seed, const std::string& out_path,
                  const std::string& qq_path, std::ostream& out, std::ostream& err) {
  FamilySpec fam = dat.spec_family();
  Dataset data = dat.load(fam);

  ThetaEstimate theta;
  if (!beta.empty()) {
    if (!(alpha > 0.0))
      throw data_error("--beta requires --alpha > 0 for the dispersion");
    theta = theta_from_flags(beta, alpha);
    if (theta.beta.size() != data.p())
      throw data_error("--beta needs one value per design column (intercept first)");
  } else {
    theta = ml_fit(data, fam).theta;
  }

  RngStream rng(seed, 0x71u);
  RqrDiagnostics diag = rqr_compute(theta, data, fam, rng);
  attach_cutoffs(diag, zeta1, zeta2);
  write_text(out_path, diagnostics_json(diag, theta), out);
  if (!qq_path.empty()) write_text(qq_path, qq_csv(diag), out);
  if (!diag.cutoffs_feasible)
    err << "note: adaptive bounds degenerated; nothing was truncated\n";
  return 0;
}

int simulate_main(const std::string& preset, Eigen::Index n, int reps,
                  const std::vector<double>& youts, double fraction,
                  const std::vector<std::string>& estimators, std::uint64_t seed, int threads,
                  const std::string& out_prefix, std::ostream& out, std::ostream& err) {
  SimConfig base;
  base.n = n;
  base.seed = seed;
  base.threads = threads;
  if (!estimators.empty()) {
    base.estimators = EstimatorSet{false, false, false};
    for (const std::string& e : estimators) {
      if (e == "ML")
        base.estimators.ml = true;
      else if (e == "INI")
        base.estimators.ini = true;
      else if (e == "CML")
        base.estimators.cml = true;
      else
        throw data_error("unknown estimator '" + e + "' (choose from ML,INI,CML)");
    }
  }

  std::vector<SimConfig> slices;
  if (preset == "table1") {
    base.reps = reps > 0 ? reps : 200;
    slices.push_back(base);
  } else if (preset == "table2") {
    base.reps = reps > 0 ? reps : 100;
    std::vector<double> ys = youts.empty() ? std::vector<double>{0.0, 30.0, 180.0} : youts;
    for (double y : ys) {
      Contamination c;
      c.fraction = fraction;
      c.x_out = VectorXd::Zero(5);
      c.x_out(0) = 3.0;
      c.x_out(1) = 1.0;
      c.y_out = y;
      SimConfig s = base;
      s.contamination = c;
      slices.push_back(s);
    }
  } else {
    throw data_error("unknown preset '" + preset + "' (choose table1 or table2)");
  }

  std::vector<SimResult> results;
  int total_diverged = 0;
  for (std::size_t k = 0; k < slices.size(); ++k) {
    SimResult r = run_experiment(slices[k]);
    out << summary_table(r) << "\n";
    if (!out_prefix.empty()) {
      std::string tag = slices[k].contamination
                            ? "_yout" + std::to_string(static_cast<long long>(
                                            slices[k].contamination->y_out))
                            : "";
      write_text(out_prefix + tag + "_raw.csv", raw_errors_csv(r), out);
    }
    for (const EstimatorMetrics& m : r.metrics) total_diverged += m.diverged;
    results.push_back(std::move(r));
  }
  if (!out_prefix.empty() && results.size() > 1)
    write_text(out_prefix + "_sweep.csv", sweep_csv(results), out);

  if (total_diverged > 0) {
    err << "warning: " << total_diverged
        << " replication fit(s) diverged and recorded their start instead\n";
    return 2;
  }
  return 0;
}

}  // namespace

std::string fit_report_json(const FitReport& report) {
  json j;
  j["family"] = family_name(report.family);
  j["config"] = {{"zeta1", report.config.zeta1},
                 {"zeta2", report.config.zeta2},
                 {"replicates", report.config.replicates},
                 {"iterations", report.config.iterations},
                 {"seed", report.config.seed},
                 {"threads", report.config.threads},
                 {"compute_se", report.config.compute_se}};
  j["estimate"] = {{"beta", vector_json(report.theta.beta)}, {"alpha", report.theta.alpha}};
  j["initial"] = {{"beta", vector_json(report.theta_init.beta)},
                  {"alpha", report.theta_init.alpha}};
  j["slope_direction"] = vector_json(report.gamma);
  j["window"] = {{"a_bar", report.boundary.a_bar}, {"b_bar", report.boundary.b_bar}};
  j["boundary"] = {{"rejected", index_json(report.boundary.rejected)},
                   {"lower_edge", index_json(report.boundary.lower_edge)},
                   {"upper_edge", index_json(report.boundary.upper_edge)},
                   {"mean_lower_weight", report.boundary.mean_lower_weight},
                   {"mean_upper_weight", report.boundary.mean_upper_weight}};
  j["standard_errors"] = {{"ok", report.se.ok},
                          {"values", vector_json(report.se.se)},
                          {"message", report.se.message}};
  json reps = json::array();
  for (const ReplicateTrace& t : report.replicates) {
    const IterationRecord& last = t.iterations.back();
    reps.push_back({{"a", last.a},
                    {"b", last.b},
                    {"objective", last.objective},
                    {"diverged", t.diverged}});
  }
  j["replicates"] = reps;
  j["any_diverged"] = report.any_diverged;
  return j.dump(2);
}

std::string ml_report_json(const MlResult& ml, const FamilySpec& fam) {
  json j;
  j["family"] = family_name(fam);
  j["estimate"] = {{"beta", vector_json(ml.theta.beta)}, {"alpha", ml.theta.alpha}};
  j["loglik"] = ml.loglik;
  j["converged"] = ml.converged;
  j["iterations"] = ml.iterations;
  return j.dump(2);
}

std::string diagnostics_json(const RqrDiagnostics& diag, const ThetaEstimate& theta) {
  json j;
  j["theta"] = {{"beta", vector_json(theta.beta)}, {"alpha", theta.alpha}};
  j["window"] = {{"a_tilde", diag.a_tilde},
                 {"b_tilde", diag.b_tilde},
                 {"zeta1", diag.zeta1},
                 {"zeta2", diag.zeta2},
                 {"feasible", diag.cutoffs_feasible}};
  j["z"] = vector_json(diag.z);
  std::vector<Eigen::Index> below, above;
  for (std::size_t i = 0; i < diag.outlier_flags.size(); ++i) {
    if (diag.outlier_flags[i] == OutlierFlag::below) below.push_back(static_cast<Eigen::Index>(i));
    if (diag.outlier_flags[i] == OutlierFlag::above) above.push_back(static_cast<Eigen::Index>(i));
  }
  j["flagged"] = {{"below", index_json(below)},
                  {"above", index_json(above)},
                  {"n_rejected", static_cast<long long>(diag.n_rejected())}};
  return j.dump(2);
}

std::string qq_csv(const RqrDiagnostics& diag) {
  std::vector<double> z(diag.z.data(), diag.z.data() + diag.z.size());
  std::sort(z.begin(), z.end());
  std::ostringstream os;
  os << "theoretical,observed\n";
  os.precision(17);
  for (std::size_t i = 0; i < z.size(); ++i)
    os << (static_cast<double>(i) + 0.5) / static_cast<double>(z.size()) << "," << z[i] << "\n";
  return os.str();
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{
      "robglm: robust and efficient estimation for count and proportion "
      "regression with a dispersion parameter"};
  app.require_subcommand(1);

  // ---- fit ----
  auto* fit = app.add_subcommand(
      "fit", "three-stage robust fit (slope direction, robust start, conditional refit)");
  DataArgs fit_data;
  fit_data.attach(fit);
  PipelineConfig cfg;
  bool ml_only = false, no_se = false;
  std::string fit_out = "-", fit_qq;
  std::uint64_t fit_seed = 0;
  fit->add_option("--zeta1", cfg.zeta1, "lower anchor for the adaptive window")
      ->capture_default_str();
  fit->add_option("--zeta2", cfg.zeta2, "upper anchor for the adaptive window")
      ->capture_default_str();
  fit->add_option("--reps", cfg.replicates,
                  "randomization replicates (0 = 100 for intercept-only, 30 otherwise)")
      ->capture_default_str();
  fit->add_option("--iterations", cfg.iterations, "conditional refit rounds")
      ->capture_default_str();
  fit->add_option("--seed", fit_seed, "random seed (required: runs are reproducible)")
      ->required();
  fit->add_option("--threads", cfg.threads, "worker threads (0 = hardware)")
      ->capture_default_str();
  fit->add_flag("--ml-only", ml_only, "plain maximum likelihood, no robust pipeline");
  fit->add_flag("--no-se", no_se, "skip standard errors");
  fit->add_option("--out", fit_out, "report path ('-' = stdout)")->capture_default_str();
  fit->add_option("--qq", fit_qq, "also write a qq-plot CSV of the final residuals");

  // ---- diagnose ----
  auto* diag = app.add_subcommand(
      "diagnose", "randomized residuals, adaptive window, and outlier flags at an estimate");
  DataArgs diag_data;
  diag_data.attach(diag);
  std::vector<double> diag_beta;
  double diag_alpha = 0.0, diag_z1 = 0.05, diag_z2 = 0.95;
  std::uint64_t diag_seed = 0;
  std::string diag_out = "-", diag_qq;
  diag->add_option("--beta", diag_beta,
                   "evaluate at these coefficients (comma-separated, intercept first; "
                   "default: maximum likelihood)")
      ->delimiter(',');
  diag->add_option("--alpha", diag_alpha, "dispersion used with --beta");
  diag->add_option("--zeta1", diag_z1, "lower anchor")->capture_default_str();
  diag->add_option("--zeta2", diag_z2, "upper anchor")->capture_default_str();
  diag->add_option("--seed", diag_seed, "random seed (required: runs are reproducible)")
      ->required();
  diag->add_option("--out", diag_out, "report path ('-' = stdout)")->capture_default_str();
  diag->add_option("--qq", diag_qq, "also write a qq-plot CSV");

  // ---- simulate ----
  auto* sim = app.add_subcommand("simulate", "Monte Carlo error and efficiency experiments");
  std::string preset;
  Eigen::Index sim_n = 400;
  int sim_reps = 0, sim_threads = 0;
  std::vector<double> sim_youts;
  std::vector<std::string> sim_estimators;
  double sim_fraction = 0.1;
  std::uint64_t sim_seed = 0;
  std::string sim_out;
  sim->add_option("--preset", preset, "table1 (clean efficiency) or table2 (contaminated)")
      ->required();
  sim->add_option("--n", sim_n, "sample size")->capture_default_str();
  sim->add_option("--reps", sim_reps, "replications (0 = preset default)")
      ->capture_default_str();
  sim->add_option("--yout", sim_youts,
                  "outlier responses for table2 (comma-separated; default 0,30,180)")
      ->delimiter(',');
  sim->add_option("--fraction", sim_fraction, "contaminated fraction for table2")
      ->capture_default_str();
  sim->add_option("--estimators", sim_estimators,
                  "subset of ML,INI,CML (comma-separated; default all)")
      ->delimiter(',');
  sim->add_option("--seed", sim_seed, "random seed (required: runs are reproducible)")
      ->required();
  sim->add_option("--threads", sim_threads, "worker threads (0 = hardware)")
      ->capture_default_str();
  sim->add_option("--out", sim_out, "prefix for raw/sweep CSV files");

  try {
    app.parse(argc, argv);
    if (fit->parsed()) {
      cfg.seed = fit_seed;
      cfg.compute_se = !no_se;
      return fit_main(fit_data, cfg, ml_only, fit_out, fit_qq, out, err);
    }
    if (diag->parsed())
      return diagnose_main(diag_data, diag_beta, diag_alpha, diag_z1, diag_z2, diag_seed,
                           diag_out, diag_qq, out, err);
    return simulate_main(preset, sim_n, sim_reps, sim_youts, sim_fraction, sim_estimators,
                         sim_seed, sim_threads, sim_out, out, err);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {  // --help and friends
      out << app.help();
      return 0;
    }
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace robglm
