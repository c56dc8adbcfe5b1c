#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "robglm/cml.hpp"
#include "robglm/types.hpp"

namespace robglm {

// ---------------------------------------------------------------------------
// Monte Carlo harness for the negative-binomial regression design
//   y ~ NB(exp(x' beta0), alpha0),  x = (1, x*),  x* ~ N(0, I),
// optionally contaminated by replacing a fixed fraction of rows with one
// identical outlying pair.  Measures mean absolute estimation error (MAEE)
// of the coefficients and dispersion and mean absolute prediction error
// (MAPE) of the fitted means, and reports each estimator's efficiency as the
// ratio of the maximum-likelihood MAEE to its own.
// ---------------------------------------------------------------------------

// Point contamination: the last floor(fraction * n) rows are replaced by the
// identical pair (x_out, y_out).  x_out holds the slope covariates; the
// intercept column stays 1.
struct Contamination {
  double fraction = 0.1;  // in [0, 0.5)
  VectorXd x_out;
  double y_out = 0.0;
};

struct EstimatorSet {
  bool ml = true;   // joint maximum likelihood
  bool ini = true;  // slope-direction + weighted-transform initial estimator
  bool cml = true;  // full adaptive conditional-likelihood pipeline
};

struct SimConfig {
  Eigen::Index n = 400;
  int reps = 200;
  VectorXd beta0;      // empty -> (1.5, 0.5, 0.25, 0, 0, 0)
  double alpha0 = 0.8;
  std::optional<Contamination> contamination;
  EstimatorSet estimators{};
  std::uint64_t seed = 1;
  int threads = 0;  // 0 -> hardware concurrency, parallel over replications

  // Cutoffs, refit rounds, and stage options for the conditional-likelihood
  // estimator.  Its u-replicate count is forced to 1 per fit (each Monte
  // Carlo replication draws one randomization vector) and its seed is
  // derived per replication from `seed`.
  PipelineConfig pipeline{};

  VectorXd resolved_beta0() const;
  void validate() const;
};

// Raw errors of one fitted estimate on one replication.
struct RepErrors {
  double beta = 0.0;   // l1 distance of the coefficient vector from beta0
  double alpha = 0.0;  // |alpha - alpha0|
  double mu = 0.0;     // mean |mu_hat - mu_true| over the clean rows
};

struct EstimatorMetrics {
  std::string name;  // "ML", "INI", "CML"
  VectorXd err_beta;
  VectorXd err_alpha;
  VectorXd err_mu;
  std::vector<std::uint8_t> rep_diverged;  // per replication, 0/1
  double maee_beta = 0.0;
  double maee_alpha = 0.0;
  double mape_mu = 0.0;
  // MAEE_ML / MAEE_this (ML row is exactly 1); NaN when ML was not run.
  double eff_beta = 0.0;
  double eff_alpha = 0.0;
  double eff_mu = 0.0;
  int diverged = 0;
};

struct SimResult {
  SimConfig config;
  std::vector<EstimatorMetrics> metrics;  // in ML, INI, CML order
};

// One replication's covariates and clean responses; deterministic in
// (cfg.seed, rep_index) no matter how replications are scheduled.
Dataset gen_sample(const SimConfig& cfg, int rep_index);

// Replace the trailing floor(fraction * n) rows by the identical pair
// (x_out, y_out).  Row order in the clean design is exchangeable, so the
// trailing block is an unambiguous marker of which rows are contaminated.
Dataset contaminate(const Dataset& data, double fraction, const VectorXd& x_out, double y_out);

// Errors of a single estimate: l1 coefficient error, absolute dispersion
// error, and mean absolute error of exp(x'beta) over the first n_clean rows.
RepErrors replication_errors(const ThetaEstimate& estimate, const Dataset& data,
                             Eigen::Index n_clean, const VectorXd& beta0, double alpha0);

// Fill MAEE/MAPE aggregates and the efficiency ratios relative to the ML row
// from the per-replication raw errors already stored in `result`.
void aggregate_metrics(SimResult& result);

// Run the full experiment: generate, contaminate, fit every requested
// estimator, and aggregate.  Parallel over replications; the result is
// identical for every thread count.
SimResult run_experiment(const SimConfig& cfg);

// Human-readable aligned table of the aggregate metrics.
std::string summary_table(const SimResult& result);

// Per-replication raw errors, one row per (replication, estimator).
std::string raw_errors_csv(const SimResult& result);

// Aggregate metrics of several runs keyed by their outlier response, one row
// per (run, estimator) — the shape used to plot error curves against y_out.
std::string sweep_csv(const std::vector<SimResult>& slices);

}  // namespace robglm
