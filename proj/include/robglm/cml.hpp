#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "robglm/family.hpp"
#include "robglm/init.hpp"
#include "robglm/mrc.hpp"
#include "robglm/rqr.hpp"
#include "robglm/simplex.hpp"
#include "robglm/types.hpp"

namespace robglm {

// ---------------------------------------------------------------------------
// Likelihood of a response conditional on its randomized residual landing in
// a truncation window [a, b].  For a discrete response with z = F(y) - u f(y)
// the event {a <= z <= b} partitions by y alone:
//
//   fully kept    T_a <= y <= T_b            any u
//   lower edge    y = T_a - 1                u <= t_a
//   upper edge    y = T_b + 1                u >= t_b
//
// with y*(c) = max{y : F(y) <= c},  t_c = (F(y*(c)+1) - c) / f(y*(c)+1),
// T_a = y*(a)+2 and T_b = y*(b).  Averaging the u-conditions gives the
// conditional pmf f(y) w(y) / Q, where w is 1 / t_a / (1-t_b) on the three
// pieces and Q = F(T_b) - F(T_a-1) + f(T_a-1) t_a + f(T_b+1)(1-t_b).
// Because z is exactly uniform under the evaluating parameters, Q equals
// b - a up to rounding for every (mu, alpha).
// ---------------------------------------------------------------------------

struct ConditionalSupport {
  long long T_a = 1;   // first fully kept point; T_a - 1 is the lower edge
  long long T_b = -1;  // last fully kept point; meaningful only when upper_bounded
  double t_a = 1.0;    // kept fraction at y = T_a - 1
  double t_b = 1.0;    // 1 - t_b is the kept fraction at y = T_b + 1
  double Q = 1.0;      // conditional normalizer
  bool upper_bounded = false;  // false when b = 1: no upper truncation

  // The lower and upper edges can collapse onto a single point (both cutoffs
  // inside one cdf step); that point then keeps the fraction t_a - t_b.
  bool overlap() const { return upper_bounded && T_b + 2 == T_a; }

  // multiplier of f(y) in the conditional pmf; 0 for rejected y
  double weight(long long y) const;
};

// Truncation state of a discrete response at dispersion alpha and mean mu
// (or an already-built distribution table).  Requires 0 <= a < b <= 1; a = 0
// makes the lower edge vacuous (t_a = 1 at y = 0) and b = 1 removes the
// upper truncation entirely.  Throws truncation_error if the window retains
// no support point or no mass.
ConditionalSupport discrete_support(double a, double b, const NbDist& dist);
ConditionalSupport discrete_support(double a, double b, double mu, double alpha);

// log of the conditional density of y given x and z in [a, b] at theta;
// -infinity when y falls outside the kept window.  Continuous families keep
// y between the a- and b-quantiles and renormalize by b - a.
double conditional_logdensity(double y, const VectorXd& x, const ThetaEstimate& theta, double a,
                              double b, const FamilySpec& fam);

// Per-observation keep weights of the conditional objective, frozen at the
// estimate the residuals and cutoffs were computed from: 1 inside the kept
// window, t_a on its lower edge, 1 - t_b on its upper edge, 0 outside (the
// edge indicators in u replaced by their expected values, so the weights
// depend on the anchor estimate and the data only).  Continuous families
// give plain 0/1 window indicators.
VectorXd keep_weights(const ThetaEstimate& anchor, const Dataset& data, double a, double b,
                      const FamilySpec& fam);

// Conditional log-likelihood of the sample given residuals in [a, b]:
//
//   sum_i  w_i * log p(y_i | x_i, z in [a,b]; theta)
//
// with the keep weights w frozen (computed by keep_weights at the estimate
// that produced the cutoffs) and the conditional density evaluated at the
// running theta, whose own thresholds/weights/normalizer are recomputed at
// every evaluation.  Freezing the partition is what makes this a proper
// objective: were the weights recomputed at the running theta, any fit
// could raise its score by pushing observations out of the window and
// zeroing their (negative) terms, and the maximizer would reject nearly
// everything.  An anchored observation that leaves the running support
// instead makes the objective -infinity, which walls the optimizer in.
// Evaluated at the anchor itself the two forms agree.  With (a, b) = (0, 1)
// all weights are 1 and the value is the unconditional log-likelihood.
double mcml_objective(const ThetaEstimate& theta, const Dataset& data, double a, double b,
                      const VectorXd& weights, const FamilySpec& fam);

struct CmlOptions {
  SimplexOptions simplex{};
  double alpha_floor = 1e-6;
  double beta_bound = 50.0;       // |beta_j| beyond this flags divergence
  double sigma_bound = 20.0;      // sqrt(alpha) beyond this flags divergence
  double objective_slack = 1e-6;  // tolerated drop below the starting objective
};

struct CmlResult {
  ThetaEstimate theta;
  double objective = 0.0;  // conditional objective at theta
  bool diverged = false;   // true: optimizer rejected, theta is the start point
  int iterations = 0;
};

// Maximize the conditional objective from theta_init at the cutoffs stored
// in `diag`, by Nelder-Mead over (beta, sigma = sqrt(alpha)).  theta_init
// doubles as the partition anchor: it must be the estimate the residuals
// and cutoffs in `diag` were computed from, and the keep weights are frozen
// there for the whole optimization.  A run whose solution leaves the sane
// box (|beta_j| > beta_bound, sigma > sigma_bound) or lands below the
// starting objective is flagged as diverged and the start point is returned
// instead; the fit never throws for optimizer misbehavior.
CmlResult cml_fit(const Dataset& data, const FamilySpec& fam, const ThetaEstimate& theta_init,
                  const RqrDiagnostics& diag, const CmlOptions& opt = {});

// ---------------------------------------------------------------------------
// Standard errors
// ---------------------------------------------------------------------------

struct SeResult {
  VectorXd se;          // per-coefficient, then dispersion; empty when !ok
  bool ok = false;
  std::string message;  // diagnostic when absent
};

// central-difference Hessian with per-coordinate steps 1e-4 * (1 + |v_i|)
MatrixXd numeric_hessian(const std::function<double(const VectorXd&)>& f, const VectorXd& v);

// Square roots of the diagonal of the inverse numeric Hessian of a negative
// log-likelihood at v; fails (ok = false) when the Hessian is not positive
// definite.
SeResult se_from_negloglik(const std::function<double(const VectorXd&)>& f, const VectorXd& v);

// Wald standard errors of (beta, alpha) at theta from the curvature of the
// negative conditional log-likelihood (keep weights anchored at theta
// itself), differentiated in (beta, sigma = sqrt(alpha)) and mapped back to
// alpha by the delta method.
SeResult standard_errors(const ThetaEstimate& theta, const Dataset& data, const FamilySpec& fam,
                         double a, double b);

// ---------------------------------------------------------------------------
// Full pipeline: slope direction -> robust initialization -> iterated
// conditional fits averaged over residual randomizations.
// ---------------------------------------------------------------------------

struct PipelineConfig {
  double zeta1 = 0.05;  // tail anchors for the adaptive cutoffs
  double zeta2 = 0.95;
  // Randomization replicates for discrete families: each draws its own
  // uniforms, runs the iterated conditional fit, and the estimates are
  // averaged.  0 picks 100 for intercept-only data and 30 otherwise;
  // continuous families always run a single replicate (their residuals are
  // not randomized).
  int replicates = 0;
  int iterations = 2;      // residual -> cutoff -> refit rounds per replicate
  std::uint64_t seed = 0;  // master seed for the residual randomization
  bool compute_se = true;
  int threads = 0;  // replicate parallelism; 0 = hardware default
  MrcConfig mrc{};
  MtConfig mt{};
  CmlOptions cml{};
};

struct IterationRecord {
  double a = 0.0;  // cutoffs used by this round's conditional fit
  double b = 1.0;
  bool cutoffs_feasible = true;
  double objective = 0.0;
  bool diverged = false;
};

struct ReplicateTrace {
  ThetaEstimate theta;  // estimate after the final round
  std::vector<IterationRecord> iterations;
  bool diverged = false;  // any round flagged
};

// Observation bookkeeping at the replicate-averaged cutoffs and final
// estimate: which observations the conditional fit rejected outright and
// which sit on the partially weighted edges.  Continuous families have no
// edge sets (the boundary carries no mass).
struct BoundaryReport {
  double a_bar = 0.0;  // cutoffs averaged over replicates
  double b_bar = 1.0;
  std::vector<Eigen::Index> rejected;
  std::vector<Eigen::Index> lower_edge;    // y on T_a - 1, kept fraction t_a
  std::vector<Eigen::Index> upper_edge;    // y on T_b + 1, kept fraction 1 - t_b
  double mean_lower_weight = 0.0;          // average kept fraction on lower_edge
  double mean_upper_weight = 0.0;          // average kept fraction on upper_edge
};

struct FitReport {
  FamilySpec family;
  PipelineConfig config;  // echo, with the resolved replicate count
  ThetaEstimate theta;    // replicate-averaged conditional-ML estimate
  ThetaEstimate theta_init;
  VectorXd gamma;  // rank-stage slope direction; empty for intercept-only
  std::vector<ReplicateTrace> replicates;
  BoundaryReport boundary;
  SeResult se;
  bool any_diverged = false;
};

// End-to-end fit: rank-correlation slope direction (skipped for
// intercept-only data), robust initialization of intercept/scale/dispersion,
// then per replicate `iterations` rounds of residuals -> adaptive cutoffs ->
// conditional refit, each replicate reusing its own uniforms across rounds.
// The final estimate is the component-wise replicate average (compensated
// summation, independent of thread scheduling); identical seeds give
// identical reports.
FitReport cml_pipeline(const Dataset& data, const FamilySpec& fam, const PipelineConfig& cfg = {});

}  // namespace robglm
