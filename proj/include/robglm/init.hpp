#pragma once

#include <vector>

#include "robglm/types.hpp"

namespace robglm {

// ---------------------------------------------------------------------------
// Robust initial estimator: variance-stabilized MT fit of (intercept, slope
// scale) in the collapsed single-index model, plus an M-equation for the
// dispersion, evaluated over the tuning-table grid.
//
// Tuning tables and the transform for the Beta family are indexed by the
// shape-sum scale a = 1/alpha (the scale on which the transform variance is
// flat); NB tables use the dispersion alpha itself.  table_from_family_alpha /
// family_from_table_alpha convert between the two.
// ---------------------------------------------------------------------------

double table_from_family_alpha(double alpha, const FamilySpec& fam);
double family_from_table_alpha(double a, const FamilySpec& fam);

// tuning-table abscissae (table scale)
const std::vector<double>& alpha_grid(const FamilySpec& fam);

// interpolated sd of the transformed response, clamped outside the table
double sigma_of_alpha(double a, const FamilySpec& fam);

// variance-stabilizing transform; strictly increasing in y.
// NB: sqrt(1/a - 0.5) * asinh(sqrt((y + 3/8)/(1/a - 3/4))), a capped at 1.3.
// Beta: sqrt(1 + a) * arcsin(sqrt(y)) with a on the table (shape-sum) scale.
double vst(double y, double a, const FamilySpec& fam);

// Tukey biweight: 1 - (1 - (u/c)^2)^3 inside |u| <= c, 1 outside
double tukey_rho(double u, double c);

// location parameter of the transformed response:
//   m(mu, a) = argmin_g E rho_c(t(Y, a) - g),  c = 1.5 sigma(a)
// (c_override > 0 substitutes a caller-chosen c)
double m_function(double mu, double a, const FamilySpec& fam, double c_override = -1.0);

// hard-rejection covariate weights: I(|v - median| / mad < threshold),
// mad scaled to be consistent for the normal sd
VectorXd mad_weights(const VectorXd& v, double threshold = 2.0);

struct MtConfig {
  double c_multiplier = 1.5;
  double weight_threshold = 2.0;
};

struct MtFit {
  double beta1 = 0.0;  // intercept
  double eta = 0.0;    // slope on v (canonicalized to >= 0 at assembly)
  double objective = 0.0;
};

// weighted MT fit of the simple model t(y) ~ m(h(b0 + b1 v)) at fixed
// table-scale a; multistart simplex over 9 perturbed robust line starts
MtFit mt_fit_simple(const VectorXd& v, const VectorXd& y, double a, const FamilySpec& fam,
                    const VectorXd& w, const MtConfig& cfg = {});

// bounded dispersion score: likelihood score in alpha, biweight-redescending
// beyond 4 sd and recentred so the model expectation is exactly zero
double psi_alpha(double y, double mu, double alpha, const FamilySpec& fam);

struct AlphaGridPoint {
  double a_table = 0.0;       // grid abscissa
  MtFit fit;                  // MT fit at this a
  double a_star_table = 0.0;  // M-solution of the dispersion equation
  bool bracketed = false;     // sign change found in the grid range
};

struct InitResult {
  ThetaEstimate theta;
  double beta1 = 0.0;
  double eta = 0.0;
  VectorXd gamma;
  double a_table = 0.0;          // selected table-scale dispersion
  bool alpha_at_boundary = false;
  std::vector<AlphaGridPoint> grid;
};

// full dispersion solve: MT fit at every grid a, M-solution of the score
// equation, selection of the pair with the smallest |a - a*| interpolating
// between the two best grid points
InitResult solve_alpha(const VectorXd& v, const VectorXd& y, const FamilySpec& fam,
                       const MtConfig& cfg = {});

inline ThetaEstimate assemble_initial(const VectorXd& gamma, double beta1, double eta,
                                      double alpha) {
  return ThetaEstimate::assemble(beta1, eta, gamma, alpha);
}

// initial estimator given the slope direction from the rank stage; for
// intercept-only data pass an empty gamma
InitResult initial_estimator(const Dataset& data, const FamilySpec& fam, const VectorXd& gamma,
                             const MtConfig& cfg = {});

}  // namespace robglm
