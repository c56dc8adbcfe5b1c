#pragma once

#include <vector>

#include "robglm/rng.hpp"
#include "robglm/simplex.hpp"
#include "robglm/types.hpp"

namespace robglm {

// ---------------------------------------------------------------------------
// Negative binomial with mean mu and variance mu + alpha*mu^2:
//   f(y) = Gamma(y + 1/a) / (Gamma(1/a) y!) (a mu + 1)^(-1/a) (a mu/(a mu+1))^y
// ---------------------------------------------------------------------------

double nb_log_pmf(long long y, double mu, double alpha);
double nb_pmf(long long y, double mu, double alpha);

// Cached pmf/cdf/quantile table for a single (mu, alpha).  Grows lazily along
// the support; once the pmf underflows and the cdf is numerically 1 the tail
// is treated as exhausted.  Not safe to share across threads.
class NbDist {
 public:
  NbDist(double mu, double alpha);

  double mu() const { return mu_; }
  double alpha() const { return alpha_; }

  double pmf(long long y) const;
  double cdf(long long y) const;  // P(Y <= y); -1 gives 0

  // largest y with F(y) <= c, or -1 when F(0) > c.  Requires c < 1.
  long long y_star(double c) const;

  // smallest y with F(y) >= c (the usual quantile)
  long long quantile(double c) const;

 private:
  void extend_to(long long y) const;
  void extend_until_cdf(double c) const;

  double mu_, alpha_, inv_alpha_, ratio_;
  mutable std::vector<double> pmf_, cdf_;
  mutable bool exhausted_ = false;
};

// ---------------------------------------------------------------------------
// Beta regression parameterization: shapes (mu/a, (1-mu)/a), so the mean is
// mu and the variance mu(1-mu)/(1 + 1/a).
// ---------------------------------------------------------------------------

double beta_log_pdf(double y, double mu, double alpha);
double beta_pdf(double y, double mu, double alpha);
double beta_cdf(double y, double mu, double alpha);
double beta_quantile(double p, double mu, double alpha);

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

// model variance at (mu, alpha)
double family_variance(const FamilySpec& fam, double mu, double alpha);

long long nb_sample(RngStream& rng, double mu, double alpha);
double beta_sample(RngStream& rng, double mu, double alpha);

// response vector for linear predictor X * beta under the family
VectorXd sample_response(RngStream& rng, const FamilySpec& fam, const MatrixXd& X,
                         const VectorXd& beta, double alpha);

double log_likelihood(const Dataset& data, const FamilySpec& fam, const ThetaEstimate& theta);

// ---------------------------------------------------------------------------
// Maximum likelihood
// ---------------------------------------------------------------------------

struct MlOptions {
  double alpha_floor = 1e-6;
  SimplexOptions simplex{};
};

struct MlResult {
  ThetaEstimate theta;
  double loglik = 0.0;
  bool converged = false;
  int iterations = 0;
};

// Joint ML over (beta, alpha), optimized in (beta, sqrt(alpha)) by
// Nelder-Mead from a moment-based start.
MlResult ml_fit(const Dataset& data, const FamilySpec& fam, const MlOptions& opt = {});

// Convenience: moment/least-squares start used by ml_fit (exposed for reuse
// on subsamples).
ThetaEstimate ml_start(const Dataset& data, const FamilySpec& fam);

}  // namespace robglm
