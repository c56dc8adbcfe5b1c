#include "robglm/family.hpp"

#include <gsl/gsl_cdf.h>
#include <gsl/gsl_errno.h>

#include <algorithm>
#include <cmath>
#include <limits>

namespace robglm {

namespace {

const double kNegInf = -std::numeric_limits<double>::infinity();

void gsl_quiet() {
  static const bool done = [] {
    gsl_set_error_handler_off();
    return true;
  }();
  (void)done;
}

// log Gamma(y+k) - log Gamma(k); summed directly when k is so large that the
// lgamma difference would lose precision
double lgamma_ratio(long long y, double k) {
  if (y <= 0) return 0.0;
  if (k > 1e4 && y <= 2048) {
    double s = 0.0;
    for (long long j = 0; j < y; ++j) s += std::log(k + static_cast<double>(j));
    return s;
  }
  return std::lgamma(static_cast<double>(y) + k) - std::lgamma(k);
}

// log(1 + e^t) without overflow
double softplus(double t) {
  if (t > 35.0) return t + std::exp(-t);
  if (t < -35.0) return std::exp(t);
  return std::log1p(std::exp(t));
}

}  // namespace

// ---------------------------------------------------------------------------
// negative binomial
// ---------------------------------------------------------------------------

double nb_log_pmf(long long y, double mu, double alpha) {
  if (y < 0) return kNegInf;
  if (!(mu > 0)) return y == 0 ? 0.0 : kNegInf;
  double ia = 1.0 / alpha;
  double t = std::log(alpha) + std::log(mu);
  double sp = softplus(t);  // log(alpha*mu + 1)
  return lgamma_ratio(y, ia) - std::lgamma(static_cast<double>(y) + 1.0) - ia * sp +
         static_cast<double>(y) * (t - sp);
}

double nb_pmf(long long y, double mu, double alpha) {
  return std::exp(nb_log_pmf(y, mu, alpha));
}

// Tabulation budget: entries beyond this (table memory, and a mean far past
// anything a count model can use) abort with an error instead of exhausting
// memory, so optimizers probing absurd parameter points get a clean failure.
constexpr long long kMaxSupport = 1LL << 22;

NbDist::NbDist(double mu, double alpha) : mu_(mu), alpha_(alpha) {
  if (!(alpha > 0)) throw data_error("NbDist: alpha must be positive");
  if (!(mu >= 0) || !std::isfinite(mu)) throw data_error("NbDist: bad mean");
  if (mu > 2e6) throw data_error("NbDist: mean too large to tabulate");
  inv_alpha_ = 1.0 / alpha;
  double am = alpha * mu;
  ratio_ = am / (am + 1.0);
  double p0 = std::exp(-inv_alpha_ * std::log1p(am));
  if (p0 == 0.0) throw data_error("NbDist: mean too large to tabulate");
  pmf_.push_back(p0);
  cdf_.push_back(p0);
  if (mu == 0.0) exhausted_ = true;
}

void NbDist::extend_to(long long y) const {
  while (!exhausted_ && static_cast<long long>(pmf_.size()) <= y) {
    long long k = static_cast<long long>(pmf_.size()) - 1;
    if (k + 1 > kMaxSupport) throw data_error("NbDist: support scan exceeds budget");
    double next = pmf_[k] * (static_cast<double>(k) + inv_alpha_) /
                  (static_cast<double>(k) + 1.0) * ratio_;
    double c = std::min(cdf_[k] + next, 1.0);
    pmf_.push_back(next);
    cdf_.push_back(c);
    if (next < 1e-320 && c > 1.0 - 1e-12) exhausted_ = true;
  }
}

void NbDist::extend_until_cdf(double c) const {
  while (!exhausted_ && cdf_.back() < c) {
    extend_to(2 * static_cast<long long>(pmf_.size()) + 16);
  }
}

double NbDist::pmf(long long y) const {
  if (y < 0) return 0.0;
  extend_to(y);
  if (y >= static_cast<long long>(pmf_.size())) return 0.0;
  return pmf_[static_cast<size_t>(y)];
}

double NbDist::cdf(long long y) const {
  if (y < 0) return 0.0;
  extend_to(y);
  if (y >= static_cast<long long>(cdf_.size())) return cdf_.back();
  return cdf_[static_cast<size_t>(y)];
}

long long NbDist::y_star(double c) const {
  extend_until_cdf(std::nextafter(c, 2.0));
  // first index with F(y) > c; everything before it has F <= c
  auto it = std::upper_bound(cdf_.begin(), cdf_.end(), c);
  return static_cast<long long>(it - cdf_.begin()) - 1;
}

long long NbDist::quantile(double c) const {
  if (c <= 0.0) return 0;
  extend_until_cdf(c);
  auto it = std::lower_bound(cdf_.begin(), cdf_.end(), c);
  if (it == cdf_.end()) return static_cast<long long>(cdf_.size()) - 1;
  return static_cast<long long>(it - cdf_.begin());
}

// ---------------------------------------------------------------------------
// beta
// ---------------------------------------------------------------------------

double beta_log_pdf(double y, double mu, double alpha) {
  if (!(y > 0.0 && y < 1.0)) return kNegInf;
  double a = mu / alpha, b = (1.0 - mu) / alpha;
  if (!(a > 0) || !(b > 0)) return kNegInf;
  return std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + (a - 1.0) * std::log(y) +
         (b - 1.0) * std::log1p(-y);
}

double beta_pdf(double y, double mu, double alpha) {
  return std::exp(beta_log_pdf(y, mu, alpha));
}

double beta_cdf(double y, double mu, double alpha) {
  gsl_quiet();
  if (y <= 0.0) return 0.0;
  if (y >= 1.0) return 1.0;
  return gsl_cdf_beta_P(y, mu / alpha, (1.0 - mu) / alpha);
}

double beta_quantile(double p, double mu, double alpha) {
  gsl_quiet();
  if (p <= 0.0) return 0.0;
  if (p >= 1.0) return 1.0;
  double a = mu / alpha, b = (1.0 - mu) / alpha;
  double q = gsl_cdf_beta_Pinv(p, a, b);
  if (std::isfinite(q) && q > 0.0 && q < 1.0 &&
      std::abs(gsl_cdf_beta_P(q, a, b) - p) < 1e-8)
    return q;
  // bisection fallback for shape pairs the closed-form inverter dislikes
  double lo = 0.0, hi = 1.0;
  for (int i = 0; i < 200; ++i) {
    double mid = 0.5 * (lo + hi);
    if (gsl_cdf_beta_P(mid, a, b) < p)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

// ---------------------------------------------------------------------------
// shared helpers
// ---------------------------------------------------------------------------

double family_variance(const FamilySpec& fam, double mu, double alpha) {
  if (fam.kind == Family::NegBin) return mu + alpha * mu * mu;
  return mu * (1.0 - mu) * alpha / (alpha + 1.0);
}

long long nb_sample(RngStream& rng, double mu, double alpha) {
  double lambda = rng.gamma(1.0 / alpha, alpha * mu);
  if (!(lambda > 0)) return 0;
  return rng.poisson(lambda);
}

double beta_sample(RngStream& rng, double mu, double alpha) {
  double g1 = rng.gamma(mu / alpha, 1.0);
  double g2 = rng.gamma((1.0 - mu) / alpha, 1.0);
  double s = g1 + g2;
  double v = s > 0 ? g1 / s : mu;
  return std::clamp(v, 1e-12, 1.0 - 1e-12);
}

VectorXd sample_response(RngStream& rng, const FamilySpec& fam, const MatrixXd& X,
                         const VectorXd& beta, double alpha) {
  VectorXd u = X * beta;
  VectorXd y(u.size());
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    double mu = fam.mean(u(i));
    if (fam.kind == Family::NegBin)
      y(i) = static_cast<double>(nb_sample(rng, mu, alpha));
    else
      y(i) = beta_sample(rng, mu, alpha);
  }
  return y;
}

namespace {

// negative binomial log likelihood with per-call Gamma-ratio table shared
// across observations (1/alpha is constant within a call)
struct NbLik {
  const Dataset& d;
  VectorXd lg_yfact;
  long long ymax = 0;
  mutable std::vector<double> tab;

  explicit NbLik(const Dataset& data) : d(data) {
    lg_yfact.resize(d.n());
    for (Eigen::Index i = 0; i < d.n(); ++i) {
      lg_yfact(i) = std::lgamma(d.y(i) + 1.0);
      ymax = std::max(ymax, static_cast<long long>(d.y(i)));
    }
    tab.resize(static_cast<size_t>(ymax) + 1);
  }

  double operator()(const VectorXd& beta, double alpha) const {
    double ia = 1.0 / alpha;
    double la = std::log(alpha);
    tab[0] = 0.0;  // tab[y] = lgamma(y + 1/a) - lgamma(1/a)
    for (long long k = 1; k <= ymax; ++k)
      tab[static_cast<size_t>(k)] =
          tab[static_cast<size_t>(k - 1)] + std::log(ia + static_cast<double>(k - 1));
    VectorXd u = d.X * beta;
    double ll = 0.0;
    for (Eigen::Index i = 0; i < d.n(); ++i) {
      double t = la + u(i);
      double sp = softplus(t);
      double yi = d.y(i);
      ll += tab[static_cast<size_t>(yi)] - lg_yfact(i) - ia * sp + yi * (t - sp);
    }
    return ll;
  }
};

double beta_loglik(const Dataset& d, const VectorXd& beta, double alpha) {
  VectorXd u = d.X * beta;
  double ll = 0.0;
  for (Eigen::Index i = 0; i < d.n(); ++i) {
    double mu = 1.0 / (1.0 + std::exp(-u(i)));
    ll += beta_log_pdf(d.y(i), mu, alpha);
    if (!std::isfinite(ll)) return kNegInf;
  }
  return ll;
}

}  // namespace

double log_likelihood(const Dataset& data, const FamilySpec& fam, const ThetaEstimate& theta) {
  if (fam.kind == Family::NegBin) return NbLik(data)(theta.beta, theta.alpha);
  return beta_loglik(data, theta.beta, theta.alpha);
}

ThetaEstimate ml_start(const Dataset& data, const FamilySpec& fam) {
  const Eigen::Index n = data.n(), p = data.p();
  ThetaEstimate t;
  t.beta = VectorXd::Zero(p);

  if (fam.kind == Family::NegBin) {
    // Poisson scoring for beta
    t.beta(0) = std::log(data.y.mean() + 0.1);
    for (int it = 0; it < 30; ++it) {
      VectorXd u = data.X * t.beta;
      VectorXd mu = u.array().min(25.0).max(-25.0).exp();
      VectorXd z = (data.X * t.beta) + (data.y - mu).cwiseQuotient(mu.cwiseMax(1e-8));
      MatrixXd XtW = data.X.transpose() * mu.asDiagonal();
      VectorXd next = (XtW * data.X).ldlt().solve(XtW * z);
      if (!next.allFinite()) break;
      double delta = (next - t.beta).norm();
      t.beta = next;
      if (delta < 1e-10) break;
    }
    VectorXd mu = (data.X * t.beta).array().min(25.0).max(-25.0).exp();
    double num = ((data.y - mu).array().square() - mu.array()).sum();
    double den = mu.array().square().sum();
    t.alpha = std::clamp(den > 0 ? num / den : 0.5, 1e-3, 10.0);
  } else {
    VectorXd z(n);
    for (Eigen::Index i = 0; i < n; ++i) z(i) = std::log(data.y(i) / (1.0 - data.y(i)));
    t.beta = (data.X.transpose() * data.X).ldlt().solve(data.X.transpose() * z);
    VectorXd u = data.X * t.beta;
    double s = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      double mu = 1.0 / (1.0 + std::exp(-u(i)));
      s += std::pow(data.y(i) - mu, 2) / (mu * (1.0 - mu));
    }
    double phi = s / std::max<double>(n - p, 1);  // ~ alpha/(alpha+1)
    phi = std::clamp(phi, 1e-4, 0.98);
    t.alpha = phi / (1.0 - phi);
  }
  return t;
}

MlResult ml_fit(const Dataset& data, const FamilySpec& fam, const MlOptions& opt) {
  data.validate(fam);
  const Eigen::Index p = data.p();
  ThetaEstimate start = ml_start(data, fam);

  const NbLik* nb = nullptr;
  NbLik nblik(data);
  if (fam.kind == Family::NegBin) nb = &nblik;

  auto objective = [&](const VectorXd& z) {
    VectorXd beta = z.head(p);
    double alpha = std::max(z(p) * z(p), opt.alpha_floor);
    double ll = nb ? (*nb)(beta, alpha) : beta_loglik(data, beta, alpha);
    if (!std::isfinite(ll)) return 1e12;
    return -ll;
  };

  VectorXd z0(p + 1);
  z0.head(p) = start.beta;
  z0(p) = std::max(std::sqrt(start.alpha), 0.05);

  SimplexResult r = nelder_mead(objective, z0, opt.simplex);

  MlResult out;
  out.theta.beta = r.x.head(p);
  out.theta.alpha = std::max(r.x(p) * r.x(p), opt.alpha_floor);
  out.loglik = -r.fmin;
  out.converged = r.converged;
  out.iterations = r.iterations;
  return out;
}

}  // namespace robglm
