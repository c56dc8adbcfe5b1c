#include "robglm/cml.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <thread>

namespace robglm {

namespace {

const double kNegInf = -std::numeric_limits<double>::infinity();
const double kNan = std::numeric_limits<double>::quiet_NaN();
constexpr double kInfeasible = 1e12;  // optimizer penalty for invalid parameter points

// Neumaier-compensated running sum; the final value does not depend on how
// work was scheduled because callers always add in index order.
struct Kahan {
  double sum = 0.0, comp = 0.0;
  void add(double x) {
    double t = sum + x;
    if (std::abs(sum) >= std::abs(x))
      comp += (sum - t) + x;
    else
      comp += (x - t) + sum;
    sum = t;
  }
  double value() const { return sum + comp; }
};

long long as_count(double y) {
  if (!(y >= 0.0) || y != std::floor(y)) throw data_error("count responses must be nonnegative integers");
  return static_cast<long long>(y);
}

void check_window(double a, double b) {
  if (!(a >= 0.0 && a < b && b <= 1.0)) throw data_error("truncation window needs 0 <= a < b <= 1");
}

void check_theta(const ThetaEstimate& theta, Eigen::Index p) {
  if (theta.beta.size() != p) throw data_error("coefficient length does not match X");
  if (!(theta.alpha > 0.0)) throw data_error("dispersion must be positive");
}

}  // namespace

// ---------------------------------------------------------------------------
// conditional support
// ---------------------------------------------------------------------------

double ConditionalSupport::weight(long long y) const {
  if (overlap()) return y == T_a - 1 ? std::max(t_a - t_b, 0.0) : 0.0;
  if (y == T_a - 1) return t_a;
  if (upper_bounded && y == T_b + 1) return 1.0 - t_b;
  if (y >= T_a && (!upper_bounded || y <= T_b)) return 1.0;
  return 0.0;
}

ConditionalSupport discrete_support(double a, double b, const NbDist& dist) {
  check_window(a, b);
  ConditionalSupport s;

  // lower threshold: y*(a) = max{y : F(y) <= a}, -1 when F(0) already exceeds a
  long long ya = dist.y_star(a);
  s.T_a = ya + 2;
  double fa = dist.pmf(ya + 1);
  s.t_a = fa > 0.0 ? std::clamp((dist.cdf(ya + 1) - a) / fa, 0.0, 1.0) : 1.0;

  if (b >= 1.0) {
    s.upper_bounded = false;
    s.t_b = 1.0;
    s.T_b = -1;
  } else {
    long long yb = dist.y_star(b);
    s.upper_bounded = true;
    s.T_b = yb;
    double fb = dist.pmf(yb + 1);
    s.t_b = fb > 0.0 ? std::clamp((dist.cdf(yb + 1) - b) / fb, 0.0, 1.0) : 1.0;
    if (s.T_b + 1 < s.T_a - 1) throw truncation_error("truncation window keeps no support point");
  }

  double q;
  if (!s.upper_bounded)
    q = 1.0 - dist.cdf(s.T_a - 1) + dist.pmf(s.T_a - 1) * s.t_a;
  else
    q = dist.cdf(s.T_b) - dist.cdf(s.T_a - 1) + dist.pmf(s.T_a - 1) * s.t_a +
        dist.pmf(s.T_b + 1) * (1.0 - s.t_b);
  if (!(q > 0.0)) throw truncation_error("truncation window keeps no probability mass");
  s.Q = q;
  return s;
}

ConditionalSupport discrete_support(double a, double b, double mu, double alpha) {
  NbDist dist(mu, alpha);
  return discrete_support(a, b, dist);
}

// ---------------------------------------------------------------------------
// conditional density and objective
// ---------------------------------------------------------------------------

double conditional_logdensity(double y, const VectorXd& x, const ThetaEstimate& theta, double a,
                              double b, const FamilySpec& fam) {
  check_window(a, b);
  check_theta(theta, x.size());
  double mu = fam.mean(x.dot(theta.beta));
  if (fam.discrete()) {
    NbDist dist(mu, theta.alpha);
    ConditionalSupport sup = discrete_support(a, b, dist);
    long long k = as_count(y);
    double w = sup.weight(k);
    if (w <= 0.0) return kNegInf;
    return std::log(dist.pmf(k)) + std::log(w) - std::log(sup.Q);
  }
  if (!(y > 0.0 && y < 1.0)) throw data_error("responses must lie strictly inside (0,1)");
  double z = beta_cdf(y, mu, theta.alpha);
  if (z < a || z > b) return kNegInf;
  return beta_log_pdf(y, mu, theta.alpha) - std::log(b - a);
}

VectorXd keep_weights(const ThetaEstimate& anchor, const Dataset& data, double a, double b,
                      const FamilySpec& fam) {
  data.validate(fam);
  check_window(a, b);
  check_theta(anchor, data.p());

  const Eigen::Index n = data.n();
  VectorXd lin = data.X * anchor.beta;
  VectorXd w(n);

  if (fam.discrete()) {
    double last_lin = kNan;
    std::optional<NbDist> dist;
    ConditionalSupport sup;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (lin(i) != last_lin) {
        dist.emplace(fam.mean(lin(i)), anchor.alpha);
        sup = discrete_support(a, b, *dist);
        last_lin = lin(i);
      }
      w(i) = sup.weight(as_count(data.y(i)));
    }
    return w;
  }

  for (Eigen::Index i = 0; i < n; ++i) {
    double z = beta_cdf(data.y(i), fam.mean(lin(i)), anchor.alpha);
    w(i) = (z < a || z > b) ? 0.0 : 1.0;
  }
  return w;
}

double mcml_objective(const ThetaEstimate& theta, const Dataset& data, double a, double b,
                      const VectorXd& weights, const FamilySpec& fam) {
  data.validate(fam);
  check_window(a, b);
  check_theta(theta, data.p());
  if (weights.size() != data.n()) throw data_error("one keep weight per observation is required");
  for (Eigen::Index i = 0; i < weights.size(); ++i)
    if (!(weights(i) >= 0.0 && weights(i) <= 1.0)) throw data_error("keep weights must lie in [0,1]");

  const Eigen::Index n = data.n();
  VectorXd lin = data.X * theta.beta;
  Kahan total;

  if (fam.discrete()) {
    // consecutive rows with the same linear predictor share the support
    // tables; intercept-only data then builds them once per evaluation
    double last_lin = kNan;
    std::optional<NbDist> dist;
    ConditionalSupport sup;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (weights(i) <= 0.0) continue;  // rejected at the anchor
      if (lin(i) != last_lin) {
        dist.emplace(fam.mean(lin(i)), theta.alpha);
        sup = discrete_support(a, b, *dist);
        last_lin = lin(i);
      }
      long long k = as_count(data.y(i));
      double w = sup.weight(k);
      if (w <= 0.0) return kNegInf;  // anchored observation left the support
      total.add(weights(i) * (std::log(dist->pmf(k)) + std::log(w) - std::log(sup.Q)));
    }
    return total.value();
  }

  const double log_width = std::log(b - a);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (weights(i) <= 0.0) continue;
    double mu = fam.mean(lin(i));
    double z = beta_cdf(data.y(i), mu, theta.alpha);
    if (z < a || z > b) return kNegInf;
    total.add(weights(i) * (beta_log_pdf(data.y(i), mu, theta.alpha) - log_width));
  }
  return total.value();
}

// ---------------------------------------------------------------------------
// conditional fit
// ---------------------------------------------------------------------------

CmlResult cml_fit(const Dataset& data, const FamilySpec& fam, const ThetaEstimate& theta_init,
                  const RqrDiagnostics& diag, const CmlOptions& opt) {
  data.validate(fam);
  check_theta(theta_init, data.p());
  const Eigen::Index p = data.p();
  const double a = diag.a_tilde;
  const double b = diag.b_tilde;
  const VectorXd weights = keep_weights(theta_init, data, a, b, fam);

  auto value = [&](const VectorXd& v) -> double {
    ThetaEstimate th;
    th.beta = v.head(p);
    th.alpha = std::max(v(p) * v(p), opt.alpha_floor);
    double objective;
    try {
      objective = mcml_objective(th, data, a, b, weights, fam);
    } catch (const std::exception&) {
      return kInfeasible;
    }
    if (!std::isfinite(objective)) return kInfeasible;
    return -objective;
  };

  VectorXd v0(p + 1);
  v0.head(p) = theta_init.beta;
  v0(p) = std::max(std::sqrt(theta_init.alpha), 0.05);
  const double f0 = value(v0);

  SimplexResult r = nelder_mead(value, v0, opt.simplex);

  bool out_of_box = std::abs(r.x(p)) > opt.sigma_bound;
  for (Eigen::Index j = 0; j < p; ++j) out_of_box = out_of_box || std::abs(r.x(j)) > opt.beta_bound;
  const bool worse_than_start = r.fmin > f0 + opt.objective_slack;
  const bool never_feasible = !(r.fmin < kInfeasible);

  CmlResult out;
  out.iterations = r.iterations;
  if (out_of_box || worse_than_start || never_feasible) {
    out.theta = theta_init;
    out.diverged = true;
    out.objective = f0 < kInfeasible ? -f0 : kNegInf;
    return out;
  }
  out.theta.beta = r.x.head(p);
  out.theta.alpha = std::max(r.x(p) * r.x(p), opt.alpha_floor);
  out.objective = -r.fmin;
  return out;
}

// ---------------------------------------------------------------------------
// standard errors
// ---------------------------------------------------------------------------

MatrixXd numeric_hessian(const std::function<double(const VectorXd&)>& f, const VectorXd& v) {
  const Eigen::Index m = v.size();
  VectorXd h(m);
  for (Eigen::Index i = 0; i < m; ++i) h(i) = 1e-4 * (1.0 + std::abs(v(i)));

  MatrixXd hess(m, m);
  const double f0 = f(v);
  VectorXd w = v;
  for (Eigen::Index i = 0; i < m; ++i) {
    w(i) = v(i) + h(i);
    double fp = f(w);
    w(i) = v(i) - h(i);
    double fm = f(w);
    w(i) = v(i);
    hess(i, i) = (fp - 2.0 * f0 + fm) / (h(i) * h(i));
    for (Eigen::Index j = i + 1; j < m; ++j) {
      w(i) = v(i) + h(i);
      w(j) = v(j) + h(j);
      double fpp = f(w);
      w(j) = v(j) - h(j);
      double fpm = f(w);
      w(i) = v(i) - h(i);
      double fmm = f(w);
      w(j) = v(j) + h(j);
      double fmp = f(w);
      w(i) = v(i);
      w(j) = v(j);
      hess(i, j) = hess(j, i) = (fpp - fpm - fmp + fmm) / (4.0 * h(i) * h(j));
    }
  }
  return hess;
}

SeResult se_from_negloglik(const std::function<double(const VectorXd&)>& f, const VectorXd& v) {
  SeResult out;
  MatrixXd hess = numeric_hessian(f, v);
  if (!hess.allFinite()) {
    out.message = "curvature could not be evaluated";
    return out;
  }
  Eigen::LLT<MatrixXd> llt(hess);
  if (llt.info() != Eigen::Success) {
    out.message = "curvature is not positive definite";
    return out;
  }
  MatrixXd cov = llt.solve(MatrixXd::Identity(v.size(), v.size()));
  out.se.resize(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (!(cov(i, i) > 0.0)) {
      out.se.resize(0);
      out.message = "curvature is not positive definite";
      return out;
    }
    out.se(i) = std::sqrt(cov(i, i));
  }
  out.ok = true;
  return out;
}

SeResult standard_errors(const ThetaEstimate& theta, const Dataset& data, const FamilySpec& fam,
                         double a, double b) {
  const Eigen::Index p = data.p();
  SeResult out;
  try {
    data.validate(fam);
    check_window(a, b);
    check_theta(theta, p);

    const VectorXd weights = keep_weights(theta, data, a, b, fam);
    auto negloglik = [&](const VectorXd& v) {
      ThetaEstimate th;
      th.beta = v.head(p);
      th.alpha = v(p) * v(p);
      return -mcml_objective(th, data, a, b, weights, fam);
    };
    VectorXd v(p + 1);
    v.head(p) = theta.beta;
    v(p) = std::sqrt(theta.alpha);

    out = se_from_negloglik(negloglik, v);
    if (out.ok) out.se(p) *= 2.0 * v(p);  // d(alpha)/d(sigma) = 2 sigma
  } catch (const std::exception& e) {
    out.ok = false;
    out.se.resize(0);
    out.message = e.what();
  }
  return out;
}

// ---------------------------------------------------------------------------
// pipeline
// ---------------------------------------------------------------------------

namespace {

BoundaryReport classify_boundary(const Dataset& data, const FamilySpec& fam,
                                 const ThetaEstimate& theta, double a, double b) {
  BoundaryReport rep;
  rep.a_bar = a;
  rep.b_bar = b;
  VectorXd lin = data.X * theta.beta;

  if (!fam.discrete()) {
    for (Eigen::Index i = 0; i < data.n(); ++i) {
      double z = beta_cdf(data.y(i), fam.mean(lin(i)), theta.alpha);
      if (z < a || z > b) rep.rejected.push_back(i);
    }
    return rep;
  }

  double last_lin = kNan;
  std::optional<NbDist> dist;
  ConditionalSupport sup;
  Kahan lower_sum, upper_sum;
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    if (lin(i) != last_lin) {
      dist.emplace(fam.mean(lin(i)), theta.alpha);
      sup = discrete_support(a, b, *dist);
      last_lin = lin(i);
    }
    long long k = as_count(data.y(i));
    double w = sup.weight(k);
    if (w <= 0.0) {
      rep.rejected.push_back(i);
    } else if (w < 1.0) {
      // a collapsed window has a single partially kept point; it is filed
      // under the lower edge with its combined fraction
      if (k == sup.T_a - 1) {
        rep.lower_edge.push_back(i);
        lower_sum.add(w);
      } else {
        rep.upper_edge.push_back(i);
        upper_sum.add(w);
      }
    }
  }
  if (!rep.lower_edge.empty())
    rep.mean_lower_weight = lower_sum.value() / static_cast<double>(rep.lower_edge.size());
  if (!rep.upper_edge.empty())
    rep.mean_upper_weight = upper_sum.value() / static_cast<double>(rep.upper_edge.size());
  return rep;
}

}  // namespace

FitReport cml_pipeline(const Dataset& data, const FamilySpec& fam, const PipelineConfig& cfg) {
  data.validate(fam);
  if (data.n() < 20) throw data_error("pipeline needs at least 20 observations to place cutoffs");
  if (cfg.iterations < 1) throw data_error("pipeline needs at least one refit round");
  if (cfg.replicates < 0) throw data_error("replicate count cannot be negative");

  FitReport rep;
  rep.family = fam;
  rep.config = cfg;

  try {
    rep.gamma = data.d() >= 1 ? mrc_fit(data, cfg.mrc) : VectorXd();
  } catch (const std::exception& e) {
    throw data_error(std::string("slope-direction stage: ") + e.what());
  }

  try {
    rep.theta_init = initial_estimator(data, fam, rep.gamma, cfg.mt).theta;
  } catch (const std::exception& e) {
    throw data_error(std::string("initialization stage: ") + e.what());
  }

  int reps = cfg.replicates > 0 ? cfg.replicates : (data.p() == 1 ? 100 : 30);
  if (!fam.discrete()) reps = 1;  // continuous residuals carry no randomization
  rep.config.replicates = reps;

  auto run_replicate = [&](int r) {
    ReplicateTrace trace;
    RngStream rng(cfg.seed, static_cast<std::uint64_t>(r));
    ThetaEstimate cur = rep.theta_init;
    VectorXd u;  // drawn once per replicate, reused by every refit round
    for (int it = 0; it < cfg.iterations; ++it) {
      RqrDiagnostics diag =
          it == 0 ? rqr_compute(cur, data, fam, rng) : rqr_compute(cur, data, fam, u);
      if (it == 0) u = diag.u;
      attach_cutoffs(diag, cfg.zeta1, cfg.zeta2);
      CmlResult res = cml_fit(data, fam, cur, diag, cfg.cml);
      trace.iterations.push_back(
          {diag.a_tilde, diag.b_tilde, diag.cutoffs_feasible, res.objective, res.diverged});
      trace.diverged = trace.diverged || res.diverged;
      cur = res.theta;
    }
    trace.theta = cur;
    return trace;
  };

  std::vector<ReplicateTrace> traces(static_cast<std::size_t>(reps));
  int threads = cfg.threads > 0 ? cfg.threads : static_cast<int>(std::thread::hardware_concurrency());
  threads = std::clamp(threads, 1, reps);

  if (threads == 1) {
    for (int r = 0; r < reps; ++r) traces[static_cast<std::size_t>(r)] = run_replicate(r);
  } else {
    std::vector<std::exception_ptr> failures(static_cast<std::size_t>(threads));
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int tid = 0; tid < threads; ++tid)
      pool.emplace_back([&, tid] {
        try {
          for (int r = tid; r < reps; r += threads)
            traces[static_cast<std::size_t>(r)] = run_replicate(r);
        } catch (...) {
          failures[static_cast<std::size_t>(tid)] = std::current_exception();
        }
      });
    for (auto& t : pool) t.join();
    for (auto& err : failures)
      if (err) std::rethrow_exception(err);
  }

  // replicate average in index order, so the result ignores scheduling
  const Eigen::Index p = data.p();
  std::vector<Kahan> beta_sum(static_cast<std::size_t>(p));
  Kahan alpha_sum, a_sum, b_sum;
  for (const ReplicateTrace& t : traces) {
    for (Eigen::Index j = 0; j < p; ++j) beta_sum[static_cast<std::size_t>(j)].add(t.theta.beta(j));
    alpha_sum.add(t.theta.alpha);
    a_sum.add(t.iterations.back().a);
    b_sum.add(t.iterations.back().b);
    rep.any_diverged = rep.any_diverged || t.diverged;
  }
  const double inv = 1.0 / static_cast<double>(reps);
  rep.theta.beta.resize(p);
  for (Eigen::Index j = 0; j < p; ++j) rep.theta.beta(j) = beta_sum[static_cast<std::size_t>(j)].value() * inv;
  rep.theta.alpha = alpha_sum.value() * inv;
  rep.replicates = std::move(traces);

  double a_bar = a_sum.value() * inv;
  double b_bar = b_sum.value() * inv;
  rep.boundary = classify_boundary(data, fam, rep.theta, a_bar, b_bar);

  if (cfg.compute_se)
    rep.se = standard_errors(rep.theta, data, fam, a_bar, b_bar);
  else
    rep.se.message = "not requested";

  return rep;
}

}  // namespace robglm
