#include "robglm/init.hpp"

#include <gsl/gsl_sf_psi.h>

#include <gsl/gsl_errno.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <utility>
#include <vector>

#include "robglm/family.hpp"
#include "robglm/quadrature.hpp"
#include "robglm/simplex.hpp"

namespace robglm {

namespace {

// tail cut for expectation sums over the NB support
constexpr double kExpTail = 1e-9;
// longer windows for the score moments, so the recentred score has
// numerically zero mean over the whole support
constexpr double kMomentTail = 1e-12;

const std::vector<double>& nb_grid() {
  static const std::vector<double> g = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7,
                                        0.8, 0.9, 1.0, 1.1, 1.2, 1.3};
  return g;
}

const std::vector<double>& beta_grid() {
  static const std::vector<double> g = {5,  6,  7,  8,  9,  10, 15,
                                        20, 25, 30, 35, 40, 45, 50};
  return g;
}

const std::vector<double>& nb_sigma() {
  static const std::vector<double> s = {.41, .40, .39, .37, .36, .35, .33,
                                        .32, .30, .29, .27, .26, .24};
  return s;
}

const std::vector<double>& beta_sigma() {
  static const std::vector<double> s = {.42, .43, .43, .44, .45, .45, .47,
                                        .48, .48, .49, .49, .49, .49, .49};
  return s;
}

const Quadrature& beta_rule() {
  static const Quadrature q = gauss_legendre_01(256);
  return q;
}

void gsl_quiet() {
  static const bool done = [] {
    gsl_set_error_handler_off();
    return true;
  }();
  (void)done;
}

// discretized distribution used for expectations: support points with
// (quadrature) probabilities
struct ExpGrid {
  std::vector<double> y;
  std::vector<double> p;
};

ExpGrid make_exp_grid(const FamilySpec& fam, double mu, double alpha_fam, double tail) {
  ExpGrid g;
  if (fam.kind == Family::NegBin) {
    NbDist d(mu, alpha_fam);
    long long top = d.quantile(1.0 - tail);
    g.y.resize(static_cast<size_t>(top) + 1);
    g.p.resize(static_cast<size_t>(top) + 1);
    for (long long y = 0; y <= top; ++y) {
      g.y[static_cast<size_t>(y)] = static_cast<double>(y);
      g.p[static_cast<size_t>(y)] = d.pmf(y);
    }
  } else {
    const Quadrature& q = beta_rule();
    size_t n = q.nodes.size();
    g.y.resize(n);
    g.p = q.weights;
    for (size_t k = 0; k < n; ++k) g.y[k] = beta_quantile(q.nodes[k], mu, alpha_fam);
  }
  return g;
}

void warn_once(const char* msg) {
  static bool warned = false;
  if (!warned) {
    std::fprintf(stderr, "robglm: %s\n", msg);
    warned = true;
  }
}

// argmin_g sum p_k rho_c(t_k - g) by coarse scan plus golden refinement
double m_of_samples(const std::vector<double>& t, const std::vector<double>& p, double c,
                    double glo, double ghi) {
  if (!(ghi > glo)) return glo;
  auto obj = [&](double g) {
    double s = 0.0;
    for (size_t k = 0; k < t.size(); ++k) s += p[k] * tukey_rho(t[k] - g, c);
    return s;
  };
  const int N = 64;
  double best = glo, fbest = obj(glo);
  std::vector<double> vals(N + 1);
  for (int i = 0; i <= N; ++i) {
    double g = glo + (ghi - glo) * i / N;
    vals[i] = obj(g);
    if (vals[i] < fbest) {
      fbest = vals[i];
      best = g;
    }
  }
  // flag competing basins: a strict interior local minimum well above the best
  int nmin = 0;
  for (int i = 1; i < N; ++i)
    if (vals[i] < vals[i - 1] && vals[i] < vals[i + 1] && vals[i] > fbest + 1e-6) ++nmin;
  if (nmin > 0) warn_once("m_function objective has competing local minima; using the global one");
  double h = (ghi - glo) / N;
  return golden_section_min(obj, std::max(glo, best - h), std::min(ghi, best + h), 1e-9);
}

double m_from_grid(const FamilySpec& fam, const ExpGrid& grid, double a, double c) {
  std::vector<double> t(grid.y.size());
  for (size_t k = 0; k < t.size(); ++k) t[k] = vst(grid.y[k], a, fam);
  // bracket the location between the transformed 0.001 and 0.999 quantiles
  double cum = 0.0, glo = t.front(), ghi = t.back();
  for (size_t k = 0; k < t.size(); ++k) {
    cum += grid.p[k];
    if (cum < 0.001) glo = t[k];
    if (cum <= 0.999) ghi = t[k];
  }
  if (!(ghi > glo)) return 0.5 * (t.front() + t.back());
  return m_of_samples(t, grid.p, c, glo, ghi);
}

// ---------------------------------------------------------------------------
// m(h(u), a) tabulated over a linear-predictor grid, linear interpolation
// ---------------------------------------------------------------------------

struct MTable {
  double ulo = 0.0, uhi = 0.0, step = 1.0;
  std::vector<double> m;

  double operator()(double u) const {
    if (m.size() == 1) return m[0];
    double x = (std::clamp(u, ulo, uhi) - ulo) / step;
    size_t i = std::min(static_cast<size_t>(x), m.size() - 2);
    double f = x - static_cast<double>(i);
    return m[i] * (1.0 - f) + m[i + 1] * f;
  }

  // approximate inverse on the (monotone) table
  double inverse(double t) const {
    if (m.size() == 1) return ulo;
    if (t <= m.front()) return ulo;
    if (t >= m.back()) return uhi;
    auto it = std::lower_bound(m.begin(), m.end(), t);
    size_t i = static_cast<size_t>(it - m.begin());
    double m0 = m[i - 1], m1 = m[i];
    double f = m1 > m0 ? (t - m0) / (m1 - m0) : 0.5;
    return ulo + step * (static_cast<double>(i - 1) + f);
  }
};

std::pair<double, double> data_u_range(const FamilySpec& fam, const VectorXd& y) {
  double ymin = y.minCoeff(), ymax = y.maxCoeff();
  if (fam.kind == Family::NegBin) {
    double lo = std::log(std::max(0.05, ymin + 0.1)) - 3.0;
    double hi = std::log(ymax + 1.0) + 2.0;
    return {lo, hi};
  }
  auto logit = [](double v) { return std::log(v / (1.0 - v)); };
  double lo = logit(std::clamp(ymin, 1e-3, 1.0 - 1e-3)) - 3.0;
  double hi = logit(std::clamp(ymax, 1e-3, 1.0 - 1e-3)) + 3.0;
  return {std::max(lo, -9.0), std::min(hi, 9.0)};
}

MTable build_mtable(const FamilySpec& fam, double a, double ulo, double uhi) {
  MTable tab;
  tab.ulo = ulo;
  tab.uhi = uhi;
  int n = static_cast<int>(std::ceil((uhi - ulo) / 0.06));
  n = std::clamp(n, 64, 400);
  if (uhi <= ulo) n = 1;
  tab.step = n > 1 ? (uhi - ulo) / (n - 1) : 1.0;
  tab.m.resize(static_cast<size_t>(std::max(n, 1)));
  double c = 1.5 * sigma_of_alpha(a, fam);
  double alpha_fam = family_from_table_alpha(a, fam);
  for (int j = 0; j < std::max(n, 1); ++j) {
    double mu = fam.mean(ulo + tab.step * j);
    if (fam.kind == Family::Beta) mu = std::clamp(mu, 1e-6, 1.0 - 1e-6);
    ExpGrid g = make_exp_grid(fam, mu, alpha_fam, kExpTail);
    tab.m[static_cast<size_t>(j)] = m_from_grid(fam, g, a, c);
  }
  // enforce monotonicity against interpolation noise so inverse() is sane
  for (size_t j = 1; j < tab.m.size(); ++j) tab.m[j] = std::max(tab.m[j], tab.m[j - 1]);
  return tab;
}

// ---------------------------------------------------------------------------
// MT fit machinery
// ---------------------------------------------------------------------------

struct MtProblem {
  const VectorXd* v;
  const VectorXd* w;
  VectorXd t;  // transformed responses
  const MTable* mt;
  double c;

  double objective(double b0, double b1) const {
    double s = 0.0;
    for (Eigen::Index i = 0; i < t.size(); ++i) {
      double wi = (*w)(i);
      if (wi == 0.0) continue;
      s += wi * tukey_rho(t(i) - (*mt)(b0 + b1 * (*v)(i)), c);
    }
    return s;
  }
};

MtFit mt_fit_core(const MtProblem& prob, bool location_only, const MtFit* warm) {
  // robust line start: invert the location table at each response and fit a
  // weighted least-squares line through (v, u)
  const VectorXd& v = *prob.v;
  const VectorXd& w = *prob.w;
  Eigen::Index n = v.size();
  VectorXd uhat(n);
  for (Eigen::Index i = 0; i < n; ++i) uhat(i) = prob.mt->inverse(prob.t(i));
  double sw = 0, sv = 0, su = 0, svv = 0, svu = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    sw += w(i);
    sv += w(i) * v(i);
    su += w(i) * uhat(i);
    svv += w(i) * v(i) * v(i);
    svu += w(i) * v(i) * uhat(i);
  }
  double b1_0 = 0.0, b0_0 = su / std::max(sw, 1e-12);
  if (!location_only) {
    double den = svv - sv * sv / std::max(sw, 1e-12);
    if (den > 1e-12) {
      b1_0 = (svu - sv * su / sw) / den;
      b0_0 = (su - b1_0 * sv) / sw;
    }
  }
  // residual spread sets the perturbation scale for the multistart grid
  std::vector<double> absres;
  absres.reserve(static_cast<size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i)
    if (w(i) > 0) absres.push_back(std::abs(uhat(i) - b0_0 - b1_0 * v(i)));
  std::nth_element(absres.begin(), absres.begin() + absres.size() / 2, absres.end());
  double sr = 1.4826 * absres[absres.size() / 2] + 0.1;
  double vspread = std::sqrt(std::max(svv / std::max(sw, 1e-12) -
                                          (sv / std::max(sw, 1e-12)) * (sv / std::max(sw, 1e-12)),
                                      0.25));
  double sb = sr / vspread;

  SimplexOptions so;
  so.tol = 1e-8;

  MtFit best;
  best.objective = std::numeric_limits<double>::infinity();

  auto run_from = [&](double b0, double b1) {
    if (location_only) {
      auto f1 = [&](const VectorXd& z) { return prob.objective(z(0), 0.0); };
      VectorXd z0(1);
      z0(0) = b0;
      SimplexResult r = nelder_mead(f1, z0, so);
      if (r.fmin < best.objective) best = MtFit{r.x(0), 0.0, r.fmin};
    } else {
      auto f2 = [&](const VectorXd& z) { return prob.objective(z(0), z(1)); };
      VectorXd z0(2);
      z0 << b0, b1;
      SimplexResult r = nelder_mead(f2, z0, so);
      if (r.fmin < best.objective) best = MtFit{r.x(0), r.x(1), r.fmin};
    }
  };

  for (int i = -1; i <= 1; ++i) {
    for (int j = -1; j <= 1; ++j) {
      if (location_only && j != 0) continue;
      run_from(b0_0 + 0.75 * sr * i, b1_0 + 0.75 * sb * j);
    }
  }
  if (warm) run_from(warm->beta1, warm->eta);
  return best;
}

// ---------------------------------------------------------------------------
// dispersion score machinery
// ---------------------------------------------------------------------------

// analytic d/d(alpha) log f at the family parameterization; digamma values
// are passed in so sweeps can use the recursion psi0(x+1) = psi0(x) + 1/x
double raw_score_nb(double y, double mu, double alpha, double digamma_y, double digamma_ia) {
  double ia = 1.0 / alpha;
  double l1p = std::log1p(alpha * mu);
  return (digamma_ia - digamma_y + l1p) / (alpha * alpha) + y / alpha -
         mu * (y + ia) / (alpha * mu + 1.0);
}

double raw_score_beta(double y, double mu, double alpha) {
  double ia = 1.0 / alpha;
  double k = -gsl_sf_psi(ia) + mu * gsl_sf_psi(mu * ia) +
             (1.0 - mu) * gsl_sf_psi((1.0 - mu) * ia);
  return (k - mu * std::log(y) - (1.0 - mu) * std::log1p(-y)) / (alpha * alpha);
}

// descent endpoint for the dispersion score: B = kDescentMult * sd(score).
// the score redescends to zero beyond B, so gross response outliers drop out
// of the dispersion equation entirely instead of pinning it at a clip level
constexpr double kDescentMult = 4.0;

// biweight-weighted likelihood score: s * (1 - (s/B)^2)^2 inside (-B, B),
// zero outside; bounded (max 16/(25*sqrt(5)) * B) and smooth in alpha
inline double redescend(double s, double B) {
  if (std::abs(s) >= B) return 0.0;
  double r = s / B, w = 1.0 - r * r;
  return s * w * w;
}

struct PsiMoments {
  double bound = 0.0;   // descent endpoint B = kDescentMult sd of the raw score
  double center = 0.0;  // model expectation of the redescended score
};

PsiMoments psi_moments(const FamilySpec& fam, double mu, double alpha_fam) {
  gsl_quiet();
  PsiMoments pm;
  if (fam.kind == Family::NegBin) {
    NbDist d(mu, alpha_fam);
    long long top = d.quantile(1.0 - kMomentTail);
    double ia = 1.0 / alpha_fam;
    std::vector<double> s(static_cast<size_t>(top) + 1);
    double dg = gsl_sf_psi(ia);
    double psi_ia = dg, l1p = std::log1p(alpha_fam * mu), a2 = alpha_fam * alpha_fam;
    double mass = 0.0, m2 = 0.0;
    for (long long y = 0; y <= top; ++y) {
      double sy = (psi_ia - dg + l1p) / a2 + y / alpha_fam -
                  mu * (y + ia) / (alpha_fam * mu + 1.0);
      s[static_cast<size_t>(y)] = sy;
      double p = d.pmf(y);
      mass += p;
      m2 += p * sy * sy;
      dg += 1.0 / (ia + static_cast<double>(y));
    }
    pm.bound = std::max(kDescentMult * std::sqrt(std::max(m2 / std::max(mass, 1e-300), 0.0)), 1e-8);
    double num = 0.0;
    for (long long y = 0; y <= top; ++y)
      num += d.pmf(y) * redescend(s[static_cast<size_t>(y)], pm.bound);
    pm.center = num / std::max(mass, 1e-300);
  } else {
    const Quadrature& q = beta_rule();
    double ia = 1.0 / alpha_fam;
    double k = -gsl_sf_psi(ia) + mu * gsl_sf_psi(mu * ia) +
               (1.0 - mu) * gsl_sf_psi((1.0 - mu) * ia);
    size_t n = q.nodes.size();
    std::vector<double> s(n);
    double m2 = 0.0;
    for (size_t j = 0; j < n; ++j) {
      double y = beta_quantile(q.nodes[j], mu, alpha_fam);
      y = std::clamp(y, 1e-14, 1.0 - 1e-14);
      s[j] = (k - mu * std::log(y) - (1.0 - mu) * std::log1p(-y)) /
             (alpha_fam * alpha_fam);
      m2 += q.weights[j] * s[j] * s[j];
    }
    pm.bound = std::max(kDescentMult * std::sqrt(std::max(m2, 0.0)), 1e-8);
    double num = 0.0;
    for (size_t j = 0; j < n; ++j) num += q.weights[j] * redescend(s[j], pm.bound);
    pm.center = num;
  }
  return pm;
}

// per-(alpha, u-grid) tables of clip bound and centering, linear in u
struct PsiTable {
  double ulo = 0.0, step = 1.0;
  std::vector<PsiMoments> pm;

  PsiMoments at(double u) const {
    if (pm.size() == 1) return pm[0];
    double x = (u - ulo) / step;
    x = std::clamp(x, 0.0, static_cast<double>(pm.size() - 1));
    size_t i = std::min(static_cast<size_t>(x), pm.size() - 2);
    double f = x - static_cast<double>(i);
    PsiMoments out;
    out.bound = pm[i].bound * (1.0 - f) + pm[i + 1].bound * f;
    out.center = pm[i].center * (1.0 - f) + pm[i + 1].center * f;
    return out;
  }
};

PsiTable build_psi_table(const FamilySpec& fam, double alpha_fam, double ulo, double uhi) {
  PsiTable t;
  t.ulo = ulo;
  int n = uhi > ulo ? std::clamp(static_cast<int>(std::ceil((uhi - ulo) / 0.12)), 32, 200) : 1;
  t.step = n > 1 ? (uhi - ulo) / (n - 1) : 1.0;
  t.pm.resize(static_cast<size_t>(n));
  for (int j = 0; j < n; ++j) {
    double mu = fam.mean(ulo + t.step * j);
    if (fam.kind == Family::Beta) mu = std::clamp(mu, 1e-6, 1.0 - 1e-6);
    t.pm[static_cast<size_t>(j)] = psi_moments(fam, mu, alpha_fam);
  }
  return t;
}

// sum of the bounded dispersion score over observations at fixed fit
double psi_sum(const FamilySpec& fam, const VectorXd& u, const VectorXd& y, double alpha_fam,
               const PsiTable& tab) {
  double s = 0.0;
  if (fam.kind == Family::NegBin) {
    double ia = 1.0 / alpha_fam;
    long long ymax = static_cast<long long>(y.maxCoeff());
    std::vector<double> dg(static_cast<size_t>(ymax) + 1);
    dg[0] = gsl_sf_psi(ia);
    for (long long k = 1; k <= ymax; ++k)
      dg[static_cast<size_t>(k)] =
          dg[static_cast<size_t>(k - 1)] + 1.0 / (ia + static_cast<double>(k - 1));
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      double mu = std::exp(u(i));
      double raw = raw_score_nb(y(i), mu, alpha_fam, dg[static_cast<size_t>(y(i))], dg[0]);
      PsiMoments pm = tab.at(u(i));
      s += redescend(raw, pm.bound) - pm.center;
    }
  } else {
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      double mu = std::clamp(fam.mean(u(i)), 1e-6, 1.0 - 1e-6);
      double raw = raw_score_beta(y(i), mu, alpha_fam);
      PsiMoments pm = tab.at(u(i));
      s += redescend(raw, pm.bound) - pm.center;
    }
  }
  return s;
}

struct AlphaStar {
  double a_table = 0.0;
  bool bracketed = false;
};

AlphaStar alpha_m_solution(const FamilySpec& fam, const VectorXd& u, const VectorXd& y,
                           double ulo, double uhi) {
  const std::vector<double>& grid = alpha_grid(fam);
  double alo = grid.front(), ahi = grid.back();
  auto eval = [&](double a) {
    double af = family_from_table_alpha(a, fam);
    PsiTable tab = build_psi_table(fam, af, ulo, uhi);
    return psi_sum(fam, u, y, af, tab);
  };
  double flo = eval(alo), fhi = eval(ahi);
  AlphaStar out;
  if (flo == 0.0) return {alo, true};
  if (fhi == 0.0) return {ahi, true};
  if (flo * fhi > 0.0) {
    out.a_table = std::abs(flo) < std::abs(fhi) ? alo : ahi;
    out.bracketed = false;
    return out;
  }
  for (int it = 0; it < 40 && (ahi - alo) > 1e-4; ++it) {
    double mid = 0.5 * (alo + ahi);
    double fm = eval(mid);
    if (fm == 0.0) return {mid, true};
    if (fm * flo < 0.0) {
      ahi = mid;
      fhi = fm;
    } else {
      alo = mid;
      flo = fm;
    }
  }
  out.a_table = 0.5 * (alo + ahi);
  out.bracketed = true;
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// public operations
// ---------------------------------------------------------------------------

double table_from_family_alpha(double alpha, const FamilySpec& fam) {
  return fam.kind == Family::NegBin ? alpha : 1.0 / alpha;
}

double family_from_table_alpha(double a, const FamilySpec& fam) {
  return fam.kind == Family::NegBin ? a : 1.0 / a;
}

const std::vector<double>& alpha_grid(const FamilySpec& fam) {
  return fam.kind == Family::NegBin ? nb_grid() : beta_grid();
}

double sigma_of_alpha(double a, const FamilySpec& fam) {
  const std::vector<double>& g = alpha_grid(fam);
  const std::vector<double>& s = fam.kind == Family::NegBin ? nb_sigma() : beta_sigma();
  if (a <= g.front()) return s.front();
  if (a >= g.back()) return s.back();
  auto it = std::upper_bound(g.begin(), g.end(), a);
  size_t i = static_cast<size_t>(it - g.begin());
  double f = (a - g[i - 1]) / (g[i] - g[i - 1]);
  return s[i - 1] * (1.0 - f) + s[i] * f;
}

double vst(double y, double a, const FamilySpec& fam) {
  if (fam.kind == Family::NegBin) {
    double ac = std::min(a, 1.3);
    double ia = 1.0 / ac;
    return std::sqrt(ia - 0.5) * std::asinh(std::sqrt((y + 0.375) / (ia - 0.75)));
  }
  double yc = std::clamp(y, 0.0, 1.0);
  return std::sqrt(1.0 + a) * std::asin(std::sqrt(yc));
}

double tukey_rho(double u, double c) {
  double v = u / c;
  if (std::abs(v) >= 1.0) return 1.0;
  double w = 1.0 - v * v;
  return 1.0 - w * w * w;
}

double m_function(double mu, double a, const FamilySpec& fam, double c_override) {
  double c = c_override > 0 ? c_override : 1.5 * sigma_of_alpha(a, fam);
  ExpGrid g = make_exp_grid(fam, mu, family_from_table_alpha(a, fam), kExpTail);
  return m_from_grid(fam, g, a, c);
}

VectorXd mad_weights(const VectorXd& v, double threshold) {
  Eigen::Index n = v.size();
  std::vector<double> tmp(v.data(), v.data() + n);
  std::nth_element(tmp.begin(), tmp.begin() + n / 2, tmp.end());
  double med = tmp[static_cast<size_t>(n / 2)];
  if (n % 2 == 0) {
    double lo = *std::max_element(tmp.begin(), tmp.begin() + n / 2);
    med = 0.5 * (med + lo);
  }
  for (Eigen::Index i = 0; i < n; ++i) tmp[static_cast<size_t>(i)] = std::abs(v(i) - med);
  std::nth_element(tmp.begin(), tmp.begin() + n / 2, tmp.end());
  double mad = tmp[static_cast<size_t>(n / 2)];
  if (n % 2 == 0) {
    double lo = *std::max_element(tmp.begin(), tmp.begin() + n / 2);
    mad = 0.5 * (mad + lo);
  }
  mad *= 1.4826;  // normal-consistent scaling
  if (mad <= 0) throw data_error("degenerate covariate: mad is zero");
  VectorXd w(n);
  for (Eigen::Index i = 0; i < n; ++i)
    w(i) = std::abs(v(i) - med) / mad < threshold ? 1.0 : 0.0;
  return w;
}

MtFit mt_fit_simple(const VectorXd& v, const VectorXd& y, double a, const FamilySpec& fam,
                    const VectorXd& w, const MtConfig& cfg) {
  if (v.size() != y.size() || v.size() != w.size() || v.size() < 2)
    throw data_error("mt_fit_simple: size mismatch");
  if (v.maxCoeff() - v.minCoeff() <= 0) throw data_error("degenerate covariate: mad is zero");
  auto [ulo, uhi] = data_u_range(fam, y);
  MTable mt = build_mtable(fam, a, ulo, uhi);
  MtProblem prob;
  prob.v = &v;
  prob.w = &w;
  prob.mt = &mt;
  prob.c = cfg.c_multiplier * sigma_of_alpha(a, fam);
  prob.t.resize(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) prob.t(i) = vst(y(i), a, fam);
  return mt_fit_core(prob, false, nullptr);
}

double psi_alpha(double y, double mu, double alpha, const FamilySpec& fam) {
  PsiMoments pm = psi_moments(fam, mu, alpha);
  double raw;
  if (fam.kind == Family::NegBin) {
    double ia = 1.0 / alpha;
    raw = raw_score_nb(y, mu, alpha, gsl_sf_psi(y + ia), gsl_sf_psi(ia));
  } else {
    raw = raw_score_beta(y, mu, alpha);
  }
  return redescend(raw, pm.bound) - pm.center;
}

InitResult solve_alpha(const VectorXd& v, const VectorXd& y, const FamilySpec& fam,
                       const MtConfig& cfg) {
  InitResult out;
  const Eigen::Index n = y.size();
  bool location_only = v.size() == 0 || (v.maxCoeff() - v.minCoeff()) <= 1e-12;
  VectorXd vv = v.size() == n ? v : VectorXd::Zero(n);
  VectorXd w = location_only ? VectorXd::Ones(n) : mad_weights(vv, cfg.weight_threshold);

  auto [ulo, uhi] = data_u_range(fam, y);
  const std::vector<double>& grid = alpha_grid(fam);

  out.grid.resize(grid.size());
  MtFit warm;
  bool have_warm = false;
  for (size_t g = 0; g < grid.size(); ++g) {
    double a = grid[g];
    MTable mt = build_mtable(fam, a, ulo, uhi);
    MtProblem prob;
    prob.v = &vv;
    prob.w = &w;
    prob.mt = &mt;
    prob.c = cfg.c_multiplier * sigma_of_alpha(a, fam);
    prob.t.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) prob.t(i) = vst(y(i), a, fam);
    MtFit fit = mt_fit_core(prob, location_only, have_warm ? &warm : nullptr);
    warm = fit;
    have_warm = true;

    VectorXd u(n);
    for (Eigen::Index i = 0; i < n; ++i)
      u(i) = std::clamp(fit.beta1 + fit.eta * vv(i), ulo, uhi);
    // moment tables only need to span the observed linear predictors
    AlphaStar as = alpha_m_solution(fam, u, y, u.minCoeff(), u.maxCoeff());
    out.grid[g] = AlphaGridPoint{a, fit, as.a_table, as.bracketed};
  }

  // pick the two grid points where the M-solution is closest to the grid
  // value and interpolate between them
  size_t g1 = 0, g2 = 0;
  double d1 = std::numeric_limits<double>::infinity(), d2 = d1;
  for (size_t g = 0; g < grid.size(); ++g) {
    double d = std::abs(out.grid[g].a_star_table - out.grid[g].a_table);
    if (d < d1) {
      d2 = d1;
      g2 = g1;
      d1 = d;
      g1 = g;
    } else if (d < d2) {
      d2 = d;
      g2 = g;
    }
  }
  if (grid.size() == 1) g2 = g1;
  double wt = (d1 + d2) > 0 ? d2 / (d1 + d2) : 1.0;
  const AlphaGridPoint& p1 = out.grid[g1];
  const AlphaGridPoint& p2 = out.grid[g2];
  out.a_table = wt * p1.a_table + (1.0 - wt) * p2.a_table;
  out.beta1 = wt * p1.fit.beta1 + (1.0 - wt) * p2.fit.beta1;
  out.eta = wt * p1.fit.eta + (1.0 - wt) * p2.fit.eta;
  out.alpha_at_boundary = !p1.bracketed;
  double alpha_fam = family_from_table_alpha(out.a_table, fam);
  out.theta.beta = VectorXd(location_only ? 1 : 2);
  out.theta.beta(0) = out.beta1;
  if (!location_only) out.theta.beta(1) = out.eta;
  out.theta.alpha = alpha_fam;
  return out;
}

InitResult initial_estimator(const Dataset& data, const FamilySpec& fam, const VectorXd& gamma,
                             const MtConfig& cfg) {
  data.validate(fam);
  VectorXd v;
  if (data.p() > 1 && gamma.size() == data.d()) {
    v = data.X.rightCols(data.d()) * gamma;
  } else if (data.p() > 1) {
    throw data_error("initial_estimator: direction length does not match covariates");
  }
  InitResult r = solve_alpha(v, data.y, fam, cfg);
  double alpha_fam = family_from_table_alpha(r.a_table, fam);
  VectorXd g = data.p() > 1 ? gamma : VectorXd();
  r.theta = assemble_initial(g, r.beta1, data.p() > 1 ? r.eta : 0.0, alpha_fam);
  r.gamma = r.theta.gamma();
  r.eta = r.theta.eta();
  r.beta1 = r.theta.beta1();
  return r;
}

}  // namespace robglm
