#include "robglm/rqr.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "robglm/family.hpp"

namespace robglm {

namespace {

constexpr double kFeasTol = 1e-12;  // equality on the boundary counts as feasible

Eigen::Index count_flag(const std::vector<OutlierFlag>& f, OutlierFlag v) {
  return static_cast<Eigen::Index>(std::count(f.begin(), f.end(), v));
}

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  std::nth_element(v.begin(), v.begin() + mid - 1, v.end());
  return 0.5 * (v[mid - 1] + hi);
}

RqrDiagnostics compute_impl(const ThetaEstimate& theta, const Dataset& data,
                            const FamilySpec& fam, const VectorXd* u) {
  data.validate(fam);
  if (theta.beta.size() != data.p()) throw data_error("coefficient length does not match X");
  if (!(theta.alpha > 0.0)) throw data_error("residuals need a positive dispersion");

  const Eigen::Index n = data.n();
  RqrDiagnostics diag;
  diag.z.resize(n);
  VectorXd lin = data.X * theta.beta;

  if (fam.discrete()) {
    if (u == nullptr || u->size() != n)
      throw data_error("discrete residuals need one uniform per observation");
    for (Eigen::Index i = 0; i < n; ++i)
      if (!((*u)(i) >= 0.0 && (*u)(i) <= 1.0)) throw data_error("uniforms must lie in [0,1]");
    diag.u = *u;
    for (Eigen::Index i = 0; i < n; ++i) {
      NbDist dist(fam.mean(lin(i)), theta.alpha);
      long long y = static_cast<long long>(data.y(i));
      double z = dist.cdf(y) - (*u)(i)*dist.pmf(y);
      diag.z(i) = std::clamp(z, 0.0, 1.0);
    }
  } else {
    for (Eigen::Index i = 0; i < n; ++i) {
      double z = beta_cdf(data.y(i), fam.mean(lin(i)), theta.alpha);
      diag.z(i) = std::clamp(z, 0.0, 1.0);
    }
  }
  diag.outlier_flags.assign(static_cast<std::size_t>(n), OutlierFlag::kept);
  return diag;
}

}  // namespace

Eigen::Index RqrDiagnostics::n_below() const { return count_flag(outlier_flags, OutlierFlag::below); }
Eigen::Index RqrDiagnostics::n_above() const { return count_flag(outlier_flags, OutlierFlag::above); }

RqrDiagnostics rqr_compute(const ThetaEstimate& theta, const Dataset& data, const FamilySpec& fam,
                           const VectorXd& u) {
  return compute_impl(theta, data, fam, &u);
}

RqrDiagnostics rqr_compute(const ThetaEstimate& theta, const Dataset& data, const FamilySpec& fam,
                           RngStream& rng) {
  if (!fam.discrete()) return compute_impl(theta, data, fam, nullptr);
  VectorXd u(data.n());
  for (Eigen::Index i = 0; i < u.size(); ++i) u(i) = rng.uniform();
  return compute_impl(theta, data, fam, &u);
}

CutoffResult adaptive_cutoffs(const VectorXd& z, double zeta1, double zeta2) {
  const Eigen::Index n = z.size();
  if (n < 20) throw data_error("adaptive cutoffs need at least 20 residuals");
  if (!(zeta1 >= 0.0 && zeta1 < zeta2 && zeta2 <= 1.0))
    throw data_error("tail anchors must satisfy 0 <= zeta1 < zeta2 <= 1");
  for (Eigen::Index i = 0; i < n; ++i)
    if (!(z(i) >= 0.0 && z(i) <= 1.0)) throw data_error("residuals must lie in [0,1]");

  std::vector<double> zs(z.data(), z.data() + n);
  std::sort(zs.begin(), zs.end());
  auto ecdf = [&](double x) {
    return static_cast<double>(std::upper_bound(zs.begin(), zs.end(), x) - zs.begin()) /
           static_cast<double>(n);
  };

  // jump locations of the empirical cdf
  std::vector<double> jumps(zs);
  jumps.erase(std::unique(jumps.begin(), jumps.end()), jumps.end());

  // trial bounds: the truncated cdfs only change at order statistics
  std::vector<double> cand;
  cand.reserve(jumps.size() + 2);
  cand.push_back(0.0);
  for (double v : jumps)
    if (v > 0.0 && v < 1.0) cand.push_back(v);
  cand.push_back(1.0);

  // right tail must stay at or above the diagonal after renormalizing by F_n(t)
  auto upper_ok = [&](double t) {
    double ft = ecdf(t);
    if (ft <= 0.0) return true;    // no mass at or below t: tail untouched
    if (t < zeta2) return true;    // window (zeta2, t] empty, anchor beyond t
    if (ecdf(zeta2) < zeta2 * ft - kFeasTol) return false;
    auto first = std::upper_bound(jumps.begin(), jumps.end(), zeta2);
    auto last = std::upper_bound(first, jumps.end(), t);
    for (auto it = first; it != last; ++it)
      if (ecdf(*it) < *it * ft - kFeasTol) return false;
    return true;
  };

  // left tail must stay at or below the diagonal after dropping mass <= t
  auto lower_ok = [&](double t) {
    double ft = ecdf(t);
    double denom = 1.0 - ft;
    if (denom <= 0.0) return true;  // everything would be dropped: vacuous
    if (t > zeta1) return true;     // window [t, zeta1] empty, anchor below t
    if (ecdf(zeta1) - ft > (zeta1 + kFeasTol) * denom) return false;
    auto first = std::lower_bound(jumps.begin(), jumps.end(), t);
    auto last = std::upper_bound(first, jumps.end(), zeta1);
    for (auto it = first; it != last; ++it)
      if (ecdf(*it) - ft > (*it + kFeasTol) * denom) return false;
    return true;
  };

  CutoffResult res;
  bool found_b = false;
  for (auto it = cand.rbegin(); it != cand.rend(); ++it)
    if (upper_ok(*it)) {
      res.b_tilde = *it;
      found_b = true;
      break;
    }
  bool found_a = false;
  for (double t : cand)
    if (lower_ok(t)) {
      res.a_tilde = t;
      found_a = true;
      break;
    }

  // no usable bounds, or they crossed: truncation is not safe here
  if (!found_a || !found_b || !(res.a_tilde < res.b_tilde)) return CutoffResult{0.0, 1.0, false};
  return res;
}

void attach_cutoffs(RqrDiagnostics& diag, double zeta1, double zeta2) {
  CutoffResult c = adaptive_cutoffs(diag.z, zeta1, zeta2);
  diag.a_tilde = c.a_tilde;
  diag.b_tilde = c.b_tilde;
  diag.zeta1 = zeta1;
  diag.zeta2 = zeta2;
  diag.cutoffs_feasible = c.feasible;
  diag.outlier_flags.assign(static_cast<std::size_t>(diag.z.size()), OutlierFlag::kept);
  for (Eigen::Index i = 0; i < diag.z.size(); ++i) {
    if (diag.z(i) < diag.a_tilde)
      diag.outlier_flags[static_cast<std::size_t>(i)] = OutlierFlag::below;
    else if (diag.z(i) > diag.b_tilde)
      diag.outlier_flags[static_cast<std::size_t>(i)] = OutlierFlag::above;
  }
}

ShrinkageReport cutoff_shrinkage_check(
    const std::vector<Eigen::Index>& n_list, int reps, std::uint64_t seed,
    const std::function<Dataset(Eigen::Index n, RngStream& rng)>& make_data,
    const std::function<ThetaEstimate(const Dataset& data)>& estimate, const FamilySpec& fam,
    double zeta1, double zeta2) {
  ShrinkageReport report;
  for (std::size_t k = 0; k < n_list.size(); ++k) {
    const Eigen::Index n = n_list[k];
    std::vector<double> as, gaps;
    as.reserve(static_cast<std::size_t>(reps));
    gaps.reserve(static_cast<std::size_t>(reps));
    double rejected = 0.0;
    int infeasible = 0;
    for (int r = 0; r < reps; ++r) {
      RngStream data_rng(seed, static_cast<std::uint64_t>(r), 2 * k);
      RngStream u_rng(seed, static_cast<std::uint64_t>(r), 2 * k + 1);
      Dataset data = make_data(n, data_rng);
      ThetaEstimate theta = estimate(data);
      RqrDiagnostics diag = rqr_compute(theta, data, fam, u_rng);
      attach_cutoffs(diag, zeta1, zeta2);
      if (!diag.cutoffs_feasible) ++infeasible;
      as.push_back(diag.a_tilde);
      gaps.push_back(1.0 - diag.b_tilde);
      rejected +=
          static_cast<double>(diag.n_rejected()) / static_cast<double>(diag.z.size());
    }
    ShrinkageRow row;
    row.n = n;
    row.median_a = median_of(as);
    row.median_gap = median_of(gaps);
    double root_n = std::sqrt(static_cast<double>(n));
    row.median_scaled_a = root_n * row.median_a;
    row.median_scaled_gap = root_n * row.median_gap;
    row.mean_rejected = rejected / std::max(reps, 1);
    row.infeasible_fraction = static_cast<double>(infeasible) / std::max(reps, 1);
    report.rows.push_back(row);
  }

  // rate check: scaled medians should stay of the same order as n grows.
  // Baseline is the first n >= 400 when one precedes the largest n,
  // otherwise the next-to-last row.
  std::size_t base = 0;
  while (base < report.rows.size() && report.rows[base].n < 400) ++base;
  if (base + 1 >= report.rows.size())
    base = report.rows.size() >= 2 ? report.rows.size() - 2 : 0;
  if (report.rows.size() >= 2) {
    const ShrinkageRow& lo = report.rows[base];
    const ShrinkageRow& hi = report.rows.back();
    if (hi.median_scaled_a > 2.0 * lo.median_scaled_a + kFeasTol ||
        hi.median_scaled_gap > 2.0 * lo.median_scaled_gap + kFeasTol)
      report.scaled_medians_bounded = false;
  }
  return report;
}

}  // namespace robglm
