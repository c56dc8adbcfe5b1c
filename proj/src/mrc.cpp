#include "robglm/mrc.hpp"

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "robglm/family.hpp"
#include "robglm/init.hpp"

namespace robglm {

double tau_objective(const VectorXd& gamma, const Dataset& data) {
  const Eigen::Index n = data.n(), d = data.d();
  if (gamma.size() != d) throw data_error("tau_objective: gamma length must match slope count");
  if (n < 2) throw data_error("tau_objective: need at least two observations");
  VectorXd v = data.X.rightCols(d) * gamma;
  const double* y = data.y.data();
  long long good = 0;
  for (Eigen::Index i = 0; i + 1 < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j)
      good += ((v(j) - v(i)) * (y[j] - y[i]) >= 0.0);
  return 2.0 * static_cast<double>(good) / (static_cast<double>(n) * static_cast<double>(n - 1));
}

namespace {

// Evaluates the same objective as tau_objective in O(n log n): sort by the
// linear index and count strictly discordant pairs with a Fenwick tree over
// response ranks. Pairs tied in v are grouped so they never enter the count,
// matching the >= 0 convention of the reference scan exactly.
class TauCounter {
 public:
  explicit TauCounter(const Dataset& data)
      : Xs_(data.X.rightCols(data.d())), n_(data.n()) {
    std::vector<double> ys(data.y.data(), data.y.data() + n_);
    std::vector<double> sorted = ys;
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    nrank_ = static_cast<int>(sorted.size());
    yrank_.resize(static_cast<size_t>(n_));
    for (Eigen::Index i = 0; i < n_; ++i)
      yrank_[static_cast<size_t>(i)] = static_cast<int>(
          std::lower_bound(sorted.begin(), sorted.end(), ys[static_cast<size_t>(i)]) -
          sorted.begin());
    bit_.resize(static_cast<size_t>(nrank_) + 1);
    order_.resize(static_cast<size_t>(n_));
  }

  double tau(const VectorXd& gamma) const {
    VectorXd v = Xs_ * gamma;
    for (Eigen::Index i = 0; i < n_; ++i)
      order_[static_cast<size_t>(i)] = {v(i), yrank_[static_cast<size_t>(i)]};
    std::sort(order_.begin(), order_.end());
    std::fill(bit_.begin(), bit_.end(), 0LL);
    long long discordant = 0, seen = 0;
    size_t i = 0;
    while (i < order_.size()) {
      size_t j = i;
      while (j < order_.size() && order_[j].first == order_[i].first) ++j;
      // v-ties inside [i, j) have product 0 and never count as discordant
      for (size_t k = i; k < j; ++k)
        discordant += seen - count_le(order_[k].second);
      for (size_t k = i; k < j; ++k) {
        add(order_[k].second);
        ++seen;
      }
      i = j;
    }
    double pairs = 0.5 * static_cast<double>(n_) * static_cast<double>(n_ - 1);
    return 1.0 - static_cast<double>(discordant) / pairs;
  }

 private:
  // Fenwick tree over response ranks; count_le counts inserted ranks <= r
  void add(int r) const {
    for (int k = r + 1; k <= nrank_; k += k & -k) bit_[static_cast<size_t>(k)] += 1;
  }
  long long count_le(int r) const {
    long long s = 0;
    for (int k = r + 1; k > 0; k -= k & -k) s += bit_[static_cast<size_t>(k)];
    return s;
  }

  Eigen::MatrixXd Xs_;
  Eigen::Index n_;
  int nrank_ = 0;
  std::vector<int> yrank_;
  mutable std::vector<long long> bit_;
  mutable std::vector<std::pair<double, int>> order_;
};

// Slope direction of a quick unconditional fit on the rows that carry no
// covariate leverage, as an extra deterministic starting candidate.
bool clean_subsample_direction(const Dataset& data, const FamilySpec& fam, VectorXd* out) {
  const Eigen::Index n = data.n(), d = data.d();
  try {
    std::vector<Eigen::Index> keep;
    keep.reserve(static_cast<size_t>(n));
    MatrixXd W(n, d);
    for (Eigen::Index k = 0; k < d; ++k) W.col(k) = mad_weights(data.X.col(k + 1));
    for (Eigen::Index i = 0; i < n; ++i)
      if (W.row(i).minCoeff() > 0.5) keep.push_back(i);
    if (keep.size() < static_cast<size_t>(std::max<Eigen::Index>(10, d + 3))) return false;
    Dataset sub;
    sub.y.resize(static_cast<Eigen::Index>(keep.size()));
    sub.X.resize(static_cast<Eigen::Index>(keep.size()), data.p());
    for (size_t r = 0; r < keep.size(); ++r) {
      sub.y(static_cast<Eigen::Index>(r)) = data.y(keep[r]);
      sub.X.row(static_cast<Eigen::Index>(r)) = data.X.row(keep[r]);
    }
    VectorXd g = ml_start(sub, fam).beta.tail(d);
    double nrm = g.norm();
    if (!std::isfinite(nrm) || nrm < 1e-12) return false;
    *out = g / nrm;
    return true;
  } catch (const std::exception&) {
    return false;
  }
}

// With two slope columns the direction space is a circle and the objective is
// piecewise constant between the angles where some pair's index difference
// changes sign, so evaluating every plateau midpoint finds the exact maximum.
// Used for small instances; the cyclic grid handles everything else.
VectorXd circle_exact(const Dataset& data, const TauCounter& tc) {
  const Eigen::Index n = data.n();
  std::vector<double> cuts;
  cuts.reserve(static_cast<size_t>(n) * static_cast<size_t>(n - 1));
  for (Eigen::Index i = 0; i + 1 < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) {
      double d1 = data.X(i, 1) - data.X(j, 1), d2 = data.X(i, 2) - data.X(j, 2);
      if (d1 == 0.0 && d2 == 0.0) continue;
      double t = std::atan2(-d1, d2);
      cuts.push_back(t);
      cuts.push_back(t > 0 ? t - M_PI : t + M_PI);
    }
  VectorXd gamma(2);
  gamma << 1.0, 0.0;
  if (cuts.empty()) return gamma;  // all covariate rows identical
  std::sort(cuts.begin(), cuts.end());
  double best = -1.0;
  VectorXd g(2);
  for (size_t k = 0; k < cuts.size(); ++k) {
    double hi = k + 1 < cuts.size() ? cuts[k + 1] : cuts[0] + 2 * M_PI;
    double mid = 0.5 * (cuts[k] + hi);
    g << std::cos(mid), std::sin(mid);
    double t = tc.tau(g);
    if (t > best) {
      best = t;
      gamma = g;
    }
  }
  return gamma;
}

}  // namespace

double tau_objective_fast(const VectorXd& gamma, const Dataset& data) {
  if (gamma.size() != data.d())
    throw data_error("tau_objective_fast: gamma length must match slope count");
  if (data.n() < 2) throw data_error("tau_objective_fast: need at least two observations");
  return TauCounter(data).tau(gamma);
}

VectorXd mrc_fit(const Dataset& data, const MrcConfig& cfg) {
  const Eigen::Index d = data.d();
  if (d < 1) throw data_error("mrc_fit: need at least one slope column");
  if (data.n() < 2) throw data_error("mrc_fit: need at least two observations");
  if (data.y.minCoeff() == data.y.maxCoeff())
    throw data_error("mrc_fit: responses are all tied, no ranking information");

  TauCounter tc(data);

  if (d == 1) {
    VectorXd g(1);
    g << 1.0;
    return tc.tau(g) >= tc.tau(-g) ? g : -g;
  }

  VectorXd gamma;
  if (d == 2 && data.n() <= 64) {
    gamma = circle_exact(data, tc);
  } else {
    // starting direction: best signed coordinate axis, challenged by the
    // slope direction of a quick fit on the leverage-free rows
    gamma = VectorXd::Zero(d);
    double best = -1.0;
    for (Eigen::Index k = 0; k < d; ++k) {
      for (double s : {1.0, -1.0}) {
        VectorXd g = VectorXd::Zero(d);
        g(k) = s;
        double t = tc.tau(g);
        if (t > best) {
          best = t;
          gamma = g;
        }
      }
    }
    {
      VectorXd g;
      const FamilySpec fam = data.y.minCoeff() > 0.0 && data.y.maxCoeff() < 1.0
                                 ? beta_family()
                                 : negbin_family();
      if (clean_subsample_direction(data, fam, &g)) {
        double t = tc.tau(g);
        if (t > best) {
          best = t;
          gamma = g;
        }
      }
    }

    const double step0 = cfg.coarse_step_deg * M_PI / 180.0;
    for (int sweep = 0; sweep < cfg.max_sweeps; ++sweep) {
      double sweep_start = best;
      for (Eigen::Index k = 0; k < d; ++k) {
        VectorXd w = VectorXd::Zero(d);
        w(k) = 1.0;
        w -= w.dot(gamma) * gamma;
        double wn = w.norm();
        if (wn < 1e-10) continue;  // current direction already on this axis
        w /= wn;
        auto candidate = [&](double phi) -> VectorXd {
          return (std::cos(phi) * gamma + std::sin(phi) * w).normalized();
        };
        // full-circle coarse pass covering both orientations
        std::vector<std::pair<double, double>> coarse;  // (-tau, phi)
        coarse.reserve(static_cast<size_t>(2.0 * M_PI / step0) + 2);
        for (double phi = -M_PI; phi < M_PI; phi += step0)
          coarse.emplace_back(-tc.tau(candidate(phi)), phi);
        // refine around the several best coarse angles, not just the top one:
        // the objective is a step function and a narrow top plateau is often
        // adjacent to the runner-up rather than the winner
        size_t kbest = std::min<size_t>(6, coarse.size());
        std::partial_sort(coarse.begin(), coarse.begin() + static_cast<long>(kbest),
                          coarse.end());
        double phi_best = 0.0, local_best = best;
        for (size_t c = 0; c < kbest; ++c) {
          double phi_c = coarse[c].second, t_c = -coarse[c].first, step = step0;
          for (int r = 0; r < cfg.refinements; ++r) {
            double lo = phi_c - step;
            step /= 10.0;
            for (int q = 0; q <= 20; ++q) {
              double phi = lo + step * static_cast<double>(q);
              double t = tc.tau(candidate(phi));
              if (t > t_c) {
                t_c = t;
                phi_c = phi;
              }
            }
          }
          if (t_c > local_best) {
            local_best = t_c;
            phi_best = phi_c;
          }
        }
        if (local_best > best) {
          gamma = candidate(phi_best);
          best = local_best;
        }
      }
      if (best - sweep_start < cfg.tol) break;
    }
  }

  // orientation: keep the sign with the larger objective; on an exact tie
  // point the first nonzero coordinate upward
  double tp = tc.tau(gamma), tm = tc.tau(-gamma);
  if (tm > tp) {
    gamma = -gamma;
  } else if (tm == tp) {
    for (Eigen::Index k = 0; k < d; ++k) {
      if (std::abs(gamma(k)) > 1e-12) {
        if (gamma(k) < 0.0) gamma = -gamma;
        break;
      }
    }
  }
  return gamma.normalized();
}

}  // namespace robglm
