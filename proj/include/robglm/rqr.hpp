#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "robglm/rng.hpp"
#include "robglm/types.hpp"

namespace robglm {

enum class OutlierFlag { kept, below, above };

// Adaptive truncation bounds for a residual sample.  `feasible` is false
// when the tail test degenerated (the bounds would have crossed) and (0,1)
// was substituted: nothing can be truncated safely.
struct CutoffResult {
  double a_tilde = 0.0;
  double b_tilde = 1.0;
  bool feasible = true;
};

// Randomized quantile residuals plus the cutoff state attached to them.
// For a discrete family z = F(y) - u f(y) with u ~ U[0,1]; continuous
// families use z = F(y) and leave `u` empty.  Under the data-generating
// parameters z is exactly uniform on [0,1].
struct RqrDiagnostics {
  VectorXd z;
  VectorXd u;
  double a_tilde = 0.0;
  double b_tilde = 1.0;
  double zeta1 = 0.05;
  double zeta2 = 0.95;
  bool cutoffs_feasible = true;
  std::vector<OutlierFlag> outlier_flags;  // below iff z < a_tilde, above iff z > b_tilde

  Eigen::Index n_below() const;
  Eigen::Index n_above() const;
  Eigen::Index n_rejected() const { return n_below() + n_above(); }
};

// Residuals at `theta`.  The second form draws the uniforms from `rng`; the
// first uses `u` verbatim (and stores it) so a later refit can partition the
// observations with the identical randomization.  Cutoffs are left at (0,1).
RqrDiagnostics rqr_compute(const ThetaEstimate& theta, const Dataset& data,
                           const FamilySpec& fam, const VectorXd& u);
RqrDiagnostics rqr_compute(const ThetaEstimate& theta, const Dataset& data,
                           const FamilySpec& fam, RngStream& rng);

// Data-driven truncation bounds.  Let F_n be the empirical cdf of z and, for
// a trial bound t, let the right-truncated cdf be F_n(z)/F_n(t) for z <= t
// (1 beyond) and the left-truncated one (F_n(z)-F_n(t))/(1-F_n(t)) for
// z >= t (0 below).  The upper bound keeps the right-truncated cdf at or
// above the diagonal on [zeta2, 1]; the lower bound keeps the left-truncated
// cdf at or below the diagonal on [0, zeta1]:
//
//   b = sup{ t : inf_{z >= zeta2} (F_n(z)/F_n(t) - z) >= 0 }
//   a = inf{ t : sup_{z <= zeta1} ((F_n(z)-F_n(t))/(1-F_n(t)) - z) <= 0 }
//
// Both reduce to a finite scan: the truncated cdfs are piecewise constant in
// t between order statistics, so candidates are {0, z_(1), ..., z_(n), 1}
// and the inner inf/sup is evaluated at the jump points in the tail window
// plus the anchor zeta.  Equality counts as feasible and the extremal
// feasible candidate is returned (largest for b, smallest for a).  Under the
// model both bounds drift to the ends at a root-n rate, so asymptotically
// nothing is trimmed.  An exactly uniform sample keeps (well within) the
// outermost observations; anchors (0,1) disable truncation and yield (0,1).
CutoffResult adaptive_cutoffs(const VectorXd& z, double zeta1 = 0.05, double zeta2 = 0.95);

// adaptive_cutoffs on diag.z; stores the bounds and refreshes outlier_flags.
void attach_cutoffs(RqrDiagnostics& diag, double zeta1 = 0.05, double zeta2 = 0.95);

// Monte Carlo check of the root-n cutoff shrinkage under a clean model.
struct ShrinkageRow {
  Eigen::Index n = 0;
  double median_a = 0.0;           // median lower cutoff
  double median_gap = 0.0;         // median of 1 - upper cutoff
  double median_scaled_a = 0.0;    // median of sqrt(n) * a
  double median_scaled_gap = 0.0;  // median of sqrt(n) * (1 - b)
  double mean_rejected = 0.0;      // mean fraction of observations outside [a, b]
  double infeasible_fraction = 0.0;
};

struct ShrinkageReport {
  std::vector<ShrinkageRow> rows;  // one per requested n, in order
  // false when a sqrt(n)-scaled median more than doubles from the first
  // n >= 400 to the largest n (the rate check failed)
  bool scaled_medians_bounded = true;
};

// For each n: generate `reps` datasets with `make_data`, estimate theta with
// `estimate`, compute residuals and cutoffs, and summarize how fast the
// bounds approach (0,1).  Replicate r at sample-size index k always sees the
// same draws regardless of scheduling.
ShrinkageReport cutoff_shrinkage_check(
    const std::vector<Eigen::Index>& n_list, int reps, std::uint64_t seed,
    const std::function<Dataset(Eigen::Index n, RngStream& rng)>& make_data,
    const std::function<ThetaEstimate(const Dataset& data)>& estimate, const FamilySpec& fam,
    double zeta1 = 0.05, double zeta2 = 0.95);

}  // namespace robglm
