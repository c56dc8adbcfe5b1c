#pragma once

#include "robglm/types.hpp"

namespace robglm {

// Rank-concordance objective: the fraction of ordered pairs (i != j) whose
// linear-index difference and response difference have product >= 0, so ties
// on either axis count as concordant. O(n^2) reference implementation.
double tau_objective(const VectorXd& gamma, const Dataset& data);

// Same value as tau_objective, computed by a sort-and-count sweep in
// O(n log n); mrc_fit evaluates candidates through this path since the grid
// search calls the objective thousands of times.
double tau_objective_fast(const VectorXd& gamma, const Dataset& data);

struct MrcConfig {
  double coarse_step_deg = 0.5;  // angle spacing of the first pass per subspace
  int refinements = 3;           // factor-10 local refinements after the pass
  double tol = 1e-10;            // stop when a full sweep gains less than this
  int max_sweeps = 20;
};

// Direction of the scaled slopes, estimated by maximizing the concordance
// objective over the unit sphere: cyclic sweeps of angle grids over the 2-D
// subspaces spanned by the current direction and each coordinate axis,
// starting from the best signed axis. Deterministic. Throws data_error when
// the responses are all tied.
VectorXd mrc_fit(const Dataset& data, const MrcConfig& cfg = {});

}  // namespace robglm
