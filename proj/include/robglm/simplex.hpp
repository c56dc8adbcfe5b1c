#pragma once

#include <Eigen/Dense>
#include <functional>

namespace robglm {

struct SimplexOptions {
  double step = 0.1;        // initial simplex edge (per coordinate, scaled)
  double tol = 1e-8;        // stop when simplex diameter drops below this
  int max_iter_per_dim = 400;  // iteration cap is 400 * dimension
};

struct SimplexResult {
  Eigen::VectorXd x;
  double fmin = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Nelder-Mead downhill simplex with the standard reflection/expansion/
// contraction/shrink coefficients (1, 2, 0.5, 0.5).  Deterministic given
// the start point.
SimplexResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                          const Eigen::VectorXd& start,
                          const SimplexOptions& opt = {});

}  // namespace robglm
