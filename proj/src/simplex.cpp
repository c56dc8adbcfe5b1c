#include "robglm/simplex.hpp"

#include <algorithm>
#include <limits>
#include <vector>

namespace robglm {

namespace {

double simplex_diameter(const std::vector<Eigen::VectorXd>& pts) {
  double d = 0.0;
  for (size_t i = 1; i < pts.size(); ++i)
    d = std::max(d, (pts[i] - pts[0]).norm());
  return d;
}

}  // namespace

SimplexResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                          const Eigen::VectorXd& start,
                          const SimplexOptions& opt) {
  const int n = static_cast<int>(start.size());
  const int max_iter = opt.max_iter_per_dim * std::max(n, 1);

  std::vector<Eigen::VectorXd> x(n + 1, start);
  std::vector<double> fx(n + 1);
  for (int i = 0; i < n; ++i) {
    double h = opt.step * (1.0 + std::abs(start(i)));
    x[i + 1](i) += h;
  }
  for (int i = 0; i <= n; ++i) fx[i] = f(x[i]);

  SimplexResult res;
  int iter = 0;
  while (iter < max_iter) {
    // order so that fx[order[0]] is best, fx[order[n]] worst
    std::vector<int> order(n + 1);
    for (int i = 0; i <= n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](int a, int b) { return fx[a] < fx[b]; });

    if (simplex_diameter(x) < opt.tol) {
      res.converged = true;
      break;
    }
    ++iter;

    int best = order[0], worst = order[n], second = order[n - 1];

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (int i = 0; i <= n; ++i)
      if (i != worst) centroid += x[i];
    centroid /= n;

    Eigen::VectorXd xr = centroid + (centroid - x[worst]);
    double fr = f(xr);

    if (fr < fx[best]) {
      Eigen::VectorXd xe = centroid + 2.0 * (centroid - x[worst]);
      double fe = f(xe);
      if (fe < fr) {
        x[worst] = xe;
        fx[worst] = fe;
      } else {
        x[worst] = xr;
        fx[worst] = fr;
      }
    } else if (fr < fx[second]) {
      x[worst] = xr;
      fx[worst] = fr;
    } else {
      bool outside = fr < fx[worst];
      Eigen::VectorXd xc;
      if (outside)
        xc = centroid + 0.5 * (xr - centroid);
      else
        xc = centroid - 0.5 * (centroid - x[worst]);
      double fc = f(xc);
      if (fc < std::min(fr, fx[worst])) {
        x[worst] = xc;
        fx[worst] = fc;
      } else {
        // shrink toward the best vertex
        for (int i = 0; i <= n; ++i) {
          if (i == best) continue;
          x[i] = x[best] + 0.5 * (x[i] - x[best]);
          fx[i] = f(x[i]);
        }
      }
    }
  }

  int bi = 0;
  for (int i = 1; i <= n; ++i)
    if (fx[i] < fx[bi]) bi = i;
  res.x = x[bi];
  res.fmin = fx[bi];
  res.iterations = iter;
  return res;
}

}  // namespace robglm
