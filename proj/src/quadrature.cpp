#include "robglm/quadrature.hpp"

#include <cmath>

namespace robglm {

Quadrature gauss_legendre_01(int n) {
  Quadrature q;
  q.nodes.resize(n);
  q.weights.resize(n);
  // Newton iteration on P_n from the usual cosine initial guesses
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    double w = 2.0 / ((1.0 - x * x) * dp * dp);
    q.nodes[i] = (1.0 - x) / 2.0;
    q.weights[i] = w / 2.0;
    q.nodes[n - 1 - i] = (1.0 + x) / 2.0;
    q.weights[n - 1 - i] = w / 2.0;
  }
  return q;
}

double golden_section_min(const std::function<double(double)>& f, double a, double b,
                          double tol, int max_iter) {
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = b - g * (b - a), x2 = a + g * (b - a);
  double f1 = f(x1), f2 = f(x2);
  for (int i = 0; i < max_iter && (b - a) > tol; ++i) {
    if (f1 < f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - g * (b - a);
      f1 = f(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + g * (b - a);
      f2 = f(x2);
    }
  }
  return 0.5 * (a + b);
}

}  // namespace robglm
