#pragma once

#include <functional>
#include <vector>

namespace robglm {

struct Quadrature {
  std::vector<double> nodes;
  std::vector<double> weights;
};

// Gauss-Legendre rule mapped to (0,1)
Quadrature gauss_legendre_01(int n);

// golden-section minimum of a unimodal function on [a, b]
double golden_section_min(const std::function<double(double)>& f, double a, double b,
                          double tol = 1e-9, int max_iter = 200);

}  // namespace robglm
