#include "robglm/family.hpp"

#include <cmath>

#include "../support/test_data.hpp"
#include "doctest.h"
#include "robglm/quadrature.hpp"

using namespace robglm;

TEST_CASE("nb pmf: geometric special case mu=1 alpha=1") {
  // NB(mu=1, alpha=1) is geometric(1/2): pmf(y) = (1/2)^(y+1)
  NbDist d(1.0, 1.0);
  CHECK(d.pmf(0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(d.pmf(2) == doctest::Approx(0.125).epsilon(1e-12));
  CHECK(d.cdf(0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(d.cdf(2) == doctest::Approx(0.875).epsilon(1e-12));
  CHECK(d.quantile(0.9) == 3);   // F(2)=.875 < .9 <= F(3)=.9375
  CHECK(d.y_star(0.9) == 2);     // largest y with F(y) <= .9
  CHECK(d.y_star(0.4) == -1);    // F(0)=.5 already exceeds .4
  CHECK(d.y_star(0.5) == 0);     // ties count: F(0) <= .5
}

TEST_CASE("nb pmf closed form at y=0 and recursion agree with lgamma form") {
  for (double mu : {0.5, 3.0, 24.5}) {
    for (double alpha : {0.1, 0.8, 2.0}) {
      CHECK(nb_pmf(0, mu, alpha) ==
            doctest::Approx(std::pow(alpha * mu + 1.0, -1.0 / alpha)).epsilon(1e-12));
      NbDist d(mu, alpha);
      for (long long y : {0LL, 1LL, 5LL, 17LL, 60LL}) {
        CHECK(d.pmf(y) == doctest::Approx(nb_pmf(y, mu, alpha)).epsilon(1e-10));
      }
    }
  }
}

TEST_CASE("nb distribution normalizes and matches stated mean/variance") {
  for (double mu : {0.5, 3.0, 24.5}) {
    for (double alpha : {0.1, 0.8, 2.0}) {
      NbDist d(mu, alpha);
      long long top = d.quantile(1.0 - 1e-14) + 10;
      double s = 0.0, m1 = 0.0, m2 = 0.0;
      for (long long y = 0; y <= top; ++y) {
        double p = d.pmf(y);
        s += p;
        m1 += y * p;
        m2 += y * y * p;
      }
      CHECK(s == doctest::Approx(1.0).epsilon(1e-10));
      CHECK(m1 == doctest::Approx(mu).epsilon(1e-8));
      CHECK(m2 - m1 * m1 == doctest::Approx(mu + alpha * mu * mu).epsilon(1e-6));
    }
  }
}

TEST_CASE("nb pmf approaches poisson as alpha -> 0") {
  double mu = 4.0, alpha = 1e-6;
  for (long long y : {0LL, 2LL, 4LL, 9LL}) {
    double pois = -mu + y * std::log(mu) - std::lgamma(y + 1.0);
    CHECK(nb_log_pmf(y, mu, alpha) == doctest::Approx(pois).epsilon(1e-4));
  }
}

TEST_CASE("nb quantile and y_star are consistent with the cdf") {
  NbDist d(7.3, 0.6);
  for (double c : {0.01, 0.05, 0.3, 0.5, 0.9, 0.95, 0.999}) {
    long long q = d.quantile(c);
    CHECK(d.cdf(q) >= c);
    if (q > 0) CHECK(d.cdf(q - 1) < c);
    long long ys = d.y_star(c);
    CHECK(d.cdf(ys) <= c);
    CHECK(d.cdf(ys + 1) > c);
  }
}

TEST_CASE("nb sampling matches model moments and cdf") {
  RngStream rng(42, 7);
  double mu = 3.0, alpha = 0.8;
  const int N = 200000;
  double s = 0, s2 = 0;
  std::vector<int> counts(200, 0);
  for (int i = 0; i < N; ++i) {
    long long y = nb_sample(rng, mu, alpha);
    s += y;
    s2 += static_cast<double>(y) * y;
    if (y < 200) counts[y]++;
  }
  double mean = s / N;
  double var = s2 / N - mean * mean;
  CHECK(mean == doctest::Approx(mu).epsilon(0.01));
  CHECK(var == doctest::Approx(mu + alpha * mu * mu).epsilon(0.05));
  NbDist d(mu, alpha);
  double ecdf = 0.0;
  for (int y = 0; y <= 8; ++y) {
    ecdf += static_cast<double>(counts[y]) / N;
    CHECK(ecdf == doctest::Approx(d.cdf(y)).epsilon(0.02));
  }
}

TEST_CASE("beta density: uniform special case and symmetry") {
  // mu=0.5, alpha=0.5 gives shapes (1,1), the uniform distribution
  CHECK(beta_pdf(0.3, 0.5, 0.5) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(beta_cdf(0.3, 0.5, 0.5) == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(beta_quantile(0.77, 0.5, 0.5) == doctest::Approx(0.77).epsilon(1e-10));
  // symmetric shapes: median at 1/2
  CHECK(beta_cdf(0.5, 0.5, 0.2) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("beta quantile inverts the cdf") {
  for (double mu : {0.1, 0.5, 0.82}) {
    for (double alpha : {0.05, 0.5, 2.0}) {
      for (double y : {0.05, 0.3, 0.6, 0.95}) {
        double p = beta_cdf(y, mu, alpha);
        if (p > 1e-12 && p < 1.0 - 1e-12)
          CHECK(beta_quantile(p, mu, alpha) == doctest::Approx(y).epsilon(1e-7));
      }
    }
  }
}

TEST_CASE("beta moments via quantile quadrature match the parameterization") {
  // E g(Y) = int_0^1 g(Q(p)) dp, with Q smooth even when the density is not
  Quadrature q = gauss_legendre_01(256);
  for (double mu : {0.27, 0.5, 0.88}) {
    for (double alpha : {0.1, 0.5}) {
      double m1 = 0, m2 = 0;
      for (size_t i = 0; i < q.nodes.size(); ++i) {
        double y = beta_quantile(q.nodes[i], mu, alpha);
        m1 += q.weights[i] * y;
        m2 += q.weights[i] * y * y;
      }
      CHECK(m1 == doctest::Approx(mu).epsilon(1e-5));
      double v = mu * (1.0 - mu) * alpha / (alpha + 1.0);
      CHECK(m2 - m1 * m1 == doctest::Approx(v).epsilon(1e-4));
    }
  }
}

TEST_CASE("beta sampling matches model moments") {
  RngStream rng(42, 8);
  double mu = 0.3, alpha = 0.5;
  const int N = 200000;
  double s = 0, s2 = 0;
  for (int i = 0; i < N; ++i) {
    double y = beta_sample(rng, mu, alpha);
    s += y;
    s2 += y * y;
  }
  double mean = s / N;
  double var = s2 / N - mean * mean;
  CHECK(mean == doctest::Approx(mu).epsilon(0.01));
  CHECK(var == doctest::Approx(mu * (1 - mu) * alpha / (alpha + 1)).epsilon(0.05));
}

TEST_CASE("gauss-legendre rule integrates polynomials exactly") {
  Quadrature q = gauss_legendre_01(16);
  double s0 = 0, s5 = 0;
  for (size_t i = 0; i < q.nodes.size(); ++i) {
    s0 += q.weights[i];
    s5 += q.weights[i] * std::pow(q.nodes[i], 5);
  }
  CHECK(s0 == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(s5 == doctest::Approx(1.0 / 6.0).epsilon(1e-13));
}

TEST_CASE("golden section finds an interior minimum") {
  double x = golden_section_min([](double t) { return (t - 1.3) * (t - 1.3) + 2.0; }, -4.0, 4.0);
  CHECK(x == doctest::Approx(1.3).epsilon(1e-6));
}

TEST_CASE("ml_fit recovers negative binomial parameters on simulated data") {
  RngStream rng(99, 1);
  const int n = 500;
  MatrixXd X(n, 2);
  VectorXd beta_true(2);
  beta_true << 1.0, 0.5;
  for (int i = 0; i < n; ++i) {
    X(i, 0) = 1.0;
    X(i, 1) = rng.normal();
  }
  double alpha_true = 0.6;
  Dataset d;
  d.X = X;
  d.y = sample_response(rng, negbin_family(), X, beta_true, alpha_true);

  MlResult r = ml_fit(d, negbin_family());
  CHECK(r.converged);
  CHECK(r.theta.beta(0) == doctest::Approx(1.0).epsilon(0.15));
  CHECK(r.theta.beta(1) == doctest::Approx(0.5).epsilon(0.3));
  CHECK(std::abs(r.theta.alpha - alpha_true) < 0.2);

  ThetaEstimate truth;
  truth.beta = beta_true;
  truth.alpha = alpha_true;
  CHECK(r.loglik >= log_likelihood(d, negbin_family(), truth) - 1e-4);
}

TEST_CASE("ml_fit recovers beta regression parameters on simulated data") {
  RngStream rng(99, 2);
  const int n = 800;
  MatrixXd X(n, 2);
  VectorXd beta_true(2);
  beta_true << 0.5, -0.8;
  for (int i = 0; i < n; ++i) {
    X(i, 0) = 1.0;
    X(i, 1) = rng.normal();
  }
  double alpha_true = 0.3;
  Dataset d;
  d.X = X;
  d.y = sample_response(rng, beta_family(), X, beta_true, alpha_true);

  MlResult r = ml_fit(d, beta_family());
  CHECK(r.converged);
  CHECK(r.theta.beta(0) == doctest::Approx(0.5).epsilon(0.15));
  CHECK(r.theta.beta(1) == doctest::Approx(-0.8).epsilon(0.15));
  CHECK(std::abs(r.theta.alpha - alpha_true) < 0.1);

  ThetaEstimate truth;
  truth.beta = beta_true;
  truth.alpha = alpha_true;
  CHECK(r.loglik >= log_likelihood(d, beta_family(), truth) - 1e-4);
}

TEST_CASE("ml_fit on the hospital-stay counts") {
  // intercept-only negative binomial: the ML mean equals the sample mean
  Dataset d = testdata::los_data();
  REQUIRE(d.n() == 32);
  CHECK(d.y.sum() == doctest::Approx(783.0));

  MlResult r = ml_fit(d, negbin_family());
  CHECK(std::exp(r.theta.beta(0)) == doctest::Approx(783.0 / 32.0).epsilon(1e-3));
  CHECK(r.theta.alpha == doctest::Approx(3.08).epsilon(0.02));

  Dataset clean = testdata::los_data(true);
  REQUIRE(clean.n() == 29);
  MlResult rc = ml_fit(clean, negbin_family());
  CHECK(std::exp(rc.theta.beta(0)) == doctest::Approx(99.0 / 29.0).epsilon(1e-3));
  CHECK(std::abs(rc.theta.alpha - 0.35) < 0.05);
}

TEST_CASE("dataset validation rejects malformed input") {
  Dataset d;
  d.y = VectorXd::Constant(3, 1.0);
  d.X = MatrixXd::Ones(3, 1);
  CHECK_NOTHROW(d.validate(negbin_family()));

  Dataset neg = d;
  neg.y(1) = -2.0;
  CHECK_THROWS_AS(neg.validate(negbin_family()), data_error);

  Dataset frac = d;
  frac.y(1) = 1.5;
  CHECK_THROWS_AS(frac.validate(negbin_family()), data_error);
  CHECK_THROWS_AS(d.validate(beta_family()), data_error);  // 1.0 not inside (0,1)

  Dataset noint = d;
  noint.X(0, 0) = 2.0;
  CHECK_THROWS_AS(noint.validate(negbin_family()), data_error);

  CHECK_THROWS_AS(NbDist(3.0, 0.0), data_error);
}
