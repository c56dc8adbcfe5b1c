#include "robglm/cml.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "doctest.h"
#include "robglm/family.hpp"
#include "robglm/rqr.hpp"

using namespace robglm;

namespace {

Dataset nb_dataset(Eigen::Index n, RngStream& rng, const VectorXd& beta, double alpha) {
  MatrixXd X(n, beta.size());
  VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    X(i, 0) = 1.0;
    for (Eigen::Index j = 1; j < beta.size(); ++j) X(i, j) = rng.normal();
    y(i) = static_cast<double>(nb_sample(rng, std::exp(X.row(i) * beta), alpha));
  }
  return Dataset{y, X};
}

ThetaEstimate make_theta(std::initializer_list<double> beta, double alpha) {
  ThetaEstimate t;
  t.beta = VectorXd(static_cast<Eigen::Index>(beta.size()));
  Eigen::Index j = 0;
  for (double b : beta) t.beta(j++) = b;
  t.alpha = alpha;
  return t;
}

// Intercept-only geometric layout: mu = exp(0) = 1, alpha = 1 gives
// f(y) = 2^-(y+1), F(y) = 1 - 2^-(y+1), all dyadic and exact in binary.
Dataset geometric_rows(std::initializer_list<double> ys) {
  VectorXd y(static_cast<Eigen::Index>(ys.size()));
  Eigen::Index i = 0;
  for (double v : ys) y(i++) = v;
  return Dataset{y, MatrixXd::Ones(y.size(), 1)};
}

}  // namespace

TEST_CASE("window support on a hand-checkable geometric case") {
  NbDist dist(1.0, 1.0);  // geometric, p = 1/2
  ConditionalSupport s = discrete_support(0.4, 0.9, dist);

  // F(0)=.5, F(1)=.75, F(2)=.875: the window [0.4, 0.9] fully keeps {1, 2},
  // keeps 0.2 of the cdf step at 0 and 0.4 of the step at 3.
  CHECK(s.T_a == 1);
  CHECK(s.T_b == 2);
  CHECK(s.upper_bounded);
  CHECK(s.t_a == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(s.t_b == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(s.Q == doctest::Approx(0.5).epsilon(1e-12));

  CHECK(s.weight(0) == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(s.weight(1) == 1.0);
  CHECK(s.weight(2) == 1.0);
  CHECK(s.weight(3) == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(s.weight(4) == 0.0);
  CHECK(s.weight(40) == 0.0);
}

TEST_CASE("window landing inside a single cdf step") {
  // Both cutoffs fall in the step at y=1: F(0)=.5 < .55 < .7 < F(1)=.75.
  ConditionalSupport s = discrete_support(0.55, 0.7, 1.0, 1.0);
  CHECK(s.overlap());
  CHECK(s.T_a == 2);
  CHECK(s.T_b == 0);
  CHECK(s.t_a == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(s.t_b == doctest::Approx(0.2).epsilon(1e-12));
  // Single surviving point carries the difference of the two edge fractions.
  CHECK(s.weight(1) == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(s.weight(0) == 0.0);
  CHECK(s.weight(2) == 0.0);
  CHECK(s.Q == doctest::Approx(0.15).epsilon(1e-12));
}

TEST_CASE("degenerate window edges") {
  SUBCASE("a=0 keeps the origin with full weight") {
    ConditionalSupport s = discrete_support(0.0, 0.7, 1.0, 1.0);
    CHECK(s.T_a == 1);
    CHECK(s.t_a == 1.0);
    CHECK(s.weight(0) == 1.0);
  }
  SUBCASE("b=1 removes the upper truncation") {
    ConditionalSupport s = discrete_support(0.4, 1.0, 1.0, 1.0);
    CHECK_FALSE(s.upper_bounded);
    CHECK(s.weight(1000) == 1.0);
    CHECK(s.Q == doctest::Approx(0.6).epsilon(1e-12));
  }
  SUBCASE("trivial window keeps everything and normalizes to one") {
    ConditionalSupport s = discrete_support(0.0, 1.0, 3.7, 0.4);
    CHECK(s.Q == 1.0);
    for (long long y : {0LL, 1LL, 7LL, 100LL}) CHECK(s.weight(y) == 1.0);
  }
  SUBCASE("cutoff hitting a cdf value exactly zeroes the edge point") {
    // b = F(1) = 0.75 exactly (dyadic), so t_b = (F(2)-b)/f(2) = 1 exactly
    // and the upper edge point y = T_b + 1 = 2 is fully rejected.
    ConditionalSupport s = discrete_support(0.1, 0.75, 1.0, 1.0);
    CHECK(s.T_b == 1);
    CHECK(s.t_b == 1.0);
    CHECK(s.weight(2) == 0.0);
  }
}

TEST_CASE("normalizer equals window mass and the conditional pmf sums to one") {
  RngStream rng(311, 0);
  for (int trial = 0; trial < 60; ++trial) {
    double mu = std::exp(rng.normal() * 1.2);               // ~[0.05, 20]
    double alpha = 0.05 + 2.5 * rng.uniform();
    double a = 0.5 * rng.uniform();                          // [0, .5)
    double b = 0.5 + 0.5 * rng.uniform();                    // [.5, 1)
    NbDist dist(mu, alpha);
    ConditionalSupport s = discrete_support(a, b, dist);

    CHECK(s.Q == doctest::Approx(b - a).epsilon(1e-10));

    double sum = 0.0;
    long long top = s.upper_bounded ? s.T_b + 1 : dist.quantile(1.0 - 1e-14);
    for (long long y = std::max(0LL, s.T_a - 1); y <= top; ++y)
      sum += dist.pmf(y) * s.weight(y) / s.Q;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("kept fraction at y equals the measure of u that lands z in the window") {
  // z = F(y) - u f(y) lies in [a, b] exactly when
  // u is in [(F(y)-b)/f(y), (F(y)-a)/f(y)] intersected with [0, 1]; the
  // length of that interval must reproduce weight(y) for every y.
  RngStream rng(317, 0);
  for (int trial = 0; trial < 40; ++trial) {
    double mu = std::exp(rng.normal());
    double alpha = 0.1 + 2.0 * rng.uniform();
    double a = 0.45 * rng.uniform();
    double b = 0.55 + 0.45 * rng.uniform();
    NbDist dist(mu, alpha);
    ConditionalSupport s = discrete_support(a, b, dist);

    long long top = (s.upper_bounded ? s.T_b : dist.y_star(b)) + 3;
    for (long long y = 0; y <= top; ++y) {
      double f = dist.pmf(y), F = dist.cdf(y);
      double lo = std::max(0.0, (F - b) / f);
      double hi = std::min(1.0, (F - a) / f);
      double len = std::max(0.0, hi - lo);
      CHECK(len == doctest::Approx(s.weight(y)).epsilon(1e-9));
    }
  }
}

TEST_CASE("objective matches a hand-expanded weighted sum") {
  Dataset data = geometric_rows({0, 1, 2, 3, 5});
  ThetaEstimate theta = make_theta({0.0}, 1.0);
  FamilySpec fam = negbin_family();
  double a = 0.4, b = 0.9;

  VectorXd w = keep_weights(theta, data, a, b, fam);
  CHECK(w(0) == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(w(1) == 1.0);
  CHECK(w(2) == 1.0);
  CHECK(w(3) == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(w(4) == 0.0);

  // f(y) = 2^-(y+1), Q = 0.5, edge weights 0.2 and 0.4; the rejected row
  // contributes nothing.
  auto term = [&](double y, double wt) {
    return wt * ((y + 1) * std::log(0.5) + std::log(wt > 0.0 && wt < 1.0 ? wt : 1.0) -
                 std::log(0.5));
  };
  double expect = term(0, 0.2) + term(1, 1.0) + term(2, 1.0) + term(3, 0.4);
  CHECK(mcml_objective(theta, data, a, b, w, fam) == doctest::Approx(expect).epsilon(1e-12));

  SUBCASE("trivial window reduces to the unconditional log-likelihood") {
    VectorXd ones = keep_weights(theta, data, 0.0, 1.0, fam);
    CHECK(ones.minCoeff() == 1.0);
    CHECK(mcml_objective(theta, data, 0.0, 1.0, ones, fam) ==
          doctest::Approx(log_likelihood(data, fam, theta)).epsilon(1e-12));
  }

  SUBCASE("per-point conditional log-density agrees with the pieces") {
    VectorXd x = VectorXd::Ones(1);
    CHECK(conditional_logdensity(1.0, x, theta, a, b, fam) ==
          doctest::Approx(std::log(0.25) - std::log(0.5)).epsilon(1e-12));
    CHECK(conditional_logdensity(0.0, x, theta, a, b, fam) ==
          doctest::Approx(std::log(0.5) + std::log(0.2) - std::log(0.5)).epsilon(1e-12));
    CHECK(std::isinf(conditional_logdensity(5.0, x, theta, a, b, fam)));
  }

  SUBCASE("anchored point leaving the running support sinks the objective") {
    // At beta = -5 the mean collapses toward zero and the window holds only
    // tiny counts, so the anchored rows at y = 2, 3 fall outside it.
    ThetaEstimate off = make_theta({-5.0}, 1.0);
    double v = mcml_objective(off, data, a, b, w, fam);
    CHECK(std::isinf(v));
    CHECK(v < 0.0);
  }
}

TEST_CASE("continuous window is a plain truncation") {
  VectorXd y(4);
  y << 0.12, 0.43, 0.71, 0.97;
  Dataset data{y, MatrixXd::Ones(4, 1)};
  ThetaEstimate theta = make_theta({0.3}, 0.5);  // mu = logistic(0.3)
  FamilySpec fam = beta_family();
  double mu = fam.mean(0.3);
  double a = 0.1, b = 0.9;

  VectorXd w = keep_weights(theta, data, a, b, fam);
  double expect = 0.0;
  int kept = 0;
  for (Eigen::Index i = 0; i < 4; ++i) {
    double z = beta_cdf(y(i), mu, theta.alpha);
    bool in = z >= a && z <= b;
    CHECK(w(i) == (in ? 1.0 : 0.0));
    if (in) {
      expect += beta_log_pdf(y(i), mu, theta.alpha) - std::log(b - a);
      ++kept;
    }
  }
  CHECK(kept >= 1);
  CHECK(kept <= 3);  // the extreme response must fall outside
  CHECK(mcml_objective(theta, data, a, b, w, fam) == doctest::Approx(expect).epsilon(1e-12));

  CHECK(conditional_logdensity(0.43, VectorXd::Ones(1), theta, a, b, fam) ==
        doctest::Approx(beta_log_pdf(0.43, mu, theta.alpha) - std::log(0.8)).epsilon(1e-12));
}

TEST_CASE("trivial cutoffs reproduce the maximum-likelihood fit") {
  FamilySpec fam = negbin_family();
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    RngStream rng(seed, 0);
    VectorXd beta(3);
    beta << 1.0, 0.4, -0.3;
    Dataset data = nb_dataset(150, rng, beta, 0.6);

    MlResult ml = ml_fit(data, fam);
    RqrDiagnostics diag = rqr_compute(ml.theta, data, fam, rng);
    attach_cutoffs(diag, 0.0, 1.0);
    CHECK(diag.a_tilde == 0.0);
    CHECK(diag.b_tilde == 1.0);

    CmlResult cml = cml_fit(data, fam, ml.theta, diag);
    CHECK_FALSE(cml.diverged);
    for (Eigen::Index j = 0; j < 3; ++j)
      CHECK(cml.theta.beta(j) == doctest::Approx(ml.theta.beta(j)).epsilon(1e-6));
    CHECK(cml.theta.alpha == doctest::Approx(ml.theta.alpha).epsilon(1e-5));
    // With no truncation the objective *is* the log-likelihood.
    CHECK(cml.objective ==
          doctest::Approx(log_likelihood(data, fam, cml.theta)).epsilon(1e-10));
  }
}

TEST_CASE("refit never scores below its start and flags runaway data") {
  FamilySpec fam = negbin_family();

  SUBCASE("degenerate all-zero response walks the slope out of bounds") {
    Dataset data{VectorXd::Zero(60), MatrixXd::Ones(60, 1)};
    ThetaEstimate start = make_theta({0.5}, 1.0);
    RngStream rng(5, 0);
    RqrDiagnostics diag = rqr_compute(start, data, fam, rng);
    attach_cutoffs(diag, 0.05, 0.95);
    CmlResult r = cml_fit(data, fam, start, diag);
    CHECK(r.diverged);
    CHECK(r.theta.beta(0) == start.beta(0));  // falls back to the start
  }

  SUBCASE("well-posed refit improves the anchored objective") {
    RngStream rng(99, 0);
    VectorXd beta(2);
    beta << 1.2, 0.5;
    Dataset data = nb_dataset(200, rng, beta, 0.8);
    ThetaEstimate start = ml_start(data, fam);
    RqrDiagnostics diag = rqr_compute(start, data, fam, rng);
    attach_cutoffs(diag, 0.05, 0.95);

    CmlResult r = cml_fit(data, fam, start, diag);
    CHECK_FALSE(r.diverged);
    VectorXd w = keep_weights(start, data, diag.a_tilde, diag.b_tilde, fam);
    double f_start = mcml_objective(start, data, diag.a_tilde, diag.b_tilde, w, fam);
    CHECK(r.objective >= f_start - 1e-9);
  }
}

TEST_CASE("pipeline is deterministic and thread-count invariant") {
  RngStream rng(42, 0);
  VectorXd beta(2);
  beta << 1.0, 0.5;
  Dataset data = nb_dataset(120, rng, beta, 0.7);

  PipelineConfig cfg;
  cfg.seed = 7;
  cfg.replicates = 6;
  cfg.compute_se = false;

  cfg.threads = 1;
  FitReport one = cml_pipeline(data, negbin_family(), cfg);
  cfg.threads = 4;
  FitReport four = cml_pipeline(data, negbin_family(), cfg);

  CHECK(one.theta.beta == four.theta.beta);  // bitwise: scheduling cannot leak in
  CHECK(one.theta.alpha == four.theta.alpha);
  CHECK(one.boundary.a_bar == four.boundary.a_bar);
  CHECK(one.boundary.b_bar == four.boundary.b_bar);
  REQUIRE(one.replicates.size() == 6);
  REQUIRE(four.replicates.size() == 6);
  for (std::size_t r = 0; r < 6; ++r) {
    CHECK(one.replicates[r].theta.beta == four.replicates[r].theta.beta);
    REQUIRE(one.replicates[r].iterations.size() == 2);  // default refit rounds
    CHECK(one.replicates[r].iterations.back().a == four.replicates[r].iterations.back().a);
  }
}

TEST_CASE("pipeline recovers clean generating parameters") {
  RngStream rng(2024, 0);
  VectorXd beta(3);
  beta << 1.0, 0.4, -0.3;
  Dataset data = nb_dataset(300, rng, beta, 0.5);

  PipelineConfig cfg;
  cfg.seed = 3;
  cfg.replicates = 8;
  FitReport rep = cml_pipeline(data, negbin_family(), cfg);

  CHECK_FALSE(rep.any_diverged);
  for (Eigen::Index j = 0; j < 3; ++j)
    CHECK(std::abs(rep.theta.beta(j) - beta(j)) < 0.25);
  CHECK(rep.theta.alpha > 0.2);
  CHECK(rep.theta.alpha < 1.0);

  // Window bookkeeping is a partition: no index lands in two buckets, edge
  // weights are proper fractions, and the averaged window is ordered.
  const BoundaryReport& bd = rep.boundary;
  CHECK(bd.a_bar < bd.b_bar);
  std::vector<Eigen::Index> all;
  all.insert(all.end(), bd.rejected.begin(), bd.rejected.end());
  all.insert(all.end(), bd.lower_edge.begin(), bd.lower_edge.end());
  all.insert(all.end(), bd.upper_edge.begin(), bd.upper_edge.end());
  std::sort(all.begin(), all.end());
  CHECK(std::adjacent_find(all.begin(), all.end()) == all.end());
  if (!bd.lower_edge.empty()) {
    CHECK(bd.mean_lower_weight > 0.0);
    CHECK(bd.mean_lower_weight < 1.0);
  }
  if (!bd.upper_edge.empty()) {
    CHECK(bd.mean_upper_weight > 0.0);
    CHECK(bd.mean_upper_weight < 1.0);
  }

  REQUIRE(rep.se.ok);
  REQUIRE(rep.se.se.size() == 4);
  CHECK(rep.se.se.minCoeff() > 0.0);
  CHECK(rep.se.se.maxCoeff() < 1.0);
}

TEST_CASE("continuous responses run a single replicate") {
  RngStream rng(8, 0);
  Eigen::Index n = 80;
  MatrixXd X = MatrixXd::Ones(n, 2);
  VectorXd y(n);
  FamilySpec fam = beta_family();
  for (Eigen::Index i = 0; i < n; ++i) {
    X(i, 1) = rng.normal();
    y(i) = beta_sample(rng, fam.mean(0.2 + 0.5 * X(i, 1)), 0.3);
  }
  Dataset data{y, X};

  PipelineConfig cfg;
  cfg.seed = 1;
  cfg.replicates = 5;  // ignored: there is no randomization to average over
  cfg.compute_se = false;
  FitReport rep = cml_pipeline(data, fam, cfg);
  CHECK(rep.config.replicates == 1);
  CHECK(rep.replicates.size() == 1);
  CHECK(std::abs(rep.theta.beta(1) - 0.5) < 0.3);
}

TEST_CASE("standard errors invert a known quadratic curvature") {
  MatrixXd A(2, 2);
  A << 4.0, 1.0, 1.0, 2.0;
  VectorXd m(2);
  m << 0.7, -0.2;
  auto f = [&](const VectorXd& v) { return 0.5 * (v - m).dot(A * (v - m)) + 3.0; };

  SeResult r = se_from_negloglik(f, m);
  REQUIRE(r.ok);
  MatrixXd cov = A.inverse();
  CHECK(r.se(0) == doctest::Approx(std::sqrt(cov(0, 0))).epsilon(1e-6));
  CHECK(r.se(1) == doctest::Approx(std::sqrt(cov(1, 1))).epsilon(1e-6));

  SUBCASE("saddle curvature is reported, not returned as numbers") {
    auto g = [&](const VectorXd& v) { return v(0) * v(0) - v(1) * v(1); };
    SeResult bad = se_from_negloglik(g, VectorXd::Zero(2));
    CHECK_FALSE(bad.ok);
    CHECK_FALSE(bad.message.empty());
  }
}

TEST_CASE("window and size preconditions throw") {
  FamilySpec fam = negbin_family();
  Dataset data = geometric_rows({0, 1, 2, 3, 5});
  ThetaEstimate theta = make_theta({0.0}, 1.0);

  CHECK_THROWS_AS(discrete_support(0.9, 0.4, 1.0, 1.0), data_error);
  CHECK_THROWS_AS(discrete_support(-0.1, 0.9, 1.0, 1.0), data_error);
  CHECK_THROWS_AS(discrete_support(0.1, 1.1, 1.0, 1.0), data_error);
  CHECK_THROWS_AS(discrete_support(0.5, 0.5, 1.0, 1.0), data_error);

  CHECK_THROWS_AS(mcml_objective(theta, data, 0.4, 0.9, VectorXd::Ones(3), fam), data_error);
  VectorXd bad = VectorXd::Ones(5);
  bad(2) = 1.5;
  CHECK_THROWS_AS(mcml_objective(theta, data, 0.4, 0.9, bad, fam), data_error);

  PipelineConfig cfg;
  CHECK_THROWS_AS(cml_pipeline(geometric_rows({1, 2, 3}), fam, cfg), data_error);
  cfg.iterations = 0;
  RngStream rng(1, 0);
  Dataset big = nb_dataset(40, rng, VectorXd::Ones(1), 0.5);
  CHECK_THROWS_AS(cml_pipeline(big, fam, cfg), data_error);
}
