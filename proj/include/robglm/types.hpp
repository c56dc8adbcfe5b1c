#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

namespace robglm {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Model families.  Each family carries a fixed link for the mean:
// negative binomial uses exp, beta regression uses the logistic.
enum class Family { NegBin, Beta };

struct FamilySpec {
  Family kind = Family::NegBin;

  bool discrete() const { return kind == Family::NegBin; }

  // h(u): linear predictor -> mean
  double mean(double u) const {
    if (kind == Family::NegBin) return std::exp(u);
    return 1.0 / (1.0 + std::exp(-u));
  }

  // h^{-1}(mu)
  double linpred(double mu) const {
    if (kind == Family::NegBin) return std::log(mu);
    return std::log(mu / (1.0 - mu));
  }
};

inline FamilySpec negbin_family() { return FamilySpec{Family::NegBin}; }
inline FamilySpec beta_family() { return FamilySpec{Family::Beta}; }

// Regression data.  X is n x p with an intercept column of ones first;
// slope covariates (columns 2..p) are the "x*" part of the model.
struct Dataset {
  VectorXd y;
  MatrixXd X;

  Eigen::Index n() const { return y.size(); }
  Eigen::Index p() const { return X.cols(); }

  // number of slope covariates
  Eigen::Index d() const { return X.cols() - 1; }

  void validate(const FamilySpec& fam) const;
};

// Full parameter vector (beta, alpha) with the polar decomposition of the
// slope part used by the initial estimator: beta = (beta1, eta * gamma)
// where eta = |beta*| and gamma is a unit vector.
struct ThetaEstimate {
  VectorXd beta;   // length p: intercept first
  double alpha = 0.0;

  double beta1() const { return beta(0); }

  double eta() const { return beta.size() > 1 ? beta.tail(beta.size() - 1).norm() : 0.0; }

  VectorXd gamma() const {
    if (beta.size() <= 1) return VectorXd();
    VectorXd s = beta.tail(beta.size() - 1);
    double nrm = s.norm();
    if (nrm > 0) s /= nrm;
    return s;
  }

  static ThetaEstimate assemble(double beta1, double eta, VectorXd gamma, double alpha) {
    if (eta < 0) {
      eta = -eta;
      gamma = -gamma;
    }
    ThetaEstimate t;
    t.beta.resize(gamma.size() + 1);
    t.beta(0) = beta1;
    if (gamma.size() > 0) t.beta.tail(gamma.size()) = eta * gamma;
    t.alpha = alpha;
    return t;
  }
};

// Thrown when data fail family-specific checks (negative counts, beta
// responses outside (0,1), missing intercept column, ...).
struct data_error : std::runtime_error {
  explicit data_error(const std::string& m) : std::runtime_error(m) {}
};

// Thrown when an optimizer walks out of the sane region; carries the best
// point seen so the caller can fall back to the initial value.
struct divergence_error : std::runtime_error {
  ThetaEstimate best;
  divergence_error(const std::string& m, ThetaEstimate b)
      : std::runtime_error(m), best(std::move(b)) {}
};

// Thrown when conditioning removes essentially all probability mass.
struct truncation_error : std::runtime_error {
  explicit truncation_error(const std::string& m) : std::runtime_error(m) {}
};

inline void Dataset::validate(const FamilySpec& fam) const {
  if (y.size() != X.rows()) throw data_error("y and X row counts differ");
  if (X.cols() < 1) throw data_error("X needs at least the intercept column");
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    if (X(i, 0) != 1.0) throw data_error("first column of X must be all ones");
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    double v = y(i);
    if (!std::isfinite(v)) throw data_error("non-finite response");
    if (fam.kind == Family::NegBin) {
      if (v < 0 || v != std::floor(v)) throw data_error("negative-binomial responses must be nonnegative integers");
    } else {
      if (v <= 0.0 || v >= 1.0) throw data_error("beta responses must lie strictly inside (0,1)");
    }
  }
}

}  // namespace robglm
