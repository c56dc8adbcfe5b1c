#include "robglm/simulate.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <exception>
#include <iomanip>
#include <limits>
#include <sstream>
#include <thread>

#include "robglm/family.hpp"
#include "robglm/init.hpp"
#include "robglm/mrc.hpp"
#include "robglm/rng.hpp"

namespace robglm {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

// Seed for the conditional-likelihood stage of one replication, separated
// from the data-generation streams so the randomization vector is not
// correlated with the sample it partitions.
std::uint64_t stage_seed(std::uint64_t master, int rep) {
  std::uint64_t s = master ^ (0xa0761d6478bd642fULL * (static_cast<std::uint64_t>(rep) + 1));
  return splitmix64(s);
}

std::string format_vector(const VectorXd& v) {
  std::ostringstream os;
  os << "(";
  for (Eigen::Index j = 0; j < v.size(); ++j) {
    if (j) os << ",";
    os << v(j);
  }
  os << ")";
  return os.str();
}

void append_double(std::ostream& os, double v) {
  os << std::setprecision(17) << v;
}

}  // namespace

VectorXd SimConfig::resolved_beta0() const {
  if (beta0.size() > 0) return beta0;
  VectorXd b(6);
  b << 1.5, 0.5, 0.25, 0.0, 0.0, 0.0;
  return b;
}

void SimConfig::validate() const {
  if (n < 1) throw data_error("simulation needs a positive sample size");
  if (reps < 1) throw data_error("simulation needs at least one replication");
  if (!(alpha0 > 0.0)) throw data_error("true dispersion must be positive");
  VectorXd b = resolved_beta0();
  if (contamination) {
    const Contamination& c = *contamination;
    if (!(c.fraction >= 0.0 && c.fraction < 0.5))
      throw data_error("contamination fraction must lie in [0, 0.5)");
    if (c.x_out.size() != b.size() - 1)
      throw data_error("outlier covariates must match the slope dimension");
    if (!(c.y_out >= 0.0) || c.y_out != std::floor(c.y_out))
      throw data_error("outlier response must be a nonnegative count");
  }
  if (!estimators.ml && !estimators.ini && !estimators.cml)
    throw data_error("no estimator requested");
}

Dataset gen_sample(const SimConfig& cfg, int rep_index) {
  VectorXd b = cfg.resolved_beta0();
  Eigen::Index p = b.size();
  RngStream rng(cfg.seed, static_cast<std::uint64_t>(rep_index), 1);
  MatrixXd X(cfg.n, p);
  VectorXd y(cfg.n);
  for (Eigen::Index i = 0; i < cfg.n; ++i) {
    X(i, 0) = 1.0;
    for (Eigen::Index j = 1; j < p; ++j) X(i, j) = rng.normal();
    y(i) = static_cast<double>(nb_sample(rng, std::exp(X.row(i) * b), cfg.alpha0));
  }
  return Dataset{std::move(y), std::move(X)};
}

Dataset contaminate(const Dataset& data, double fraction, const VectorXd& x_out, double y_out) {
  if (!(fraction >= 0.0 && fraction < 0.5))
    throw data_error("contamination fraction must lie in [0, 0.5)");
  if (x_out.size() != data.d())
    throw data_error("outlier covariates must match the slope dimension");
  Dataset out = data;
  Eigen::Index m = static_cast<Eigen::Index>(std::floor(fraction * static_cast<double>(data.n())));
  for (Eigen::Index i = data.n() - m; i < data.n(); ++i) {
    out.X(i, 0) = 1.0;
    out.X.row(i).tail(data.d()) = x_out.transpose();
    out.y(i) = y_out;
  }
  return out;
}

RepErrors replication_errors(const ThetaEstimate& estimate, const Dataset& data,
                             Eigen::Index n_clean, const VectorXd& beta0, double alpha0) {
  if (estimate.beta.size() != beta0.size())
    throw data_error("estimate and truth have different coefficient dimensions");
  if (n_clean < 1 || n_clean > data.n())
    throw data_error("clean-row count out of range");
  RepErrors e;
  e.beta = (estimate.beta - beta0).lpNorm<1>();
  e.alpha = std::abs(estimate.alpha - alpha0);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < n_clean; ++i) {
    double lin_hat = data.X.row(i) * estimate.beta;
    double lin_true = data.X.row(i) * beta0;
    sum += std::abs(std::exp(lin_hat) - std::exp(lin_true));
  }
  e.mu = sum / static_cast<double>(n_clean);
  return e;
}

void aggregate_metrics(SimResult& result) {
  const EstimatorMetrics* ml = nullptr;
  for (const EstimatorMetrics& m : result.metrics)
    if (m.name == "ML") ml = &m;

  for (EstimatorMetrics& m : result.metrics) {
    m.maee_beta = m.err_beta.size() ? m.err_beta.mean() : kNan;
    m.maee_alpha = m.err_alpha.size() ? m.err_alpha.mean() : kNan;
    m.mape_mu = m.err_mu.size() ? m.err_mu.mean() : kNan;
    m.diverged = 0;
    for (std::uint8_t f : m.rep_diverged) m.diverged += f;
    if (&m == ml) {
      m.eff_beta = m.eff_alpha = m.eff_mu = 1.0;
    } else if (ml) {
      m.eff_beta = ml->maee_beta / m.maee_beta;
      m.eff_alpha = ml->maee_alpha / m.maee_alpha;
      m.eff_mu = ml->mape_mu / m.mape_mu;
    } else {
      m.eff_beta = m.eff_alpha = m.eff_mu = kNan;
    }
  }
}

SimResult run_experiment(const SimConfig& cfg) {
  cfg.validate();
  const VectorXd beta0 = cfg.resolved_beta0();
  const FamilySpec fam = negbin_family();
  const int reps = cfg.reps;

  // fixed reporting order; absent estimators stay empty and are dropped
  enum { kMl = 0, kIni = 1, kCml = 2 };
  const bool wanted[3] = {cfg.estimators.ml, cfg.estimators.ini, cfg.estimators.cml};
  const char* names[3] = {"ML", "INI", "CML"};

  std::vector<std::array<RepErrors, 3>> errors(static_cast<std::size_t>(reps));
  std::vector<std::uint8_t> cml_diverged(static_cast<std::size_t>(reps), 0);

  auto run_rep = [&](int r) {
    Dataset data = gen_sample(cfg, r);
    Eigen::Index n_clean = cfg.n;
    if (cfg.contamination) {
      const Contamination& c = *cfg.contamination;
      data = contaminate(data, c.fraction, c.x_out, c.y_out);
      n_clean = cfg.n - static_cast<Eigen::Index>(
                            std::floor(c.fraction * static_cast<double>(cfg.n)));
    }

    if (wanted[kMl]) {
      MlResult ml = ml_fit(data, fam);
      errors[static_cast<std::size_t>(r)][kMl] =
          replication_errors(ml.theta, data, n_clean, beta0, cfg.alpha0);
    }

    if (wanted[kCml]) {
      PipelineConfig pcfg = cfg.pipeline;
      pcfg.replicates = 1;  // one randomization vector per Monte Carlo sample
      pcfg.threads = 1;     // parallelism lives at the replication level
      pcfg.compute_se = false;
      pcfg.seed = stage_seed(cfg.seed, r);
      FitReport rep = cml_pipeline(data, fam, pcfg);
      errors[static_cast<std::size_t>(r)][kCml] =
          replication_errors(rep.theta, data, n_clean, beta0, cfg.alpha0);
      cml_diverged[static_cast<std::size_t>(r)] = rep.any_diverged ? 1 : 0;
      if (wanted[kIni])  // the pipeline already ran the initial stages
        errors[static_cast<std::size_t>(r)][kIni] =
            replication_errors(rep.theta_init, data, n_clean, beta0, cfg.alpha0);
    } else if (wanted[kIni]) {
      VectorXd gamma = data.d() >= 1 ? mrc_fit(data, cfg.pipeline.mrc) : VectorXd();
      ThetaEstimate ini = initial_estimator(data, fam, gamma, cfg.pipeline.mt).theta;
      errors[static_cast<std::size_t>(r)][kIni] =
          replication_errors(ini, data, n_clean, beta0, cfg.alpha0);
    }
  };

  int threads = cfg.threads > 0 ? cfg.threads
                                : static_cast<int>(std::thread::hardware_concurrency());
  threads = std::clamp(threads, 1, reps);
  std::vector<std::exception_ptr> failures(static_cast<std::size_t>(threads));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (int r = t; r < reps; r += threads) run_rep(r);
      } catch (...) {
        failures[static_cast<std::size_t>(t)] = std::current_exception();
      }
    });
  }
  for (std::thread& th : pool) th.join();
  for (const std::exception_ptr& e : failures)
    if (e) std::rethrow_exception(e);

  SimResult result;
  result.config = cfg;
  for (int k = 0; k < 3; ++k) {
    if (!wanted[k]) continue;
    EstimatorMetrics m;
    m.name = names[k];
    m.err_beta.resize(reps);
    m.err_alpha.resize(reps);
    m.err_mu.resize(reps);
    m.rep_diverged.assign(static_cast<std::size_t>(reps), 0);
    for (int r = 0; r < reps; ++r) {
      const RepErrors& e = errors[static_cast<std::size_t>(r)][k];
      m.err_beta(r) = e.beta;
      m.err_alpha(r) = e.alpha;
      m.err_mu(r) = e.mu;
    }
    if (k == kCml) m.rep_diverged = cml_diverged;
    result.metrics.push_back(std::move(m));
  }
  aggregate_metrics(result);
  return result;
}

std::string summary_table(const SimResult& result) {
  const SimConfig& cfg = result.config;
  std::ostringstream os;
  os << "negative binomial Monte Carlo: n=" << cfg.n << ", reps=" << cfg.reps
     << ", seed=" << cfg.seed << ", beta0=" << format_vector(cfg.resolved_beta0())
     << ", alpha0=" << cfg.alpha0 << "\n";
  if (cfg.contamination) {
    const Contamination& c = *cfg.contamination;
    os << "contamination: " << 100.0 * c.fraction << "% of rows set to y_out=" << c.y_out
       << " at x_out=" << format_vector(c.x_out) << "\n";
  } else {
    os << "contamination: none\n";
  }
  os << std::left << std::setw(10) << "estimator" << std::right << std::setw(12)
     << "MAEE(beta)" << std::setw(13) << "MAEE(alpha)" << std::setw(11) << "MAPE(mu)"
     << std::setw(11) << "eff(beta)" << std::setw(12) << "eff(alpha)" << std::setw(9)
     << "eff(mu)" << std::setw(10) << "diverged" << "\n";
  os << std::fixed;
  for (const EstimatorMetrics& m : result.metrics) {
    os << std::left << std::setw(10) << m.name << std::right << std::setprecision(4)
       << std::setw(12) << m.maee_beta << std::setw(13) << m.maee_alpha << std::setw(11)
       << m.mape_mu << std::setprecision(3);
    const std::array<std::pair<double, int>, 3> effs = {
        {{m.eff_beta, 11}, {m.eff_alpha, 12}, {m.eff_mu, 9}}};
    for (const auto& [eff, width] : effs) {
      os << std::setw(width);
      if (std::isnan(eff))
        os << "-";
      else
        os << eff;
    }
    os << std::setw(10) << m.diverged << "\n";
  }
  return os.str();
}

std::string raw_errors_csv(const SimResult& result) {
  std::ostringstream os;
  os << "rep,estimator,err_beta,err_alpha,err_mu,diverged\n";
  for (int r = 0; r < result.config.reps; ++r) {
    for (const EstimatorMetrics& m : result.metrics) {
      os << r << "," << m.name << ",";
      append_double(os, m.err_beta(r));
      os << ",";
      append_double(os, m.err_alpha(r));
      os << ",";
      append_double(os, m.err_mu(r));
      os << "," << static_cast<int>(m.rep_diverged[static_cast<std::size_t>(r)]) << "\n";
    }
  }
  return os.str();
}

std::string sweep_csv(const std::vector<SimResult>& slices) {
  std::ostringstream os;
  os << "y_out,estimator,maee_beta,maee_alpha,mape_mu,eff_beta,eff_alpha,eff_mu\n";
  for (const SimResult& result : slices) {
    for (const EstimatorMetrics& m : result.metrics) {
      if (result.config.contamination)
        os << result.config.contamination->y_out;
      os << "," << m.name << ",";
      append_double(os, m.maee_beta);
      os << ",";
      append_double(os, m.maee_alpha);
      os << ",";
      append_double(os, m.mape_mu);
      for (double eff : {m.eff_beta, m.eff_alpha, m.eff_mu}) {
        os << ",";
        append_double(os, eff);
      }
      os << "\n";
    }
  }
  return os.str();
}

}  // namespace robglm
