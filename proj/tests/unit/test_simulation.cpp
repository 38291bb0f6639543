#include <gtest/gtest.h>

#include <Eigen/Cholesky>
#include <cmath>
#include <numbers>
#include <vector>

#include "igroup/simulation.hpp"

namespace igroup {
namespace {

bool same(double a, double b) { return a == b || (std::isnan(a) && std::isnan(b)); }

double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

// Ratio of two integrals over a wide eta range by plain trapezoid sums.
template <class Num, class Den>
double trapezoid_ratio(Num num, Den den, double lo, double hi, int points) {
  const double h = (hi - lo) / (points - 1);
  double a = 0.0;
  double b = 0.0;
  for (int i = 0; i < points; ++i) {
    const double x = lo + h * i;
    const double c = (i == 0 || i == points - 1) ? 0.5 : 1.0;
    a += c * num(x);
    b += c * den(x);
  }
  return a / b;
}

TEST(RiskDecomposition, TargetEqualToEstimate) {
  const std::vector<double> theta{0.1, -0.4, 2.0};
  const std::vector<double> est{0.5, 0.0, 1.0};
  const auto r = risk_decomposition(theta, est, est);
  EXPECT_EQ(r.r_np, 0.0);
  EXPECT_DOUBLE_EQ(r.total, r.r_target);
  EXPECT_DOUBLE_EQ(r.total, (0.16 + 0.16 + 1.0) / 3.0);
  EXPECT_THROW(risk_decomposition(theta, est, std::vector<double>{1.0}), Error);
}

TEST(RiskDecomposition, ConjugateModelComponentsAddUp) {
  const std::size_t K = 5000;
  const std::size_t targets = 200;
  const GaussianModelSpec model{0.0, 1.0, 0.25};
  RiskAccumulator acc;
  for (std::uint64_t rep = 0; rep < 10; ++rep) {
    std::vector<double> theta(K), theta_hat(K);
    for (std::size_t k = 0; k < K; ++k) {
      CounterRng rng(77, rep, k, Stream::Data);
      theta[k] = rng.normal();
      theta_hat[k] = theta[k] + 0.5 * rng.normal();
    }
    const auto pop = detail::scalar_population(theta_hat, {});
    WeightSetup setup;
    setup.scheme = WeightScheme::ThetaOnly;
    setup.oracle = model;
    const auto idx = detail::all_indices(targets);
    const auto est = column_estimates(theta_hat, weight_matrix(pop, nullptr, setup, idx));
    std::vector<double> t(targets), target(targets);
    for (std::size_t k = 0; k < targets; ++k) {
      t[k] = theta[k];
      target[k] = model.posterior_mean(theta_hat[k]);
    }
    acc.add(risk_decomposition(t, est, target));
  }
  const auto r = acc.result();
  EXPECT_EQ(r.count, 2000u);
  EXPECT_GT(r.r_np, 0.0);
  EXPECT_NEAR(r.sum(), r.total, 3.0 * r.cross_se + 1e-12);
}

TEST(Case1Target, MatchesDirectIntegration) {
  for (double sigma : {0.2, 0.5, 1.0}) {
    for (double z : {-2.0, 0.0, 0.7, 2.5}) {
      auto lik = [&](double eta) { return normal_pdf(eta - 0.2) * normal_pdf((z - eta) / sigma); };
      const double direct = trapezoid_ratio([&](double e) { return (e + 1) * (e + 1) * lik(e); }, lik, -15, 15, 60001);
      EXPECT_NEAR(case1_target(z, sigma), direct, 1e-8) << sigma << " " << z;
    }
  }
}

TEST(Case3Target, MatchesDirectIntegration) {
  for (double sigma : {0.1, 0.3}) {
    for (double tau2 : {0.2, 0.05}) {
      for (auto [th, z] : {std::pair{0.3, 0.2}, std::pair{-0.9, 1.4}, std::pair{1.5, -0.5}}) {
        auto lik = [&](double eta) {
          const double d = th - std::sin(std::numbers::pi * eta);
          return normal_pdf(eta) * normal_pdf((z - eta) / sigma) * std::exp(-0.5 * d * d / tau2);
        };
        const double direct = trapezoid_ratio(
            [&](double e) { return std::sin(std::numbers::pi * e) * lik(e); }, lik, -8, 8, 400001);
        EXPECT_NEAR(case3_target(th, z, sigma, tau2), direct, 1e-6) << sigma << " " << tau2 << " " << th << " " << z;
      }
    }
  }
}

TEST(Ar1Likelihood, MatchesMultivariateNormalDensity) {
  CounterRng rng(5, 0, 0, Stream::Data);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2 + rng.index(8);
    const double phi = 1.8 * rng.uniform() - 0.9;
    const double sigma = 0.5 + 2.0 * rng.uniform();
    std::vector<double> x(n);
    for (auto& v : x) v = rng.normal(0, 2);
    Eigen::MatrixXd cov(n, n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        cov(i, j) = sigma * sigma * std::pow(phi, std::abs(double(i) - double(j))) / (1 - phi * phi);
      }
    }
    const Eigen::LLT<Eigen::MatrixXd> llt(cov);
    const Eigen::VectorXd xv = Eigen::Map<const Eigen::VectorXd>(x.data(), n);
    const Eigen::VectorXd sol = llt.matrixL().solve(xv);
    const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    const double expected = -0.5 * (n * std::log(2 * std::numbers::pi) + logdet + sol.squaredNorm());
    EXPECT_NEAR(ar1_log_likelihood(x, phi, sigma), expected, 1e-9);
  }
}

TEST(Ar1PosteriorMean, PointMassAndGridResolution) {
  const std::vector<double> x{0.3, 1.1, -0.4, 2.0, 1.5, 0.2, -1.0, 0.1, 0.4, 0.9};
  DiscretePrior point{{0.35}, {1.0}};
  EXPECT_NEAR(ar1_posterior_mean(x, 3.0, point), 0.35, 1e-4);
  const double coarse = ar1_posterior_mean(x, 3.0, beta_prior_grid(4, 4, 2001));
  const double fine = ar1_posterior_mean(x, 3.0, beta_prior_grid(4, 4, 8001));
  EXPECT_NEAR(coarse, fine, 1e-6);
  // With no data the posterior mean is the prior mean of 2*Beta(4,4)-1.
  EXPECT_NEAR(ar1_posterior_mean(std::vector<double>{0.0}, 1e6, beta_prior_grid(4, 4, 2001)), 0.0, 1e-9);
}

TEST(Ar1Objective, MinimizerIsWeightedLeastSquares) {
  CounterRng rng(6, 0, 0, Stream::Data);
  std::vector<IndividualRecord> recs(30);
  std::vector<double> w(30);
  double num = 0.0;
  double den = 0.0;
  for (std::size_t k = 0; k < 30; ++k) {
    recs[k].id = std::to_string(k);
    recs[k].x.resize(10);
    recs[k].x[0] = rng.normal();
    for (std::size_t t = 1; t < 10; ++t) recs[k].x[t] = 0.4 * recs[k].x[t - 1] + rng.normal();
    w[k] = rng.uniform();
    for (std::size_t t = 1; t < 10; ++t) {
      num += w[k] * recs[k].x[t] * recs[k].x[t - 1];
      den += w[k] * recs[k].x[t - 1] * recs[k].x[t - 1];
    }
  }
  const Population pop(std::move(recs));
  WeightVector wv;
  wv.target_id = "0";
  wv.weights = w;
  EXPECT_NEAR(minimize_weighted_objective(ar1_conditional_objective(), pop, wv).value, num / den, 1e-6);
}

TEST(Case3, IndividualMseIsTau2AndDeterministic) {
  auto cfg = SimCase3Config::table_row(1);
  cfg.K = 256;
  cfg.replications = 20;
  cfg.z_grid_points = 6;
  cfg.theta_grid_points = 4;
  cfg.combined_grid_points = 4;
  const auto a = run_case3(cfg);
  const auto& ind = a.find("row=1", "individual");
  EXPECT_NEAR(ind.stats.mse(), 0.2, 3.0 * ind.stats.mse_se());
  EXPECT_EQ(a.summary.size(), 4u);
  EXPECT_LT(a.find("row=1", "igroup_z").stats.mse(), ind.stats.mse());
  cfg.threads = 3;
  const auto b = run_case3(cfg);
  for (std::size_t i = 0; i < a.summary.size(); ++i) {
    EXPECT_EQ(a.summary[i].stats.mse(), b.summary[i].stats.mse());
    EXPECT_TRUE(same(a.summary[i].selected_bandwidth, b.summary[i].selected_bandwidth));
  }
}

TEST(Case3, ExactCovariateHasNoTargetRisk) {
  SimCase3Config cfg;
  cfg.K = 128;
  cfg.sigma_z = 0.0;
  cfg.replications = 2;
  cfg.z_grid_points = 4;
  cfg.theta_grid_points = 3;
  cfg.combined_grid_points = 3;
  const auto r = run_case3(cfg);
  ASSERT_EQ(r.risk.size(), 4u);
  for (const auto& c : r.risk) {
    EXPECT_EQ(c.value.r_target, 0.0);
    EXPECT_NEAR(c.value.r_np, c.value.total, 1e-15);
  }
}

TEST(Case3, TableRows) {
  const auto r5 = SimCase3Config::table_row(5);
  EXPECT_EQ(r5.n, 10u);
  EXPECT_NEAR(r5.tau2(), 0.1, 1e-15);
  EXPECT_EQ(r5.sigma_z, 0.1);
  const auto r12 = SimCase3Config::table_row(12);
  EXPECT_NEAR(r12.tau2(), 0.05, 1e-15);
  EXPECT_EQ(r12.sigma_z, 0.3);
  EXPECT_THROW(SimCase3Config::table_row(0), Error);
  EXPECT_THROW(SimCase3Config::table_row(13), Error);
}

TEST(Case2, SmallRunOrderingAndDeterminism) {
  SimCase2Config cfg;
  cfg.K = 100;
  cfg.replications = 3;
  cfg.grid_points = 6;
  cfg.oracle_grid = 401;
  const auto a = run_case2(cfg);
  const auto& ind = a.find("K=100", "individual");
  const auto& orc = a.find("K=100", "oracle");
  EXPECT_LT(orc.stats.mse(), ind.stats.mse());
  EXPECT_LT(a.find("K=100", "igroup_theta").stats.mse(), ind.stats.mse());
  cfg.threads = 2;
  const auto b = run_case2(cfg);
  for (std::size_t i = 0; i < a.summary.size(); ++i) EXPECT_EQ(a.summary[i].stats.mse(), b.summary[i].stats.mse());
}

TEST(Case2, PointMassOracleIsExact) {
  SimCase2Config cfg;
  cfg.K = 50;
  cfg.replications = 1;
  cfg.grid_points = 3;
  cfg.point_mass = 0.5;
  const auto r = run_case2(cfg);
  EXPECT_NEAR(r.find("K=50", "oracle").stats.mse(), 0.0, 1e-8);
}

TEST(Case1, DeterministicAcrossThreads) {
  SimCase1Config cfg;
  cfg.K = 200;
  cfg.sigmas = {0.0, 0.5};
  cfg.replications = 6;
  cfg.grid_points = 5;
  const auto a = run_case1(cfg);
  cfg.threads = 4;
  const auto b = run_case1(cfg);
  ASSERT_EQ(a.curves.size(), 20u);
  for (std::size_t i = 0; i < a.curves.size(); ++i) {
    EXPECT_TRUE(same(a.curves[i].stats.mse(), b.curves[i].stats.mse()));
    EXPECT_EQ(a.curves[i].bandwidth, b.curves[i].bandwidth);
  }
  for (std::size_t i = 0; i < a.summary.size(); ++i) {
    EXPECT_TRUE(same(a.summary[i].stats.bias(), b.summary[i].stats.bias()));
  }
  ASSERT_EQ(a.risk.size(), 2u);
  EXPECT_EQ(a.risk[0].value.r_target, 0.0);
}

// Bias and variance of individual 0 at a fixed small bandwidth grow with
// the noise in z.
TEST(Case1, NoiseInZRaisesBiasAndVariance) {
  SimCase1Config cfg;
  cfg.K = 1000;
  cfg.sigmas = {0.0, 0.2, 0.4, 0.8};
  cfg.replications = 400;
  cfg.grid = {0.1, 1.0};
  cfg.seed = 11;
  const auto r = run_case1(cfg);
  std::vector<double> bias, bias_se, var, var_se;
  for (const auto& c : r.curves) {
    if (c.scope != "individual0" || c.bandwidth != 0.1) continue;
    const auto& e = c.stats.replication_mean();
    const double m = mean_of(e);
    std::vector<double> dev(e.size());
    for (std::size_t i = 0; i < e.size(); ++i) dev[i] = (e[i] - m) * (e[i] - m);
    bias.push_back(std::abs(m));
    bias_se.push_back(standard_error(e));
    var.push_back(mean_of(dev));
    var_se.push_back(standard_error(dev));
  }
  ASSERT_EQ(bias.size(), 4u);
  for (std::size_t i = 1; i < 4; ++i) {
    EXPECT_GE(bias[i] + 2.0 * std::hypot(bias_se[i], bias_se[i - 1]), bias[i - 1]) << i;
    EXPECT_GE(var[i] + 2.0 * std::hypot(var_se[i], var_se[i - 1]), var[i - 1]) << i;
  }
  EXPECT_GT(bias[3], bias[0]);
}

// CV-selected bandwidth shrinks with K at roughly the K^(-1/5) rate.
TEST(Case1, SelectedBandwidthRate) {
  std::vector<double> logk, logb;
  for (std::size_t K : {250u, 1000u, 4000u}) {
    SimCase1Config cfg;
    cfg.K = K;
    cfg.sigmas = {0.0};
    cfg.replications = 8;
    cfg.grid = log_grid(1.0, 24, 0.02, 3.0);
    cfg.seed = 12;
    const auto r = run_case1(cfg);
    logk.push_back(std::log(double(K)));
    logb.push_back(std::log(r.find("sigma=0", "igroup_z").selected_bandwidth));
  }
  EXPECT_GT(logb[0], logb[1]);
  EXPECT_GT(logb[1], logb[2]);
  const double slope = ols_slope(logk, logb);
  EXPECT_GE(slope, -0.45);
  EXPECT_LE(slope, -0.05);
}

TEST(SimConfig, KeyValueApplication) {
  const auto kv = KeyValueConfig::parse("# case 1\nK = 300\nsigmas = 0, 0.5\nreplications=4\nseed = 9\n");
  SimCase1Config c1;
  apply_config(c1, kv);
  EXPECT_EQ(c1.K, 300u);
  EXPECT_EQ(c1.sigmas, (std::vector<double>{0.0, 0.5}));
  EXPECT_EQ(c1.replications, 4u);
  EXPECT_EQ(c1.seed, 9u);

  SimCase3Config c3;
  apply_config(c3, KeyValueConfig::parse("row = 9\nreplications = 5"));
  EXPECT_EQ(c3.n, 20u);
  EXPECT_NEAR(c3.tau2(), 0.05, 1e-15);
  EXPECT_EQ(c3.replications, 5u);

  SimCase2Config c2;
  apply_config(c2, KeyValueConfig::parse("point_mass = 0.3"));
  ASSERT_TRUE(c2.point_mass.has_value());
  EXPECT_EQ(*c2.point_mass, 0.3);

  try {
    apply_config(c1, KeyValueConfig::parse("bogus = 1"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Configuration);
  }
  EXPECT_THROW(KeyValueConfig::parse("K 300"), Error);
  EXPECT_THROW(apply_config(c1, KeyValueConfig::parse("K = -3")), Error);
  EXPECT_THROW(apply_config(c1, KeyValueConfig::parse("tau = abc")), Error);
}

TEST(SimConfig, Validation) {
  SimCase1Config c1;
  c1.K = 1;
  EXPECT_THROW(run_case1(c1), Error);
  SimCase2Config c2;
  c2.point_mass = 1.0;
  EXPECT_THROW(run_case2(c2), Error);
  SimCase3Config c3;
  c3.n = 2;
  EXPECT_THROW(run_case3(c3), Error);
}

}  // namespace
}  // namespace igroup
