#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "igroup/bandwidth.hpp"
#include "igroup/random.hpp"

namespace igroup {
namespace {

Population population(const std::vector<double>& thetas, const std::vector<double>& zs) {
  std::vector<IndividualRecord> recs;
  for (std::size_t i = 0; i < thetas.size(); ++i) {
    recs.push_back({"k" + std::to_string(i), {}, thetas[i], std::vector<double>{zs[i]}});
  }
  return Population(std::move(recs));
}

WeightVector column(std::vector<double> w, std::size_t target) {
  WeightVector out;
  out.target_id = "k" + std::to_string(target);
  out.target_index = target;
  out.weights = std::move(w);
  return out;
}

CvConfig z_config(std::vector<double> grid) {
  CvConfig cfg;
  cfg.grid = std::move(grid);
  cfg.setup.scheme = WeightScheme::ZOnly;
  cfg.setup.bandwidths.b1 = Bandwidth(1.0);
  return cfg;
}

TEST(LooEstimate, Examples) {
  const auto two = population({0.4, 2.5}, {0, 0});
  EXPECT_DOUBLE_EQ(loo_estimate(two, column({1, 1}, 0), "k0"), 2.5);
  const auto five = population({1, 2, 3, 4, 10}, {0, 0, 0, 0, 0});
  EXPECT_DOUBLE_EQ(loo_estimate(five, column({1, 1, 1, 1, 1}, 4), "k4"), 2.5);
  try {
    loo_estimate(two, column({1, 0}, 0), "k0");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptyNeighborhood);
    EXPECT_NE(std::string(e.what()).find("k0"), std::string::npos);
  }
}

TEST(LooEstimate, RandomizedRecomputation) {
  CounterRng rng(31, 0, 0, Stream::Data);
  for (int i = 0; i < 100; ++i) {
    const std::size_t n = 2 + rng.index(30);
    std::vector<double> th(n), z(n, 0.0), w(n);
    for (std::size_t k = 0; k < n; ++k) {
      th[k] = rng.normal();
      w[k] = 0.01 + rng.uniform();
    }
    const auto pop = population(th, z);
    const std::size_t k = rng.index(n);
    std::vector<double> zeroed = w;
    zeroed[k] = 0.0;
    const double expected = weighted_mean(th, zeroed);
    EXPECT_NEAR(loo_estimate(pop, column(w, k), "k" + std::to_string(k)), expected, 1e-13);
  }
}

TEST(CvError, Examples) {
  const auto flat = population({1.5, 1.5, 1.5, 1.5}, {0, 1, 2, 3});
  EXPECT_DOUBLE_EQ(cv_error(flat, nullptr, 1.0, z_config({1.0})), 0.0);
  const auto two = population({0, 1}, {0, 0});
  EXPECT_DOUBLE_EQ(cv_error(two, nullptr, 1.0, z_config({1.0})), 1.0);
}

TEST(CvError, HandAssembledFromLooEstimates) {
  CounterRng rng(32, 0, 0, Stream::Data);
  std::vector<double> th(50), z(50);
  for (std::size_t k = 0; k < 50; ++k) {
    z[k] = rng.normal();
    th[k] = std::sin(z[k]) + rng.normal(0, 0.3);
  }
  const auto pop = population(th, z);
  const double b = 0.4;
  WeightSetup setup;
  setup.bandwidths.b1 = Bandwidth(b);
  double sum = 0.0;
  for (std::size_t k = 0; k < 50; ++k) {
    const auto w = build_weights(pop, nullptr, "k" + std::to_string(k), setup);
    const double d = loo_estimate(pop, w, "k" + std::to_string(k)) - th[k];
    sum += d * d;
  }
  EXPECT_NEAR(cv_error(pop, nullptr, b, z_config({b})), sum / 50.0, 1e-12);
}

TEST(CvError, EmptyLocalSetIsConfigurationError) {
  const auto pop = population({0, 1, 2}, {0, 5, 10});
  auto cfg = z_config({1.0});
  cfg.omega = Omega0::local("k0", 0.5);
  try {
    cv_error(pop, nullptr, 1.0, cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Configuration);
    EXPECT_NE(std::string(e.what()).find("epsilon"), std::string::npos);
  }
}

TEST(Omega0, LocalBallGrowsToFloor) {
  std::vector<double> th(100), z(100);
  for (std::size_t k = 0; k < 100; ++k) {
    z[k] = static_cast<double>(k);
    th[k] = 0.0;
  }
  const auto pop = population(th, z);
  auto omega = Omega0::local("k50");
  omega.min_size = 30;
  const auto idx = omega0_indices(pop, omega);
  EXPECT_GE(idx.size(), 30u);
  for (auto i : idx) EXPECT_NE(i, 50u);
  EXPECT_EQ(omega0_indices(pop, Omega0::global()).size(), 100u);
}

TEST(SelectBandwidth, SinglePointGrid) {
  const auto pop = population({0, 1, 2}, {0, 1, 2});
  const auto r = select_bandwidth(pop, nullptr, z_config({0.7}));
  EXPECT_EQ(r.selected, 0.7);
  EXPECT_EQ(r.errors.size(), 1u);
  EXPECT_EQ(r.omega0_size, 3u);
}

TEST(SelectBandwidth, GridValidation) {
  const auto pop = population({0, 1, 2}, {0, 1, 2});
  EXPECT_THROW(select_bandwidth(pop, nullptr, z_config({})), Error);
  EXPECT_THROW(select_bandwidth(pop, nullptr, z_config({1.0, 0.5})), Error);
  EXPECT_THROW(select_bandwidth(pop, nullptr, z_config({-1.0, 0.5})), Error);
}

TEST(SelectBandwidth, EmptyGridPointScoresInfinity) {
  const auto pop = population({0, 1, 2}, {0, 10, 20});
  auto cfg = z_config({0.5, 20.0});
  cfg.setup.kernels.k1 = {KernelFamily::Boxcar};
  const auto r = select_bandwidth(pop, nullptr, cfg);
  EXPECT_TRUE(std::isinf(r.errors[0]));
  EXPECT_EQ(r.selected, 20.0);
}

TEST(SelectBandwidth, TiesGoToSmallerBandwidth) {
  const auto r = select_from_errors(std::vector<double>{1, 2, 3}, {0.5, 0.2, 0.2}, 3);
  EXPECT_EQ(r.selected, 2.0);
  EXPECT_THROW(select_from_errors(std::vector<double>{1}, {INFINITY}, 1), Error);
}

TEST(SelectBandwidth, HomogeneousPicksLargest) {
  int largest = 0;
  for (int seed = 0; seed < 100; ++seed) {
    std::vector<double> th(500), z(500);
    for (std::size_t k = 0; k < 500; ++k) {
      CounterRng rng(seed, 0, k, Stream::Data);
      z[k] = rng.normal();
      th[k] = 1.0 + rng.normal();
    }
    const auto pop = population(th, z);
    const auto grid = log_grid(rule_of_thumb_z(pop).value(), 5);
    const auto r = select_bandwidth(pop, nullptr, z_config(grid));
    if (r.selected_index + 1 == grid.size()) ++largest;
  }
  EXPECT_GE(largest, 80);
}

TEST(SelectBandwidth, SeparatedClustersPickSmallBandwidth) {
  int below = 0;
  for (int seed = 0; seed < 100; ++seed) {
    std::vector<double> th(200), z(200);
    for (std::size_t k = 0; k < 200; ++k) {
      CounterRng rng(seed, 0, k, Stream::Data);
      const bool right = k % 2 == 1;
      z[k] = (right ? 5.0 : -5.0) + rng.normal(0, 0.5);
      th[k] = (right ? 3.0 : 0.0) + rng.normal();
    }
    const auto pop = population(th, z);
    const auto grid = log_grid(1.0, 20, 0.1, 30.0);
    const auto r = select_bandwidth(pop, nullptr, z_config(grid));
    if (r.selected < 10.0) ++below;
  }
  EXPECT_GE(below, 80);
}

TEST(SelectBandwidth, ReportIndependentOfThreads) {
  std::vector<double> th(150), z(150);
  for (std::size_t k = 0; k < 150; ++k) {
    CounterRng rng(33, 0, k, Stream::Data);
    z[k] = rng.normal();
    th[k] = z[k] * z[k] + rng.normal();
  }
  const auto pop = population(th, z);
  auto cfg = z_config(log_grid(rule_of_thumb_z(pop).value()));
  const auto a = select_bandwidth(pop, nullptr, cfg);
  cfg.threads = 4;
  const auto b = select_bandwidth(pop, nullptr, cfg);
  EXPECT_EQ(a.errors, b.errors);
  EXPECT_EQ(a.selected, b.selected);
  for (double e : a.errors) EXPECT_GE(e, 0.0);
}

TEST(CvObjective, QuadraticMatchesEstimatorCv) {
  std::vector<double> th(60), z(60);
  for (std::size_t k = 0; k < 60; ++k) {
    CounterRng rng(34, 0, k, Stream::Data);
    z[k] = rng.normal();
    th[k] = z[k] + rng.normal(0, 0.5);
  }
  const auto pop = population(th, z);
  WeightSetup setup;
  setup.bandwidths.b1 = Bandwidth(0.5);
  const auto omega = omega0_indices(pop, Omega0::global());
  const auto w = weight_matrix(pop, nullptr, setup, omega);
  ObjectiveSpec sq{[](double t, const IndividualRecord& r) { return (t - *r.theta_hat) * (t - *r.theta_hat); },
                   -10.0, 10.0, true};
  EXPECT_NEAR(cv_error_objective(sq, pop, w, omega), cv_error(pop.thetas(), w, omega), 1e-7);
}

double gaussian_pdf(double x, double mean, double sd) {
  const double u = (x - mean) / sd;
  return std::exp(-0.5 * u * u) / (sd * std::sqrt(2.0 * std::numbers::pi));
}

BootstrapPairs random_pairs(std::size_t n, std::uint64_t seed) {
  BootstrapPairs pairs;
  for (std::size_t k = 0; k < n; ++k) {
    CounterRng rng(seed, 0, k, Stream::Bootstrap);
    const double c = rng.normal();
    pairs.entries.push_back({c, {{c + rng.normal(0, 0.3), c + rng.normal(0, 0.3)}}, std::nullopt});
  }
  return pairs;
}

TEST(KdeLikelihoodCv, MatchesLeaveOneOutDensityProduct) {
  const auto pairs = random_pairs(40, 5);
  const std::vector<double> grid{0.05, 0.2, 0.8};
  const auto rep = select_theta_kde_likelihood(pairs, grid, 1.5);
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const double h1 = grid[g];
    const double h2 = 1.5 * grid[g];
    double log_lik = 0.0;
    for (std::size_t j = 0; j < 40; ++j) {
      double dens = 0.0;
      for (std::size_t i = 0; i < 40; ++i) {
        if (i == j) continue;
        const auto& p = pairs.entries[i].draws[0];
        const auto& q = pairs.entries[j].draws[0];
        dens += gaussian_pdf(q.first, p.first, h1) * gaussian_pdf(q.second, p.second, h2) / 39.0;
      }
      log_lik += std::log(dens);
    }
    EXPECT_NEAR(rep.errors[g], -log_lik / 40.0, 1e-10);
  }
  EXPECT_EQ(rep.omega0_size, 40u);
}

TEST(KdeLikelihoodCv, PicksInteriorBandwidthAndRejectsTinyInputs) {
  const auto pairs = random_pairs(300, 6);
  const auto rep = select_theta_kde_likelihood(pairs, log_grid(0.3, 15, 0.01, 100.0), 1.0, 3);
  EXPECT_GT(rep.selected_index, 0u);
  EXPECT_LT(rep.selected_index, 14u);
  BootstrapPairs one;
  one.entries.push_back({0.0, {{0.0, 0.0}}, std::nullopt});
  EXPECT_THROW(select_theta_kde_likelihood(one, std::vector<double>{1.0}), Error);
  EXPECT_THROW(select_theta_kde_likelihood(pairs, std::vector<double>{1.0}, 0.0), Error);
}

}  // namespace
}  // namespace igroup
