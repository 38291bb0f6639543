#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "igroup/aggregation.hpp"
#include "igroup/bandwidth.hpp"
#include "igroup/config.hpp"
#include "igroup/error.hpp"
#include "igroup/parallel.hpp"
#include "igroup/population.hpp"
#include "igroup/random.hpp"
#include "igroup/stats.hpp"
#include "igroup/weights.hpp"

namespace igroup {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// ---------------------------------------------------------------------------
// Report types

/// Risk split of an estimator around a target estimator Theta0:
/// total = r_np + r_target + cross, where cross should vanish in expectation.
struct RiskDecomposition {
  double r_np = 0.0;
  double r_target = 0.0;
  double total = 0.0;
  double cross = 0.0;
  double cross_se = 0.0;
  std::size_t count = 0;

  double sum() const { return r_np + r_target; }
};

inline RiskDecomposition risk_decomposition(std::span<const double> theta, std::span<const double> estimate,
                                            std::span<const double> target) {
  if (theta.size() != estimate.size() || theta.size() != target.size()) {
    fail(ErrorKind::InvalidInput, "risk decomposition inputs differ in length");
  }
  if (theta.empty()) fail(ErrorKind::InvalidInput, "risk decomposition of an empty sample");
  RiskDecomposition r;
  r.count = theta.size();
  std::vector<double> cross(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double a = estimate[i] - target[i];
    const double b = target[i] - theta[i];
    r.r_np += a * a;
    r.r_target += b * b;
    r.total += (estimate[i] - theta[i]) * (estimate[i] - theta[i]);
    cross[i] = 2.0 * a * b;
  }
  const auto n = static_cast<double>(theta.size());
  r.r_np /= n;
  r.r_target /= n;
  r.total /= n;
  r.cross = mean_of(cross);
  r.cross_se = standard_error(cross);
  return r;
}

/// Pools per-replication decompositions; the cross-term standard error is
/// taken over replications when there are several.
class RiskAccumulator {
 public:
  void add(const RiskDecomposition& r) {
    parts_.push_back(r);
  }

  RiskDecomposition result() const {
    RiskDecomposition out;
    std::vector<double> cross;
    for (const auto& p : parts_) {
      const auto w = static_cast<double>(p.count);
      out.r_np += p.r_np * w;
      out.r_target += p.r_target * w;
      out.total += p.total * w;
      out.cross += p.cross * w;
      out.count += p.count;
      cross.push_back(p.cross);
    }
    if (out.count == 0) return out;
    const auto n = static_cast<double>(out.count);
    out.r_np /= n;
    out.r_target /= n;
    out.total /= n;
    out.cross /= n;
    out.cross_se = parts_.size() > 1 ? standard_error(cross) : parts_.front().cross_se;
    return out;
  }

  bool empty() const { return parts_.empty(); }

 private:
  std::vector<RiskDecomposition> parts_;
};

struct ReportCell {
  std::string config;
  std::string method;
  std::string scope = "population";
  double bandwidth = kNaN;
  double selected_bandwidth = kNaN;
  ErrorStats stats;
};

struct RiskCell {
  std::string config;
  std::string method;
  RiskDecomposition value;
};

struct SimulationReport {
  std::string case_name;
  std::vector<ReportCell> summary;
  std::vector<ReportCell> curves;
  std::vector<RiskCell> risk;

  const ReportCell& find(const std::string& config, const std::string& method,
                         const std::string& scope = "population") const {
    for (const auto& c : summary) {
      if (c.config == config && c.method == method && c.scope == scope) return c;
    }
    fail(ErrorKind::InvalidInput, "no report cell " + config + "/" + method + "/" + scope);
  }

  const RiskCell* find_risk(const std::string& config, const std::string& method) const {
    for (const auto& r : risk) {
      if (r.config == config && r.method == method) return &r;
    }
    return nullptr;
  }
};

namespace detail {

struct Sums {
  double sum = 0.0;
  double sumsq = 0.0;
  std::size_t count = 0;

  void add(double e) {
    sum += e;
    sumsq += e * e;
    ++count;
  }
};

/// Per-replication output: error sums per cell, risk splits, selected
/// bandwidths. Merged in replication order after the parallel run.
struct ReplicationOut {
  std::vector<Sums> cells;
  std::vector<RiskDecomposition> risks;
  std::vector<double> selected;
};

struct CellLayout {
  std::vector<ReportCell> cells;
  std::vector<bool> is_curve;
  std::vector<int> selected_slot;

  std::size_t add(std::string config, std::string method, std::string scope, double bandwidth, bool curve,
                  int slot = -1) {
    ReportCell cell;
    cell.config = std::move(config);
    cell.method = std::move(method);
    cell.scope = std::move(scope);
    cell.bandwidth = bandwidth;
    cells.push_back(std::move(cell));
    is_curve.push_back(curve);
    selected_slot.push_back(slot);
    return cells.size() - 1;
  }
};

struct RiskSlot {
  std::string config;
  std::string method;
};

inline SimulationReport merge(std::string case_name, CellLayout layout, const std::vector<RiskSlot>& risk_slots,
                              const std::vector<ReplicationOut>& reps) {
  std::vector<RiskAccumulator> risk(risk_slots.size());
  std::vector<double> selected_sum;
  for (const auto& r : reps) {
    for (std::size_t i = 0; i < layout.cells.size(); ++i) {
      layout.cells[i].stats.add_sums(r.cells[i].sum, r.cells[i].sumsq, r.cells[i].count);
    }
    for (std::size_t i = 0; i < r.risks.size() && i < risk.size(); ++i) risk[i].add(r.risks[i]);
    if (selected_sum.size() < r.selected.size()) selected_sum.resize(r.selected.size(), 0.0);
    for (std::size_t i = 0; i < r.selected.size(); ++i) selected_sum[i] += std::log(r.selected[i]);
  }
  SimulationReport out;
  out.case_name = std::move(case_name);
  for (std::size_t i = 0; i < layout.cells.size(); ++i) {
    auto cell = std::move(layout.cells[i]);
    const int slot = layout.selected_slot[i];
    if (slot >= 0 && !reps.empty()) {
      cell.selected_bandwidth = std::exp(selected_sum[static_cast<std::size_t>(slot)] / static_cast<double>(reps.size()));
    }
    (layout.is_curve[i] ? out.curves : out.summary).push_back(std::move(cell));
  }
  for (std::size_t i = 0; i < risk_slots.size(); ++i) {
    if (!risk[i].empty()) out.risk.push_back({risk_slots[i].config, risk_slots[i].method, risk[i].result()});
  }
  return out;
}

inline std::string format_param(double v) {
  std::ostringstream s;
  s << v;
  return s.str();
}

inline Population scalar_population(const std::vector<double>& thetas, const std::vector<double>& zs,
                                    std::vector<std::vector<double>> xs = {}) {
  std::vector<IndividualRecord> recs(thetas.size());
  for (std::size_t k = 0; k < thetas.size(); ++k) {
    recs[k].id = std::to_string(k);
    recs[k].theta_hat = thetas[k];
    if (!zs.empty()) recs[k].z = std::vector<double>{zs[k]};
    if (!xs.empty()) recs[k].x = std::move(xs[k]);
  }
  return Population(std::move(recs));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Case 1: exogenous z only

struct SimCase1Config {
  std::size_t K = 1000;
  std::vector<double> sigmas{0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
  double tau = 1.0;
  std::size_t replications = 1000;
  /// Bandwidth grid shared by all sigma levels; empty means a per-sigma
  /// log grid around 1.06 sd(z) K^(-1/5) with sd(z) = sqrt(1 + sigma^2).
  std::vector<double> grid;
  std::size_t grid_points = 20;
  std::uint64_t seed = 1;
  unsigned threads = 1;

  void validate() const {
    if (K < 2) fail(ErrorKind::Configuration, "case1: K must be at least 2");
    if (sigmas.empty()) fail(ErrorKind::Configuration, "case1: sigma grid is empty");
    for (double s : sigmas) {
      if (!(s >= 0.0) || !std::isfinite(s)) fail(ErrorKind::Configuration, "case1: sigma must be >= 0");
    }
    if (!(tau > 0.0)) fail(ErrorKind::Configuration, "case1: tau must be positive");
    if (replications == 0) fail(ErrorKind::Configuration, "case1: replications must be positive");
    if (grid.empty() && grid_points == 0) fail(ErrorKind::Configuration, "case1: grid_points must be positive");
    if (!grid.empty()) validate_grid(grid);
  }

  std::vector<double> grid_for(double sigma) const {
    if (!grid.empty()) return grid;
    return log_grid(rule_of_thumb(std::sqrt(1.0 + sigma * sigma), K, 1), grid_points);
  }
};

inline void apply_config(SimCase1Config& c, const KeyValueConfig& kv) {
  kv.require_known({"K", "sigmas", "tau", "replications", "grid", "grid_points", "seed"});
  kv.read("K", c.K);
  kv.read("sigmas", c.sigmas);
  kv.read("tau", c.tau);
  kv.read("replications", c.replications);
  kv.read("grid", c.grid);
  kv.read("grid_points", c.grid_points);
  kv.read("seed", c.seed);
}

/// E[(eta + 1)^2 | z] under eta ~ N(0.2, 1), z | eta ~ N(eta, sigma^2).
inline double case1_target(double z, double sigma) {
  const double s2 = sigma * sigma;
  const double m = 0.2 + (z - 0.2) / (1.0 + s2);
  const double v = s2 / (1.0 + s2);
  return (m + 1.0) * (m + 1.0) + v;
}

/// Figure-style curves (bias/variance/MSE against bandwidth for individual
/// 0, whose eta is fixed at 0 so theta_0 = 1, and for the population) plus
/// the individual / CV-tuned iGroup / population-mean comparison.
inline SimulationReport run_case1(const SimCase1Config& cfg) {
  cfg.validate();
  detail::CellLayout layout;
  std::vector<detail::RiskSlot> risk_slots;
  struct SigmaCells {
    std::vector<std::size_t> curve_ind0, curve_pop;
    std::size_t ind_pop, ind_0, ig_pop, ig_0, pm_pop, pm_0;
    std::vector<double> grid;
  };
  std::vector<SigmaCells> cells(cfg.sigmas.size());
  for (std::size_t s = 0; s < cfg.sigmas.size(); ++s) {
    const std::string label = "sigma=" + detail::format_param(cfg.sigmas[s]);
    auto& sc = cells[s];
    sc.grid = cfg.grid_for(cfg.sigmas[s]);
    for (double b : sc.grid) {
      sc.curve_ind0.push_back(layout.add(label, "igroup_z", "individual0", b, true));
      sc.curve_pop.push_back(layout.add(label, "igroup_z", "population", b, true));
    }
    sc.ind_pop = layout.add(label, "individual", "population", kNaN, false);
    sc.ind_0 = layout.add(label, "individual", "individual0", kNaN, false);
    sc.ig_pop = layout.add(label, "igroup_z", "population", kNaN, false, static_cast<int>(s));
    sc.ig_0 = layout.add(label, "igroup_z", "individual0", kNaN, false, static_cast<int>(s));
    sc.pm_pop = layout.add(label, "population_mean", "population", kNaN, false);
    sc.pm_0 = layout.add(label, "population_mean", "individual0", kNaN, false);
    risk_slots.push_back({label, "igroup_z"});
  }

  std::vector<detail::ReplicationOut> reps(cfg.replications);
  parallel_for(cfg.replications, cfg.threads, [&](std::size_t r) {
    auto& out = reps[r];
    out.cells.resize(layout.cells.size());
    // Common random numbers across sigma levels.
    std::vector<double> eta(cfg.K), eps(cfg.K), xi(cfg.K), theta(cfg.K), theta_hat(cfg.K);
    for (std::size_t k = 0; k < cfg.K; ++k) {
      CounterRng rng(cfg.seed, r, k, Stream::Data);
      eta[k] = k == 0 ? 0.0 : rng.normal(0.2, 1.0);
      eps[k] = rng.normal();
      xi[k] = rng.normal();
      theta[k] = (eta[k] + 1.0) * (eta[k] + 1.0);
      theta_hat[k] = theta[k] + cfg.tau * eps[k];
    }
    double pop_mean = mean_of(theta_hat);
    for (std::size_t s = 0; s < cfg.sigmas.size(); ++s) {
      const double sigma = cfg.sigmas[s];
      const auto& sc = cells[s];
      std::vector<double> z(cfg.K);
      for (std::size_t k = 0; k < cfg.K; ++k) z[k] = eta[k] + sigma * xi[k];
      const auto pop = detail::scalar_population(theta_hat, z);
      CvConfig cv;
      cv.grid = sc.grid;
      cv.setup.scheme = WeightScheme::ZOnly;
      cv.setup.bandwidths.b1 = Bandwidth(1.0);
      const auto sweep = cv_sweep(pop, nullptr, cv);
      for (std::size_t i = 0; i < sc.grid.size(); ++i) {
        const auto& est = sweep.estimates[i];
        out.cells[sc.curve_ind0[i]].add(est[0] - theta[0]);
        for (std::size_t k = 0; k < cfg.K; ++k) out.cells[sc.curve_pop[i]].add(est[k] - theta[k]);
      }
      const auto& best = sweep.estimates[sweep.report.selected_index];
      std::vector<double> target(cfg.K);
      for (std::size_t k = 0; k < cfg.K; ++k) {
        out.cells[sc.ind_pop].add(theta_hat[k] - theta[k]);
        out.cells[sc.ig_pop].add(best[k] - theta[k]);
        out.cells[sc.pm_pop].add(pop_mean - theta[k]);
        target[k] = sigma == 0.0 ? theta[k] : case1_target(z[k], sigma);
      }
      out.cells[sc.ind_0].add(theta_hat[0] - theta[0]);
      out.cells[sc.ig_0].add(best[0] - theta[0]);
      out.cells[sc.pm_0].add(pop_mean - theta[0]);
      out.risks.push_back(risk_decomposition(theta, best, target));
      out.selected.push_back(sweep.report.selected);
    }
  });
  return detail::merge("case1", std::move(layout), risk_slots, reps);
}

// ---------------------------------------------------------------------------
// Case 2: short AR(1) series, no exogenous variable

/// Prior over the AR coefficient as weighted atoms.
struct DiscretePrior {
  std::vector<double> atoms;
  std::vector<double> weights;
};

/// Beta(a, b) on (theta + 1) / 2, discretized with trapezoid weights on an
/// evenly spaced grid over [-0.999, 0.999].
inline DiscretePrior beta_prior_grid(double a, double b, std::size_t points) {
  if (points < 2) fail(ErrorKind::Configuration, "prior grid needs at least two points");
  DiscretePrior p;
  p.atoms.resize(points);
  p.weights.resize(points);
  const double lo = -0.999;
  const double hi = 0.999;
  const double h = (hi - lo) / static_cast<double>(points - 1);
  for (std::size_t i = 0; i < points; ++i) {
    const double t = lo + h * static_cast<double>(i);
    const double u = 0.5 * (t + 1.0);
    p.atoms[i] = t;
    p.weights[i] = std::pow(u, a - 1.0) * std::pow(1.0 - u, b - 1.0) * ((i == 0 || i + 1 == points) ? 0.5 : 1.0);
  }
  return p;
}

/// Exact AR(1) log-likelihood with a stationary initial observation.
inline double ar1_log_likelihood(std::span<const double> x, double theta, double sigma) {
  const double s2 = sigma * sigma;
  const double v0 = s2 / (1.0 - theta * theta);
  double ll = -0.5 * (std::log(2.0 * std::numbers::pi * v0) + x[0] * x[0] / v0);
  for (std::size_t t = 1; t < x.size(); ++t) {
    const double e = x[t] - theta * x[t - 1];
    ll -= 0.5 * (std::log(2.0 * std::numbers::pi * s2) + e * e / s2);
  }
  return ll;
}

inline double ar1_posterior_mean(std::span<const double> x, double sigma, const DiscretePrior& prior) {
  if (x.empty()) fail(ErrorKind::InvalidInput, "posterior mean of an empty series");
  std::vector<double> logw(prior.atoms.size());
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < prior.atoms.size(); ++i) {
    logw[i] = prior.weights[i] > 0.0 ? std::log(prior.weights[i]) + ar1_log_likelihood(x, prior.atoms[i], sigma)
                                     : -std::numeric_limits<double>::infinity();
    top = std::max(top, logw[i]);
  }
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < prior.atoms.size(); ++i) {
    const double w = std::exp(logw[i] - top);
    num += w * prior.atoms[i];
    den += w;
  }
  return num / den;
}

struct SimCase2Config {
  std::size_t K = 200;
  std::size_t length = 10;
  double sigma = 3.0;
  std::size_t replications = 100;
  double beta_a = 4.0;
  double beta_b = 4.0;
  /// When set, every coefficient equals this value and the oracle prior is
  /// the corresponding point mass.
  std::optional<double> point_mass;
  std::size_t grid_points = 20;
  std::size_t draws = 1;
  std::size_t oracle_grid = 2001;
  std::uint64_t seed = 1;
  unsigned threads = 1;

  void validate() const {
    if (K < 2) fail(ErrorKind::Configuration, "case2: K must be at least 2");
    if (length < 2) fail(ErrorKind::Configuration, "case2: series length must be at least 2");
    if (!(sigma > 0.0)) fail(ErrorKind::Configuration, "case2: sigma must be positive");
    if (replications == 0) fail(ErrorKind::Configuration, "case2: replications must be positive");
    if (!(beta_a > 0.0) || !(beta_b > 0.0)) fail(ErrorKind::Configuration, "case2: beta shapes must be positive");
    if (point_mass && !(std::abs(*point_mass) < 1.0)) {
      fail(ErrorKind::Configuration, "case2: point_mass must lie in (-1, 1)");
    }
    if (grid_points == 0 || draws == 0) fail(ErrorKind::Configuration, "case2: grid_points and draws must be positive");
    if (oracle_grid < 2) fail(ErrorKind::Configuration, "case2: oracle_grid must be at least 2");
  }
};

inline void apply_config(SimCase2Config& c, const KeyValueConfig& kv) {
  kv.require_known({"K", "length", "sigma", "replications", "beta_a", "beta_b", "point_mass", "grid_points",
                    "draws", "oracle_grid", "seed"});
  kv.read("K", c.K);
  kv.read("length", c.length);
  kv.read("sigma", c.sigma);
  kv.read("replications", c.replications);
  kv.read("beta_a", c.beta_a);
  kv.read("beta_b", c.beta_b);
  if (kv.has("point_mass")) {
    double v = 0.0;
    kv.read("point_mass", v);
    c.point_mass = v;
  }
  kv.read("grid_points", c.grid_points);
  kv.read("draws", c.draws);
  kv.read("oracle_grid", c.oracle_grid);
  kv.read("seed", c.seed);
}

/// Conditional Gaussian negative log-likelihood of an AR(1) coefficient
/// (up to constants), convex on [-0.999, 0.999].
inline ObjectiveSpec ar1_conditional_objective() {
  return {[](double phi, const IndividualRecord& r) {
            double s = 0.0;
            for (std::size_t t = 1; t < r.x.size(); ++t) {
              const double e = r.x[t] - phi * r.x[t - 1];
              s += 0.5 * e * e;
            }
            return s;
          },
          -0.999, 0.999, true};
}

inline SimulationReport run_case2(const SimCase2Config& cfg) {
  cfg.validate();
  detail::CellLayout layout;
  const std::string label = "K=" + std::to_string(cfg.K);
  const auto c_ind = layout.add(label, "individual", "population", kNaN, false);
  const auto c_obj = layout.add(label, "igroup_obj", "population", kNaN, false, 0);
  const auto c_theta = layout.add(label, "igroup_theta", "population", kNaN, false, 0);
  const auto c_oracle = layout.add(label, "oracle", "population", kNaN, false);
  const std::vector<detail::RiskSlot> risk_slots{{label, "igroup_theta"}, {label, "igroup_obj"}};

  DiscretePrior prior;
  if (cfg.point_mass) {
    prior.atoms = {*cfg.point_mass};
    prior.weights = {1.0};
  } else {
    prior = beta_prior_grid(cfg.beta_a, cfg.beta_b, cfg.oracle_grid);
  }
  const auto objective = ar1_conditional_objective();

  std::vector<detail::ReplicationOut> reps(cfg.replications);
  parallel_for(cfg.replications, cfg.threads, [&](std::size_t r) {
    auto& out = reps[r];
    out.cells.resize(layout.cells.size());
    std::vector<IndividualRecord> recs(cfg.K);
    std::vector<double> theta(cfg.K);
    for (std::size_t k = 0; k < cfg.K; ++k) {
      CounterRng rng(cfg.seed, r, k, Stream::Data);
      theta[k] = cfg.point_mass ? *cfg.point_mass : 2.0 * rng.beta(cfg.beta_a, cfg.beta_b) - 1.0;
      auto& x = recs[k].x;
      x.resize(cfg.length);
      x[0] = rng.normal(0.0, cfg.sigma / std::sqrt(1.0 - theta[k] * theta[k]));
      for (std::size_t t = 1; t < cfg.length; ++t) x[t] = theta[k] * x[t - 1] + rng.normal(0.0, cfg.sigma);
      recs[k].id = std::to_string(k);
      recs[k].theta_hat = ar1_cls(x);
    }
    const Population pop(std::move(recs));
    const auto thetas = pop.thetas();
    const auto pairs = bootstrap_ar1_pairs(pop, cfg.seed, r, cfg.draws);

    WeightSetup base;
    base.scheme = WeightScheme::ThetaOnly;
    auto [b2, b3] = rule_of_thumb_theta(pairs);
    base.bandwidths.b2 = b2;
    base.bandwidths.b3 = b3;
    const auto grid = log_grid(b2.value(), cfg.grid_points);
    const auto sel = select_theta_kde_likelihood(pairs, grid, b3.value() / b2.value());
    const auto setup = with_bandwidth(base, CvAxis::Theta, sel.selected);
    const Eigen::MatrixXd w = weight_matrix(pop, &pairs, setup, detail::all_indices(cfg.K));
    const auto igroup2 = column_estimates(thetas, w);

    std::vector<double> igroup1(cfg.K), oracle(cfg.K);
    for (std::size_t k = 0; k < cfg.K; ++k) {
      WeightVector wk;
      wk.target_id = pop[k].id;
      wk.target_index = k;
      const auto col = w.col(static_cast<Eigen::Index>(k));
      wk.weights.assign(col.data(), col.data() + col.size());
      igroup1[k] = minimize_weighted_objective(objective, pop, wk).value;
      oracle[k] = ar1_posterior_mean(pop[k].x, cfg.sigma, prior);
      out.cells[c_ind].add(thetas[k] - theta[k]);
      out.cells[c_obj].add(igroup1[k] - theta[k]);
      out.cells[c_theta].add(igroup2[k] - theta[k]);
      out.cells[c_oracle].add(oracle[k] - theta[k]);
    }
    out.risks.push_back(risk_decomposition(theta, igroup2, oracle));
    out.risks.push_back(risk_decomposition(theta, igroup1, oracle));
    out.selected.push_back(sel.selected);
  });
  return detail::merge("case2", std::move(layout), risk_slots, reps);
}

// ---------------------------------------------------------------------------
// Case 3: both theta_hat and z

struct SimCase3Config {
  std::size_t row = 0;  // 0 when the fields are set by hand
  std::size_t K = 1024;
  std::size_t n = 5;
  double sigma_x = std::sqrt(1.0);
  double sigma_z = 0.1;
  std::size_t replications = 200;
  std::size_t z_grid_points = 20;
  std::size_t theta_grid_points = 10;
  std::size_t combined_grid_points = 10;
  std::size_t draws = 1;
  bool oracle = true;
  std::uint64_t seed = 1;
  unsigned threads = 1;

  double tau2() const { return sigma_x * sigma_x / static_cast<double>(n); }

  /// Row of the reference configuration table (1-12): (n, tau^2, sigma_z).
  static SimCase3Config table_row(std::size_t row) {
    static constexpr std::array<std::array<double, 3>, 12> rows{{{5, 0.20, 0.10},
                                                                 {5, 0.20, 0.15},
                                                                 {5, 0.20, 0.20},
                                                                 {5, 0.20, 0.30},
                                                                 {10, 0.10, 0.10},
                                                                 {10, 0.10, 0.15},
                                                                 {10, 0.10, 0.20},
                                                                 {10, 0.10, 0.30},
                                                                 {20, 0.05, 0.10},
                                                                 {20, 0.05, 0.15},
                                                                 {20, 0.05, 0.20},
                                                                 {20, 0.05, 0.30}}};
    if (row < 1 || row > rows.size()) fail(ErrorKind::Configuration, "case3: row must be 1..12");
    SimCase3Config c;
    c.row = row;
    const auto& r = rows[row - 1];
    c.n = static_cast<std::size_t>(r[0]);
    c.sigma_x = std::sqrt(r[1] * r[0]);
    c.sigma_z = r[2];
    return c;
  }

  void validate() const {
    if (K < 2) fail(ErrorKind::Configuration, "case3: K must be at least 2");
    if (n < kMinBootstrapSample) {
      fail(ErrorKind::Configuration, "case3: n must be at least " + std::to_string(kMinBootstrapSample));
    }
    if (!(sigma_x > 0.0) || !(sigma_z >= 0.0)) fail(ErrorKind::Configuration, "case3: invalid noise levels");
    if (replications == 0) fail(ErrorKind::Configuration, "case3: replications must be positive");
    if (z_grid_points == 0 || theta_grid_points == 0 || combined_grid_points == 0 || draws == 0) {
      fail(ErrorKind::Configuration, "case3: grid sizes and draws must be positive");
    }
  }
};

inline void apply_config(SimCase3Config& c, const KeyValueConfig& kv) {
  kv.require_known({"row", "K", "n", "sigma_x", "tau2", "sigma_z", "replications", "z_grid_points",
                    "theta_grid_points", "combined_grid_points", "draws", "oracle", "seed"});
  if (kv.has("row")) {
    std::size_t row = 0;
    kv.read("row", row);
    const auto keep_seed = c.seed;
    const auto keep_threads = c.threads;
    c = SimCase3Config::table_row(row);
    c.seed = keep_seed;
    c.threads = keep_threads;
  }
  kv.read("K", c.K);
  kv.read("n", c.n);
  kv.read("sigma_x", c.sigma_x);
  if (kv.has("tau2")) {
    double tau2 = 0.0;
    kv.read("tau2", tau2);
    if (!(tau2 > 0.0)) fail(ErrorKind::Configuration, "case3: tau2 must be positive");
    c.sigma_x = std::sqrt(tau2 * static_cast<double>(c.n));
  }
  kv.read("sigma_z", c.sigma_z);
  kv.read("replications", c.replications);
  kv.read("z_grid_points", c.z_grid_points);
  kv.read("theta_grid_points", c.theta_grid_points);
  kv.read("combined_grid_points", c.combined_grid_points);
  kv.read("draws", c.draws);
  if (kv.has("oracle")) {
    std::size_t flag = 1;
    kv.read("oracle", flag);
    c.oracle = flag != 0;
  }
  kv.read("seed", c.seed);
}

/// E[sin(pi eta) | theta_hat, z] under eta ~ N(0, 1), z | eta ~ N(eta,
/// sigma_z^2), theta_hat | eta ~ N(sin(pi eta), tau2), by Simpson's rule
/// over eta.
inline double case3_target(double theta_hat, double z, double sigma_z, double tau2) {
  if (sigma_z == 0.0) return std::sin(std::numbers::pi * z);
  const double s2 = sigma_z * sigma_z;
  const double m = z / (1.0 + s2);
  const double sd = std::sqrt(s2 / (1.0 + s2));
  // One full period of sin beyond +-8 sd catches modes that theta_hat pulls
  // away from z.
  const double half = 8.0 * sd + 2.0;
  const double h_max = std::min(sd, std::sqrt(tau2) / std::numbers::pi) / 10.0;
  int points = static_cast<int>(std::ceil(2.0 * half / h_max)) + 1;
  if (points % 2 == 0) ++points;
  const double h = 2.0 * half / (points - 1);
  std::vector<double> logw(points);
  double top = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < points; ++i) {
    const double eta = m - half + h * i;
    const double d = theta_hat - std::sin(std::numbers::pi * eta);
    const double u = (eta - m) / sd;
    logw[i] = -0.5 * u * u - 0.5 * d * d / tau2;
    top = std::max(top, logw[i]);
  }
  double num = 0.0;
  double den = 0.0;
  for (int i = 0; i < points; ++i) {
    const double coef = (i == 0 || i == points - 1) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
    const double w = coef * std::exp(logw[i] - top);
    num += w * std::sin(std::numbers::pi * (m - half + h * i));
    den += w;
  }
  return num / den;
}

inline SimulationReport run_case3(const SimCase3Config& cfg) {
  cfg.validate();
  detail::CellLayout layout;
  const std::string label = cfg.row ? "row=" + std::to_string(cfg.row)
                                    : "n=" + std::to_string(cfg.n) + ",sigma=" + detail::format_param(cfg.sigma_z);
  const auto c_ind = layout.add(label, "individual", "population", kNaN, false);
  const auto c_theta = layout.add(label, "igroup_theta", "population", kNaN, false, 0);
  const auto c_z = layout.add(label, "igroup_z", "population", kNaN, false, 1);
  const auto c_comb = layout.add(label, "igroup_combined", "population", kNaN, false, 2);
  const std::vector<detail::RiskSlot> risk_slots{
      {label, "individual"}, {label, "igroup_theta"}, {label, "igroup_z"}, {label, "igroup_combined"}};

  std::vector<detail::ReplicationOut> reps(cfg.replications);
  parallel_for(cfg.replications, cfg.threads, [&](std::size_t r) {
    auto& out = reps[r];
    out.cells.resize(layout.cells.size());
    std::vector<double> theta(cfg.K), z(cfg.K), theta_hat(cfg.K);
    std::vector<std::vector<double>> xs(cfg.K);
    for (std::size_t k = 0; k < cfg.K; ++k) {
      CounterRng rng(cfg.seed, r, k, Stream::Data);
      const double eta = rng.normal();
      theta[k] = std::sin(std::numbers::pi * eta);
      z[k] = eta + cfg.sigma_z * rng.normal();
      xs[k].resize(cfg.n);
      for (auto& v : xs[k]) v = rng.normal(theta[k], cfg.sigma_x);
      theta_hat[k] = sample_mean(xs[k]);
    }
    const auto pop = detail::scalar_population(theta_hat, z, std::move(xs));
    const auto pairs = bootstrap_mean_pairs(pop, cfg.seed, r, cfg.draws);

    // z only
    CvConfig cz;
    cz.setup.scheme = WeightScheme::ZOnly;
    cz.setup.bandwidths.b1 = rule_of_thumb_z(pop);
    cz.grid = log_grid(cz.setup.bandwidths.b1->value(), cfg.z_grid_points);
    const auto sz = cv_sweep(pop, nullptr, cz);

    // theta only
    CvConfig ct;
    ct.setup.scheme = WeightScheme::ThetaOnly;
    auto [b2, b3] = rule_of_thumb_theta(pairs);
    ct.setup.bandwidths.b2 = b2;
    ct.setup.bandwidths.b3 = b3;
    ct.axis = CvAxis::Theta;
    ct.grid = log_grid(b2.value(), cfg.theta_grid_points);
    const auto st = cv_sweep(pop, &pairs, ct);

    // combined: theta bandwidths from the theta-only selection, b1 by CV
    CvConfig cc;
    cc.setup = with_bandwidth(ct.setup, CvAxis::Theta, st.report.selected);
    cc.setup.scheme = WeightScheme::Combined;
    cc.setup.bandwidths.b1 = cz.setup.bandwidths.b1;
    // Reaches far enough that the top of the grid is close to the theta-only weights.
    cc.grid = log_grid(cz.setup.bandwidths.b1->value(), cfg.combined_grid_points, 0.1, 50.0);
    const auto sc = cv_sweep(pop, &pairs, cc);

    const auto& e_t = st.estimates[st.report.selected_index];
    const auto& e_z = sz.estimates[sz.report.selected_index];
    const auto& e_c = sc.estimates[sc.report.selected_index];
    for (std::size_t k = 0; k < cfg.K; ++k) {
      out.cells[c_ind].add(theta_hat[k] - theta[k]);
      out.cells[c_theta].add(e_t[k] - theta[k]);
      out.cells[c_z].add(e_z[k] - theta[k]);
      out.cells[c_comb].add(e_c[k] - theta[k]);
    }
    if (cfg.oracle) {
      std::vector<double> target(cfg.K);
      for (std::size_t k = 0; k < cfg.K; ++k) {
        target[k] = cfg.sigma_z == 0.0 ? theta[k] : case3_target(theta_hat[k], z[k], cfg.sigma_z, cfg.tau2());
      }
      out.risks.push_back(risk_decomposition(theta, theta_hat, target));
      out.risks.push_back(risk_decomposition(theta, e_t, target));
      out.risks.push_back(risk_decomposition(theta, e_z, target));
      out.risks.push_back(risk_decomposition(theta, e_c, target));
    }
    out.selected = {st.report.selected, sz.report.selected, sc.report.selected};
  });
  return detail::merge("case3", std::move(layout), risk_slots, reps);
}

}  // namespace igroup
