#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "igroup/aggregation.hpp"
#include "igroup/error.hpp"
#include "igroup/parallel.hpp"
#include "igroup/weights.hpp"

namespace igroup {

/// Cross-validation set: everyone, or the z-ball of radius epsilon around a
/// center. Without an explicit epsilon the radius starts at the z
/// rule-of-thumb bandwidth and grows by 1.5x until min_size members exist.
struct Omega0 {
  bool all = true;
  std::string center_id;
  std::optional<double> epsilon;
  std::size_t min_size = 30;

  static Omega0 global() { return {}; }
  static Omega0 local(std::string center, std::optional<double> eps = std::nullopt) {
    Omega0 o;
    o.all = false;
    o.center_id = std::move(center);
    o.epsilon = eps;
    return o;
  }
};

/// Which bandwidth the grid sweeps: b1 (z kernel) or b2 (theta kernels; b3
/// keeps its ratio to b2 from the base setup).
enum class CvAxis { B1, Theta };

struct CvConfig {
  std::vector<double> grid;
  Omega0 omega;
  WeightSetup setup;
  CvAxis axis = CvAxis::B1;
  unsigned threads = 1;
};

struct CvReport {
  std::vector<double> grid;
  std::vector<double> errors;
  double selected = 0.0;
  std::size_t selected_index = 0;
  std::size_t omega0_size = 0;
};

inline void validate_grid(std::span<const double> grid) {
  if (grid.empty()) fail(ErrorKind::Configuration, "bandwidth grid is empty");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] > 0.0) || !std::isfinite(grid[i])) {
      fail(ErrorKind::Configuration, "bandwidth grid values must be positive");
    }
    if (i > 0 && !(grid[i] > grid[i - 1])) {
      fail(ErrorKind::Configuration, "bandwidth grid must be strictly increasing");
    }
  }
}

/// Log-spaced points on [lo_factor * b_rot, hi_factor * b_rot].
inline std::vector<double> log_grid(double b_rot, std::size_t points = 20, double lo_factor = 0.05,
                                    double hi_factor = 5.0) {
  if (!(b_rot > 0.0)) fail(ErrorKind::Configuration, "reference bandwidth must be positive");
  if (points == 0) fail(ErrorKind::Configuration, "grid needs at least one point");
  std::vector<double> out(points);
  if (points == 1) {
    out[0] = b_rot;
    return out;
  }
  const double a = std::log(lo_factor * b_rot);
  const double b = std::log(hi_factor * b_rot);
  for (std::size_t i = 0; i < points; ++i) {
    out[i] = std::exp(a + (b - a) * static_cast<double>(i) / static_cast<double>(points - 1));
  }
  return out;
}

/// Leave-one-out estimate for individual k from its weight column w(.; k).
inline double loo_estimate(std::span<const double> thetas, std::span<const double> weights_for_k,
                           std::size_t k) {
  if (thetas.size() != weights_for_k.size()) {
    fail(ErrorKind::InvalidInput, "leave-one-out: weights and estimates differ in length");
  }
  // Deviations from the first contributing estimate keep constant inputs exact.
  double num = 0.0;
  double den = 0.0;
  double ref = 0.0;
  bool have_ref = false;
  for (std::size_t l = 0; l < thetas.size(); ++l) {
    if (l == k || weights_for_k[l] == 0.0) continue;
    if (!have_ref) {
      ref = thetas[l];
      have_ref = true;
    }
    num += (thetas[l] - ref) * weights_for_k[l];
    den += weights_for_k[l];
  }
  if (den <= kMinWeightSum) {
    fail(ErrorKind::EmptyNeighborhood,
         "leave-one-out neighborhood of individual " + std::to_string(k) + " is empty");
  }
  return ref + num / den;
}

inline double loo_estimate(const Population& pop, const WeightVector& weights_for_k, const std::string& k) {
  const auto thetas = pop.thetas();
  const std::size_t idx = pop.index_of(k);
  try {
    return loo_estimate(thetas, weights_for_k.weights, idx);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::EmptyNeighborhood) throw;
    fail(ErrorKind::EmptyNeighborhood, "leave-one-out neighborhood of '" + k + "' is empty");
  }
}

inline std::vector<std::size_t> omega0_indices(const Population& pop, const Omega0& omega) {
  if (omega.all) return detail::all_indices(pop.size());
  const std::size_t center = pop.index_of(omega.center_id);
  const auto zs = detail::z_views(pop);
  std::vector<double> dist(pop.size());
  for (std::size_t k = 0; k < pop.size(); ++k) dist[k] = euclidean(zs[center], zs[k]);

  auto ball = [&](double eps) {
    std::vector<std::size_t> out;
    for (std::size_t k = 0; k < pop.size(); ++k) {
      if (k != center && dist[k] <= eps) out.push_back(k);
    }
    return out;
  };
  if (omega.epsilon) {
    auto out = ball(*omega.epsilon);
    if (out.empty()) {
      fail(ErrorKind::Configuration,
           "cross-validation set is empty for epsilon=" + std::to_string(*omega.epsilon));
    }
    return out;
  }
  const std::size_t floor = std::min(omega.min_size, pop.size() - 1);
  if (floor == 0) fail(ErrorKind::Configuration, "cross-validation needs at least two individuals");
  double eps = rule_of_thumb_z(pop).value();
  auto out = ball(eps);
  while (out.size() < floor) {
    eps *= 1.5;
    out = ball(eps);
  }
  return out;
}

/// Mean squared leave-one-out error over omega, given the weight columns
/// for those individuals (column c belongs to omega[c]).
inline double cv_error(std::span<const double> thetas, const Eigen::MatrixXd& w,
                       std::span<const std::size_t> omega) {
  if (omega.empty()) fail(ErrorKind::Configuration, "cross-validation set is empty");
  double sum = 0.0;
  for (std::size_t c = 0; c < omega.size(); ++c) {
    const auto col = w.col(static_cast<Eigen::Index>(c));
    const double pred =
        loo_estimate(thetas, std::span<const double>(col.data(), static_cast<std::size_t>(col.size())), omega[c]);
    const double d = pred - thetas[omega[c]];
    sum += d * d;
  }
  return sum / static_cast<double>(omega.size());
}

/// Setup with the swept bandwidth replaced by value.
inline WeightSetup with_bandwidth(const WeightSetup& base, CvAxis axis, double value) {
  WeightSetup s = base;
  if (axis == CvAxis::B1) {
    s.bandwidths.b1 = base.bandwidths.b1 ? Bandwidth(value, base.bandwidths.b1->axis_scale())
                                         : Bandwidth(value);
  } else {
    const double ratio = (base.bandwidths.b2 && base.bandwidths.b3)
                             ? base.bandwidths.b3->value() / base.bandwidths.b2->value()
                             : 1.0;
    s.bandwidths.b2 = Bandwidth(value);
    s.bandwidths.b3 = Bandwidth(value * ratio);
  }
  return s;
}

inline double cv_error(const Population& pop, const BootstrapPairs* pairs, double b, const CvConfig& cfg) {
  const auto omega = omega0_indices(pop, cfg.omega);
  const auto setup = with_bandwidth(cfg.setup, cfg.axis, b);
  const Eigen::MatrixXd w = weight_matrix(pop, pairs, setup, omega, cfg.threads);
  return cv_error(pop.thetas(), w, omega);
}

/// Leave-one-out CV error with the objective-minimizer in place of the
/// weighted average: each k in omega is predicted by argmin of
/// sum_{l != k} w(l;k) M_l(theta).
inline double cv_error_objective(const ObjectiveSpec& obj, const Population& pop, const Eigen::MatrixXd& w,
                                 std::span<const std::size_t> omega) {
  const auto thetas = pop.thetas();
  double sum = 0.0;
  for (std::size_t c = 0; c < omega.size(); ++c) {
    WeightVector wk;
    wk.target_index = omega[c];
    wk.target_id = pop[omega[c]].id;
    const auto col = w.col(static_cast<Eigen::Index>(c));
    wk.weights.assign(col.data(), col.data() + col.size());
    const auto est = minimize_weighted_objective(obj, pop, without_self(std::move(wk)));
    const double d = est.value - thetas[omega[c]];
    sum += d * d;
  }
  return sum / static_cast<double>(omega.size());
}

/// Picks the smallest-error grid point (ties toward the smaller bandwidth).
/// Grid points whose neighborhoods are empty score +infinity.
inline CvReport select_from_errors(std::span<const double> grid, std::vector<double> errors,
                                   std::size_t omega_size) {
  CvReport r;
  r.grid.assign(grid.begin(), grid.end());
  r.errors = std::move(errors);
  r.omega0_size = omega_size;
  double best = std::numeric_limits<double>::infinity();
  bool found = false;
  for (std::size_t i = 0; i < r.grid.size(); ++i) {
    if (r.errors[i] < best) {
      best = r.errors[i];
      r.selected_index = i;
      found = true;
    }
  }
  if (!found) fail(ErrorKind::EmptyNeighborhood, "every grid bandwidth produced an empty neighborhood");
  r.selected = r.grid[r.selected_index];
  return r;
}

inline CvReport select_bandwidth(const Population& pop, const BootstrapPairs* pairs, const CvConfig& cfg) {
  validate_grid(cfg.grid);
  const auto omega = omega0_indices(pop, cfg.omega);
  const auto thetas = pop.thetas();
  std::vector<double> errors(cfg.grid.size(), std::numeric_limits<double>::infinity());
  parallel_for(cfg.grid.size(), cfg.threads, [&](std::size_t i) {
    const auto setup = with_bandwidth(cfg.setup, cfg.axis, cfg.grid[i]);
    try {
      const Eigen::MatrixXd w = weight_matrix(pop, pairs, setup, omega, 1);
      errors[i] = cv_error(thetas, w, omega);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::EmptyNeighborhood) throw;
    }
  });
  return select_from_errors(cfg.grid, std::move(errors), omega.size());
}

/// Bandwidth for the theta kernels chosen as a density-estimation problem:
/// leave-one-out log-likelihood of the product-Gaussian KDE of the bootstrap
/// pairs (first, second). Grid values are b2; b3 = b2 * b3_over_b2. Errors
/// are the negated mean log-likelihood, so the usual argmin applies.
inline CvReport select_theta_kde_likelihood(const BootstrapPairs& pairs, std::span<const double> grid,
                                            double b3_over_b2 = 1.0, unsigned threads = 1) {
  validate_grid(grid);
  if (!(b3_over_b2 > 0.0)) fail(ErrorKind::Configuration, "b3/b2 ratio must be positive");
  std::vector<double> a, c;
  for (const auto& e : pairs.entries) {
    for (const auto& d : e.draws) {
      a.push_back(d.first);
      c.push_back(d.second);
    }
  }
  const std::size_t n = a.size();
  if (n < 2) fail(ErrorKind::InsufficientData, "density cross-validation needs at least two bootstrap pairs");
  std::vector<double> errors(grid.size(), std::numeric_limits<double>::infinity());
  parallel_for(grid.size(), threads, [&](std::size_t g) {
    const double h1 = grid[g];
    const double h2 = grid[g] * b3_over_b2;
    const double log_norm = std::log(2.0 * std::numbers::pi * h1 * h2 * static_cast<double>(n - 1));
    double ll = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (i == j) continue;
        const double u = (a[j] - a[i]) / h1;
        const double v = (c[j] - c[i]) / h2;
        s += std::exp(-0.5 * (u * u + v * v));
      }
      if (!(s > 0.0)) return;
      ll += std::log(s) - log_norm;
    }
    errors[g] = -ll / static_cast<double>(n);
  });
  return select_from_errors(grid, std::move(errors), n);
}

/// Global cross-validation sweep that also keeps the in-sample estimates
/// for every individual at every grid point (estimates[i][k]).
struct CvSweep {
  CvReport report;
  std::vector<std::vector<double>> estimates;
};

inline CvSweep cv_sweep(const Population& pop, const BootstrapPairs* pairs, const CvConfig& cfg) {
  validate_grid(cfg.grid);
  if (!cfg.omega.all) fail(ErrorKind::Configuration, "a sweep with estimates needs the global set");
  const auto all = detail::all_indices(pop.size());
  const auto thetas = pop.thetas();
  std::vector<double> errors(cfg.grid.size(), std::numeric_limits<double>::infinity());
  CvSweep out;
  out.estimates.resize(cfg.grid.size());
  parallel_for(cfg.grid.size(), cfg.threads, [&](std::size_t i) {
    const auto setup = with_bandwidth(cfg.setup, cfg.axis, cfg.grid[i]);
    Eigen::MatrixXd w;
    try {
      w = weight_matrix(pop, pairs, setup, all, 1);
      out.estimates[i] = column_estimates(thetas, w);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::EmptyNeighborhood) throw;
      out.estimates[i].assign(pop.size(), std::numeric_limits<double>::quiet_NaN());
      return;
    }
    // Leave-one-out can be empty for an isolated individual even when its
    // in-sample estimate exists.
    try {
      errors[i] = cv_error(thetas, w, all);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::EmptyNeighborhood) throw;
    }
  });
  out.report = select_from_errors(cfg.grid, std::move(errors), all.size());
  return out;
}

}  // namespace igroup
