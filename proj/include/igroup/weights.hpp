#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "igroup/distances.hpp"
#include "igroup/error.hpp"
#include "igroup/kernels.hpp"
#include "igroup/parallel.hpp"
#include "igroup/population.hpp"

namespace igroup {

enum class WeightScheme { ZOnly, ThetaOnly, Combined };

inline std::string_view to_string(WeightScheme scheme) {
  switch (scheme) {
    case WeightScheme::ZOnly: return "z";
    case WeightScheme::ThetaOnly: return "theta";
    case WeightScheme::Combined: return "combined";
  }
  return "z";
}

inline WeightScheme parse_scheme(std::string_view name) {
  if (name == "z") return WeightScheme::ZOnly;
  if (name == "theta") return WeightScheme::ThetaOnly;
  if (name == "combined") return WeightScheme::Combined;
  fail(ErrorKind::Configuration,
       "unknown weight scheme '" + std::string(name) + "' (expected z|theta|combined)");
}

inline bool uses_z(WeightScheme s) { return s != WeightScheme::ThetaOnly; }
inline bool uses_theta(WeightScheme s) { return s != WeightScheme::ZOnly; }

/// K1 smooths z, K2 pairs the target estimate with first bootstrap draws,
/// K3 pairs the other individual with second draws.
struct WeightKernels {
  KernelSpec k1{};
  KernelSpec k2{};
  KernelSpec k3{};
};

/// b1 is shared by w1 and the z-conditioning inside the bootstrap estimate.
struct WeightBandwidths {
  std::optional<Bandwidth> b1;
  std::optional<Bandwidth> b2;
  std::optional<Bandwidth> b3;
};

/// Conjugate model theta ~ N(prior_mean, prior_var), theta_hat | theta ~
/// N(theta, obs_var). Used as an exact oracle for w2.
struct GaussianModelSpec {
  double prior_mean = 0.0;
  double prior_var = 1.0;
  double obs_var = 1.0;

  void validate() const {
    if (!(prior_var > 0.0) || !(obs_var > 0.0) || !std::isfinite(prior_mean)) {
      fail(ErrorKind::InvalidInput, "Gaussian model needs prior_var > 0 and obs_var > 0");
    }
  }

  /// E[theta | theta_hat].
  double posterior_mean(double theta_hat) const {
    return (prior_mean * obs_var + theta_hat * prior_var) / (prior_var + obs_var);
  }
  double posterior_var() const { return prior_var * obs_var / (prior_var + obs_var); }
};

struct WeightVector {
  std::string target_id;
  std::size_t target_index = 0;
  std::vector<double> weights;
  WeightScheme scheme = WeightScheme::ZOnly;
  WeightBandwidths bandwidths;

  double sum() const { return std::accumulate(weights.begin(), weights.end(), 0.0); }
  std::size_t size() const { return weights.size(); }
};

/// Weights below this fraction of the column maximum are set to zero.
inline constexpr double kWeightTruncation = 1e-12;

/// ||a - b|| / b with per-axis scaling.
inline double scaled_distance(std::span<const double> a, std::span<const double> b,
                              const Bandwidth& bw) {
  if (a.size() != b.size()) {
    fail(ErrorKind::InvalidInput, "dimension mismatch (" + std::to_string(a.size()) + " vs " +
                                      std::to_string(b.size()) + ")");
  }
  if (bw.isotropic()) return euclidean(a, b) / bw.value();
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = (a[i] - b[i]) / bw.scale(i);
    sum += d * d;
  }
  return std::sqrt(sum) / bw.value();
}

inline double w1(std::span<const double> z_k, std::span<const double> z_0, const KernelSpec& spec,
                 const Bandwidth& b1) {
  return kernel_value(spec.family, scaled_distance(z_k, z_0, b1));
}

/// Reduced weight for the conjugate Gaussian model:
///   int p(a|t) p(c|t) pi(t) dt / (p(a) p(c))
/// where the numerator is a bivariate normal density with covariance
/// [[v+s, v], [v, v+s]] and each marginal is N(m, v+s).
inline double w2_exact_gaussian(double theta_hat_k, double theta_hat_0, const GaussianModelSpec& model) {
  model.validate();
  const double v = model.prior_var;
  const double s = model.obs_var;
  const double total = v + s;
  const double a = theta_hat_k - model.prior_mean;
  const double c = theta_hat_0 - model.prior_mean;
  const double det = total * total - v * v;  // = s (s + 2v)
  const double joint_quad = (total * a * a - 2.0 * v * a * c + total * c * c) / det;
  const double marginal_quad = (a * a + c * c) / total;
  const double log_ratio = -0.5 * (joint_quad - marginal_quad) + 0.5 * std::log(total * total / det);
  return std::exp(log_ratio);
}

namespace detail {

inline std::vector<std::span<const double>> z_views(const Population& pop) {
  std::vector<std::span<const double>> out;
  out.reserve(pop.size());
  for (const auto& r : pop.records()) {
    if (!r.z) fail(ErrorKind::SchemeMismatch, "record '" + r.id + "' has no z");
    out.emplace_back(*r.z);
  }
  return out;
}

inline std::vector<std::span<const double>> z_views(const BootstrapPairs& pairs) {
  std::vector<std::span<const double>> out;
  out.reserve(pairs.size());
  for (std::size_t j = 0; j < pairs.size(); ++j) {
    if (!pairs.entries[j].z) {
      fail(ErrorKind::SchemeMismatch, "bootstrap entry " + std::to_string(j) + " has no z");
    }
    out.emplace_back(*pairs.entries[j].z);
  }
  return out;
}

inline std::vector<double> pair_thetas(const BootstrapPairs& pairs) {
  std::vector<double> out;
  out.reserve(pairs.size());
  for (const auto& e : pairs.entries) out.push_back(e.theta_hat);
  return out;
}

/// p(theta | z) estimate over (thetas[j], zs[j]); zs empty means unconditional KDE.
inline double conditional_density(std::span<const double> thetas,
                                  std::span<const std::span<const double>> zs, double query_theta,
                                  std::span<const double> query_z, const KernelSpec& k1,
                                  const KernelSpec& k2, const Bandwidth* b1, const Bandwidth& b2,
                                  std::string_view target_label) {
  double num = 0.0;
  double den = 0.0;
  for (std::size_t j = 0; j < thetas.size(); ++j) {
    const double kz = zs.empty() ? 1.0 : kernel_value(k1.family, scaled_distance(query_z, zs[j], *b1));
    den += kz;
    if (kz > 0.0) num += kz * kernel_value(k2.family, (query_theta - thetas[j]) / b2.value());
  }
  if (den < 1e-12) {
    fail(ErrorKind::EmptyNeighborhood,
         "no individuals within kernel support of target '" + std::string(target_label) + "'");
  }
  return num / (den * b2.value());
}

}  // namespace detail

/// Nadaraya-Watson form estimate of p(theta_hat | z):
///   sum_j K1(|z - z_j|/b1) K2(|t - t_j|/b2) / (b2 sum_j K1(|z - z_j|/b1)).
/// Without z (empty query_z) it reduces to the 1-D kernel density estimate.
inline double conditional_density_estimate(const Population& pop, double query_theta,
                                           std::span<const double> query_z, const KernelSpec& k1,
                                           const KernelSpec& k2, const std::optional<Bandwidth>& b1,
                                           const Bandwidth& b2, std::string_view target_label = "query") {
  const auto thetas = pop.thetas();
  if (query_z.empty()) {
    return detail::conditional_density(thetas, {}, query_theta, query_z, k1, k2, nullptr, b2,
                                       target_label);
  }
  if (!b1) fail(ErrorKind::InvalidBandwidth, "conditional density needs a z bandwidth");
  const auto zs = detail::z_views(pop);
  return detail::conditional_density(thetas, zs, query_theta, query_z, k1, k2, &*b1, b2, target_label);
}

inline double conditional_density_estimate(const BootstrapPairs& pairs, double query_theta,
                                           std::span<const double> query_z, const KernelSpec& k1,
                                           const KernelSpec& k2, const std::optional<Bandwidth>& b1,
                                           const Bandwidth& b2, std::string_view target_label = "query") {
  const auto thetas = detail::pair_thetas(pairs);
  if (query_z.empty()) {
    return detail::conditional_density(thetas, {}, query_theta, query_z, k1, k2, nullptr, b2,
                                       target_label);
  }
  if (!b1) fail(ErrorKind::InvalidBandwidth, "conditional density needs a z bandwidth");
  const auto zs = detail::z_views(pairs);
  return detail::conditional_density(thetas, zs, query_theta, query_z, k1, k2, &*b1, b2, target_label);
}

/// Bootstrap estimate of w2(theta_hat_k, theta_hat_target). With
/// condition_on_z the integral estimate is
///   sum_j K1(z_0,z_j) K2(t_0 - t1_j) K3(t_k - t2_j) / sum_j K1(z_0,z_j)
/// and the denominator uses p(t|z); otherwise K1 drops out and both
/// densities are marginal. theta kernels carry their 1/b factors; multiple
/// draws per individual are averaged.
inline double w2_bootstrap(const BootstrapPairs& pairs, std::size_t k, std::size_t target,
                           const WeightKernels& kernels, const WeightBandwidths& bw,
                           bool condition_on_z) {
  if (pairs.size() == 0) fail(ErrorKind::InvalidInput, "bootstrap pairs are empty");
  if (k >= pairs.size() || target >= pairs.size()) {
    fail(ErrorKind::InvalidInput, "individual index out of range");
  }
  if (!bw.b2 || !bw.b3) fail(ErrorKind::InvalidBandwidth, "w2 needs theta bandwidths b2 and b3");
  if (condition_on_z && !pairs.has_z()) {
    fail(ErrorKind::SchemeMismatch, "z-conditioned w2 requires z on every individual");
  }
  if (condition_on_z && !bw.b1) fail(ErrorKind::InvalidBandwidth, "z-conditioned w2 needs b1");

  const auto& tgt = pairs.entries[target];
  const auto& other = pairs.entries[k];
  const double b2 = bw.b2->value();
  const double b3 = bw.b3->value();

  double num = 0.0;
  double den = 0.0;
  for (const auto& e : pairs.entries) {
    const double kz =
        condition_on_z ? kernel_value(kernels.k1.family, scaled_distance(*tgt.z, *e.z, *bw.b1)) : 1.0;
    den += kz;
    if (kz == 0.0) continue;
    double inner = 0.0;
    for (const auto& d : e.draws) {
      inner += kernel_value(kernels.k2.family, (tgt.theta_hat - d.first) / b2) *
               kernel_value(kernels.k3.family, (other.theta_hat - d.second) / b3);
    }
    num += kz * inner / static_cast<double>(e.draws.size());
  }
  if (den < 1e-12) {
    fail(ErrorKind::EmptyNeighborhood, "empty z-neighborhood for target index " + std::to_string(target));
  }
  const double integral = num / (den * b2 * b3);

  const std::span<const double> no_z;
  const auto dens = [&](const BootstrapEntry& e, std::size_t idx) {
    return conditional_density_estimate(pairs, e.theta_hat,
                                        condition_on_z ? std::span<const double>(*e.z) : no_z,
                                        kernels.k1, kernels.k2, bw.b1, *bw.b2, std::to_string(idx));
  };
  const double denom = dens(other, k) * dens(tgt, target);
  if (!(denom > 0.0)) {
    fail(ErrorKind::EmptyNeighborhood, "zero density estimate for target index " + std::to_string(target));
  }
  return integral / denom;
}

/// Inputs for weight construction. pairs may be null for the z-only scheme
/// or when an exact oracle replaces the bootstrap estimate.
struct WeightSetup {
  WeightScheme scheme = WeightScheme::ZOnly;
  WeightKernels kernels{};
  WeightBandwidths bandwidths{};
  std::optional<GaussianModelSpec> oracle;
};

namespace detail {

inline std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> out(n);
  std::iota(out.begin(), out.end(), std::size_t{0});
  return out;
}

inline void validate_setup(const Population& pop, const BootstrapPairs* pairs, const WeightSetup& setup) {
  if (pop.size() == 0) fail(ErrorKind::InvalidInput, "population is empty");
  if (uses_z(setup.scheme)) {
    if (!pop.all_have_z()) {
      fail(ErrorKind::SchemeMismatch,
           std::string("scheme '") + std::string(to_string(setup.scheme)) + "' requires z on every record");
    }
    if (!setup.bandwidths.b1) fail(ErrorKind::InvalidBandwidth, "scheme requires bandwidth b1");
  }
  if (uses_theta(setup.scheme)) {
    if (!pop.all_have_theta()) {
      fail(ErrorKind::SchemeMismatch, "scheme requires theta_hat on every record");
    }
    if (!setup.oracle) {
      if (pairs == nullptr) {
        fail(ErrorKind::SchemeMismatch, "scheme requires bootstrap pairs (or an exact oracle)");
      }
      if (pairs->size() != pop.size()) {
        fail(ErrorKind::InvalidInput, "bootstrap pairs are not aligned with the population");
      }
      if (!setup.bandwidths.b2 || !setup.bandwidths.b3) {
        fail(ErrorKind::InvalidBandwidth, "scheme requires theta bandwidths b2 and b3");
      }
    } else {
      setup.oracle->validate();
    }
  }
}

/// Elementwise K(u) over an array.
// Gaussian values past this u^2 (about 1e-150) are stored as 0 so that
// products of kernel matrices stay out of the subnormal range.
inline constexpr double kGaussianCutoffSq = 690.0;

inline Eigen::ArrayXd kernel_array(KernelFamily family, const Eigen::ArrayXd& u) {
  switch (family) {
    case KernelFamily::Gaussian: {
      const Eigen::ArrayXd u2 = u.square();
      return (u2 <= kGaussianCutoffSq).select(kInvSqrt2Pi * (-0.5 * u2).exp(), 0.0);
    }
    case KernelFamily::Epanechnikov:
      return (u.abs() <= 1.0).select(0.75 * (1.0 - u.square()), Eigen::ArrayXd::Zero(u.size()));
    case KernelFamily::Boxcar:
      return (u.abs() <= 1.0).select(Eigen::ArrayXd::Constant(u.size(), 0.5), Eigen::ArrayXd::Zero(u.size()));
  }
  return Eigen::ArrayXd::Zero(u.size());
}

/// K((p_l - p_t) * inv_b) for scalar points.
inline Eigen::MatrixXd scalar_kernel_matrix(const Eigen::ArrayXd& pts, std::span<const std::size_t> targets,
                                            KernelFamily family, double inv_b, unsigned threads) {
  Eigen::MatrixXd out(pts.size(), static_cast<Eigen::Index>(targets.size()));
  parallel_for(targets.size(), threads, [&](std::size_t c) {
    out.col(static_cast<Eigen::Index>(c)) =
        kernel_array(family, (pts - pts(static_cast<Eigen::Index>(targets[c]))) * inv_b).matrix();
  });
  return out;
}

/// Kernel matrix K(dist(z_l, z_t)/b) for all l and the given targets.
inline Eigen::MatrixXd z_kernel_matrix(std::span<const std::span<const double>> zs,
                                       std::span<const std::size_t> targets, const KernelSpec& spec,
                                       const Bandwidth& b, unsigned threads) {
  const auto n = static_cast<Eigen::Index>(zs.size());
  if (!zs.empty() && zs[0].size() == 1 && b.isotropic()) {
    Eigen::ArrayXd pts(n);
    for (Eigen::Index l = 0; l < n; ++l) pts(l) = zs[static_cast<std::size_t>(l)][0];
    return scalar_kernel_matrix(pts, targets, spec.family, 1.0 / b.value(), threads);
  }
  Eigen::MatrixXd out(n, static_cast<Eigen::Index>(targets.size()));
  parallel_for(targets.size(), threads, [&](std::size_t c) {
    const auto& zt = zs[targets[c]];
    for (Eigen::Index l = 0; l < n; ++l) {
      out(l, static_cast<Eigen::Index>(c)) =
          kernel_value(spec.family, scaled_distance(zs[static_cast<std::size_t>(l)], zt, b));
    }
  });
  return out;
}

/// Density estimates p(t_l | z_l) (or marginal p(t_l)) for every l.
/// kz_full is the n x n z-kernel matrix, or empty without conditioning.
inline std::vector<double> density_estimates(const Eigen::ArrayXd& thetas, const Eigen::MatrixXd& kz_full,
                                             KernelFamily k2, double b2, unsigned threads) {
  const auto n = thetas.size();
  const auto all = all_indices(static_cast<std::size_t>(n));
  const Eigen::MatrixXd kt = scalar_kernel_matrix(thetas, all, k2, 1.0 / b2, threads);
  std::vector<double> dens(static_cast<std::size_t>(n));
  for (Eigen::Index l = 0; l < n; ++l) {
    if (kz_full.size() == 0) {
      dens[static_cast<std::size_t>(l)] = kt.col(l).sum() / (static_cast<double>(n) * b2);
      continue;
    }
    const double den = kz_full.col(l).sum();
    if (den < 1e-12) {
      fail(ErrorKind::EmptyNeighborhood, "no individuals within kernel support of target '" +
                                             std::to_string(l) + "'");
    }
    dens[static_cast<std::size_t>(l)] = kz_full.col(l).dot(kt.col(l)) / (den * b2);
  }
  return dens;
}

/// Bootstrap w2 for all l and the given targets; one GEMM over draws.
inline Eigen::MatrixXd w2_bootstrap_matrix(const BootstrapPairs& pairs, std::span<const std::size_t> targets,
                                           const WeightKernels& kernels, const WeightBandwidths& bw,
                                           bool condition_on_z, unsigned threads) {
  const std::size_t n = pairs.size();
  const std::size_t draws = pairs.entries.front().draws.size();
  for (const auto& e : pairs.entries) {
    if (e.draws.size() != draws) fail(ErrorKind::InvalidInput, "unequal bootstrap draw counts");
  }
  const auto total_draws = static_cast<Eigen::Index>(n * draws);
  const double b2 = bw.b2->value();
  const double b3 = bw.b3->value();
  Eigen::ArrayXd thetas(static_cast<Eigen::Index>(n));
  Eigen::ArrayXd t1(total_draws), t2(total_draws);
  for (std::size_t j = 0; j < n; ++j) {
    thetas(static_cast<Eigen::Index>(j)) = pairs.entries[j].theta_hat;
    for (std::size_t b = 0; b < draws; ++b) {
      t1(static_cast<Eigen::Index>(j * draws + b)) = pairs.entries[j].draws[b].first;
      t2(static_cast<Eigen::Index>(j * draws + b)) = pairs.entries[j].draws[b].second;
    }
  }

  // kz(j, l) = K1(z_j, z_l) over all individuals.
  Eigen::MatrixXd kz;
  if (condition_on_z) {
    const auto zs = z_views(pairs);
    kz = z_kernel_matrix(zs, all_indices(n), kernels.k1, *bw.b1, threads);
  }

  // p3(d, l) = K3((t_l - t2_d)/b3)/b3
  Eigen::MatrixXd p3(total_draws, static_cast<Eigen::Index>(n));
  parallel_for(n, threads, [&](std::size_t l) {
    p3.col(static_cast<Eigen::Index>(l)) =
        (kernel_array(kernels.k3.family, (thetas(static_cast<Eigen::Index>(l)) - t2) / b3) / b3).matrix();
  });
  // q(d, c) = a_j(target) K2((t_target - t1_d)/b2)/b2 / draws, a_j the
  // normalized z-kernel weight (uniform without conditioning).
  const double uniform = 1.0 / static_cast<double>(n);
  Eigen::MatrixXd q(total_draws, static_cast<Eigen::Index>(targets.size()));
  parallel_for(targets.size(), threads, [&](std::size_t c) {
    const auto t = static_cast<Eigen::Index>(targets[c]);
    Eigen::ArrayXd col = kernel_array(kernels.k2.family, (thetas(t) - t1) / b2) / (b2 * static_cast<double>(draws));
    if (condition_on_z) {
      const double s = kz.col(t).sum();
      if (s < 1e-12) {
        fail(ErrorKind::EmptyNeighborhood, "empty z-neighborhood for target index " + std::to_string(targets[c]));
      }
      for (std::size_t j = 0; j < n; ++j) {
        col.segment(static_cast<Eigen::Index>(j * draws), static_cast<Eigen::Index>(draws)) *=
            kz(static_cast<Eigen::Index>(j), t) / s;
      }
    } else {
      col *= uniform;
    }
    q.col(static_cast<Eigen::Index>(c)) = col.matrix();
  });
  Eigen::MatrixXd out;
  out.noalias() = p3.transpose() * q;

  const auto dens = density_estimates(thetas, kz, kernels.k2.family, b2, threads);
  for (Eigen::Index c = 0; c < out.cols(); ++c) {
    const double dt = dens[targets[static_cast<std::size_t>(c)]];
    for (Eigen::Index l = 0; l < out.rows(); ++l) out(l, c) /= dens[static_cast<std::size_t>(l)] * dt;
  }
  return out;
}

inline void truncate_columns(Eigen::MatrixXd& w) {
  for (Eigen::Index c = 0; c < w.cols(); ++c) {
    auto col = w.col(c).array();
    const double cutoff = kWeightTruncation * col.maxCoeff();
    col = (col < cutoff).select(0.0, col);
  }
}

}  // namespace detail

namespace detail {

inline Eigen::MatrixXd w1_matrix(const Population& pop, const WeightSetup& setup,
                                 std::span<const std::size_t> targets, unsigned threads) {
  const auto zs = z_views(pop);
  return z_kernel_matrix(zs, targets, setup.kernels.k1, *setup.bandwidths.b1, threads);
}

inline Eigen::MatrixXd w2_matrix(const Population& pop, const BootstrapPairs* pairs, const WeightSetup& setup,
                                 std::span<const std::size_t> targets, unsigned threads) {
  if (setup.oracle) {
    const auto thetas = pop.thetas();
    Eigen::MatrixXd out(static_cast<Eigen::Index>(pop.size()), static_cast<Eigen::Index>(targets.size()));
    for (Eigen::Index c = 0; c < out.cols(); ++c) {
      const double t0 = thetas[targets[static_cast<std::size_t>(c)]];
      for (Eigen::Index l = 0; l < out.rows(); ++l) {
        out(l, c) = w2_exact_gaussian(thetas[static_cast<std::size_t>(l)], t0, *setup.oracle);
      }
    }
    return out;
  }
  return w2_bootstrap_matrix(*pairs, targets, setup.kernels, setup.bandwidths,
                             setup.scheme == WeightScheme::Combined, threads);
}

inline void check_targets(const Population& pop, std::span<const std::size_t> targets) {
  for (auto t : targets) {
    if (t >= pop.size()) fail(ErrorKind::InvalidInput, "target index out of range");
  }
}

}  // namespace detail

/// Separate w1 and w2 factors for the given targets (column c belongs to
/// targets[c]). A factor the scheme does not use is all ones.
struct WeightFactors {
  Eigen::MatrixXd w1;
  Eigen::MatrixXd w2;
};

inline WeightFactors weight_factors(const Population& pop, const BootstrapPairs* pairs,
                                    const WeightSetup& setup, std::span<const std::size_t> targets,
                                    unsigned threads = 1) {
  detail::validate_setup(pop, pairs, setup);
  detail::check_targets(pop, targets);
  const auto n = static_cast<Eigen::Index>(pop.size());
  const auto m = static_cast<Eigen::Index>(targets.size());
  WeightFactors f;
  f.w1 = uses_z(setup.scheme) ? detail::w1_matrix(pop, setup, targets, threads) : Eigen::MatrixXd::Ones(n, m);
  f.w2 = uses_theta(setup.scheme) ? detail::w2_matrix(pop, pairs, setup, targets, threads)
                                  : Eigen::MatrixXd::Ones(n, m);
  return f;
}

/// Weight matrix with column c holding w(.; targets[c]) = w1 * w2, truncated
/// at kWeightTruncation of each column's maximum. Columns are not checked
/// for emptiness; callers that need a usable neighborhood check the sums.
inline Eigen::MatrixXd weight_matrix(const Population& pop, const BootstrapPairs* pairs,
                                     const WeightSetup& setup, std::span<const std::size_t> targets,
                                     unsigned threads = 1) {
  detail::validate_setup(pop, pairs, setup);
  detail::check_targets(pop, targets);
  Eigen::MatrixXd w;
  switch (setup.scheme) {
    case WeightScheme::ZOnly: w = detail::w1_matrix(pop, setup, targets, threads); break;
    case WeightScheme::ThetaOnly: w = detail::w2_matrix(pop, pairs, setup, targets, threads); break;
    case WeightScheme::Combined:
      w = detail::w1_matrix(pop, setup, targets, threads);
      w.array() *= detail::w2_matrix(pop, pairs, setup, targets, threads).array();
      break;
  }
  detail::truncate_columns(w);
  return w;
}

inline Eigen::MatrixXd weight_matrix(const Population& pop, const BootstrapPairs* pairs,
                                     const WeightSetup& setup, unsigned threads = 1) {
  const auto all = detail::all_indices(pop.size());
  return weight_matrix(pop, pairs, setup, all, threads);
}

/// Weights w(k; target) for every individual k, self included.
inline WeightVector build_weights(const Population& pop, const BootstrapPairs* pairs,
                                  const std::string& target_id, const WeightSetup& setup) {
  const std::size_t target = pop.index_of(target_id);
  const std::size_t targets[] = {target};
  const Eigen::MatrixXd w = weight_matrix(pop, pairs, setup, targets);
  WeightVector out;
  out.target_id = target_id;
  out.target_index = target;
  out.scheme = setup.scheme;
  out.bandwidths = setup.bandwidths;
  out.weights.assign(w.data(), w.data() + w.rows());
  for (double v : out.weights) {
    if (!std::isfinite(v) || v < 0.0) {
      fail(ErrorKind::EmptyNeighborhood, "non-finite weight for target '" + target_id + "'");
    }
  }
  if (!(out.sum() > 0.0)) {
    fail(ErrorKind::EmptyNeighborhood, "all weights vanish for target '" + target_id + "'");
  }
  return out;
}

inline double sample_sd(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

/// Rule-of-thumb bandwidth for z: per-axis sd as anisotropic scale when
/// d > 1, n^(-1/(d+4)) rate.
inline Bandwidth rule_of_thumb_z(const Population& pop) {
  const auto zs = detail::z_views(pop);
  const std::size_t d = pop.z_dim();
  if (d == 0) fail(ErrorKind::InvalidInput, "z has dimension 0");
  std::vector<double> sds(d);
  std::vector<double> column(zs.size());
  for (std::size_t a = 0; a < d; ++a) {
    for (std::size_t k = 0; k < zs.size(); ++k) column[k] = zs[k][a];
    sds[a] = sample_sd(column);
    if (!(sds[a] > 0.0)) sds[a] = 1.0;
  }
  if (d == 1) return Bandwidth(rule_of_thumb(sds[0], zs.size(), 1));
  double log_mean = 0.0;
  for (double s : sds) log_mean += std::log(s);
  const double geo = std::exp(log_mean / static_cast<double>(d));
  for (double& s : sds) s /= geo;
  return Bandwidth(rule_of_thumb(geo, zs.size(), d), sds);
}

/// Rule-of-thumb b2 (first draws) and b3 (second draws), each n^(-1/5).
inline std::pair<Bandwidth, Bandwidth> rule_of_thumb_theta(const BootstrapPairs& pairs) {
  std::vector<double> first, second;
  for (const auto& e : pairs.entries) {
    for (const auto& d : e.draws) {
      first.push_back(d.first);
      second.push_back(d.second);
    }
  }
  auto bw = [&](const std::vector<double>& v) {
    double sd = sample_sd(v);
    if (!(sd > 0.0)) sd = 1e-3;
    return Bandwidth(rule_of_thumb(sd, pairs.size(), 1));
  };
  return {bw(first), bw(second)};
}

/// Rule-of-thumb bandwidths for every component the scheme uses.
inline WeightBandwidths default_bandwidths(const Population& pop, const BootstrapPairs* pairs,
                                           WeightScheme scheme) {
  WeightBandwidths out;
  if (uses_z(scheme)) out.b1 = rule_of_thumb_z(pop);
  if (uses_theta(scheme) && pairs != nullptr) {
    auto [b2, b3] = rule_of_thumb_theta(*pairs);
    out.b2 = b2;
    out.b3 = b3;
  }
  return out;
}

}  // namespace igroup
