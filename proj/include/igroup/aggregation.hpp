#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "igroup/error.hpp"
#include "igroup/population.hpp"
#include "igroup/weights.hpp"

namespace igroup {

enum class AggregationMethod { EstimatorAverage, ObjectiveMinimum };

struct AggregateEstimate {
  std::string target_id;
  double value = 0.0;
  AggregationMethod method = AggregationMethod::EstimatorAverage;
  double weight_sum = 0.0;
  std::size_t iterations = 0;
};

/// Per-individual loss M_k(theta), declared convex on [lo, hi].
struct ObjectiveSpec {
  std::function<double(double, const IndividualRecord&)> eval;
  double lo = -1.0;
  double hi = 1.0;
  bool convex = true;
};

/// Sum of weights below which a neighborhood counts as empty.
inline constexpr double kMinWeightSum = 1e-12;

inline double weighted_mean(std::span<const double> values, std::span<const double> weights) {
  if (values.size() != weights.size()) {
    fail(ErrorKind::InvalidInput, "weighted mean: " + std::to_string(values.size()) + " values but " +
                                      std::to_string(weights.size()) + " weights");
  }
  double num = 0.0;
  double den = 0.0;
  std::size_t positive = 0;
  std::size_t first = 0;
  for (std::size_t k = 0; k < values.size(); ++k) {
    if (weights[k] == 0.0) continue;
    if (positive++ == 0) first = k;
    num += weights[k] * (values[k] - values[first]);
    den += weights[k];
  }
  if (den <= kMinWeightSum) fail(ErrorKind::EmptyNeighborhood, "weights sum to zero");
  if (positive == 1) return values[first];
  return values[first] + num / den;
}

/// Copy of w with the target's own weight removed.
inline WeightVector without_self(WeightVector w) {
  w.weights.at(w.target_index) = 0.0;
  return w;
}

/// Search bracket [min - 3 IQR, max + 3 IQR] over positively weighted
/// estimates, for location-type parameters.
inline std::pair<double, double> location_bracket(std::span<const double> thetas,
                                                  std::span<const double> weights) {
  std::vector<double> v;
  for (std::size_t k = 0; k < thetas.size(); ++k) {
    if (k < weights.size() && weights[k] > 0.0) v.push_back(thetas[k]);
  }
  if (v.empty()) fail(ErrorKind::EmptyNeighborhood, "no positively weighted estimates");
  std::sort(v.begin(), v.end());
  auto at = [&](double p) {
    const double pos = p * static_cast<double>(v.size() - 1);
    const auto i = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(i);
    return i + 1 < v.size() ? v[i] * (1.0 - frac) + v[i + 1] * frac : v[i];
  };
  double iqr = at(0.75) - at(0.25);
  if (!(iqr > 0.0)) iqr = std::max(1.0, std::abs(v.back()));
  return {v.front() - 3.0 * iqr, v.back() + 3.0 * iqr};
}

inline AggregateEstimate aggregate_estimators(std::span<const double> thetas, const WeightVector& w) {
  AggregateEstimate out;
  out.target_id = w.target_id;
  out.method = AggregationMethod::EstimatorAverage;
  out.weight_sum = w.sum();
  if (out.weight_sum <= kMinWeightSum) {
    fail(ErrorKind::EmptyNeighborhood, "empty neighborhood for target '" + w.target_id + "'");
  }
  out.value = weighted_mean(thetas, w.weights);
  return out;
}

struct GoldenSectionResult {
  double argmin;
  std::size_t iterations;
};

/// Golden-section search for the minimum of a convex f on [lo, hi].
template <typename F>
GoldenSectionResult golden_section(F&& f, double lo, double hi, double tol = 1e-8,
                                   std::size_t max_iterations = 200) {
  if (!(lo <= hi)) fail(ErrorKind::InvalidInput, "golden section: empty bracket");
  constexpr double kInvPhi = 0.6180339887498949;
  double a = lo;
  double b = hi;
  double c = b - kInvPhi * (b - a);
  double d = a + kInvPhi * (b - a);
  double fc = f(c);
  double fd = f(d);
  std::size_t it = 0;
  while (b - a > tol && it < max_iterations) {
    ++it;
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - kInvPhi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + kInvPhi * (b - a);
      fd = f(d);
    }
  }
  return {0.5 * (a + b), it};
}

/// argmin over obj's domain of sum_k w_k M_k(theta).
inline AggregateEstimate minimize_weighted_objective(const ObjectiveSpec& obj, const Population& pop,
                                                     const WeightVector& w) {
  if (!obj.convex) fail(ErrorKind::Configuration, "objective aggregation requires a convex objective");
  if (!obj.eval) fail(ErrorKind::Configuration, "objective has no evaluation function");
  if (w.size() != pop.size()) {
    fail(ErrorKind::InvalidInput, "weight vector does not match population size");
  }
  AggregateEstimate out;
  out.target_id = w.target_id;
  out.method = AggregationMethod::ObjectiveMinimum;
  out.weight_sum = w.sum();
  if (out.weight_sum <= kMinWeightSum) {
    fail(ErrorKind::EmptyNeighborhood, "empty neighborhood for target '" + w.target_id + "'");
  }

  std::vector<std::size_t> active;
  for (std::size_t k = 0; k < w.size(); ++k) {
    if (w.weights[k] > 0.0) active.push_back(k);
  }
  const double scale = 1.0 / out.weight_sum;
  auto total = [&](double theta) {
    double s = 0.0;
    for (auto k : active) {
      const double m = obj.eval(theta, pop[k]);
      if (!std::isfinite(m)) {
        std::ostringstream msg;
        msg << "objective is not finite at theta=" << theta << " for record '" << pop[k].id << "'";
        fail(ErrorKind::ObjectiveEvaluation, msg.str());
      }
      s += w.weights[k] * scale * m;
    }
    return s;
  };
  const auto r = golden_section(total, obj.lo, obj.hi);
  out.value = r.argmin;
  out.iterations = r.iterations;
  return out;
}

/// Tilted absolute loss whose minimizer is the alpha-quantile.
inline double check_loss(double r, double theta, double alpha) {
  return std::abs(r - theta) * (r > theta ? alpha : 1.0 - alpha);
}

/// Smallest value v whose cumulative weight reaches alpha of the total
/// (left-continuous inverse of the weighted empirical distribution).
inline double weighted_quantile(std::span<const double> values, std::span<const double> weights,
                                double alpha) {
  if (values.empty()) fail(ErrorKind::InvalidInput, "weighted quantile of an empty sample");
  if (values.size() != weights.size()) {
    fail(ErrorKind::InvalidInput, "weighted quantile: values and weights differ in length");
  }
  if (!(alpha > 0.0 && alpha < 1.0)) fail(ErrorKind::InvalidInput, "alpha must lie in (0, 1)");
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) fail(ErrorKind::InvalidInput, "weights must be nonnegative");
    total += w;
  }
  if (total <= kMinWeightSum) fail(ErrorKind::EmptyNeighborhood, "weights sum to zero");
  // The relative slack absorbs rounding in the running sum.
  const double threshold = alpha * total * (1.0 - 1e-12);
  double cumulative = 0.0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    cumulative += weights[order[i]];
    const bool last_of_tie = i + 1 == order.size() || values[order[i + 1]] != values[order[i]];
    if (last_of_tie && cumulative >= threshold) {
      return values[order[i]];
    }
  }
  return values[order.back()];
}

/// Estimator-average iGroup estimate for each column of a weight matrix.
inline std::vector<double> column_estimates(std::span<const double> thetas, const Eigen::MatrixXd& w) {
  std::vector<double> out(static_cast<std::size_t>(w.cols()));
  for (Eigen::Index c = 0; c < w.cols(); ++c) {
    out[static_cast<std::size_t>(c)] = weighted_mean(
        thetas, std::span<const double>(w.col(c).data(), static_cast<std::size_t>(w.rows())));
  }
  return out;
}

/// Estimator-average iGroup estimate for every individual, self included.
inline std::vector<double> aggregate_all(const Population& pop, const BootstrapPairs* pairs,
                                         const WeightSetup& setup, unsigned threads = 1) {
  return column_estimates(pop.thetas(), weight_matrix(pop, pairs, setup, threads));
}

inline double weighted_quantile(std::span<const double> values, const WeightVector& w, double alpha) {
  return weighted_quantile(values, w.weights, alpha);
}

}  // namespace igroup
