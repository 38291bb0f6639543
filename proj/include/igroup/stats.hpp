#pragma once

#include <cmath>
#include <numbers>
#include <numeric>
#include <span>
#include <vector>

namespace igroup {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

inline double mean_of(std::span<const double> v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

/// Standard error of the mean (sample sd / sqrt(n)); 0 for fewer than two values.
inline double standard_error(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

/// Pooled estimation errors for one report cell. Errors arrive in
/// replication batches; the Monte-Carlo standard error of the MSE is taken
/// over the per-replication MSEs.
class ErrorStats {
 public:
  void add_replication(std::span<const double> errors) {
    double s = 0.0;
    double ss = 0.0;
    for (double e : errors) {
      s += e;
      ss += e * e;
    }
    add_sums(s, ss, errors.size());
  }

  /// One replication given as (sum of errors, sum of squares, count).
  void add_sums(double sum, double sumsq, std::size_t count) {
    count_ += count;
    sum_ += sum;
    sumsq_ += sumsq;
    replication_mse_.push_back(count == 0 ? 0.0 : sumsq / static_cast<double>(count));
    replication_mean_.push_back(count == 0 ? 0.0 : sum / static_cast<double>(count));
  }

  void add_replication(double error) { add_replication(std::span<const double>(&error, 1)); }

  std::size_t count() const { return count_; }
  std::size_t replications() const { return replication_mse_.size(); }
  double bias() const { return count_ == 0 ? 0.0 : sum_ / static_cast<double>(count_); }
  double mse() const { return count_ == 0 ? 0.0 : sumsq_ / static_cast<double>(count_); }
  double variance() const { return mse() - bias() * bias(); }
  double mse_se() const { return standard_error(replication_mse_); }
  double bias_se() const { return standard_error(replication_mean_); }
  const std::vector<double>& replication_mse() const { return replication_mse_; }
  const std::vector<double>& replication_mean() const { return replication_mean_; }

 private:
  std::size_t count_ = 0;
  double sum_ = 0.0;
  double sumsq_ = 0.0;
  std::vector<double> replication_mse_;
  std::vector<double> replication_mean_;
};

/// Mean and standard error of paired per-replication differences a - b.
struct PairedDifference {
  double mean = 0.0;
  double se = 0.0;
};

inline PairedDifference paired_difference(std::span<const double> a, std::span<const double> b) {
  std::vector<double> d(std::min(a.size(), b.size()));
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = a[i] - b[i];
  return {mean_of(d), standard_error(d)};
}

/// Least-squares slope of y on x.
inline double ols_slope(std::span<const double> x, std::span<const double> y) {
  const double mx = mean_of(x);
  const double my = mean_of(y);
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxx > 0.0 ? sxy / sxx : 0.0;
}

}  // namespace igroup
