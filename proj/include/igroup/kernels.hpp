#pragma once

#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "igroup/error.hpp"

namespace igroup {

enum class KernelFamily { Gaussian, Epanechnikov, Boxcar };

struct KernelSpec {
  KernelFamily family = KernelFamily::Gaussian;

  /// Half-width of the support in kernel units; infinite for Gaussian.
  /// Beyond 7.5 the Gaussian density is below 1e-12 of its peak.
  double effective_support() const {
    return family == KernelFamily::Gaussian ? 7.5 : 1.0;
  }
};

inline std::string_view to_string(KernelFamily family) {
  switch (family) {
    case KernelFamily::Gaussian: return "gaussian";
    case KernelFamily::Epanechnikov: return "epanechnikov";
    case KernelFamily::Boxcar: return "boxcar";
  }
  return "gaussian";
}

inline KernelSpec parse_kernel(std::string_view name) {
  if (name == "gaussian") return {KernelFamily::Gaussian};
  if (name == "epanechnikov") return {KernelFamily::Epanechnikov};
  if (name == "boxcar") return {KernelFamily::Boxcar};
  fail(ErrorKind::Configuration,
       "unknown kernel '" + std::string(name) +
           "' (expected gaussian|epanechnikov|boxcar)");
}

/// A positive smoothing bandwidth with optional per-axis scale factors.
class Bandwidth {
 public:
  explicit Bandwidth(double value, std::vector<double> axis_scale = {})
      : value_(value), axis_scale_(std::move(axis_scale)) {
    if (!(value_ > 0.0) || !std::isfinite(value_)) {
      fail(ErrorKind::InvalidBandwidth,
           "bandwidth must be positive and finite, got " + std::to_string(value_));
    }
    for (double s : axis_scale_) {
      if (!(s > 0.0) || !std::isfinite(s)) {
        fail(ErrorKind::InvalidBandwidth, "axis scale factors must be positive");
      }
    }
  }

  double value() const { return value_; }
  const std::vector<double>& axis_scale() const { return axis_scale_; }
  bool isotropic() const { return axis_scale_.empty(); }

  /// Scale factor for axis i (1 when isotropic).
  double scale(std::size_t i) const {
    return axis_scale_.empty() ? 1.0 : axis_scale_.at(i);
  }

  Bandwidth scaled(double factor) const {
    return Bandwidth(value_ * factor, axis_scale_);
  }

 private:
  double value_;
  std::vector<double> axis_scale_;
};

namespace detail {
inline constexpr double kInvSqrt2Pi = 0.3989422804014327;  // 1/sqrt(2*pi)
}

/// K(u) without input validation, for inner loops.
inline double kernel_value(KernelFamily family, double u) noexcept {
  switch (family) {
    case KernelFamily::Gaussian:
      return detail::kInvSqrt2Pi * std::exp(-0.5 * u * u);
    case KernelFamily::Epanechnikov:
      return std::abs(u) <= 1.0 ? 0.75 * (1.0 - u * u) : 0.0;
    case KernelFamily::Boxcar:
      return std::abs(u) <= 1.0 ? 0.5 : 0.0;
  }
  return 0.0;
}

inline double kernel_eval(const KernelSpec& spec, double u) {
  if (!std::isfinite(u)) fail(ErrorKind::InvalidInput, "kernel argument must be finite");
  return kernel_value(spec.family, u);
}

/// K(distance / b).
inline double kernel_weight(const KernelSpec& spec, double distance, const Bandwidth& b) {
  if (!(distance >= 0.0)) {
    fail(ErrorKind::InvalidInput, "distance must be nonnegative");
  }
  return kernel_eval(spec, distance / b.value());
}

/// Silverman's rule of thumb 1.06 * sd * n^(-1/(d+4)).
inline double rule_of_thumb(double sample_sd, std::size_t n, std::size_t dim = 1) {
  if (n == 0) fail(ErrorKind::InvalidInput, "rule-of-thumb bandwidth needs a nonempty sample");
  const double exponent = -1.0 / (static_cast<double>(dim) + 4.0);
  return 1.06 * sample_sd * std::pow(static_cast<double>(n), exponent);
}

}  // namespace igroup
