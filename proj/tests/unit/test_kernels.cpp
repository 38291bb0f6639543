#include <gtest/gtest.h>

#include <cmath>

#include "igroup/kernels.hpp"

namespace igroup {
namespace {

constexpr KernelFamily kFamilies[] = {KernelFamily::Gaussian, KernelFamily::Epanechnikov,
                                      KernelFamily::Boxcar};

// Normal density recovered as a central difference of the erf-based CDF.
double normal_density_via_erf(double x) {
  const double h = 1e-5;
  auto cdf = [](double v) { return 0.5 * (1.0 + std::erf(v / std::sqrt(2.0))); };
  return (cdf(x + h) - cdf(x - h)) / (2.0 * h);
}

TEST(Kernels, PointValues) {
  EXPECT_NEAR(kernel_eval({KernelFamily::Gaussian}, 0.0), 0.3989422804014327, 1e-15);
  EXPECT_DOUBLE_EQ(kernel_eval({KernelFamily::Epanechnikov}, 0.0), 0.75);
  EXPECT_DOUBLE_EQ(kernel_eval({KernelFamily::Boxcar}, 1.5), 0.0);
  EXPECT_DOUBLE_EQ(kernel_eval({KernelFamily::Boxcar}, 1.0), 0.5);
}

TEST(Kernels, WeightExamples) {
  EXPECT_NEAR(kernel_weight({KernelFamily::Gaussian}, 0.0, Bandwidth(1.0)), 0.398942, 1e-6);
  EXPECT_DOUBLE_EQ(kernel_weight({KernelFamily::Boxcar}, 2.0, Bandwidth(1.0)), 0.0);
  const double w = kernel_weight({KernelFamily::Gaussian}, 1.0, Bandwidth(2.0));
  EXPECT_NEAR(w, normal_density_via_erf(0.5), 1e-9);
  EXPECT_NEAR(w, 0.352065, 1e-6);
}

TEST(Kernels, Errors) {
  const KernelSpec g{};
  EXPECT_THROW(kernel_eval(g, std::nan("")), Error);
  EXPECT_THROW(kernel_eval(g, INFINITY), Error);
  EXPECT_THROW(Bandwidth(0.0), Error);
  EXPECT_THROW(Bandwidth(-1.0), Error);
  EXPECT_THROW(Bandwidth(1.0, {1.0, 0.0}), Error);
  try {
    Bandwidth bad(0.0);
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidBandwidth);
  }
  EXPECT_THROW(kernel_weight(g, -1.0, Bandwidth(1.0)), Error);
}

TEST(Kernels, NonnegativeSymmetricAndDecaying) {
  for (auto f : kFamilies) {
    const KernelSpec spec{f};
    double previous = kernel_eval(spec, 0.0);
    for (double u = 0.0; u <= 5.0; u += 0.01) {
      const double v = kernel_eval(spec, u);
      EXPECT_GE(v, 0.0);
      EXPECT_EQ(v, kernel_eval(spec, -u));
      EXPECT_LE(v, previous + 1e-15) << "family " << to_string(f) << " u=" << u;
      previous = v;
    }
  }
}

TEST(Kernels, FiniteIntegralAndTailCondition) {
  for (auto f : kFamilies) {
    const KernelSpec spec{f};
    double integral = 0.0;
    const double h = 1e-3;
    for (double u = -20.0; u < 20.0; u += h) integral += kernel_eval(spec, u + 0.5 * h) * h;
    EXPECT_NEAR(integral, 1.0, 1e-3) << to_string(f);
    for (double u : {10.0, 100.0}) {
      EXPECT_LT(std::abs(u * kernel_eval(spec, u)), 1e-6);
      EXPECT_LT(std::abs(-u * kernel_eval(spec, -u)), 1e-6);
    }
  }
}

TEST(Kernels, WeightIsEvalOfScaledDistance) {
  for (auto f : kFamilies) {
    const KernelSpec spec{f};
    for (double d : {0.0, 0.3, 1.0, 2.5}) {
      for (double b : {0.1, 0.7, 3.0}) {
        EXPECT_EQ(kernel_weight(spec, d, Bandwidth(b)), kernel_eval(spec, d / b));
      }
    }
  }
}

TEST(Kernels, ParseNames) {
  EXPECT_EQ(parse_kernel("gaussian").family, KernelFamily::Gaussian);
  EXPECT_EQ(parse_kernel("epanechnikov").family, KernelFamily::Epanechnikov);
  EXPECT_EQ(parse_kernel("boxcar").family, KernelFamily::Boxcar);
  EXPECT_THROW(parse_kernel("triangle"), Error);
}

TEST(Kernels, RuleOfThumb) {
  EXPECT_NEAR(rule_of_thumb(2.0, 32, 1), 1.06 * 2.0 * std::pow(32.0, -0.2), 1e-15);
  EXPECT_NEAR(rule_of_thumb(1.0, 81, 4), 1.06 / std::pow(81.0, 0.125), 1e-15);
}

}  // namespace
}  // namespace igroup
