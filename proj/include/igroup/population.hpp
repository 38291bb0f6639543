#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "igroup/error.hpp"
#include "igroup/random.hpp"

namespace igroup {

/// One entity: raw observations x, an optional point estimate and an
/// optional exogenous covariate vector z.
struct IndividualRecord {
  std::string id;
  std::vector<double> x;
  std::optional<double> theta_hat;
  std::optional<std::vector<double>> z;
};

class Population {
 public:
  Population() = default;

  explicit Population(std::vector<IndividualRecord> records, std::string meta = {})
      : records_(std::move(records)), meta_(std::move(meta)) {
    bool have_dim = false;
    for (std::size_t i = 0; i < records_.size(); ++i) {
      const auto& r = records_[i];
      if (!r.theta_hat && !r.z && r.x.empty()) {
        fail(ErrorKind::InvalidInput, "record '" + r.id + "' carries no theta_hat, z or x");
      }
      if (!index_.emplace(r.id, i).second) {
        fail(ErrorKind::InvalidInput, "duplicate individual id '" + r.id + "'");
      }
      if (r.z) {
        if (!have_dim) {
          z_dim_ = r.z->size();
          have_dim = true;
        } else if (r.z->size() != z_dim_) {
          fail(ErrorKind::InvalidInput, "record '" + r.id + "' has z of dimension " +
                                            std::to_string(r.z->size()) + ", expected " +
                                            std::to_string(z_dim_));
        }
      }
    }
  }

  std::size_t size() const { return records_.size(); }
  std::size_t z_dim() const { return z_dim_; }
  const std::string& meta() const { return meta_; }
  const std::vector<IndividualRecord>& records() const { return records_; }
  const IndividualRecord& operator[](std::size_t i) const { return records_[i]; }

  std::size_t index_of(const std::string& id) const {
    const auto it = index_.find(id);
    if (it == index_.end()) fail(ErrorKind::InvalidInput, "unknown individual id '" + id + "'");
    return it->second;
  }

  bool all_have_z() const {
    for (const auto& r : records_) {
      if (!r.z) return false;
    }
    return !records_.empty();
  }

  bool all_have_theta() const {
    for (const auto& r : records_) {
      if (!r.theta_hat) return false;
    }
    return !records_.empty();
  }

  /// Point estimates in record order; SchemeMismatch if any is missing.
  std::vector<double> thetas() const {
    std::vector<double> out;
    out.reserve(records_.size());
    for (const auto& r : records_) {
      if (!r.theta_hat) fail(ErrorKind::SchemeMismatch, "record '" + r.id + "' has no theta_hat");
      out.push_back(*r.theta_hat);
    }
    return out;
  }

 private:
  std::vector<IndividualRecord> records_;
  std::string meta_;
  std::size_t z_dim_ = 0;
  std::unordered_map<std::string, std::size_t> index_;
};

struct BootstrapDraw {
  double first;
  double second;
};

/// Per-individual bootstrap re-estimates, aligned with a Population.
struct BootstrapEntry {
  double theta_hat = 0.0;
  std::vector<BootstrapDraw> draws;
  std::optional<std::vector<double>> z;
};

struct BootstrapPairs {
  std::vector<BootstrapEntry> entries;

  std::size_t size() const { return entries.size(); }
  bool has_z() const {
    for (const auto& e : entries) {
      if (!e.z) return false;
    }
    return !entries.empty();
  }
};

/// Smallest per-individual sample the bootstrap accepts.
inline constexpr std::size_t kMinBootstrapSample = 3;

inline double sample_mean(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

/// Conditional least squares AR(1) coefficient sum x[t-1]x[t] / sum x[t-1]^2,
/// clamped to [-0.999, 0.999].
inline double ar1_cls(std::span<const double> x) {
  double num = 0.0;
  double den = 0.0;
  for (std::size_t t = 1; t < x.size(); ++t) {
    num += x[t - 1] * x[t];
    den += x[t - 1] * x[t - 1];
  }
  if (den <= 0.0) return 0.0;
  return std::clamp(num / den, -0.999, 0.999);
}

namespace detail {

template <typename Resample>
BootstrapPairs make_pairs(const Population& pop, std::size_t draws_per_individual, std::uint64_t seed,
                          std::uint64_t replication, std::size_t min_units, Resample&& resample) {
  if (draws_per_individual == 0) fail(ErrorKind::Configuration, "bootstrap needs at least one draw");
  BootstrapPairs out;
  out.entries.resize(pop.size());
  for (std::size_t k = 0; k < pop.size(); ++k) {
    const auto& r = pop[k];
    if (r.x.size() < min_units) {
      fail(ErrorKind::SchemeMismatch,
           "bootstrap needs at least " + std::to_string(min_units) + " observations; record '" +
               r.id + "' has " + std::to_string(r.x.size()));
    }
    CounterRng rng(seed, replication, k, Stream::Bootstrap);
    auto& e = out.entries[k];
    e.z = r.z;
    e.draws.reserve(draws_per_individual);
    for (std::size_t b = 0; b < draws_per_individual; ++b) {
      const double t1 = resample(r.x, rng);
      const double t2 = resample(r.x, rng);
      e.draws.push_back({t1, t2});
    }
    e.theta_hat = r.theta_hat ? *r.theta_hat : resample.point(r.x);
  }
  return out;
}

struct MeanResampler {
  double operator()(const std::vector<double>& x, CounterRng& rng) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += x[rng.index(x.size())];
    return s / static_cast<double>(x.size());
  }
  double point(const std::vector<double>& x) const { return sample_mean(x); }
};

struct Ar1Resampler {
  double operator()(const std::vector<double>& x, CounterRng& rng) {
    const std::size_t transitions = x.size() - 1;
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < transitions; ++i) {
      const std::size_t t = 1 + rng.index(transitions);
      num += x[t - 1] * x[t];
      den += x[t - 1] * x[t - 1];
    }
    if (den <= 0.0) return 0.0;
    return std::clamp(num / den, -0.999, 0.999);
  }
  double point(const std::vector<double>& x) const { return ar1_cls(x); }
};

}  // namespace detail

/// Bootstrap pairs for the sample-mean estimator: each re-estimate resamples
/// x with replacement to its original length.
inline BootstrapPairs bootstrap_mean_pairs(const Population& pop, std::uint64_t seed,
                                           std::uint64_t replication = 0, std::size_t draws = 1) {
  return detail::make_pairs(pop, draws, seed, replication, kMinBootstrapSample,
                            detail::MeanResampler{});
}

/// Bootstrap pairs for the AR(1) least-squares estimator: resamples
/// (x[t-1], x[t]) transition pairs.
inline BootstrapPairs bootstrap_ar1_pairs(const Population& pop, std::uint64_t seed,
                                          std::uint64_t replication = 0, std::size_t draws = 1) {
  return detail::make_pairs(pop, draws, seed, replication, kMinBootstrapSample,
                            detail::Ar1Resampler{});
}

}  // namespace igroup
