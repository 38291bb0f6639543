#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "igroup/error.hpp"
#include "igroup/parallel.hpp"

namespace igroup {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

inline double distance(Point2 a, Point2 b) { return std::hypot(a.x - b.x, a.y - b.y); }

/// Time-ordered planar polyline.
class Trajectory {
 public:
  Trajectory() = default;
  explicit Trajectory(std::vector<Point2> points) : points_(std::move(points)) {
    for (const auto& p : points_) {
      if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
        fail(ErrorKind::InvalidInput, "trajectory coordinates must be finite");
      }
    }
  }

  std::span<const Point2> points() const { return points_; }
  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }
  const Point2& operator[](std::size_t i) const { return points_[i]; }

  /// Uniform subsample keeping both endpoints, at most max_points long.
  Trajectory subsampled(std::size_t max_points) const {
    if (max_points < 2 || points_.size() <= max_points) return *this;
    std::vector<Point2> out;
    out.reserve(max_points);
    const double step = static_cast<double>(points_.size() - 1) / static_cast<double>(max_points - 1);
    for (std::size_t i = 0; i < max_points; ++i) {
      out.push_back(points_[static_cast<std::size_t>(std::lround(step * static_cast<double>(i)))]);
    }
    return Trajectory(std::move(out));
  }

 private:
  std::vector<Point2> points_;
};

/// Symmetric n x n matrix with zero diagonal, stored densely.
class DistanceMatrix {
 public:
  explicit DistanceMatrix(std::size_t n = 0) : n_(n), entries_(n * n, 0.0) {}

  std::size_t size() const { return n_; }
  double operator()(std::size_t i, std::size_t j) const { return entries_[i * n_ + j]; }

  void set(std::size_t i, std::size_t j, double value) {
    entries_[i * n_ + j] = value;
    entries_[j * n_ + i] = value;
  }

  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(entries_).subspan(i * n_, n_);
  }

 private:
  std::size_t n_;
  std::vector<double> entries_;
};

inline double euclidean(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    fail(ErrorKind::InvalidInput, "euclidean: dimension mismatch (" + std::to_string(a.size()) +
                                      " vs " + std::to_string(b.size()) + ")");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  return std::sqrt(sum);
}

struct DtwOptions {
  /// Sakoe-Chiba radius; widened to |n - m| so a path always exists.
  std::optional<std::size_t> window;
};

/// Dynamic time warping with Euclidean local cost and steps
/// {match, insert, delete}. The returned value is the minimal cumulative
/// cost divided by the length of the path attaining it, i.e. the average
/// pairwise distance along the optimal alignment. Equal-cost predecessors
/// are resolved diagonal first, then insert (advance b), then delete.
inline double dtw_distance(const Trajectory& a, const Trajectory& b, const DtwOptions& opts = {}) {
  if (a.empty() || b.empty()) fail(ErrorKind::InvalidInput, "dtw: trajectories must be nonempty");
  const std::size_t n = a.size();
  const std::size_t m = b.size();
  constexpr double kInf = std::numeric_limits<double>::infinity();

  std::size_t radius = std::max(n, m);
  if (opts.window) radius = std::max(*opts.window, n > m ? n - m : m - n);

  struct Cell {
    double cost;
    std::size_t steps;
  };
  std::vector<Cell> prev(m, {kInf, 0}), curr(m, {kInf, 0});

  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i > radius ? i - radius : 0;
    const std::size_t hi = std::min(m - 1, i + radius);
    std::fill(curr.begin(), curr.end(), Cell{kInf, 0});
    for (std::size_t j = lo; j <= hi; ++j) {
      const double local = distance(a[i], b[j]);
      if (i == 0 && j == 0) {
        curr[j] = {local, 1};
        continue;
      }
      Cell best{kInf, 0};
      if (i > 0 && j > 0) best = prev[j - 1];
      if (j > 0 && curr[j - 1].cost < best.cost) best = curr[j - 1];
      if (i > 0 && prev[j].cost < best.cost) best = prev[j];
      curr[j] = {best.cost + local, best.steps + 1};
    }
    std::swap(prev, curr);
  }
  const Cell& end = prev[m - 1];
  return end.cost / static_cast<double>(end.steps);
}

/// Pairwise DTW over the upper triangle.
inline DistanceMatrix dtw_matrix(std::span<const Trajectory> trajs, unsigned threads = 1,
                                 const DtwOptions& opts = {}) {
  const std::size_t n = trajs.size();
  for (const auto& t : trajs) {
    if (t.empty()) fail(ErrorKind::InvalidInput, "dtw: trajectories must be nonempty");
  }
  DistanceMatrix out(n);
  // Row i computes entries (i, j > i); rows are disjoint, so writes never race.
  parallel_for(n, threads, [&](std::size_t i) {
    for (std::size_t j = i + 1; j < n; ++j) out.set(i, j, dtw_distance(trajs[i], trajs[j], opts));
  });
  return out;
}

}  // namespace igroup
