#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "igroup/apps/csv.hpp"
#include "igroup/distances.hpp"
#include "igroup/error.hpp"
#include "igroup/parallel.hpp"
#include "igroup/random.hpp"

namespace igroup {

struct Voyage {
  std::string id;
  Trajectory path;
  double sailing_time = 0.0;  // hours
};

struct VoyageSet {
  std::vector<Voyage> voyages;
  std::size_t dropped_rows = 0;

  std::size_t size() const { return voyages.size(); }

  void validate() const {
    for (const auto& v : voyages) {
      if (v.path.empty()) fail(ErrorKind::InvalidInput, "voyage '" + v.id + "' has an empty trajectory");
      if (!(v.sailing_time > 0.0) || !std::isfinite(v.sailing_time)) {
        fail(ErrorKind::InvalidInput, "voyage '" + v.id + "' needs a positive sailing time");
      }
    }
  }
};

struct AnomalyOptions {
  std::size_t k_neighbors = 40;
  double threshold = 0.95;
  std::size_t max_points = 500;
  DtwOptions dtw{};
  /// Kernel-weighted group moments over DTW distance instead of equal
  /// weights. The bandwidth defaults to each target's k-th neighbor distance.
  bool kernel_weighted = false;
  std::optional<double> kernel_bandwidth;
  unsigned threads = 1;
};

struct AnomalyEntry {
  std::string id;
  std::vector<std::string> group;
  double sailing_time = 0.0;
  double mu = 0.0;
  double sigma = 0.0;
  double risk = 0.0;
  bool flagged = false;
};

struct AnomalyReport {
  std::vector<AnomalyEntry> entries;
  std::size_t flagged() const {
    return static_cast<std::size_t>(std::count_if(entries.begin(), entries.end(), [](const auto& e) { return e.flagged; }));
  }
};

/// Two-sided normal score 1 - 2 P(Z > |x - mu| / sigma).
inline double risk_score(double x, double mu, double sigma) {
  if (!(sigma > 0.0)) fail(ErrorKind::DegenerateGroup, "risk score needs a positive group spread");
  return std::erf(std::abs(x - mu) / (sigma * std::numbers::sqrt2));
}

inline AnomalyReport anomaly_scores(const VoyageSet& set, const AnomalyOptions& opts = {}) {
  set.validate();
  const std::size_t n = set.size();
  const std::size_t k = opts.k_neighbors;
  if (k < 2) fail(ErrorKind::Configuration, "need at least two neighbors for a group spread");
  if (n < k + 1) {
    fail(ErrorKind::InsufficientData, "anomaly scoring needs at least " + std::to_string(k + 1) + " voyages, got " +
                                          std::to_string(n));
  }
  if (!(opts.threshold > 0.0 && opts.threshold < 1.0)) fail(ErrorKind::Configuration, "threshold must lie in (0, 1)");

  std::vector<Trajectory> paths;
  paths.reserve(n);
  for (const auto& v : set.voyages) paths.push_back(v.path.subsampled(opts.max_points));
  const auto dist = dtw_matrix(paths, opts.threads, opts.dtw);

  AnomalyReport report;
  report.entries.resize(n);
  parallel_for(n, opts.threads, [&](std::size_t i) {
    std::vector<std::size_t> others;
    others.reserve(n - 1);
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) others.push_back(j);
    }
    // Ties break on id so the result does not depend on input order.
    std::partial_sort(others.begin(), others.begin() + static_cast<std::ptrdiff_t>(k), others.end(),
                      [&](std::size_t a, std::size_t b) {
                        if (dist(i, a) != dist(i, b)) return dist(i, a) < dist(i, b);
                        return set.voyages[a].id < set.voyages[b].id;
                      });
    others.resize(k);

    std::vector<double> w(k, 1.0);
    if (opts.kernel_weighted) {
      const double b = opts.kernel_bandwidth.value_or(dist(i, others.back()));
      if (!(b > 0.0)) fail(ErrorKind::DegenerateGroup, "zero kernel bandwidth for voyage '" + set.voyages[i].id + "'");
      for (std::size_t j = 0; j < k; ++j) {
        const double u = dist(i, others[j]) / b;
        w[j] = std::exp(-0.5 * u * u);
      }
    }
    double sw = 0.0;
    double mu = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      sw += w[j];
      mu += w[j] * set.voyages[others[j]].sailing_time;
    }
    mu /= sw;
    double ss = 0.0;
    double sw2 = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const double d = set.voyages[others[j]].sailing_time - mu;
      ss += w[j] * d * d;
      sw2 += w[j] * w[j];
    }
    // Unbiased weighted variance; reduces to the |C| - 1 divisor for equal weights.
    const double sigma = std::sqrt(ss / (sw - sw2 / sw));

    auto& e = report.entries[i];
    e.id = set.voyages[i].id;
    e.sailing_time = set.voyages[i].sailing_time;
    e.mu = mu;
    e.sigma = sigma;
    if (!(sigma >= 1e-9)) fail(ErrorKind::DegenerateGroup, "degenerate neighbor group for voyage '" + e.id + "'");
    e.risk = risk_score(e.sailing_time, mu, sigma);
    e.flagged = e.risk > opts.threshold;
    for (auto j : others) e.group.push_back(set.voyages[j].id);
  });
  return report;
}

// ---------------------------------------------------------------------------
// Synthetic port

enum class PlantedShape { TimeOnly, Detour, AnchorLoop };

inline std::string_view to_string(PlantedShape s) {
  switch (s) {
    case PlantedShape::TimeOnly: return "time";
    case PlantedShape::Detour: return "detour";
    case PlantedShape::AnchorLoop: return "anchor";
  }
  return "unknown";
}

inline PlantedShape parse_planted_shape(std::string_view s) {
  if (s == "time") return PlantedShape::TimeOnly;
  if (s == "detour") return PlantedShape::Detour;
  if (s == "anchor") return PlantedShape::AnchorLoop;
  fail(ErrorKind::Configuration, "unknown planted anomaly shape '" + std::string(s) + "'");
}

struct SyntheticPortSpec {
  std::size_t voyages = 500;
  std::size_t planted = 10;
  double planted_sigmas = 4.0;
  PlantedShape shape = PlantedShape::TimeOnly;
  std::size_t points = 60;    // nominal points per trajectory (jittered +-20%)
  double jitter_km = 1.0;     // per-point positional noise
  double time_sd = 1.0;       // hours, shared by the three routes
  std::uint64_t seed = 1;
};

struct SyntheticPort {
  VoyageSet set;
  std::vector<std::size_t> planted;  // indices into set.voyages
};

namespace detail {

/// Three route templates out of a port at the origin, in km, with their
/// mean sailing times in hours.
struct RouteTemplate {
  std::vector<Point2> waypoints;
  double mean_hours;
};

inline const std::vector<RouteTemplate>& route_templates() {
  static const std::vector<RouteTemplate> routes{
      {{{0, 0}, {40, 5}, {90, 0}, {140, 10}}, 10.0},
      {{{0, 0}, {20, 35}, {45, 80}, {60, 120}}, 14.0},
      {{{0, 0}, {-10, -40}, {-50, -70}, {-100, -80}}, 12.0},
  };
  return routes;
}

inline Point2 along(const std::vector<Point2>& wp, double s) {
  // s in [0, 1] over equal-length legs
  const double legs = static_cast<double>(wp.size() - 1);
  const double pos = std::clamp(s, 0.0, 1.0) * legs;
  const auto i = std::min(static_cast<std::size_t>(pos), wp.size() - 2);
  const double f = pos - static_cast<double>(i);
  return {wp[i].x + f * (wp[i + 1].x - wp[i].x), wp[i].y + f * (wp[i + 1].y - wp[i].y)};
}

}  // namespace detail

/// Voyages on three route templates with N(mean_route, time_sd^2) sailing
/// times; `planted` voyages get +planted_sigmas * time_sd added and,
/// depending on `shape`, a lateral detour or a loitering loop.
inline SyntheticPort synthetic_port(const SyntheticPortSpec& spec) {
  if (spec.planted > spec.voyages) fail(ErrorKind::Configuration, "more planted anomalies than voyages");
  if (spec.points < 4) fail(ErrorKind::Configuration, "trajectories need at least 4 points");
  const auto& routes = detail::route_templates();
  SyntheticPort port;

  // Planted indices: a seeded partial shuffle.
  std::vector<std::size_t> order(spec.voyages);
  std::iota(order.begin(), order.end(), std::size_t{0});
  CounterRng pick(spec.seed, 0, 0, Stream::Target);
  for (std::size_t i = 0; i < spec.planted; ++i) std::swap(order[i], order[i + pick.index(spec.voyages - i)]);
  std::vector<bool> is_planted(spec.voyages, false);
  for (std::size_t i = 0; i < spec.planted; ++i) is_planted[order[i]] = true;

  for (std::size_t v = 0; v < spec.voyages; ++v) {
    CounterRng rng(spec.seed, 1, v, Stream::Data);
    const auto& route = routes[v % routes.size()];
    const auto m = static_cast<std::size_t>(
        std::lround(static_cast<double>(spec.points) * (0.8 + 0.4 * rng.uniform())));
    std::vector<Point2> pts;
    pts.reserve(m + 20);
    for (std::size_t i = 0; i < m; ++i) {
      const double s = static_cast<double>(i) / static_cast<double>(m - 1);
      auto p = detail::along(route.waypoints, s);
      p.x += rng.normal(0.0, spec.jitter_km);
      p.y += rng.normal(0.0, spec.jitter_km);
      pts.push_back(p);
    }
    double hours = rng.normal(route.mean_hours, spec.time_sd);
    if (is_planted[v]) {
      hours = route.mean_hours + spec.planted_sigmas * spec.time_sd;
      if (spec.shape == PlantedShape::Detour) {
        for (std::size_t i = m / 3; i < 2 * m / 3; ++i) {
          const double f = std::sin(std::numbers::pi * static_cast<double>(i - m / 3) / static_cast<double>(m / 3));
          pts[i].x += 15.0 * f;
          pts[i].y -= 15.0 * f;
        }
      } else if (spec.shape == PlantedShape::AnchorLoop) {
        const Point2 c = pts[m / 2];
        std::vector<Point2> loop;
        for (int j = 0; j < 16; ++j) {
          const double a = 2.0 * std::numbers::pi * j / 16.0;
          loop.push_back({c.x + 3.0 * std::cos(a), c.y + 3.0 * std::sin(a)});
        }
        pts.insert(pts.begin() + static_cast<std::ptrdiff_t>(m / 2), loop.begin(), loop.end());
      }
      port.planted.push_back(v);
    }
    char id[16];
    std::snprintf(id, sizeof(id), "V%04zu", v);
    port.set.voyages.push_back({id, Trajectory(std::move(pts)), hours});
  }
  return port;
}

// ---------------------------------------------------------------------------
// CSV ingestion

/// Equirectangular projection (km) about the centroid of all points.
inline std::vector<Point2> project_equirectangular(const std::vector<std::pair<double, double>>& lat_lon,
                                                   double lat0, double lon0) {
  constexpr double kEarthRadiusKm = 6371.0;
  constexpr double deg = std::numbers::pi / 180.0;
  const double c = std::cos(lat0 * deg);
  std::vector<Point2> out;
  out.reserve(lat_lon.size());
  for (const auto& [lat, lon] : lat_lon) {
    out.push_back({kEarthRadiusKm * (lon - lon0) * deg * c, kEarthRadiusKm * (lat - lat0) * deg});
  }
  return out;
}

/// Voyages CSV (voyage_id, seq, lat, lon[, sailing_time_hours]) plus an
/// optional durations table (voyage_id, hours) used when the column is
/// absent. Voyages are ordered by id, points by seq.
inline VoyageSet voyages_from_tables(const csv::Table& points, const csv::Table* durations = nullptr) {
  const auto pc = points.require({"voyage_id", "seq", "lat", "lon"});
  const auto time_col = points.column("sailing_time_hours");
  if (!time_col && !durations) {
    fail(ErrorKind::Schema, points.origin +
                                ": missing column sailing_time_hours and no durations file; expected voyage_id, "
                                "seq, lat, lon, sailing_time_hours");
  }
  if (points.rows.empty()) fail(ErrorKind::Schema, points.origin + ": no data rows");

  VoyageSet set;
  set.dropped_rows = points.malformed;
  struct Raw {
    std::vector<std::tuple<double, double, double>> pts;  // seq, lat, lon
    std::optional<double> hours;
  };
  std::map<std::string, Raw> raw;
  double lat_sum = 0.0;
  double lon_sum = 0.0;
  std::size_t count = 0;
  for (const auto& row : points.rows) {
    const auto seq = csv::parse_double(row[pc[1]]);
    const auto lat = csv::parse_double(row[pc[2]]);
    const auto lon = csv::parse_double(row[pc[3]]);
    std::optional<double> hours;
    if (time_col) hours = csv::parse_double(row[*time_col]);
    const bool bad_coord = !lat || !lon || std::abs(*lat) > 90.0 || std::abs(*lon) > 180.0;
    if (row[pc[0]].empty() || !seq || bad_coord || (time_col && !hours)) {
      ++set.dropped_rows;
      continue;
    }
    auto& r = raw[row[pc[0]]];
    r.pts.emplace_back(*seq, *lat, *lon);
    if (hours) r.hours = *hours;
    lat_sum += *lat;
    lon_sum += *lon;
    ++count;
  }
  if (durations) {
    const auto dc = durations->require({"voyage_id", "hours"});
    set.dropped_rows += durations->malformed;
    for (const auto& row : durations->rows) {
      const auto h = csv::parse_double(row[dc[1]]);
      auto it = raw.find(row[dc[0]]);
      if (!h) {
        ++set.dropped_rows;
        continue;
      }
      if (it != raw.end() && !it->second.hours) it->second.hours = *h;
    }
  }
  if (raw.empty()) fail(ErrorKind::Schema, points.origin + ": no valid voyage rows");
  const double lat0 = lat_sum / static_cast<double>(count);
  const double lon0 = lon_sum / static_cast<double>(count);
  for (auto& [id, r] : raw) {
    if (!r.hours) fail(ErrorKind::Schema, "voyage '" + id + "' has no sailing time");
    std::stable_sort(r.pts.begin(), r.pts.end(),
                     [](const auto& a, const auto& b) { return std::get<0>(a) < std::get<0>(b); });
    std::vector<std::pair<double, double>> ll;
    for (const auto& [s, la, lo] : r.pts) ll.emplace_back(la, lo);
    set.voyages.push_back({id, Trajectory(project_equirectangular(ll, lat0, lon0)), *r.hours});
  }
  return set;
}

inline VoyageSet ingest_voyages_csv(const std::string& path, const std::optional<std::string>& durations_path = {}) {
  const auto points = csv::read_file(path);
  if (durations_path) {
    const auto d = csv::read_file(*durations_path);
    return voyages_from_tables(points, &d);
  }
  return voyages_from_tables(points);
}

}  // namespace igroup
