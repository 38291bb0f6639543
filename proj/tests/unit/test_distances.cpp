#include <gtest/gtest.h>

#include <functional>
#include <limits>
#include <vector>

#include "igroup/distances.hpp"
#include "igroup/random.hpp"

namespace igroup {
namespace {

Trajectory make(std::vector<Point2> pts) { return Trajectory(std::move(pts)); }

Trajectory random_trajectory(CounterRng& rng, std::size_t len) {
  std::vector<Point2> pts;
  for (std::size_t i = 0; i < len; ++i) pts.push_back({rng.normal(), rng.normal()});
  return Trajectory(std::move(pts));
}

// Exhaustive search over all boundary-anchored monotone paths: returns the
// minimal total cost divided by the number of cells on that path.
double dtw_bruteforce(const Trajectory& a, const Trajectory& b) {
  double best_cost = std::numeric_limits<double>::infinity();
  std::size_t best_len = 0;
  std::function<void(std::size_t, std::size_t, double, std::size_t)> walk =
      [&](std::size_t i, std::size_t j, double cost, std::size_t len) {
        cost += distance(a[i], b[j]);
        ++len;
        if (i + 1 == a.size() && j + 1 == b.size()) {
          if (cost < best_cost) {
            best_cost = cost;
            best_len = len;
          }
          return;
        }
        if (i + 1 < a.size() && j + 1 < b.size()) walk(i + 1, j + 1, cost, len);
        if (j + 1 < b.size()) walk(i, j + 1, cost, len);
        if (i + 1 < a.size()) walk(i + 1, j, cost, len);
      };
  walk(0, 0, 0.0, 0);
  return best_cost / static_cast<double>(best_len);
}

TEST(Euclidean, Examples) {
  const std::vector<double> o2{0, 0}, p{3, 4}, q{1, 2, 2}, o3{0, 0, 0};
  EXPECT_DOUBLE_EQ(euclidean(o2, o2), 0.0);
  EXPECT_DOUBLE_EQ(euclidean(o2, p), 5.0);
  EXPECT_DOUBLE_EQ(euclidean(q, o3), 3.0);
  try {
    euclidean(o2, o3);
    FAIL() << "expected a dimension error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidInput);
  }
}

TEST(Dtw, Examples) {
  const auto a = make({{0, 0}, {1, 0}, {2, 1}});
  EXPECT_DOUBLE_EQ(dtw_distance(a, a), 0.0);
  EXPECT_DOUBLE_EQ(dtw_distance(make({{0, 0}}), make({{3, 4}})), 5.0);
  const auto s = make({{0, 0}, {1, 0}});
  const auto t = make({{0, 0}, {0, 0}, {1, 0}});
  EXPECT_DOUBLE_EQ(dtw_distance(s, t), dtw_bruteforce(s, t));
  EXPECT_DOUBLE_EQ(dtw_distance(s, t), 0.0);
}

TEST(Dtw, EmptyTrajectoryRejected) {
  EXPECT_THROW(dtw_distance(Trajectory{}, make({{0, 0}})), Error);
  EXPECT_THROW(Trajectory({{0, std::nan("")}}), Error);
}

TEST(Dtw, MatchesExhaustiveEnumeration) {
  CounterRng rng(11, 0, 0, Stream::Data);
  for (int trial = 0; trial < 200; ++trial) {
    const auto a = random_trajectory(rng, 1 + rng.index(6));
    const auto b = random_trajectory(rng, 1 + rng.index(6));
    EXPECT_NEAR(dtw_distance(a, b), dtw_bruteforce(a, b), 1e-12) << "trial " << trial;
  }
}

TEST(Dtw, Properties) {
  CounterRng rng(12, 0, 0, Stream::Data);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.index(20);
    const auto a = random_trajectory(rng, n);
    const auto b = random_trajectory(rng, 1 + rng.index(20));
    EXPECT_EQ(dtw_distance(a, a), 0.0);
    EXPECT_NEAR(dtw_distance(a, b), dtw_distance(b, a), 1e-12);

    const double dx = rng.normal(0, 10), dy = rng.normal(0, 10);
    auto shift = [&](const Trajectory& t) {
      std::vector<Point2> pts;
      for (const auto& p : t.points()) pts.push_back({p.x + dx, p.y + dy});
      return Trajectory(std::move(pts));
    };
    EXPECT_NEAR(dtw_distance(shift(a), shift(b)), dtw_distance(a, b), 1e-9);

    const auto c = random_trajectory(rng, n);
    double diag = 0.0;
    for (std::size_t i = 0; i < n; ++i) diag += distance(a[i], c[i]);
    EXPECT_LE(dtw_distance(a, c), diag / static_cast<double>(n) + 1e-12);
  }
}

TEST(Dtw, WindowWideEnoughIsExact) {
  CounterRng rng(13, 0, 0, Stream::Data);
  const auto a = random_trajectory(rng, 15);
  const auto b = random_trajectory(rng, 12);
  EXPECT_DOUBLE_EQ(dtw_distance(a, b, DtwOptions{15}), dtw_distance(a, b));
  EXPECT_GE(dtw_distance(a, b, DtwOptions{0}), dtw_distance(a, b));
}

TEST(DtwMatrix, Examples) {
  const std::vector<Trajectory> one{make({{1, 1}, {2, 2}})};
  const auto m1 = dtw_matrix(one);
  ASSERT_EQ(m1.size(), 1u);
  EXPECT_EQ(m1(0, 0), 0.0);

  const std::vector<Trajectory> twins{make({{1, 1}, {2, 2}}), make({{1, 1}, {2, 2}})};
  const auto m2 = dtw_matrix(twins);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) EXPECT_EQ(m2(i, j), 0.0);

  CounterRng rng(14, 0, 0, Stream::Data);
  std::vector<Trajectory> three;
  for (int i = 0; i < 3; ++i) three.push_back(random_trajectory(rng, 4 + i));
  for (unsigned threads : {1u, 3u}) {
    const auto m3 = dtw_matrix(three, threads);
    for (std::size_t i = 0; i < 3; ++i) {
      EXPECT_EQ(m3(i, i), 0.0);
      for (std::size_t j = i + 1; j < 3; ++j) {
        EXPECT_EQ(m3(i, j), dtw_distance(three[i], three[j]));
        EXPECT_EQ(m3(j, i), m3(i, j));
      }
    }
  }
}

TEST(Trajectory, SubsampleKeepsEndpoints) {
  std::vector<Point2> pts;
  for (int i = 0; i < 1000; ++i) pts.push_back({static_cast<double>(i), 0});
  const auto t = Trajectory(pts).subsampled(500);
  ASSERT_EQ(t.size(), 500u);
  EXPECT_EQ(t[0].x, 0.0);
  EXPECT_EQ(t[499].x, 999.0);
  EXPECT_EQ(Trajectory(pts).subsampled(2000).size(), 1000u);
}

}  // namespace
}  // namespace igroup
