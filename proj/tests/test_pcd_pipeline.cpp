#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <tuple>

#include "fixtures.hpp"
#include "rownav/pcd_pipeline.hpp"

namespace {

using namespace rownav;
using rownav::testing::corridor_cloud;
using rownav::testing::rotated;

constexpr double kPi = std::numbers::pi;

bool contains(const std::vector<Point3>& set, const Point3& p) {
  return std::find(set.begin(), set.end(), p) != set.end();
}

std::vector<Point3> uniform_cube(std::size_t n, std::uint64_t seed, double side = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, side);
  std::vector<Point3> out(n);
  for (auto& p : out) p = {u(rng), u(rng), u(rng)};
  return out;
}

// ------------------------------------------------------------ voxel_downsample

TEST(VoxelDownsample, Examples) {
  EXPECT_TRUE(voxel_downsample({}, 0.05).empty());

  const std::vector<Point3> two{{0, 0, 0}, {0.01, 0.01, 0.01}};
  const auto one = voxel_downsample(two, 0.05);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_NEAR(one[0].x, 0.005, 1e-15);
  EXPECT_NEAR(one[0].y, 0.005, 1e-15);
  EXPECT_NEAR(one[0].z, 0.005, 1e-15);

  const auto cube = uniform_cube(1000, 5);
  EXPECT_LE(voxel_downsample(cube, 0.05).size(), 1000u);
  EXPECT_LE(voxel_downsample(cube, 0.05).size(), 8000u);
}

TEST(VoxelDownsample, MatchesBruteForceCentroids) {
  const auto cloud = uniform_cube(3000, 17, 0.4);
  const double r = 0.05;
  std::map<std::tuple<long, long, long>, std::tuple<double, double, double, int>> acc;
  for (const auto& p : cloud) {
    auto& a = acc[{static_cast<long>(std::floor(p.x / r)), static_cast<long>(std::floor(p.y / r)),
                   static_cast<long>(std::floor(p.z / r))}];
    std::get<0>(a) += p.x;
    std::get<1>(a) += p.y;
    std::get<2>(a) += p.z;
    ++std::get<3>(a);
  }
  const auto out = voxel_downsample(cloud, r);
  ASSERT_EQ(out.size(), acc.size());
  std::size_t k = 0;
  for (const auto& [key, a] : acc) {
    const double n = std::get<3>(a);
    EXPECT_NEAR(out[k].x, std::get<0>(a) / n, 1e-12);
    EXPECT_NEAR(out[k].y, std::get<1>(a) / n, 1e-12);
    EXPECT_NEAR(out[k].z, std::get<2>(a) / n, 1e-12);
    ++k;
  }
}

TEST(VoxelDownsample, OutputInsideInputBoundingBoxAndOnePerVoxel) {
  const auto cloud = uniform_cube(2000, 23, 2.0);
  const auto out = voxel_downsample(cloud, 0.1);
  std::set<std::tuple<long, long, long>> keys;
  for (const auto& p : out) {
    EXPECT_GE(p.x, 0.0);
    EXPECT_LE(p.x, 2.0);
    EXPECT_GE(p.y, 0.0);
    EXPECT_LE(p.z, 2.0);
    keys.insert({static_cast<long>(std::floor(p.x / 0.1)), static_cast<long>(std::floor(p.y / 0.1)),
                 static_cast<long>(std::floor(p.z / 0.1))});
  }
  EXPECT_EQ(keys.size(), out.size());
}

TEST(VoxelDownsample, RejectsNonPositiveResolution) {
  EXPECT_THROW(voxel_downsample({}, 0.0), std::invalid_argument);
}

// ------------------------------------------------------------ knn_outlier_filter

TEST(KnnOutlierFilter, SmallCloudUnchanged) {
  const auto cloud = uniform_cube(10, 1);
  EXPECT_EQ(knn_outlier_filter(cloud, 10, 1.0), cloud);
  EXPECT_EQ(knn_outlier_filter(std::vector<Point3>(cloud.begin(), cloud.begin() + 3), 10, 1.0).size(), 3u);
}

TEST(KnnOutlierFilter, RemovesLoneFarPoint) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<Point3> cloud;
  while (cloud.size() < 100) {
    Point3 p{n(rng), n(rng), n(rng)};
    const double r = std::sqrt(p.x * p.x + p.y * p.y + p.z * p.z);
    const double s = 0.1 * std::cbrt(std::uniform_real_distribution<double>(0, 1)(rng)) / r;
    cloud.push_back({p.x * s, p.y * s, p.z * s});
  }
  const Point3 lone{10.0, 0.0, 0.0};
  cloud.push_back(lone);
  const auto out = knn_outlier_filter(cloud, 10, 1.0);
  EXPECT_FALSE(contains(out, lone));
  EXPECT_EQ(out.size(), 100u);
}

TEST(KnnOutlierFilter, UniformRingUnchanged) {
  // Equally spaced points on a circle share identical neighbor distances.
  std::vector<Point3> ring;
  for (int k = 0; k < 60; ++k) {
    const double t = 2.0 * kPi * k / 60.0;
    ring.push_back({std::cos(t), std::sin(t), 0.0});
  }
  for (int k : {1, 4, 10}) {
    for (double ratio : {0.0, 0.5, 2.0}) {
      EXPECT_EQ(knn_outlier_filter(ring, k, ratio).size(), ring.size()) << k << " " << ratio;
    }
  }
}

TEST(KnnOutlierFilter, MatchesBruteForceStatistic) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto cloud = uniform_cube(150, 100 + seed);
    cloud.push_back({3.0, 3.0, 3.0});
    const int k = 5;
    std::vector<double> md;
    for (const auto& p : cloud) {
      std::vector<double> d;
      for (const auto& q : cloud) {
        if (&p == &q) continue;
        d.push_back(std::sqrt((p.x - q.x) * (p.x - q.x) + (p.y - q.y) * (p.y - q.y) +
                              (p.z - q.z) * (p.z - q.z)));
      }
      std::sort(d.begin(), d.end());
      double s = 0;
      for (int i = 0; i < k; ++i) s += d[static_cast<std::size_t>(i)];
      md.push_back(s / k);
    }
    double mean = 0;
    for (double v : md) mean += v;
    mean /= static_cast<double>(md.size());
    double var = 0;
    for (double v : md) var += (v - mean) * (v - mean);
    const double thr = mean + 1.0 * std::sqrt(var / static_cast<double>(md.size()));
    std::vector<Point3> expected;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      if (md[i] <= thr) expected.push_back(cloud[i]);
    }
    EXPECT_EQ(knn_outlier_filter(cloud, k, 1.0), expected);
  }
}

// ------------------------------------------------------------ height_crop / fov

TEST(HeightCrop, Examples) {
  EXPECT_TRUE(height_crop(std::vector<Point3>{{0, 0, 0.05}}, 0.15, 2.0).empty());
  EXPECT_EQ(height_crop(std::vector<Point3>{{0, 0, 1.0}}, 0.15, 2.0).size(), 1u);
  EXPECT_TRUE(height_crop(std::vector<Point3>{{0, 0, 2.5}}, 0.15, 2.0).empty());
}

TEST(HeightCrop, KeepsOrderAndBoundaries) {
  const std::vector<Point3> in{{1, 0, 0.15}, {2, 0, 3.0}, {3, 0, 2.0}, {4, 0, 1.0}};
  const auto out = height_crop(in, 0.15, 2.0);
  ASSERT_EQ(out.size(), 3u);
  EXPECT_EQ(out[0].x, 1);
  EXPECT_EQ(out[1].x, 3);
  EXPECT_EQ(out[2].x, 4);
}

TEST(FovEmptyCheck, Examples) {
  EXPECT_TRUE(fov_empty_check(15, 100, 0.2));
  EXPECT_FALSE(fov_empty_check(20, 100, 0.2));
  EXPECT_TRUE(fov_empty_check(0, 0, 0.2));
}

// ------------------------------------------------------------ grid

PipelineConfig small_grid_cfg() {
  PipelineConfig cfg;
  cfg.grid_cell = 0.05;
  cfg.grid_extent_x = 6.0;
  cfg.grid_extent_y = 4.0;
  return cfg;
}

TEST(ProjectToGrid, Examples) {
  const auto cfg = small_grid_cfg();
  EXPECT_EQ(project_to_grid({}, cfg).occupied_count(), 0u);

  const auto g = project_to_grid(std::vector<Point3>{{1.0, 0.5, 1.0}}, cfg);
  EXPECT_EQ(g.occupied_count(), 1u);
  const auto ij = g.cell_of({1.0, 0.5});
  ASSERT_TRUE(ij);
  EXPECT_TRUE(g.occupied(ij->first, ij->second));
  EXPECT_NEAR(g.center(ij->first, ij->second).x, 1.0, 1e-12);
  EXPECT_NEAR(g.center(ij->first, ij->second).y, 0.5, 1e-12);

  const auto g2 = project_to_grid(std::vector<Point3>{{1.0, 0.5, 1.0}, {1.01, 0.49, 0.3}}, cfg);
  EXPECT_EQ(g2.occupied_count(), 1u);
}

TEST(ProjectToGrid, DropsPointsOutsideExtent) {
  const auto cfg = small_grid_cfg();
  const auto g = project_to_grid(
      std::vector<Point3>{{-0.5, 0, 1}, {7.0, 0, 1}, {1.0, 2.5, 1}, {1.0, -2.5, 1}}, cfg);
  EXPECT_EQ(g.occupied_count(), 0u);
}

TEST(OccupancyGrid, OriginAtCellCenterAndSymmetricRows) {
  const OccupancyGrid g(0.05, 6.0, 4.0);
  EXPECT_EQ(g.nx(), 121);
  EXPECT_EQ(g.ny_half(), 40);
  EXPECT_EQ(g.cell_of({0.0, 0.0}), (std::pair<int, int>{0, 0}));
  EXPECT_EQ(g.cell_of({1.0, -1.0}), (std::pair<int, int>{20, -20}));
  EXPECT_THROW(OccupancyGrid(0.0, 1.0, 1.0), std::invalid_argument);
}

OccupancyGrid random_grid(std::uint64_t seed, double density) {
  OccupancyGrid g(0.05, 3.0, 2.0);
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution occ(density);
  for (int i = 0; i < g.nx(); ++i)
    for (int j = -g.ny_half(); j <= g.ny_half(); ++j) g.set(i, j, occ(rng));
  return g;
}

TEST(ShadowFill, EmptyGridUnchanged) {
  const OccupancyGrid g(0.05, 6.0, 4.0);
  EXPECT_EQ(shadow_fill(g), g);
}

TEST(ShadowFill, SingleCellOnAxisShadowsOnlyTheAxis) {
  OccupancyGrid g(0.05, 6.0, 4.0);
  g.set(40, 0, true);
  const auto f = shadow_fill(g);
  for (int i = 0; i < g.nx(); ++i) {
    for (int j = -g.ny_half(); j <= g.ny_half(); ++j) {
      const bool expected = j == 0 && i >= 40;
      EXPECT_EQ(f.occupied(i, j), expected) << i << "," << j;
    }
  }
}

TEST(ShadowFill, NearerCellSubsumesFartherOnSameRay) {
  OccupancyGrid near(0.05, 6.0, 4.0);
  near.set(10, 4, true);
  OccupancyGrid both = near;
  both.set(30, 12, true);
  EXPECT_EQ(shadow_fill(both), shadow_fill(near));
}

TEST(ShadowFill, RayOracleOnRandomGrids) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto g = random_grid(seed, 0.01);
    const auto f = shadow_fill(g);
    const double far = std::hypot((g.nx() - 1) * g.cell(), g.ny_half() * g.cell());
    const double sector = g.cell() / far;
    for (int i = 0; i < g.nx(); ++i) {
      for (int j = -g.ny_half(); j <= g.ny_half(); ++j) {
        if (!g.occupied(i, j) || (i == 0 && j == 0)) continue;
        EXPECT_TRUE(f.occupied(i, j));
        // Completeness along the exact ray: every integer multiple of (i, j).
        for (int m = 2; g.contains(m * i, m * j); ++m) {
          EXPECT_TRUE(f.occupied(m * i, m * j)) << seed;
        }
      }
    }
    // Soundness: every new cell lies behind some occupied cell within one
    // sector of its bearing.
    for (int i = 0; i < g.nx(); ++i) {
      for (int j = -g.ny_half(); j <= g.ny_half(); ++j) {
        if (!f.occupied(i, j) || g.occupied(i, j)) continue;
        const Point2 c = g.center(i, j);
        bool explained = false;
        for (int p = 0; p < g.nx() && !explained; ++p) {
          for (int q = -g.ny_half(); q <= g.ny_half() && !explained; ++q) {
            if (!g.occupied(p, q) || (p == 0 && q == 0)) continue;
            const Point2 o = g.center(p, q);
            explained = std::abs(std::atan2(c.y, c.x) - std::atan2(o.y, o.x)) <= sector &&
                        std::hypot(c.x, c.y) >= std::hypot(o.x, o.y);
          }
        }
        EXPECT_TRUE(explained) << seed << " " << i << "," << j;
      }
    }
  }
}

TEST(ShadowFill, Idempotent) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto once = shadow_fill(random_grid(seed, 0.02 + 0.01 * static_cast<double>(seed % 5)));
    EXPECT_EQ(shadow_fill(once), once) << seed;
  }
}

// ------------------------------------------------------------ borders

OccupancyGrid walls_grid(double yl, double yr, double x0, double x1) {
  OccupancyGrid g(0.05, 6.0, 4.0);
  for (double x = x0; x <= x1 + 1e-9; x += 0.05) {
    if (yl > 0) g.set(g.cell_of({x, yl})->first, g.cell_of({x, yl})->second, true);
    if (yr < 0) g.set(g.cell_of({x, yr})->first, g.cell_of({x, yr})->second, true);
  }
  return g;
}

TEST(ExtractBorderSamples, SyntheticCorridor) {
  const auto g = walls_grid(0.75, -0.75, 0.5, 4.0);
  const auto s = extract_border_samples(g);
  EXPECT_EQ(s.left.size(), 71u);
  EXPECT_EQ(s.right.size(), 71u);
  for (const auto& p : s.left) EXPECT_NEAR(p.y, 0.75, 1e-12);
  for (const auto& p : s.right) EXPECT_NEAR(p.y, -0.75, 1e-12);
}

TEST(ExtractBorderSamples, OneSidedGridHasNoRightSamples) {
  const auto g = walls_grid(0.75, 1.0, 0.5, 4.0);
  EXPECT_TRUE(extract_border_samples(g).right.empty());
  EXPECT_FALSE(extract_border_samples(g).left.empty());
}

TEST(ExtractBorderSamples, InnerCellWins) {
  OccupancyGrid g(0.05, 6.0, 4.0);
  g.set(20, 15, true);
  g.set(20, 25, true);
  const auto s = extract_border_samples(g);
  ASSERT_EQ(s.left.size(), 1u);
  EXPECT_NEAR(s.left[0].y, 0.75, 1e-12);
}

TEST(ExtractBorderSamples, SplitLineMovesSideAssignment) {
  OccupancyGrid g(0.05, 6.0, 4.0);
  g.set(40, -2, true);  // (2.0, -0.1): right of the x axis
  EXPECT_EQ(extract_border_samples(g).right.size(), 1u);
  // Split along y = -0.2 x puts it above the line, i.e. on the left.
  const auto s = extract_border_samples(g, -0.2);
  EXPECT_EQ(s.left.size(), 1u);
  EXPECT_TRUE(s.right.empty());
}

TEST(FitBorderLine, Examples) {
  std::vector<Point2> exact;
  for (int i = 0; i < 20; ++i) exact.push_back({0.2 * i, 0.1 * 0.2 * i + 0.75});
  const auto l = fit_border_line(exact, Side::kLeft);
  EXPECT_NEAR(l.a, 0.1, 1e-12);
  EXPECT_NEAR(l.b, 0.75, 1e-12);
  EXPECT_EQ(l.side, Side::kLeft);

  const auto two = fit_border_line(std::vector<Point2>{{0, 0.5}, {1, 1.0}}, Side::kLeft);
  EXPECT_NEAR(two.a, 0.5, 1e-15);
  EXPECT_NEAR(two.b, 0.5, 1e-15);
}

TEST(FitBorderLine, NoisyWallMatchesClosedFormOls) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> noise(-0.02, 0.02);
  std::vector<Point2> s;
  for (int i = 0; i < 80; ++i) s.push_back({0.05 * i + 0.5, -0.75 + noise(rng)});
  const auto l = fit_border_line(s, Side::kRight);
  EXPECT_LE(std::abs(l.a), 0.02);
  EXPECT_LE(std::abs(l.b + 0.75), 0.02);

  // Normal equations solved independently.
  double n = static_cast<double>(s.size()), sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& p : s) {
    sx += p.x;
    sy += p.y;
    sxx += p.x * p.x;
    sxy += p.x * p.y;
  }
  const double a = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  const double b = (sy - a * sx) / n;
  EXPECT_NEAR(l.a, a, 1e-10);
  EXPECT_NEAR(l.b, b, 1e-10);
}

TEST(FitBorderLine, InsufficientSamples) {
  try {
    fit_border_line(std::vector<Point2>{{1, 1}}, Side::kLeft);
    FAIL();
  } catch (const LaneError& e) {
    EXPECT_EQ(e.fault(), LaneFault::kInsufficientSamples);
  }
  EXPECT_THROW(fit_border_line(std::vector<Point2>{{1, 1}, {1, 2}}, Side::kLeft), LaneError);
}

TEST(SelectBorderInliers, IgnoresShadowEdgeThroughSensor) {
  std::vector<Point2> s;
  for (int i = 0; i < 40; ++i) s.push_back({1.0 + 0.05 * i, -0.75});
  // A shadow edge of an in-lane obstacle radiates from the origin.
  for (int i = 0; i < 50; ++i) s.push_back({1.0 + 0.05 * i, -0.05 * (1.0 + 0.05 * i)});
  const auto in = select_border_inliers(s, Side::kRight, 0.2, 0.1);
  EXPECT_EQ(in.size(), 40u);
  for (const auto& p : in) EXPECT_EQ(p.y, -0.75);
}

// ------------------------------------------------------------ lane

TEST(ApplySafetyMargin, Examples) {
  LaneModel lane;
  lane.left = {0.0, 0.75, Side::kLeft};
  lane.right = {0.0, -0.75, Side::kRight};
  EXPECT_NEAR(apply_safety_margin(lane, 0.3).inflated_left.b, 0.45, 1e-15);
  EXPECT_NEAR(apply_safety_margin(lane, 0.3).inflated_right.b, -0.45, 1e-15);

  const auto zero = apply_safety_margin(lane, 0.0);
  EXPECT_EQ(zero.inflated_left.b, 0.75);
  EXPECT_EQ(zero.inflated_right.b, -0.75);

  lane.left = {1.0, 1.0, Side::kLeft};
  lane.right = {1.0, -1.0, Side::kRight};
  const auto sloped = apply_safety_margin(lane, 0.1);
  EXPECT_NEAR(sloped.inflated_left.b, 1.0 - 0.1 * std::sqrt(2.0), 1e-15);
  EXPECT_EQ(sloped.inflated_left.a, 1.0);
}

TEST(ApplySafetyMargin, PerpendicularDistanceIsR) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> a(-2, 2);
  for (int k = 0; k < 100; ++k) {
    LaneModel lane;
    lane.left = {a(rng), 3.0, Side::kLeft};
    lane.right = {a(rng), -3.0, Side::kRight};
    const auto out = apply_safety_margin(lane, 0.4);
    const auto perp = [](const BorderLine& l1, const BorderLine& l2) {
      return std::abs(l1.b - l2.b) / std::sqrt(1 + l1.a * l1.a);
    };
    EXPECT_NEAR(perp(out.left, out.inflated_left), 0.4, 1e-12);
    EXPECT_NEAR(perp(out.right, out.inflated_right), 0.4, 1e-12);
  }
}

TEST(ApplySafetyMargin, CollapsedCorridor) {
  LaneModel lane;
  lane.left = {0.0, 0.2, Side::kLeft};
  lane.right = {0.0, -0.2, Side::kRight};
  try {
    apply_safety_margin(lane, 0.3);
    FAIL();
  } catch (const LaneError& e) {
    EXPECT_EQ(e.fault(), LaneFault::kCorridorCollapsed);
  }
}

TEST(MakeLane, MiddleIsAverage) {
  const auto lane = rownav::testing::straight_lane(1.0, -0.5, 0.1, 0.2, 0.1);
  EXPECT_NEAR(lane.middle.a, 0.15, 1e-15);
  EXPECT_NEAR(lane.middle.b, 0.25, 1e-15);
  EXPECT_NEAR(lane.a_avg(), 0.15, 1e-15);
}

TEST(SplitLane, Examples) {
  const auto full = rownav::testing::straight_lane(2.0, -2.0, 0.3);
  const auto same = split_lane(full, LaneMode::kFull, 0.3);
  EXPECT_EQ(same.left.b, full.left.b);
  EXPECT_EQ(same.inflated_right.b, full.inflated_right.b);

  const auto right = split_lane(full, LaneMode::kRightHalf, 0.3);
  EXPECT_NEAR(right.left.b, 0.0, 1e-15);
  EXPECT_NEAR(right.right.b, -2.0, 1e-15);
  EXPECT_NEAR(right.middle.b, -1.0, 1e-15);
  EXPECT_NEAR(0.5 * (right.inflated_left.b + right.inflated_right.b), -1.0, 1e-15);

  const auto left = split_lane(full, LaneMode::kLeftHalf, 0.3);
  EXPECT_NEAR(left.middle.b, -right.middle.b, 1e-15);
  EXPECT_NEAR(left.inflated_left.b, -right.inflated_right.b, 1e-15);
  EXPECT_NEAR(left.inflated_right.b, -right.inflated_left.b, 1e-15);
}

TEST(ValidateLane, Examples) {
  const double max = 70.0 * kPi / 180.0;
  EXPECT_FALSE(validate_lane(rownav::testing::straight_lane(1, -1), max));

  auto steep = rownav::testing::straight_lane(1, -1);
  steep.left.a = std::tan(80.0 * kPi / 180.0);
  EXPECT_EQ(validate_lane(steep, max), LaneFault::kNearPerpendicular);

  auto collapsed = rownav::testing::straight_lane(1, -1);
  collapsed.inflated_left.b = collapsed.inflated_right.b;
  EXPECT_EQ(validate_lane(collapsed, max), LaneFault::kCorridorCollapsed);
}

TEST(BordersConsistent, ComparesHeadings) {
  const BorderLine l{0.1, 1, Side::kLeft};
  EXPECT_TRUE(borders_consistent(l, BorderLine{0.15, -1, Side::kRight}, 0.1));
  EXPECT_FALSE(borders_consistent(l, BorderLine{-0.3, -1, Side::kRight}, 0.1));
}

// ------------------------------------------------------------ process

TEST(Process, SyntheticCorridorRecoversBorders) {
  const auto res = process(corridor_cloud(0.75), PipelineConfig{});
  ASSERT_EQ(status_of(res), PerceptionStatus::kOk);
  const auto& ok = std::get<PerceptionOk>(res);
  EXPECT_LE(std::abs(ok.lane.left.a), 0.02);
  EXPECT_LE(std::abs(ok.lane.right.a), 0.02);
  EXPECT_NEAR(ok.lane.left.b, 0.75, 0.05);
  EXPECT_NEAR(ok.lane.right.b, -0.75, 0.05);
  EXPECT_FALSE(ok.obstacles.empty());
}

TEST(Process, GroundOnlyCloudIsEmptyFov) {
  std::vector<Point3> ground;
  for (int i = 0; i < 10; ++i) ground.push_back({0.5 + 0.3 * i, 0.1 * i - 0.5, 0.05});
  EXPECT_EQ(status_of(process(ground, PipelineConfig{})), PerceptionStatus::kEmptyFov);
  EXPECT_EQ(status_of(process({}, PipelineConfig{})), PerceptionStatus::kEmptyFov);
}

TEST(Process, NearlyPerpendicularCorridorIsInvalid) {
  const auto cloud = rotated(corridor_cloud(0.75, -4.0, 4.0), 85.0 * kPi / 180.0);
  EXPECT_EQ(status_of(process(cloud, PipelineConfig{})), PerceptionStatus::kInvalidLane);
}

TEST(Process, AngledViewSplitsWallsAlongTheRow) {
  // At 0.3 rad the far part of the left wall crosses the rover x axis.
  const auto cloud = rotated(corridor_cloud(1.25, -2.0, 8.0), -0.3);
  PipelineConfig cfg;
  cfg.grid_extent_y = 6.0;
  const auto res = process(cloud, cfg);
  ASSERT_EQ(status_of(res), PerceptionStatus::kOk);
  const auto& lane = std::get<PerceptionOk>(res).lane;
  EXPECT_NEAR(lane.left.a, std::tan(-0.3), 0.03);
  EXPECT_NEAR(lane.right.a, std::tan(-0.3), 0.03);
}

TEST(Process, TranslationAlongXShiftsIntercepts) {
  // Sloped noiseless walls that end inside the grid; a shift of a whole
  // number of cells keeps every sample's column contents.
  std::vector<Point3> cloud;
  const double a = 0.1;
  for (int i = 0; i < 60; ++i) {
    const double x = 0.5 + 0.05 * i + 0.01;
    for (double z = 0.31; z < 1.5; z += 0.1) {
      cloud.push_back({x, a * x + 0.75, z});
      cloud.push_back({x, a * x - 0.75, z});
    }
  }
  const double dx = 0.5;
  auto shifted = cloud;
  for (auto& p : shifted) p.x += dx;
  const auto r0 = process(cloud, PipelineConfig{});
  const auto r1 = process(shifted, PipelineConfig{});
  ASSERT_EQ(status_of(r0), PerceptionStatus::kOk);
  ASSERT_EQ(status_of(r1), PerceptionStatus::kOk);
  const auto& l0 = std::get<PerceptionOk>(r0).lane;
  const auto& l1 = std::get<PerceptionOk>(r1).lane;
  EXPECT_NEAR(l1.left.a, l0.left.a, 1e-6);
  EXPECT_NEAR(l1.left.b, l0.left.b - l0.left.a * dx, 1e-6);
  EXPECT_NEAR(l1.right.b, l0.right.b - l0.right.a * dx, 1e-6);
}

TEST(Process, YNegationSwapsBorders) {
  std::vector<Point3> cloud;
  for (int i = 0; i < 70; ++i) {
    const double x = 0.5 + 0.05 * i + 0.01;
    for (double z = 0.31; z < 1.5; z += 0.1) {
      cloud.push_back({x, 0.06 * x + 0.81, z});
      cloud.push_back({x, 0.02 * x - 0.67, z});
    }
  }
  auto mirrored = cloud;
  for (auto& p : mirrored) p.y = -p.y;
  const auto r0 = process(cloud, PipelineConfig{});
  const auto r1 = process(mirrored, PipelineConfig{});
  ASSERT_EQ(status_of(r0), PerceptionStatus::kOk);
  ASSERT_EQ(status_of(r1), PerceptionStatus::kOk);
  const auto& l0 = std::get<PerceptionOk>(r0).lane;
  const auto& l1 = std::get<PerceptionOk>(r1).lane;
  EXPECT_NEAR(l1.left.a, -l0.right.a, 1e-9);
  EXPECT_NEAR(l1.left.b, -l0.right.b, 1e-9);
  EXPECT_NEAR(l1.right.a, -l0.left.a, 1e-9);
  EXPECT_NEAR(l1.right.b, -l0.left.b, 1e-9);
}

TEST(Process, ObstaclePointsStayOutOfClaimedLane) {
  for (double hw : {0.75, 1.0, 1.25, 2.0}) {
    const auto res = process(corridor_cloud(hw), PipelineConfig{});
    ASSERT_EQ(status_of(res), PerceptionStatus::kOk);
    const auto& ok = std::get<PerceptionOk>(res);
    const double R = PipelineConfig{}.safety_margin_R;
    for (const auto& o : ok.obstacles) {
      const bool outside = o.y >= ok.lane.inflated_left.at(o.x) ||
                           o.y <= ok.lane.inflated_right.at(o.x);
      const auto dist = [&](const BorderLine& l) {
        return std::abs(o.y - l.at(o.x)) / std::sqrt(1 + l.a * l.a);
      };
      const bool near_border = dist(ok.lane.left) <= R || dist(ok.lane.right) <= R;
      EXPECT_TRUE(outside || near_border) << o.x << "," << o.y;
    }
  }
}

TEST(Process, ObstaclePointsCoverBothBordersAndRespectCap) {
  PipelineConfig cfg;
  cfg.max_obstacle_points = 5;
  const auto res = process(corridor_cloud(0.75), cfg);
  ASSERT_EQ(status_of(res), PerceptionStatus::kOk);
  const auto& ok = std::get<PerceptionOk>(res);
  EXPECT_LE(ok.obstacles.size(), 7u);
  EXPECT_TRUE(std::any_of(ok.obstacles.begin(), ok.obstacles.end(), [](auto& p) { return p.y > 0; }));
  EXPECT_TRUE(std::any_of(ok.obstacles.begin(), ok.obstacles.end(), [](auto& p) { return p.y < 0; }));
}

TEST(Process, StagesNeverInventPoints) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n(0.0, 0.02);
  auto cloud = corridor_cloud(0.9);
  for (auto& p : cloud) {
    p.x += n(rng);
    p.y += n(rng);
  }
  const auto vox = voxel_downsample(cloud, 0.05);
  EXPECT_LE(vox.size(), cloud.size());
  const auto filt = knn_outlier_filter(vox, 10, 1.0);
  for (const auto& p : filt) EXPECT_TRUE(contains(vox, p));
  const auto crop = height_crop(filt, 0.15, 2.0);
  for (const auto& p : crop) EXPECT_TRUE(contains(filt, p));
}

TEST(PipelineConfig, ValidationNamesField) {
  PipelineConfig cfg;
  cfg.f_points = 1.5;
  try {
    cfg.validate();
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("f_points"), std::string::npos);
  }
  cfg = PipelineConfig{};
  cfg.z_th_min = 3.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = PipelineConfig{};
  cfg.max_perp_angle = 2.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  EXPECT_NO_THROW(PipelineConfig{}.validate());
}

TEST(LaneMode, NamesRoundTrip) {
  for (auto m : {LaneMode::kFull, LaneMode::kRightHalf, LaneMode::kLeftHalf}) {
    EXPECT_EQ(lane_mode_from_string(to_string(m)), m);
  }
  EXPECT_FALSE(lane_mode_from_string("diagonal"));
}

}  // namespace
