#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "rownav/pcd_pipeline.hpp"
#include "rownav/types.hpp"

namespace rownav::testing {

/// Two vertical walls of points, y = ±half_width, for x in [x0, x1]. Points sit
/// 0.01 m inside a voxel so neither voxelization nor y-negation moves them
/// across a cell boundary.
inline std::vector<Point3> corridor_cloud(double half_width, double x0 = 0.5, double x1 = 4.0,
                                          double step = 0.05) {
  std::vector<Point3> cloud;
  for (double x = x0; x <= x1 + 1e-9; x += step) {
    for (double z = 0.31; z <= 1.5; z += 0.1) {
      cloud.push_back({x + 0.01, half_width + 0.01, z});
      cloud.push_back({x + 0.01, -half_width - 0.01, z});
    }
  }
  return cloud;
}

inline std::vector<Point3> rotated(const std::vector<Point3>& cloud, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  std::vector<Point3> out;
  out.reserve(cloud.size());
  for (const auto& p : cloud) out.push_back({c * p.x - s * p.y, s * p.x + c * p.y, p.z});
  return out;
}

/// Lane with straight borders and margins applied.
inline LaneModel straight_lane(double y_left, double y_right, double R = 0.0,
                               double a_left = 0.0, double a_right = 0.0) {
  return make_lane(BorderLine{a_left, y_left, Side::kLeft},
                   BorderLine{a_right, y_right, Side::kRight}, R);
}

/// Random corridor with a nonempty inflated interior over x in [0, 5].
inline LaneModel random_lane(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> slope(-0.3, 0.3);
  std::uniform_real_distribution<double> width(1.0, 4.0);
  std::uniform_real_distribution<double> center(-0.3, 0.3);
  const double a = slope(rng);
  const double da = 0.02 * slope(rng);
  const double w = width(rng);
  const double c = center(rng);
  return straight_lane(c + w / 2, c - w / 2, 0.3, a + da, a - da);
}

}  // namespace rownav::testing
