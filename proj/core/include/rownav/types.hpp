#pragma once

#include <cmath>
#include <numbers>
#include <string_view>

namespace rownav {

/// Planar rover pose. Orientation is carried as the half-angle pair of a
/// z-axis quaternion, qw = cos(theta/2), qz = sin(theta/2).
struct QuatPose {
  double x = 0.0;   ///< [m]
  double y = 0.0;   ///< [m]
  double qw = 1.0;  ///< cos(theta / 2)
  double qz = 0.0;  ///< sin(theta / 2)

  friend bool operator==(const QuatPose&, const QuatPose&) = default;
};

struct ControlInput {
  double v = 0.0;      ///< linear velocity [m/s]
  double omega = 0.0;  ///< angular velocity [rad/s]

  friend bool operator==(const ControlInput&, const ControlInput&) = default;
};

/// Rover frame: x forward, y left, z up.
struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend bool operator==(const Point3&, const Point3&) = default;
};

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point2&, const Point2&) = default;
};

enum class Side { kLeft, kRight, kMiddle };

std::string_view to_string(Side side);

/// y = a * x + b in the rover frame.
struct BorderLine {
  double a = 0.0;
  double b = 0.0;
  Side side = Side::kMiddle;

  double at(double x) const { return a * x + b; }
};

/// Wraps an angle to (-pi, pi].
double wrap_angle(double theta);

/// theta = 2 atan2(qz, qw), wrapped to (-pi, pi].
double heading_of(const QuatPose& pose);

QuatPose pose_from(double x, double y, double theta);

/// Rescales (qw, qz) to unit norm. Falls back to identity orientation for a
/// zero pair.
QuatPose normalized(QuatPose pose);

inline double distance(const Point2& a, const Point2& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

}  // namespace rownav
