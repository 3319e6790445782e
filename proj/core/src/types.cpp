#include "rownav/types.hpp"

namespace rownav {

std::string_view to_string(Side side) {
  switch (side) {
    case Side::kLeft:
      return "left";
    case Side::kRight:
      return "right";
    case Side::kMiddle:
      return "middle";
  }
  return "unknown";
}

double wrap_angle(double theta) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  double wrapped = std::remainder(theta, kTwoPi);  // [-pi, pi]
  if (wrapped <= -std::numbers::pi) wrapped += kTwoPi;
  return wrapped;
}

double heading_of(const QuatPose& pose) {
  return wrap_angle(2.0 * std::atan2(pose.qz, pose.qw));
}

QuatPose pose_from(double x, double y, double theta) {
  const double half = 0.5 * wrap_angle(theta);
  return QuatPose{x, y, std::cos(half), std::sin(half)};
}

QuatPose normalized(QuatPose pose) {
  const double norm = std::hypot(pose.qw, pose.qz);
  if (norm == 0.0) {
    pose.qw = 1.0;
    pose.qz = 0.0;
    return pose;
  }
  pose.qw /= norm;
  pose.qz /= norm;
  return pose;
}

}  // namespace rownav
