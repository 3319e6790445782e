#pragma once

#include <optional>
#include <string_view>
#include <variant>

#include "rownav/nmpc.hpp"
#include "rownav/pcd_pipeline.hpp"
#include "rownav/types.hpp"

namespace rownav {

enum class Mode { kTraverse, kTargetApproach, kFallbackRealign, kEndOfRow, kIdle };
std::string_view to_string(Mode mode);

struct FallbackConfig {
  double K_p = 1.0;               ///< [1/s]
  double align_tol = 0.1;         ///< [rad]
  double v_during_realign = 0.0;  ///< [m/s]

  void validate() const;
};

struct ApproachConfig {
  double K_rho = 0.5;    ///< [1/s]
  double K_alpha = 1.0;  ///< [1/s]
  double v_max = 0.4;
  double omega_max = 0.5;
};

/// Object of interest in the rover frame.
struct Target {
  Point2 position;
  double standoff = 0.5;  ///< [m]
};

struct SupervisorConfig {
  FallbackConfig fallback;
  ApproachConfig approach;
  int n_empty = 3;  ///< consecutive empty-FOV ticks that end the row
  double dt = 0.7;  ///< control period, used to integrate commanded yaw
  double v_max = 0.4;
  double omega_max = 0.5;

  void validate() const;
};

struct SupervisorState {
  Mode mode = Mode::kTraverse;
  std::optional<LaneModel> last_valid_lane;
  /// Commanded yaw accumulated since last_valid_lane was observed [rad].
  double rotation_since_lane = 0.0;
  int empty_fov_streak = 0;
  std::optional<Target> active_target;
  ControlInput last_command;

  /// Seed with a row direction (relative to the current heading) for starts
  /// where no lane has been observed yet.
  static SupervisorState with_row_prior(double row_heading);
};

/// Rover heading relative to the cached row direction, wrapped.
double heading_error(const SupervisorState& state);

/// Proportional realignment: omega = clamp(-K_p * error), v = v_during_realign.
ControlInput fallback_control(double heading_error, const FallbackConfig& cfg,
                              double omega_max);

struct ApproachDone {};
using ApproachCommand = std::variant<ControlInput, ApproachDone>;

ApproachCommand target_approach_control(const QuatPose& state, const Point2& target,
                                        double standoff, const ApproachConfig& cfg);

struct TickResult {
  ControlInput command;
  SupervisorState state;
  std::optional<SolverStatus> solver_status;
  bool target_reached = false;
};

/// One supervisor step. The rover frame is the reference: the rover sits at
/// the origin with zero heading whenever perception is evaluated.
TickResult tick(const SupervisorState& state, const PerceptionResult& perception,
                const std::optional<Target>& detection, NmpcController& nmpc,
                const SupervisorConfig& cfg);

}  // namespace rownav
