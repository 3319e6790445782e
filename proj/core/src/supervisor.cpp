#include "rownav/supervisor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace rownav {

namespace {

ControlInput saturate(ControlInput u, double v_max, double omega_max) {
  return ControlInput{std::clamp(u.v, -v_max, v_max), std::clamp(u.omega, -omega_max, omega_max)};
}

}  // namespace

std::string_view to_string(Mode mode) {
  switch (mode) {
    case Mode::kTraverse:
      return "traverse";
    case Mode::kTargetApproach:
      return "target_approach";
    case Mode::kFallbackRealign:
      return "fallback_realign";
    case Mode::kEndOfRow:
      return "end_of_row";
    case Mode::kIdle:
      return "idle";
  }
  return "unknown";
}

void FallbackConfig::validate() const {
  if (!(K_p > 0.0)) throw std::invalid_argument("fallback.K_p: must be > 0");
  if (!(align_tol > 0.0 && align_tol < 0.5 * std::numbers::pi)) {
    throw std::invalid_argument("fallback.align_tol: must lie in (0, pi/2) radians");
  }
  if (!std::isfinite(v_during_realign)) {
    throw std::invalid_argument("fallback.v_during_realign: must be finite");
  }
}

void SupervisorConfig::validate() const {
  fallback.validate();
  if (n_empty < 1) throw std::invalid_argument("supervisor.n_empty: must be >= 1");
  if (!(dt > 0.0)) throw std::invalid_argument("supervisor.dt: must be > 0");
  if (!(approach.K_rho > 0.0)) throw std::invalid_argument("supervisor.K_rho: must be > 0");
  if (!(approach.K_alpha > 0.0)) throw std::invalid_argument("supervisor.K_alpha: must be > 0");
}

SupervisorState SupervisorState::with_row_prior(double row_heading) {
  SupervisorState s;
  const double a = std::tan(wrap_angle(row_heading));
  s.last_valid_lane = make_lane(BorderLine{a, 1.0, Side::kLeft},
                                BorderLine{a, -1.0, Side::kRight}, 0.0);
  return s;
}

double heading_error(const SupervisorState& state) {
  if (!state.last_valid_lane) return 0.0;
  return wrap_angle(state.rotation_since_lane - std::atan(state.last_valid_lane->a_avg()));
}

ControlInput fallback_control(double heading_error, const FallbackConfig& cfg,
                              double omega_max) {
  return ControlInput{cfg.v_during_realign,
                      std::clamp(-cfg.K_p * heading_error, -omega_max, omega_max)};
}

ApproachCommand target_approach_control(const QuatPose& state, const Point2& target,
                                        double standoff, const ApproachConfig& cfg) {
  const double dx = target.x - state.x;
  const double dy = target.y - state.y;
  const double range = std::hypot(dx, dy);
  if (range <= standoff) return ApproachDone{};
  const double bearing = wrap_angle(std::atan2(dy, dx) - heading_of(state));
  double v = std::clamp(cfg.K_rho * (range - standoff), 0.0, cfg.v_max);
  if (std::abs(bearing) > 0.5 * std::numbers::pi) v = 0.0;
  const double omega = std::clamp(cfg.K_alpha * bearing, -cfg.omega_max, cfg.omega_max);
  return ControlInput{v, omega};
}

TickResult tick(const SupervisorState& state, const PerceptionResult& perception,
                const std::optional<Target>& detection, NmpcController& nmpc,
                const SupervisorConfig& cfg) {
  TickResult out;
  out.state = state;
  SupervisorState& s = out.state;
  const PerceptionStatus status = status_of(perception);
  s.empty_fov_streak = status == PerceptionStatus::kEmptyFov ? s.empty_fov_streak + 1 : 0;

  ControlInput command{};
  const auto finish = [&](ControlInput u) {
    u = saturate(u, cfg.v_max, cfg.omega_max);
    s.last_command = u;
    s.rotation_since_lane += u.omega * cfg.dt;
    out.command = u;
    return out;
  };

  if (s.mode == Mode::kIdle || s.mode == Mode::kEndOfRow) {
    s.last_command = ControlInput{};
    out.command = ControlInput{};
    return out;
  }

  if (s.empty_fov_streak >= cfg.n_empty &&
      (s.mode == Mode::kTraverse || s.mode == Mode::kFallbackRealign)) {
    s.mode = Mode::kEndOfRow;
    s.active_target.reset();
    s.last_command = ControlInput{};
    out.command = ControlInput{};
    return out;
  }

  if (const auto* ok = std::get_if<PerceptionOk>(&perception)) {
    // While realigning, a lane is adopted only once it reports alignment;
    // steep views make walls cross the heading axis and fit wrongly.
    if (s.mode != Mode::kFallbackRealign ||
        std::abs(std::atan(ok->lane.a_avg())) <= cfg.fallback.align_tol) {
      s.last_valid_lane = ok->lane;
      s.rotation_since_lane = 0.0;
    }
  }

  if (s.mode == Mode::kTraverse && detection) {
    s.mode = Mode::kTargetApproach;
  }

  if (s.mode == Mode::kTargetApproach) {
    if (detection) {
      s.active_target = detection;
      const auto cmd = target_approach_control(QuatPose{}, detection->position,
                                               detection->standoff, cfg.approach);
      if (const auto* u = std::get_if<ControlInput>(&cmd)) {
        nmpc.reset();
        return finish(*u);
      }
      out.target_reached = true;
    }
    // Reached or lost: resume the row.
    s.active_target.reset();
    s.mode = Mode::kTraverse;
  }

  if (s.mode == Mode::kFallbackRealign) {
    const double error = heading_error(s);
    if (std::abs(error) > cfg.fallback.align_tol) {
      return finish(fallback_control(error, cfg.fallback, cfg.omega_max));
    }
    s.mode = Mode::kTraverse;
  }

  // Traverse.
  switch (status) {
    case PerceptionStatus::kOk: {
      const auto& ok = std::get<PerceptionOk>(perception);
      try {
        command = nmpc.control_step(QuatPose{}, ok.lane, ok.obstacles, s.last_command);
        out.solver_status = nmpc.last_solution()->status;
      } catch (const InfeasibleError&) {
        out.solver_status = SolverStatus::kInfeasible;
        s.mode = Mode::kFallbackRealign;
        command = fallback_control(heading_error(s), cfg.fallback, cfg.omega_max);
      }
      break;
    }
    case PerceptionStatus::kEmptyFov:
      command = s.last_command;
      break;
    case PerceptionStatus::kInvalidLane:
      nmpc.reset();
      if (s.last_valid_lane) {
        s.mode = Mode::kFallbackRealign;
        command = fallback_control(heading_error(s), cfg.fallback, cfg.omega_max);
      } else {
        command = ControlInput{};
      }
      break;
  }
  return finish(command);
}

}  // namespace rownav
