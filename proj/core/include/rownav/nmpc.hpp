#pragma once

#include <array>
#include <optional>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "rownav/pcd_pipeline.hpp"
#include "rownav/types.hpp"

namespace rownav {

struct NmpcConfig {
  double v_max = 0.4;        ///< [m/s]
  double omega_max = 0.5;    ///< [rad/s]
  double dt = 0.7;           ///< control period [s]
  int horizon_n = 5;         ///< prediction steps, T_H = n * dt
  double K_lane = 1.0;
  double K_orient = 1.0;
  double K_travel = 1.0;
  double r_weight_v = 0.1;
  double r_weight_omega = 0.1;
  double R_safe = 0.3;       ///< obstacle clearance radius [m]
  int solver_max_iter = 200;
  double solver_tol = 1e-4;  ///< max constraint violation [m^2]
  double solver_opt_tol = 1e-6;  ///< projected-gradient stopping threshold
  double penalty_init = 10.0;
  double penalty_growth = 10.0;

  void validate() const;
};

enum class SolverStatus { kConverged, kMaxIter, kInfeasible };
std::string_view to_string(SolverStatus status);

struct ControlSequence {
  std::vector<ControlInput> inputs;        ///< n entries
  std::vector<QuatPose> predicted_states;  ///< n + 1 entries, [0] = query state
  double cost = 0.0;
  double max_constraint_violation = 0.0;   ///< [m^2]
  int iterations = 0;
  SolverStatus status = SolverStatus::kConverged;
};

/// Raised when the closed-form costs are undefined at a state.
class CostDomainError : public std::domain_error {
  using std::domain_error::domain_error;
};

class InfeasibleError : public std::runtime_error {
 public:
  explicit InfeasibleError(ControlSequence sequence)
      : std::runtime_error("nmpc: no feasible control sequence"),
        sequence_(std::move(sequence)) {}
  const ControlSequence& sequence() const { return sequence_; }

 private:
  ControlSequence sequence_;
};

/// Minimum |qw^2 - qz^2| for which the rover-heading slope is defined.
inline constexpr double kTanGuard = 1e-3;

using StateVector = std::array<double, 4>;

/// Unicycle kinematics on the half-angle pair:
///   (v (qw^2 - qz^2), 2 v qw qz, -omega qz / 2, omega qw / 2).
StateVector dynamics(const QuatPose& state, const ControlInput& u);

/// RK4 over dt, split into equal substeps of at most 0.1 rad of turn, with
/// (qw, qz) renormalized after each substep.
QuatPose integrate_step(const QuatPose& state, const ControlInput& u, double dt);

/// Centering paraboloid (2y - (y_l + y_r))^2 / (y_l - y_r)^2 on the inflated
/// borders at the state's x. Throws CostDomainError when the borders meet.
double lane_cost(const QuatPose& state, const LaneModel& lane);

/// (a_avg - tan(theta))^2 with tan(theta) = 2 qw qz / (qw^2 - qz^2). Throws
/// CostDomainError when |qw^2 - qz^2| <= kTanGuard.
double align_cost(const QuatPose& state, const LaneModel& lane);

/// Progress along the middle-line direction, negated: the terminal cost.
double meyer_cost(const QuatPose& state, const LaneModel& lane, double K_travel);

/// R^2 - |p - o|^2; feasible iff <= 0.
double obstacle_constraint(const QuatPose& state, const Point2& obstacle, double R_safe);

double stage_cost(const QuatPose& state, const ControlInput& u,
                  const ControlInput& u_prev, const LaneModel& lane,
                  const NmpcConfig& cfg);

struct StageCostGradient {
  StateVector state{};          ///< d/d(x, y, qw, qz)
  std::array<double, 2> input{};  ///< d/d(v, omega)
};

StageCostGradient stage_cost_gradient(const QuatPose& state, const ControlInput& u,
                                      const ControlInput& u_prev,
                                      const LaneModel& lane, const NmpcConfig& cfg);

StateVector meyer_cost_gradient(const LaneModel& lane, double K_travel);

/// Chains integrate_step from `state` through `inputs`.
std::vector<QuatPose> rollout(const QuatPose& state, std::span<const ControlInput> inputs,
                              double dt);

/// Objective of a candidate: stage costs at steps 0..n-1 plus the terminal
/// cost. Penalties are not included.
double objective(const QuatPose& state, std::span<const ControlInput> inputs,
                 const LaneModel& lane, const ControlInput& u_prev,
                 const NmpcConfig& cfg);

/// Largest obstacle violation over steps 1..n, clipped at 0.
double max_violation(std::span<const QuatPose> states, std::span<const Point2> obstacles,
                     double R_safe);

/// Direct single shooting over the n inputs; obstacles by an augmented
/// Lagrangian (multiplier updates, rho grown while the violation stalls), box
/// bounds by projection, projected Levenberg-Marquardt steps on the
/// least-squares structure of the objective.
ControlSequence solve(const QuatPose& state, const LaneModel& lane,
                      std::span<const Point2> obstacles, const ControlInput& u_prev,
                      const NmpcConfig& cfg,
                      const ControlSequence* warm_start = nullptr);

/// Receding-horizon wrapper: keeps the last solution for warm starting.
class NmpcController {
 public:
  explicit NmpcController(NmpcConfig cfg);

  /// First input of a fresh solve. Throws InfeasibleError and drops the warm
  /// start when the solver reports kInfeasible.
  ControlInput control_step(const QuatPose& state, const LaneModel& lane,
                            std::span<const Point2> obstacles,
                            const ControlInput& u_prev);

  const std::optional<ControlSequence>& last_solution() const { return last_; }
  const NmpcConfig& config() const { return cfg_; }
  void reset() { last_.reset(); }

 private:
  NmpcConfig cfg_;
  std::optional<ControlSequence> last_;
};

}  // namespace rownav
