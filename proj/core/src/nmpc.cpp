#include "rownav/nmpc.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace rownav {

namespace {

using Mat4 = Eigen::Matrix4d;
using Mat42 = Eigen::Matrix<double, 4, 2>;
using Vec4 = Eigen::Vector4d;

// Corridor widths below this are clamped inside the solver so that lines
// converging within the horizon do not blow up the residuals.
constexpr double kMinCorridorWidth = 0.05;

void require(bool condition, const char* field, const char* rule) {
  if (!condition) throw std::invalid_argument(std::string("nmpc.") + field + ": " + rule);
}

Vec4 to_vec(const QuatPose& p) { return Vec4(p.x, p.y, p.qw, p.qz); }
QuatPose to_pose(const Vec4& v) { return QuatPose{v(0), v(1), v(2), v(3)}; }

Vec4 f(const Vec4& s, double v, double w) {
  return Vec4(v * (s(2) * s(2) - s(3) * s(3)), 2.0 * v * s(2) * s(3), -0.5 * w * s(3),
              0.5 * w * s(2));
}

Mat4 f_state(const Vec4& s, double v, double w) {
  Mat4 a = Mat4::Zero();
  a(0, 2) = 2.0 * v * s(2);
  a(0, 3) = -2.0 * v * s(3);
  a(1, 2) = 2.0 * v * s(3);
  a(1, 3) = 2.0 * v * s(2);
  a(2, 3) = -0.5 * w;
  a(3, 2) = 0.5 * w;
  return a;
}

Mat42 f_input(const Vec4& s) {
  Mat42 b = Mat42::Zero();
  b(0, 0) = s(2) * s(2) - s(3) * s(3);
  b(1, 0) = 2.0 * s(2) * s(3);
  b(2, 1) = -0.5 * s(3);
  b(3, 1) = 0.5 * s(2);
  return b;
}

struct StepJacobian {
  Vec4 next;
  Mat4 dx;   // d next / d state
  Mat42 du;  // d next / d (v, omega)
};

// RK4 + renormalization, with its sensitivities.
StepJacobian rk4_with_jacobian(const Vec4& x, double v, double w, double h) {
  const Mat4 I = Mat4::Identity();
  const Vec4 k1 = f(x, v, w);
  const Mat4 k1x = f_state(x, v, w);
  const Mat42 k1u = f_input(x);

  const Vec4 x2 = x + 0.5 * h * k1;
  const Mat4 x2x = I + 0.5 * h * k1x;
  const Mat42 x2u = 0.5 * h * k1u;
  const Vec4 k2 = f(x2, v, w);
  const Mat4 k2x = f_state(x2, v, w) * x2x;
  const Mat42 k2u = f_state(x2, v, w) * x2u + f_input(x2);

  const Vec4 x3 = x + 0.5 * h * k2;
  const Mat4 x3x = I + 0.5 * h * k2x;
  const Mat42 x3u = 0.5 * h * k2u;
  const Vec4 k3 = f(x3, v, w);
  const Mat4 k3x = f_state(x3, v, w) * x3x;
  const Mat42 k3u = f_state(x3, v, w) * x3u + f_input(x3);

  const Vec4 x4 = x + h * k3;
  const Mat4 x4x = I + h * k3x;
  const Mat42 x4u = h * k3u;
  const Vec4 k4 = f(x4, v, w);
  const Mat4 k4x = f_state(x4, v, w) * x4x;
  const Mat42 k4u = f_state(x4, v, w) * x4u + f_input(x4);

  Vec4 raw = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  Mat4 raw_x = I + (h / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
  Mat42 raw_u = (h / 6.0) * (k1u + 2.0 * k2u + 2.0 * k3u + k4u);

  const double norm = std::hypot(raw(2), raw(3));
  Mat4 nrm = Mat4::Identity();
  const Eigen::Vector2d q = raw.segment<2>(2) / norm;
  nrm.block<2, 2>(2, 2) = (Eigen::Matrix2d::Identity() - q * q.transpose()) / norm;

  StepJacobian out;
  out.next = raw;
  out.next.segment<2>(2) = q;
  out.dx = nrm * raw_x;
  out.du = nrm * raw_u;
  return out;
}

Vec4 rk4(const Vec4& x, double v, double w, double h) {
  const Vec4 k1 = f(x, v, w);
  const Vec4 k2 = f(x + 0.5 * h * k1, v, w);
  const Vec4 k3 = f(x + 0.5 * h * k2, v, w);
  const Vec4 k4 = f(x + h * k3, v, w);
  Vec4 raw = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  const double norm = std::hypot(raw(2), raw(3));
  raw(2) /= norm;
  raw(3) /= norm;
  return raw;
}

// One 0.7 s RK4 step at omega_max is off the exact arc by ~3e-6, so a control
// period is split into substeps turning at most kMaxSubstepTurn each.
constexpr double kMaxSubstepTurn = 0.1;  // [rad]

int substeps(double w, double h) {
  return std::max(1, static_cast<int>(std::ceil(std::abs(w) * h / kMaxSubstepTurn)));
}

Vec4 step(const Vec4& x, double v, double w, double h) {
  const int m = substeps(w, h);
  Vec4 out = x;
  for (int i = 0; i < m; ++i) out = rk4(out, v, w, h / m);
  return out;
}

StepJacobian step_with_jacobian(const Vec4& x, double v, double w, double h) {
  const int m = substeps(w, h);
  StepJacobian out = rk4_with_jacobian(x, v, w, h / m);
  for (int i = 1; i < m; ++i) {
    const StepJacobian s = rk4_with_jacobian(out.next, v, w, h / m);
    out.du = s.dx * out.du + s.du;
    out.dx = s.dx * out.dx;
    out.next = s.next;
  }
  return out;
}

// Residual r with r^2 = C_lane, its partials in (x, y); solver-safe version.
struct LaneResidual {
  double r, dx, dy;
};
LaneResidual lane_residual(double x, double y, const LaneModel& lane) {
  const BorderLine& l = lane.inflated_left;
  const BorderLine& rr = lane.inflated_right;
  const double sum = (l.a + rr.a) * x + (l.b + rr.b);
  double width = (l.a - rr.a) * x + (l.b - rr.b);
  double dwidth = l.a - rr.a;
  if (width < kMinCorridorWidth) {
    width = kMinCorridorWidth;
    dwidth = 0.0;
  }
  const double num = 2.0 * y - sum;
  return LaneResidual{num / width, (-(l.a + rr.a) * width - num * dwidth) / (width * width),
                      2.0 / width};
}

// tan(theta) from the half-angle pair and its partials in (qw, qz).
struct Slope {
  double t, dqw, dqz;
};
Slope rover_slope(double qw, double qz) {
  double c = qw * qw - qz * qz;
  if (std::abs(c) < kTanGuard) {
    c = std::copysign(kTanGuard, c);
    return Slope{2.0 * qw * qz / c, 2.0 * qz / c, 2.0 * qw / c};
  }
  const double n2 = qw * qw + qz * qz;
  return Slope{2.0 * qw * qz / c, -2.0 * qz * n2 / (c * c), 2.0 * qw * n2 / (c * c)};
}

double clamp(double x, double lim) { return std::clamp(x, -lim, lim); }

// Least-squares view of the shooting problem over U = (v0, w0, v1, w1, ...).
class ShootingProblem {
 public:
  ShootingProblem(const QuatPose& x0, const LaneModel& lane, std::span<const Point2> obstacles,
                  const ControlInput& u_prev, const NmpcConfig& cfg)
      : x0_(to_vec(x0)), lane_(lane), obstacles_(obstacles), u_prev_(u_prev), cfg_(cfg),
        n_(cfg.horizon_n) {
    const double a = lane.a_avg();
    const double s = std::sqrt(1.0 + a * a);
    meyer_grad_ = Vec4(-cfg.K_travel / s, -cfg.K_travel * a / s, 0.0, 0.0);
  }

  int nvar() const { return 2 * n_; }
  double lower(int i) const { return -(i % 2 == 0 ? cfg_.v_max : cfg_.omega_max); }
  double upper(int i) const { return i % 2 == 0 ? cfg_.v_max : cfg_.omega_max; }

  Eigen::VectorXd project(Eigen::VectorXd u) const {
    for (int i = 0; i < nvar(); ++i) u(i) = std::clamp(u(i), lower(i), upper(i));
    return u;
  }

  std::vector<Vec4> states(const Eigen::VectorXd& u) const {
    std::vector<Vec4> xs(static_cast<std::size_t>(n_ + 1));
    xs[0] = x0_;
    for (int k = 0; k < n_; ++k) {
      xs[static_cast<std::size_t>(k + 1)] =
          step(xs[static_cast<std::size_t>(k)], u(2 * k), u(2 * k + 1), cfg_.dt);
    }
    return xs;
  }

  struct Value {
    double cost = 0.0;       // objective without penalty
    double violation = 0.0;  // max max(0, g)
    std::vector<double> g;   // constraint values, step-major
  };

  int ncons() const { return n_ * static_cast<int>(obstacles_.size()); }

  Value value(const Eigen::VectorXd& u) const {
    const auto xs = states(u);
    Value out;
    const double kl = cfg_.K_lane, ko = cfg_.K_orient;
    const double a = lane_.a_avg();
    for (int k = 0; k < n_; ++k) {
      const Vec4& x = xs[static_cast<std::size_t>(k)];
      const double rl = lane_residual(x(0), x(1), lane_).r;
      const double ra = a - rover_slope(x(2), x(3)).t;
      const double dv = u(2 * k) - (k == 0 ? u_prev_.v : u(2 * k - 2));
      const double dw = u(2 * k + 1) - (k == 0 ? u_prev_.omega : u(2 * k - 1));
      out.cost += kl * rl * rl + ko * ra * ra + cfg_.r_weight_v * dv * dv +
                  cfg_.r_weight_omega * dw * dw;
    }
    out.cost += meyer_grad_.dot(xs[static_cast<std::size_t>(n_)]);
    out.g.reserve(static_cast<std::size_t>(ncons()));
    for (int k = 1; k <= n_; ++k) {
      const Vec4& x = xs[static_cast<std::size_t>(k)];
      for (const Point2& o : obstacles_) {
        const double g = cfg_.R_safe * cfg_.R_safe - (x(0) - o.x) * (x(0) - o.x) -
                         (x(1) - o.y) * (x(1) - o.y);
        out.g.push_back(g);
        out.violation = std::max(out.violation, g);
      }
    }
    return out;
  }

  // Augmented Lagrangian (PHR) of the inequality constraints; lambda empty
  // means zero multipliers.
  static double merit(const Value& v, const std::vector<double>& lambda, double rho) {
    double m = v.cost;
    for (std::size_t c = 0; c < v.g.size(); ++c) {
      const double l = lambda.empty() ? 0.0 : lambda[c];
      const double t = std::max(0.0, l + rho * v.g[c]);
      m += (t * t - l * l) / (2.0 * rho);
    }
    return m;
  }

  // Gradient and Gauss-Newton Hessian of the merit.
  void linearize(const Eigen::VectorXd& u, const std::vector<double>& lambda, double rho,
                 Eigen::VectorXd& grad,
                 Eigen::MatrixXd& hess) const {
    const int m = nvar();
    std::vector<Vec4> xs(static_cast<std::size_t>(n_ + 1));
    std::vector<Eigen::Matrix<double, 4, Eigen::Dynamic>> sens(
        static_cast<std::size_t>(n_ + 1), Eigen::Matrix<double, 4, Eigen::Dynamic>::Zero(4, m));
    xs[0] = x0_;
    for (int k = 0; k < n_; ++k) {
      const auto sj = step_with_jacobian(xs[static_cast<std::size_t>(k)], u(2 * k),
                                         u(2 * k + 1), cfg_.dt);
      xs[static_cast<std::size_t>(k + 1)] = sj.next;
      sens[static_cast<std::size_t>(k + 1)] = sj.dx * sens[static_cast<std::size_t>(k)];
      sens[static_cast<std::size_t>(k + 1)].middleCols(2 * k, 2) += sj.du;
    }

    grad = Eigen::VectorXd::Zero(m);
    hess = Eigen::MatrixXd::Zero(m, m);
    const auto add_residual = [&](double weight, double r, const Eigen::RowVectorXd& j) {
      grad += 2.0 * weight * r * j.transpose();
      hess += 2.0 * weight * j.transpose() * j;
    };

    const double a = lane_.a_avg();
    for (int k = 0; k < n_; ++k) {
      const Vec4& x = xs[static_cast<std::size_t>(k)];
      const auto& s = sens[static_cast<std::size_t>(k)];
      if (k > 0) {
        const LaneResidual lr = lane_residual(x(0), x(1), lane_);
        add_residual(cfg_.K_lane, lr.r, lr.dx * s.row(0) + lr.dy * s.row(1));
        const Slope sl = rover_slope(x(2), x(3));
        add_residual(cfg_.K_orient, a - sl.t, -(sl.dqw * s.row(2) + sl.dqz * s.row(3)));
      }
      Eigen::RowVectorXd jv = Eigen::RowVectorXd::Zero(m);
      Eigen::RowVectorXd jw = Eigen::RowVectorXd::Zero(m);
      jv(2 * k) = 1.0;
      jw(2 * k + 1) = 1.0;
      if (k > 0) {
        jv(2 * k - 2) = -1.0;
        jw(2 * k - 1) = -1.0;
      }
      const double dv = u(2 * k) - (k == 0 ? u_prev_.v : u(2 * k - 2));
      const double dw = u(2 * k + 1) - (k == 0 ? u_prev_.omega : u(2 * k - 1));
      add_residual(cfg_.r_weight_v, dv, jv);
      add_residual(cfg_.r_weight_omega, dw, jw);
    }
    grad += (meyer_grad_.transpose() * sens[static_cast<std::size_t>(n_)]).transpose();

    for (int k = 1; k <= n_; ++k) {
      const Vec4& x = xs[static_cast<std::size_t>(k)];
      const auto& s = sens[static_cast<std::size_t>(k)];
      for (std::size_t i = 0; i < obstacles_.size(); ++i) {
        const Point2& o = obstacles_[i];
        const double l = lambda[static_cast<std::size_t>(k - 1) * obstacles_.size() + i];
        const double dx = x(0) - o.x, dy = x(1) - o.y;
        const double g = cfg_.R_safe * cfg_.R_safe - dx * dx - dy * dy;
        if (l + rho * g <= 0.0) continue;
        add_residual(0.5 * rho, g + l / rho, -2.0 * dx * s.row(0) - 2.0 * dy * s.row(1));
      }
    }
  }

 private:
  Vec4 x0_;
  const LaneModel& lane_;
  std::span<const Point2> obstacles_;
  ControlInput u_prev_;
  const NmpcConfig& cfg_;
  int n_;
  Vec4 meyer_grad_;
};

struct SolveOutcome {
  Eigen::VectorXd u;
  ShootingProblem::Value value;
  int iterations = 0;
  bool stationary = false;
};

// Projected Levenberg-Marquardt on the augmented Lagrangian; multipliers are
// updated after each inner solve and rho grows while the violation stalls.
SolveOutcome run_solver(const ShootingProblem& prob, Eigen::VectorXd u, const NmpcConfig& cfg) {
  const int m = prob.nvar();
  double rho = cfg.penalty_init;
  std::vector<double> lambda(static_cast<std::size_t>(prob.ncons()), 0.0);
  SolveOutcome out;
  out.u = prob.project(std::move(u));
  out.value = prob.value(out.u);
  int iter = 0;
  double last_violation = std::numeric_limits<double>::infinity();
  // Best feasible iterate seen; the penalized iterates can drift through the
  // constraint boundary and stall just outside it.
  std::optional<SolveOutcome> best_feasible;
  const auto note_feasible = [&](const SolveOutcome& o) {
    if (o.value.violation <= cfg.solver_tol &&
        (!best_feasible || o.value.cost < best_feasible->value.cost)) {
      best_feasible = o;
    }
  };
  note_feasible(out);
  Eigen::VectorXd grad;
  Eigen::MatrixXd hess;

  while (true) {
    double lambda_lm = 1e-4;
    bool stationary = false;
    double cur = ShootingProblem::merit(out.value, lambda, rho);
    while (iter < cfg.solver_max_iter) {
      ++iter;
      prob.linearize(out.u, lambda, rho, grad, hess);

      std::vector<int> free;
      double pg = 0.0;
      for (int i = 0; i < m; ++i) {
        const bool at_lo = out.u(i) <= prob.lower(i) + 1e-12 && grad(i) > 0.0;
        const bool at_hi = out.u(i) >= prob.upper(i) - 1e-12 && grad(i) < 0.0;
        if (!at_lo && !at_hi) {
          free.push_back(i);
          pg = std::max(pg, std::abs(grad(i)));
        }
      }
      if (pg < cfg.solver_opt_tol) {
        stationary = true;
        break;
      }

      const int nf = static_cast<int>(free.size());
      Eigen::MatrixXd hf(nf, nf);
      Eigen::VectorXd gf(nf);
      for (int p = 0; p < nf; ++p) {
        gf(p) = grad(free[static_cast<std::size_t>(p)]);
        for (int q = 0; q < nf; ++q) {
          hf(p, q) = hess(free[static_cast<std::size_t>(p)], free[static_cast<std::size_t>(q)]);
        }
      }

      bool accepted = false;
      while (!accepted && lambda_lm < 1e10) {
        Eigen::MatrixXd damped = hf;
        damped.diagonal().array() += lambda_lm * (1.0 + hf.diagonal().array());
        const Eigen::VectorXd df = damped.ldlt().solve(-gf);
        Eigen::VectorXd trial = out.u;
        for (int p = 0; p < nf; ++p) trial(free[static_cast<std::size_t>(p)]) += df(p);
        trial = prob.project(trial);
        auto val = prob.value(trial);
        const double next = ShootingProblem::merit(val, lambda, rho);
        const double predicted = grad.dot(trial - out.u);
        if (std::isfinite(next) && next <= cur + 1e-4 * std::min(predicted, 0.0) &&
            next <= cur) {
          const double change = cur - next;
          out.u = trial;
          out.value = std::move(val);
          cur = next;
          lambda_lm = std::max(lambda_lm * 0.3, 1e-9);
          accepted = true;
          note_feasible(out);
          if (change <= 1e-14 * (1.0 + std::abs(cur))) stationary = true;
        } else {
          lambda_lm *= 10.0;
        }
      }
      if (!accepted || stationary) {
        stationary = true;
        break;
      }
    }
    out.stationary = stationary;
    if (out.value.violation <= cfg.solver_tol || iter >= cfg.solver_max_iter) break;
    for (std::size_t c = 0; c < lambda.size(); ++c) {
      lambda[c] = std::max(0.0, lambda[c] + rho * out.value.g[c]);
    }
    if (out.value.violation > 0.25 * last_violation) rho *= cfg.penalty_growth;
    last_violation = out.value.violation;
    if (rho > 1e12) break;
  }
  if (out.value.violation > cfg.solver_tol && best_feasible) {
    out = *best_feasible;
    out.stationary = false;
  }
  out.iterations = iter;
  return out;
}

Eigen::VectorXd constant_inputs(int n, const ControlInput& u) {
  Eigen::VectorXd out(2 * n);
  for (int k = 0; k < n; ++k) {
    out(2 * k) = u.v;
    out(2 * k + 1) = u.omega;
  }
  return out;
}

}  // namespace

std::string_view to_string(SolverStatus status) {
  switch (status) {
    case SolverStatus::kConverged:
      return "converged";
    case SolverStatus::kMaxIter:
      return "max_iter";
    case SolverStatus::kInfeasible:
      return "infeasible";
  }
  return "unknown";
}

void NmpcConfig::validate() const {
  require(std::isfinite(v_max) && v_max > 0.0, "v_max", "must be > 0");
  require(std::isfinite(omega_max) && omega_max > 0.0, "omega_max", "must be > 0");
  require(std::isfinite(dt) && dt > 0.0, "dt", "must be > 0");
  require(horizon_n >= 2, "horizon_n", "must be >= 2");
  require(K_lane >= 0.0, "K_lane", "must be >= 0");
  require(K_orient >= 0.0, "K_orient", "must be >= 0");
  require(K_travel >= 0.0, "K_travel", "must be >= 0");
  require(r_weight_v >= 0.0, "r_weight_v", "must be >= 0");
  require(r_weight_omega >= 0.0, "r_weight_omega", "must be >= 0");
  require(std::isfinite(R_safe) && R_safe >= 0.0, "R_safe", "must be >= 0");
  require(solver_max_iter >= 1, "solver_max_iter", "must be >= 1");
  require(solver_tol > 0.0, "solver_tol", "must be > 0");
  require(solver_opt_tol > 0.0, "solver_opt_tol", "must be > 0");
  require(penalty_init > 0.0, "penalty_init", "must be > 0");
  require(penalty_growth > 1.0, "penalty_growth", "must be > 1");
}

StateVector dynamics(const QuatPose& state, const ControlInput& u) {
  const Vec4 d = f(to_vec(state), u.v, u.omega);
  return {d(0), d(1), d(2), d(3)};
}

QuatPose integrate_step(const QuatPose& state, const ControlInput& u, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("integrate_step: dt must be > 0");
  return to_pose(step(to_vec(state), u.v, u.omega, dt));
}

double lane_cost(const QuatPose& state, const LaneModel& lane) {
  const double yl = lane.inflated_left.at(state.x);
  const double yr = lane.inflated_right.at(state.x);
  const double width = yl - yr;
  if (width == 0.0 || !std::isfinite(width)) {
    throw CostDomainError("lane_cost: borders coincide at x = " + std::to_string(state.x));
  }
  const double w2 = width * width;
  const double s = yl + yr;
  return 4.0 / w2 * state.y * state.y - 4.0 * s / w2 * state.y + s * s / w2;
}

double align_cost(const QuatPose& state, const LaneModel& lane) {
  const double c = state.qw * state.qw - state.qz * state.qz;
  if (!(std::abs(c) > kTanGuard)) {
    throw CostDomainError("align_cost: heading too close to +-90 degrees");
  }
  const double diff = lane.a_avg() - 2.0 * state.qw * state.qz / c;
  return diff * diff;
}

double meyer_cost(const QuatPose& state, const LaneModel& lane, double K_travel) {
  const double a = lane.a_avg();
  return -K_travel * (state.x + a * state.y) / std::sqrt(1.0 + a * a);
}

double obstacle_constraint(const QuatPose& state, const Point2& obstacle, double R_safe) {
  const double dx = state.x - obstacle.x;
  const double dy = state.y - obstacle.y;
  return -dx * dx - dy * dy + R_safe * R_safe;
}

double stage_cost(const QuatPose& state, const ControlInput& u, const ControlInput& u_prev,
                  const LaneModel& lane, const NmpcConfig& cfg) {
  const double dv = u.v - u_prev.v;
  const double dw = u.omega - u_prev.omega;
  return cfg.K_lane * lane_cost(state, lane) + cfg.K_orient * align_cost(state, lane) +
         cfg.r_weight_v * dv * dv + cfg.r_weight_omega * dw * dw;
}

StageCostGradient stage_cost_gradient(const QuatPose& state, const ControlInput& u,
                                      const ControlInput& u_prev, const LaneModel& lane,
                                      const NmpcConfig& cfg) {
  const BorderLine& l = lane.inflated_left;
  const BorderLine& r = lane.inflated_right;
  const double sum = (l.a + r.a) * state.x + (l.b + r.b);
  const double width = (l.a - r.a) * state.x + (l.b - r.b);
  if (width == 0.0) throw CostDomainError("stage_cost_gradient: borders coincide");
  const double num = 2.0 * state.y - sum;
  const double ratio = num / width;

  const double c = state.qw * state.qw - state.qz * state.qz;
  if (!(std::abs(c) > kTanGuard)) {
    throw CostDomainError("stage_cost_gradient: heading too close to +-90 degrees");
  }
  const Slope sl = rover_slope(state.qw, state.qz);
  const double diff = lane.a_avg() - sl.t;

  StageCostGradient g;
  g.state[0] = cfg.K_lane * 2.0 * ratio *
               (-(l.a + r.a) * width - num * (l.a - r.a)) / (width * width);
  g.state[1] = cfg.K_lane * 2.0 * ratio * 2.0 / width;
  g.state[2] = cfg.K_orient * -2.0 * diff * sl.dqw;
  g.state[3] = cfg.K_orient * -2.0 * diff * sl.dqz;
  g.input[0] = 2.0 * cfg.r_weight_v * (u.v - u_prev.v);
  g.input[1] = 2.0 * cfg.r_weight_omega * (u.omega - u_prev.omega);
  return g;
}

StateVector meyer_cost_gradient(const LaneModel& lane, double K_travel) {
  const double a = lane.a_avg();
  const double s = std::sqrt(1.0 + a * a);
  return {-K_travel / s, -K_travel * a / s, 0.0, 0.0};
}

std::vector<QuatPose> rollout(const QuatPose& state, std::span<const ControlInput> inputs,
                              double dt) {
  std::vector<QuatPose> out;
  out.reserve(inputs.size() + 1);
  out.push_back(state);
  for (const ControlInput& u : inputs) out.push_back(integrate_step(out.back(), u, dt));
  return out;
}

double objective(const QuatPose& state, std::span<const ControlInput> inputs,
                 const LaneModel& lane, const ControlInput& u_prev, const NmpcConfig& cfg) {
  const auto xs = rollout(state, inputs, cfg.dt);
  double cost = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    cost += stage_cost(xs[k], inputs[k], k == 0 ? u_prev : inputs[k - 1], lane, cfg);
  }
  return cost + meyer_cost(xs.back(), lane, cfg.K_travel);
}

double max_violation(std::span<const QuatPose> states, std::span<const Point2> obstacles,
                     double R_safe) {
  double worst = 0.0;
  for (std::size_t k = 1; k < states.size(); ++k) {
    for (const Point2& o : obstacles) {
      worst = std::max(worst, obstacle_constraint(states[k], o, R_safe));
    }
  }
  return worst;
}

ControlSequence solve(const QuatPose& state, const LaneModel& lane,
                      std::span<const Point2> obstacles, const ControlInput& u_prev,
                      const NmpcConfig& cfg, const ControlSequence* warm_start) {
  const int n = cfg.horizon_n;
  const ShootingProblem prob(state, lane, obstacles, u_prev, cfg);

  // Candidate initializations; the best by merit seeds the main solve.
  const ControlInput hold{clamp(u_prev.v, cfg.v_max), clamp(u_prev.omega, cfg.omega_max)};
  std::vector<Eigen::VectorXd> seeds{constant_inputs(n, hold),
                                     constant_inputs(n, ControlInput{})};
  const Eigen::VectorXd zero_control = seeds[1];
  std::optional<Eigen::VectorXd> warm;
  if (warm_start != nullptr && static_cast<int>(warm_start->inputs.size()) == n) {
    Eigen::VectorXd w(2 * n);
    for (int k = 0; k < n; ++k) {
      const ControlInput& src =
          warm_start->inputs[static_cast<std::size_t>(std::min(k + 1, n - 1))];
      w(2 * k) = src.v;
      w(2 * k + 1) = src.omega;
    }
    warm = prob.project(w);
    seeds.insert(seeds.begin(), *warm);
  }

  const double rho0 = cfg.penalty_init;
  std::size_t best_seed = 0;
  double best_merit = std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    const double m = ShootingProblem::merit(prob.value(seeds[s]), {}, rho0);
    if (m < best_merit) {
      best_merit = m;
      best_seed = s;
    }
  }

  std::vector<SolveOutcome> outcomes;
  outcomes.push_back(run_solver(prob, seeds[best_seed], cfg));

  // A symmetric obstacle ahead is a saddle for the local solver; also try
  // swerving to either side.
  const double reach = cfg.v_max * cfg.dt * n + cfg.R_safe;
  const bool obstacle_in_reach = std::any_of(obstacles.begin(), obstacles.end(), [&](const Point2& o) {
    return std::hypot(o.x - state.x, o.y - state.y) <= reach;
  });
  // Constant-input motion primitives; the cheapest feasible one seeds a
  // further solve and bounds the reported cost from above.
  std::vector<Eigen::VectorXd> baselines{zero_control};
  if (warm) baselines.push_back(*warm);
  if (obstacle_in_reach) {
    for (double sign : {1.0, -1.0}) {
      outcomes.push_back(run_solver(
          prob, constant_inputs(n, ControlInput{0.5 * cfg.v_max, sign * 0.5 * cfg.omega_max}),
          cfg));
    }
    std::optional<Eigen::VectorXd> best_primitive;
    double best_cost = std::numeric_limits<double>::infinity();
    // Turn for `turn` steps, hold the heading, then turn back from step
    // `back` on. A turn in place is followed by full speed.
    for (double fv : {0.0, 0.25, 0.5, 1.0}) {
      const double cruise = (fv > 0.0 ? fv : 1.0) * cfg.v_max;
      for (double fw : {-1.0, -0.5, 0.5, 1.0}) {
        for (int turn = 1; turn <= n; ++turn) {
          for (int back = turn; back <= n; ++back) {
            auto u = constant_inputs(n, ControlInput{cruise, 0.0});
            for (int k = 0; k < turn; ++k) {
              u(2 * k) = fv * cfg.v_max;
              u(2 * k + 1) = fw * cfg.omega_max;
            }
            for (int k = back; k < n; ++k) u(2 * k + 1) = -fw * cfg.omega_max;
            const auto val = prob.value(u);
            if (val.violation <= cfg.solver_tol && val.cost < best_cost) {
              best_cost = val.cost;
              best_primitive = std::move(u);
            }
          }
        }
      }
    }
    if (best_primitive) {
      outcomes.push_back(run_solver(prob, *best_primitive, cfg));
      baselines.push_back(*best_primitive);
    }
  }

  const auto better = [&](const SolveOutcome& a, const SolveOutcome& b) {
    const bool fa = a.value.violation <= cfg.solver_tol;
    const bool fb = b.value.violation <= cfg.solver_tol;
    if (fa != fb) return fa;
    if (!fa) return a.value.violation < b.value.violation;
    return a.value.cost < b.value.cost;
  };
  std::size_t pick = 0;
  int total_iter = 0;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    total_iter += outcomes[i].iterations;
    if (better(outcomes[i], outcomes[pick])) pick = i;
  }
  SolveOutcome chosen = outcomes[pick];

  // Never report worse than a feasible trivial candidate.
  bool replaced = false;
  for (const auto& b : baselines) {
    const auto val = prob.value(b);
    if (val.violation <= cfg.solver_tol &&
        (chosen.value.violation > cfg.solver_tol || val.cost < chosen.value.cost)) {
      chosen.u = b;
      chosen.value = val;
      replaced = true;
    }
  }

  ControlSequence seq;
  seq.inputs.reserve(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    seq.inputs.push_back(ControlInput{chosen.u(2 * k), chosen.u(2 * k + 1)});
  }
  seq.predicted_states = rollout(state, seq.inputs, cfg.dt);
  seq.cost = chosen.value.cost;
  seq.max_constraint_violation = chosen.value.violation;
  seq.iterations = total_iter;
  if (chosen.value.violation > cfg.solver_tol) {
    seq.status = SolverStatus::kInfeasible;
  } else if (chosen.stationary && !replaced) {
    seq.status = SolverStatus::kConverged;
  } else {
    seq.status = SolverStatus::kMaxIter;
  }
  return seq;
}

NmpcController::NmpcController(NmpcConfig cfg) : cfg_(cfg) { cfg_.validate(); }

ControlInput NmpcController::control_step(const QuatPose& state, const LaneModel& lane,
                                          std::span<const Point2> obstacles,
                                          const ControlInput& u_prev) {
  ControlSequence seq =
      solve(state, lane, obstacles, u_prev, cfg_, last_ ? &*last_ : nullptr);
  if (seq.status == SolverStatus::kInfeasible) {
    last_.reset();
    throw InfeasibleError(std::move(seq));
  }
  last_ = std::move(seq);
  return last_->inputs.front();
}

}  // namespace rownav
