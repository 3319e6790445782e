#include "rownav/sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "rownav/cloud_io.hpp"

namespace rownav {

namespace {

void require(bool condition, const std::string& field, const char* rule) {
  if (!condition) throw std::invalid_argument(field + ": " + rule);
}

}  // namespace

void WorldSpec::validate() const {
  require(row_length > 0.0, "world.row_length", "must be > 0");
  require(intra_row_space > 0.0, "world.intra_row_space", "must be > 0");
  require(std::isfinite(curvature), "world.curvature", "must be finite");
  require(canopy_overrun >= 0.0, "world.canopy_overrun", "must be >= 0");
  require(curvature == 0.0 ||
              std::abs(curvature * (row_length + canopy_overrun)) < std::numbers::pi,
          "world.curvature", "arc must turn by less than pi over the row");
  require(plant_spacing > 0.0, "world.plant_spacing", "must be > 0");
  require(plant_radius > 0.0 && plant_radius < 0.5 * intra_row_space, "world.plant_radius",
          "must lie in (0, intra_row_space / 2)");
  require(plant_height > 0.0, "world.plant_height", "must be > 0");
  require(canopy_points_per_plant >= 1, "world.canopy_points_per_plant", "must be >= 1");
  require(noise_sigma >= 0.0, "world.noise_sigma", "must be >= 0");
  require(obstacle_height > 0.0, "world.obstacle_height", "must be > 0");
  for (std::size_t i = 0; i < extra_obstacles.size(); ++i) {
    require(extra_obstacles[i].radius > 0.0,
            "world.extra_obstacles[" + std::to_string(i) + "].radius", "must be > 0");
  }
}

void CameraSpec::validate() const {
  const double limit = model == SensorModel::kPlanarSweep ? 2.0 * std::numbers::pi : std::numbers::pi;
  require(h_fov > 0.0 && h_fov < limit + 1e-12, "camera.h_fov",
          "must lie in (0, pi) radians (2 pi for a planar sweep)");
  require(v_fov > 0.0 && v_fov < std::numbers::pi, "camera.v_fov", "must lie in (0, pi) radians");
  require(max_range > 0.0, "camera.max_range", "must be > 0");
  require(rays_h >= 2, "camera.rays_h", "must be >= 2");
  require(rays_v >= 2, "camera.rays_v", "must be >= 2");
  require(mount_height > 0.0, "camera.mount_height", "must be > 0");
  require(hit_radius > 0.0, "camera.hit_radius", "must be > 0");
}

CameraSpec CameraSpec::planar_sweep() {
  CameraSpec c;
  c.model = SensorModel::kPlanarSweep;
  c.h_fov = 2.0 * std::numbers::pi;
  c.v_fov = 30.0 * std::numbers::pi / 180.0;
  c.max_range = 10.0;
  c.rays_h = 720;
  c.rays_v = 16;
  c.mount_height = 0.5;
  return c;
}

std::string_view to_string(Termination termination) {
  switch (termination) {
    case Termination::kEndOfRow:
      return "end_of_row";
    case Termination::kCollision:
      return "collision";
    case Termination::kMaxTicks:
      return "max_ticks";
  }
  return "unknown";
}

// ---------------------------------------------------------------- reference

Point2 ReferencePath::point_at(double s) const {
  double lx = s, ly = 0.0;
  if (curvature != 0.0) {
    lx = std::sin(curvature * s) / curvature;
    ly = (1.0 - std::cos(curvature * s)) / curvature;
  }
  const double c = std::cos(heading), sn = std::sin(heading);
  return Point2{origin.x + c * lx - sn * ly, origin.y + sn * lx + c * ly};
}

double ReferencePath::tangent_at(double s) const { return wrap_angle(heading + curvature * s); }

ReferencePath::Projection ReferencePath::project(const Point2& p) const {
  const double c = std::cos(heading), sn = std::sin(heading);
  const double dx = p.x - origin.x, dy = p.y - origin.y;
  const double lx = c * dx + sn * dy;
  const double ly = -sn * dx + c * dy;
  if (curvature == 0.0) return Projection{lx, ly};
  const double rc = 1.0 / curvature;
  const double rx = lx, ry = ly - rc;
  const double phi = std::atan2(rc * rx, -rc * ry);
  const double dist = std::hypot(rx, ry);
  const double lateral = (curvature > 0.0 ? 1.0 : -1.0) * (std::abs(rc) - dist);
  return Projection{phi * rc, lateral};
}

// ---------------------------------------------------------------- world

World generate_world(const WorldSpec& spec) {
  spec.validate();
  World world;
  world.spec = spec;
  world.obstacles = spec.extra_obstacles;
  world.centerline = ReferencePath{Point2{0.0, 0.0}, 0.0, spec.curvature, spec.row_length};

  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto disk_point = [&](const Point2& center, double radius, double height) {
    const double r = radius * std::sqrt(unit(rng));
    const double a = 2.0 * std::numbers::pi * unit(rng);
    // (0, height]
    const double z = height * (1.0 - unit(rng));
    return Point3{center.x + r * std::cos(a), center.y + r * std::sin(a), z};
  };

  const ReferencePath& path = world.centerline;
  const auto offset_point = [&](double s, double lateral) {
    const Point2 c = path.point_at(s);
    const double t = path.tangent_at(s);
    return Point2{c.x - std::sin(t) * lateral, c.y + std::cos(t) * lateral};
  };

  const double planted = spec.row_length + spec.canopy_overrun;
  const int plants = static_cast<int>(std::floor(planted / spec.plant_spacing + 1e-9)) + 1;
  for (double side : {1.0, -1.0}) {
    for (int k = 0; k < plants; ++k) {
      world.stems.push_back(offset_point(k * spec.plant_spacing, side * 0.5 * spec.intra_row_space));
    }
  }
  for (const Point2& stem : world.stems) {
    for (int q = 0; q < spec.canopy_points_per_plant; ++q) {
      world.points.push_back(disk_point(stem, spec.plant_radius, spec.plant_height));
    }
  }

  if (spec.pergola) {
    // Overhead canopy spanning the lane, above the height crop.
    const double step = 0.1;
    for (double s = 0.0; s <= planted; s += step) {
      for (double l = -0.5 * spec.intra_row_space; l <= 0.5 * spec.intra_row_space; l += step) {
        const Point2 c = offset_point(s + step * (unit(rng) - 0.5), l + step * (unit(rng) - 0.5));
        world.points.push_back(Point3{c.x, c.y, 2.3 + 0.3 * unit(rng)});
      }
    }
  }

  for (const ObstacleSpec& o : spec.extra_obstacles) {
    const int n = std::max(100, static_cast<int>(spec.canopy_points_per_plant * o.radius /
                                                spec.plant_radius));
    for (int q = 0; q < n; ++q) {
      world.points.push_back(disk_point(o.center, o.radius, spec.obstacle_height));
    }
  }
  return world;
}

void export_world(const World& world, const std::filesystem::path& path) {
  write_cloud(path, world.points);
}

// ---------------------------------------------------------------- sensor

std::vector<Point3> render_cloud(const World& world, const QuatPose& pose,
                                 const CameraSpec& cam, std::mt19937_64& rng) {
  const int nh = cam.rays_h;
  const int nv = cam.rays_v;
  const bool sweep = cam.model == SensorModel::kPlanarSweep;
  // A full sweep spaces rays over [-pi, pi) so the seam does not double up.
  const double daz = sweep ? cam.h_fov / nh : cam.h_fov / (nh - 1);
  const double del = cam.v_fov / (nv - 1);
  const double az0 = -0.5 * cam.h_fov;
  const double el0 = -0.5 * cam.v_fov;

  std::vector<double> cos_az(nh), sin_az(nh), cos_el(nv), sin_el(nv);
  for (int i = 0; i < nh; ++i) {
    cos_az[i] = std::cos(az0 + i * daz);
    sin_az[i] = std::sin(az0 + i * daz);
  }
  for (int j = 0; j < nv; ++j) {
    cos_el[j] = std::cos(el0 + j * del);
    sin_el[j] = std::sin(el0 + j * del);
  }

  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> depth(static_cast<std::size_t>(nh * nv), inf);
  const auto at = [&](int i, int j) -> double& { return depth[static_cast<std::size_t>(j * nh + i)]; };

  const double theta = heading_of(pose);
  const double ct = std::cos(theta), st = std::sin(theta);
  const double r = cam.hit_radius;
  const double r2 = r * r;

  for (const Point3& p : world.points) {
    const double dxw = p.x - pose.x, dyw = p.y - pose.y;
    const double x = ct * dxw + st * dyw;
    const double y = -st * dxw + ct * dyw;
    const double z = p.z - cam.mount_height;
    if (!sweep && x <= 0.0) continue;
    const double rho2 = x * x + y * y + z * z;
    if (rho2 > (cam.max_range + r) * (cam.max_range + r) || rho2 < 1e-12) continue;
    const double rho = std::sqrt(rho2);
    const double az = std::atan2(y, x);
    const double el = std::atan2(z, std::hypot(x, y));
    const double alpha = std::asin(std::min(1.0, r / rho));
    const double alpha_az = std::min(std::numbers::pi, alpha / std::max(std::cos(el), 1e-3));

    const int j_lo = std::max(0, static_cast<int>(std::ceil((el - alpha - el0) / del)));
    const int j_hi = std::min(nv - 1, static_cast<int>(std::floor((el + alpha - el0) / del)));
    if (j_lo > j_hi) continue;
    int i_lo = static_cast<int>(std::ceil((az - alpha_az - az0) / daz));
    int i_hi = static_cast<int>(std::floor((az + alpha_az - az0) / daz));
    if (!sweep) {
      i_lo = std::max(0, i_lo);
      i_hi = std::min(nh - 1, i_hi);
    }
    for (int ii = i_lo; ii <= i_hi; ++ii) {
      const int i = sweep ? ((ii % nh) + nh) % nh : ii;
      for (int j = j_lo; j <= j_hi; ++j) {
        const double dx = cos_el[j] * cos_az[i];
        const double dy = cos_el[j] * sin_az[i];
        const double dz = sin_el[j];
        const double t = x * dx + y * dy + z * dz;
        if (t <= 0.0) continue;
        const double perp2 = rho2 - t * t;
        if (perp2 > r2) continue;
        const double hit = t - std::sqrt(r2 - perp2);
        if (hit <= cam.max_range && hit < at(i, j)) at(i, j) = hit;
      }
    }
  }

  for (int j = 0; j < nv; ++j) {
    if (sin_el[j] >= 0.0) continue;
    const double tg = cam.mount_height / -sin_el[j];
    if (tg > cam.max_range) continue;
    for (int i = 0; i < nh; ++i) at(i, j) = std::min(at(i, j), tg);
  }

  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<Point3> cloud;
  for (int j = 0; j < nv; ++j) {
    for (int i = 0; i < nh; ++i) {
      double t = at(i, j);
      if (!std::isfinite(t)) continue;
      if (world.spec.noise_sigma > 0.0) t += world.spec.noise_sigma * noise(rng);
      cloud.push_back(Point3{t * cos_el[j] * cos_az[i], t * cos_el[j] * sin_az[i],
                             cam.mount_height + t * sin_el[j]});
    }
  }
  return cloud;
}

// ---------------------------------------------------------------- motion

std::size_t points_in_view(const World& world, const QuatPose& pose, const CameraSpec& cam,
                           double z_min, double z_max) {
  const bool sweep = cam.model == SensorModel::kPlanarSweep;
  const double theta = heading_of(pose);
  const double ct = std::cos(theta), st = std::sin(theta);
  std::size_t count = 0;
  for (const Point3& p : world.points) {
    if (p.z < z_min || p.z > z_max) continue;
    const double dxw = p.x - pose.x, dyw = p.y - pose.y;
    const double x = ct * dxw + st * dyw;
    const double y = -st * dxw + ct * dyw;
    const double z = p.z - cam.mount_height;
    const double flat = std::hypot(x, y);
    if (std::hypot(flat, z) > cam.max_range) continue;
    if (!sweep && std::abs(std::atan2(y, x)) > 0.5 * cam.h_fov) continue;
    if (std::abs(std::atan2(z, flat)) > 0.5 * cam.v_fov) continue;
    ++count;
  }
  return count;
}

QuatPose step_rover(const QuatPose& pose, const ControlInput& u, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("step_rover: dt must be > 0");
  const double theta = heading_of(pose);
  if (std::abs(u.omega) < 1e-12) {
    return pose_from(pose.x + u.v * dt * std::cos(theta), pose.y + u.v * dt * std::sin(theta),
                     theta);
  }
  const double next = theta + u.omega * dt;
  const double radius = u.v / u.omega;
  return pose_from(pose.x + radius * (std::sin(next) - std::sin(theta)),
                   pose.y - radius * (std::cos(next) - std::cos(theta)), next);
}

bool in_collision(const World& world, const Point2& p) {
  for (const Point2& stem : world.stems) {
    if (distance(p, stem) < world.spec.plant_radius) return true;
  }
  for (const ObstacleSpec& o : world.obstacles) {
    if (distance(p, o.center) < o.radius) return true;
  }
  return false;
}

double obstacle_clearance(const World& world, const Point2& p) {
  double best = std::numeric_limits<double>::infinity();
  for (const ObstacleSpec& o : world.obstacles) {
    best = std::min(best, distance(p, o.center) - o.radius);
  }
  return best;
}

// ---------------------------------------------------------------- closed loop

namespace {

std::optional<std::pair<std::size_t, Target>> detect_target(
    const std::vector<WorldTarget>& targets, const std::vector<bool>& reached,
    const QuatPose& pose, const ScenarioSetup& setup) {
  const double theta = heading_of(pose);
  const double ct = std::cos(theta), st = std::sin(theta);
  std::optional<std::pair<std::size_t, Target>> best;
  double best_range = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < targets.size(); ++k) {
    if (reached[k]) continue;
    const double dx = targets[k].position.x - pose.x;
    const double dy = targets[k].position.y - pose.y;
    const Point2 local{ct * dx + st * dy, -st * dx + ct * dy};
    const double range = std::hypot(local.x, local.y);
    const double bearing = std::atan2(local.y, local.x);
    if (range > setup.target_detection_range || std::abs(bearing) > 0.5 * setup.camera.h_fov) {
      continue;
    }
    if (range < best_range) {
      best_range = range;
      best = std::pair{k, Target{local, targets[k].standoff}};
    }
  }
  return best;
}

}  // namespace

RunLog run_scenario(const World& world, const ScenarioSetup& setup) {
  setup.camera.validate();
  setup.pipeline.validate();
  setup.nmpc.validate();
  setup.supervisor.validate();

  RunLog log;
  log.world = world.spec;
  log.reference = world.centerline;
  log.dt = setup.nmpc.dt;

  NmpcController nmpc(setup.nmpc);
  SupervisorState sup = setup.row_heading_prior
                            ? SupervisorState::with_row_prior(*setup.row_heading_prior)
                            : SupervisorState{};
  std::mt19937_64 rng(world.spec.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<bool> reached(setup.targets.size(), false);

  QuatPose pose = normalized(setup.start);
  for (int k = 0; k < setup.max_ticks; ++k) {
    TickRecord rec;
    rec.t = k * setup.nmpc.dt;
    rec.pose = pose;
    if (in_collision(world, Point2{pose.x, pose.y})) {
      rec.mode = sup.mode;
      log.records.push_back(rec);
      log.collision_tick = log.records.size() - 1;
      log.termination = Termination::kCollision;
      return log;
    }

    const auto cloud = render_cloud(world, pose, setup.camera, rng);
    const PerceptionResult perception = process(cloud, setup.pipeline);
    const auto detected = detect_target(setup.targets, reached, pose, setup);
    const std::optional<Target> detection =
        detected ? std::optional<Target>(detected->second) : std::nullopt;

    TickResult res = tick(sup, perception, detection, nmpc, setup.supervisor);
    if (res.target_reached && detected) {
      reached[detected->first] = true;
      ++log.targets_reached;
    }
    sup = res.state;

    rec.command = res.command;
    rec.mode = sup.mode;
    rec.perception = status_of(perception);
    rec.solver = res.solver_status;
    log.records.push_back(rec);

    if (sup.mode == Mode::kEndOfRow) {
      log.termination = Termination::kEndOfRow;
      return log;
    }
    pose = step_rover(pose, res.command, setup.nmpc.dt);
  }
  log.termination = Termination::kMaxTicks;
  return log;
}

}  // namespace rownav
