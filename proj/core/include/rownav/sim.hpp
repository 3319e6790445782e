#pragma once

#include <cstdint>
#include <filesystem>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "rownav/nmpc.hpp"
#include "rownav/pcd_pipeline.hpp"
#include "rownav/supervisor.hpp"
#include "rownav/types.hpp"

namespace rownav {

struct ObstacleSpec {
  Point2 center;
  double radius = 0.05;
};

struct WorldSpec {
  double row_length = 20.0;       ///< traversal length measured by the metrics [m]
  /// Plants continue this far past row_length. A forward camera loses the
  /// rows about a meter before it draws level with the last plant.
  double canopy_overrun = 1.0;    ///< [m]
  double intra_row_space = 1.5;   ///< stem-to-stem distance across the lane [m]
  double curvature = 0.0;         ///< [1/m], positive turns left
  double plant_spacing = 0.3;     ///< [m]
  double plant_radius = 0.2;      ///< [m]
  double plant_height = 1.8;      ///< [m]
  int canopy_points_per_plant = 300;
  bool pergola = false;
  double noise_sigma = 0.01;      ///< range noise [m]
  std::uint64_t seed = 1;
  std::vector<ObstacleSpec> extra_obstacles;
  double obstacle_height = 1.0;   ///< [m]

  void validate() const;
};

enum class SensorModel { kDepthCamera, kPlanarSweep };

struct CameraSpec {
  SensorModel model = SensorModel::kDepthCamera;
  double h_fov = 87.0 * std::numbers::pi / 180.0;
  double v_fov = 58.0 * std::numbers::pi / 180.0;
  double max_range = 6.0;
  int rays_h = 160;
  int rays_v = 90;
  double mount_height = 0.4;
  /// Radius of the disk each world point presents to a ray [m].
  double hit_radius = 0.025;

  void validate() const;
  /// 360 degree, 16-beam sweep with longer range.
  static CameraSpec planar_sweep();
};

/// Analytic reference: a straight segment or a circular arc starting at
/// `origin` with tangent `heading`.
struct ReferencePath {
  Point2 origin;
  double heading = 0.0;
  double curvature = 0.0;
  double length = 0.0;

  Point2 point_at(double s) const;
  double tangent_at(double s) const;

  struct Projection {
    double s;        ///< arc length of the closest point
    double lateral;  ///< signed offset, positive to the left
  };
  Projection project(const Point2& p) const;
};

struct World {
  WorldSpec spec;
  std::vector<Point3> points;
  std::vector<Point2> stems;
  std::vector<ObstacleSpec> obstacles;
  ReferencePath centerline;
};

World generate_world(const WorldSpec& spec);

/// Writes every world point in the XYZ text (or .bin) cloud format.
void export_world(const World& world, const std::filesystem::path& path);

/// Virtual depth sensor: nearest hit per ray among world-point disks and the
/// ground plane, with Gaussian range noise. Returned in the rover frame.
std::vector<Point3> render_cloud(const World& world, const QuatPose& pose,
                                 const CameraSpec& cam, std::mt19937_64& rng);

/// Ground truth for the sensor: world points with z in [z_min, z_max] that lie
/// inside the sensor frustum and range, occlusion ignored.
std::size_t points_in_view(const World& world, const QuatPose& pose, const CameraSpec& cam,
                           double z_min, double z_max);

/// Exact unicycle motion under a zero-order hold.
QuatPose step_rover(const QuatPose& pose, const ControlInput& u, double dt);

/// True if the rover center is inside any plant or obstacle footprint.
bool in_collision(const World& world, const Point2& p);

/// Distance from p to the nearest obstacle surface (center distance minus
/// radius) over the extra obstacles; +inf without obstacles.
double obstacle_clearance(const World& world, const Point2& p);

struct WorldTarget {
  Point2 position;  ///< world frame
  double standoff = 0.5;
};

struct ScenarioSetup {
  CameraSpec camera;
  PipelineConfig pipeline;
  NmpcConfig nmpc;
  SupervisorConfig supervisor;
  QuatPose start;
  std::optional<double> row_heading_prior;
  std::vector<WorldTarget> targets;
  double target_detection_range = 3.0;
  int max_ticks = 400;
};

struct TickRecord {
  double t = 0.0;
  QuatPose pose;
  ControlInput command;
  Mode mode = Mode::kTraverse;
  PerceptionStatus perception = PerceptionStatus::kOk;
  std::optional<SolverStatus> solver;
};

enum class Termination { kEndOfRow, kCollision, kMaxTicks };
std::string_view to_string(Termination termination);

struct RunLog {
  std::vector<TickRecord> records;
  WorldSpec world;
  ReferencePath reference;
  double dt = 0.7;
  Termination termination = Termination::kMaxTicks;
  std::optional<std::size_t> collision_tick;
  std::size_t targets_reached = 0;
  std::string config_snapshot;

  bool collided() const { return collision_tick.has_value(); }
};

/// Closed loop render -> perceive -> supervise -> move. Every logged pose is
/// checked for collision; a colliding pose is logged with a zero command and
/// ends the run.
RunLog run_scenario(const World& world, const ScenarioSetup& setup);

}  // namespace rownav
