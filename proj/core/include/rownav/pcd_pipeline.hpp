#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "rownav/types.hpp"

namespace rownav {

enum class LaneMode { kFull, kRightHalf, kLeftHalf };

std::string_view to_string(LaneMode mode);
std::optional<LaneMode> lane_mode_from_string(std::string_view name);

struct PipelineConfig {
  double r_v = 0.05;              ///< voxel side [m]
  double z_th_min = 0.15;         ///< [m]
  double z_th_max = 2.0;          ///< [m]
  double f_points = 0.2;          ///< empty-FOV fraction threshold
  int knn_k = 10;
  double knn_std_ratio = 1.0;
  double grid_cell = 0.05;        ///< [m]
  double grid_extent_x = 6.0;     ///< forward extent [m]
  double grid_extent_y = 4.0;     ///< total lateral extent, centered on the rover [m]
  double safety_margin_R = 0.3;   ///< [m]
  double max_perp_angle = 70.0 * std::numbers::pi / 180.0;
  LaneMode lane_mode = LaneMode::kFull;
  /// Obstacle points handed to the controller are the N nearest cells.
  int max_obstacle_points = 30;
  /// Consensus band used to separate wall samples from shadow clutter [m].
  double border_inlier_tol = 0.2;
  /// Candidate border lines must clear the sensor by this much at x = 0 [m].
  double border_min_offset = 0.1;
  /// Fitted borders whose headings differ by more than this are rejected;
  /// at steep views one "border" is really the far end of the other wall.
  double max_border_divergence = 0.25;  ///< [rad]

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

/// Occupancy grid in the rover frame. Cell (i, j) is centered at
/// (i * cell, j * cell) with i in [0, nx) and j in [-ny_half, ny_half], so the
/// sensor origin sits at the center of cell (0, 0).
class OccupancyGrid {
 public:
  OccupancyGrid() = default;
  OccupancyGrid(double cell, double extent_x, double extent_y);

  double cell() const { return cell_; }
  int nx() const { return nx_; }
  int ny_half() const { return ny_half_; }
  int ny() const { return 2 * ny_half_ + 1; }
  Point2 origin() const { return Point2{0.0, 0.0}; }

  bool contains(int i, int j) const {
    return i >= 0 && i < nx_ && j >= -ny_half_ && j <= ny_half_;
  }
  /// Cell containing the point, if it lies within the grid.
  std::optional<std::pair<int, int>> cell_of(const Point2& p) const;
  Point2 center(int i, int j) const {
    return Point2{i * cell_, j * cell_};
  }

  bool occupied(int i, int j) const { return cells_[index(i, j)] != 0; }
  void set(int i, int j, bool value) { cells_[index(i, j)] = value ? 1 : 0; }
  std::size_t occupied_count() const;

  friend bool operator==(const OccupancyGrid&, const OccupancyGrid&) = default;

 private:
  std::size_t index(int i, int j) const {
    return static_cast<std::size_t>(i) * static_cast<std::size_t>(ny()) +
           static_cast<std::size_t>(j + ny_half_);
  }

  double cell_ = 0.05;
  int nx_ = 0;
  int ny_half_ = 0;
  std::vector<unsigned char> cells_;
};

struct LaneModel {
  BorderLine left;
  BorderLine right;
  BorderLine middle;
  BorderLine inflated_left;
  BorderLine inflated_right;

  double a_avg() const { return 0.5 * (left.a + right.a); }
};

enum class LaneFault {
  kInsufficientSamples,
  kCorridorCollapsed,
  kNearPerpendicular,
  kBordersDiverge,
};

std::string_view to_string(LaneFault fault);

class LaneError : public std::runtime_error {
 public:
  LaneError(LaneFault fault, const std::string& what)
      : std::runtime_error(what), fault_(fault) {}
  LaneFault fault() const { return fault_; }

 private:
  LaneFault fault_;
};

struct PerceptionOk {
  LaneModel lane;
  std::vector<Point2> obstacles;
};
struct EmptyFov {};
struct InvalidLane {
  LaneFault reason;
};

using PerceptionResult = std::variant<PerceptionOk, EmptyFov, InvalidLane>;

enum class PerceptionStatus { kOk, kEmptyFov, kInvalidLane };
PerceptionStatus status_of(const PerceptionResult& result);
std::string_view to_string(PerceptionStatus status);

/// Centroid per occupied voxel of side r_v. Output order follows voxel index.
std::vector<Point3> voxel_downsample(std::span<const Point3> cloud, double r_v);

/// Statistical outlier removal over mean k-nearest-neighbor distance.
std::vector<Point3> knn_outlier_filter(std::span<const Point3> cloud, int k,
                                       double std_ratio);

std::vector<Point3> height_crop(std::span<const Point3> cloud, double z_min,
                                double z_max);

bool fov_empty_check(std::size_t n_remaining, std::size_t n_original,
                     double f_points);

OccupancyGrid project_to_grid(std::span<const Point3> cloud,
                              const PipelineConfig& cfg);

/// Marks every cell that lies behind an occupied cell, as seen from the
/// sensor origin. Rays are discretized into angular sectors whose width is the
/// angle one cell subtends at the far corner of the grid, which makes the
/// operation idempotent.
OccupancyGrid shadow_fill(const OccupancyGrid& grid);

struct BorderSamples {
  std::vector<Point2> left;
  std::vector<Point2> right;
};

/// Innermost occupied cell per column on each side of the split line
/// y = split_slope * x (the x axis by default). Cells on the line belong to
/// neither side.
BorderSamples extract_border_samples(const OccupancyGrid& grid, double split_slope = 0.0);

/// Consensus selection of the samples that belong to one straight wall.
/// Candidate lines through sample pairs are scored by inlier count within
/// `tol`; lines that pass within `min_offset` of the sensor on their own side
/// are rejected, since shadow edges of in-lane obstacles radiate from the
/// sensor origin. Returns the inliers of the best candidate.
std::vector<Point2> select_border_inliers(std::span<const Point2> samples,
                                          Side side, double tol,
                                          double min_offset);

/// Ordinary least squares y = a x + b. Throws LaneError(kInsufficientSamples)
/// with fewer than two distinct x values.
BorderLine fit_border_line(std::span<const Point2> samples, Side side);

/// Builds a lane from two border lines: middle line, then margins.
LaneModel make_lane(const BorderLine& left, const BorderLine& right, double R);

/// Shifts both borders toward the corridor interior by perpendicular distance
/// R. Throws LaneError(kCorridorCollapsed) if the inflated corridor is empty at
/// x = 0.
LaneModel apply_safety_margin(LaneModel lane, double R);

/// Restricts the lane to one half, split at the middle line, and re-applies
/// the margin.
LaneModel split_lane(const LaneModel& lane, LaneMode mode, double R);

std::optional<LaneFault> validate_lane(const LaneModel& lane,
                                       double max_perp_angle);

/// True if the raw borders are near-parallel: |atan(a_l) - atan(a_r)| within
/// max_divergence.
bool borders_consistent(const BorderLine& left, const BorderLine& right,
                        double max_divergence);

PerceptionResult process(std::span<const Point3> cloud,
                         const PipelineConfig& cfg);

/// Variant of process() that also returns the intermediate grids, for debug
/// output.
struct PipelineTrace {
  PerceptionResult result;
  OccupancyGrid raw_grid;
  OccupancyGrid filled_grid;
  std::size_t n_input = 0;
  std::size_t n_filtered = 0;
  std::size_t n_cropped = 0;
};
PipelineTrace process_traced(std::span<const Point3> cloud,
                             const PipelineConfig& cfg);

}  // namespace rownav
