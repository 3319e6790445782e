#include "rownav/pcd_pipeline.hpp"

#include <algorithm>
#include <iterator>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <tuple>

namespace rownav {

namespace {

void require(bool condition, const char* field, const char* rule) {
  if (!condition) {
    throw std::invalid_argument(std::string("pipeline.") + field + ": " + rule);
  }
}

bool is_multiple(double extent, double cell) {
  const double ratio = extent / cell;
  return ratio >= 1.0 && std::abs(ratio - std::round(ratio)) < 1e-6;
}

}  // namespace

std::string_view to_string(LaneMode mode) {
  switch (mode) {
    case LaneMode::kFull:
      return "full";
    case LaneMode::kRightHalf:
      return "right_half";
    case LaneMode::kLeftHalf:
      return "left_half";
  }
  return "unknown";
}

std::optional<LaneMode> lane_mode_from_string(std::string_view name) {
  if (name == "full") return LaneMode::kFull;
  if (name == "right_half") return LaneMode::kRightHalf;
  if (name == "left_half") return LaneMode::kLeftHalf;
  return std::nullopt;
}

std::string_view to_string(LaneFault fault) {
  switch (fault) {
    case LaneFault::kInsufficientSamples:
      return "insufficient_samples";
    case LaneFault::kCorridorCollapsed:
      return "corridor_collapsed";
    case LaneFault::kNearPerpendicular:
      return "near_perpendicular";
    case LaneFault::kBordersDiverge:
      return "borders_diverge";
  }
  return "unknown";
}

PerceptionStatus status_of(const PerceptionResult& result) {
  if (std::holds_alternative<PerceptionOk>(result)) return PerceptionStatus::kOk;
  if (std::holds_alternative<EmptyFov>(result)) return PerceptionStatus::kEmptyFov;
  return PerceptionStatus::kInvalidLane;
}

std::string_view to_string(PerceptionStatus status) {
  switch (status) {
    case PerceptionStatus::kOk:
      return "ok";
    case PerceptionStatus::kEmptyFov:
      return "empty_fov";
    case PerceptionStatus::kInvalidLane:
      return "invalid_lane";
  }
  return "unknown";
}

void PipelineConfig::validate() const {
  require(std::isfinite(r_v) && r_v > 0.0, "r_v", "must be > 0");
  require(std::isfinite(z_th_min) && std::isfinite(z_th_max) && z_th_min < z_th_max,
          "z_th_min", "must be < z_th_max");
  require(f_points > 0.0 && f_points < 1.0, "f_points", "must lie in (0, 1)");
  require(knn_k >= 1, "knn_k", "must be >= 1");
  require(std::isfinite(knn_std_ratio) && knn_std_ratio >= 0.0, "knn_std_ratio",
          "must be >= 0");
  require(std::isfinite(grid_cell) && grid_cell > 0.0, "grid_cell", "must be > 0");
  require(is_multiple(grid_extent_x, grid_cell), "grid_extent_x",
          "must be a positive multiple of grid_cell");
  require(is_multiple(grid_extent_y, grid_cell), "grid_extent_y",
          "must be a positive multiple of grid_cell");
  require(std::isfinite(safety_margin_R) && safety_margin_R >= 0.0,
          "safety_margin_R", "must be >= 0");
  require(max_perp_angle > 0.0 && max_perp_angle < 0.5 * std::numbers::pi,
          "max_perp_angle", "must lie in (0, pi/2) radians");
  require(max_obstacle_points >= 1, "max_obstacle_points", "must be >= 1");
  require(std::isfinite(border_inlier_tol) && border_inlier_tol > 0.0,
          "border_inlier_tol", "must be > 0");
  require(std::isfinite(border_min_offset) && border_min_offset >= 0.0,
          "border_min_offset", "must be >= 0");
  require(max_border_divergence > 0.0, "max_border_divergence", "must be > 0");
}

// ---------------------------------------------------------------- grid

OccupancyGrid::OccupancyGrid(double cell, double extent_x, double extent_y)
    : cell_(cell),
      nx_(static_cast<int>(std::lround(extent_x / cell)) + 1),
      ny_half_(static_cast<int>(std::lround(0.5 * extent_y / cell))),
      cells_(static_cast<std::size_t>(nx_) * static_cast<std::size_t>(2 * ny_half_ + 1), 0) {
  if (!(cell > 0.0) || extent_x <= 0.0 || extent_y <= 0.0) {
    throw std::invalid_argument("OccupancyGrid: cell and extents must be > 0");
  }
}

std::optional<std::pair<int, int>> OccupancyGrid::cell_of(const Point2& p) const {
  const double fi = std::floor(p.x / cell_ + 0.5);
  const double fj = std::floor(p.y / cell_ + 0.5);
  if (!std::isfinite(fi) || !std::isfinite(fj)) return std::nullopt;
  if (fi < 0.0 || fi >= nx_ || fj < -ny_half_ || fj > ny_half_) return std::nullopt;
  return std::pair<int, int>{static_cast<int>(fi), static_cast<int>(fj)};
}

std::size_t OccupancyGrid::occupied_count() const {
  return static_cast<std::size_t>(std::count(cells_.begin(), cells_.end(), 1));
}

// ---------------------------------------------------------------- filters

std::vector<Point3> voxel_downsample(std::span<const Point3> cloud, double r_v) {
  if (!(r_v > 0.0)) throw std::invalid_argument("voxel_downsample: r_v must be > 0");
  using Key = std::array<long long, 3>;
  std::vector<std::pair<Key, std::size_t>> keyed;
  keyed.reserve(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Point3& p = cloud[i];
    keyed.push_back({Key{static_cast<long long>(std::floor(p.x / r_v)),
                         static_cast<long long>(std::floor(p.y / r_v)),
                         static_cast<long long>(std::floor(p.z / r_v))},
                     i});
  }
  std::sort(keyed.begin(), keyed.end());

  std::vector<Point3> out;
  for (std::size_t begin = 0; begin < keyed.size();) {
    std::size_t end = begin;
    double sx = 0.0, sy = 0.0, sz = 0.0;
    while (end < keyed.size() && keyed[end].first == keyed[begin].first) {
      const Point3& p = cloud[keyed[end].second];
      sx += p.x;
      sy += p.y;
      sz += p.z;
      ++end;
    }
    const double n = static_cast<double>(end - begin);
    out.push_back(Point3{sx / n, sy / n, sz / n});
    begin = end;
  }
  return out;
}

std::vector<Point3> knn_outlier_filter(std::span<const Point3> cloud, int k,
                                       double std_ratio) {
  if (k < 1) throw std::invalid_argument("knn_outlier_filter: k must be >= 1");
  const std::size_t n = cloud.size();
  const auto kk = static_cast<std::size_t>(k);
  if (n <= kk) return {cloud.begin(), cloud.end()};

  std::vector<double> mean_dist(n);
  std::vector<double> d2(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t m = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double dx = cloud[i].x - cloud[j].x;
      const double dy = cloud[i].y - cloud[j].y;
      const double dz = cloud[i].z - cloud[j].z;
      d2[m++] = dx * dx + dy * dy + dz * dz;
    }
    std::nth_element(d2.begin(), d2.begin() + static_cast<std::ptrdiff_t>(kk - 1), d2.end());
    double sum = 0.0;
    for (std::size_t q = 0; q < kk; ++q) sum += std::sqrt(d2[q]);
    mean_dist[i] = sum / static_cast<double>(kk);
  }

  const double mean = std::accumulate(mean_dist.begin(), mean_dist.end(), 0.0) /
                      static_cast<double>(n);
  double var = 0.0;
  for (double d : mean_dist) var += (d - mean) * (d - mean);
  const double stddev = std::sqrt(var / static_cast<double>(n));
  // Relative slack keeps rounding noise on equal statistics from removing points.
  const double threshold = mean + std_ratio * stddev + 1e-12 * mean;

  std::vector<Point3> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (mean_dist[i] <= threshold) out.push_back(cloud[i]);
  }
  return out;
}

std::vector<Point3> height_crop(std::span<const Point3> cloud, double z_min,
                                double z_max) {
  std::vector<Point3> out;
  out.reserve(cloud.size());
  std::copy_if(cloud.begin(), cloud.end(), std::back_inserter(out),
               [&](const Point3& p) { return p.z >= z_min && p.z <= z_max; });
  return out;
}

bool fov_empty_check(std::size_t n_remaining, std::size_t n_original,
                     double f_points) {
  if (n_original == 0) return true;
  const double fraction =
      static_cast<double>(n_remaining) / static_cast<double>(n_original);
  return fraction < f_points;
}

OccupancyGrid project_to_grid(std::span<const Point3> cloud,
                              const PipelineConfig& cfg) {
  OccupancyGrid grid(cfg.grid_cell, cfg.grid_extent_x, cfg.grid_extent_y);
  for (const Point3& p : cloud) {
    if (auto ij = grid.cell_of(Point2{p.x, p.y})) grid.set(ij->first, ij->second, true);
  }
  return grid;
}

OccupancyGrid shadow_fill(const OccupancyGrid& grid) {
  const double cell = grid.cell();
  const double far = std::hypot((grid.nx() - 1) * cell, grid.ny_half() * cell);
  if (far <= 0.0) return grid;
  const double sector = cell / far;
  const int half_bins = static_cast<int>(std::ceil(std::numbers::pi / sector)) + 1;
  const auto sector_of = [&](const Point2& c) {
    return static_cast<int>(std::lround(std::atan2(c.y, c.x) / sector)) + half_bins;
  };

  std::vector<double> nearest(static_cast<std::size_t>(2 * half_bins + 1),
                              std::numeric_limits<double>::infinity());
  for (int i = 0; i < grid.nx(); ++i) {
    for (int j = -grid.ny_half(); j <= grid.ny_half(); ++j) {
      if (!grid.occupied(i, j) || (i == 0 && j == 0)) continue;
      const Point2 c = grid.center(i, j);
      double& r = nearest[static_cast<std::size_t>(sector_of(c))];
      r = std::min(r, std::hypot(c.x, c.y));
    }
  }

  OccupancyGrid out = grid;
  for (int i = 0; i < grid.nx(); ++i) {
    for (int j = -grid.ny_half(); j <= grid.ny_half(); ++j) {
      if (out.occupied(i, j) || (i == 0 && j == 0)) continue;
      const Point2 c = grid.center(i, j);
      if (std::hypot(c.x, c.y) >= nearest[static_cast<std::size_t>(sector_of(c))]) {
        out.set(i, j, true);
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------- borders

BorderSamples extract_border_samples(const OccupancyGrid& grid, double split_slope) {
  BorderSamples samples;
  const int h = grid.ny_half();
  for (int i = 0; i < grid.nx(); ++i) {
    const double ys = split_slope * i * grid.cell();
    const int js = static_cast<int>(std::clamp<long>(std::lround(ys / grid.cell()), -h - 1, h + 1));
    for (int j = std::max(js + 1, -h); j <= h; ++j) {
      if (grid.occupied(i, j)) {
        samples.left.push_back(grid.center(i, j));
        break;
      }
    }
    for (int j = std::min(js - 1, h); j >= -h; --j) {
      if (grid.occupied(i, j)) {
        samples.right.push_back(grid.center(i, j));
        break;
      }
    }
  }
  return samples;
}

std::vector<Point2> select_border_inliers(std::span<const Point2> samples,
                                          Side side, double tol,
                                          double min_offset) {
  const std::size_t n = samples.size();
  const double sign = side == Side::kRight ? -1.0 : 1.0;

  std::size_t best_count = 0;
  double best_sse = std::numeric_limits<double>::infinity();
  double best_a = 0.0;
  double best_b = 0.0;
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t q = p + 1; q < n; ++q) {
      const double dx = samples[q].x - samples[p].x;
      if (std::abs(dx) < 1e-12) continue;
      const double a = (samples[q].y - samples[p].y) / dx;
      const double b = samples[p].y - a * samples[p].x;
      if (sign * b < min_offset) continue;
      std::size_t count = 0;
      double sse = 0.0;
      for (const Point2& s : samples) {
        const double r = s.y - (a * s.x + b);
        if (std::abs(r) <= tol) {
          ++count;
          sse += r * r;
        }
      }
      if (count > best_count || (count == best_count && sse < best_sse)) {
        best_count = count;
        best_sse = sse;
        best_a = a;
        best_b = b;
      }
    }
  }

  std::vector<Point2> inliers;
  if (best_count == 0) return inliers;
  for (const Point2& s : samples) {
    if (std::abs(s.y - (best_a * s.x + best_b)) <= tol) inliers.push_back(s);
  }
  return inliers;
}

BorderLine fit_border_line(std::span<const Point2> samples, Side side) {
  const std::size_t n = samples.size();
  if (n < 2) {
    throw LaneError(LaneFault::kInsufficientSamples,
                    std::string(to_string(side)) + " border: fewer than 2 samples");
  }
  double mx = 0.0, my = 0.0;
  for (const Point2& s : samples) {
    mx += s.x;
    my += s.y;
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0;
  for (const Point2& s : samples) {
    sxx += (s.x - mx) * (s.x - mx);
    sxy += (s.x - mx) * (s.y - my);
  }
  if (sxx <= 1e-12 * std::max(1.0, mx * mx)) {
    throw LaneError(LaneFault::kInsufficientSamples,
                    std::string(to_string(side)) + " border: samples share one x value");
  }
  const double a = sxy / sxx;
  return BorderLine{a, my - a * mx, side};
}

// ---------------------------------------------------------------- lane

LaneModel apply_safety_margin(LaneModel lane, double R) {
  if (!(R >= 0.0)) throw std::invalid_argument("apply_safety_margin: R must be >= 0");
  lane.inflated_left = BorderLine{lane.left.a,
                                  lane.left.b - R * std::sqrt(1.0 + lane.left.a * lane.left.a),
                                  Side::kLeft};
  lane.inflated_right = BorderLine{lane.right.a,
                                   lane.right.b + R * std::sqrt(1.0 + lane.right.a * lane.right.a),
                                   Side::kRight};
  if (lane.inflated_left.b <= lane.inflated_right.b) {
    throw LaneError(LaneFault::kCorridorCollapsed, "corridor empty after safety margin");
  }
  return lane;
}

LaneModel make_lane(const BorderLine& left, const BorderLine& right, double R) {
  LaneModel lane;
  lane.left = BorderLine{left.a, left.b, Side::kLeft};
  lane.right = BorderLine{right.a, right.b, Side::kRight};
  lane.middle = BorderLine{0.5 * (left.a + right.a), 0.5 * (left.b + right.b), Side::kMiddle};
  return apply_safety_margin(lane, R);
}

LaneModel split_lane(const LaneModel& lane, LaneMode mode, double R) {
  switch (mode) {
    case LaneMode::kFull:
      return lane;
    case LaneMode::kRightHalf:
      return make_lane(lane.middle, lane.right, R);
    case LaneMode::kLeftHalf:
      return make_lane(lane.left, lane.middle, R);
  }
  return lane;
}

std::optional<LaneFault> validate_lane(const LaneModel& lane, double max_perp_angle) {
  if (!(std::abs(std::atan(lane.left.a)) < max_perp_angle) ||
      !(std::abs(std::atan(lane.right.a)) < max_perp_angle)) {
    return LaneFault::kNearPerpendicular;
  }
  if (!(lane.inflated_left.b > lane.inflated_right.b)) {
    return LaneFault::kCorridorCollapsed;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------- process

namespace {

std::vector<Point2> nearest_obstacles(const OccupancyGrid& grid, const LaneModel& lane,
                                      std::size_t cap) {
  struct Cell {
    double d2;
    int i;
    int j;
  };
  std::vector<Cell> cells;
  for (int i = 0; i < grid.nx(); ++i) {
    for (int j = -grid.ny_half(); j <= grid.ny_half(); ++j) {
      if (!grid.occupied(i, j)) continue;
      const Point2 c = grid.center(i, j);
      cells.push_back(Cell{c.x * c.x + c.y * c.y, i, j});
    }
  }
  std::sort(cells.begin(), cells.end(), [](const Cell& l, const Cell& r) {
    return std::tie(l.d2, l.i, l.j) < std::tie(r.d2, r.i, r.j);
  });

  std::vector<Point2> out;
  bool has_left = false;
  bool has_right = false;
  const auto above_middle = [&](const Point2& p) { return p.y > lane.middle.at(p.x); };
  for (std::size_t q = 0; q < cells.size() && q < cap; ++q) {
    const Point2 c = grid.center(cells[q].i, cells[q].j);
    (above_middle(c) ? has_left : has_right) = true;
    out.push_back(c);
  }
  // At least one point on each side of the middle line.
  for (std::size_t q = cap; q < cells.size() && !(has_left && has_right); ++q) {
    const Point2 c = grid.center(cells[q].i, cells[q].j);
    const bool left = above_middle(c);
    if (left && !has_left) {
      out.push_back(c);
      has_left = true;
    } else if (!left && !has_right) {
      out.push_back(c);
      has_right = true;
    }
  }
  return out;
}

}  // namespace

bool borders_consistent(const BorderLine& left, const BorderLine& right,
                        double max_divergence) {
  return std::abs(std::atan(left.a) - std::atan(right.a)) <= max_divergence;
}

PipelineTrace process_traced(std::span<const Point3> cloud, const PipelineConfig& cfg) {
  PipelineTrace trace;
  trace.n_input = cloud.size();
  trace.result = EmptyFov{};
  if (cloud.empty()) return trace;

  const auto voxels = voxel_downsample(cloud, cfg.r_v);
  const auto filtered = knn_outlier_filter(voxels, cfg.knn_k, cfg.knn_std_ratio);
  const auto cropped = height_crop(filtered, cfg.z_th_min, cfg.z_th_max);
  trace.n_filtered = filtered.size();
  trace.n_cropped = cropped.size();
  if (fov_empty_check(cropped.size(), filtered.size(), cfg.f_points)) return trace;

  trace.raw_grid = project_to_grid(cropped, cfg);
  trace.filled_grid = shadow_fill(trace.raw_grid);
  // Samples come from observed cells only. The innermost filled cell of a
  // column is often shadow (behind an in-lane obstacle, or past the last plant)
  // and reads as a wall bending toward or away from the sensor.
  const BorderSamples samples = extract_border_samples(trace.raw_grid);

  try {
    const auto fit_pair = [&](const BorderSamples& bs) {
      const auto li = select_border_inliers(bs.left, Side::kLeft, cfg.border_inlier_tol,
                                            cfg.border_min_offset);
      const auto ri = select_border_inliers(bs.right, Side::kRight, cfg.border_inlier_tol,
                                            cfg.border_min_offset);
      return std::pair{fit_border_line(li, Side::kLeft), fit_border_line(ri, Side::kRight)};
    };
    auto [left, right] = fit_pair(samples);
    if (!borders_consistent(left, right, cfg.max_border_divergence)) {
      // Viewed at an angle, the far end of one wall crosses the x axis and
      // lands on the other side. Re-split the columns along either fitted
      // direction and keep the most parallel result.
      std::optional<std::pair<BorderLine, BorderLine>> pick;
      std::pair<BorderLine, BorderLine> seed{left, right};
      for (int round = 0; round < 3 && !(pick && borders_consistent(pick->first, pick->second,
                                                                    cfg.max_border_divergence));
           ++round) {
        double best = std::numeric_limits<double>::infinity();
        for (double slope : {seed.first.a, seed.second.a}) {
          try {
            const auto cand = fit_pair(extract_border_samples(trace.raw_grid, slope));
            const double d = std::abs(std::atan(cand.first.a) - std::atan(cand.second.a));
            if (d < best) {
              best = d;
              pick = cand;
            }
          } catch (const LaneError&) {
          }
        }
        if (!pick) break;
        seed = *pick;
      }
      if (!pick || !borders_consistent(pick->first, pick->second, cfg.max_border_divergence)) {
        trace.result = InvalidLane{LaneFault::kBordersDiverge};
        return trace;
      }
      left = pick->first;
      right = pick->second;
    }
    LaneModel lane = make_lane(left, right, cfg.safety_margin_R);
    lane = split_lane(lane, cfg.lane_mode, cfg.safety_margin_R);
    if (auto fault = validate_lane(lane, cfg.max_perp_angle)) {
      trace.result = InvalidLane{*fault};
      return trace;
    }
    trace.result = PerceptionOk{
        lane, nearest_obstacles(trace.raw_grid, lane,
                                static_cast<std::size_t>(cfg.max_obstacle_points))};
  } catch (const LaneError& e) {
    trace.result = InvalidLane{e.fault()};
  }
  return trace;
}

PerceptionResult process(std::span<const Point3> cloud, const PipelineConfig& cfg) {
  return process_traced(cloud, cfg).result;
}

}  // namespace rownav
