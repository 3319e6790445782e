#pragma once

#include <span>
#include <stdexcept>
#include <string>

#include "rownav/pcd_pipeline.hpp"
#include "rownav/sim.hpp"

namespace rownav {

struct MetricsReport {
  double clearance_time = 0.0;  ///< [s]
  double v_avg = 0.0;           ///< [m/s]
  double cum_gamma_avg = 0.0;   ///< signed mean heading error [rad]
  double gamma_std = 0.0;       ///< [rad]
  double omega_std = 0.0;       ///< [rad/s]
  double mae = 0.0;             ///< [m]
  double mse = 0.0;             ///< [m^2]
  int collisions = 0;

  /// One "key: value" line per field.
  std::string to_text() const;
  /// JSON object with exactly the eight fields above.
  std::string to_json() const;
};

class NotCompleted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Time from the first tick until the arc-length coordinate first exceeds
/// the reference length, interpolated linearly inside the crossing tick.
/// Throws NotCompleted if the row is never cleared.
double clearance_time(const RunLog& log);

/// Index of the first record past the end of the reference, if any.
std::optional<std::size_t> clearance_index(const RunLog& log);

struct VelocityHeadingStats {
  double v_avg = 0.0;
  double cum_gamma_avg = 0.0;
  double gamma_std = 0.0;
  double omega_std = 0.0;
};

/// Means and population standard deviations over the records. Velocities are
/// the commanded ones; gamma is the heading error against the local tangent.
VelocityHeadingStats velocity_and_heading_stats(std::span<const TickRecord> records,
                                                const ReferencePath& reference);

struct PathErrors {
  double mae = 0.0;
  double mse = 0.0;
};

/// e_k = signed lateral offset from the reference minus desired_offset.
PathErrors path_errors(std::span<const TickRecord> records, const ReferencePath& reference,
                       double desired_offset);

/// Lateral offset of the lane the controller should track: 0 for the full
/// lane, -intra/4 for right_half and +intra/4 for left_half.
double desired_offset(LaneMode mode, double intra_row_space);

/// All eight metrics. Statistics cover the traversal window, i.e. the records
/// before the row is cleared (the whole log if it never is, in which case
/// clearance_time is reported as +inf).
MetricsReport compute_metrics(const RunLog& log, double desired_offset);

}  // namespace rownav
