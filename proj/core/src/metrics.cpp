#include "rownav/metrics.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

namespace rownav {

namespace {

struct Moments {
  double sum = 0.0;
  double sum_sq = 0.0;
  std::size_t n = 0;

  void add(double x) {
    sum += x;
    sum_sq += x * x;
    ++n;
  }
  double mean() const { return n ? sum / static_cast<double>(n) : 0.0; }
};

// Two-pass population standard deviation.
template <typename F>
double population_std(std::span<const TickRecord> records, double mean, F&& value) {
  if (records.empty()) return 0.0;
  double acc = 0.0;
  for (const TickRecord& r : records) {
    const double d = value(r) - mean;
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(records.size()));
}

double heading_error_at(const TickRecord& r, const ReferencePath& reference) {
  const auto proj = reference.project(Point2{r.pose.x, r.pose.y});
  return wrap_angle(heading_of(r.pose) - reference.tangent_at(proj.s));
}

}  // namespace

std::string MetricsReport::to_text() const {
  std::ostringstream os;
  os.precision(6);
  os << std::fixed;
  os << "clearance_time: " << clearance_time << '\n'
     << "v_avg: " << v_avg << '\n'
     << "cum_gamma_avg: " << cum_gamma_avg << '\n'
     << "gamma_std: " << gamma_std << '\n'
     << "omega_std: " << omega_std << '\n'
     << "mae: " << mae << '\n'
     << "mse: " << mse << '\n'
     << "collisions: " << collisions << '\n';
  return os.str();
}

std::string MetricsReport::to_json() const {
  nlohmann::ordered_json j;
  // JSON has no infinity; an unfinished run reports null.
  if (std::isfinite(clearance_time)) {
    j["clearance_time"] = clearance_time;
  } else {
    j["clearance_time"] = nullptr;
  }
  j["v_avg"] = v_avg;
  j["cum_gamma_avg"] = cum_gamma_avg;
  j["gamma_std"] = gamma_std;
  j["omega_std"] = omega_std;
  j["mae"] = mae;
  j["mse"] = mse;
  j["collisions"] = collisions;
  return j.dump(2) + "\n";
}

std::optional<std::size_t> clearance_index(const RunLog& log) {
  for (std::size_t k = 0; k < log.records.size(); ++k) {
    const auto& p = log.records[k].pose;
    if (log.reference.project(Point2{p.x, p.y}).s > log.reference.length) return k;
  }
  return std::nullopt;
}

double clearance_time(const RunLog& log) {
  const auto k = clearance_index(log);
  if (!k) throw NotCompleted("row was never cleared");
  const double t0 = log.records.front().t;
  const auto& cur = log.records[*k];
  if (*k == 0) return 0.0;
  const auto& prev = log.records[*k - 1];
  const double s_prev = log.reference.project(Point2{prev.pose.x, prev.pose.y}).s;
  const double s_cur = log.reference.project(Point2{cur.pose.x, cur.pose.y}).s;
  const double frac = (log.reference.length - s_prev) / (s_cur - s_prev);
  return prev.t + frac * (cur.t - prev.t) - t0;
}

VelocityHeadingStats velocity_and_heading_stats(std::span<const TickRecord> records,
                                                const ReferencePath& reference) {
  VelocityHeadingStats out;
  if (records.empty()) return out;
  Moments v, w, g;
  for (const TickRecord& r : records) {
    v.add(r.command.v);
    w.add(r.command.omega);
    g.add(heading_error_at(r, reference));
  }
  out.v_avg = v.mean();
  out.cum_gamma_avg = g.mean();
  out.omega_std = population_std(records, w.mean(), [](const TickRecord& r) { return r.command.omega; });
  out.gamma_std = population_std(records, g.mean(),
                                 [&](const TickRecord& r) { return heading_error_at(r, reference); });
  return out;
}

PathErrors path_errors(std::span<const TickRecord> records, const ReferencePath& reference,
                       double desired_offset) {
  PathErrors out;
  if (records.empty()) return out;
  Moments abs_e, sq_e;
  for (const TickRecord& r : records) {
    const double e = reference.project(Point2{r.pose.x, r.pose.y}).lateral - desired_offset;
    abs_e.add(std::abs(e));
    sq_e.add(e * e);
  }
  out.mae = abs_e.mean();
  out.mse = sq_e.mean();
  return out;
}

double desired_offset(LaneMode mode, double intra_row_space) {
  switch (mode) {
    case LaneMode::kFull:
      return 0.0;
    case LaneMode::kRightHalf:
      return -0.25 * intra_row_space;
    case LaneMode::kLeftHalf:
      return 0.25 * intra_row_space;
  }
  return 0.0;
}

MetricsReport compute_metrics(const RunLog& log, double desired_offset) {
  MetricsReport report;
  const auto k = clearance_index(log);
  std::span<const TickRecord> window(log.records);
  if (k) {
    report.clearance_time = clearance_time(log);
    window = window.first(std::max<std::size_t>(*k, 1));
  } else {
    report.clearance_time = std::numeric_limits<double>::infinity();
  }
  const auto vh = velocity_and_heading_stats(window, log.reference);
  const auto pe = path_errors(window, log.reference, desired_offset);
  report.v_avg = vh.v_avg;
  report.cum_gamma_avg = vh.cum_gamma_avg;
  report.gamma_std = vh.gamma_std;
  report.omega_std = vh.omega_std;
  report.mae = pe.mae;
  report.mse = pe.mse;
  report.collisions = log.collided() ? 1 : 0;
  if (report.mae > std::sqrt(report.mse) * (1.0 + 1e-12) + 1e-15) {
    throw std::logic_error("metrics: mae exceeds sqrt(mse)");
  }
  return report;
}

}  // namespace rownav
