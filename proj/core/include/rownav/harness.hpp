#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rownav/metrics.hpp"
#include "rownav/sim.hpp"

namespace rownav {

/// Invalid or unparsable configuration. The message starts with the dotted
/// field path, e.g. "pipeline.f_points: must lie in (0, 1)".
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Thresholds {
  std::optional<double> mae;             ///< upper bound
  std::optional<double> mse;             ///< upper bound
  std::optional<double> v_avg;           ///< lower bound
  std::optional<double> omega_std;       ///< upper bound
  std::optional<double> gamma_std;       ///< upper bound
  std::optional<double> clearance_time;  ///< upper bound
  std::optional<int> collisions;         ///< upper bound, normally 0

  bool empty() const;
};

struct ScenarioConfig {
  std::string name = "scenario";
  WorldSpec world;
  ScenarioSetup setup;
  std::optional<Thresholds> thresholds;

  /// Runs every sub-config validator; throws ConfigError.
  void validate() const;
};

/// Parses a JSON scenario. Unknown keys and type mismatches are errors.
ScenarioConfig parse_config(std::string_view json_text);
ScenarioConfig load_config(const std::filesystem::path& path);
/// Complete, re-parsable snapshot of the effective configuration.
std::string config_to_json(const ScenarioConfig& cfg);

/// Sets one dotted key (e.g. "nmpc.K_lane") to a JSON literal. The key must
/// already exist in the snapshot of cfg.
ScenarioConfig with_override(const ScenarioConfig& cfg, std::string_view key,
                             std::string_view value);

/// Accepts a flat bound object or a document with a "thresholds" member.
Thresholds parse_thresholds(std::string_view json_text);

struct CheckLine {
  std::string key;
  std::string relation;  ///< "<=" or ">="
  double value = 0.0;
  double bound = 0.0;
  bool pass = false;
  std::string note;
};

struct CheckReport {
  std::vector<CheckLine> lines;
  bool vacuous = false;

  bool pass() const;
  std::string to_text() const;
};

CheckReport check_metrics(std::string_view metrics_json_text, const Thresholds& bounds);

/// Exit codes shared by the CLI.
inline constexpr int kExitOk = 0;
inline constexpr int kExitScenarioFailure = 1;
inline constexpr int kExitConfigError = 2;

struct RunOutcome {
  RunLog log;
  std::optional<MetricsReport> metrics;
  int exit_code = kExitOk;
  std::string message;
};

std::string trajectory_csv(const RunLog& log);

/// Simulates the scenario. With an output directory, writes trajectory.csv,
/// metrics.json and config.json. A colliding or unfinished run still writes
/// its outputs (metrics with an unfinished clearance are null) but returns
/// kExitScenarioFailure. If writing fails midway, files already created are
/// removed.
RunOutcome run(const ScenarioConfig& cfg, std::optional<std::uint64_t> seed = std::nullopt,
               const std::optional<std::filesystem::path>& out_dir = std::nullopt);

struct SweepAxis {
  std::string key;
  std::vector<std::string> values;
};

/// "a.b=1,2;c.d=3" -> two axes. Empty text -> no axes.
std::vector<SweepAxis> parse_grid(std::string_view text);

struct SweepRow {
  std::vector<std::pair<std::string, std::string>> overrides;
  std::optional<MetricsReport> metrics;
  bool failed = false;
  std::string error;
};

/// Cross product in row-major order (last axis fastest). A failing cell is
/// flagged and the sweep continues.
std::vector<SweepRow> sweep(const ScenarioConfig& base, const std::vector<SweepAxis>& grid,
                            const std::optional<std::filesystem::path>& out_dir = std::nullopt);

std::string sweep_table(const std::vector<SweepAxis>& grid, const std::vector<SweepRow>& rows);

}  // namespace rownav
