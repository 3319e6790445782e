// rownav: run, check and sweep simulated row-following scenarios.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "rownav/cloud_io.hpp"
#include "rownav/harness.hpp"

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw rownav::ConfigError(path + ": cannot open");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int cmd_run(const std::string& config, std::optional<std::uint64_t> seed, const std::string& out) {
  const auto cfg = rownav::load_config(config);
  std::optional<std::filesystem::path> dir;
  if (!out.empty()) dir = out;
  const auto outcome = rownav::run(cfg, seed, dir);
  std::cout << cfg.name << ": " << outcome.message << '\n';
  if (outcome.metrics) std::cout << outcome.metrics->to_text();
  if (outcome.exit_code == rownav::kExitOk && cfg.thresholds) {
    const auto report = rownav::check_metrics(outcome.metrics->to_json(), *cfg.thresholds);
    std::cout << report.to_text();
    if (!report.pass()) return rownav::kExitScenarioFailure;
  }
  return outcome.exit_code;
}

int cmd_check(const std::string& metrics, const std::string& thresholds) {
  rownav::Thresholds bounds;
  if (!thresholds.empty()) bounds = rownav::parse_thresholds(slurp(thresholds));
  const auto report = rownav::check_metrics(slurp(metrics), bounds);
  std::cout << report.to_text();
  return report.pass() ? rownav::kExitOk : rownav::kExitScenarioFailure;
}

int cmd_sweep(const std::string& config, const std::string& grid, const std::string& out) {
  const auto cfg = rownav::load_config(config);
  const auto axes = rownav::parse_grid(grid);
  std::optional<std::filesystem::path> dir;
  if (!out.empty()) dir = out;
  const auto rows = rownav::sweep(cfg, axes, dir);
  const std::string table = rownav::sweep_table(axes, rows);
  std::cout << table;
  if (dir) {
    std::ofstream(*dir / "sweep.csv", std::ios::binary) << table;
  }
  for (const auto& r : rows) {
    if (r.failed) return rownav::kExitScenarioFailure;
  }
  return rownav::kExitOk;
}

int cmd_perceive(const std::string& cloud_path, const std::string& config, const std::string& pgm) {
  rownav::PipelineConfig pcfg;
  if (!config.empty()) pcfg = rownav::load_config(config).setup.pipeline;
  const auto cloud = rownav::read_cloud(cloud_path);
  const auto trace = rownav::process_traced(cloud, pcfg);
  std::cout << "points: " << trace.n_input << " filtered: " << trace.n_filtered
            << " cropped: " << trace.n_cropped << '\n';
  std::cout << "status: " << rownav::to_string(rownav::status_of(trace.result)) << '\n';
  if (const auto* ok = std::get_if<rownav::PerceptionOk>(&trace.result)) {
    const auto line = [](const char* name, const rownav::BorderLine& l) {
      std::printf("%s: y = %.4f x %+.4f\n", name, l.a, l.b);
    };
    line("left", ok->lane.left);
    line("right", ok->lane.right);
    line("middle", ok->lane.middle);
    std::cout << "obstacles: " << ok->obstacles.size() << '\n';
  } else if (const auto* bad = std::get_if<rownav::InvalidLane>(&trace.result)) {
    std::cout << "reason: " << rownav::to_string(bad->reason) << '\n';
  }
  if (!pgm.empty()) rownav::write_pgm(pgm, trace.filled_grid);
  return rownav::kExitOk;
}

int cmd_export_world(const std::string& config, std::optional<std::uint64_t> seed,
                     const std::string& out) {
  auto cfg = rownav::load_config(config);
  if (seed) cfg.world.seed = *seed;
  const auto world = rownav::generate_world(cfg.world);
  rownav::export_world(world, out);
  std::cout << "wrote " << world.points.size() << " points to " << out << '\n';
  return rownav::kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Row-following navigation simulator and regression gate"};
  app.require_subcommand(1);

  std::string config, out, metrics, thresholds, grid, cloud, pgm;
  std::optional<std::uint64_t> seed;

  auto* run = app.add_subcommand("run", "Simulate a scenario and write trajectory and metrics");
  run->add_option("--config", config, "Scenario JSON")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", seed, "Override world.seed");
  run->add_option("--out", out, "Output directory");

  auto* check = app.add_subcommand("check", "Compare a metrics file against thresholds");
  check->add_option("--metrics", metrics, "metrics.json from run")->required()->check(CLI::ExistingFile);
  check->add_option("--thresholds", thresholds, "Bounds JSON (or a scenario with a thresholds block)")
      ->check(CLI::ExistingFile);

  auto* sw = app.add_subcommand("sweep", "Run the cross product of parameter overrides");
  sw->add_option("--config", config, "Scenario JSON")->required()->check(CLI::ExistingFile);
  sw->add_option("--grid", grid, "e.g. \"nmpc.K_lane=0.5,1,2;nmpc.K_orient=1,2\"");
  sw->add_option("--out", out, "Output directory, one subdirectory per cell");

  auto* perceive = app.add_subcommand("perceive", "Run the perception pipeline on a cloud file");
  perceive->add_option("--cloud", cloud, ".xyz, .txt or .bin cloud")->required()->check(CLI::ExistingFile);
  perceive->add_option("--config", config, "Scenario JSON supplying pipeline settings");
  perceive->add_option("--pgm", pgm, "Write the filled occupancy grid as PGM");

  auto* exp = app.add_subcommand("export-world", "Write a scenario world as a point cloud");
  exp->add_option("--config", config, "Scenario JSON")->required()->check(CLI::ExistingFile);
  exp->add_option("--seed", seed, "Override world.seed");
  exp->add_option("--out", out, "Output .xyz or .bin file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : rownav::kExitConfigError;
  }

  try {
    if (*run) return cmd_run(config, seed, out);
    if (*check) return cmd_check(metrics, thresholds);
    if (*sw) return cmd_sweep(config, grid, out);
    if (*perceive) return cmd_perceive(cloud, config, pgm);
    if (*exp) return cmd_export_world(config, seed, out);
  } catch (const rownav::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return rownav::kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return rownav::kExitScenarioFailure;
  }
  return rownav::kExitOk;
}
