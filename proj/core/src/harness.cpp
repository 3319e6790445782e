#include "rownav/harness.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace rownav {

using nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + ": expected an object");
  }

  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json* find(const std::string& key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void get(const std::string& key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) throw ConfigError(at(key) + ": expected a number");
      out = v->get<double>();
    }
  }
  void get(const std::string& key, int& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer()) throw ConfigError(at(key) + ": expected an integer");
      const auto x = v->get<std::int64_t>();
      if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) {
        throw ConfigError(at(key) + ": out of range");
      }
      out = static_cast<int>(x);
    }
  }
  void get(const std::string& key, std::uint64_t& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_unsigned()) throw ConfigError(at(key) + ": expected a non-negative integer");
      out = v->get<std::uint64_t>();
    }
  }
  void get(const std::string& key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) throw ConfigError(at(key) + ": expected true or false");
      out = v->get<bool>();
    }
  }
  void get(const std::string& key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) throw ConfigError(at(key) + ": expected a string");
      out = v->get<std::string>();
    }
  }
  template <typename T>
  void get(const std::string& key, std::optional<T>& out) {
    if (const json* v = find(key)) {
      if (v->is_null()) {
        out.reset();
        return;
      }
      T value{};
      seen_.erase(key);
      get(key, value);
      out = value;
    }
  }

  /// Nested object reader, or nullopt when absent.
  std::optional<Reader> child(const std::string& key) {
    if (const json* v = find(key)) return Reader(*v, at(key));
    return std::nullopt;
  }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) throw ConfigError(at(item.key()) + ": unknown key");
    }
  }

 private:
  std::string where() const { return path_.empty() ? "config" : path_; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_world(Reader& r, WorldSpec& w) {
  r.get("row_length", w.row_length);
  r.get("canopy_overrun", w.canopy_overrun);
  r.get("intra_row_space", w.intra_row_space);
  r.get("curvature", w.curvature);
  r.get("plant_spacing", w.plant_spacing);
  r.get("plant_radius", w.plant_radius);
  r.get("plant_height", w.plant_height);
  r.get("canopy_points_per_plant", w.canopy_points_per_plant);
  r.get("pergola", w.pergola);
  r.get("noise_sigma", w.noise_sigma);
  r.get("seed", w.seed);
  r.get("obstacle_height", w.obstacle_height);
  if (const json* list = r.find("extra_obstacles")) {
    if (!list->is_array()) throw ConfigError(r.at("extra_obstacles") + ": expected an array");
    w.extra_obstacles.clear();
    for (std::size_t i = 0; i < list->size(); ++i) {
      Reader o((*list)[i], r.at("extra_obstacles") + "[" + std::to_string(i) + "]");
      ObstacleSpec spec;
      o.get("x", spec.center.x);
      o.get("y", spec.center.y);
      o.get("radius", spec.radius);
      o.finish();
      w.extra_obstacles.push_back(spec);
    }
  }
  r.finish();
}

void read_camera(Reader& r, CameraSpec& c) {
  std::string model;
  r.get("model", model);
  if (!model.empty()) {
    if (model == "planar_sweep") {
      c = CameraSpec::planar_sweep();
    } else if (model != "depth_camera") {
      throw ConfigError(r.at("model") + ": expected \"depth_camera\" or \"planar_sweep\"");
    }
  }
  r.get("h_fov", c.h_fov);
  r.get("v_fov", c.v_fov);
  r.get("max_range", c.max_range);
  r.get("rays_h", c.rays_h);
  r.get("rays_v", c.rays_v);
  r.get("mount_height", c.mount_height);
  r.get("hit_radius", c.hit_radius);
  r.finish();
}

void read_pipeline(Reader& r, PipelineConfig& p) {
  r.get("r_v", p.r_v);
  r.get("z_th_min", p.z_th_min);
  r.get("z_th_max", p.z_th_max);
  r.get("f_points", p.f_points);
  r.get("knn_k", p.knn_k);
  r.get("knn_std_ratio", p.knn_std_ratio);
  r.get("grid_cell", p.grid_cell);
  r.get("grid_extent_x", p.grid_extent_x);
  r.get("grid_extent_y", p.grid_extent_y);
  r.get("safety_margin_R", p.safety_margin_R);
  r.get("max_perp_angle", p.max_perp_angle);
  r.get("max_obstacle_points", p.max_obstacle_points);
  r.get("border_inlier_tol", p.border_inlier_tol);
  r.get("border_min_offset", p.border_min_offset);
  r.get("max_border_divergence", p.max_border_divergence);
  r.finish();
}

void read_nmpc(Reader& r, NmpcConfig& n) {
  r.get("v_max", n.v_max);
  r.get("omega_max", n.omega_max);
  r.get("dt", n.dt);
  r.get("horizon_n", n.horizon_n);
  r.get("K_lane", n.K_lane);
  r.get("K_orient", n.K_orient);
  r.get("K_travel", n.K_travel);
  r.get("r_weight_v", n.r_weight_v);
  r.get("r_weight_omega", n.r_weight_omega);
  r.get("R_safe", n.R_safe);
  r.get("solver_max_iter", n.solver_max_iter);
  r.get("solver_tol", n.solver_tol);
  r.get("solver_opt_tol", n.solver_opt_tol);
  r.get("penalty_init", n.penalty_init);
  r.get("penalty_growth", n.penalty_growth);
  r.finish();
}

void read_thresholds(Reader& r, Thresholds& t) {
  r.get("mae", t.mae);
  r.get("mse", t.mse);
  r.get("v_avg", t.v_avg);
  r.get("omega_std", t.omega_std);
  r.get("gamma_std", t.gamma_std);
  r.get("clearance_time", t.clearance_time);
  r.get("collisions", t.collisions);
  r.finish();
}

json parse_json(std::string_view text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string(what) + ": " + e.what());
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path.string() + ": cannot open");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path.string() + ": cannot write");
  out << text;
  if (!out.flush()) throw std::runtime_error(path.string() + ": write failed");
}

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", x);
  return buf;
}

void sync_derived(ScenarioConfig& cfg) {
  SupervisorConfig& s = cfg.setup.supervisor;
  const NmpcConfig& n = cfg.setup.nmpc;
  s.dt = n.dt;
  s.v_max = n.v_max;
  s.omega_max = n.omega_max;
  s.approach.v_max = n.v_max;
  s.approach.omega_max = n.omega_max;
}

}  // namespace

bool Thresholds::empty() const {
  return !mae && !mse && !v_avg && !omega_std && !gamma_std && !clearance_time && !collisions;
}

void ScenarioConfig::validate() const {
  try {
    world.validate();
    setup.camera.validate();
    setup.pipeline.validate();
    setup.nmpc.validate();
    setup.supervisor.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (setup.max_ticks < 1) throw ConfigError("max_ticks: must be >= 1");
  if (!(setup.target_detection_range > 0.0)) {
    throw ConfigError("target_detection_range: must be > 0");
  }
  for (std::size_t i = 0; i < setup.targets.size(); ++i) {
    if (!(setup.targets[i].standoff > 0.0)) {
      throw ConfigError("targets[" + std::to_string(i) + "].standoff: must be > 0");
    }
  }
  if (!std::isfinite(setup.start.x) || !std::isfinite(setup.start.y)) {
    throw ConfigError("start: position must be finite");
  }
}

ScenarioConfig parse_config(std::string_view json_text) {
  const json doc = parse_json(json_text, "config");
  Reader root(doc, "");
  ScenarioConfig cfg;
  root.get("name", cfg.name);
  if (auto r = root.child("world")) read_world(*r, cfg.world);
  if (auto r = root.child("camera")) read_camera(*r, cfg.setup.camera);
  if (auto r = root.child("pipeline")) read_pipeline(*r, cfg.setup.pipeline);
  if (auto r = root.child("nmpc")) read_nmpc(*r, cfg.setup.nmpc);
  if (auto r = root.child("fallback")) {
    FallbackConfig& f = cfg.setup.supervisor.fallback;
    r->get("K_p", f.K_p);
    r->get("align_tol", f.align_tol);
    r->get("v_during_realign", f.v_during_realign);
    r->finish();
  }
  if (auto r = root.child("supervisor")) {
    SupervisorConfig& s = cfg.setup.supervisor;
    r->get("n_empty", s.n_empty);
    r->get("K_rho", s.approach.K_rho);
    r->get("K_alpha", s.approach.K_alpha);
    r->finish();
  }
  if (auto r = root.child("start")) {
    double x = 0.0, y = 0.0, theta = 0.0;
    r->get("x", x);
    r->get("y", y);
    r->get("theta", theta);
    r->get("row_heading_prior", cfg.setup.row_heading_prior);
    r->finish();
    cfg.setup.start = pose_from(x, y, theta);
  }
  std::string lane_mode = "full";
  root.get("lane_mode", lane_mode);
  const auto mode = lane_mode_from_string(lane_mode);
  if (!mode) throw ConfigError("lane_mode: expected full, right_half or left_half");
  cfg.setup.pipeline.lane_mode = *mode;
  if (const json* list = root.find("targets")) {
    if (!list->is_array()) throw ConfigError("targets: expected an array");
    for (std::size_t i = 0; i < list->size(); ++i) {
      Reader t((*list)[i], "targets[" + std::to_string(i) + "]");
      WorldTarget target;
      t.get("x", target.position.x);
      t.get("y", target.position.y);
      t.get("standoff", target.standoff);
      t.finish();
      cfg.setup.targets.push_back(target);
    }
  }
  root.get("target_detection_range", cfg.setup.target_detection_range);
  root.get("max_ticks", cfg.setup.max_ticks);
  if (const json* t = root.find("thresholds"); t && !t->is_null()) {
    Reader r(*t, "thresholds");
    Thresholds bounds;
    read_thresholds(r, bounds);
    cfg.thresholds = bounds;
  }
  root.finish();
  sync_derived(cfg);
  cfg.validate();
  return cfg;
}

ScenarioConfig load_config(const std::filesystem::path& path) {
  return parse_config(read_file(path));
}

std::string config_to_json(const ScenarioConfig& cfg) {
  ojson j;
  j["name"] = cfg.name;
  const WorldSpec& w = cfg.world;
  ojson obstacles = ojson::array();
  for (const ObstacleSpec& o : w.extra_obstacles) {
    obstacles.push_back(ojson{{"x", o.center.x}, {"y", o.center.y}, {"radius", o.radius}});
  }
  j["world"] = ojson{{"row_length", w.row_length},
                     {"canopy_overrun", w.canopy_overrun},
                     {"intra_row_space", w.intra_row_space},
                     {"curvature", w.curvature},
                     {"plant_spacing", w.plant_spacing},
                     {"plant_radius", w.plant_radius},
                     {"plant_height", w.plant_height},
                     {"canopy_points_per_plant", w.canopy_points_per_plant},
                     {"pergola", w.pergola},
                     {"noise_sigma", w.noise_sigma},
                     {"seed", w.seed},
                     {"obstacle_height", w.obstacle_height},
                     {"extra_obstacles", obstacles}};
  const CameraSpec& c = cfg.setup.camera;
  j["camera"] = ojson{{"model", c.model == SensorModel::kPlanarSweep ? "planar_sweep" : "depth_camera"},
                      {"h_fov", c.h_fov},
                      {"v_fov", c.v_fov},
                      {"max_range", c.max_range},
                      {"rays_h", c.rays_h},
                      {"rays_v", c.rays_v},
                      {"mount_height", c.mount_height},
                      {"hit_radius", c.hit_radius}};
  const PipelineConfig& p = cfg.setup.pipeline;
  j["pipeline"] = ojson{{"r_v", p.r_v},
                        {"z_th_min", p.z_th_min},
                        {"z_th_max", p.z_th_max},
                        {"f_points", p.f_points},
                        {"knn_k", p.knn_k},
                        {"knn_std_ratio", p.knn_std_ratio},
                        {"grid_cell", p.grid_cell},
                        {"grid_extent_x", p.grid_extent_x},
                        {"grid_extent_y", p.grid_extent_y},
                        {"safety_margin_R", p.safety_margin_R},
                        {"max_perp_angle", p.max_perp_angle},
                        {"max_obstacle_points", p.max_obstacle_points},
                        {"border_inlier_tol", p.border_inlier_tol},
                        {"border_min_offset", p.border_min_offset},
                        {"max_border_divergence", p.max_border_divergence}};
  const NmpcConfig& n = cfg.setup.nmpc;
  j["nmpc"] = ojson{{"v_max", n.v_max},
                    {"omega_max", n.omega_max},
                    {"dt", n.dt},
                    {"horizon_n", n.horizon_n},
                    {"K_lane", n.K_lane},
                    {"K_orient", n.K_orient},
                    {"K_travel", n.K_travel},
                    {"r_weight_v", n.r_weight_v},
                    {"r_weight_omega", n.r_weight_omega},
                    {"R_safe", n.R_safe},
                    {"solver_max_iter", n.solver_max_iter},
                    {"solver_tol", n.solver_tol},
                    {"solver_opt_tol", n.solver_opt_tol},
                    {"penalty_init", n.penalty_init},
                    {"penalty_growth", n.penalty_growth}};
  const SupervisorConfig& s = cfg.setup.supervisor;
  j["fallback"] = ojson{{"K_p", s.fallback.K_p},
                        {"align_tol", s.fallback.align_tol},
                        {"v_during_realign", s.fallback.v_during_realign}};
  j["supervisor"] = ojson{{"n_empty", s.n_empty},
                          {"K_rho", s.approach.K_rho},
                          {"K_alpha", s.approach.K_alpha}};
  ojson start{{"x", cfg.setup.start.x},
              {"y", cfg.setup.start.y},
              {"theta", heading_of(cfg.setup.start)}};
  start["row_heading_prior"] =
      cfg.setup.row_heading_prior ? ojson(*cfg.setup.row_heading_prior) : ojson(nullptr);
  j["start"] = start;
  j["lane_mode"] = std::string(to_string(p.lane_mode));
  ojson targets = ojson::array();
  for (const WorldTarget& t : cfg.setup.targets) {
    targets.push_back(ojson{{"x", t.position.x}, {"y", t.position.y}, {"standoff", t.standoff}});
  }
  j["targets"] = targets;
  j["target_detection_range"] = cfg.setup.target_detection_range;
  j["max_ticks"] = cfg.setup.max_ticks;
  if (cfg.thresholds) {
    ojson t = ojson::object();
    const Thresholds& b = *cfg.thresholds;
    if (b.mae) t["mae"] = *b.mae;
    if (b.mse) t["mse"] = *b.mse;
    if (b.v_avg) t["v_avg"] = *b.v_avg;
    if (b.omega_std) t["omega_std"] = *b.omega_std;
    if (b.gamma_std) t["gamma_std"] = *b.gamma_std;
    if (b.clearance_time) t["clearance_time"] = *b.clearance_time;
    if (b.collisions) t["collisions"] = *b.collisions;
    j["thresholds"] = t;
  }
  return j.dump(2) + "\n";
}

ScenarioConfig with_override(const ScenarioConfig& cfg, std::string_view key,
                             std::string_view value) {
  json doc = json::parse(config_to_json(cfg));
  json* node = &doc;
  std::string path;
  std::size_t pos = 0;
  while (true) {
    const std::size_t dot = key.find('.', pos);
    const std::string part(key.substr(pos, dot == std::string_view::npos ? key.npos : dot - pos));
    path += (path.empty() ? "" : ".") + part;
    if (node->is_array()) {
      std::size_t idx = 0;
      try {
        idx = std::stoul(part);
      } catch (const std::exception&) {
        throw ConfigError(path + ": expected an array index");
      }
      if (idx >= node->size()) throw ConfigError(path + ": index out of range");
      node = &(*node)[idx];
    } else if (node->is_object() && node->contains(part)) {
      node = &(*node)[part];
    } else {
      throw ConfigError(path + ": unknown key");
    }
    if (dot == std::string_view::npos) break;
    pos = dot + 1;
  }
  json parsed = json::parse(value, nullptr, false);
  // Bare words such as right_half are taken as strings.
  *node = parsed.is_discarded() ? json(std::string(value)) : parsed;
  return parse_config(doc.dump());
}

Thresholds parse_thresholds(std::string_view json_text) {
  const json doc = parse_json(json_text, "thresholds");
  Thresholds t;
  if (doc.is_object() && doc.contains("thresholds")) {
    if (!doc["thresholds"].is_null()) {
      Reader r(doc["thresholds"], "thresholds");
      read_thresholds(r, t);
    }
    return t;
  }
  Reader r(doc, "thresholds");
  read_thresholds(r, t);
  return t;
}

bool CheckReport::pass() const {
  for (const CheckLine& l : lines) {
    if (!l.pass) return false;
  }
  return true;
}

std::string CheckReport::to_text() const {
  std::ostringstream os;
  if (vacuous) os << "WARNING no thresholds given; nothing to check\n";
  for (const CheckLine& l : lines) {
    os << (l.pass ? "PASS " : "FAIL ") << l.key;
    if (!l.note.empty()) {
      os << ": " << l.note << '\n';
      continue;
    }
    os << ' ' << fmt(l.value) << ' ' << l.relation << ' ' << fmt(l.bound) << '\n';
  }
  os << (pass() ? "check passed\n" : "check failed\n");
  return os.str();
}

CheckReport check_metrics(std::string_view metrics_json_text, const Thresholds& bounds) {
  const json doc = parse_json(metrics_json_text, "metrics");
  if (!doc.is_object()) throw ConfigError("metrics: expected an object");
  CheckReport report;
  report.vacuous = bounds.empty();
  const auto compare = [&](const char* key, std::optional<double> bound, bool upper) {
    if (!bound) return;
    CheckLine line;
    line.key = key;
    line.relation = upper ? "<=" : ">=";
    line.bound = *bound;
    const auto it = doc.find(key);
    if (it == doc.end()) {
      line.note = "missing from metrics";
    } else if (it->is_null()) {
      line.value = std::numeric_limits<double>::infinity();
      line.note = "not available (run did not complete)";
    } else if (!it->is_number()) {
      line.note = "not a number";
    } else {
      line.value = it->get<double>();
      line.pass = upper ? line.value <= line.bound : line.value >= line.bound;
    }
    report.lines.push_back(line);
  };
  compare("mae", bounds.mae, true);
  compare("mse", bounds.mse, true);
  compare("v_avg", bounds.v_avg, false);
  compare("omega_std", bounds.omega_std, true);
  compare("gamma_std", bounds.gamma_std, true);
  compare("clearance_time", bounds.clearance_time, true);
  compare("collisions",
          bounds.collisions ? std::optional<double>(*bounds.collisions) : std::nullopt, true);
  return report;
}

std::string trajectory_csv(const RunLog& log) {
  std::string out = "t,x,y,theta,v_cmd,omega_cmd,mode,perception_status,solver_status\n";
  char buf[256];
  for (const TickRecord& r : log.records) {
    std::snprintf(buf, sizeof buf, "%.3f,%.6f,%.6f,%.6f,%.6f,%.6f,", r.t, r.pose.x, r.pose.y,
                  heading_of(r.pose), r.command.v, r.command.omega);
    out += buf;
    out += to_string(r.mode);
    out += ',';
    out += to_string(r.perception);
    out += ',';
    out += r.solver ? to_string(*r.solver) : std::string_view("none");
    out += '\n';
  }
  return out;
}

RunOutcome run(const ScenarioConfig& base, std::optional<std::uint64_t> seed,
               const std::optional<std::filesystem::path>& out_dir) {
  ScenarioConfig cfg = base;
  if (seed) cfg.world.seed = *seed;
  sync_derived(cfg);
  cfg.validate();

  RunOutcome out;
  const World world = generate_world(cfg.world);
  out.log = run_scenario(world, cfg.setup);
  out.log.config_snapshot = config_to_json(cfg);
  out.metrics = compute_metrics(
      out.log, desired_offset(cfg.setup.pipeline.lane_mode, cfg.world.intra_row_space));

  if (out.log.collided()) {
    out.exit_code = kExitScenarioFailure;
    out.message = "collision at t = " + fmt(out.log.records[*out.log.collision_tick].t) + " s";
  } else if (out.log.termination != Termination::kEndOfRow || !clearance_index(out.log)) {
    out.exit_code = kExitScenarioFailure;
    out.message = "row not completed (termination: " + std::string(to_string(out.log.termination)) + ")";
  } else {
    out.message = "completed in " + fmt(out.metrics->clearance_time) + " s";
  }

  if (out_dir) {
    std::vector<std::filesystem::path> written;
    try {
      std::filesystem::create_directories(*out_dir);
      const std::pair<const char*, std::string> files[] = {
          {"trajectory.csv", trajectory_csv(out.log)},
          {"metrics.json", out.metrics->to_json()},
          {"config.json", out.log.config_snapshot},
      };
      for (const auto& [name, text] : files) {
        const auto path = *out_dir / name;
        written.push_back(path);
        write_file(path, text);
      }
    } catch (...) {
      std::error_code ec;
      for (const auto& path : written) std::filesystem::remove(path, ec);
      throw;
    }
  }
  return out;
}

std::vector<SweepAxis> parse_grid(std::string_view text) {
  std::vector<SweepAxis> axes;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find(';', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view item = text.substr(pos, end - pos);
    pos = end + 1;
    if (item.find_first_not_of(" \t") == std::string_view::npos) continue;
    const std::size_t eq = item.find('=');
    if (eq == std::string_view::npos || eq == 0) {
      throw ConfigError("grid: expected key=v1,v2,... in \"" + std::string(item) + "\"");
    }
    SweepAxis axis;
    axis.key = std::string(item.substr(0, eq));
    std::string_view values = item.substr(eq + 1);
    std::size_t vp = 0;
    while (vp <= values.size()) {
      std::size_t comma = values.find(',', vp);
      if (comma == std::string_view::npos) comma = values.size();
      const std::string v(values.substr(vp, comma - vp));
      if (v.empty()) throw ConfigError("grid." + axis.key + ": empty value");
      axis.values.push_back(v);
      vp = comma + 1;
    }
    axes.push_back(std::move(axis));
  }
  return axes;
}

std::vector<SweepRow> sweep(const ScenarioConfig& base, const std::vector<SweepAxis>& grid,
                            const std::optional<std::filesystem::path>& out_dir) {
  std::size_t cells = 1;
  for (const SweepAxis& a : grid) cells *= a.values.size();
  std::vector<SweepRow> rows;
  rows.reserve(cells);
  for (std::size_t c = 0; c < cells; ++c) {
    SweepRow row;
    std::size_t rem = c;
    std::vector<std::size_t> idx(grid.size());
    for (std::size_t a = grid.size(); a-- > 0;) {
      idx[a] = rem % grid[a].values.size();
      rem /= grid[a].values.size();
    }
    for (std::size_t a = 0; a < grid.size(); ++a) {
      row.overrides.emplace_back(grid[a].key, grid[a].values[idx[a]]);
    }
    try {
      ScenarioConfig cfg = base;
      for (const auto& [k, v] : row.overrides) cfg = with_override(cfg, k, v);
      std::optional<std::filesystem::path> cell_dir;
      if (out_dir) cell_dir = *out_dir / ("cell_" + std::to_string(c));
      RunOutcome outcome = run(cfg, std::nullopt, cell_dir);
      row.metrics = outcome.metrics;
      row.failed = outcome.exit_code != kExitOk;
      if (row.failed) row.error = outcome.message;
    } catch (const std::exception& e) {
      row.failed = true;
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string sweep_table(const std::vector<SweepAxis>& grid, const std::vector<SweepRow>& rows) {
  std::string out = "cell";
  for (const SweepAxis& a : grid) out += "," + a.key;
  out += ",status,clearance_time,v_avg,cum_gamma_avg,gamma_std,omega_std,mae,mse,collisions,error\n";
  for (std::size_t c = 0; c < rows.size(); ++c) {
    const SweepRow& r = rows[c];
    out += std::to_string(c);
    for (const auto& kv : r.overrides) out += "," + kv.second;
    out += r.failed ? ",failed" : ",ok";
    if (r.metrics) {
      const MetricsReport& m = *r.metrics;
      for (double x : {m.clearance_time, m.v_avg, m.cum_gamma_avg, m.gamma_std, m.omega_std, m.mae,
                       m.mse}) {
        out += "," + fmt(x);
      }
      out += "," + std::to_string(m.collisions);
    } else {
      out += ",,,,,,,,";
    }
    std::string err = r.error;
    for (char& ch : err) {
      if (ch == ',' || ch == '\n') ch = ' ';
    }
    out += "," + err + "\n";
  }
  return out;
}

}  // namespace rownav
