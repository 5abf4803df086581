// Copyright 2026 The nbvsim Authors
// SPDX-License-Identifier: Apache-2.0

#include "nbv/benchmark.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <mutex>
#include <numbers>
#include <set>
#include <sstream>
#include <thread>

#include "nbv/mesh_io.hpp"
#include "nbv/policies.hpp"

namespace nbv {

using Json = nlohmann::json;

namespace {

class ConfigReader {
 public:
  explicit ConfigReader(std::string source) : source_(std::move(source)) {}

  [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
    throw ParseError(source_, 0, "'" + key + "': " + msg);
  }

  void require_object(const Json& j, const std::string& key) const {
    if (!j.is_object()) fail(key, "expected an object");
  }

  void check_keys(const Json& j, const std::string& prefix,
                  std::initializer_list<const char*> allowed) const {
    for (const auto& [k, v] : j.items()) {
      const bool known = std::any_of(allowed.begin(), allowed.end(),
                                     [&](const char* a) { return k == a; });
      if (!known) fail(prefix + k, "unknown key");
    }
  }

  double number(const Json& j, const std::string& key) const {
    if (!j.is_number()) fail(key, "expected a number");
    const double v = j.get<double>();
    if (!std::isfinite(v)) fail(key, "expected a finite number");
    return v;
  }

  int integer(const Json& j, const std::string& key) const {
    if (!j.is_number_integer()) fail(key, "expected an integer");
    const auto v = j.get<std::int64_t>();
    if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
      fail(key, "integer out of range");
    }
    return static_cast<int>(v);
  }

  std::uint64_t unsigned_integer(const Json& j, const std::string& key) const {
    if (!j.is_number_unsigned()) fail(key, "expected a non-negative integer");
    return j.get<std::uint64_t>();
  }

  bool boolean(const Json& j, const std::string& key) const {
    if (!j.is_boolean()) fail(key, "expected true or false");
    return j.get<bool>();
  }

  Vec3 vec3(const Json& j, const std::string& key) const {
    if (!j.is_array() || j.size() != 3) fail(key, "expected an array of 3 numbers");
    return {number(j[0], key), number(j[1], key), number(j[2], key)};
  }

  std::array<int, 3> dims(const Json& j, const std::string& key) const {
    if (!j.is_array() || j.size() != 3) fail(key, "expected an array of 3 integers");
    return {integer(j[0], key), integer(j[1], key), integer(j[2], key)};
  }

 private:
  std::string source_;
};

Json vec_json(const Vec3& v) { return Json::array({v.x(), v.y(), v.z()}); }

std::size_t line_of_offset(const std::string& text, std::size_t offset) {
  offset = std::min(offset, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(offset), '\n'));
}

}  // namespace

RunConfig parse_run_config(const Json& doc, const std::string& source) {
  const ConfigReader rd(source);
  rd.require_object(doc, "<root>");
  rd.check_keys(doc, "",
                {"action_box", "max_steps", "coverage_done_threshold", "keyframe_budget",
                 "collision_penalty", "budget_penalty", "collision_radius", "intrinsics",
                 "grid", "frame_stack_k", "lighting", "surface_samples", "surface_seed"});
  RunConfig rc;
  EnvConfig& c = rc.env;

  if (doc.contains("action_box")) {
    const auto& b = doc["action_box"];
    rd.require_object(b, "action_box");
    rd.check_keys(b, "action_box.", {"min", "max"});
    if (b.contains("min")) c.action_box.min = rd.vec3(b["min"], "action_box.min");
    if (b.contains("max")) c.action_box.max = rd.vec3(b["max"], "action_box.max");
  }
  if (doc.contains("max_steps")) c.max_steps = rd.integer(doc["max_steps"], "max_steps");
  if (doc.contains("coverage_done_threshold")) {
    c.coverage_done_threshold = rd.number(doc["coverage_done_threshold"], "coverage_done_threshold");
  }
  if (doc.contains("keyframe_budget")) {
    c.keyframe_budget = rd.integer(doc["keyframe_budget"], "keyframe_budget");
  }
  if (doc.contains("collision_penalty")) {
    c.collision_penalty = rd.number(doc["collision_penalty"], "collision_penalty");
  }
  if (doc.contains("budget_penalty")) {
    c.budget_penalty = rd.number(doc["budget_penalty"], "budget_penalty");
  }
  if (doc.contains("collision_radius")) {
    c.collision_radius = rd.number(doc["collision_radius"], "collision_radius");
  }
  if (doc.contains("frame_stack_k")) c.frame_stack_k = rd.integer(doc["frame_stack_k"], "frame_stack_k");

  if (doc.contains("intrinsics")) {
    const auto& in = doc["intrinsics"];
    rd.require_object(in, "intrinsics");
    rd.check_keys(in, "intrinsics.", {"width", "height", "vertical_fov", "vertical_fov_deg", "max_range"});
    if (in.contains("vertical_fov") && in.contains("vertical_fov_deg")) {
      rd.fail("intrinsics.vertical_fov_deg", "give either vertical_fov or vertical_fov_deg");
    }
    if (in.contains("width")) c.intrinsics.width = rd.integer(in["width"], "intrinsics.width");
    if (in.contains("height")) c.intrinsics.height = rd.integer(in["height"], "intrinsics.height");
    if (in.contains("vertical_fov")) {
      c.intrinsics.vertical_fov = rd.number(in["vertical_fov"], "intrinsics.vertical_fov");
    }
    if (in.contains("vertical_fov_deg")) {
      c.intrinsics.vertical_fov =
          rd.number(in["vertical_fov_deg"], "intrinsics.vertical_fov_deg") * std::numbers::pi / 180.0;
    }
    if (in.contains("max_range")) c.intrinsics.max_range = rd.number(in["max_range"], "intrinsics.max_range");
  }

  GridConfig g = GridConfig::over_box(c.action_box);
  if (doc.contains("grid")) {
    const auto& gj = doc["grid"];
    rd.require_object(gj, "grid");
    rd.check_keys(gj, "grid.",
                  {"dims", "voxel_size", "origin", "log_odds_hit", "log_odds_miss", "hit_miss_ratio",
                   "occupied_threshold", "free_threshold", "clamp_min", "clamp_max",
                   "clear_no_return"});
    if (gj.contains("dims")) {
      const auto d = rd.dims(gj["dims"], "grid.dims");
      const GridConfig sized = GridConfig::over_box(c.action_box, d);
      g.dims = sized.dims;
      g.voxel_size = sized.voxel_size;
    }
    if (gj.contains("voxel_size")) g.voxel_size = rd.number(gj["voxel_size"], "grid.voxel_size");
    if (gj.contains("origin")) g.origin = rd.vec3(gj["origin"], "grid.origin");
    auto f = [&](const char* key, float& dst) {
      if (gj.contains(key)) dst = static_cast<float>(rd.number(gj[key], std::string("grid.") + key));
    };
    f("log_odds_hit", g.log_odds_hit);
    f("log_odds_miss", g.log_odds_miss);
    f("occupied_threshold", g.occupied_threshold);
    f("free_threshold", g.free_threshold);
    f("clamp_min", g.clamp_min);
    f("clamp_max", g.clamp_max);
    if (gj.contains("hit_miss_ratio")) {
      if (gj.contains("log_odds_hit")) rd.fail("grid.hit_miss_ratio", "conflicts with grid.log_odds_hit");
      g.set_hit_miss_ratio(rd.number(gj["hit_miss_ratio"], "grid.hit_miss_ratio"));
    }
    if (gj.contains("clear_no_return")) {
      g.clear_no_return = rd.boolean(gj["clear_no_return"], "grid.clear_no_return");
    }
  }
  c.grid = g;

  if (doc.contains("lighting")) {
    const auto& l = doc["lighting"];
    rd.require_object(l, "lighting");
    rd.check_keys(l, "lighting.", {"direction", "ambient"});
    if (l.contains("direction")) {
      const Vec3 d = rd.vec3(l["direction"], "lighting.direction");
      if (d.norm() == 0.0) rd.fail("lighting.direction", "must be non-zero");
      c.lighting.direction = d.normalized();
    }
    if (l.contains("ambient")) c.lighting.ambient = rd.number(l["ambient"], "lighting.ambient");
  }
  if (doc.contains("surface_samples")) {
    rc.surface_samples = rd.unsigned_integer(doc["surface_samples"], "surface_samples");
    if (rc.surface_samples == 0) rd.fail("surface_samples", "must be positive");
  }
  if (doc.contains("surface_seed")) rc.surface_seed = rd.unsigned_integer(doc["surface_seed"], "surface_seed");

  try {
    c.validate();
  } catch (const std::exception& e) {
    throw ParseError(source, 0, e.what());
  }
  return rc;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileNotFoundError(path);
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ParseError(path.string(), line_of_offset(text, e.byte == 0 ? 0 : e.byte - 1), e.what());
  }
  return parse_run_config(doc, path.string());
}

Json run_config_json(const RunConfig& rc) {
  const EnvConfig& c = rc.env;
  const GridConfig& g = c.grid;
  return {
      {"action_box", {{"min", vec_json(c.action_box.min)}, {"max", vec_json(c.action_box.max)}}},
      {"max_steps", c.max_steps},
      {"coverage_done_threshold", c.coverage_done_threshold},
      {"keyframe_budget", c.keyframe_budget},
      {"collision_penalty", c.collision_penalty},
      {"budget_penalty", c.budget_penalty},
      {"collision_radius", c.collision_radius},
      {"intrinsics",
       {{"width", c.intrinsics.width},
        {"height", c.intrinsics.height},
        {"vertical_fov", c.intrinsics.vertical_fov},
        {"max_range", c.intrinsics.max_range}}},
      {"grid",
       {{"dims", g.dims},
        {"voxel_size", g.voxel_size},
        {"origin", vec_json(g.origin)},
        {"log_odds_hit", g.log_odds_hit},
        {"log_odds_miss", g.log_odds_miss},
        {"occupied_threshold", g.occupied_threshold},
        {"free_threshold", g.free_threshold},
        {"clamp_min", g.clamp_min},
        {"clamp_max", g.clamp_max},
        {"clear_no_return", g.clear_no_return}}},
      {"frame_stack_k", c.frame_stack_k},
      {"lighting", {{"direction", vec_json(c.lighting.direction)}, {"ambient", c.lighting.ambient}}},
      {"surface_samples", rc.surface_samples},
      {"surface_seed", rc.surface_seed},
  };
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  auto parse_u64 = [&](std::string_view s) {
    std::uint64_t v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size()) {
      throw InvariantError("bad seed list '" + text + "'");
    }
    return v;
  };
  std::vector<std::uint64_t> out;
  std::string_view rest = text;
  while (true) {
    const auto comma = rest.find(',');
    const std::string_view item = rest.substr(0, comma);
    const auto dash = item.find('-');
    if (dash == std::string_view::npos) {
      out.push_back(parse_u64(item));
    } else {
      const auto lo = parse_u64(item.substr(0, dash));
      const auto hi = parse_u64(item.substr(dash + 1));
      if (hi < lo) throw InvariantError("bad seed range '" + std::string(item) + "'");
      if (hi - lo >= 1000000) throw InvariantError("seed range too large");
      for (auto s = lo; s <= hi; ++s) out.push_back(s);
    }
    if (comma == std::string_view::npos) break;
    rest = rest.substr(comma + 1);
  }
  return out;
}

void RunSpec::validate() const {
  if (views < 1) throw InvariantError("view budget must be at least 1");
  if (views > config.env.max_steps) {
    throw InvariantError("view budget " + std::to_string(views) + " exceeds max_steps " +
                         std::to_string(config.env.max_steps));
  }
  if (seeds.empty()) throw InvariantError("at least one seed is required");
  if (threads < 1) throw InvariantError("threads must be at least 1");
  if (policy.empty()) throw InvariantError("policy name is empty");
  config.env.validate();
}

std::vector<std::shared_ptr<const Scene>> load_scenes(const std::filesystem::path& manifest,
                                                      const RunConfig& config) {
  const auto entries = load_manifest(manifest);
  std::vector<std::shared_ptr<const Scene>> out;
  out.reserve(entries.size());
  for (const auto& e : entries) {
    out.push_back(load_scene(e, config.env.grid, config.surface_samples, config.surface_seed));
  }
  return out;
}

namespace {

std::string safe_name(const std::string& s) {
  std::string out = s;
  for (char& c : out) {
    const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
    if (!ok) c = '_';
  }
  return out;
}

Json pose_json(const Pose5D& p) { return Json::array({p.x, p.y, p.z, p.pitch, p.yaw}); }

struct Job {
  std::size_t scene = 0;
  std::uint64_t seed = 0;
};

}  // namespace

BenchmarkResult run_benchmark(const RunSpec& spec, ProgressLog log) {
  spec.validate();
  const auto scenes = load_scenes(spec.scenes, spec.config);
  if (scenes.empty()) throw InvariantError("manifest lists no scenes: " + spec.scenes.string());
  return run_benchmark(spec, scenes, std::move(log));
}

BenchmarkResult run_benchmark(const RunSpec& spec,
                              const std::vector<std::shared_ptr<const Scene>>& scenes,
                              ProgressLog log) {
  spec.validate();
  if (scenes.empty()) throw InvariantError("no scenes to run");
  const bool write = !spec.out.empty();
  if (write) std::filesystem::create_directories(spec.out);
  const std::string pname = safe_name(spec.policy);
  if (write && spec.export_trajectories) std::filesystem::create_directories(spec.out / "trajectories");
  if (write && spec.export_ply) std::filesystem::create_directories(spec.out / "clouds");

  std::vector<Job> jobs;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    for (auto seed : spec.seeds) jobs.push_back({i, seed});
  }
  std::vector<CoverageReport> reports(jobs.size());
  std::vector<std::string> violations(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  std::mutex log_mu;
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t j = next++; j < jobs.size(); j = next++) {
      try {
        const auto& scene = scenes[jobs[j].scene];
        EnvConfig cfg = spec.config.env;
        cfg.grid = cfg.grid.on_lattice_of(scene->grid);
        const auto ctx = PolicyContext::for_scene(*scene, cfg);
        auto policy = make_policy(spec.policy, ctx, jobs[j].seed);
        const auto result = run_episode(cfg, scene, *policy, spec.views);
        reports[j] = make_report(result, *scene, spec.policy, jobs[j].seed, spec.views);
        const auto& curve = result.state.coverage;
        for (std::size_t t = 1; t < curve.size(); ++t) {
          if (curve[t] < curve[t - 1]) {
            violations[j] = scene->id + "/" + std::to_string(jobs[j].seed) + "@" + std::to_string(t);
            break;
          }
        }
        const std::string stem = safe_name(scene->id) + "_" + pname + "_s" + std::to_string(jobs[j].seed);
        if (write && spec.export_trajectories) {
          write_trajectory(result, scene->id, spec.policy, jobs[j].seed,
                           spec.out / "trajectories" / (stem + ".jsonl"));
        }
        if (write && spec.export_ply) {
          save_ply_points(result.state.scanned.points(), spec.out / "clouds" / (stem + ".ply"));
        }
        if (log) {
          const std::lock_guard lock(log_mu);
          log("episode scene=" + scene->id + " policy=" + spec.policy +
              " seed=" + std::to_string(jobs[j].seed) + " views=" +
              std::to_string(reports[j].views_used) + " final_cr=" + format_number(reports[j].final_cr) +
              " reason=" + reports[j].reason);
        }
      } catch (...) {
        errors[j] = std::current_exception();
      }
    }
  };
  const int n_threads = std::min<int>(spec.threads, static_cast<int>(jobs.size()));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  std::vector<std::size_t> order(jobs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& ra = reports[a];
    const auto& rb = reports[b];
    return std::tie(ra.scene, ra.seed) < std::tie(rb.scene, rb.seed);
  });

  BenchmarkResult res;
  for (auto i : order) {
    res.reports.push_back(std::move(reports[i]));
    if (!violations[i].empty()) res.monotonicity_violations.push_back(violations[i]);
  }
  res.summaries = aggregate(res.reports);
  if (write && spec.export_csv) {
    write_reports_csv(res.reports, spec.out / "reports.csv");
  }
  if (write) {
    write_summary_csv(res.summaries, spec.out / "summary.csv");
    write_summary_json(res.summaries, res.reports, spec.out / "summary.json");
  }
  return res;
}

void write_trajectory(const EpisodeResult& result, const std::string& scene,
                      const std::string& policy, std::uint64_t seed,
                      const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const auto& st = result.state;
  for (std::size_t t = 0; t < st.poses.size(); ++t) {
    const double reward = t == 0 ? 0.0 : result.outcomes[t - 1].reward;
    const Json line = {{"scene", scene},   {"policy", policy},        {"seed", seed},
                       {"step", t},        {"pose", pose_json(st.poses[t])}, {"reward", reward},
                       {"cr", st.coverage[t]}};
    out << line.dump() << '\n';
  }
}

std::vector<TrajectoryStep> read_trajectory(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FileNotFoundError(path);
  std::vector<TrajectoryStep> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const Json j = Json::parse(line);
      TrajectoryStep s;
      s.scene = j.at("scene").get<std::string>();
      s.policy = j.value("policy", std::string{});
      s.seed = j.value("seed", std::uint64_t{0});
      s.step = j.at("step").get<int>();
      const auto& p = j.at("pose");
      if (!p.is_array() || p.size() != 5) throw InvariantError("pose must have 5 components");
      s.pose = {p[0].get<double>(), p[1].get<double>(), p[2].get<double>(), p[3].get<double>(),
                p[4].get<double>()};
      s.reward = j.at("reward").get<double>();
      s.cr = j.at("cr").get<double>();
      out.push_back(std::move(s));
    } catch (const std::exception& e) {
      throw ParseError(path.string(), lineno, e.what());
    }
  }
  if (out.empty()) throw ParseError(path.string(), 0, "empty trajectory");
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i].step != static_cast<int>(i)) {
      throw ParseError(path.string(), i + 1, "steps must count up from 0");
    }
    if (out[i].scene != out.front().scene) {
      throw ParseError(path.string(), i + 1, "trajectory mixes scenes");
    }
  }
  return out;
}

ReplayResult replay_trajectory(const std::vector<TrajectoryStep>& steps,
                               const std::vector<std::shared_ptr<const Scene>>& scenes,
                               const RunConfig& config, int view_budget) {
  if (steps.empty()) throw InvariantError("empty trajectory");
  const auto it = std::find_if(scenes.begin(), scenes.end(),
                               [&](const auto& s) { return s->id == steps.front().scene; });
  if (it == scenes.end()) throw InvariantError("trajectory scene '" + steps.front().scene + "' is not in the manifest");
  const auto& scene = *it;
  std::vector<Pose5D> poses;
  for (std::size_t i = 1; i < steps.size(); ++i) poses.push_back(steps[i].pose);
  const int budget = view_budget > 0 ? view_budget : std::max<int>(1, static_cast<int>(poses.size()));
  EnvConfig cfg = config.env;
  cfg.grid = cfg.grid.on_lattice_of(scene->grid);
  cfg.max_steps = std::max(cfg.max_steps, budget);
  const std::string name = steps.front().policy.empty() ? "replay" : steps.front().policy;
  FixedSequencePolicy policy(std::move(poses), name);
  const auto result = run_episode(cfg, scene, policy, budget, steps.front().pose);

  ReplayResult rr;
  rr.report = make_report(result, *scene, name, steps.front().seed, budget);
  const auto& curve = result.state.coverage;
  rr.matches = curve.size() == steps.size();
  const std::size_t n = std::min(curve.size(), steps.size());
  for (std::size_t i = 0; i < n; ++i) {
    rr.max_cr_difference = std::max(rr.max_cr_difference, std::abs(curve[i] - steps[i].cr));
  }
  rr.matches = rr.matches && rr.max_cr_difference == 0.0;
  return rr;
}

}  // namespace nbv
