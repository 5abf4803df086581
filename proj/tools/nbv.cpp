// Copyright 2026 The nbvsim Authors
// SPDX-License-Identifier: Apache-2.0
//
// nbv: benchmark runner, protocol server, scene generator and replayer.

#include <csignal>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include <pthread.h>

#include "CLI11.hpp"
#include "nbv/benchmark.hpp"
#include "nbv/mesh_io.hpp"
#include "nbv/protocol.hpp"
#include "nbv/scenes.hpp"

namespace {

struct GridFlags {
  std::string dims;
  std::optional<double> voxel_size;
};

std::array<int, 3> parse_dims(const std::string& text) {
  std::array<int, 3> d{};
  std::vector<int> parts;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto comma = text.find(',', pos);
    const std::string item = text.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (item.empty() || used != item.size()) {
      throw nbv::InvariantError("bad --grid-dims '" + text + "' (expected N or X,Y,Z)");
    }
    parts.push_back(v);
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  if (parts.size() == 1) return {parts[0], parts[0], parts[0]};
  if (parts.size() != 3) throw nbv::InvariantError("bad --grid-dims '" + text + "' (expected N or X,Y,Z)");
  d = {parts[0], parts[1], parts[2]};
  return d;
}

nbv::RunConfig resolve_config(const std::string& path, const GridFlags& grid) {
  nbv::RunConfig rc = path.empty() ? nbv::RunConfig{} : nbv::load_run_config(path);
  if (!grid.dims.empty()) {
    const auto sized = nbv::GridConfig::over_box(rc.env.action_box, parse_dims(grid.dims));
    rc.env.grid.dims = sized.dims;
    rc.env.grid.voxel_size = sized.voxel_size;
  }
  if (grid.voxel_size) rc.env.grid.voxel_size = *grid.voxel_size;
  rc.env.validate();
  return rc;
}

void add_grid_flags(CLI::App* cmd, GridFlags& g) {
  cmd->add_option("--grid-dims", g.dims, "Grid resolution, N or X,Y,Z (spans the action box)");
  cmd->add_option("--voxel-size", g.voxel_size, "Voxel edge length in meters")->check(CLI::PositiveNumber);
}

void log_line(const std::string& s) { std::cerr << s << '\n' << std::flush; }

int cmd_run(const nbv::RunSpec& base, const std::string& config_path, const GridFlags& grid,
            const std::string& seeds) {
  nbv::RunSpec spec = base;
  spec.config = resolve_config(config_path, grid);
  spec.seeds = nbv::parse_seed_list(seeds);
  const auto res = nbv::run_benchmark(spec, log_line);
  std::cout << nbv::summary_csv(res.summaries);
  if (!res.monotonicity_violations.empty()) {
    std::cerr << "note: coverage decreased in " << res.monotonicity_violations.size()
              << " episode(s), first at " << res.monotonicity_violations.front() << '\n';
  }
  return 0;
}

int cmd_serve(const std::string& scenes_path, const std::string& config_path, const GridFlags& grid,
              const std::string& bind, bool stdio) {
  const auto rc = resolve_config(config_path, grid);
  auto scenes = std::make_shared<const nbv::SceneList>(nbv::load_scenes(scenes_path, rc));
  if (scenes->empty()) throw nbv::InvariantError("manifest lists no scenes: " + scenes_path);
  if (stdio) {
    nbv::serve_stream(std::cin, std::cout, rc.env, scenes, log_line);
    return 0;
  }
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  const auto addr = nbv::parse_bind(bind.empty() ? nbv::bind_from_env() : bind);
  nbv::Server server(rc.env, scenes, log_line);
  try {
    server.start(addr);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  std::cerr << "listening on " << addr.host << ':' << server.port() << '\n' << std::flush;
  int sig = 0;
  sigwait(&set, &sig);
  std::cerr << "shutting down (signal " << sig << ")\n";
  server.stop();
  return 0;
}

int cmd_gen_scenes(int count, std::uint64_t seed, const std::string& out) {
  const auto entries = nbv::generate_scene_set(count, seed, out);
  std::cout << "wrote " << entries.size() << " scenes to "
            << (std::filesystem::path(out) / "scenes.json").string() << '\n';
  return 0;
}

int cmd_replay(const std::string& traj_path, const std::string& scenes_path,
               const std::string& config_path, const GridFlags& grid, int views,
               const std::string& out) {
  const auto rc = resolve_config(config_path, grid);
  const auto steps = nbv::read_trajectory(traj_path);
  const auto scenes = nbv::load_scenes(scenes_path, rc);
  const auto rr = nbv::replay_trajectory(steps, scenes, rc, views);
  const std::vector<nbv::CoverageReport> reports{rr.report};
  if (!out.empty()) {
    std::filesystem::create_directories(out);
    nbv::write_reports_csv(reports, std::filesystem::path(out) / "replay.csv");
  }
  std::cout << nbv::kCsvHeader << '\n'
            << rr.report.scene << ',' << rr.report.policy << ',' << rr.report.views << ','
            << nbv::format_number(rr.report.auc) << ',' << nbv::format_number(rr.report.final_cr)
            << ',' << nbv::format_number(rr.report.chamfer_cm) << ',' << rr.report.reason << '\n';
  std::cerr << (rr.matches ? "replay matches the recorded coverage\n"
                           : "replay differs from the recording (max |dCR| = " +
                                 nbv::format_number(rr.max_cr_difference) + ")\n");
  return rr.matches ? 0 : 4;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Active 3D reconstruction simulator and next-best-view benchmark"};
  app.require_subcommand(1);

  nbv::RunSpec spec;
  std::string config_path;
  std::string seeds = "0";
  std::string scenes_path;
  GridFlags grid;
  bool no_csv = false;
  bool no_traj = false;
  std::string out;

  auto* run = app.add_subcommand("run", "Run a policy over every scene and seed");
  run->add_option("--scenes", scenes_path, "Scene manifest (JSON)")->required();
  run->add_option("--policy", spec.policy,
                  "random | random-hemisphere | uniform-hemisphere | greedy-infogain | fixed:<poses.json>");
  run->add_option("--views", spec.views, "View budget per episode")->check(CLI::PositiveNumber);
  run->add_option("--seeds", seeds, "Seeds, e.g. 0-4 or 1,3,5");
  run->add_option("--out", out, "Output directory")->required();
  run->add_option("--config", config_path, "Environment config (JSON)");
  run->add_option("--threads", spec.threads, "Parallel episodes")->check(CLI::PositiveNumber);
  run->add_flag("--ply", spec.export_ply, "Export scanned clouds as PLY");
  run->add_flag("--no-csv", no_csv, "Skip the per-episode reports.csv");
  run->add_flag("--no-trajectories", no_traj, "Skip trajectory JSONL files");
  add_grid_flags(run, grid);

  std::string bind;
  bool stdio = false;
  auto* serve = app.add_subcommand("serve", "Serve the JSON-lines protocol");
  serve->add_option("--scenes", scenes_path, "Scene manifest (JSON)")->required();
  serve->add_option("--config", config_path, "Environment config (JSON)");
  serve->add_option("--bind", bind, "host:port (default: $NBV_BIND or 127.0.0.1:5555)");
  serve->add_flag("--stdio", stdio, "Serve one session over stdin/stdout");
  add_grid_flags(serve, grid);

  int count = 10;
  std::uint64_t gen_seed = 0;
  auto* gen = app.add_subcommand("gen-scenes", "Generate procedural house meshes and a manifest");
  gen->add_option("--count", count, "Number of houses")->check(CLI::PositiveNumber);
  gen->add_option("--seed", gen_seed, "Generator seed");
  gen->add_option("--out", out, "Output directory")->required();

  std::string traj_path;
  int replay_views = 0;
  auto* replay = app.add_subcommand("replay", "Re-run a trajectory JSONL and recompute its metrics");
  replay->add_option("trajectory", traj_path, "Trajectory JSONL")->required();
  replay->add_option("--scenes", scenes_path, "Scene manifest (JSON)")->required();
  replay->add_option("--config", config_path, "Environment config (JSON)");
  replay->add_option("--views", replay_views, "View budget (default: recorded length)");
  replay->add_option("--out", out, "Directory for replay.csv");
  add_grid_flags(replay, grid);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*run) {
      spec.scenes = scenes_path;
      spec.out = out;
      spec.export_csv = !no_csv;
      spec.export_trajectories = !no_traj;
      return cmd_run(spec, config_path, grid, seeds);
    }
    if (*serve) return cmd_serve(scenes_path, config_path, grid, bind, stdio);
    if (*gen) return cmd_gen_scenes(count, gen_seed, out);
    if (*replay) return cmd_replay(traj_path, scenes_path, config_path, grid, replay_views, out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
