// Copyright 2026 The nbvsim Authors
// SPDX-License-Identifier: Apache-2.0
//
// JSON run configuration and the benchmark driver behind `nbv run`.

#ifndef NBV_BENCHMARK_HPP_
#define NBV_BENCHMARK_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "nbv/environment.hpp"
#include "nbv/metrics.hpp"
#include "nbv/scenes.hpp"

namespace nbv {

/// Environment configuration plus scene-preparation knobs.
struct RunConfig {
  EnvConfig env;
  std::size_t surface_samples = kDefaultSurfaceSamples;
  std::uint64_t surface_seed = 0;
};

/// Parses a config document. Unknown keys and type errors throw ParseError
/// naming the offending key. `grid` defaults to the action box grid.
RunConfig parse_run_config(const nlohmann::json& doc, const std::string& source = "<config>");
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json run_config_json(const RunConfig& config);

/// "3" -> {3}; "0-4" -> {0..4}; "1,5,7" -> {1,5,7}; mixes allowed.
std::vector<std::uint64_t> parse_seed_list(const std::string& text);

struct RunSpec {
  std::filesystem::path scenes;  // manifest
  std::string policy = "uniform-hemisphere";
  int views = 30;
  std::vector<std::uint64_t> seeds{0};
  std::filesystem::path out;
  bool export_ply = false;
  bool export_trajectories = true;
  bool export_csv = true;
  int threads = 1;
  RunConfig config;

  void validate() const;
};

struct BenchmarkResult {
  std::vector<CoverageReport> reports;  // sorted by (scene, seed)
  std::vector<PolicySummary> summaries;
  /// Episodes whose coverage curve decreased somewhere, as "scene/seed@step".
  std::vector<std::string> monotonicity_violations;
};

/// Prepared scenes: loaded, normalized and voxelized once per run.
std::vector<std::shared_ptr<const Scene>> load_scenes(const std::filesystem::path& manifest,
                                                      const RunConfig& config);

using ProgressLog = std::function<void(const std::string&)>;

/// Runs every (scene, seed) episode and writes artifacts under spec.out.
BenchmarkResult run_benchmark(const RunSpec& spec, ProgressLog log = {});
/// Same on already prepared scenes; writes nothing when spec.out is empty.
BenchmarkResult run_benchmark(const RunSpec& spec,
                              const std::vector<std::shared_ptr<const Scene>>& scenes,
                              ProgressLog log = {});

struct TrajectoryStep {
  std::string scene;
  std::string policy;
  std::uint64_t seed = 0;
  int step = 0;
  Pose5D pose;
  double reward = 0.0;
  double cr = 0.0;
};

/// One JSON object per line: scene, policy, seed, step, pose, reward, cr.
/// Step 0 is the reset view.
void write_trajectory(const EpisodeResult& result, const std::string& scene,
                      const std::string& policy, std::uint64_t seed,
                      const std::filesystem::path& path);
std::vector<TrajectoryStep> read_trajectory(const std::filesystem::path& path);

struct ReplayResult {
  CoverageReport report;
  /// Largest |recorded - recomputed| over the coverage curve.
  double max_cr_difference = 0.0;
  bool matches = false;
};

/// Re-runs the recorded poses against the scene named in the trajectory.
ReplayResult replay_trajectory(const std::vector<TrajectoryStep>& steps,
                               const std::vector<std::shared_ptr<const Scene>>& scenes,
                               const RunConfig& config, int view_budget = 0);

}  // namespace nbv

#endif  // NBV_BENCHMARK_HPP_
