// Copyright 2026 The nbvsim Authors
// SPDX-License-Identifier: Apache-2.0
//
// Episodic scanning environment. A step teleports the camera to the action
// pose, checks collision, renders depth and gray, fuses the depth into the
// grid and rewards the change in surface coverage.

#ifndef NBV_ENVIRONMENT_HPP_
#define NBV_ENVIRONMENT_HPP_

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "nbv/bvh.hpp"
#include "nbv/geometry.hpp"
#include "nbv/kdtree.hpp"
#include "nbv/occupancy.hpp"
#include "nbv/render.hpp"

namespace nbv {

class Policy;

/// Raised by Environment::reset / step on contract violations.
class EpisodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EnvConfig {
  ActionBox action_box;
  int max_steps = 100;
  double coverage_done_threshold = 99.0;  // percent
  int keyframe_budget = 30;               // views before the per-step penalty applies
  double collision_penalty = -10.0;       // reward on a colliding step
  double budget_penalty = 0.01;           // subtracted per step beyond keyframe_budget
  double collision_radius = 0.3;
  CameraIntrinsics intrinsics;
  GridConfig grid = GridConfig::over_box(ActionBox{});
  int frame_stack_k = 4;
  Lighting lighting;

  void validate() const;
};

struct GroundTruth {
  std::vector<std::uint32_t> voxels;  // sorted, unique linear indices
  std::vector<Vec3> surface_points;
  std::string mesh_id;
};

/// Area-weighted uniform surface sampling (deterministic for a seed),
/// voxelized into the grid. Downward faces lying on the grid floor can never
/// be seen and are skipped unless `keep_ground_faces`. Throws EpisodeError
/// naming the first mesh bbox corner outside the grid.
GroundTruth build_ground_truth(const TriangleMesh& mesh, const GridConfig& grid,
                               std::size_t n_samples, std::uint64_t seed = 0,
                               std::string mesh_id = {}, bool keep_ground_faces = false);

/// True for a triangle that lies in the plane z = ground_z and faces down.
bool is_ground_face(const TriangleMesh& mesh, std::size_t tri, double ground_z);

/// True when the sphere of `radius` around `position` touches the surface or
/// the position is inside the (closed) mesh.
bool check_collision(const Bvh& bvh, const Vec3& position, double radius);
/// Parity of crossings along a near-axis ray.
bool inside_mesh(const Bvh& bvh, const Vec3& position);

inline constexpr std::size_t kDefaultSurfaceSamples = 100000;

/// Immutable scene shared by any number of concurrent episodes.
struct Scene {
  std::string id;
  std::shared_ptr<const Bvh> bvh;
  GridConfig grid;  // lattice the ground truth was voxelized into
  GroundTruth gt;
  std::shared_ptr<const KdTree> gt_index;  // over gt.surface_points

  const TriangleMesh& mesh() const { return bvh->mesh(); }
};

/// Builds the BVH, ground truth and its point index.
std::shared_ptr<const Scene> make_scene(std::string id, TriangleMesh mesh, const GridConfig& grid,
                                        std::size_t n_samples = kDefaultSurfaceSamples,
                                        std::uint64_t seed = 0);

enum class EpisodeStatus { Running, DoneCoverage, DoneCollision, DoneBudget };
const char* to_string(EpisodeStatus s);

/// Voxel-downsampled union of back-projected points. Each cell keeps the
/// point closest to the cell center (ties: lexicographically smaller).
class ScannedCloud {
 public:
  explicit ScannedCloud(GridConfig lattice = {}) : lattice_(std::move(lattice)) {}
  void add(const PointCloud& cloud);
  /// Points ordered by cell index.
  std::vector<Vec3> points() const;
  std::size_t size() const { return cells_.size(); }

 private:
  GridConfig lattice_;
  std::map<VoxelIndex, Vec3> cells_;
};

struct EpisodeState {
  int step = 0;
  std::vector<Pose5D> poses;     // reset pose first, then one per step
  FrameStack frames;
  OccupancyGrid grid;
  std::vector<double> coverage;  // CR_0 .. CR_step, percent
  double cumulative_reward = 0.0;
  EpisodeStatus status = EpisodeStatus::Running;
  ScannedCloud scanned;
  std::size_t integrated_views = 0;
};

struct StepOutcome {
  double reward = 0.0;
  bool terminated = false;
  EpisodeStatus reason = EpisodeStatus::Running;
  double cr_before = 0.0;
  double cr_after = 0.0;
  bool collision = false;
  bool clamped = false;  // action was moved into the action box
};

class Environment {
 public:
  Environment(EnvConfig config, std::shared_ptr<const Scene> scene);

  /// Starts a fresh episode. Without a start pose, the camera is placed at
  /// the upper (min x, min y) corner of the action box facing the scene
  /// center. Throws EpisodeError when the start pose collides.
  const EpisodeState& reset(std::optional<Pose5D> start = std::nullopt);
  StepOutcome step(const Pose5D& action);

  const EpisodeState& state() const;
  const EnvConfig& config() const { return config_; }
  const Scene& scene() const { return *scene_; }
  bool running() const { return state_ && state_->status == EpisodeStatus::Running; }
  Pose5D default_start_pose() const;

 private:
  void capture(const Pose5D& pose);

  EnvConfig config_;
  std::shared_ptr<const Scene> scene_;
  std::optional<EpisodeState> state_;
};

struct EpisodeResult {
  EpisodeState state;
  std::string reason;  // coverage | collision | max_steps | view_budget | policy_exhausted
  std::vector<StepOutcome> outcomes;
};

/// Resets and drives the policy until termination or `view_budget` views
/// after the reset view. Requires view_budget <= config.max_steps.
EpisodeResult run_episode(const EnvConfig& config, std::shared_ptr<const Scene> scene,
                          Policy& policy, int view_budget,
                          std::optional<Pose5D> start = std::nullopt);

}  // namespace nbv

#endif  // NBV_ENVIRONMENT_HPP_
