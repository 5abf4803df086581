// Copyright 2026 The nbvsim Authors
// SPDX-License-Identifier: Apache-2.0

#include "nbv/environment.hpp"

#include <algorithm>
#include <random>
#include <sstream>

#include "nbv/policies.hpp"

namespace nbv {

void EnvConfig::validate() const {
  action_box.validate();
  if (max_steps < 1) throw InvariantError("max_steps must be at least 1");
  if (!(coverage_done_threshold > 0.0 && coverage_done_threshold <= 100.0)) {
    throw InvariantError("coverage_done_threshold must lie in (0, 100]");
  }
  if (keyframe_budget < 0) throw InvariantError("keyframe_budget must be non-negative");
  if (!(collision_radius >= 0.0)) throw InvariantError("collision_radius must be non-negative");
  if (frame_stack_k < 0) throw InvariantError("frame_stack_k must be non-negative");
  intrinsics.validate();
  grid.validate();
}

const char* to_string(EpisodeStatus s) {
  switch (s) {
    case EpisodeStatus::Running:
      return "running";
    case EpisodeStatus::DoneCoverage:
      return "coverage";
    case EpisodeStatus::DoneCollision:
      return "collision";
    case EpisodeStatus::DoneBudget:
      return "max_steps";
  }
  return "?";
}

GroundTruth build_ground_truth(const TriangleMesh& mesh, const GridConfig& grid,
                               std::size_t n_samples, std::uint64_t seed, std::string mesh_id,
                               bool keep_ground_faces) {
  mesh.validate();
  grid.validate();
  if (n_samples == 0) throw InvariantError("ground truth needs at least one sample");
  const Aabb mb = mesh.bounds();
  const Aabb gb = grid.bounds();
  for (int corner = 0; corner < 8; ++corner) {
    const Vec3 p((corner & 1) ? mb.max.x() : mb.min.x(), (corner & 2) ? mb.max.y() : mb.min.y(),
                 (corner & 4) ? mb.max.z() : mb.min.z());
    if (!gb.contains(p)) {
      std::ostringstream os;
      os << "mesh outside grid: bbox corner (" << p.x() << ", " << p.y() << ", " << p.z()
         << ") not in grid [" << gb.min.transpose() << "] - [" << gb.max.transpose() << "]";
      throw EpisodeError(os.str());
    }
  }

  std::vector<double> cumulative(mesh.triangles.size());
  double total = 0.0;
  const double ground_z = grid.origin.z();
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    if (keep_ground_faces || !is_ground_face(mesh, t, ground_z)) total += mesh.triangle_area(t);
    cumulative[t] = total;
  }
  if (!(total > 0.0)) throw InvariantError("mesh has no visible surface area");

  std::mt19937_64 rng(seed);
  GroundTruth gt;
  gt.mesh_id = std::move(mesh_id);
  gt.surface_points.reserve(n_samples);
  gt.voxels.reserve(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) {
    const double pick = uniform01(rng) * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), pick);
    const std::size_t t =
        std::min<std::size_t>(static_cast<std::size_t>(it - cumulative.begin()), cumulative.size() - 1);
    const auto& tri = mesh.triangles[t];
    const double r1 = std::sqrt(uniform01(rng));
    const double r2 = uniform01(rng);
    const Vec3 p = (1.0 - r1) * mesh.vertices[tri[0]] + r1 * (1.0 - r2) * mesh.vertices[tri[1]] +
                   r1 * r2 * mesh.vertices[tri[2]];
    gt.surface_points.push_back(p);
    if (auto v = grid.locate(p)) gt.voxels.push_back(static_cast<std::uint32_t>(grid.linear(*v)));
  }
  std::sort(gt.voxels.begin(), gt.voxels.end());
  gt.voxels.erase(std::unique(gt.voxels.begin(), gt.voxels.end()), gt.voxels.end());
  if (gt.voxels.empty()) throw EpisodeError("ground truth has no voxels");
  return gt;
}

bool is_ground_face(const TriangleMesh& mesh, std::size_t tri, double ground_z) {
  constexpr double kTol = 1e-9;
  for (const auto v : mesh.triangles[tri]) {
    if (std::abs(mesh.vertices[v].z() - ground_z) > kTol) return false;
  }
  return mesh.triangle_normal(tri).z() < 0.0;
}

bool inside_mesh(const Bvh& bvh, const Vec3& position) {
  // Slightly skewed off +x so the ray does not run along axis-aligned edges.
  static const Vec3 dir = Vec3(1.0, 1e-3 * std::numbers::sqrt2, 1e-3 * std::numbers::sqrt3).normalized();
  return bvh.count_hits({position, dir}) % 2 == 1;
}

bool check_collision(const Bvh& bvh, const Vec3& position, double radius) {
  if (bvh.closest_distance(position) < radius) return true;
  return inside_mesh(bvh, position);
}

std::shared_ptr<const Scene> make_scene(std::string id, TriangleMesh mesh, const GridConfig& grid,
                                        std::size_t n_samples, std::uint64_t seed) {
  auto scene = std::make_shared<Scene>();
  scene->id = id;
  scene->grid = grid;
  scene->gt = build_ground_truth(mesh, grid, n_samples, seed, id);
  scene->bvh = std::make_shared<const Bvh>(std::move(mesh));
  scene->gt_index = std::make_shared<const KdTree>(scene->gt.surface_points);
  return scene;
}

void ScannedCloud::add(const PointCloud& cloud) {
  for (const auto& p : cloud.points) {
    const VoxelIndex key = lattice_.index_of(p);
    const Vec3 c = lattice_.center(key);
    auto [it, inserted] = cells_.try_emplace(key, p);
    if (inserted) continue;
    const double d_new = (p - c).squaredNorm();
    const double d_old = (it->second - c).squaredNorm();
    const bool lex_smaller = std::lexicographical_compare(p.data(), p.data() + 3,
                                                          it->second.data(), it->second.data() + 3);
    if (d_new < d_old || (d_new == d_old && lex_smaller)) it->second = p;
  }
}

std::vector<Vec3> ScannedCloud::points() const {
  std::vector<Vec3> out;
  out.reserve(cells_.size());
  for (const auto& [key, p] : cells_) out.push_back(p);
  return out;
}

Environment::Environment(EnvConfig config, std::shared_ptr<const Scene> scene)
    : config_(std::move(config)), scene_(std::move(scene)) {
  config_.validate();
  if (!scene_ || !scene_->bvh) throw InvariantError("environment needs a scene");
  if (!config_.grid.same_geometry(scene_->grid)) {
    throw InvariantError("scene '" + scene_->id + "' was voxelized on a different grid");
  }
}

const EpisodeState& Environment::state() const {
  if (!state_) throw EpisodeError("no episode: call reset first");
  return *state_;
}

Pose5D Environment::default_start_pose() const {
  const Vec3 eye(config_.action_box.min.x(), config_.action_box.min.y(),
                 config_.action_box.max.z());
  return look_at(eye, scene_->bvh->bounds().center());
}

void Environment::capture(const Pose5D& pose) {
  auto& st = *state_;
  RenderedView view = render_view(*scene_->bvh, pose, config_.intrinsics, config_.lighting);
  integrate_depth(st.grid, view.depth);
  st.scanned.add(backproject(view.depth));
  st.frames.push(std::move(view.gray));
  ++st.integrated_views;
}

const EpisodeState& Environment::reset(std::optional<Pose5D> start) {
  Pose5D pose = start ? start->normalized() : default_start_pose();
  validate_pose(pose, config_.action_box);
  if (check_collision(*scene_->bvh, pose.position(), config_.collision_radius)) {
    throw EpisodeError("start pose collides with the scene");
  }
  EpisodeState st;
  st.frames = FrameStack(config_.frame_stack_k);
  st.grid = OccupancyGrid(config_.grid);
  st.scanned = ScannedCloud(config_.grid);
  st.poses.push_back(pose);
  state_ = std::move(st);
  capture(pose);
  state_->coverage.push_back(coverage_ratio(state_->grid, scene_->gt.voxels));
  return *state_;
}

StepOutcome Environment::step(const Pose5D& action) {
  if (!state_) throw EpisodeError("no episode: call reset first");
  auto& st = *state_;
  if (st.status != EpisodeStatus::Running) {
    throw EpisodeError(std::string("episode already finished (") + to_string(st.status) + ")");
  }
  if (!action.finite()) throw EpisodeError("action has non-finite components");

  StepOutcome out;
  Pose5D pose = action.normalized();
  const Vec3 clamped = config_.action_box.clamp(pose.position());
  out.clamped = clamped != pose.position() || pose.pitch != action.pitch;
  pose.x = clamped.x();
  pose.y = clamped.y();
  pose.z = clamped.z();

  out.cr_before = st.coverage.back();
  st.poses.push_back(pose);
  st.step += 1;

  if (check_collision(*scene_->bvh, pose.position(), config_.collision_radius)) {
    out.collision = true;
    out.reward = config_.collision_penalty;
    out.cr_after = out.cr_before;
    st.coverage.push_back(out.cr_after);
    st.status = EpisodeStatus::DoneCollision;
  } else {
    capture(pose);
    out.cr_after = coverage_ratio(st.grid, scene_->gt.voxels);
    st.coverage.push_back(out.cr_after);
    out.reward = (out.cr_after - out.cr_before) / 100.0;
    if (st.step > config_.keyframe_budget) out.reward -= config_.budget_penalty;
    if (out.cr_after >= config_.coverage_done_threshold) {
      st.status = EpisodeStatus::DoneCoverage;
    } else if (st.step >= config_.max_steps) {
      st.status = EpisodeStatus::DoneBudget;
    }
  }
  st.cumulative_reward += out.reward;
  out.reason = st.status;
  out.terminated = st.status != EpisodeStatus::Running;
  return out;
}

EpisodeResult run_episode(const EnvConfig& config, std::shared_ptr<const Scene> scene,
                          Policy& policy, int view_budget, std::optional<Pose5D> start) {
  if (view_budget < 1 || view_budget > config.max_steps) {
    throw InvariantError("view budget must lie in [1, max_steps]");
  }
  Environment env(config, std::move(scene));
  env.reset(start);
  EpisodeResult result;
  Classification scratch;
  result.reason = "view_budget";
  for (int v = 0; v < view_budget; ++v) {
    const PolicyObservation obs = make_observation(env.state(), scratch);
    const auto action = policy.act(obs);
    if (!action) {
      result.reason = "policy_exhausted";
      break;
    }
    const StepOutcome out = env.step(*action);
    result.outcomes.push_back(out);
    if (out.terminated) {
      result.reason = to_string(out.reason);
      break;
    }
  }
  result.state = env.state();
  return result;
}

}  // namespace nbv
