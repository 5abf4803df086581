// Copyright 2026 The nbvsim Authors
// SPDX-License-Identifier: Apache-2.0
//
// View-planning policies: the pull interface the environment drives, the
// heuristic baselines (random free-space, random and uniform hemisphere),
// fixed pose sequences and a grid-based greedy information-gain planner.

#ifndef NBV_POLICIES_HPP_
#define NBV_POLICIES_HPP_

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "nbv/bvh.hpp"
#include "nbv/environment.hpp"
#include "nbv/geometry.hpp"
#include "nbv/occupancy.hpp"
#include "nbv/render.hpp"

namespace nbv {

/// Read-only view of the running episode handed to a policy.
struct PolicyObservation {
  std::span<const Pose5D> poses;
  const OccupancyGrid* grid = nullptr;
  const Classification* classification = nullptr;
  double coverage = 0.0;
  const FrameStack* frames = nullptr;
  int step = 0;
};

/// Builds an observation; `scratch` receives the classification it points to.
PolicyObservation make_observation(const EpisodeState& state, Classification& scratch);

class Policy {
 public:
  virtual ~Policy() = default;
  /// Next viewpoint, or nullopt once a finite policy is exhausted.
  virtual std::optional<Pose5D> act(const PolicyObservation& obs) = 0;
  virtual std::string name() const = 0;
};

/// Raised when a sampling policy cannot find a collision-free pose.
class PolicyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct HemisphereSpec {
  Vec3 center{0.0, 0.0, 1.0};
  double radius = 9.0;
  int n_heights = 5;
  int n_azimuths = 6;

  /// Centered over the scene footprint, at the scene mid-height lowered as
  /// far as needed to keep the whole hemisphere inside the action box.
  static HemisphereSpec for_scene(const Aabb& scene_bounds, const ActionBox& box,
                                  double radius = 9.0);
  void validate() const;
};

enum class HemisphereMode { Uniform, Random };

/// Uniform: n_heights rings at polar angles k*(pi/2)/n_heights, k = 1..n,
/// top ring first, each with n_azimuths evenly spaced positions. Random:
/// `count` positions uniform over the hemisphere surface. Every pose looks
/// at the center. Throws InvariantError when a pose would lie below z = 0.
std::vector<Pose5D> hemisphere_poses(const HemisphereSpec& spec, HemisphereMode mode,
                                     std::size_t count = 0, std::uint64_t seed = 0);

/// Everything a policy may know about the scene besides the observation.
struct PolicyContext {
  std::shared_ptr<const Bvh> bvh;  // for collision filtering; may be null
  ActionBox action_box;
  double collision_radius = 0.3;
  CameraIntrinsics intrinsics;
  HemisphereSpec hemisphere;

  static PolicyContext for_scene(const Scene& scene, const EnvConfig& config);
  bool collides(const Pose5D& pose) const;
};

/// Portable uniform double in [0, 1).
double uniform01(std::mt19937_64& rng);

class RandomPolicy : public Policy {
 public:
  static constexpr int kMaxTries = 100;
  RandomPolicy(PolicyContext ctx, std::uint64_t seed);
  std::optional<Pose5D> act(const PolicyObservation& obs) override;
  std::string name() const override { return "random"; }
  /// One collision-free sample; throws PolicyError after kMaxTries.
  Pose5D sample();

 private:
  PolicyContext ctx_;
  std::mt19937_64 rng_;
};

class RandomHemispherePolicy : public Policy {
 public:
  RandomHemispherePolicy(PolicyContext ctx, std::uint64_t seed);
  std::optional<Pose5D> act(const PolicyObservation& obs) override;
  std::string name() const override { return "random-hemisphere"; }

 private:
  PolicyContext ctx_;
  std::mt19937_64 rng_;
};

class FixedSequencePolicy : public Policy {
 public:
  explicit FixedSequencePolicy(std::vector<Pose5D> poses, std::string name = "fixed");
  std::optional<Pose5D> act(const PolicyObservation& obs) override;
  std::string name() const override { return name_; }
  std::size_t remaining() const { return poses_.size() - next_; }

 private:
  std::vector<Pose5D> poses_;
  std::size_t next_ = 0;
  std::string name_;
};

/// The uniform hemisphere sequence as a fixed-sequence policy.
std::unique_ptr<FixedSequencePolicy> make_uniform_hemisphere_policy(const PolicyContext& ctx);

/// Reads {"poses": [[x, y, z, pitch, yaw], ...]} or a bare array of 5-tuples.
std::vector<Pose5D> load_pose_sequence(const std::filesystem::path& path);

struct GreedyOptions {
  int candidates = 64;
};

/// Number of Unknown voxels (inside the action box) whose centers lie in the
/// candidate frustum and whose line of sight is not blocked by an Occupied
/// voxel.
std::size_t information_gain(const OccupancyGrid& grid, const Classification& cls,
                             const Pose5D& pose, const CameraIntrinsics& intr,
                             const ActionBox& region);

/// True when `point` lies inside the pinhole frustum of `pose`.
bool in_frustum(const Pose5D& pose, const CameraIntrinsics& intr, const Vec3& point);

class GreedyInfoGainPolicy : public Policy {
 public:
  GreedyInfoGainPolicy(PolicyContext ctx, std::uint64_t seed, GreedyOptions opts = {});
  std::optional<Pose5D> act(const PolicyObservation& obs) override;
  std::string name() const override { return "greedy-infogain"; }

  /// Candidate poses for the next decision (alternating hemisphere shell and
  /// action box), drawn from the policy's generator.
  std::vector<Pose5D> sample_candidates();
  /// Index of the best candidate (lowest index on ties), or nullopt when
  /// every score is zero. Colliding candidates are never selected.
  std::optional<std::size_t> select(const OccupancyGrid& grid, const Classification& cls,
                                    std::span<const Pose5D> candidates) const;

 private:
  PolicyContext ctx_;
  std::mt19937_64 rng_;
  GreedyOptions opts_;
  RandomPolicy fallback_;
};

/// Policy names: random, random-hemisphere, uniform-hemisphere,
/// greedy-infogain, fixed:<path-to-json>.
std::unique_ptr<Policy> make_policy(const std::string& name, const PolicyContext& ctx,
                                    std::uint64_t seed);

}  // namespace nbv

#endif  // NBV_POLICIES_HPP_
