// Copyright 2026 The nbvsim Authors
// SPDX-License-Identifier: Apache-2.0

#include "nbv/policies.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "json.hpp"
#include "nbv/mesh_io.hpp"

namespace nbv {

namespace {

constexpr double kPi = std::numbers::pi;

Vec3 hemisphere_point(const HemisphereSpec& spec, double polar, double azimuth) {
  const double s = std::sin(polar);
  return spec.center + spec.radius * Vec3(s * std::cos(azimuth), s * std::sin(azimuth),
                                          std::cos(polar));
}

// Polar angle of a uniform-area sample on the upper hemisphere.
double random_polar(std::mt19937_64& rng) { return std::acos(1.0 - uniform01(rng)); }

}  // namespace

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

PolicyObservation make_observation(const EpisodeState& state, Classification& scratch) {
  scratch = classify(state.grid);
  PolicyObservation obs;
  obs.poses = state.poses;
  obs.grid = &state.grid;
  obs.classification = &scratch;
  obs.coverage = state.coverage.empty() ? 0.0 : state.coverage.back();
  obs.frames = &state.frames;
  obs.step = state.step;
  return obs;
}

HemisphereSpec HemisphereSpec::for_scene(const Aabb& scene_bounds, const ActionBox& box,
                                         double radius) {
  HemisphereSpec spec;
  spec.radius = radius;
  const Vec3 c = scene_bounds.center();
  const double z = std::max(std::min(c.z(), box.max.z() - radius), scene_bounds.min.z());
  spec.center = Vec3(c.x(), c.y(), z);
  return spec;
}

void HemisphereSpec::validate() const {
  if (!(radius > 0.0) || !std::isfinite(radius)) throw InvariantError("hemisphere radius must be positive");
  if (!center.allFinite()) throw InvariantError("hemisphere center must be finite");
  if (n_heights < 1 || n_azimuths < 1) throw InvariantError("hemisphere needs at least one ring and azimuth");
}

std::vector<Pose5D> hemisphere_poses(const HemisphereSpec& spec, HemisphereMode mode,
                                     std::size_t count, std::uint64_t seed) {
  spec.validate();
  if (spec.center.z() < 0.0) {
    throw InvariantError("hemisphere center below ground places poses under z = 0");
  }
  std::vector<Pose5D> poses;
  if (mode == HemisphereMode::Uniform) {
    for (int k = 1; k <= spec.n_heights; ++k) {
      const double polar = k * (kPi / 2.0) / spec.n_heights;
      for (int j = 0; j < spec.n_azimuths; ++j) {
        const double azimuth = 2.0 * kPi * j / spec.n_azimuths;
        poses.push_back(look_at(hemisphere_point(spec, polar, azimuth), spec.center));
      }
    }
    return poses;
  }
  std::mt19937_64 rng(seed);
  poses.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double polar = random_polar(rng);
    const double azimuth = 2.0 * kPi * uniform01(rng);
    poses.push_back(look_at(hemisphere_point(spec, polar, azimuth), spec.center));
  }
  return poses;
}

PolicyContext PolicyContext::for_scene(const Scene& scene, const EnvConfig& config) {
  PolicyContext ctx;
  ctx.bvh = scene.bvh;
  ctx.action_box = config.action_box;
  ctx.collision_radius = config.collision_radius;
  ctx.intrinsics = config.intrinsics;
  ctx.hemisphere = HemisphereSpec::for_scene(scene.bvh->bounds(), config.action_box);
  return ctx;
}

bool PolicyContext::collides(const Pose5D& pose) const {
  return bvh && check_collision(*bvh, pose.position(), collision_radius);
}

RandomPolicy::RandomPolicy(PolicyContext ctx, std::uint64_t seed)
    : ctx_(std::move(ctx)), rng_(seed) {
  ctx_.action_box.validate();
}

Pose5D RandomPolicy::sample() {
  const Vec3 lo = ctx_.action_box.min;
  const Vec3 ext = ctx_.action_box.max - lo;
  for (int attempt = 0; attempt < kMaxTries; ++attempt) {
    Pose5D p;
    p.x = lo.x() + ext.x() * uniform01(rng_);
    p.y = lo.y() + ext.y() * uniform01(rng_);
    p.z = lo.z() + ext.z() * uniform01(rng_);
    p.pitch = -kPi / 2.0 + kPi * uniform01(rng_);
    p.yaw = -kPi + 2.0 * kPi * uniform01(rng_);
    if (!ctx_.collides(p)) return p;
  }
  throw PolicyError("random policy found no collision-free pose in " +
                    std::to_string(kMaxTries) + " tries");
}

std::optional<Pose5D> RandomPolicy::act(const PolicyObservation&) { return sample(); }

RandomHemispherePolicy::RandomHemispherePolicy(PolicyContext ctx, std::uint64_t seed)
    : ctx_(std::move(ctx)), rng_(seed) {
  ctx_.hemisphere.validate();
}

std::optional<Pose5D> RandomHemispherePolicy::act(const PolicyObservation&) {
  const auto& h = ctx_.hemisphere;
  for (int attempt = 0; attempt < RandomPolicy::kMaxTries; ++attempt) {
    const double polar = random_polar(rng_);
    const double azimuth = 2.0 * kPi * uniform01(rng_);
    const Pose5D p = look_at(hemisphere_point(h, polar, azimuth), h.center);
    if (!ctx_.collides(p)) return p;
  }
  throw PolicyError("random hemisphere policy found no collision-free pose");
}

FixedSequencePolicy::FixedSequencePolicy(std::vector<Pose5D> poses, std::string name)
    : poses_(std::move(poses)), name_(std::move(name)) {}

std::optional<Pose5D> FixedSequencePolicy::act(const PolicyObservation&) {
  if (next_ >= poses_.size()) return std::nullopt;
  return poses_[next_++];
}

std::unique_ptr<FixedSequencePolicy> make_uniform_hemisphere_policy(const PolicyContext& ctx) {
  return std::make_unique<FixedSequencePolicy>(
      hemisphere_poses(ctx.hemisphere, HemisphereMode::Uniform), "uniform-hemisphere");
}

std::vector<Pose5D> load_pose_sequence(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FileNotFoundError(path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string(), 0, e.what());
  }
  const nlohmann::json& list = doc.is_object() ? doc.at("poses") : doc;
  if (!list.is_array()) throw ParseError(path.string(), 0, "expected an array of poses");
  std::vector<Pose5D> poses;
  for (const auto& item : list) {
    if (!item.is_array() || item.size() != 5) {
      throw ParseError(path.string(), 0, "each pose must be [x, y, z, pitch, yaw]");
    }
    Pose5D p{item[0].get<double>(), item[1].get<double>(), item[2].get<double>(),
             item[3].get<double>(), item[4].get<double>()};
    if (!p.finite()) throw ParseError(path.string(), 0, "pose has non-finite components");
    poses.push_back(p.normalized());
  }
  return poses;
}

bool in_frustum(const Pose5D& pose, const CameraIntrinsics& intr, const Vec3& point) {
  const Frame f = pose_to_frame(pose);
  const Vec3 d = point - f.translation;
  const double fwd = d.dot(f.forward());
  if (!(fwd > 0.0)) return false;
  return std::abs(d.dot(f.left())) <= fwd * intr.tan_half_horizontal() &&
         std::abs(d.dot(f.up())) <= fwd * intr.tan_half_vertical();
}

namespace {

std::vector<std::size_t> unknown_in_region(const OccupancyGrid& grid, const Classification& cls,
                                           const ActionBox& region) {
  std::vector<std::size_t> out;
  const auto& cfg = grid.config;
  for (std::size_t i = 0; i < cls.states.size(); ++i) {
    if (cls.states[i] != VoxelState::Unknown) continue;
    if (region.contains(cfg.center(cfg.unlinear(i)))) out.push_back(i);
  }
  return out;
}

std::size_t score_pose(const GridConfig& cfg, const Classification& cls,
                       std::span<const std::size_t> unknown, const Pose5D& pose,
                       const CameraIntrinsics& intr) {
  const Vec3 eye = pose.position();
  const double r2 = intr.max_range * intr.max_range;
  std::size_t score = 0;
  for (const std::size_t i : unknown) {
    const Vec3 c = cfg.center(cfg.unlinear(i));
    if ((c - eye).squaredNorm() > r2 || !in_frustum(pose, intr, c)) continue;
    bool blocked = false;
    walk_segment(cfg, eye, c, [&](const VoxelIndex& v) {
      const std::size_t l = cfg.linear(v);
      if (l == i) return false;
      if (cls.states[l] == VoxelState::Occupied) {
        blocked = true;
        return false;
      }
      return true;
    });
    if (!blocked) ++score;
  }
  return score;
}

}  // namespace

std::size_t information_gain(const OccupancyGrid& grid, const Classification& cls,
                             const Pose5D& pose, const CameraIntrinsics& intr,
                             const ActionBox& region) {
  const auto unknown = unknown_in_region(grid, cls, region);
  return score_pose(grid.config, cls, unknown, pose, intr);
}

GreedyInfoGainPolicy::GreedyInfoGainPolicy(PolicyContext ctx, std::uint64_t seed,
                                           GreedyOptions opts)
    : ctx_(std::move(ctx)),
      rng_(seed),
      opts_(opts),
      fallback_(ctx_, seed ^ 0x9e3779b97f4a7c15ULL) {
  if (opts_.candidates < 1) throw InvariantError("greedy planner needs at least one candidate");
  ctx_.hemisphere.validate();
}

std::vector<Pose5D> GreedyInfoGainPolicy::sample_candidates() {
  const auto& h = ctx_.hemisphere;
  const Vec3 lo = ctx_.action_box.min;
  const Vec3 ext = ctx_.action_box.max - lo;
  std::vector<Pose5D> out;
  out.reserve(static_cast<std::size_t>(opts_.candidates));
  while (out.size() < static_cast<std::size_t>(opts_.candidates)) {
    if (out.size() % 2 == 0) {
      const double polar = random_polar(rng_);
      const double azimuth = 2.0 * kPi * uniform01(rng_);
      out.push_back(look_at(hemisphere_point(h, polar, azimuth), h.center));
      continue;
    }
    const Vec3 eye(lo.x() + ext.x() * uniform01(rng_), lo.y() + ext.y() * uniform01(rng_),
                   lo.z() + ext.z() * uniform01(rng_));
    const Vec3 target = h.center + Vec3(6.0 * uniform01(rng_) - 3.0, 6.0 * uniform01(rng_) - 3.0,
                                        4.0 * uniform01(rng_));
    if ((target - eye).norm() < 1e-3) continue;
    out.push_back(look_at(eye, target));
  }
  return out;
}

std::optional<std::size_t> GreedyInfoGainPolicy::select(const OccupancyGrid& grid,
                                                        const Classification& cls,
                                                        std::span<const Pose5D> candidates) const {
  const auto unknown = unknown_in_region(grid, cls, ctx_.action_box);
  std::optional<std::size_t> best;
  std::size_t best_score = 0;
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    if (ctx_.collides(candidates[k])) continue;
    const std::size_t s = score_pose(grid.config, cls, unknown, candidates[k], ctx_.intrinsics);
    if (s > best_score) {
      best_score = s;
      best = k;
    }
  }
  return best;
}

std::optional<Pose5D> GreedyInfoGainPolicy::act(const PolicyObservation& obs) {
  const auto candidates = sample_candidates();
  if (obs.grid && obs.classification) {
    if (auto k = select(*obs.grid, *obs.classification, candidates)) return candidates[*k];
  }
  return fallback_.sample();
}

std::unique_ptr<Policy> make_policy(const std::string& name, const PolicyContext& ctx,
                                    std::uint64_t seed) {
  if (name == "random") return std::make_unique<RandomPolicy>(ctx, seed);
  if (name == "random-hemisphere") return std::make_unique<RandomHemispherePolicy>(ctx, seed);
  if (name == "uniform-hemisphere") return make_uniform_hemisphere_policy(ctx);
  if (name == "greedy-infogain") return std::make_unique<GreedyInfoGainPolicy>(ctx, seed);
  if (name.starts_with("fixed:")) {
    const std::string path = name.substr(6);
    return std::make_unique<FixedSequencePolicy>(load_pose_sequence(path), "fixed");
  }
  throw InvariantError("unknown policy '" + name +
                       "' (expected random, random-hemisphere, uniform-hemisphere, "
                       "greedy-infogain or fixed:<path>)");
}

}  // namespace nbv
