// Copyright 2026 The nbvsim Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include "doctest.h"
#include "nbv/mesh_io.hpp"
#include "nbv/policies.hpp"
#include "oracles.hpp"

using namespace nbv;

namespace {

constexpr double kPi = std::numbers::pi;

Vec3 forward_of(const Pose5D& p) {
  return {std::cos(p.pitch) * std::cos(p.yaw), std::cos(p.pitch) * std::sin(p.yaw), std::sin(p.pitch)};
}

PolicyContext cube_context() {
  PolicyContext ctx;
  ctx.bvh = std::make_shared<const Bvh>(oracle::aligned_cube());
  ctx.hemisphere.center = Vec3(2.5, 2.5, 1.0);
  return ctx;
}

// Projection test written from the pinhole definition.
bool sees(const Pose5D& pose, const CameraIntrinsics& intr, const Vec3& p) {
  const Vec3 f = forward_of(pose);
  const Vec3 l(-std::sin(pose.yaw), std::cos(pose.yaw), 0.0);
  const Vec3 u = f.cross(l);
  const Vec3 d = p - pose.position();
  const double z = d.dot(f);
  const double tv = std::tan(0.5 * intr.vertical_fov);
  const double th = tv * intr.width / intr.height;
  return z > 0.0 && std::abs(d.dot(l)) <= th * z && std::abs(d.dot(u)) <= tv * z;
}

}  // namespace

TEST_SUITE("policies") {

TEST_CASE("random policy: box coverage, statistics, determinism") {
  PolicyContext ctx = cube_context();
  RandomPolicy a(ctx, 0), b(ctx, 0), c(ctx, 1);
  PolicyObservation obs;
  Vec3 sum = Vec3::Zero();
  double pitch = 0.0, yaw = 0.0;
  const int n = 1000;
  bool differs = false;
  for (int i = 0; i < n; ++i) {
    const Pose5D p = *a.act(obs);
    const Pose5D q = *b.act(obs);
    differs |= !(c.act(obs) == p);
    CHECK(p == q);
    CHECK_NOTHROW(validate_pose(p, ctx.action_box));
    CHECK_FALSE(check_collision(*ctx.bvh, p.position(), 0.3));
    sum += p.position();
    pitch += p.pitch;
    yaw += p.yaw;
  }
  CHECK(differs);
  const Vec3 mean = sum / n;
  const Vec3 ext = ctx.action_box.max - ctx.action_box.min;
  const Vec3 center = ctx.action_box.center();
  for (int k = 0; k < 3; ++k) CHECK(std::abs(mean[k] - center[k]) < 0.05 * ext[k]);
  CHECK(std::abs(pitch / n) < 0.05 * kPi);
  CHECK(std::abs(yaw / n) < 0.05 * 2 * kPi);
}

TEST_CASE("random policy gives up inside a solid box") {
  PolicyContext ctx;
  ctx.bvh = std::make_shared<const Bvh>(oracle::box_mesh({-20, -20, -1}, {20, 20, 11}));
  RandomPolicy p(ctx, 0);
  CHECK_THROWS_AS(p.sample(), PolicyError);
}

TEST_CASE("uniform hemisphere: counts, radius and look-at") {
  HemisphereSpec spec;
  spec.center = Vec3(1.0, -2.0, 1.0);
  spec.radius = 9.0;
  for (auto [h, a] : {std::pair{5, 6}, std::pair{4, 5}}) {
    spec.n_heights = h;
    spec.n_azimuths = a;
    const auto poses = hemisphere_poses(spec, HemisphereMode::Uniform);
    REQUIRE(poses.size() == static_cast<std::size_t>(h * a));
    for (std::size_t i = 0; i < poses.size(); ++i) {
      const auto& p = poses[i];
      CHECK(std::abs((p.position() - spec.center).norm() - 9.0) < 1e-9);
      const Vec3 want = (spec.center - p.position()).normalized();
      CHECK(std::acos(std::clamp(forward_of(p).dot(want), -1.0, 1.0)) < 1e-6);
      CHECK(p.z >= spec.center.z() - 1e-9);
      // Ring k at polar angle k * (pi/2) / h, azimuths 2*pi*j/a.
      const int ring = static_cast<int>(i) / a + 1;
      const int j = static_cast<int>(i) % a;
      const Vec3 rel = p.position() - spec.center;
      CHECK(std::acos(std::clamp(rel.z() / 9.0, -1.0, 1.0)) == doctest::Approx(ring * kPi / 2 / h).epsilon(1e-12));
      if (std::hypot(rel.x(), rel.y()) > 1e-6) {
        double az = std::atan2(rel.y(), rel.x());
        if (az < -1e-12) az += 2 * kPi;
        CHECK(az == doctest::Approx(2 * kPi * j / a).epsilon(1e-12));
      }
    }
  }
  CHECK(hemisphere_poses(spec, HemisphereMode::Uniform) == hemisphere_poses(spec, HemisphereMode::Uniform));
  spec.center.z() = -0.5;
  CHECK_THROWS_AS(hemisphere_poses(spec, HemisphereMode::Uniform), InvariantError);
  spec.center.z() = 1.0;
  spec.radius = 0.0;
  CHECK_THROWS_AS(hemisphere_poses(spec, HemisphereMode::Uniform), InvariantError);
}

TEST_CASE("random hemisphere: on the shell, seeded, roughly area-uniform") {
  HemisphereSpec spec;
  const auto a = hemisphere_poses(spec, HemisphereMode::Random, 4000, 7);
  const auto b = hemisphere_poses(spec, HemisphereMode::Random, 4000, 7);
  CHECK(a == b);
  REQUIRE(a.size() == 4000);
  double mean_height = 0.0;
  for (const auto& p : a) {
    CHECK(std::abs((p.position() - spec.center).norm() - spec.radius) < 1e-9);
    mean_height += (p.z - spec.center.z()) / spec.radius;
  }
  // Uniform on the hemisphere surface: cos(polar) is uniform on [0, 1].
  CHECK(mean_height / 4000 == doctest::Approx(0.5).epsilon(0.03));

  PolicyContext ctx = cube_context();
  RandomHemispherePolicy p(ctx, 3), q(ctx, 3);
  PolicyObservation obs;
  for (int i = 0; i < 50; ++i) {
    const auto x = *p.act(obs);
    CHECK(x == *q.act(obs));
    CHECK_FALSE(ctx.collides(x));
  }
}

TEST_CASE("fixed sequence is exhausted after its poses") {
  std::vector<Pose5D> poses(30);
  for (int i = 0; i < 30; ++i) poses[static_cast<std::size_t>(i)].x = i;
  FixedSequencePolicy p(poses);
  PolicyObservation obs;
  for (int i = 0; i < 30; ++i) CHECK(p.act(obs)->x == i);
  CHECK_FALSE(p.act(obs).has_value());
  CHECK(p.remaining() == 0);
}

TEST_CASE("load_pose_sequence formats and errors") {
  const auto dir = oracle::temp_dir("poses");
  std::ofstream(dir / "a.json") << R"({"poses": [[1, 2, 3, 0.1, -0.2], [0, 0, 1, 0, 0]]})";
  std::ofstream(dir / "b.json") << R"([[1, 2, 3, 0.1, -0.2]])";
  std::ofstream(dir / "c.json") << R"([[1, 2, 3]])";
  std::ofstream(dir / "d.json") << R"({"poses": [)";
  const auto a = load_pose_sequence(dir / "a.json");
  REQUIRE(a.size() == 2);
  CHECK(a[0].position() == Vec3(1, 2, 3));
  CHECK(a[0].pitch == doctest::Approx(0.1).epsilon(1e-14));
  CHECK(a[0].yaw == doctest::Approx(-0.2).epsilon(1e-14));
  CHECK(load_pose_sequence(dir / "b.json").size() == 1);
  CHECK_THROWS_AS(load_pose_sequence(dir / "c.json"), ParseError);
  CHECK_THROWS_AS(load_pose_sequence(dir / "d.json"), ParseError);
  CHECK_THROWS_AS(load_pose_sequence(dir / "missing.json"), FileNotFoundError);
  PolicyContext ctx;
  auto fixed = make_policy("fixed:" + (dir / "a.json").string(), ctx, 0);
  CHECK(fixed->name() == "fixed");
  CHECK_THROWS_AS(make_policy("teleport", ctx, 0), InvariantError);
}

TEST_CASE("in_frustum matches the pinhole definition") {
  CameraIntrinsics intr;
  intr.width = 160;
  intr.height = 90;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-10, 10), a(-1.5, 1.5), y(-kPi, kPi);
  for (int i = 0; i < 5000; ++i) {
    const Pose5D pose{u(rng), u(rng), u(rng), a(rng), y(rng)};
    const Vec3 p(u(rng), u(rng), u(rng));
    CHECK(in_frustum(pose, intr, p) == sees(pose, intr, p));
  }
}

TEST_CASE("greedy: fully classified grid scores zero and falls back to random") {
  PolicyContext ctx = cube_context();
  OccupancyGrid grid{GridConfig{}};
  std::fill(grid.log_odds.begin(), grid.log_odds.end(), -5.0f);
  const auto cls = classify(grid);
  GreedyInfoGainPolicy g(ctx, 4);
  const auto cands = g.sample_candidates();
  CHECK(cands.size() == 64);
  CHECK_FALSE(g.select(grid, cls, cands).has_value());
  for (const auto& c : cands) CHECK(information_gain(grid, cls, c, ctx.intrinsics, ctx.action_box) == 0);

  EpisodeState st;
  st.grid = grid;
  Classification scratch;
  GreedyInfoGainPolicy h(ctx, 4);
  const Pose5D chosen = *h.act(make_observation(st, scratch));
  RandomPolicy twin(ctx, 4 ^ 0x9e3779b97f4a7c15ULL);
  CHECK(chosen == twin.sample());
}

TEST_CASE("greedy: single unknown cluster ends up in the chosen frustum") {
  PolicyContext ctx = cube_context();
  OccupancyGrid grid{GridConfig{}};
  std::fill(grid.log_odds.begin(), grid.log_odds.end(), -5.0f);
  Vec3 centroid = Vec3::Zero();
  int n = 0;
  for (int i = 3; i < 6; ++i)
    for (int j = 14; j < 17; ++j)
      for (int k = 1; k < 4; ++k) {
        grid.log_odds[grid.config.linear({i, j, k})] = 0.0f;
        centroid += grid.config.center({i, j, k});
        ++n;
      }
  centroid /= n;
  const auto cls = classify(grid);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    GreedyInfoGainPolicy g(ctx, seed);
    const auto cands = g.sample_candidates();
    const auto k = g.select(grid, cls, cands);
    if (!k) continue;  // no candidate saw the cluster
    CHECK(sees(cands[*k], ctx.intrinsics, centroid));
    CHECK_FALSE(ctx.collides(cands[*k]));
    for (const auto& c : cands) {
      if (ctx.collides(c)) continue;
      CHECK(information_gain(grid, cls, c, ctx.intrinsics, ctx.action_box) <=
            information_gain(grid, cls, cands[*k], ctx.intrinsics, ctx.action_box));
    }
  }
}

TEST_CASE("greedy: occupied voxels occlude") {
  PolicyContext ctx;
  OccupancyGrid grid{GridConfig{}};
  std::fill(grid.log_odds.begin(), grid.log_odds.end(), -5.0f);
  grid.log_odds[grid.config.linear({15, 10, 5})] = 0.0f;
  const auto cls0 = classify(grid);
  const Pose5D pose{-9.5, 0.5, 5.5, 0.0, 0.0};
  CHECK(information_gain(grid, cls0, pose, ctx.intrinsics, ctx.action_box) == 1);
  grid.log_odds[grid.config.linear({8, 10, 5})] = 5.0f;
  const auto cls1 = classify(grid);
  CHECK(information_gain(grid, cls1, pose, ctx.intrinsics, ctx.action_box) == 0);
}

TEST_CASE("greedy: equal scores pick candidate 0 and colliding candidates are skipped") {
  PolicyContext ctx = cube_context();
  OccupancyGrid grid{GridConfig{}};
  std::fill(grid.log_odds.begin(), grid.log_odds.end(), -5.0f);
  grid.log_odds[grid.config.linear({15, 10, 5})] = 0.0f;
  const auto cls = classify(grid);
  GreedyInfoGainPolicy g(ctx, 0);
  const std::vector<Pose5D> same(5, Pose5D{-9.5, 0.5, 5.5, 0.0, 0.0});
  CHECK(g.select(grid, cls, same) == 0u);
  // Inside the cube is a collision even though it sees the voxel.
  const std::vector<Pose5D> with_inside = {Pose5D{2.5, 2.5, 2.5, 0.0, 0.0},
                                           Pose5D{-9.5, 0.5, 5.5, 0.0, 0.0}};
  CHECK(g.select(grid, cls, with_inside) == 1u);
}

}  // TEST_SUITE
