// Copyright 2026 The nbvsim Authors
// SPDX-License-Identifier: Apache-2.0

#include <fstream>
#include <numbers>
#include <random>

#include "doctest.h"
#include "nbv/bvh.hpp"
#include "nbv/occupancy.hpp"
#include "nbv/render.hpp"
#include "oracles.hpp"

using namespace nbv;

namespace {

constexpr double kPi = std::numbers::pi;

CameraIntrinsics intr(int w, int h, double fov_deg = 90.0, double range = 40.0) {
  CameraIntrinsics c;
  c.width = w;
  c.height = h;
  c.vertical_fov = fov_deg * kPi / 180.0;
  c.max_range = range;
  return c;
}

// Wall x = 5 plus a tiny tetrahedron far behind so the mesh has volume.
TriangleMesh wall_scene(double x0 = 5.0, double half = 50.0) {
  TriangleMesh m = oracle::wall_x(x0, half);
  m.vertices.push_back({-30, 0, 0});
  m.triangles.push_back({0, 1, 4});
  return m;
}

}  // namespace

TEST_SUITE("renderer") {

TEST_CASE("1x1 image casts one ray along the forward axis") {
  const auto rays = camera_rays({1, 2, 3, 0.3, -0.7}, intr(1, 1));
  REQUIRE(rays.size() == 1);
  CHECK((rays[0].direction - pose_to_frame({1, 2, 3, 0.3, -0.7}).forward()).norm() < 1e-15);
  CHECK((rays[0].origin - Vec3(1, 2, 3)).norm() == 0.0);
}

TEST_CASE("3x3 at 90 degrees: top-center pixel has vertical slope 2/3") {
  const auto rays = camera_rays({0, 0, 0, 0, 0}, intr(3, 3));
  REQUIRE(rays.size() == 9);
  const Vec3 d = rays[1].direction;  // row 0, col 1
  CHECK(d.z() / d.x() == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
  CHECK(std::abs(d.y()) < 1e-15);
  // Independent projection: pixel (r, c) center maps to normalized coords
  // ((c + 0.5) / w * 2 - 1, 1 - (r + 0.5) / h * 2) scaled by tan(fov/2).
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) {
      const double sx = ((c + 0.5) / 3.0 * 2.0 - 1.0) * std::tan(kPi / 4);
      const double sy = (1.0 - (r + 0.5) / 3.0 * 2.0) * std::tan(kPi / 4);
      const Vec3 expect = Vec3(1.0, -sx, sy).normalized();
      CHECK((rays[static_cast<std::size_t>(r * 3 + c)].direction - expect).norm() < 1e-14);
    }
}

TEST_CASE("camera rays are unit, span the vertical fov and rotate with yaw") {
  const auto c = intr(40, 30, 70.0);
  const auto a = camera_rays({0, 0, 0, 0.2, 0.0}, c);
  const auto b = camera_rays({0, 0, 0, 0.2, kPi - 1e-15}, c);
  REQUIRE(a.size() == 1200);
  Mat3 rz;
  rz << -1, 0, 0, 0, -1, 0, 0, 0, 1;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(std::abs(a[i].direction.norm() - 1.0) < 1e-9);
    CHECK((rz * a[i].direction - b[i].direction).norm() < 1e-12);
  }
  // Outermost pixel-center half angle approaches fov/2 as height grows.
  double prev_gap = kPi;
  for (int h : {3, 11, 101, 1001}) {
    const auto rays = camera_rays({0, 0, 0, 0, 0}, intr(1, h, 70.0));
    const double half = std::atan2(rays.front().direction.z(), rays.front().direction.x());
    const double gap = 35.0 * kPi / 180.0 - half;
    CHECK(gap > 0.0);
    CHECK(gap < prev_gap);
    prev_gap = gap;
  }
  CHECK(prev_gap < 1e-3);
}

TEST_CASE("render_depth: wall 5 m ahead") {
  const Bvh bvh(wall_scene());
  const auto d = render_depth(bvh, {0, 0, 0, 0, 0}, intr(3, 3));
  CHECK(d.at(1, 1) == doctest::Approx(5.0).epsilon(1e-14));
  const double corner = 5.0 * Vec3(2.0 / 3.0, 2.0 / 3.0, 1.0).norm();
  CHECK(corner == doctest::Approx(6.872).epsilon(1e-4));
  for (int r : {0, 2})
    for (int c : {0, 2}) CHECK(d.at(r, c) == doctest::Approx(corner).epsilon(1e-12));
  CHECK(d.depths.size() == 9);
}

TEST_CASE("render_depth: nothing in view gives the sentinel everywhere") {
  const Bvh behind(oracle::box_mesh({-31, -1, -1}, {-30, 1, 1}));
  const auto d = render_depth(behind, {0, 0, 0, 0, 0}, intr(16, 12));
  for (double v : d.depths) CHECK(v == kNoHit);
  const Bvh bvh(wall_scene());
  // Beyond max_range counts as no hit as well.
  const auto far = render_depth(bvh, {0, 0, 0, 0, 0}, intr(4, 4, 60.0, 4.9));
  for (double v : far.depths) CHECK(v == kNoHit);
}

TEST_CASE("render_depth equals per-pixel brute-force intersection and back-projects to its range") {
  const auto sphere = oracle::uv_sphere({6, 0.5, 1.0}, 2.0, 24, 32);
  const Bvh bvh(sphere);
  const Pose5D pose{0, 0, 1, 0.05, 0.08};
  const auto c = intr(48, 36, 60.0);
  const auto d = render_depth(bvh, pose, c);
  const auto rays = camera_rays(pose, c);
  std::size_t finite = 0;
  for (std::size_t i = 0; i < rays.size(); ++i) {
    const auto slow = oracle::brute_intersect(sphere, rays[i].origin, rays[i].direction, c.max_range);
    if (!slow) {
      CHECK(d.depths[i] == kNoHit);
      continue;
    }
    ++finite;
    CHECK(std::abs(d.depths[i] - slow->t) < 1e-6);
    CHECK(d.depths[i] > 0.0);
    CHECK(d.depths[i] <= c.max_range);
  }
  CHECK(finite > 100);
  const auto cloud = backproject(d);
  REQUIRE(cloud.points.size() == finite);
  std::size_t k = 0;
  for (double v : d.depths) {
    if (!std::isfinite(v)) continue;
    CHECK(std::abs((cloud.points[k++] - pose.position()).norm() - v) < 1e-6);
  }
  const auto again = render_depth(bvh, pose, c);
  CHECK(std::memcmp(again.depths.data(), d.depths.data(), d.depths.size() * sizeof(double)) == 0);
}

TEST_CASE("flat wall depth is continuous between neighbouring pixels") {
  const Bvh bvh(wall_scene());
  const auto d = render_depth(bvh, {0, 0, 0, 0.1, 0.2}, intr(64, 64));
  for (int r = 0; r < 64; ++r)
    for (int c = 0; c + 1 < 64; ++c) CHECK(std::abs(d.at(r, c) - d.at(r, c + 1)) < 1.0);
}

TEST_CASE("Lambert shading") {
  const Bvh bvh(wall_scene());
  Lighting head_on{{1, 0, 0}, 0.2};
  const auto g = render_gray(bvh, {0, 0, 0, 0, 0}, intr(5, 5), head_on);
  for (float v : g.intensities) CHECK(v == doctest::Approx(1.0));
  Lighting edge_on{{0, 1, 0}, 0.2};
  const auto e = render_gray(bvh, {0, 0, 0, 0, 0}, intr(5, 5), edge_on);
  for (float v : e.intensities) CHECK(v == doctest::Approx(0.2));
  const Bvh behind(oracle::box_mesh({-31, -1, -1}, {-30, 1, 1}));
  const auto miss = render_gray(behind, {0, 0, 0, 0, 0}, intr(5, 5), head_on);
  for (float v : miss.intensities) CHECK(v == 0.0f);
}

TEST_CASE("sphere shading decreases with the angle to the light") {
  const Vec3 center(6, 0, 0);
  const auto sphere = oracle::uv_sphere(center, 2.0, 64, 96);
  const Bvh bvh(sphere);
  const Lighting light{Vec3(1, 0.3, -0.4).normalized(), 0.2};
  const Pose5D pose{0, 0, 0, 0, 0};
  const auto c = intr(64, 64, 50.0);
  const auto view = render_view(bvh, pose, c, light);
  const auto rays = camera_rays(pose, c);
  struct S {
    double cosang;
    float value;
  };
  std::vector<S> samples;
  for (std::size_t i = 0; i < rays.size(); ++i) {
    const double t = view.depth.depths[i];
    if (!std::isfinite(t)) continue;
    const Vec3 n = (rays[i].origin + t * rays[i].direction - center).normalized();
    samples.push_back({n.dot(-light.direction), view.gray.intensities[i]});
    CHECK(view.gray.intensities[i] >= 0.0f);
    CHECK(view.gray.intensities[i] <= 1.0f);
  }
  REQUIRE(samples.size() > 500);
  std::size_t compared = 0;
  for (std::size_t i = 0; i < samples.size(); i += 7)
    for (std::size_t j = 0; j < samples.size(); j += 11) {
      if (samples[i].cosang > 0.0 && samples[i].cosang > samples[j].cosang + 0.15) {
        ++compared;
        CHECK(samples[i].value > samples[j].value);
      }
    }
  CHECK(compared > 100);
}

TEST_CASE("FrameStack keeps K+1 frames oldest first") {
  FrameStack s(2);
  for (int i = 0; i < 5; ++i) {
    GrayFrame f;
    f.pose.x = i;
    s.push(f);
    CHECK(s.size() <= 3);
  }
  REQUIRE(s.size() == 3);
  CHECK(s.frames()[0].pose.x == 2);
  CHECK(s.frames()[2].pose.x == 4);
}

TEST_CASE("depth PGM dump uses millimetres and 0 for no hit") {
  DepthMap d;
  d.width = 2;
  d.height = 1;
  d.depths = {1.2345, kNoHit};
  const auto dir = oracle::temp_dir("pgm");
  write_depth_pgm(d, dir / "d.pgm");
  std::ifstream in(dir / "d.pgm", std::ios::binary);
  std::string magic;
  int w, h, maxv;
  in >> magic >> w >> h >> maxv;
  in.get();
  unsigned char px[4];
  in.read(reinterpret_cast<char*>(px), 4);
  CHECK(magic == "P5");
  CHECK(maxv == 65535);
  CHECK((px[0] << 8 | px[1]) == 1235);  // big-endian, rounded
  CHECK((px[2] << 8 | px[3]) == 0);
}

}  // TEST_SUITE
