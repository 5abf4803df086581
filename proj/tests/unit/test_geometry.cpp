// Copyright 2026 The nbvsim Authors
// SPDX-License-Identifier: Apache-2.0

#include <fstream>
#include <numbers>
#include <random>

#include "doctest.h"
#include "nbv/bvh.hpp"
#include "nbv/geometry.hpp"
#include "nbv/mesh_io.hpp"
#include "oracles.hpp"

using namespace nbv;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = std::numbers::pi;

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

const char* kCubeObj =
    "# unit cube\n"
    "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 1 1 0\nv 0 0 1\nv 1 0 1\nv 0 1 1\nv 1 1 1\n"
    "f 1 3 2\nf 2 3 4\nf 5 6 7\nf 6 8 7\nf 1 2 5\nf 2 6 5\n"
    "f 3 7 4\nf 4 7 8\nf 1 5 3\nf 3 5 7\nf 2 4 6\nf 4 8 6\n";

Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Vec3 v(n(rng), n(rng), n(rng));
  return v.normalized();
}

}  // namespace

TEST_SUITE("core-geometry") {

TEST_CASE("load_mesh reads an OBJ cube") {
  const auto dir = oracle::temp_dir("obj_cube");
  write_file(dir / "cube.obj", kCubeObj);
  const auto m = load_mesh(dir / "cube.obj");
  CHECK(m.vertices.size() == 8);
  CHECK(m.triangles.size() == 12);
}

TEST_CASE("PLY of the same cube has the same counts (ascii and binary)") {
  const auto dir = oracle::temp_dir("ply_cube");
  write_file(dir / "cube.obj", kCubeObj);
  const auto obj = load_mesh(dir / "cube.obj");
  save_ply(obj, dir / "cube.ply");
  const auto ply = load_mesh(dir / "cube.ply");
  CHECK(ply.vertices.size() == 8);
  CHECK(ply.triangles.size() == 12);
  for (std::size_t i = 0; i < 8; ++i) CHECK((ply.vertices[i] - obj.vertices[i]).norm() < 1e-6);

  std::string ascii =
      "ply\nformat ascii 1.0\nelement vertex 8\nproperty float x\nproperty float y\nproperty float z\n"
      "element face 6\nproperty list uchar int vertex_indices\nend_header\n";
  for (const auto& v : obj.vertices) {
    ascii += std::to_string(v.x()) + " " + std::to_string(v.y()) + " " + std::to_string(v.z()) + "\n";
  }
  ascii += "4 0 2 3 1\n4 4 5 7 6\n4 0 1 5 4\n4 2 6 7 3\n4 0 4 6 2\n4 1 3 7 5\n";
  write_file(dir / "quads.ply", ascii);
  const auto quads = load_mesh(dir / "quads.ply");
  CHECK(quads.vertices.size() == 8);
  CHECK(quads.triangles.size() == 12);
}

TEST_CASE("OBJ index out of range is a parse error with its line") {
  const auto dir = oracle::temp_dir("obj_bad");
  write_file(dir / "bad.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 1 1 0\nv 0 0 1\nv 1 0 1\nv 0 1 1\nv 1 1 1\nf 1 2 9\n");
  try {
    load_mesh(dir / "bad.obj");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 9);
  }
}

TEST_CASE("load_mesh error kinds") {
  const auto dir = oracle::temp_dir("obj_errors");
  CHECK_THROWS_AS(load_mesh(dir / "missing.obj"), FileNotFoundError);
  write_file(dir / "empty.obj", "# nothing\n");
  CHECK_THROWS_AS(load_mesh(dir / "empty.obj"), EmptyMeshError);
  write_file(dir / "junk.obj", "v 0 0 zero\n");
  CHECK_THROWS_AS(load_mesh(dir / "junk.obj"), ParseError);
  write_file(dir / "tex.obj", "mtllib a.mtl\nv 0 0 0\nv 1 0 0\nv 0 1 1\nvt 0 0\nvn 0 0 1\nusemtl x\nf 1/1/1 2/1/1 3/1/1\n");
  CHECK(load_mesh(dir / "tex.obj").triangles.size() == 1);
  write_file(dir / "neg.obj", "v 0 0 0\nv 1 0 0\nv 0 1 1\nf -3 -2 -1\n");
  CHECK(load_mesh(dir / "neg.obj").triangles[0] == std::array<std::uint32_t, 3>{0, 1, 2});
}

TEST_CASE("TriangleMesh invariants") {
  auto m = oracle::box_mesh({0, 0, 0}, {1, 1, 1});
  CHECK_NOTHROW(m.validate());
  auto bad = m;
  bad.triangles[0][1] = 8;
  CHECK_THROWS_AS(bad.validate(), InvariantError);
  bad = m;
  bad.vertices[0].x() = std::nan("");
  CHECK_THROWS_AS(bad.validate(), InvariantError);
  CHECK_THROWS_AS(oracle::wall_x(1.0, 1.0).validate(), InvariantError);  // flat bbox
}

TEST_CASE("normalize_mesh scales the unit cube to 8 m and sits it on the ground") {
  const auto m = normalize_mesh(oracle::box_mesh({0, 0, 0}, {1, 1, 1}), {15, 15, 8});
  const Aabb b = m.bounds();
  CHECK(b.extent().x() == doctest::Approx(8.0));
  CHECK(b.extent().y() == doctest::Approx(8.0));
  CHECK(b.extent().z() == doctest::Approx(8.0));
  CHECK(b.min.z() == doctest::Approx(0.0));
  CHECK(b.center().x() == doctest::Approx(0.0));
  CHECK(b.center().y() == doctest::Approx(0.0));
  CHECK_THROWS_AS(normalize_mesh(m, {0, 1, 1}), InvariantError);
}

TEST_CASE("normalize_mesh is idempotent") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-7, 13);
  TriangleMesh m = oracle::uv_sphere({u(rng), u(rng), u(rng)}, 2.5, 7, 11);
  for (auto& v : m.vertices) v = Vec3(v.x() * 1.7, v.y(), v.z() * 0.6);
  const auto once = normalize_mesh(m, {15, 15, 8});
  const auto twice = normalize_mesh(once, {15, 15, 8});
  double worst = 0.0;
  for (std::size_t i = 0; i < once.vertices.size(); ++i) {
    worst = std::max(worst, (once.vertices[i] - twice.vertices[i]).norm());
  }
  CHECK(worst <= 1e-9);
  const Vec3 ext = once.bounds().extent();
  CHECK((ext.array() / Vec3(15, 15, 8).array()).maxCoeff() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("pose_to_frame examples") {
  const Frame id = pose_to_frame({0, 0, 0, 0, 0});
  CHECK((id.rotation - Mat3::Identity()).norm() < 1e-15);
  CHECK(id.translation.norm() == 0.0);

  const Frame yawed = pose_to_frame({0, 0, 0, 0, kPi / 2});
  CHECK((yawed.forward() - Vec3(0, 1, 0)).norm() < 1e-12);
  CHECK(std::abs(yawed.up().z() - 1.0) < 1e-12);

  const Frame down = pose_to_frame({0, 0, 0, -kPi / 2, 0});
  CHECK((down.forward() - Vec3(0, 0, -1)).norm() < 1e-12);
  CHECK((down.right() - id.right()).norm() < 1e-12);
}

TEST_CASE("pose_to_frame is a roll-free rotation and round-trips") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> pitch(-kPi / 2 + 1e-6, kPi / 2 - 1e-6), yaw(-kPi, kPi), pos(-10, 10);
  for (int i = 0; i < 2000; ++i) {
    const Pose5D p{pos(rng), pos(rng), pos(rng), pitch(rng), yaw(rng)};
    const Frame f = pose_to_frame(p);
    CHECK((f.rotation.transpose() * f.rotation - Mat3::Identity()).norm() < 1e-12);
    CHECK(f.rotation.determinant() == doctest::Approx(1.0));
    CHECK(std::abs(f.right().z()) < 1e-15);
    // Independent construction: yaw about +z of the pitched forward axis.
    const Vec3 fwd(std::cos(p.pitch) * std::cos(p.yaw), std::cos(p.pitch) * std::sin(p.yaw), std::sin(p.pitch));
    CHECK((f.forward() - fwd).norm() < 1e-12);
    const Pose5D back = frame_to_pose(f);
    CHECK(std::abs(back.pitch - p.pitch) < 1e-9);
    CHECK(std::abs(wrap_angle(back.yaw - p.yaw)) < 1e-9);
    CHECK((back.position() - p.position()).norm() == 0.0);
  }
}

TEST_CASE("Pose5D invariants and look_at") {
  ActionBox box;
  CHECK_NOTHROW(validate_pose({0, 0, 5, 0, 0}, box));
  CHECK_THROWS_AS(validate_pose({0, 0, 11, 0, 0}, box), InvariantError);
  CHECK_THROWS_AS(validate_pose({0, 0, 5, 2.0, 0}, box), InvariantError);
  CHECK_THROWS_AS(validate_pose({0, 0, 5, 0, kPi}, box), InvariantError);
  CHECK(wrap_angle(kPi) == doctest::Approx(-kPi));
  CHECK(wrap_angle(3 * kPi / 2) == doctest::Approx(-kPi / 2));
  const Pose5D n = Pose5D{0, 0, 0, 3.0, 7.0}.normalized();
  CHECK(n.pitch == doctest::Approx(kPi / 2));
  CHECK(n.yaw >= -kPi);
  CHECK(n.yaw < kPi);

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-8, 8);
  for (int i = 0; i < 500; ++i) {
    const Vec3 eye(u(rng), u(rng), u(rng)), target(u(rng), u(rng), u(rng));
    const Frame f = pose_to_frame(look_at(eye, target));
    const double ang = std::acos(std::clamp(f.forward().dot((target - eye).normalized()), -1.0, 1.0));
    CHECK(ang < 1e-6);
  }
}

TEST_CASE("CameraIntrinsics invariants") {
  CameraIntrinsics c;
  CHECK_NOTHROW(c.validate());
  c.width = 0;
  CHECK_THROWS_AS(c.validate(), InvariantError);
  c = {};
  c.vertical_fov = kPi;
  CHECK_THROWS_AS(c.validate(), InvariantError);
  c = {};
  c.max_range = 0;
  CHECK_THROWS_AS(c.validate(), InvariantError);
}

TEST_CASE("ray_intersect examples") {
  TriangleMesh plane;
  plane.vertices = {{-100, -100, 5}, {100, -100, 5}, {100, 100, 5}, {-100, 100, 5}};
  plane.triangles = {{0, 1, 2}, {0, 2, 3}};
  plane.vertices.push_back({0, 0, 6});  // give the bbox volume
  plane.triangles.push_back({0, 1, 4});
  const Bvh bvh(plane);
  const auto hit = bvh.intersect({{0, 0, 0}, {0, 0, 1}});
  REQUIRE(hit);
  CHECK(hit->distance == doctest::Approx(5.0));
  CHECK(std::abs(hit->normal.norm() - 1.0) < 1e-12);
  CHECK(hit->normal.z() < 0.0);  // faces the origin
  CHECK_FALSE(bvh.intersect({{0, 0, 0}, {0, 0, -1}}));
}

TEST_CASE("ray along a shared cube edge reports one hit from the lower triangle") {
  const auto cube = oracle::box_mesh({0, 0, 0}, {1, 1, 1});
  const Bvh bvh(cube);
  // Diagonal of the bottom face: shared by triangles 0 and 1.
  const Vec3 origin(0.25, 0.75, -2.0);
  const auto hit = bvh.intersect({origin, Vec3(0, 0, 1)});
  REQUIRE(hit);
  CHECK(hit->distance == doctest::Approx(2.0));
  std::vector<std::uint32_t> candidates;
  for (std::uint32_t t = 0; t < cube.triangles.size(); ++t) {
    const auto& tr = cube.triangles[t];
    const auto h = oracle::ray_triangle(origin, {0, 0, 1}, cube.vertices[tr[0]], cube.vertices[tr[1]], cube.vertices[tr[2]]);
    if (h && std::abs(*h - 2.0) < 1e-9) candidates.push_back(t);
  }
  REQUIRE(candidates.size() == 2);
  CHECK(hit->triangle == std::min(candidates[0], candidates[1]));
}

TEST_CASE("single triangle BVH is one leaf") {
  TriangleMesh m;
  m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 1}};
  m.triangles = {{0, 1, 2}};
  const Bvh bvh(m);
  REQUIRE(bvh.nodes().size() == 1);
  CHECK(bvh.nodes()[0].leaf());
}

TEST_CASE("BVH nearest hits match brute force") {
  std::mt19937_64 rng(21);
  const auto check_mesh = [&](const TriangleMesh& m, int rays, double spread) {
    const Bvh bvh(m);
    std::uniform_real_distribution<double> u(-spread, spread);
    int hits = 0;
    for (int i = 0; i < rays; ++i) {
      const Vec3 o(u(rng), u(rng), u(rng));
      const Vec3 d = random_unit(rng);
      const auto fast = bvh.intersect({o, d});
      const auto slow = oracle::brute_intersect(m, o, d);
      REQUIRE(fast.has_value() == slow.has_value());
      if (fast) {
        ++hits;
        CHECK(std::abs(fast->distance - slow->t) <= 1e-6);
        CHECK(fast->triangle == slow->tri);
      }
    }
    return hits;
  };
  SUBCASE("cube, 1000 rays") { CHECK(check_mesh(oracle::box_mesh({-1, -1, -1}, {1, 1, 1}), 1000, 3.0) > 50); }
  SUBCASE("10k-triangle sphere, 100 rays aimed near it") {
    const auto sphere = oracle::uv_sphere({0.3, -0.2, 0.1}, 2.0, 71, 72);
    REQUIRE(sphere.triangles.size() >= 10000);
    const Bvh bvh(sphere);
    std::uniform_real_distribution<double> u(-6, 6), t(-1.5, 1.5);
    for (int i = 0; i < 100; ++i) {
      const Vec3 o(u(rng), u(rng), u(rng));
      const Vec3 d = (Vec3(t(rng), t(rng), t(rng)) - o).normalized();
      const auto fast = bvh.intersect({o, d});
      const auto slow = oracle::brute_intersect(sphere, o, d);
      REQUIRE(fast.has_value() == slow.has_value());
      if (fast) {
        CHECK(std::abs(fast->distance - slow->t) <= 1e-6);
        CHECK(fast->triangle == slow->tri);
      }
    }
  }
}

TEST_CASE("BVH leaves contain their triangles") {
  const auto sphere = oracle::uv_sphere({0, 0, 0}, 3.0, 20, 24);
  const Bvh bvh(sphere);
  std::vector<int> seen(sphere.triangles.size(), 0);
  for (const auto& node : bvh.nodes()) {
    if (!node.leaf()) continue;
    for (std::uint32_t k = 0; k < node.count; ++k) {
      const auto tri = bvh.order()[node.first + k];
      ++seen[tri];
      for (auto vi : bvh.mesh().triangles[tri]) {
        const Vec3& v = bvh.mesh().vertices[vi];
        CHECK(((v.array() >= node.box.min.array() - 1e-12).all() && (v.array() <= node.box.max.array() + 1e-12).all()));
      }
    }
  }
  CHECK(std::all_of(seen.begin(), seen.end(), [](int s) { return s == 1; }));
}

TEST_CASE("closest_distance matches a brute-force point-triangle search") {
  const auto sphere = oracle::uv_sphere({0, 0, 0}, 2.0, 12, 16);
  const Bvh bvh(sphere);
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-4, 4);
  for (int i = 0; i < 200; ++i) {
    const Vec3 p(u(rng), u(rng), u(rng));
    double best = std::numeric_limits<double>::infinity();
    // Dense barycentric sampling bounds the true distance from above.
    for (const auto& t : sphere.triangles) {
      const Vec3 &a = sphere.vertices[t[0]], &b = sphere.vertices[t[1]], &c = sphere.vertices[t[2]];
      for (int s = 0; s <= 20; ++s)
        for (int r = 0; r + s <= 20; ++r) {
          const Vec3 q = a + (b - a) * (s / 20.0) + (c - a) * (r / 20.0);
          best = std::min(best, (q - p).norm());
        }
    }
    const double d = bvh.closest_distance(p);
    CHECK(d <= best + 1e-12);
    CHECK(d >= best - 0.05);
  }
}

}  // TEST_SUITE
