// Copyright 2026 The nbvsim Authors
// SPDX-License-Identifier: Apache-2.0
//
// Basic geometric types shared by every module: vectors, boxes, meshes,
// 5-DoF camera poses and pinhole intrinsics.
//
// World convention: +z is up. A pose with zero pitch and yaw looks along +x;
// the camera body frame is (forward, left, up), so the zero pose maps to the
// identity rotation.

#ifndef NBV_GEOMETRY_HPP_
#define NBV_GEOMETRY_HPP_

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace nbv {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Raised when a value violates a documented type invariant.
class InvariantError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Aabb {
  Vec3 min{Vec3::Constant(std::numeric_limits<double>::infinity())};
  Vec3 max{Vec3::Constant(-std::numeric_limits<double>::infinity())};

  Aabb() = default;
  Aabb(const Vec3& lo, const Vec3& hi) : min(lo), max(hi) {}

  void extend(const Vec3& p) {
    min = min.cwiseMin(p);
    max = max.cwiseMax(p);
  }
  void extend(const Aabb& b) {
    min = min.cwiseMin(b.min);
    max = max.cwiseMax(b.max);
  }
  bool empty() const { return (max.array() < min.array()).any(); }
  Vec3 extent() const { return max - min; }
  Vec3 center() const { return 0.5 * (min + max); }
  double volume() const { return empty() ? 0.0 : extent().prod(); }
  bool contains(const Vec3& p) const {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
  }
  /// Squared distance from p to the box (0 when inside).
  double squared_distance(const Vec3& p) const {
    const Vec3 d = (min - p).cwiseMax(Vec3::Zero()).cwiseMax(p - max);
    return d.squaredNorm();
  }
};

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<std::uint32_t, 3>> triangles;
  std::vector<Vec3> face_normals;  // optional; empty or one per triangle

  Aabb bounds() const;
  /// Throws InvariantError on out-of-range indices, non-finite coordinates,
  /// an empty mesh or a flat bounding box.
  void validate() const;
  /// Unit geometric normal of a triangle (right-hand winding).
  Vec3 triangle_normal(std::size_t tri) const;
  double triangle_area(std::size_t tri) const;
};

/// Uniformly rescales and recenters a mesh so that the bottom-center of its
/// bounding box sits at the origin and the largest extent/target ratio is 1.
TriangleMesh normalize_mesh(const TriangleMesh& mesh, const Vec3& target_extent);

/// Wraps an angle into [-pi, pi).
double wrap_angle(double a);

struct Pose5D {
  double x = 0, y = 0, z = 0;
  double pitch = 0;  // radians, positive looks up
  double yaw = 0;    // radians about +z

  Vec3 position() const { return {x, y, z}; }
  /// Returns a copy with yaw wrapped to [-pi, pi) and pitch clamped to
  /// [-pi/2, pi/2].
  Pose5D normalized() const;
  bool finite() const;
  bool operator==(const Pose5D&) const = default;
};

/// Axis-aligned region the camera may occupy.
struct ActionBox {
  Vec3 min{-10.0, -10.0, 0.0};
  Vec3 max{10.0, 10.0, 10.0};

  bool contains(const Vec3& p) const {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
  }
  Vec3 clamp(const Vec3& p) const { return p.cwiseMax(min).cwiseMin(max); }
  Vec3 center() const { return 0.5 * (min + max); }
  void validate() const;
};

/// Checks the Pose5D invariants against a box; throws InvariantError.
void validate_pose(const Pose5D& pose, const ActionBox& box);

struct CameraIntrinsics {
  int width = 400;
  int height = 400;
  double vertical_fov = std::numbers::pi / 2.0;
  double max_range = 40.0;

  void validate() const;
  /// Focal length in pixels (square pixels).
  double focal() const;
  /// Half-angle tangents of the frustum through the image borders.
  double tan_half_vertical() const { return std::tan(0.5 * vertical_fov); }
  double tan_half_horizontal() const {
    return tan_half_vertical() * static_cast<double>(width) / height;
  }
};

struct Ray {
  Vec3 origin{Vec3::Zero()};
  Vec3 direction{Vec3::UnitX()};
};

/// Rigid camera-to-world transform. Columns of `rotation` are the camera
/// forward, left and up axes expressed in world coordinates.
struct Frame {
  Mat3 rotation{Mat3::Identity()};
  Vec3 translation{Vec3::Zero()};

  Vec3 forward() const { return rotation.col(0); }
  Vec3 left() const { return rotation.col(1); }
  Vec3 up() const { return rotation.col(2); }
  Vec3 right() const { return -rotation.col(1); }
  Vec3 to_world(const Vec3& p_cam) const { return rotation * p_cam + translation; }
  Vec3 to_camera(const Vec3& p_world) const {
    return rotation.transpose() * (p_world - translation);
  }
};

/// Yaw about world-up, then pitch about the (horizontal) camera-right axis.
Frame pose_to_frame(const Pose5D& pose);

/// Inverse of pose_to_frame on the normalized pose domain. Yaw is read from
/// the left axis, which stays horizontal, so it is well defined at the
/// pitch = +-pi/2 endpoints.
Pose5D frame_to_pose(const Frame& frame);

/// Pose at `eye` whose forward axis points at `target`.
Pose5D look_at(const Vec3& eye, const Vec3& target);

}  // namespace nbv

#endif  // NBV_GEOMETRY_HPP_
