// Copyright 2026 The nbvsim Authors
// SPDX-License-Identifier: Apache-2.0

#include "nbv/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace nbv {

namespace {

std::string vec_str(const Vec3& v) {
  std::ostringstream os;
  os << "(" << v.x() << ", " << v.y() << ", " << v.z() << ")";
  return os.str();
}

}  // namespace

Aabb TriangleMesh::bounds() const {
  Aabb box;
  for (const auto& v : vertices) box.extend(v);
  return box;
}

void TriangleMesh::validate() const {
  if (vertices.empty() || triangles.empty()) {
    throw InvariantError("mesh has no vertices or no triangles");
  }
  for (std::size_t i = 0; i < vertices.size(); ++i) {
    if (!vertices[i].allFinite()) {
      throw InvariantError("vertex " + std::to_string(i) + " is not finite");
    }
  }
  const auto n = static_cast<std::uint32_t>(vertices.size());
  for (std::size_t t = 0; t < triangles.size(); ++t) {
    for (auto idx : triangles[t]) {
      if (idx >= n) {
        throw InvariantError("triangle " + std::to_string(t) + " references vertex " +
                             std::to_string(idx) + " but mesh has " + std::to_string(n));
      }
    }
  }
  if (!face_normals.empty() && face_normals.size() != triangles.size()) {
    throw InvariantError("face normal count does not match triangle count");
  }
  if (!(bounds().volume() > 0.0)) {
    throw InvariantError("mesh bounding box has zero volume");
  }
}

Vec3 TriangleMesh::triangle_normal(std::size_t tri) const {
  const auto& t = triangles[tri];
  const Vec3 n = (vertices[t[1]] - vertices[t[0]]).cross(vertices[t[2]] - vertices[t[0]]);
  const double len = n.norm();
  return len > 0.0 ? Vec3(n / len) : Vec3::UnitZ();
}

double TriangleMesh::triangle_area(std::size_t tri) const {
  const auto& t = triangles[tri];
  return 0.5 * (vertices[t[1]] - vertices[t[0]]).cross(vertices[t[2]] - vertices[t[0]]).norm();
}

TriangleMesh normalize_mesh(const TriangleMesh& mesh, const Vec3& target_extent) {
  if (!(target_extent.array() > 0.0).all() || !target_extent.allFinite()) {
    throw InvariantError("target extent must be positive, got " + vec_str(target_extent));
  }
  const Aabb box = mesh.bounds();
  const Vec3 ext = box.extent();
  if (box.empty() || !(ext.array() > 0.0).all()) {
    throw InvariantError("degenerate bounding box " + vec_str(ext));
  }
  const double scale = 1.0 / (ext.array() / target_extent.array()).maxCoeff();
  const Vec3 anchor(0.5 * (box.min.x() + box.max.x()), 0.5 * (box.min.y() + box.max.y()),
                    box.min.z());

  TriangleMesh out = mesh;
  for (auto& v : out.vertices) v = (v - anchor) * scale;
  return out;
}

double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double w = std::fmod(a + std::numbers::pi, two_pi);
  if (w < 0.0) w += two_pi;
  w -= std::numbers::pi;
  // fmod can round up to exactly +pi.
  if (w >= std::numbers::pi) w -= two_pi;
  return w;
}

Pose5D Pose5D::normalized() const {
  Pose5D p = *this;
  p.pitch = std::clamp(pitch, -std::numbers::pi / 2.0, std::numbers::pi / 2.0);
  p.yaw = wrap_angle(yaw);
  return p;
}

bool Pose5D::finite() const {
  return std::isfinite(x) && std::isfinite(y) && std::isfinite(z) && std::isfinite(pitch) &&
         std::isfinite(yaw);
}

void ActionBox::validate() const {
  if (!min.allFinite() || !max.allFinite() || !((max - min).array() > 0.0).all()) {
    throw InvariantError("action box must have positive volume");
  }
}

void validate_pose(const Pose5D& pose, const ActionBox& box) {
  if (!pose.finite()) throw InvariantError("pose has non-finite components");
  if (!box.contains(pose.position())) {
    throw InvariantError("pose position " + vec_str(pose.position()) + " outside action box");
  }
  if (pose.pitch < -std::numbers::pi / 2.0 || pose.pitch > std::numbers::pi / 2.0) {
    throw InvariantError("pitch outside [-pi/2, pi/2]");
  }
  if (pose.yaw < -std::numbers::pi || pose.yaw >= std::numbers::pi) {
    throw InvariantError("yaw outside [-pi, pi)");
  }
}

void CameraIntrinsics::validate() const {
  if (width < 1 || height < 1) throw InvariantError("image size must be at least 1x1");
  if (!(vertical_fov > 0.0 && vertical_fov < std::numbers::pi)) {
    throw InvariantError("vertical fov must lie in (0, pi)");
  }
  if (!(max_range > 0.0)) throw InvariantError("max range must be positive");
}

double CameraIntrinsics::focal() const { return 0.5 * height / tan_half_vertical(); }

Frame pose_to_frame(const Pose5D& pose) {
  const double cp = std::cos(pose.pitch), sp = std::sin(pose.pitch);
  const double cy = std::cos(pose.yaw), sy = std::sin(pose.yaw);
  Frame f;
  // R = Rz(yaw) * Ry(-pitch)
  f.rotation.col(0) = Vec3(cp * cy, cp * sy, sp);
  f.rotation.col(1) = Vec3(-sy, cy, 0.0);
  f.rotation.col(2) = Vec3(-sp * cy, -sp * sy, cp);
  f.translation = pose.position();
  return f;
}

Pose5D frame_to_pose(const Frame& frame) {
  const Vec3 fwd = frame.forward();
  const Vec3 left = frame.left();
  Pose5D p;
  p.x = frame.translation.x();
  p.y = frame.translation.y();
  p.z = frame.translation.z();
  // asin loses precision near +-1; atan2 against the horizontal norm does not.
  p.pitch = std::atan2(fwd.z(), std::hypot(fwd.x(), fwd.y()));
  p.yaw = wrap_angle(std::atan2(-left.x(), left.y()));
  return p;
}

Pose5D look_at(const Vec3& eye, const Vec3& target) {
  const Vec3 d = target - eye;
  Pose5D p;
  p.x = eye.x();
  p.y = eye.y();
  p.z = eye.z();
  const double horiz = std::hypot(d.x(), d.y());
  p.pitch = std::atan2(d.z(), horiz);
  p.yaw = horiz > 0.0 ? wrap_angle(std::atan2(d.y(), d.x())) : 0.0;
  return p;
}

}  // namespace nbv
