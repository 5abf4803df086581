// Copyright 2026 The nbvsim Authors
// SPDX-License-Identifier: Apache-2.0
//
// Bounding volume hierarchy over a triangle mesh. Used for depth rendering
// (nearest hit), collision checks (closest-point distance) and inside tests
// (hit counting).

#ifndef NBV_BVH_HPP_
#define NBV_BVH_HPP_

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "nbv/geometry.hpp"

namespace nbv {

/// Hits closer than this are ignored (self-intersection guard).
inline constexpr double kRayEpsilon = 1e-6;
/// Hits whose distances differ by at most this much are ties; the lower
/// triangle id wins.
inline constexpr double kTieEpsilon = 1e-9;

struct Hit {
  double distance = 0.0;
  std::uint32_t triangle = 0;
  Vec3 normal{Vec3::UnitZ()};  // unit, facing the ray origin
};

/// Moller-Trumbore with inclusive edges. Returns t when the ray meets the
/// triangle at t > kRayEpsilon.
std::optional<double> intersect_triangle(const Vec3& v0, const Vec3& v1, const Vec3& v2,
                                         const Ray& ray);

/// Closest point on triangle (v0, v1, v2) to p.
Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& v0, const Vec3& v1, const Vec3& v2);

class Bvh {
 public:
  struct Node {
    Aabb box;
    std::uint32_t first = 0;  // leaf: offset into order(); inner: right child
    std::uint32_t count = 0;  // leaf triangle count; 0 for inner nodes
    bool leaf() const { return count > 0; }
  };

  static constexpr std::uint32_t kMaxLeafSize = 4;

  /// Validates the mesh and builds the hierarchy (binned SAH).
  explicit Bvh(TriangleMesh mesh);

  std::optional<Hit> intersect(const Ray& ray,
                               double t_max = std::numeric_limits<double>::infinity()) const;
  /// Number of triangle crossings along the ray (for parity inside tests).
  std::size_t count_hits(const Ray& ray) const;
  /// Unsigned distance from p to the closest point on the surface.
  double closest_distance(const Vec3& p) const;

  const TriangleMesh& mesh() const { return mesh_; }
  std::span<const Node> nodes() const { return nodes_; }
  /// Triangle ids in leaf order.
  std::span<const std::uint32_t> order() const { return order_; }
  Aabb bounds() const { return nodes_.front().box; }

 private:
  std::uint32_t build(std::uint32_t begin, std::uint32_t end, std::vector<Aabb>& tri_boxes,
                      std::vector<Vec3>& centroids, int depth);

  TriangleMesh mesh_;
  std::vector<Node> nodes_;
  std::vector<std::uint32_t> order_;
  // Per-triangle data in leaf order.
  std::vector<Vec3> v0_, e1_, e2_, normal_;
};

}  // namespace nbv

#endif  // NBV_BVH_HPP_
