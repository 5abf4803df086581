// Copyright 2026 The nbvsim Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef NBV_KDTREE_HPP_
#define NBV_KDTREE_HPP_

#include <cstdint>
#include <span>
#include <vector>

#include "nbv/geometry.hpp"

namespace nbv {

/// Static 3D kd-tree with exact nearest-neighbour queries.
class KdTree {
 public:
  explicit KdTree(std::vector<Vec3> points);

  struct Neighbor {
    std::uint32_t index = 0;
    double squared_distance = 0.0;
  };

  /// Exact nearest neighbour; ties resolve to the lowest point index.
  Neighbor nearest(const Vec3& query) const;
  std::size_t size() const { return points_.size(); }
  std::span<const Vec3> points() const { return points_; }

 private:
  struct Node {
    std::uint32_t begin = 0, end = 0;  // range in perm_
    std::uint32_t left = 0, right = 0; // child node ids; 0 = none (root is 0)
    int axis = -1;                     // -1 for leaves
    double split = 0.0;
  };
  std::uint32_t build(std::uint32_t begin, std::uint32_t end);
  void search(std::uint32_t node, const Vec3& q, Neighbor& best) const;

  std::vector<Vec3> points_;
  std::vector<std::uint32_t> perm_;
  std::vector<Node> nodes_;
};

}  // namespace nbv

#endif  // NBV_KDTREE_HPP_
