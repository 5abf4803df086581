// Copyright 2026 The nbvsim Authors
// SPDX-License-Identifier: Apache-2.0

#include "nbv/kdtree.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

namespace nbv {

namespace {
constexpr std::uint32_t kLeafSize = 8;
}

KdTree::KdTree(std::vector<Vec3> points) : points_(std::move(points)) {
  if (points_.empty()) throw InvariantError("kd-tree needs at least one point");
  perm_.resize(points_.size());
  std::iota(perm_.begin(), perm_.end(), 0u);
  nodes_.reserve(2 * points_.size() / kLeafSize + 2);
  build(0, static_cast<std::uint32_t>(points_.size()));
}

std::uint32_t KdTree::build(std::uint32_t begin, std::uint32_t end) {
  const auto id = static_cast<std::uint32_t>(nodes_.size());
  nodes_.push_back({begin, end, 0, 0, -1, 0.0});
  if (end - begin <= kLeafSize) return id;

  Aabb box;
  for (std::uint32_t i = begin; i < end; ++i) box.extend(points_[perm_[i]]);
  int axis = 0;
  const double spread = box.extent().maxCoeff(&axis);
  if (!(spread > 0.0)) return id;  // all points coincide

  const std::uint32_t mid = begin + (end - begin) / 2;
  std::nth_element(perm_.begin() + begin, perm_.begin() + mid, perm_.begin() + end,
                   [&](std::uint32_t a, std::uint32_t b) {
                     if (points_[a][axis] != points_[b][axis]) {
                       return points_[a][axis] < points_[b][axis];
                     }
                     return a < b;
                   });
  const double split = points_[perm_[mid]][axis];
  const std::uint32_t left = build(begin, mid);
  const std::uint32_t right = build(mid, end);
  nodes_[id].axis = axis;
  nodes_[id].split = split;
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

KdTree::Neighbor KdTree::nearest(const Vec3& q) const {
  Neighbor best{std::numeric_limits<std::uint32_t>::max(),
                std::numeric_limits<double>::infinity()};
  search(0, q, best);
  return best;
}

void KdTree::search(std::uint32_t id, const Vec3& q, Neighbor& best) const {
  const Node& n = nodes_[id];
  if (n.axis < 0) {
    for (std::uint32_t i = n.begin; i < n.end; ++i) {
      const std::uint32_t p = perm_[i];
      const double d = (points_[p] - q).squaredNorm();
      if (d < best.squared_distance || (d == best.squared_distance && p < best.index)) {
        best = {p, d};
      }
    }
    return;
  }
  // Left holds coordinates <= split, right holds coordinates >= split.
  const double diff = q[n.axis] - n.split;
  const std::uint32_t near = diff <= 0.0 ? n.left : n.right;
  const std::uint32_t far = diff <= 0.0 ? n.right : n.left;
  search(near, q, best);
  // <= keeps equal-distance candidates reachable for the index tie-break.
  if (diff * diff <= best.squared_distance) search(far, q, best);
}

}  // namespace nbv
