// Copyright 2026 The nbvsim Authors
// SPDX-License-Identifier: Apache-2.0

#include "nbv/bvh.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

namespace nbv {

namespace {

constexpr int kBins = 16;
constexpr int kSahDepth = 64;

double surface_area(const Aabb& b) {
  if (b.empty()) return 0.0;
  const Vec3 e = b.extent();
  return 2.0 * (e.x() * e.y() + e.y() * e.z() + e.z() * e.x());
}

// Slab test; returns entry distance or nullopt.
inline std::optional<double> hit_box(const Aabb& box, const Vec3& origin, const Vec3& inv_dir,
                                     double t_max) {
  double t0 = 0.0, t1 = t_max;
  for (int a = 0; a < 3; ++a) {
    double tn = (box.min[a] - origin[a]) * inv_dir[a];
    double tf = (box.max[a] - origin[a]) * inv_dir[a];
    if (tn > tf) std::swap(tn, tf);
    // NaN (0 * inf) means the origin lies on the slab plane of a parallel ray;
    // treat as not constraining.
    if (!std::isnan(tn)) t0 = std::max(t0, tn);
    if (!std::isnan(tf)) t1 = std::min(t1, tf);
    if (t0 > t1) return std::nullopt;
  }
  return t0;
}

}  // namespace

std::optional<double> intersect_triangle(const Vec3& v0, const Vec3& v1, const Vec3& v2,
                                         const Ray& ray) {
  const Vec3 e1 = v1 - v0;
  const Vec3 e2 = v2 - v0;
  const Vec3 p = ray.direction.cross(e2);
  const double det = e1.dot(p);
  if (std::abs(det) < 1e-15) return std::nullopt;
  const double inv = 1.0 / det;
  const Vec3 s = ray.origin - v0;
  const double u = s.dot(p) * inv;
  if (u < 0.0 || u > 1.0) return std::nullopt;
  const Vec3 q = s.cross(e1);
  const double v = ray.direction.dot(q) * inv;
  if (v < 0.0 || u + v > 1.0) return std::nullopt;
  const double t = e2.dot(q) * inv;
  if (t <= kRayEpsilon) return std::nullopt;
  return t;
}

Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  // Voronoi-region walk (Ericson, Real-Time Collision Detection 5.1.5).
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return a;
  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return b;
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return a + ab * (d1 / (d1 - d3));
  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return c;
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return a + ac * (d2 / (d2 - d6));
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
  }
  const double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

Bvh::Bvh(TriangleMesh mesh) : mesh_(std::move(mesh)) {
  mesh_.validate();
  const auto n = static_cast<std::uint32_t>(mesh_.triangles.size());
  std::vector<Aabb> boxes(n);
  std::vector<Vec3> centroids(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    for (auto idx : mesh_.triangles[i]) boxes[i].extend(mesh_.vertices[idx]);
    centroids[i] = boxes[i].center();
  }
  order_.resize(n);
  std::iota(order_.begin(), order_.end(), 0u);
  nodes_.reserve(2 * n);
  build(0, n, boxes, centroids, 0);

  v0_.resize(n);
  e1_.resize(n);
  e2_.resize(n);
  normal_.resize(n);
  for (std::uint32_t k = 0; k < n; ++k) {
    const auto& t = mesh_.triangles[order_[k]];
    v0_[k] = mesh_.vertices[t[0]];
    e1_[k] = mesh_.vertices[t[1]] - v0_[k];
    e2_[k] = mesh_.vertices[t[2]] - v0_[k];
    normal_[k] = mesh_.face_normals.empty() ? mesh_.triangle_normal(order_[k])
                                            : Vec3(mesh_.face_normals[order_[k]].normalized());
  }
}

std::uint32_t Bvh::build(std::uint32_t begin, std::uint32_t end, std::vector<Aabb>& boxes,
                         std::vector<Vec3>& centroids, int depth) {
  const auto index = static_cast<std::uint32_t>(nodes_.size());
  nodes_.emplace_back();
  Aabb box, cbox;
  for (std::uint32_t i = begin; i < end; ++i) {
    box.extend(boxes[order_[i]]);
    cbox.extend(centroids[order_[i]]);
  }
  nodes_[index].box = box;
  const std::uint32_t count = end - begin;

  auto make_leaf = [&]() {
    nodes_[index].first = begin;
    nodes_[index].count = count;
    return index;
  };
  if (count <= kMaxLeafSize) return make_leaf();

  // Binned SAH over all three axes.
  int best_axis = -1;
  int best_bin = -1;
  double best_cost = static_cast<double>(count) * surface_area(box);
  const Vec3 cext = cbox.extent();
  // Past kSahDepth only median splits are used, which bounds the depth by
  // kSahDepth + log2(n) and keeps the fixed traversal stack sufficient.
  for (int axis = 0; axis < 3 && depth < kSahDepth; ++axis) {
    if (!(cext[axis] > 0.0)) continue;
    std::array<Aabb, kBins> bin_box{};
    std::array<std::uint32_t, kBins> bin_count{};
    const double scale = kBins / cext[axis];
    for (std::uint32_t i = begin; i < end; ++i) {
      const auto t = order_[i];
      int b = static_cast<int>((centroids[t][axis] - cbox.min[axis]) * scale);
      b = std::clamp(b, 0, kBins - 1);
      bin_box[b].extend(boxes[t]);
      ++bin_count[b];
    }
    std::array<double, kBins - 1> left_area{}, right_area{};
    std::array<std::uint32_t, kBins - 1> left_count{}, right_count{};
    Aabb acc;
    std::uint32_t c = 0;
    for (int b = 0; b < kBins - 1; ++b) {
      acc.extend(bin_box[b]);
      c += bin_count[b];
      left_area[b] = surface_area(acc);
      left_count[b] = c;
    }
    acc = Aabb();
    c = 0;
    for (int b = kBins - 1; b > 0; --b) {
      acc.extend(bin_box[b]);
      c += bin_count[b];
      right_area[b - 1] = surface_area(acc);
      right_count[b - 1] = c;
    }
    for (int b = 0; b < kBins - 1; ++b) {
      if (left_count[b] == 0 || right_count[b] == 0) continue;
      const double cost = left_count[b] * left_area[b] + right_count[b] * right_area[b];
      if (cost < best_cost) {
        best_cost = cost;
        best_axis = axis;
        best_bin = b;
      }
    }
  }

  std::uint32_t mid;
  if (best_axis >= 0) {
    const double scale = kBins / cext[best_axis];
    auto it = std::partition(order_.begin() + begin, order_.begin() + end, [&](std::uint32_t t) {
      int b = static_cast<int>((centroids[t][best_axis] - cbox.min[best_axis]) * scale);
      return std::clamp(b, 0, kBins - 1) <= best_bin;
    });
    mid = static_cast<std::uint32_t>(it - order_.begin());
  } else {
    // SAH found nothing better than a leaf; fall back to a median split on
    // the widest centroid axis so leaves stay small.
    int axis = 0;
    cext.maxCoeff(&axis);
    if (!(cext[axis] > 0.0)) return make_leaf();
    mid = begin + count / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](std::uint32_t a, std::uint32_t b) {
                       if (centroids[a][axis] != centroids[b][axis]) {
                         return centroids[a][axis] < centroids[b][axis];
                       }
                       return a < b;
                     });
  }
  if (mid == begin || mid == end) return make_leaf();

  build(begin, mid, boxes, centroids, depth + 1);
  const std::uint32_t right = build(mid, end, boxes, centroids, depth + 1);
  nodes_[index].first = right;
  nodes_[index].count = 0;
  return index;
}

std::optional<Hit> Bvh::intersect(const Ray& ray, double t_max) const {
  const Vec3 inv(1.0 / ray.direction.x(), 1.0 / ray.direction.y(), 1.0 / ray.direction.z());
  double best_t = t_max;
  std::uint32_t best_k = 0;
  std::uint32_t best_id = std::numeric_limits<std::uint32_t>::max();
  bool found = false;

  std::array<std::uint32_t, 160> stack;
  int sp = 0;
  stack[sp++] = 0;
  while (sp > 0) {
    const Node& node = nodes_[stack[--sp]];
    const double limit = found ? best_t + kTieEpsilon : best_t;
    if (!hit_box(node.box, ray.origin, inv, limit)) continue;
    if (node.leaf()) {
      for (std::uint32_t k = node.first; k < node.first + node.count; ++k) {
        const Vec3 p = ray.direction.cross(e2_[k]);
        const double det = e1_[k].dot(p);
        if (std::abs(det) < 1e-15) continue;
        const double inv_det = 1.0 / det;
        const Vec3 s = ray.origin - v0_[k];
        const double u = s.dot(p) * inv_det;
        if (u < 0.0 || u > 1.0) continue;
        const Vec3 q = s.cross(e1_[k]);
        const double v = ray.direction.dot(q) * inv_det;
        if (v < 0.0 || u + v > 1.0) continue;
        const double t = e2_[k].dot(q) * inv_det;
        if (t <= kRayEpsilon || t > t_max) continue;
        const std::uint32_t id = order_[k];
        const bool closer = !found || t < best_t - kTieEpsilon;
        const bool tie = found && std::abs(t - best_t) <= kTieEpsilon && id < best_id;
        if (closer || tie) {
          best_t = closer ? t : std::min(t, best_t);
          best_k = k;
          best_id = id;
          found = true;
        }
      }
    } else {
      // Visit the nearer child first.
      const std::uint32_t left = static_cast<std::uint32_t>(&node - nodes_.data()) + 1;
      const std::uint32_t right = node.first;
      const auto tl = hit_box(nodes_[left].box, ray.origin, inv, best_t + kTieEpsilon);
      const auto tr = hit_box(nodes_[right].box, ray.origin, inv, best_t + kTieEpsilon);
      if (tl && tr) {
        if (*tl <= *tr) {
          stack[sp++] = right;
          stack[sp++] = left;
        } else {
          stack[sp++] = left;
          stack[sp++] = right;
        }
      } else if (tl) {
        stack[sp++] = left;
      } else if (tr) {
        stack[sp++] = right;
      }
    }
  }
  if (!found) return std::nullopt;
  Hit hit;
  hit.distance = best_t;
  hit.triangle = best_id;
  hit.normal = normal_[best_k];
  if (hit.normal.dot(ray.direction) > 0.0) hit.normal = -hit.normal;
  return hit;
}

std::size_t Bvh::count_hits(const Ray& ray) const {
  const Vec3 inv(1.0 / ray.direction.x(), 1.0 / ray.direction.y(), 1.0 / ray.direction.z());
  std::size_t hits = 0;
  std::vector<std::uint32_t> stack{0};
  while (!stack.empty()) {
    const std::uint32_t ni = stack.back();
    stack.pop_back();
    const Node& node = nodes_[ni];
    if (!hit_box(node.box, ray.origin, inv, std::numeric_limits<double>::infinity())) continue;
    if (node.leaf()) {
      for (std::uint32_t k = node.first; k < node.first + node.count; ++k) {
        if (intersect_triangle(v0_[k], v0_[k] + e1_[k], v0_[k] + e2_[k], ray)) ++hits;
      }
    } else {
      stack.push_back(ni + 1);
      stack.push_back(node.first);
    }
  }
  return hits;
}

double Bvh::closest_distance(const Vec3& p) const {
  double best_sq = std::numeric_limits<double>::infinity();
  std::vector<std::pair<double, std::uint32_t>> stack{{nodes_[0].box.squared_distance(p), 0}};
  while (!stack.empty()) {
    const auto [d_sq, ni] = stack.back();
    stack.pop_back();
    if (d_sq >= best_sq) continue;
    const Node& node = nodes_[ni];
    if (node.leaf()) {
      for (std::uint32_t k = node.first; k < node.first + node.count; ++k) {
        const Vec3 c = closest_point_on_triangle(p, v0_[k], v0_[k] + e1_[k], v0_[k] + e2_[k]);
        best_sq = std::min(best_sq, (c - p).squaredNorm());
      }
    } else {
      const std::uint32_t l = ni + 1, r = node.first;
      const double dl = nodes_[l].box.squared_distance(p);
      const double dr = nodes_[r].box.squared_distance(p);
      // Push the farther child first so the nearer one is popped next.
      if (dl <= dr) {
        stack.emplace_back(dr, r);
        stack.emplace_back(dl, l);
      } else {
        stack.emplace_back(dl, l);
        stack.emplace_back(dr, r);
      }
    }
  }
  return std::sqrt(best_sq);
}

}  // namespace nbv
