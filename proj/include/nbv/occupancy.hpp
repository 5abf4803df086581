// Copyright 2026 The nbvsim Authors
// SPDX-License-Identifier: Apache-2.0
//
// Probabilistic occupancy grid: back-projection of depth maps, exact voxel
// traversal, additive log-odds fusion, three-state classification and
// surface coverage.
//
// Every camera ray is one measurement. Each voxel the ray passes through
// receives the miss constant once; the voxel holding the ray endpoint
// receives only the hit constant. Values are clamped after every update.

#ifndef NBV_OCCUPANCY_HPP_
#define NBV_OCCUPANCY_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <type_traits>
#include <vector>

#include "nbv/geometry.hpp"
#include "nbv/render.hpp"

namespace nbv {

enum class VoxelState : std::uint8_t { Unknown = 0, Free = 1, Occupied = 2 };

const char* to_string(VoxelState s);

struct VoxelIndex {
  int x = 0, y = 0, z = 0;
  auto operator<=>(const VoxelIndex&) const = default;
};

inline constexpr int kMaxGridDim = 128;

struct GridConfig {
  Vec3 origin{-10.0, -10.0, 0.0};
  double voxel_size = 1.0;
  std::array<int, 3> dims{20, 20, 20};
  float log_odds_hit = 2.0f;    // C1
  float log_odds_miss = -0.1f;  // C2
  float occupied_threshold = 0.5f;
  float free_threshold = -0.5f;
  float clamp_min = -10.0f;
  float clamp_max = 10.0f;
  // Pixels without a return carve free space up to max_range when set.
  bool clear_no_return = true;

  /// Cubic voxels anchored at the box min corner, sized so the grid spans
  /// the largest box extent.
  static GridConfig over_box(const ActionBox& box, std::array<int, 3> dims = {20, 20, 20});

  void validate() const;
  /// |C1 / C2|
  double hit_miss_ratio() const { return std::abs(log_odds_hit / log_odds_miss); }
  /// Keeps C2 and sets C1 = ratio * |C2|.
  void set_hit_miss_ratio(double ratio);

  std::size_t voxel_count() const {
    return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  }
  Aabb bounds() const;
  bool contains(const VoxelIndex& v) const {
    return v.x >= 0 && v.y >= 0 && v.z >= 0 && v.x < dims[0] && v.y < dims[1] && v.z < dims[2];
  }
  /// Voxel containing p (floor), not bounds-checked.
  VoxelIndex index_of(const Vec3& p) const;
  /// Voxel containing p, or nullopt when p is outside the grid. Points on the
  /// upper faces map to the last layer.
  std::optional<VoxelIndex> locate(const Vec3& p) const;
  Vec3 center(const VoxelIndex& v) const;
  Aabb voxel_box(const VoxelIndex& v) const;
  /// x-fastest linear index.
  std::size_t linear(const VoxelIndex& v) const {
    return static_cast<std::size_t>(v.x) +
           static_cast<std::size_t>(dims[0]) *
               (static_cast<std::size_t>(v.y) + static_cast<std::size_t>(dims[1]) * v.z);
  }
  VoxelIndex unlinear(std::size_t i) const;
  VoxelState classify(float log_odds) const;

  bool same_geometry(const GridConfig& o) const {
    return origin == o.origin && voxel_size == o.voxel_size && dims == o.dims;
  }
  /// These fusion constants on the lattice (origin, voxel size, dims) of `o`.
  GridConfig on_lattice_of(const GridConfig& o) const {
    GridConfig g = *this;
    g.origin = o.origin;
    g.voxel_size = o.voxel_size;
    g.dims = o.dims;
    return g;
  }
};

struct OccupancyGrid {
  GridConfig config;
  std::vector<float> log_odds;

  OccupancyGrid() = default;
  explicit OccupancyGrid(GridConfig cfg);

  float at(const VoxelIndex& v) const { return log_odds[config.linear(v)]; }
  VoxelState state(const VoxelIndex& v) const { return config.classify(at(v)); }
  /// Adds delta to one voxel and clamps.
  void update(std::size_t linear_index, float delta);
};

struct PointCloud {
  std::vector<Vec3> points;
};

/// World-frame points for every finite-depth pixel.
PointCloud backproject(const DepthMap& depth);

/// Parametric range [t0, t1] within [0, 1] of segment a->b inside the box.
std::optional<std::pair<double, double>> clip_segment(const Aabb& box, const Vec3& a,
                                                      const Vec3& b);

/// Calls visit(voxel) for every voxel the segment start->end passes through
/// after clipping to the grid, start voxel first and end voxel last, as a
/// 6-connected sequence without duplicates. A visitor returning bool stops
/// the walk on false. Returns the number visited.
template <typename Visit>
std::size_t walk_segment(const GridConfig& config, const Vec3& start, const Vec3& end,
                         Visit&& visit);

std::vector<VoxelIndex> traverse_ray(const GridConfig& config, const Vec3& start,
                                     const Vec3& end);

struct IntegrationStats {
  std::size_t rays_cast = 0;
  std::size_t endpoint_voxels = 0;  // distinct voxels that received a hit update
};

/// Fuses one depth map into the grid (pixels in row-major order).
/// Throws InvariantError when the depth map is inconsistent or its pose is
/// not finite or absurdly far from the grid.
IntegrationStats integrate_depth(OccupancyGrid& grid, const DepthMap& depth);

struct Classification {
  std::vector<VoxelState> states;
  std::size_t unknown = 0;
  std::size_t free = 0;
  std::size_t occupied = 0;
};

Classification classify(const OccupancyGrid& grid);

/// Percentage of ground-truth voxels (linear indices) classified Occupied.
double coverage_ratio(const OccupancyGrid& grid, std::span<const std::uint32_t> gt);

/// ASCII PLY with the centers of Occupied voxels.
void write_occupied_ply(const OccupancyGrid& grid, const std::filesystem::path& path);

/// Binary dump: 32-byte header ("NBVGRID1", 3 x u16 dims, u16 reserved,
/// f32 voxel_size, 3 x f32 origin) followed by nx*ny*nz little-endian f32
/// log-odds, x fastest.
void write_grid_dump(const OccupancyGrid& grid, const std::filesystem::path& path);
/// Reads a dump; fusion constants and thresholds come from `defaults`.
OccupancyGrid read_grid_dump(const std::filesystem::path& path, const GridConfig& defaults = {});

// Amanatides-Woo traversal. The number of steps per axis is fixed up front
// from the start and end voxels, so the walk always terminates in the end
// voxel even when floating point disagrees with the boundary crossings. On
// exact edge/corner crossings the lowest axis steps first.
template <typename Visit>
std::size_t walk_segment(const GridConfig& config, const Vec3& start, const Vec3& end,
                         Visit&& visit) {
  const auto range = clip_segment(config.bounds(), start, end);
  if (!range) return 0;
  const Vec3 seg = end - start;
  const Vec3 p0 = start + range->first * seg;
  const Vec3 p1 = start + range->second * seg;

  auto clamp_index = [&](const Vec3& p) {
    VoxelIndex v = config.index_of(p);
    v.x = std::clamp(v.x, 0, config.dims[0] - 1);
    v.y = std::clamp(v.y, 0, config.dims[1] - 1);
    v.z = std::clamp(v.z, 0, config.dims[2] - 1);
    return v;
  };
  VoxelIndex cur = clamp_index(p0);
  const VoxelIndex last = clamp_index(p1);

  std::array<int, 3> c{cur.x, cur.y, cur.z};
  const std::array<int, 3> e{last.x, last.y, last.z};
  std::array<int, 3> step{}, remaining{};
  std::array<double, 3> t_max{}, t_delta{};
  const Vec3 d = p1 - p0;
  for (int a = 0; a < 3; ++a) {
    step[a] = e[a] > c[a] ? 1 : (e[a] < c[a] ? -1 : 0);
    remaining[a] = std::abs(e[a] - c[a]);
    if (step[a] == 0) {
      t_max[a] = std::numeric_limits<double>::infinity();
      t_delta[a] = std::numeric_limits<double>::infinity();
      continue;
    }
    const double boundary = config.origin[a] + (c[a] + (step[a] > 0 ? 1 : 0)) * config.voxel_size;
    const double len = std::abs(d[a]);
    if (len > 0.0) {
      t_max[a] = std::max(0.0, (boundary - p0[a]) / d[a]);
      t_delta[a] = config.voxel_size / len;
    } else {
      t_max[a] = std::numeric_limits<double>::infinity();
      t_delta[a] = 0.0;
    }
  }

  constexpr bool kStoppable = std::is_same_v<std::invoke_result_t<Visit&, VoxelIndex>, bool>;
  auto emit = [&](const VoxelIndex& v) {
    if constexpr (kStoppable) {
      return visit(v);
    } else {
      visit(v);
      return true;
    }
  };
  std::size_t visited = 1;
  if (!emit(VoxelIndex{c[0], c[1], c[2]})) return visited;
  while (remaining[0] + remaining[1] + remaining[2] > 0) {
    int axis = -1;
    for (int a = 0; a < 3; ++a) {
      if (remaining[a] == 0) continue;
      if (axis < 0 || t_max[a] < t_max[axis]) axis = a;
    }
    c[axis] += step[axis];
    t_max[axis] += t_delta[axis];
    --remaining[axis];
    ++visited;
    if (!emit(VoxelIndex{c[0], c[1], c[2]})) break;
  }
  return visited;
}

}  // namespace nbv

#endif  // NBV_OCCUPANCY_HPP_
