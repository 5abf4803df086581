// Copyright 2026 The nbvsim Authors
// SPDX-License-Identifier: Apache-2.0

#include "nbv/occupancy.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <stdexcept>

namespace nbv {

const char* to_string(VoxelState s) {
  switch (s) {
    case VoxelState::Unknown:
      return "unknown";
    case VoxelState::Free:
      return "free";
    case VoxelState::Occupied:
      return "occupied";
  }
  return "?";
}

GridConfig GridConfig::over_box(const ActionBox& box, std::array<int, 3> dims) {
  GridConfig cfg;
  cfg.origin = box.min;
  cfg.dims = dims;
  const Vec3 ext = box.max - box.min;
  double vs = 0.0;
  for (int a = 0; a < 3; ++a) vs = std::max(vs, ext[a] / dims[a]);
  cfg.voxel_size = vs;
  return cfg;
}

void GridConfig::validate() const {
  if (!origin.allFinite()) throw InvariantError("grid origin must be finite");
  if (!(voxel_size > 0.0) || !std::isfinite(voxel_size)) {
    throw InvariantError("voxel size must be positive");
  }
  for (int d : dims) {
    if (d < 1 || d > kMaxGridDim) {
      throw InvariantError("grid dims must lie in [1, " + std::to_string(kMaxGridDim) + "]");
    }
  }
  if (!(log_odds_hit > 0.0f)) throw InvariantError("hit log-odds must be positive");
  if (!(log_odds_miss < 0.0f)) throw InvariantError("miss log-odds must be negative");
  if (!(free_threshold < 0.0f && 0.0f < occupied_threshold)) {
    throw InvariantError("thresholds must satisfy free < 0 < occupied");
  }
  if (!(clamp_min <= free_threshold && occupied_threshold <= clamp_max)) {
    throw InvariantError("clamp range must enclose both thresholds");
  }
}

void GridConfig::set_hit_miss_ratio(double ratio) {
  if (!(ratio > 0.0)) throw InvariantError("hit/miss ratio must be positive");
  log_odds_hit = static_cast<float>(ratio * std::abs(static_cast<double>(log_odds_miss)));
}

Aabb GridConfig::bounds() const {
  const Vec3 ext(dims[0] * voxel_size, dims[1] * voxel_size, dims[2] * voxel_size);
  return {origin, origin + ext};
}

VoxelIndex GridConfig::index_of(const Vec3& p) const {
  const Vec3 q = (p - origin) / voxel_size;
  return {static_cast<int>(std::floor(q.x())), static_cast<int>(std::floor(q.y())),
          static_cast<int>(std::floor(q.z()))};
}

std::optional<VoxelIndex> GridConfig::locate(const Vec3& p) const {
  if (!bounds().contains(p)) return std::nullopt;
  VoxelIndex v = index_of(p);
  v.x = std::min(v.x, dims[0] - 1);
  v.y = std::min(v.y, dims[1] - 1);
  v.z = std::min(v.z, dims[2] - 1);
  return v;
}

Vec3 GridConfig::center(const VoxelIndex& v) const {
  return origin + voxel_size * Vec3(v.x + 0.5, v.y + 0.5, v.z + 0.5);
}

Aabb GridConfig::voxel_box(const VoxelIndex& v) const {
  const Vec3 lo = origin + voxel_size * Vec3(v.x, v.y, v.z);
  return {lo, lo + Vec3::Constant(voxel_size)};
}

VoxelIndex GridConfig::unlinear(std::size_t i) const {
  const auto nx = static_cast<std::size_t>(dims[0]);
  const auto ny = static_cast<std::size_t>(dims[1]);
  return {static_cast<int>(i % nx), static_cast<int>((i / nx) % ny),
          static_cast<int>(i / (nx * ny))};
}

VoxelState GridConfig::classify(float v) const {
  if (v >= occupied_threshold) return VoxelState::Occupied;
  if (v <= free_threshold) return VoxelState::Free;
  return VoxelState::Unknown;
}

OccupancyGrid::OccupancyGrid(GridConfig cfg) : config(std::move(cfg)) {
  config.validate();
  log_odds.assign(config.voxel_count(), 0.0f);
}

void OccupancyGrid::update(std::size_t i, float delta) {
  log_odds[i] = std::clamp(log_odds[i] + delta, config.clamp_min, config.clamp_max);
}

PointCloud backproject(const DepthMap& depth) {
  const Frame frame = pose_to_frame(depth.pose);
  PointCloud cloud;
  for (int r = 0; r < depth.height; ++r) {
    for (int c = 0; c < depth.width; ++c) {
      const double d = depth.at(r, c);
      if (!std::isfinite(d)) continue;
      cloud.points.push_back(frame.translation +
                             d * pixel_direction(frame, depth.intrinsics, r, c));
    }
  }
  return cloud;
}

std::optional<std::pair<double, double>> clip_segment(const Aabb& box, const Vec3& a,
                                                      const Vec3& b) {
  double t0 = 0.0, t1 = 1.0;
  const Vec3 d = b - a;
  for (int k = 0; k < 3; ++k) {
    if (d[k] == 0.0) {
      if (a[k] < box.min[k] || a[k] > box.max[k]) return std::nullopt;
      continue;
    }
    double tn = (box.min[k] - a[k]) / d[k];
    double tf = (box.max[k] - a[k]) / d[k];
    if (tn > tf) std::swap(tn, tf);
    t0 = std::max(t0, tn);
    t1 = std::min(t1, tf);
    if (t0 > t1) return std::nullopt;
  }
  return std::make_pair(t0, t1);
}

std::vector<VoxelIndex> traverse_ray(const GridConfig& config, const Vec3& start,
                                     const Vec3& end) {
  std::vector<VoxelIndex> out;
  walk_segment(config, start, end, [&](const VoxelIndex& v) { out.push_back(v); });
  return out;
}

IntegrationStats integrate_depth(OccupancyGrid& grid, const DepthMap& depth) {
  const auto& cfg = grid.config;
  const auto& intr = depth.intrinsics;
  intr.validate();
  if (depth.width != intr.width || depth.height != intr.height ||
      depth.depths.size() != static_cast<std::size_t>(depth.width) * depth.height) {
    throw InvariantError("depth map size does not match its intrinsics");
  }
  if (!depth.pose.finite()) throw InvariantError("depth map pose is not finite");
  // A camera this far away cannot be in the grid's frame.
  constexpr double kSaneDistance = 1e6;
  if ((depth.pose.position() - cfg.bounds().center()).norm() > kSaneDistance) {
    throw InvariantError("depth map pose is outside any sane bound of the grid frame");
  }

  const Frame frame = pose_to_frame(depth.pose);
  const Aabb bounds = cfg.bounds();
  std::vector<std::uint8_t> hit_mark(cfg.voxel_count(), 0);
  IntegrationStats stats;

  for (int r = 0; r < depth.height; ++r) {
    for (int c = 0; c < depth.width; ++c) {
      const double d = depth.at(r, c);
      const Vec3 dir = pixel_direction(frame, intr, r, c);
      const bool hit = std::isfinite(d) && d <= intr.max_range;
      const Vec3 end = frame.translation + (hit ? d : intr.max_range) * dir;
      if (!hit && !cfg.clear_no_return) continue;
      ++stats.rays_cast;

      // Endpoints outside the grid degrade the ray to free space only.
      const bool endpoint_in_grid = hit && bounds.contains(end);
      // Updates lag one voxel behind the walk so the final voxel can receive
      // the hit constant instead of the miss constant.
      std::size_t pending = 0;
      bool has_pending = false;
      walk_segment(cfg, frame.translation, end, [&](const VoxelIndex& v) {
        if (has_pending) grid.update(pending, cfg.log_odds_miss);
        pending = cfg.linear(v);
        has_pending = true;
      });
      if (!has_pending) continue;
      if (!endpoint_in_grid) {
        grid.update(pending, cfg.log_odds_miss);
        continue;
      }
      grid.update(pending, cfg.log_odds_hit);
      if (!hit_mark[pending]) {
        hit_mark[pending] = 1;
        ++stats.endpoint_voxels;
      }
    }
  }
  return stats;
}

Classification classify(const OccupancyGrid& grid) {
  Classification out;
  out.states.resize(grid.log_odds.size());
  for (std::size_t i = 0; i < grid.log_odds.size(); ++i) {
    const VoxelState s = grid.config.classify(grid.log_odds[i]);
    out.states[i] = s;
    switch (s) {
      case VoxelState::Unknown:
        ++out.unknown;
        break;
      case VoxelState::Free:
        ++out.free;
        break;
      case VoxelState::Occupied:
        ++out.occupied;
        break;
    }
  }
  return out;
}

double coverage_ratio(const OccupancyGrid& grid, std::span<const std::uint32_t> gt) {
  if (gt.empty()) throw InvariantError("ground-truth voxel set is empty");
  std::size_t covered = 0;
  for (auto i : gt) {
    if (i >= grid.log_odds.size()) throw InvariantError("ground-truth voxel outside grid");
    if (grid.config.classify(grid.log_odds[i]) == VoxelState::Occupied) ++covered;
  }
  return 100.0 * static_cast<double>(covered) / static_cast<double>(gt.size());
}

void write_occupied_ply(const OccupancyGrid& grid, const std::filesystem::path& path) {
  std::vector<Vec3> centers;
  for (std::size_t i = 0; i < grid.log_odds.size(); ++i) {
    if (grid.config.classify(grid.log_odds[i]) == VoxelState::Occupied) {
      centers.push_back(grid.config.center(grid.config.unlinear(i)));
    }
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "ply\nformat ascii 1.0\nelement vertex " << centers.size()
      << "\nproperty float x\nproperty float y\nproperty float z\nend_header\n"
      << std::setprecision(9);
  for (const auto& p : centers) out << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
}

namespace {

constexpr char kGridMagic[8] = {'N', 'B', 'V', 'G', 'R', 'I', 'D', '1'};

template <typename T>
void put_le(std::string& buf, T v) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  buf.append(bytes, sizeof(T));
}

template <typename T>
T get_le(const char* p) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, p, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T v;
  std::memcpy(&v, bytes, sizeof(T));
  return v;
}

}  // namespace

void write_grid_dump(const OccupancyGrid& grid, const std::filesystem::path& path) {
  std::string buf(kGridMagic, sizeof(kGridMagic));
  for (int d : grid.config.dims) put_le<std::uint16_t>(buf, static_cast<std::uint16_t>(d));
  put_le<std::uint16_t>(buf, 0);
  put_le<float>(buf, static_cast<float>(grid.config.voxel_size));
  for (int a = 0; a < 3; ++a) put_le<float>(buf, static_cast<float>(grid.config.origin[a]));
  for (float v : grid.log_odds) put_le<float>(buf, v);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

OccupancyGrid read_grid_dump(const std::filesystem::path& path, const GridConfig& defaults) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 32 || std::memcmp(buf.data(), kGridMagic, 8) != 0) {
    throw std::runtime_error("not an NBVGRID1 dump: " + path.string());
  }
  GridConfig cfg = defaults;
  for (int a = 0; a < 3; ++a) cfg.dims[a] = get_le<std::uint16_t>(buf.data() + 8 + 2 * a);
  cfg.voxel_size = get_le<float>(buf.data() + 16);
  for (int a = 0; a < 3; ++a) cfg.origin[a] = get_le<float>(buf.data() + 20 + 4 * a);
  OccupancyGrid grid(cfg);
  if (buf.size() != 32 + 4 * grid.log_odds.size()) {
    throw std::runtime_error("grid dump body has wrong size: " + path.string());
  }
  for (std::size_t i = 0; i < grid.log_odds.size(); ++i) {
    grid.log_odds[i] = get_le<float>(buf.data() + 32 + 4 * i);
  }
  return grid;
}

}  // namespace nbv
