// Copyright 2026 The nbvsim Authors
// SPDX-License-Identifier: Apache-2.0
//
// Procedural house meshes and the JSON scene manifest.

#ifndef NBV_SCENES_HPP_
#define NBV_SCENES_HPP_

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "nbv/environment.hpp"
#include "nbv/geometry.hpp"
#include "nbv/occupancy.hpp"

namespace nbv {

/// Every undirected edge is used by exactly two triangles, once in each
/// direction.
bool is_watertight(const TriangleMesh& mesh);

/// Signed enclosed volume (positive for outward-facing triangles).
double signed_volume(const TriangleMesh& mesh);

struct HouseParams {
  double width = 9.0;   // body along x
  double depth = 8.0;   // body along y; the gable ends face +-y
  double eave = 5.0;
  double apex = 8.0;
  bool wing = false;
  double wing_length = 3.0;  // along x, outward from the +x wall
  double wing_y0 = -2.0, wing_y1 = 2.0;
  double wing_height = 3.5;
  bool pillars = false;
  double pillar_gap = 1.5;   // distance in front of the -y gable wall
  double pillar_height = 3.0;
  double pillar_size = 0.5;
  int quarter_turns = 0;     // rotation about +z

  void validate() const;
};

/// Body (extruded pentagon) with an optional flat-roofed wing fused into the
/// +x wall and optional free-standing pillars. The result is watertight and
/// outward oriented; it is not normalized.
TriangleMesh build_house(const HouseParams& params);

HouseParams random_house_params(std::mt19937_64& rng);

inline const Vec3 kHouseExtent{15.0, 15.0, 8.0};
inline constexpr double kHemisphereClearance = 0.6;

/// Random house for `seed`, normalized to kHouseExtent and resampled until
/// the default view hemisphere keeps kHemisphereClearance from the surface.
TriangleMesh generate_house(std::uint64_t seed, const ActionBox& box = {});

/// Minimum distance from a dense sampling of the scene's view hemisphere to
/// the mesh.
double hemisphere_clearance(const TriangleMesh& mesh, const ActionBox& box);

struct GridOverride {
  std::optional<std::array<int, 3>> dims;
  std::optional<double> voxel_size;
  std::optional<Vec3> origin;

  GridConfig apply(GridConfig base) const;
};

struct SceneEntry {
  std::string id;
  std::filesystem::path mesh;  // absolute after loading
  std::optional<Vec3> target_extent;
  GridOverride grid;
};

/// {"scenes": [{"id": ..., "mesh": ..., "target_extent": [x, y, z],
/// "grid": {"dims": [...], "voxel_size": v, "origin": [...]}}]}.
/// Relative mesh paths resolve against the manifest directory.
std::vector<SceneEntry> load_manifest(const std::filesystem::path& path);
void save_manifest(const std::vector<SceneEntry>& entries, const std::filesystem::path& path);

/// Loads, normalizes and voxelizes one scene entry. The entry's grid
/// overrides apply on top of `grid`.
std::shared_ptr<const Scene> load_scene(const SceneEntry& entry, const GridConfig& grid,
                                        std::size_t n_samples = kDefaultSurfaceSamples,
                                        std::uint64_t seed = 0);

/// Writes house_NNN.obj files plus scenes.json into `dir`.
std::vector<SceneEntry> generate_scene_set(int count, std::uint64_t seed,
                                           const std::filesystem::path& dir);

}  // namespace nbv

#endif  // NBV_SCENES_HPP_
