// Copyright 2026 The nbvsim Authors
// SPDX-License-Identifier: Apache-2.0

#include "nbv/scenes.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>

#include "json.hpp"
#include "nbv/bvh.hpp"
#include "nbv/mesh_io.hpp"
#include "nbv/policies.hpp"

namespace nbv {

namespace {

using Json = nlohmann::json;

class MeshBuilder {
 public:
  // Adds a planar convex polygon fanned from poly[0]; poly[0] must not be
  // collinear with any other pair of consecutive vertices. The winding is
  // flipped (keeping poly[0] first) when it disagrees with `outward`.
  void face(std::vector<Vec3> poly, const Vec3& outward) {
    Vec3 n = Vec3::Zero();
    for (std::size_t i = 0; i < poly.size(); ++i) {
      n += poly[i].cross(poly[(i + 1) % poly.size()]);
    }
    if (n.dot(outward) < 0.0) std::reverse(poly.begin() + 1, poly.end());
    std::vector<std::uint32_t> ids;
    for (const auto& p : poly) ids.push_back(vertex(p));
    for (std::size_t i = 1; i + 1 < ids.size(); ++i) {
      mesh_.triangles.push_back({ids[0], ids[i], ids[i + 1]});
    }
  }

  void box(const Vec3& lo, const Vec3& hi) {
    auto p = [&](int x, int y, int z) {
      return Vec3(x ? hi.x() : lo.x(), y ? hi.y() : lo.y(), z ? hi.z() : lo.z());
    };
    face({p(0, 0, 0), p(0, 1, 0), p(0, 1, 1), p(0, 0, 1)}, -Vec3::UnitX());
    face({p(1, 0, 0), p(1, 1, 0), p(1, 1, 1), p(1, 0, 1)}, Vec3::UnitX());
    face({p(0, 0, 0), p(1, 0, 0), p(1, 0, 1), p(0, 0, 1)}, -Vec3::UnitY());
    face({p(0, 1, 0), p(1, 1, 0), p(1, 1, 1), p(0, 1, 1)}, Vec3::UnitY());
    face({p(0, 0, 0), p(1, 0, 0), p(1, 1, 0), p(0, 1, 0)}, -Vec3::UnitZ());
    face({p(0, 0, 1), p(1, 0, 1), p(1, 1, 1), p(0, 1, 1)}, Vec3::UnitZ());
  }

  TriangleMesh take() { return std::move(mesh_); }

 private:
  std::uint32_t vertex(const Vec3& p) {
    const std::array<double, 3> key{p.x(), p.y(), p.z()};
    auto [it, inserted] = index_.try_emplace(key, static_cast<std::uint32_t>(mesh_.vertices.size()));
    if (inserted) mesh_.vertices.push_back(p);
    return it->second;
  }

  TriangleMesh mesh_;
  std::map<std::array<double, 3>, std::uint32_t> index_;
};

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

Vec3 json_vec3(const Json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 3) throw InvariantError(what + " must be a 3-element array");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace

bool is_watertight(const TriangleMesh& mesh) {
  std::map<std::pair<std::uint32_t, std::uint32_t>, int> directed;
  for (const auto& t : mesh.triangles) {
    for (int k = 0; k < 3; ++k) {
      if (++directed[{t[k], t[(k + 1) % 3]}] > 1) return false;
    }
  }
  for (const auto& [edge, count] : directed) {
    if (!directed.contains({edge.second, edge.first})) return false;
  }
  return !directed.empty();
}

double signed_volume(const TriangleMesh& mesh) {
  double v = 0.0;
  for (const auto& t : mesh.triangles) {
    v += mesh.vertices[t[0]].dot(mesh.vertices[t[1]].cross(mesh.vertices[t[2]]));
  }
  return v / 6.0;
}

void HouseParams::validate() const {
  if (!(width > 0.0 && depth > 0.0 && eave > 0.0 && apex > eave)) {
    throw InvariantError("house body needs positive size and apex above the eave");
  }
  if (wing) {
    if (!(wing_length > 0.0 && wing_height > 0.0 && wing_height < eave)) {
      throw InvariantError("wing must be positive and lower than the eave");
    }
    if (!(-depth / 2 < wing_y0 && wing_y0 < wing_y1 && wing_y1 < depth / 2)) {
      throw InvariantError("wing must attach strictly inside the +x wall");
    }
  }
  if (pillars && !(pillar_gap > 0.0 && pillar_height > 0.0 && pillar_size > 0.0)) {
    throw InvariantError("pillars need positive gap, height and size");
  }
}

TriangleMesh build_house(const HouseParams& hp) {
  hp.validate();
  const double a = hp.width / 2, b = hp.depth / 2, h = hp.eave, top = hp.apex;
  const double y0 = hp.wing_y0, y1 = hp.wing_y1, wh = hp.wing_height;
  MeshBuilder mb;

  if (hp.wing) {
    mb.face({{-a, b, 0}, {a, b, 0}, {a, y1, 0}, {a, y0, 0}, {a, -b, 0}, {-a, -b, 0}},
            -Vec3::UnitZ());
  } else {
    mb.face({{-a, -b, 0}, {a, -b, 0}, {a, b, 0}, {-a, b, 0}}, -Vec3::UnitZ());
  }
  mb.face({{-a, -b, 0}, {-a, b, 0}, {-a, b, h}, {-a, -b, h}}, -Vec3::UnitX());
  if (hp.wing) {
    mb.face({{a, -b, 0}, {a, y0, 0}, {a, y0, wh}, {a, -b, wh}}, Vec3::UnitX());
    mb.face({{a, y1, 0}, {a, b, 0}, {a, b, wh}, {a, y1, wh}}, Vec3::UnitX());
    mb.face({{a, b, h}, {a, -b, h}, {a, -b, wh}, {a, y0, wh}, {a, y1, wh}, {a, b, wh}},
            Vec3::UnitX());
    for (const double y : {-b, b}) {
      mb.face({{-a, y, 0}, {a, y, 0}, {a, y, wh}, {a, y, h}, {0, y, top}, {-a, y, h}},
              Vec3(0, y, 0));
    }
    // Wing, open where it meets the body wall.
    const double c = a + hp.wing_length;
    mb.face({{a, y0, 0}, {c, y0, 0}, {c, y1, 0}, {a, y1, 0}}, -Vec3::UnitZ());
    mb.face({{a, y0, wh}, {c, y0, wh}, {c, y1, wh}, {a, y1, wh}}, Vec3::UnitZ());
    mb.face({{a, y0, 0}, {c, y0, 0}, {c, y0, wh}, {a, y0, wh}}, -Vec3::UnitY());
    mb.face({{a, y1, 0}, {c, y1, 0}, {c, y1, wh}, {a, y1, wh}}, Vec3::UnitY());
    mb.face({{c, y0, 0}, {c, y1, 0}, {c, y1, wh}, {c, y0, wh}}, Vec3::UnitX());
  } else {
    mb.face({{a, -b, 0}, {a, b, 0}, {a, b, h}, {a, -b, h}}, Vec3::UnitX());
    for (const double y : {-b, b}) {
      mb.face({{-a, y, 0}, {a, y, 0}, {a, y, h}, {0, y, top}, {-a, y, h}}, Vec3(0, y, 0));
    }
  }
  mb.face({{-a, -b, h}, {-a, b, h}, {0, b, top}, {0, -b, top}}, Vec3(-(top - h), 0, a));
  mb.face({{a, -b, h}, {a, b, h}, {0, b, top}, {0, -b, top}}, Vec3(top - h, 0, a));

  if (hp.pillars) {
    const double s = hp.pillar_size / 2;
    const double yc = -b - hp.pillar_gap - s;
    for (const double xc : {-0.6 * a, 0.6 * a}) {
      mb.box({xc - s, yc - s, 0}, {xc + s, yc + s, hp.pillar_height});
    }
  }

  TriangleMesh mesh = mb.take();
  const int turns = ((hp.quarter_turns % 4) + 4) % 4;
  for (auto& v : mesh.vertices) {
    for (int k = 0; k < turns; ++k) v = Vec3(-v.y(), v.x(), v.z());
  }
  return mesh;
}

HouseParams random_house_params(std::mt19937_64& rng) {
  HouseParams hp;
  hp.width = uniform(rng, 7.0, 11.0);
  hp.depth = uniform(rng, 6.0, 9.0);
  hp.eave = uniform(rng, 4.5, 5.5);
  hp.apex = 8.0;
  hp.wing = uniform01(rng) < 0.5;
  if (hp.wing) {
    hp.wing_length = uniform(rng, 2.0, 3.5);
    const double span = uniform(rng, 0.4, 0.7) * hp.depth;
    const double lo = -hp.depth / 2 + 0.5;
    const double hi = hp.depth / 2 - 0.5 - span;
    hp.wing_y0 = uniform(rng, lo, std::max(lo, hi));
    hp.wing_y1 = hp.wing_y0 + span;
    hp.wing_height = uniform(rng, 3.0, hp.eave - 0.8);
  }
  hp.pillars = uniform01(rng) < 0.5;
  if (hp.pillars) {
    hp.pillar_gap = uniform(rng, 1.2, 2.0);
    hp.pillar_height = uniform(rng, 2.5, 3.5);
  }
  hp.quarter_turns = static_cast<int>(rng() % 4);
  return hp;
}

double hemisphere_clearance(const TriangleMesh& mesh, const ActionBox& box) {
  const Bvh bvh(mesh);
  const HemisphereSpec spec = HemisphereSpec::for_scene(mesh.bounds(), box);
  constexpr int kPolar = 45;
  constexpr int kAzimuth = 180;
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= kPolar; ++i) {
    const double polar = i * (std::numbers::pi / 2) / kPolar;
    for (int j = 0; j < kAzimuth; ++j) {
      const double az = j * 2.0 * std::numbers::pi / kAzimuth;
      const Vec3 p = spec.center + spec.radius * Vec3(std::sin(polar) * std::cos(az),
                                                      std::sin(polar) * std::sin(az),
                                                      std::cos(polar));
      best = std::min(best, bvh.closest_distance(p));
      if (i == 0) break;
    }
  }
  return best;
}

TriangleMesh generate_house(std::uint64_t seed, const ActionBox& box) {
  std::mt19937_64 rng(seed);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    TriangleMesh mesh = normalize_mesh(build_house(random_house_params(rng)), kHouseExtent);
    const Aabb bb = mesh.bounds();
    if (!box.contains(bb.min) || !box.contains(bb.max)) continue;
    if (hemisphere_clearance(mesh, box) >= kHemisphereClearance) return mesh;
  }
  throw InvariantError("no house fits the view hemisphere for seed " + std::to_string(seed));
}

GridConfig GridOverride::apply(GridConfig base) const {
  if (dims) base.dims = *dims;
  if (voxel_size) base.voxel_size = *voxel_size;
  if (origin) base.origin = *origin;
  base.validate();
  return base;
}

std::vector<SceneEntry> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FileNotFoundError(path);
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ParseError(path.string(), 0, e.what());
  }
  const Json& list = doc.is_object() ? doc.at("scenes") : doc;
  if (!list.is_array() || list.empty()) {
    throw ParseError(path.string(), 0, "manifest needs a non-empty \"scenes\" array");
  }
  const auto base = path.parent_path();
  std::vector<SceneEntry> out;
  try {
    for (const auto& item : list) {
      SceneEntry e;
      e.mesh = item.at("mesh").get<std::string>();
      if (e.mesh.is_relative()) e.mesh = base / e.mesh;
      e.id = item.contains("id") ? item["id"].get<std::string>() : e.mesh.stem().string();
      if (item.contains("target_extent")) {
        e.target_extent = json_vec3(item["target_extent"], "target_extent");
      }
      if (item.contains("grid")) {
        const Json& g = item["grid"];
        if (g.contains("dims")) {
          const auto d = g["dims"];
          if (!d.is_array() || d.size() != 3) throw InvariantError("grid.dims must have 3 entries");
          e.grid.dims = std::array<int, 3>{d[0].get<int>(), d[1].get<int>(), d[2].get<int>()};
        }
        if (g.contains("voxel_size")) e.grid.voxel_size = g["voxel_size"].get<double>();
        if (g.contains("origin")) e.grid.origin = json_vec3(g["origin"], "grid.origin");
      }
      out.push_back(std::move(e));
    }
  } catch (const Json::exception& e) {
    throw ParseError(path.string(), 0, e.what());
  } catch (const InvariantError& e) {
    throw ParseError(path.string(), 0, e.what());
  }
  return out;
}

void save_manifest(const std::vector<SceneEntry>& entries, const std::filesystem::path& path) {
  Json list = Json::array();
  const auto base = std::filesystem::absolute(path).parent_path();
  for (const auto& e : entries) {
    Json item;
    item["id"] = e.id;
    item["mesh"] = std::filesystem::absolute(e.mesh).lexically_relative(base).generic_string();
    if (e.target_extent) {
      item["target_extent"] = {e.target_extent->x(), e.target_extent->y(), e.target_extent->z()};
    }
    Json g = Json::object();
    if (e.grid.dims) g["dims"] = *e.grid.dims;
    if (e.grid.voxel_size) g["voxel_size"] = *e.grid.voxel_size;
    if (e.grid.origin) g["origin"] = {e.grid.origin->x(), e.grid.origin->y(), e.grid.origin->z()};
    if (!g.empty()) item["grid"] = g;
    list.push_back(item);
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << Json{{"scenes", list}}.dump(2) << '\n';
}

std::shared_ptr<const Scene> load_scene(const SceneEntry& entry, const GridConfig& grid,
                                        std::size_t n_samples, std::uint64_t seed) {
  TriangleMesh mesh = load_mesh(entry.mesh);
  if (entry.target_extent) mesh = normalize_mesh(mesh, *entry.target_extent);
  return make_scene(entry.id, std::move(mesh), entry.grid.apply(grid), n_samples, seed);
}

std::vector<SceneEntry> generate_scene_set(int count, std::uint64_t seed,
                                           const std::filesystem::path& dir) {
  if (count < 1) throw InvariantError("scene count must be at least 1");
  std::filesystem::create_directories(dir);
  std::vector<SceneEntry> entries;
  for (int i = 0; i < count; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "house_%03d", i);
    const std::uint64_t house_seed = seed * 1000003ULL + static_cast<std::uint64_t>(i);
    const TriangleMesh mesh = generate_house(house_seed);
    SceneEntry e;
    e.id = name;
    e.mesh = dir / (std::string(name) + ".obj");
    e.target_extent = kHouseExtent;
    save_obj(mesh, e.mesh);
    entries.push_back(e);
  }
  save_manifest(entries, dir / "scenes.json");
  return entries;
}

}  // namespace nbv
