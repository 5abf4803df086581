// Copyright 2026 The nbvsim Authors
// SPDX-License-Identifier: Apache-2.0
//
// OBJ / PLY ingestion and small writers for meshes and point clouds.

#ifndef NBV_MESH_IO_HPP_
#define NBV_MESH_IO_HPP_

#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>

#include "nbv/geometry.hpp"

namespace nbv {

class FileNotFoundError : public std::runtime_error {
 public:
  explicit FileNotFoundError(const std::filesystem::path& p)
      : std::runtime_error("file not found: " + p.string()), path_(p) {}
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& file, std::size_t line, const std::string& what)
      : std::runtime_error(file + ":" + std::to_string(line) + ": " + what), line_(line) {}
  /// 1-based line number; 0 when the error is not tied to a line (binary body).
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class EmptyMeshError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Loads an OBJ (v/f records) or PLY (ascii or binary_little_endian) mesh,
/// dispatching on the file extension. Polygonal faces are fan-triangulated.
TriangleMesh load_mesh(const std::filesystem::path& path);
TriangleMesh load_obj(const std::filesystem::path& path);
TriangleMesh load_ply(const std::filesystem::path& path);

void save_obj(const TriangleMesh& mesh, const std::filesystem::path& path);
/// ASCII PLY with vertex x,y,z and face vertex_indices.
void save_ply(const TriangleMesh& mesh, const std::filesystem::path& path);
/// ASCII PLY point cloud.
void save_ply_points(std::span<const Vec3> points, const std::filesystem::path& path);

}  // namespace nbv

#endif  // NBV_MESH_IO_HPP_
