// Copyright 2026 The nbvsim Authors
// SPDX-License-Identifier: Apache-2.0

#include "nbv/mesh_io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <vector>

namespace nbv {

namespace fs = std::filesystem;

namespace {

std::ifstream open_or_throw(const fs::path& path, std::ios::openmode mode = std::ios::in) {
  if (!fs::exists(path)) throw FileNotFoundError(path);
  std::ifstream in(path, mode);
  if (!in) throw FileNotFoundError(path);
  return in;
}

std::string lower_ext(const fs::path& p) {
  std::string e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
  return e;
}

bool parse_double(std::string_view s, double& out) {
  const char* b = s.data();
  const char* e = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(b, e, out);
  return ec == std::errc() && ptr == e;
}

bool parse_long(std::string_view s, long& out) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

void finish_mesh(TriangleMesh& mesh, const fs::path& path) {
  if (mesh.vertices.empty() || mesh.triangles.empty()) {
    throw EmptyMeshError("mesh has no triangles: " + path.string());
  }
  mesh.validate();
}

// PLY scalar types.
enum class PlyType { i8, u8, i16, u16, i32, u32, f32, f64 };

PlyType ply_type(std::string_view name, const std::string& file, std::size_t line) {
  if (name == "char" || name == "int8") return PlyType::i8;
  if (name == "uchar" || name == "uint8") return PlyType::u8;
  if (name == "short" || name == "int16") return PlyType::i16;
  if (name == "ushort" || name == "uint16") return PlyType::u16;
  if (name == "int" || name == "int32") return PlyType::i32;
  if (name == "uint" || name == "uint32") return PlyType::u32;
  if (name == "float" || name == "float32") return PlyType::f32;
  if (name == "double" || name == "float64") return PlyType::f64;
  throw ParseError(file, line, "unknown PLY type '" + std::string(name) + "'");
}

std::size_t ply_size(PlyType t) {
  switch (t) {
    case PlyType::i8:
    case PlyType::u8:
      return 1;
    case PlyType::i16:
    case PlyType::u16:
      return 2;
    case PlyType::i32:
    case PlyType::u32:
    case PlyType::f32:
      return 4;
    case PlyType::f64:
      return 8;
  }
  return 0;
}

template <typename T>
T read_le(const char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) {
    auto* b = reinterpret_cast<unsigned char*>(&v);
    std::reverse(b, b + sizeof(T));
  }
  return v;
}

double decode(PlyType t, const char* p) {
  switch (t) {
    case PlyType::i8:
      return read_le<std::int8_t>(p);
    case PlyType::u8:
      return read_le<std::uint8_t>(p);
    case PlyType::i16:
      return read_le<std::int16_t>(p);
    case PlyType::u16:
      return read_le<std::uint16_t>(p);
    case PlyType::i32:
      return read_le<std::int32_t>(p);
    case PlyType::u32:
      return read_le<std::uint32_t>(p);
    case PlyType::f32:
      return read_le<float>(p);
    case PlyType::f64:
      return read_le<double>(p);
  }
  return 0.0;
}

struct PlyProperty {
  std::string name;
  PlyType type = PlyType::f32;
  bool is_list = false;
  PlyType count_type = PlyType::u8;
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> props;
};

// Binary body reader with bounds checking.
class ByteCursor {
 public:
  ByteCursor(const std::string& buf, std::size_t pos, const std::string& file)
      : buf_(buf), pos_(pos), file_(file) {}
  double next(PlyType t) {
    const std::size_t n = ply_size(t);
    if (pos_ + n > buf_.size()) throw ParseError(file_, 0, "unexpected end of binary PLY body");
    const double v = decode(t, buf_.data() + pos_);
    pos_ += n;
    return v;
  }

 private:
  const std::string& buf_;
  std::size_t pos_;
  const std::string& file_;
};

}  // namespace

TriangleMesh load_obj(const fs::path& path) {
  auto in = open_or_throw(path);
  const std::string file = path.string();
  TriangleMesh mesh;
  struct PendingFace {
    std::vector<long> idx;
    std::size_t line;
  };
  std::vector<PendingFace> faces;

  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto tok = split_ws(line);
    if (tok.empty() || tok[0][0] == '#') continue;
    if (tok[0] == "v") {
      if (tok.size() < 4) throw ParseError(file, lineno, "vertex needs 3 coordinates");
      Vec3 v;
      for (int k = 0; k < 3; ++k) {
        if (!parse_double(tok[k + 1], v[k])) {
          throw ParseError(file, lineno, "bad coordinate '" + std::string(tok[k + 1]) + "'");
        }
      }
      mesh.vertices.push_back(v);
    } else if (tok[0] == "f") {
      if (tok.size() < 4) throw ParseError(file, lineno, "face needs at least 3 vertices");
      PendingFace f{{}, lineno};
      for (std::size_t k = 1; k < tok.size(); ++k) {
        const auto slash = tok[k].find('/');
        long idx = 0;
        if (!parse_long(tok[k].substr(0, slash), idx) || idx == 0) {
          throw ParseError(file, lineno, "bad face index '" + std::string(tok[k]) + "'");
        }
        // Negative indices are relative to the vertices read so far.
        if (idx < 0) idx = static_cast<long>(mesh.vertices.size()) + idx + 1;
        f.idx.push_back(idx - 1);
      }
      faces.push_back(std::move(f));
    }
    // vt, vn, o, g, s, usemtl, mtllib: ignored.
  }

  const long nv = static_cast<long>(mesh.vertices.size());
  for (const auto& f : faces) {
    for (long i : f.idx) {
      if (i < 0 || i >= nv) {
        throw ParseError(file, f.line,
                         "face references vertex " + std::to_string(i + 1) + " but file has " +
                             std::to_string(nv) + " vertices");
      }
    }
    for (std::size_t k = 1; k + 1 < f.idx.size(); ++k) {
      mesh.triangles.push_back({static_cast<std::uint32_t>(f.idx[0]),
                                static_cast<std::uint32_t>(f.idx[k]),
                                static_cast<std::uint32_t>(f.idx[k + 1])});
    }
  }
  finish_mesh(mesh, path);
  return mesh;
}

TriangleMesh load_ply(const fs::path& path) {
  auto in = open_or_throw(path, std::ios::in | std::ios::binary);
  const std::string file = path.string();
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  // Header.
  std::size_t pos = 0;
  std::size_t lineno = 0;
  auto next_line = [&](std::string& out) {
    if (pos >= buf.size()) return false;
    const std::size_t nl = buf.find('\n', pos);
    const std::size_t end = nl == std::string::npos ? buf.size() : nl;
    out = buf.substr(pos, end - pos);
    if (!out.empty() && out.back() == '\r') out.pop_back();
    pos = nl == std::string::npos ? buf.size() : nl + 1;
    ++lineno;
    return true;
  };

  std::string line;
  if (!next_line(line) || line != "ply") throw ParseError(file, 1, "missing 'ply' magic");
  bool binary = false;
  bool have_format = false;
  std::vector<PlyElement> elements;
  bool header_done = false;
  while (next_line(line)) {
    const auto tok = split_ws(line);
    if (tok.empty()) continue;
    if (tok[0] == "end_header") {
      header_done = true;
      break;
    }
    if (tok[0] == "comment" || tok[0] == "obj_info") continue;
    if (tok[0] == "format") {
      if (tok.size() < 2) throw ParseError(file, lineno, "bad format line");
      if (tok[1] == "ascii") {
        binary = false;
      } else if (tok[1] == "binary_little_endian") {
        binary = true;
      } else {
        throw ParseError(file, lineno, "unsupported PLY format '" + std::string(tok[1]) + "'");
      }
      have_format = true;
    } else if (tok[0] == "element") {
      long n = 0;
      if (tok.size() != 3 || !parse_long(tok[2], n) || n < 0) {
        throw ParseError(file, lineno, "bad element line");
      }
      elements.push_back({std::string(tok[1]), static_cast<std::size_t>(n), {}});
    } else if (tok[0] == "property") {
      if (elements.empty()) throw ParseError(file, lineno, "property before element");
      PlyProperty p;
      if (tok.size() == 5 && tok[1] == "list") {
        p.is_list = true;
        p.count_type = ply_type(tok[2], file, lineno);
        p.type = ply_type(tok[3], file, lineno);
        p.name = tok[4];
      } else if (tok.size() == 3) {
        p.type = ply_type(tok[1], file, lineno);
        p.name = tok[2];
      } else {
        throw ParseError(file, lineno, "bad property line");
      }
      elements.back().props.push_back(std::move(p));
    } else {
      throw ParseError(file, lineno, "unknown header keyword '" + std::string(tok[0]) + "'");
    }
  }
  if (!header_done) throw ParseError(file, lineno, "missing end_header");
  if (!have_format) throw ParseError(file, lineno, "missing format line");

  TriangleMesh mesh;
  struct PendingFace {
    std::vector<long> idx;
    std::size_t line;
  };
  std::vector<PendingFace> faces;

  ByteCursor cursor(buf, pos, file);
  for (const auto& el : elements) {
    int ix = -1, iy = -1, iz = -1, iface = -1;
    for (std::size_t k = 0; k < el.props.size(); ++k) {
      const auto& n = el.props[k].name;
      if (n == "x") ix = static_cast<int>(k);
      if (n == "y") iy = static_cast<int>(k);
      if (n == "z") iz = static_cast<int>(k);
      if (el.props[k].is_list && (n == "vertex_indices" || n == "vertex_index")) {
        iface = static_cast<int>(k);
      }
    }
    const bool is_vertex = el.name == "vertex";
    const bool is_face = el.name == "face";
    if (is_vertex && (ix < 0 || iy < 0 || iz < 0)) {
      throw ParseError(file, lineno, "vertex element lacks x/y/z");
    }
    if (is_face && iface < 0) throw ParseError(file, lineno, "face element lacks vertex_indices");

    for (std::size_t r = 0; r < el.count; ++r) {
      std::vector<std::vector<double>> values(el.props.size());
      std::size_t row_line = 0;
      if (binary) {
        for (std::size_t k = 0; k < el.props.size(); ++k) {
          const auto& p = el.props[k];
          if (p.is_list) {
            const double n = cursor.next(p.count_type);
            if (n < 0) throw ParseError(file, 0, "negative list length");
            for (std::size_t j = 0; j < static_cast<std::size_t>(n); ++j) {
              values[k].push_back(cursor.next(p.type));
            }
          } else {
            values[k].push_back(cursor.next(p.type));
          }
        }
      } else {
        if (!next_line(line)) throw ParseError(file, lineno, "unexpected end of file");
        row_line = lineno;
        const auto tok = split_ws(line);
        std::size_t t = 0;
        auto take = [&]() {
          if (t >= tok.size()) throw ParseError(file, row_line, "too few values in row");
          double v = 0;
          if (!parse_double(tok[t], v)) {
            throw ParseError(file, row_line, "bad number '" + std::string(tok[t]) + "'");
          }
          ++t;
          return v;
        };
        for (std::size_t k = 0; k < el.props.size(); ++k) {
          if (el.props[k].is_list) {
            const double n = take();
            if (n < 0) throw ParseError(file, row_line, "negative list length");
            for (std::size_t j = 0; j < static_cast<std::size_t>(n); ++j) values[k].push_back(take());
          } else {
            values[k].push_back(take());
          }
        }
      }
      if (is_vertex) {
        mesh.vertices.emplace_back(values[ix][0], values[iy][0], values[iz][0]);
      } else if (is_face) {
        PendingFace f{{}, row_line};
        for (double v : values[iface]) f.idx.push_back(static_cast<long>(v));
        if (f.idx.size() < 3) throw ParseError(file, row_line, "face needs at least 3 vertices");
        faces.push_back(std::move(f));
      }
    }
  }

  const long nv = static_cast<long>(mesh.vertices.size());
  for (const auto& f : faces) {
    for (long i : f.idx) {
      if (i < 0 || i >= nv) {
        throw ParseError(file, f.line,
                         "face references vertex " + std::to_string(i) + " but file has " +
                             std::to_string(nv) + " vertices");
      }
    }
    for (std::size_t k = 1; k + 1 < f.idx.size(); ++k) {
      mesh.triangles.push_back({static_cast<std::uint32_t>(f.idx[0]),
                                static_cast<std::uint32_t>(f.idx[k]),
                                static_cast<std::uint32_t>(f.idx[k + 1])});
    }
  }
  finish_mesh(mesh, path);
  return mesh;
}

TriangleMesh load_mesh(const fs::path& path) {
  const std::string ext = lower_ext(path);
  if (ext == ".obj") return load_obj(path);
  if (ext == ".ply") return load_ply(path);
  if (!fs::exists(path)) throw FileNotFoundError(path);
  throw ParseError(path.string(), 0, "unsupported mesh extension '" + ext + "'");
}

void save_obj(const TriangleMesh& mesh, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << std::setprecision(17);
  for (const auto& v : mesh.vertices) out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  for (const auto& t : mesh.triangles) {
    out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
  }
}

void save_ply(const TriangleMesh& mesh, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "ply\nformat ascii 1.0\nelement vertex " << mesh.vertices.size()
      << "\nproperty double x\nproperty double y\nproperty double z\nelement face "
      << mesh.triangles.size() << "\nproperty list uchar int vertex_indices\nend_header\n";
  out << std::setprecision(17);
  for (const auto& v : mesh.vertices) out << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  for (const auto& t : mesh.triangles) out << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
}

void save_ply_points(std::span<const Vec3> points, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "ply\nformat ascii 1.0\nelement vertex " << points.size()
      << "\nproperty float x\nproperty float y\nproperty float z\nend_header\n";
  out << std::setprecision(9);
  for (const auto& p : points) out << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
}

}  // namespace nbv
