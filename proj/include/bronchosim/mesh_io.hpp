#pragma once

// Mesh export and import: ASCII OBJ with v/vn/f records (1-based, f written
// as a//a) and little-endian binary STL.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>

#include "bronchosim/error.hpp"
#include "bronchosim/mesh.hpp"
#include "bronchosim/pfm.hpp"

namespace bronchosim {

inline std::string encode_obj(const TriangleMesh& m) {
  std::ostringstream out;
  out.precision(17);
  out << "# bronchosim airway mesh\n";
  for (const Vec3& v : m.vertices) out << "v " << v.x << ' ' << v.y << ' ' << v.z << '\n';
  for (const Vec3& n : m.normals) out << "vn " << n.x << ' ' << n.y << ' ' << n.z << '\n';
  const bool with_normals = m.normals.size() == m.vertices.size();
  for (const auto& t : m.triangles) {
    out << 'f';
    for (int i : t) {
      out << ' ' << i + 1;
      if (with_normals) out << "//" << i + 1;
    }
    out << '\n';
  }
  return out.str();
}

inline void write_obj(const std::string& path, const TriangleMesh& m) { write_file(path, encode_obj(m)); }

inline TriangleMesh decode_obj(const std::string& text, const std::string& path = "<memory>") {
  TriangleMesh m;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag) || tag[0] == '#') continue;
    auto fail = [&](const std::string& why) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": " + why);
    };
    if (tag == "v") {
      Vec3 v;
      if (!(ls >> v.x >> v.y >> v.z)) fail("malformed vertex");
      m.vertices.push_back(v);
    } else if (tag == "vn") {
      Vec3 n;
      if (!(ls >> n.x >> n.y >> n.z)) fail("malformed normal");
      m.normals.push_back(n);
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string tok;
      while (ls >> tok) {
        const int i = std::stoi(tok.substr(0, tok.find('/')));
        const int resolved = i > 0 ? i - 1 : static_cast<int>(m.vertices.size()) + i;
        if (resolved < 0 || resolved >= static_cast<int>(m.vertices.size()))
          fail("face index out of range");
        idx.push_back(resolved);
      }
      if (idx.size() < 3) fail("face with fewer than 3 vertices");
      for (std::size_t k = 1; k + 1 < idx.size(); ++k) m.triangles.push_back({idx[0], idx[k], idx[k + 1]});
    }
  }
  if (m.normals.size() != m.vertices.size()) m.normals.clear();
  m.triangle_kind.assign(m.triangles.size(), SurfaceKind::wall);
  m.triangle_segment.assign(m.triangles.size(), -1);
  m.vertex_segment.assign(m.vertices.size(), -1);
  m.vertex_station.assign(m.vertices.size(), std::numeric_limits<double>::quiet_NaN());
  return m;
}

namespace detail {

inline void put_f32(std::string& out, double v) {
  std::uint32_t bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
  if constexpr (std::endian::native == std::endian::big) bits = byteswap32(bits);
  char b[4];
  std::memcpy(b, &bits, 4);
  out.append(b, 4);
}

inline float get_f32(const char* p) {
  std::uint32_t bits;
  std::memcpy(&bits, p, 4);
  if constexpr (std::endian::native == std::endian::big) bits = byteswap32(bits);
  return std::bit_cast<float>(bits);
}

}  // namespace detail

inline std::string encode_stl(const TriangleMesh& m) {
  std::string out(80, '\0');
  const char title[] = "bronchosim airway mesh";
  std::memcpy(out.data(), title, sizeof(title) - 1);
  std::uint32_t count = static_cast<std::uint32_t>(m.triangles.size());
  if constexpr (std::endian::native == std::endian::big) count = detail::byteswap32(count);
  out.append(reinterpret_cast<const char*>(&count), 4);
  for (std::size_t t = 0; t < m.triangles.size(); ++t) {
    const Vec3 n = triangle_normal(m, t);
    for (double c : {n.x, n.y, n.z}) detail::put_f32(out, c);
    for (int i : m.triangles[t]) {
      const Vec3& v = m.vertices[static_cast<std::size_t>(i)];
      for (double c : {v.x, v.y, v.z}) detail::put_f32(out, c);
    }
    out.append(2, '\0');
  }
  return out;
}

inline void write_stl(const std::string& path, const TriangleMesh& m) { write_file(path, encode_stl(m)); }

/// Reads binary STL and welds bit-identical corner positions into shared
/// vertices.
inline TriangleMesh decode_stl(const std::string& bytes, const std::string& path = "<memory>") {
  if (bytes.size() < 84)
    throw FormatError(path + ": truncated STL header (expected 84 bytes, got " +
                      std::to_string(bytes.size()) + ")");
  std::uint32_t count;
  std::memcpy(&count, bytes.data() + 80, 4);
  if constexpr (std::endian::native == std::endian::big) count = detail::byteswap32(count);
  const std::size_t expected = 84 + static_cast<std::size_t>(count) * 50;
  if (bytes.size() < expected)
    throw FormatError(path + ": truncated STL payload (expected " + std::to_string(expected) +
                      " bytes, got " + std::to_string(bytes.size()) + ")");
  TriangleMesh m;
  std::map<std::array<float, 3>, int> weld;
  for (std::uint32_t t = 0; t < count; ++t) {
    const char* rec = bytes.data() + 84 + static_cast<std::size_t>(t) * 50 + 12;
    std::array<int, 3> tri{};
    for (int k = 0; k < 3; ++k) {
      const std::array<float, 3> p{detail::get_f32(rec + 12 * k), detail::get_f32(rec + 12 * k + 4),
                                   detail::get_f32(rec + 12 * k + 8)};
      auto [it, inserted] = weld.emplace(p, static_cast<int>(m.vertices.size()));
      if (inserted) m.vertices.push_back({p[0], p[1], p[2]});
      tri[static_cast<std::size_t>(k)] = it->second;
    }
    m.triangles.push_back(tri);
  }
  m.triangle_kind.assign(m.triangles.size(), SurfaceKind::wall);
  m.triangle_segment.assign(m.triangles.size(), -1);
  m.vertex_segment.assign(m.vertices.size(), -1);
  m.vertex_station.assign(m.vertices.size(), std::numeric_limits<double>::quiet_NaN());
  return m;
}

/// Loads an OBJ or binary STL file chosen by extension.
inline TriangleMesh read_mesh(const std::string& path) {
  auto ends_with = [&](const char* ext) {
    const std::string e = ext;
    if (path.size() < e.size()) return false;
    std::string tail = path.substr(path.size() - e.size());
    for (auto& c : tail) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return tail == e;
  };
  if (ends_with(".obj")) return decode_obj(read_file(path), path);
  if (ends_with(".stl")) return decode_stl(read_file(path), path);
  throw FormatError(path + ": unknown mesh extension (expected .obj or .stl)");
}

}  // namespace bronchosim
