#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <locale>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "qcreg/mesh.hpp"

namespace qcreg {

class IoError : public Error {
 public:
  using Error::Error;
};

/// Raw contents of an OFF/OBJ file before topology validation.
struct MeshData {
  std::vector<Vec3> vertices;
  std::vector<Face> faces;
  std::optional<std::vector<Vec2>> uv;  // per vertex, OBJ `vt` only
};

namespace detail {

inline std::string lower_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  for (auto& ch : ext) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return ext;
}

inline std::string parse_error(const std::filesystem::path& path, std::size_t line, const std::string& what) {
  return "parse error in " + path.string() + ":" + std::to_string(line) + ": " + what;
}

inline MeshData read_off(std::istream& in, const std::filesystem::path& path) {
  MeshData data;
  std::string line;
  std::size_t line_no = 0;
  auto next_line = [&](std::string& out) {
    while (std::getline(in, out)) {
      ++line_no;
      const auto hash = out.find('#');
      if (hash != std::string::npos) out.erase(hash);
      if (out.find_first_not_of(" \t\r") != std::string::npos) return true;
    }
    return false;
  };
  if (!next_line(line)) throw IoError(parse_error(path, line_no, "empty file"));
  std::istringstream header(line);
  std::string magic;
  header >> magic;
  if (magic != "OFF") throw IoError(parse_error(path, line_no, "missing OFF header"));
  long nv = -1, nf = -1, ne = 0;
  if (!(header >> nv)) {
    if (!next_line(line)) throw IoError(parse_error(path, line_no, "missing counts"));
    header = std::istringstream(line);
    header >> nv;
  }
  if (!(header >> nf >> ne) || nv < 0 || nf < 0)
    throw IoError(parse_error(path, line_no, "invalid counts"));
  data.vertices.reserve(nv);
  for (long i = 0; i < nv; ++i) {
    if (!next_line(line)) throw IoError(parse_error(path, line_no, "unexpected end of vertices"));
    std::istringstream s(line);
    double x, y, z;
    if (!(s >> x >> y >> z)) throw IoError(parse_error(path, line_no, "bad vertex"));
    data.vertices.emplace_back(x, y, z);
  }
  data.faces.reserve(nf);
  for (long i = 0; i < nf; ++i) {
    if (!next_line(line)) throw IoError(parse_error(path, line_no, "unexpected end of faces"));
    std::istringstream s(line);
    int k = 0;
    Face f{};
    if (!(s >> k >> f[0] >> f[1] >> f[2])) throw IoError(parse_error(path, line_no, "bad face"));
    if (k != 3) throw IoError(parse_error(path, line_no, "only triangle faces are supported"));
    data.faces.push_back(f);
  }
  return data;
}

inline int obj_index(const std::string& token, std::size_t count, const std::filesystem::path& path,
                     std::size_t line_no) {
  int idx = 0;
  try {
    std::size_t used = 0;
    idx = std::stoi(token, &used);
    if (used != token.size()) throw std::invalid_argument(token);
  } catch (const std::exception&) {
    throw IoError(parse_error(path, line_no, "bad index '" + token + "'"));
  }
  if (idx < 0) idx = static_cast<int>(count) + idx;
  else idx -= 1;
  return idx;
}

inline MeshData read_obj(std::istream& in, const std::filesystem::path& path) {
  MeshData data;
  std::vector<Vec2> texcoords;
  std::vector<std::array<int, 3>> face_tex;
  bool any_tex = false;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream s(line);
    std::string tag;
    if (!(s >> tag)) continue;
    if (tag == "v") {
      double x, y, z;
      if (!(s >> x >> y >> z)) throw IoError(parse_error(path, line_no, "bad vertex"));
      data.vertices.emplace_back(x, y, z);
    } else if (tag == "vt") {
      double u, v;
      if (!(s >> u >> v)) throw IoError(parse_error(path, line_no, "bad texture coordinate"));
      texcoords.emplace_back(u, v);
    } else if (tag == "f") {
      std::vector<std::string> corners;
      std::string c;
      while (s >> c) corners.push_back(c);
      if (corners.size() != 3) throw IoError(parse_error(path, line_no, "only triangle faces are supported"));
      Face f{};
      std::array<int, 3> t{-1, -1, -1};
      for (int k = 0; k < 3; ++k) {
        const std::string& token = corners[k];
        const auto slash = token.find('/');
        f[k] = obj_index(token.substr(0, slash), data.vertices.size(), path, line_no);
        if (slash != std::string::npos) {
          const auto slash2 = token.find('/', slash + 1);
          const std::string vt = token.substr(slash + 1, slash2 == std::string::npos ? std::string::npos : slash2 - slash - 1);
          if (!vt.empty()) {
            t[k] = obj_index(vt, texcoords.size(), path, line_no);
            any_tex = true;
          }
        }
      }
      data.faces.push_back(f);
      face_tex.push_back(t);
    }
  }
  if (any_tex) {
    std::vector<Vec2> uv(data.vertices.size(), Vec2::Constant(std::numeric_limits<double>::quiet_NaN()));
    for (std::size_t i = 0; i < data.faces.size(); ++i) {
      for (int k = 0; k < 3; ++k) {
        const int v = data.faces[i][k];
        const int t = face_tex[i][k];
        if (t < 0 || t >= static_cast<int>(texcoords.size()))
          throw IoError(parse_error(path, 0, "texture index missing or out of range"));
        if (v < 0 || v >= static_cast<int>(uv.size())) continue;
        if (!std::isnan(uv[v].x()) && (uv[v] - texcoords[t]).norm() > 0.0)
          throw IoError(parse_error(path, 0, "vertex " + std::to_string(v) + " has more than one texture coordinate"));
        uv[v] = texcoords[t];
      }
    }
    data.uv = std::move(uv);
  }
  return data;
}

}  // namespace detail

/// Reads an ASCII OFF or OBJ file (chosen by extension) without topology checks.
inline MeshData read_mesh_data(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  in.imbue(std::locale::classic());
  const std::string ext = detail::lower_extension(path);
  if (ext == ".off") return detail::read_off(in, path);
  if (ext == ".obj") return detail::read_obj(in, path);
  throw IoError("unsupported mesh format '" + ext + "' (expected .off or .obj)");
}

/// Loads and validates a disk-topology triangle mesh.
inline TriMesh load_mesh(const std::filesystem::path& path) {
  MeshData data = read_mesh_data(path);
  return TriMesh(std::move(data.vertices), std::move(data.faces));
}

/// Loads a planar mesh: uv from OBJ texture coordinates when present, else the x/y of each vertex.
inline PlanarMesh load_planar_mesh(const std::filesystem::path& path) {
  MeshData data = read_mesh_data(path);
  std::vector<Vec2> uv;
  if (data.uv) {
    uv = std::move(*data.uv);
  } else {
    uv.reserve(data.vertices.size());
    for (const auto& p : data.vertices) uv.emplace_back(p.x(), p.y());
  }
  auto base = std::make_shared<const TriMesh>(std::move(data.vertices), std::move(data.faces));
  return PlanarMesh(std::move(base), std::move(uv));
}

namespace detail {

inline std::ofstream open_for_write(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out.imbue(std::locale::classic());
  out << std::setprecision(17);
  return out;
}

}  // namespace detail

inline void write_off(const std::filesystem::path& path, const TriMesh& mesh) {
  auto out = detail::open_for_write(path);
  out << "OFF\n" << mesh.num_vertices() << ' ' << mesh.num_faces() << ' ' << mesh.num_edges() << '\n';
  for (const auto& p : mesh.vertices()) out << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
  for (const auto& f : mesh.faces()) out << "3 " << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
}

inline void write_obj(const std::filesystem::path& path, const TriMesh& mesh) {
  auto out = detail::open_for_write(path);
  for (const auto& p : mesh.vertices()) out << "v " << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
  for (const auto& f : mesh.faces()) out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
}

/// Writes 3D positions as `v` and planar positions as `vt`, sharing indices.
inline void write_obj(const std::filesystem::path& path, const PlanarMesh& mesh) {
  auto out = detail::open_for_write(path);
  for (const auto& p : mesh.base().vertices()) out << "v " << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
  for (const auto& q : mesh.uv()) out << "vt " << q.x() << ' ' << q.y() << '\n';
  for (const auto& f : mesh.faces())
    out << "f " << f[0] + 1 << '/' << f[0] + 1 << ' ' << f[1] + 1 << '/' << f[1] + 1 << ' ' << f[2] + 1 << '/'
        << f[2] + 1 << '\n';
}

/// Writes a mesh in the format selected by the path's extension.
inline void write_mesh(const std::filesystem::path& path, const TriMesh& mesh) {
  const std::string ext = detail::lower_extension(path);
  if (ext == ".off") return write_off(path, mesh);
  if (ext == ".obj") return write_obj(path, mesh);
  throw IoError("unsupported mesh format '" + ext + "'");
}

}  // namespace qcreg
