#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace qcreg {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Face = std::array<int, 3>;
using Complex = std::complex<double>;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MeshError : public Error {
 public:
  using Error::Error;
};

/// Undirected edge with its one or two incident faces. `faces[1] == -1` on the boundary.
/// `faces[0]` is the face that traverses the edge as v0 -> v1 when such a face exists.
struct Edge {
  int v0 = -1;
  int v1 = -1;
  std::array<int, 2> faces{-1, -1};

  bool is_boundary() const { return faces[1] < 0; }
};

/// Compressed adjacency lists (offset/index arrays).
struct Adjacency {
  std::vector<int> offsets;
  std::vector<int> indices;

  std::span<const int> operator[](std::size_t i) const {
    return {indices.data() + offsets[i], static_cast<std::size_t>(offsets[i + 1] - offsets[i])};
  }
  std::size_t size() const { return offsets.empty() ? 0 : offsets.size() - 1; }
};

namespace detail {

inline Adjacency build_adjacency(std::size_t n, const std::vector<std::pair<int, int>>& pairs) {
  Adjacency adj;
  adj.offsets.assign(n + 1, 0);
  for (const auto& [a, b] : pairs) ++adj.offsets[a + 1];
  for (std::size_t i = 0; i < n; ++i) adj.offsets[i + 1] += adj.offsets[i];
  adj.indices.resize(pairs.size());
  std::vector<int> cursor(adj.offsets.begin(), adj.offsets.end() - 1);
  for (const auto& [a, b] : pairs) adj.indices[cursor[a]++] = b;
  for (std::size_t i = 0; i < n; ++i)
    std::sort(adj.indices.begin() + adj.offsets[i], adj.indices.begin() + adj.offsets[i + 1]);
  return adj;
}

inline std::uint64_t edge_key(int a, int b) {
  if (a > b) std::swap(a, b);
  return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint32_t>(b);
}

}  // namespace detail

/// Immutable indexed triangle mesh with disk topology.
///
/// Construction validates the mesh: valid distinct indices, edge-manifold, consistently
/// oriented, every vertex referenced, Euler characteristic 1 and exactly one boundary loop.
/// The boundary loop is ordered along the face orientation and starts at the smallest
/// boundary vertex index.
class TriMesh {
 public:
  TriMesh(std::vector<Vec3> vertices, std::vector<Face> faces)
      : vertices_(std::move(vertices)), faces_(std::move(faces)) {
    build();
  }

  const std::vector<Vec3>& vertices() const { return vertices_; }
  const std::vector<Face>& faces() const { return faces_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<int>& boundary() const { return boundary_; }

  std::size_t num_vertices() const { return vertices_.size(); }
  std::size_t num_faces() const { return faces_.size(); }
  std::size_t num_edges() const { return edges_.size(); }

  bool is_boundary_vertex(int v) const { return boundary_index_[v] >= 0; }
  /// Position of `v` in the boundary loop, or -1 for interior vertices.
  int boundary_index(int v) const { return boundary_index_[v]; }

  /// Faces incident to each vertex, sorted by face index.
  const Adjacency& vertex_faces() const { return vertex_faces_; }
  /// Vertices adjacent to each vertex, sorted by index.
  const Adjacency& vertex_neighbors() const { return vertex_neighbors_; }
  /// Edge ids incident to each face, in corner order (edge opposite corner k at slot k).
  const std::vector<std::array<int, 3>>& face_edges() const { return face_edges_; }

  int euler_characteristic() const {
    return static_cast<int>(vertices_.size()) - static_cast<int>(edges_.size()) +
           static_cast<int>(faces_.size());
  }

 private:
  void build();

  std::vector<Vec3> vertices_;
  std::vector<Face> faces_;
  std::vector<Edge> edges_;
  std::vector<std::array<int, 3>> face_edges_;
  std::vector<int> boundary_;
  std::vector<int> boundary_index_;
  Adjacency vertex_faces_;
  Adjacency vertex_neighbors_;
};

inline void TriMesh::build() {
  const int nv = static_cast<int>(vertices_.size());
  if (faces_.empty()) throw MeshError("mesh has no faces");
  for (const auto& p : vertices_)
    if (!p.allFinite()) throw MeshError("non-finite vertex coordinate");

  std::vector<char> referenced(nv, 0);
  std::map<std::array<int, 3>, int> seen_faces;
  for (std::size_t f = 0; f < faces_.size(); ++f) {
    const Face& t = faces_[f];
    for (int k = 0; k < 3; ++k) {
      if (t[k] < 0 || t[k] >= nv)
        throw MeshError("face " + std::to_string(f) + " references invalid vertex " +
                        std::to_string(t[k]));
      referenced[t[k]] = 1;
    }
    if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2])
      throw MeshError("face " + std::to_string(f) + " repeats a vertex");
    std::array<int, 3> key = t;
    std::sort(key.begin(), key.end());
    if (!seen_faces.emplace(key, static_cast<int>(f)).second)
      throw MeshError("non-manifold edge: face " + std::to_string(f) + " duplicates face " +
                      std::to_string(seen_faces[key]));
  }
  for (int v = 0; v < nv; ++v)
    if (!referenced[v]) throw MeshError("vertex " + std::to_string(v) + " is not referenced");

  // Directed half-edges: (from, to) -> face.
  std::map<std::uint64_t, int> edge_ids;
  face_edges_.assign(faces_.size(), {-1, -1, -1});
  for (std::size_t f = 0; f < faces_.size(); ++f) {
    const Face& t = faces_[f];
    for (int k = 0; k < 3; ++k) {
      const int a = t[(k + 1) % 3];
      const int b = t[(k + 2) % 3];
      const auto key = detail::edge_key(a, b);
      auto it = edge_ids.find(key);
      if (it == edge_ids.end()) {
        Edge e;
        e.v0 = std::min(a, b);
        e.v1 = std::max(a, b);
        e.faces = {static_cast<int>(f), -1};
        edge_ids.emplace(key, static_cast<int>(edges_.size()));
        face_edges_[f][k] = static_cast<int>(edges_.size());
        edges_.push_back(e);
        continue;
      }
      Edge& e = edges_[it->second];
      if (e.faces[1] >= 0)
        throw MeshError("non-manifold edge (" + std::to_string(e.v0) + ", " +
                        std::to_string(e.v1) + ") has more than two faces");
      // The first face must traverse the edge opposite to this one.
      const Face& g = faces_[e.faces[0]];
      bool same_direction = false;
      for (int j = 0; j < 3; ++j)
        if (g[j] == a && g[(j + 1) % 3] == b) same_direction = true;
      if (same_direction)
        throw MeshError("inconsistent face orientation across edge (" + std::to_string(e.v0) +
                        ", " + std::to_string(e.v1) + ")");
      e.faces[1] = static_cast<int>(f);
      face_edges_[f][k] = it->second;
    }
  }
  // Normalize so faces[0] traverses v0 -> v1.
  for (auto& e : edges_) {
    const Face& g = faces_[e.faces[0]];
    bool forward = false;
    for (int j = 0; j < 3; ++j)
      if (g[j] == e.v0 && g[(j + 1) % 3] == e.v1) forward = true;
    if (!forward) std::swap(e.faces[0], e.faces[1]);
  }

  // Boundary half-edges in face orientation.
  std::vector<int> next(nv, -1);
  int boundary_edges = 0;
  for (const auto& e : edges_) {
    if (!e.is_boundary() && e.faces[0] >= 0) continue;
    const int f = e.faces[0] >= 0 ? e.faces[0] : e.faces[1];
    const Face& g = faces_[f];
    int from = -1, to = -1;
    for (int j = 0; j < 3; ++j) {
      if ((g[j] == e.v0 && g[(j + 1) % 3] == e.v1) || (g[j] == e.v1 && g[(j + 1) % 3] == e.v0)) {
        from = g[j];
        to = g[(j + 1) % 3];
      }
    }
    if (next[from] >= 0)
      throw MeshError("non-manifold boundary vertex " + std::to_string(from));
    next[from] = to;
    ++boundary_edges;
  }
  // Boundary edges keep their single face in slot 0.
  for (auto& e : edges_)
    if (e.faces[0] < 0) std::swap(e.faces[0], e.faces[1]);

  int loops = 0;
  std::vector<char> visited(nv, 0);
  for (int v = 0; v < nv; ++v) {
    if (next[v] < 0 || visited[v]) continue;
    ++loops;
    int u = v;
    while (!visited[u]) {
      visited[u] = 1;
      u = next[u];
    }
  }
  const int chi = euler_characteristic();
  if (loops != 1 || chi != 1)
    throw MeshError("disk topology violated: " + std::to_string(loops) + " boundary loops, " +
                    "Euler characteristic " + std::to_string(chi));

  int start = -1;
  for (int v = 0; v < nv && start < 0; ++v)
    if (next[v] >= 0) start = v;
  boundary_index_.assign(nv, -1);
  int u = start;
  do {
    boundary_index_[u] = static_cast<int>(boundary_.size());
    boundary_.push_back(u);
    u = next[u];
  } while (u != start);
  if (static_cast<int>(boundary_.size()) != boundary_edges)
    throw MeshError("boundary is not a single simple loop");

  std::vector<std::pair<int, int>> vf;
  vf.reserve(faces_.size() * 3);
  for (std::size_t f = 0; f < faces_.size(); ++f)
    for (int k = 0; k < 3; ++k) vf.emplace_back(faces_[f][k], static_cast<int>(f));
  vertex_faces_ = detail::build_adjacency(nv, vf);

  std::vector<std::pair<int, int>> vv;
  vv.reserve(edges_.size() * 2);
  for (const auto& e : edges_) {
    vv.emplace_back(e.v0, e.v1);
    vv.emplace_back(e.v1, e.v0);
  }
  vertex_neighbors_ = detail::build_adjacency(nv, vv);
}

/// Boundary loop of a disk mesh (counterclockwise w.r.t. face orientation, smallest index first).
inline std::vector<int> boundary_loop(const TriMesh& mesh) { return mesh.boundary(); }

/// Unsigned area of every face of a 3D mesh.
inline std::vector<double> face_areas(const TriMesh& mesh) {
  std::vector<double> out(mesh.num_faces());
  const auto& x = mesh.vertices();
  for (std::size_t f = 0; f < out.size(); ++f) {
    const Face& t = mesh.faces()[f];
    out[f] = 0.5 * (x[t[1]] - x[t[0]]).cross(x[t[2]] - x[t[0]]).norm();
  }
  return out;
}

inline double signed_area(const Vec2& a, const Vec2& b, const Vec2& c) {
  return 0.5 * ((b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x()));
}

/// A disk mesh together with one planar (uv) position per vertex.
class PlanarMesh {
 public:
  PlanarMesh(std::shared_ptr<const TriMesh> base, std::vector<Vec2> uv)
      : base_(std::move(base)), uv_(std::move(uv)) {
    if (!base_) throw MeshError("planar mesh without base mesh");
    if (uv_.size() != base_->num_vertices())
      throw MeshError("uv count " + std::to_string(uv_.size()) + " does not match vertex count " +
                      std::to_string(base_->num_vertices()));
    for (const auto& p : uv_)
      if (!p.allFinite()) throw MeshError("non-finite uv coordinate");
  }

  const TriMesh& base() const { return *base_; }
  const std::shared_ptr<const TriMesh>& base_ptr() const { return base_; }
  const std::vector<Vec2>& uv() const { return uv_; }
  std::size_t num_vertices() const { return uv_.size(); }
  std::size_t num_faces() const { return base_->num_faces(); }
  const std::vector<Face>& faces() const { return base_->faces(); }

  std::array<Vec2, 3> triangle(std::size_t f) const {
    const Face& t = base_->faces()[f];
    return {uv_[t[0]], uv_[t[1]], uv_[t[2]]};
  }

  double signed_area(std::size_t f) const {
    const auto tri = triangle(f);
    return qcreg::signed_area(tri[0], tri[1], tri[2]);
  }

  /// Faces with non-positive signed area.
  std::vector<int> flipped_faces() const {
    std::vector<int> out;
    for (std::size_t f = 0; f < num_faces(); ++f)
      if (!(signed_area(f) > 0.0)) out.push_back(static_cast<int>(f));
    return out;
  }
  bool is_fold_free() const { return flipped_faces().empty(); }

  /// Same base mesh, new planar positions.
  PlanarMesh with_uv(std::vector<Vec2> uv) const { return PlanarMesh(base_, std::move(uv)); }

 private:
  std::shared_ptr<const TriMesh> base_;
  std::vector<Vec2> uv_;
};

/// Unsigned uv area of every face.
inline std::vector<double> face_areas(const PlanarMesh& mesh) {
  std::vector<double> out(mesh.num_faces());
  for (std::size_t f = 0; f < out.size(); ++f) out[f] = std::abs(mesh.signed_area(f));
  return out;
}

/// Partial derivatives of a piecewise-linear map on one face:
/// u_x = a, u_y = b, v_x = c, v_y = d.
struct FaceDerivatives {
  double a = 1.0;
  double b = 0.0;
  double c = 0.0;
  double d = 1.0;

  double determinant() const { return a * d - b * c; }
};

/// Derivatives of the affine map sending triangle `src` onto triangle `dst`
/// (corner k to corner k). Solves D * [e1 e2] = [w1 w2] with e_k, w_k the edge vectors
/// from corner 0.
inline FaceDerivatives triangle_derivatives(const std::array<Vec2, 3>& src,
                                            const std::array<Vec2, 3>& dst) {
  const Vec2 e1 = src[1] - src[0];
  const Vec2 e2 = src[2] - src[0];
  const Vec2 w1 = dst[1] - dst[0];
  const Vec2 w2 = dst[2] - dst[0];
  const double det = e1.x() * e2.y() - e2.x() * e1.y();
  // Inverse of [e1 e2] is [ e2.y -e2.x ; -e1.y e1.x ] / det.
  FaceDerivatives out;
  out.a = (w1.x() * e2.y() - w2.x() * e1.y()) / det;
  out.b = (-w1.x() * e2.x() + w2.x() * e1.x()) / det;
  out.c = (w1.y() * e2.y() - w2.y() * e1.y()) / det;
  out.d = (-w1.y() * e2.x() + w2.y() * e1.x()) / det;
  return out;
}

/// Lays a 3D triangle rigidly into the plane: corner 0 at the origin, corner 1 on +x,
/// corner 2 in the upper half plane.
inline std::array<Vec2, 3> flatten_triangle(const Vec3& p0, const Vec3& p1, const Vec3& p2) {
  const Vec3 e1 = p1 - p0;
  const Vec3 e2 = p2 - p0;
  const double l1 = e1.norm();
  const Vec3 x_axis = e1 / l1;
  const double x2 = e2.dot(x_axis);
  const double y2 = e1.cross(e2).norm() / l1;
  return {Vec2(0.0, 0.0), Vec2(l1, 0.0), Vec2(x2, y2)};
}

/// Per-face isometric charts of a 3D mesh.
inline std::vector<std::array<Vec2, 3>> isometric_charts(const TriMesh& mesh) {
  std::vector<std::array<Vec2, 3>> out(mesh.num_faces());
  const auto& x = mesh.vertices();
  for (std::size_t f = 0; f < out.size(); ++f) {
    const Face& t = mesh.faces()[f];
    out[f] = flatten_triangle(x[t[0]], x[t[1]], x[t[2]]);
  }
  return out;
}

/// Derivatives of the piecewise-linear map source.uv -> target_uv on every face.
/// Throws when a source face is degenerate (|area| below `degenerate_tol` times the mean
/// face area) or inverted.
inline std::vector<FaceDerivatives> face_derivatives(const PlanarMesh& source,
                                                     std::span<const Vec2> target_uv,
                                                     double degenerate_tol = 1e-14) {
  if (target_uv.size() != source.num_vertices())
    throw MeshError("target uv count does not match vertex count");
  const std::size_t nf = source.num_faces();
  double mean_area = 0.0;
  for (std::size_t f = 0; f < nf; ++f) mean_area += std::abs(source.signed_area(f));
  mean_area /= static_cast<double>(nf);
  std::vector<FaceDerivatives> out(nf);
  for (std::size_t f = 0; f < nf; ++f) {
    const double area = source.signed_area(f);
    if (area <= degenerate_tol * mean_area)
      throw MeshError("degenerate or inverted source face " + std::to_string(f));
    const Face& t = source.faces()[f];
    out[f] = triangle_derivatives(source.triangle(f),
                                  {target_uv[t[0]], target_uv[t[1]], target_uv[t[2]]});
  }
  return out;
}

inline double mean_edge_length(const TriMesh& mesh) {
  double sum = 0.0;
  for (const auto& e : mesh.edges()) sum += (mesh.vertices()[e.v0] - mesh.vertices()[e.v1]).norm();
  return sum / static_cast<double>(mesh.num_edges());
}

inline double mean_edge_length(const PlanarMesh& mesh) {
  double sum = 0.0;
  for (const auto& e : mesh.base().edges()) sum += (mesh.uv()[e.v0] - mesh.uv()[e.v1]).norm();
  return sum / static_cast<double>(mesh.base().num_edges());
}

}  // namespace qcreg
