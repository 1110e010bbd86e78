#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <locale>
#include <queue>
#include <vector>

#include "qcreg/locate.hpp"
#include "qcreg/mesh.hpp"

namespace qcreg {

struct CurvatureField {
  std::vector<double> H;
  std::vector<Vec3> normals;
};

/// Rasterized curvature over [-1, 1]^2. Pixel (i, j) has center ((i+0.5)/n*2-1, (j+0.5)/n*2-1)
/// and is stored at j * n + i.
struct CurvatureImage {
  int n = 0;
  std::vector<double> values;
  std::vector<char> mask;

  double at(int i, int j) const { return values[static_cast<std::size_t>(j) * n + i]; }
  bool inside(int i, int j) const { return mask[static_cast<std::size_t>(j) * n + i] != 0; }
};

/// Area-weighted unit vertex normals.
inline std::vector<Vec3> vertex_normals(const TriMesh& mesh) {
  std::vector<Vec3> n(mesh.num_vertices(), Vec3::Zero());
  for (const auto& f : mesh.faces()) {
    const Vec3& a = mesh.vertices()[f[0]];
    const Vec3 w = (mesh.vertices()[f[1]] - a).cross(mesh.vertices()[f[2]] - a);  // twice the area
    for (int v : f) n[v] += w;
  }
  for (std::size_t v = 0; v < n.size(); ++v) {
    const double len = n[v].norm();
    if (!(len > 0.0)) throw MeshError("zero-area neighborhood at vertex " + std::to_string(v));
    n[v] /= len;
  }
  return n;
}

/// Signed mean curvature per vertex from the cotangent mean-curvature normal with mixed Voronoi
/// areas. Positive on a sphere with outward normals. Boundary vertices take the value of the
/// nearest interior vertex.
inline CurvatureField mean_curvature(const TriMesh& mesh) {
  const std::size_t nv = mesh.num_vertices();
  const auto& X = mesh.vertices();
  std::vector<Vec3> lap(nv, Vec3::Zero());
  std::vector<double> area(nv, 0.0);
  for (const auto& f : mesh.faces()) {
    std::array<double, 3> cot{};
    std::array<double, 3> dots{};
    for (int k = 0; k < 3; ++k) {
      const Vec3 e1 = X[f[(k + 1) % 3]] - X[f[k]];
      const Vec3 e2 = X[f[(k + 2) % 3]] - X[f[k]];
      dots[k] = e1.dot(e2);
      cot[k] = dots[k] / e1.cross(e2).norm();
    }
    const double A = 0.5 * (X[f[1]] - X[f[0]]).cross(X[f[2]] - X[f[0]]).norm();
    for (int k = 0; k < 3; ++k) {
      const int i = f[(k + 1) % 3], j = f[(k + 2) % 3];
      const Vec3 d = X[i] - X[j];
      lap[i] += cot[k] * d;
      lap[j] -= cot[k] * d;
    }
    const bool obtuse = dots[0] < 0.0 || dots[1] < 0.0 || dots[2] < 0.0;
    for (int k = 0; k < 3; ++k) {
      const int p = f[k];
      if (!obtuse) {
        const double opp1 = (X[p] - X[f[(k + 1) % 3]]).squaredNorm();  // edge to next, opposite corner k+2
        const double opp2 = (X[p] - X[f[(k + 2) % 3]]).squaredNorm();
        area[p] += (opp1 * cot[(k + 2) % 3] + opp2 * cot[(k + 1) % 3]) / 8.0;
      } else {
        area[p] += dots[k] < 0.0 ? A / 2.0 : A / 4.0;
      }
    }
  }
  CurvatureField out;
  out.normals = vertex_normals(mesh);
  out.H.assign(nv, 0.0);
  for (std::size_t v = 0; v < nv; ++v) {
    if (!(area[v] > 0.0)) throw MeshError("zero-area neighborhood at vertex " + std::to_string(v));
    // lap = sum cot (x_i - x_j) = 2 A (2 H n) with this sign convention
    out.H[v] = lap[v].dot(out.normals[v]) / (4.0 * area[v]);
  }

  // Boundary: copy from the nearest interior vertex found by breadth-first search.
  for (std::size_t v = 0; v < nv; ++v) {
    if (!mesh.is_boundary_vertex(static_cast<int>(v))) continue;
    std::vector<int> frontier{static_cast<int>(v)};
    std::vector<char> seen(nv, 0);
    seen[v] = 1;
    int best = -1;
    while (!frontier.empty() && best < 0) {
      std::vector<int> next;
      for (int u : frontier)
        for (int w : mesh.vertex_neighbors()[u]) {
          if (seen[w]) continue;
          seen[w] = 1;
          next.push_back(w);
        }
      double best_d = std::numeric_limits<double>::infinity();
      for (int w : next)
        if (!mesh.is_boundary_vertex(w) && (X[w] - X[v]).norm() < best_d) {
          best_d = (X[w] - X[v]).norm();
          best = w;
        }
      frontier = std::move(next);
    }
    if (best >= 0) out.H[v] = out.H[best];
  }
  return out;
}

/// Samples H over the disk image and rescales masked pixels affinely to [0, 255].
inline CurvatureImage curvature_image(const PlanarMesh& disk, const CurvatureField& H, int n) {
  if (n < 8) throw Error("curvature image size must be at least 8");
  if (H.H.size() != disk.num_vertices()) throw Error("curvature field size does not match vertex count");
  const TriangleLocator locator(disk);
  CurvatureImage img;
  img.n = n;
  img.values.assign(static_cast<std::size_t>(n) * n, 0.0);
  img.mask.assign(static_cast<std::size_t>(n) * n, 0);
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      const Vec2 p((i + 0.5) / n * 2.0 - 1.0, (j + 0.5) / n * 2.0 - 1.0);
      const auto hit = locator.locate(p);
      if (!hit) continue;
      const Face& f = disk.faces()[hit->face];
      const double h = hit->weights[0] * H.H[f[0]] + hit->weights[1] * H.H[f[1]] + hit->weights[2] * H.H[f[2]];
      const std::size_t k = static_cast<std::size_t>(j) * n + i;
      img.values[k] = h;
      img.mask[k] = 1;
      lo = std::min(lo, h);
      hi = std::max(hi, h);
    }
  // interpolation noise on a constant field is not a range
  const bool flat = !(hi - lo > 1e-12 * std::max({1.0, std::abs(lo), std::abs(hi)}));
  for (std::size_t k = 0; k < img.values.size(); ++k) {
    if (!img.mask[k]) continue;
    img.values[k] = flat ? 0.0 : std::clamp(255.0 * (img.values[k] - lo) / (hi - lo), 0.0, 255.0);
  }
  return img;
}

/// ASCII PGM, top row = largest y.
inline void write_pgm(const std::filesystem::path& path, const CurvatureImage& img) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out.imbue(std::locale::classic());
  out << "P2\n" << img.n << ' ' << img.n << "\n255\n";
  for (int j = img.n - 1; j >= 0; --j) {
    for (int i = 0; i < img.n; ++i) out << (i ? " " : "") << static_cast<int>(std::lround(img.at(i, j)));
    out << '\n';
  }
}

/// CSV with one line per grid row j (ascending y); masked-out pixels are left empty.
inline void write_csv(const std::filesystem::path& path, const CurvatureImage& img) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out.imbue(std::locale::classic());
  out << std::setprecision(17);
  for (int j = 0; j < img.n; ++j) {
    for (int i = 0; i < img.n; ++i) {
      if (i) out << ',';
      if (img.inside(i, j)) out << img.at(i, j);
    }
    out << '\n';
  }
}

}  // namespace qcreg
