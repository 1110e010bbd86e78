#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <numbers>
#include <random>
#include <vector>

#include "qcreg/mesh.hpp"

namespace qcreg {

/// Portable random source: mt19937_64 with hand-rolled conversions, so sequences are
/// identical across standard libraries.
class Rng {
 public:
  static constexpr const char* kName = "mt19937_64";

  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller (no cached second value, to keep draws one-to-one).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  std::uint64_t next() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

namespace detail {

inline void orient_ccw(Face& f, const std::vector<Vec2>& p) {
  if (signed_area(p[f[0]], p[f[1]], p[f[2]]) < 0.0) std::swap(f[1], f[2]);
}

}  // namespace detail

/// Triangulated unit disk from `rings` concentric rings (ring k holds 6k vertices).
/// Vertex count is 1 + 3 rings (rings + 1). Interior vertices are optionally jittered by
/// `jitter` times the ring spacing.
inline PlanarMesh unit_disk_mesh(int rings, double jitter = 0.0, std::uint64_t seed = 1) {
  if (rings < 1) throw MeshError("disk mesh needs at least one ring");
  std::vector<Vec2> p{Vec2::Zero()};
  std::vector<int> ring_start{0};
  for (int k = 1; k <= rings; ++k) {
    ring_start.push_back(static_cast<int>(p.size()));
    const int n = 6 * k;
    const double r = static_cast<double>(k) / rings;
    for (int j = 0; j < n; ++j) {
      const double a = 2.0 * std::numbers::pi * j / n;
      p.emplace_back(r * std::cos(a), r * std::sin(a));
    }
  }
  ring_start.push_back(static_cast<int>(p.size()));

  std::vector<Face> faces;
  for (int j = 0; j < 6; ++j) faces.push_back({0, 1 + j, 1 + (j + 1) % 6});
  for (int k = 2; k <= rings; ++k) {
    const int m = 6 * (k - 1), n = 6 * k;
    const int in0 = ring_start[k - 1], out0 = ring_start[k];
    auto angle_in = [&](int i) { return 2.0 * std::numbers::pi * i / m; };
    auto angle_out = [&](int j) { return 2.0 * std::numbers::pi * j / n; };
    int i = 0, j = 0;
    while (i < m || j < n) {
      const bool advance_outer = i >= m || (j < n && angle_out(j + 1) <= angle_in(i + 1) + 1e-12);
      if (advance_outer) {
        faces.push_back({in0 + i % m, out0 + j % n, out0 + (j + 1) % n});
        ++j;
      } else {
        faces.push_back({in0 + i % m, out0 + j % n, in0 + (i + 1) % m});
        ++i;
      }
    }
  }
  for (auto& f : faces) detail::orient_ccw(f, p);

  if (jitter > 0.0) {
    std::vector<std::vector<int>> incident(p.size());
    for (std::size_t f = 0; f < faces.size(); ++f)
      for (int v : faces[f]) incident[v].push_back(static_cast<int>(f));
    Rng rng(seed);
    const double h = 1.0 / rings;
    const double min_area = 0.1 * h * h;
    for (int v = 1; v < ring_start[rings]; ++v) {
      const double a = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const double r = jitter * h * rng.uniform();
      const Vec2 old = p[v];
      p[v] += Vec2(r * std::cos(a), r * std::sin(a));
      // moves that would pinch a neighboring triangle are dropped
      for (int f : incident[v]) {
        if (signed_area(p[faces[f][0]], p[faces[f][1]], p[faces[f][2]]) < min_area) {
          p[v] = old;
          break;
        }
      }
    }
  }
  std::vector<Vec3> x;
  x.reserve(p.size());
  for (const auto& q : p) x.emplace_back(q.x(), q.y(), 0.0);
  auto base = std::make_shared<const TriMesh>(std::move(x), std::move(faces));
  return PlanarMesh(std::move(base), std::move(p));
}

/// Regular grid on [lo, hi]^2 with n x n cells, quads split along alternating diagonals.
inline PlanarMesh square_grid_mesh(int n, double lo = 0.0, double hi = 1.0) {
  std::vector<Vec2> p;
  for (int j = 0; j <= n; ++j)
    for (int i = 0; i <= n; ++i) p.emplace_back(lo + (hi - lo) * i / n, lo + (hi - lo) * j / n);
  std::vector<Face> faces;
  auto id = [n](int i, int j) { return j * (n + 1) + i; };
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      if ((i + j) % 2 == 0) {
        faces.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
        faces.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
      } else {
        faces.push_back({id(i, j), id(i + 1, j), id(i, j + 1)});
        faces.push_back({id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)});
      }
    }
  std::vector<Vec3> x;
  for (const auto& q : p) x.emplace_back(q.x(), q.y(), 0.0);
  auto base = std::make_shared<const TriMesh>(std::move(x), std::move(faces));
  return PlanarMesh(std::move(base), std::move(p));
}

/// Point of the unit hemisphere (z >= 0) for a point of the unit disk: polar angle r * pi/2.
inline Vec3 disk_to_hemisphere(const Vec2& q) {
  const double r = q.norm();
  const double phi = std::atan2(q.y(), q.x());
  const double th = r * std::numbers::pi / 2.0;
  return {std::sin(th) * std::cos(phi), std::sin(th) * std::sin(phi), std::cos(th)};
}

/// Unit hemisphere over the ring-disk triangulation; faces oriented with outward normals.
inline TriMesh hemisphere_mesh(int rings) {
  const PlanarMesh disk = unit_disk_mesh(rings);
  std::vector<Vec3> x;
  for (const auto& q : disk.uv()) x.push_back(disk_to_hemisphere(q));
  return TriMesh(std::move(x), disk.faces());
}

/// Icosphere of the given radius and subdivision level with the cap z > cap_height * radius
/// removed, which leaves a disk. Level 5 has 10242 vertices before the cut.
inline TriMesh capped_icosphere(int level, double radius = 1.0, double cap_height = 0.9) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> v = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                         {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  for (auto& p : v) p.normalize();
  std::vector<Face> f = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
                         {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
                         {3, 8, 9},  {4, 9, 5},  {2, 4, 11},  {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
  for (int l = 0; l < level; ++l) {
    std::map<std::uint64_t, int> mid;
    auto midpoint = [&](int a, int b) {
      const auto key = detail::edge_key(a, b);
      auto it = mid.find(key);
      if (it != mid.end()) return it->second;
      v.push_back((v[a] + v[b]).normalized());
      mid.emplace(key, static_cast<int>(v.size()) - 1);
      return static_cast<int>(v.size()) - 1;
    };
    std::vector<Face> g;
    g.reserve(f.size() * 4);
    for (const auto& tri : f) {
      const int a = midpoint(tri[0], tri[1]), b = midpoint(tri[1], tri[2]), c = midpoint(tri[2], tri[0]);
      g.push_back({tri[0], a, c});
      g.push_back({tri[1], b, a});
      g.push_back({tri[2], c, b});
      g.push_back({a, b, c});
    }
    f = std::move(g);
  }
  std::vector<int> remap(v.size(), -1);
  std::vector<Vec3> x;
  std::vector<Face> faces;
  for (const auto& tri : f) {
    bool cut = false;
    for (int k = 0; k < 3; ++k) cut = cut || v[tri[k]].z() > cap_height;
    if (cut) continue;
    Face nf{};
    for (int k = 0; k < 3; ++k) {
      if (remap[tri[k]] < 0) {
        remap[tri[k]] = static_cast<int>(x.size());
        x.push_back(radius * v[tri[k]]);
      }
      nf[k] = remap[tri[k]];
    }
    faces.push_back(nf);
  }
  return TriMesh(std::move(x), std::move(faces));
}

/// Open partial cylinder of the given radius: angle in [0, sweep], height in [0, height].
inline TriMesh partial_cylinder(double radius, double sweep, double height, int n_around, int n_up) {
  std::vector<Vec3> x;
  for (int j = 0; j <= n_up; ++j)
    for (int i = 0; i <= n_around; ++i) {
      const double a = sweep * i / n_around;
      x.emplace_back(radius * std::cos(a), radius * std::sin(a), height * j / n_up);
    }
  std::vector<Face> faces;
  auto id = [n_around](int i, int j) { return j * (n_around + 1) + i; };
  for (int j = 0; j < n_up; ++j)
    for (int i = 0; i < n_around; ++i) {
      faces.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
      faces.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
    }
  return TriMesh(std::move(x), std::move(faces));
}

}  // namespace qcreg
