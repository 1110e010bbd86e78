#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "qcreg/mesh.hpp"

namespace qcreg {

/// Barycentric coordinates of `p` in triangle (a, b, c).
inline Eigen::Vector3d barycentric(const Vec2& p, const Vec2& a, const Vec2& b, const Vec2& c) {
  const double area = signed_area(a, b, c);
  const double l0 = signed_area(p, b, c) / area;
  const double l1 = signed_area(a, p, c) / area;
  return {l0, l1, 1.0 - l0 - l1};
}

/// Point location result: containing (or nearest) face and barycentric weights.
struct FacePoint {
  int face = -1;
  Eigen::Vector3d weights = Eigen::Vector3d::Zero();
  /// Distance from the query to the face (0 when inside).
  double distance = 0.0;
};

/// Closest point on segment [a, b] to p.
inline Vec2 closest_on_segment(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 ab = b - a;
  const double len2 = ab.squaredNorm();
  if (len2 == 0.0) return a;
  const double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  return a + t * ab;
}

/// Uniform-grid bucket index over the uv triangles of a planar mesh.
class TriangleLocator {
 public:
  explicit TriangleLocator(const PlanarMesh& mesh, double tolerance = 1e-12)
      : mesh_(&mesh), tol_(tolerance) {
    const auto& uv = mesh.uv();
    lo_ = uv.front();
    hi_ = uv.front();
    for (const auto& p : uv) {
      lo_ = lo_.cwiseMin(p);
      hi_ = hi_.cwiseMax(p);
    }
    const Vec2 pad = 1e-9 * (hi_ - lo_).cwiseMax(Vec2(1.0, 1.0));
    lo_ -= pad;
    hi_ += pad;
    res_ = std::max(1, static_cast<int>(std::sqrt(static_cast<double>(mesh.num_faces()) / 2.0)));
    cells_.assign(static_cast<std::size_t>(res_) * res_, {});
    for (std::size_t f = 0; f < mesh.num_faces(); ++f) {
      const auto tri = mesh.triangle(f);
      Vec2 a = tri[0].cwiseMin(tri[1]).cwiseMin(tri[2]);
      Vec2 b = tri[0].cwiseMax(tri[1]).cwiseMax(tri[2]);
      const auto [i0, j0] = cell_of(a);
      const auto [i1, j1] = cell_of(b);
      for (int j = j0; j <= j1; ++j)
        for (int i = i0; i <= i1; ++i) cells_[static_cast<std::size_t>(j) * res_ + i].push_back(static_cast<int>(f));
    }
  }

  /// Face containing `p` (barycentric weights all >= -tolerance), lowest face index on ties.
  std::optional<FacePoint> locate(const Vec2& p) const {
    if (p.x() < lo_.x() || p.y() < lo_.y() || p.x() > hi_.x() || p.y() > hi_.y()) return std::nullopt;
    const auto [i, j] = cell_of(p);
    std::optional<FacePoint> best;
    for (int f : cells_[static_cast<std::size_t>(j) * res_ + i]) {
      const auto tri = mesh_->triangle(f);
      const Eigen::Vector3d w = barycentric(p, tri[0], tri[1], tri[2]);
      if (w.minCoeff() >= -tol_) {
        if (!best || w.minCoeff() > best->weights.minCoeff() + tol_) {
          best = FacePoint{f, w, 0.0};
        }
      }
    }
    return best;
  }

  /// Face nearest to `p` (linear scan); weights are those of the closest point on the face.
  FacePoint nearest(const Vec2& p) const {
    if (auto hit = locate(p)) return *hit;
    FacePoint best;
    best.distance = std::numeric_limits<double>::infinity();
    for (std::size_t f = 0; f < mesh_->num_faces(); ++f) {
      const auto tri = mesh_->triangle(f);
      for (int k = 0; k < 3; ++k) {
        const Vec2 q = closest_on_segment(p, tri[k], tri[(k + 1) % 3]);
        const double d = (q - p).norm();
        if (d < best.distance) {
          best.distance = d;
          best.face = static_cast<int>(f);
          best.weights = barycentric(q, tri[0], tri[1], tri[2]);
        }
      }
    }
    return best;
  }

  const PlanarMesh& mesh() const { return *mesh_; }

 private:
  std::pair<int, int> cell_of(const Vec2& p) const {
    const Vec2 s = (p - lo_).cwiseQuotient(hi_ - lo_) * res_;
    return {std::clamp(static_cast<int>(std::floor(s.x())), 0, res_ - 1),
            std::clamp(static_cast<int>(std::floor(s.y())), 0, res_ - 1)};
  }

  const PlanarMesh* mesh_;
  double tol_;
  Vec2 lo_;
  Vec2 hi_;
  int res_ = 1;
  std::vector<std::vector<int>> cells_;
};

}  // namespace qcreg
