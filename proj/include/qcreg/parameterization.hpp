#pragma once

#include <cmath>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "qcreg/beltrami.hpp"
#include "qcreg/locate.hpp"
#include "qcreg/mesh.hpp"

namespace qcreg {

class ParameterizationError : public Error {
 public:
  using Error::Error;
};

struct ConformalityStats {
  double mean_abs_mu = 0.0;
  double max_abs_mu = 0.0;
};

struct DiskParam {
  PlanarMesh planar;
  BeltramiField mu;  // of the surface -> disk map, measured in isometric face charts
  std::vector<ConformalityStats> history;  // entry 0 is the harmonic initialization
  bool converged = false;
  bool used_uniform_weights = false;
};

/// Beltrami coefficient of the map from each isometric face chart to the given uv.
inline BeltramiField surface_mu(std::span<const std::array<Vec2, 3>> charts, const std::vector<Face>& faces,
                                std::span<const Vec2> uv) {
  BeltramiField out;
  out.mu.reserve(faces.size());
  for (std::size_t f = 0; f < faces.size(); ++f) {
    const Face& t = faces[f];
    out.mu.push_back(beltrami_of(triangle_derivatives(charts[f], {uv[t[0]], uv[t[1]], uv[t[2]]})));
  }
  return out;
}

inline BeltramiField surface_mu(const TriMesh& mesh, std::span<const Vec2> uv) {
  const auto charts = isometric_charts(mesh);
  return surface_mu(charts, mesh.faces(), uv);
}

inline ConformalityStats conformality(const BeltramiField& mu) {
  ConformalityStats s;
  for (const auto& z : mu.mu) {
    s.mean_abs_mu += std::abs(z);
    s.max_abs_mu = std::max(s.max_abs_mu, std::abs(z));
  }
  if (!mu.mu.empty()) s.mean_abs_mu /= static_cast<double>(mu.size());
  return s;
}

struct ParameterizeOptions {
  int max_iter = 20;
  double tol = 1e-4;
  int max_halvings = 5;
};

namespace detail {

/// Boundary angles proportional to 3D arc length, first loop vertex at angle 0.
inline std::vector<double> arc_length_angles(const TriMesh& mesh) {
  const auto& loop = mesh.boundary();
  std::vector<double> s(loop.size(), 0.0);
  double total = 0.0;
  for (std::size_t k = 0; k < loop.size(); ++k) {
    if (k > 0) s[k] = total;
    total += (mesh.vertices()[loop[(k + 1) % loop.size()]] - mesh.vertices()[loop[k]]).norm();
  }
  for (auto& v : s) v = 2.0 * std::numbers::pi * v / total;
  return s;
}

inline SparseMatrix uniform_laplacian(const TriMesh& mesh) {
  std::vector<Triplet> t;
  for (const auto& e : mesh.edges()) {
    t.emplace_back(e.v0, e.v1, -1.0);
    t.emplace_back(e.v1, e.v0, -1.0);
    t.emplace_back(e.v0, e.v0, 1.0);
    t.emplace_back(e.v1, e.v1, 1.0);
  }
  SparseMatrix L(static_cast<Eigen::Index>(mesh.num_vertices()), static_cast<Eigen::Index>(mesh.num_vertices()));
  L.setFromTriplets(t.begin(), t.end());
  return L;
}

inline std::string face_list(const std::vector<int>& faces) {
  std::string s;
  for (std::size_t i = 0; i < faces.size() && i < 20; ++i) s += (i ? ", " : "") + std::to_string(faces[i]);
  if (faces.size() > 20) s += ", ...";
  return s;
}

}  // namespace detail

/// Conformal map of a disk-topology surface onto the unit disk.
///
/// Starts from the arc-length boundary with a cotangent-harmonic interior (uniform weights if
/// that folds), then lets the boundary slide on the circle under the conformal energy, one
/// damped step per iteration. Steps that raise mean |mu| are halved and finally rejected.
inline DiskParam disk_conformal_parameterize(const TriMesh& mesh, const ParameterizeOptions& opt = {}) {
  auto base = std::make_shared<const TriMesh>(mesh);
  const auto charts = isometric_charts(*base);
  const auto& loop = base->boundary();
  const std::size_t nv = base->num_vertices();
  const StiffnessData cot = assemble_lbs(charts, base->faces(), nv, BeltramiField::constant(base->num_faces(), 0.0).mu);

  const std::vector<double> theta0 = detail::arc_length_angles(*base);
  BoundaryCondition fixed;
  for (std::size_t k = 0; k < loop.size(); ++k)
    fixed.pinned.emplace_back(loop[k], Vec2(std::cos(theta0[k]), std::sin(theta0[k])));
  PlanarMesh seed(base, std::vector<Vec2>(nv, Vec2::Zero()));

  DiskParam out{lbs_solve(seed, cot.matrix, fixed).map, {}, {}, false, false};
  if (!out.planar.is_fold_free()) {
    out.planar = lbs_solve(seed, detail::uniform_laplacian(*base), fixed).map;
    out.used_uniform_weights = true;
    const auto flipped = out.planar.flipped_faces();
    if (!flipped.empty())
      throw ParameterizationError("fold in initial disk map at faces " + detail::face_list(flipped));
  }
  out.mu = surface_mu(charts, base->faces(), out.planar.uv());
  out.history.push_back(conformality(out.mu));

  // Normalization: first boundary vertex at angle 0, the interior vertex nearest the center at 0.
  BoundaryCondition slide = BoundaryCondition::circle(out.planar);
  if (!slide.anchor) {
    out.converged = true;
    return out;
  }
  std::vector<double> theta = theta0;
  LbsOptions step_opt;
  step_opt.max_outer = 1;

  for (int it = 0; it < opt.max_iter; ++it) {
    slide.angles = theta;
    const LbsResult step = lbs_solve(out.planar, cot.matrix, slide, {}, step_opt);
    const std::vector<double>& proposed = step.boundary_angles;
    const double previous = out.history.back().mean_abs_mu;
    bool accepted = false;
    double t = 1.0;
    for (int h = 0; h <= opt.max_halvings && !accepted; ++h, t *= 0.5) {
      std::vector<double> cand(theta.size());
      for (std::size_t k = 0; k < theta.size(); ++k) cand[k] = theta[k] + t * (proposed[k] - theta[k]);
      PlanarMesh candidate = step.map;
      if (h > 0) {
        BoundaryCondition at = slide;
        at.angles = cand;
        LbsOptions none;
        none.max_outer = 0;
        candidate = lbs_solve(out.planar, cot.matrix, at, {}, none).map;
      }
      if (!candidate.is_fold_free()) continue;
      BeltramiField mu = surface_mu(charts, base->faces(), candidate.uv());
      const ConformalityStats stats = conformality(mu);
      if (stats.mean_abs_mu <= previous + 1e-12) {
        accepted = true;
        out.planar = std::move(candidate);
        out.mu = std::move(mu);
        out.history.push_back(stats);
        theta = std::move(cand);
      }
    }
    if (!accepted || previous - out.history.back().mean_abs_mu < opt.tol) {
      out.converged = true;
      break;
    }
  }
  return out;
}

/// Maps disk points back onto the surface by barycentric interpolation of 3D positions.
inline std::vector<Vec3> pull_back_to_surface(const PlanarMesh& param, std::span<const Vec2> points,
                                              double snap = 0.0) {
  const TriangleLocator locator(param);
  std::vector<Vec3> out;
  out.reserve(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    auto hit = locator.locate(points[i]);
    if (!hit) {
      const FacePoint near = locator.nearest(points[i]);
      if (near.distance <= snap) hit = near;
      else
        throw Error("point " + std::to_string(i) + " lies outside the disk image (distance " +
                    std::to_string(near.distance) + " to face " + std::to_string(near.face) + ")");
    }
    const Face& f = param.faces()[hit->face];
    const auto& X = param.base().vertices();
    out.push_back(hit->weights[0] * X[f[0]] + hit->weights[1] * X[f[1]] + hit->weights[2] * X[f[2]]);
  }
  return out;
}

inline std::vector<Vec3> pull_back_to_surface(const DiskParam& param, std::span<const Vec2> points,
                                              double snap = 0.0) {
  return pull_back_to_surface(param.planar, points, snap);
}

}  // namespace qcreg
