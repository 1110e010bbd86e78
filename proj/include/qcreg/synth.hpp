#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "qcreg/beltrami.hpp"
#include "qcreg/generators.hpp"
#include "qcreg/landmark.hpp"
#include "qcreg/locate.hpp"
#include "qcreg/spectral.hpp"

namespace qcreg {

struct SynthConfig {
  std::uint64_t seed = 1;
  int grid_n = 64;
  double amplitude = 0.3;
  int cutoff = 8;
  bool rotation = false;

  void validate() const {
    if (!valid_grid_size(grid_n)) throw SpectralError("grid size must be a power of two >= 8");
    if (!(amplitude >= 0.0 && amplitude < 1.0)) throw Error("amplitude must lie in [0, 1)");
    if (cutoff < 1 || cutoff > grid_n / 2) throw SpectralError("cutoff must lie in [1, grid_n/2]");
  }
};

/// Complex white noise, low-passed to the cutoff block, scaled so the largest modulus equals
/// the amplitude.
inline GridField random_smooth_mu(const SynthConfig& cfg) {
  cfg.validate();
  GridField g(cfg.grid_n);
  if (cfg.amplitude == 0.0) return g;
  Rng rng(cfg.seed);
  for (auto& z : g.values) {
    const double re = rng.normal();
    z = Complex(re, rng.normal());
  }
  g = compress(g, cfg.cutoff);
  double peak = 0.0;
  for (const auto& z : g.values) peak = std::max(peak, std::abs(z));
  if (peak > 0.0)
    for (auto& z : g.values) z *= cfg.amplitude / peak;
  return g;
}

/// Full-band random field whose spectral amplitude decays as (1 + |frequency|)^-exponent,
/// scaled to the configured amplitude. The cutoff is ignored.
inline GridField random_power_law_mu(const SynthConfig& cfg, double exponent = 3.0) {
  cfg.validate();
  const int n = cfg.grid_n;
  Spectrum s{n, std::vector<Complex>(static_cast<std::size_t>(n) * n)};
  Rng rng(cfg.seed);
  for (int v = 0; v < n; ++v)
    for (int u = 0; u < n; ++u) {
      const double re = rng.normal();
      const double f = std::hypot(Spectrum::frequency(u, n), Spectrum::frequency(v, n));
      s(u, v) = Complex(re, rng.normal()) * std::pow(1.0 + f, -exponent);
    }
  GridField g = idft2(s);
  double peak = 0.0;
  for (const auto& z : g.values) peak = std::max(peak, std::abs(z));
  for (auto& z : g.values) z = peak > 0.0 ? z * (cfg.amplitude / peak) : Complex(0.0, 0.0);
  return g;
}

/// Random rotation angle drawn from a seed, used when SynthConfig::rotation is set.
inline double synth_rotation_angle(std::uint64_t seed) {
  Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
  return rng.uniform(0.0, 2.0 * std::numbers::pi);
}

struct Distortion {
  PlanarMesh mesh;
  LandmarkSet landmarks;
  BeltramiField mu;
};

/// Image of a point of `disk` under the map given by `mapped` (same topology): located by
/// barycentric coordinates in the source face.
inline Vec2 transfer_point(const TriangleLocator& locator, const PlanarMesh& mapped, const Vec2& p) {
  const FacePoint fp = locator.nearest(p);
  const Face& f = mapped.faces()[fp.face];
  return fp.weights[0] * mapped.uv()[f[0]] + fp.weights[1] * mapped.uv()[f[1]] + fp.weights[2] * mapped.uv()[f[2]];
}

/// Quasi-conformal distortion of a disk by the grid field, with landmarks carried along.
/// `rotation` post-composes a rotation of the disk by that angle.
inline Distortion distort_disk(const PlanarMesh& disk, const GridField& mu_grid, const LandmarkSet& lm,
                               double rotation = 0.0) {
  if (!disk.is_fold_free()) throw SolverError("distortion source mesh has flipped faces");
  const BeltramiField mu = grid_to_mu(mu_grid, disk);
  const LbsResult res = lbs_solve(disk, mu, BoundaryCondition::circle(disk));
  if (!res.flipped_faces.empty())
    throw SolverError("distortion produced " + std::to_string(res.flipped_faces.size()) + " flipped faces");
  std::vector<Vec2> uv = res.map.uv();
  if (rotation != 0.0) {
    const Eigen::Rotation2Dd R(rotation);
    for (auto& p : uv) p = R * p;
  }
  Distortion out{disk.with_uv(std::move(uv)), lm, mu};
  const TriangleLocator locator(disk);
  for (auto& c : out.landmarks.curves) {
    for (auto& p : c.source) p = transfer_point(locator, out.mesh, p);
    for (auto& p : c.target) p = transfer_point(locator, out.mesh, p);
    c.start = transfer_point(locator, out.mesh, c.start);
    c.end = transfer_point(locator, out.mesh, c.end);
  }
  return out;
}

/// Random gently bent curves inside the disk (radius <= 0.8), `m` points each; each curve is
/// its own target.
inline LandmarkSet random_landmarks(std::uint64_t seed, int curves = 3, int m = 16) {
  if (curves < 0 || m < 2) throw LandmarkError("need m >= 2 points per curve");
  Rng rng(seed);
  LandmarkSet set;
  for (int c = 0; c < curves; ++c) {
    const double phi = 2.0 * std::numbers::pi * (c + rng.uniform(0.1, 0.6)) / std::max(curves, 1);
    const double r0 = rng.uniform(0.15, 0.3), r1 = rng.uniform(0.6, 0.8);
    const double bend = rng.uniform(-0.3, 0.3);
    LandmarkCurve curve;
    curve.id = c;
    for (int k = 0; k < m; ++k) {
      const double t = static_cast<double>(k) / (m - 1);
      const double r = r0 + (r1 - r0) * t;
      const double a = phi + bend * std::sin(std::numbers::pi * t);
      curve.source.emplace_back(r * std::cos(a), r * std::sin(a));
    }
    curve.target = curve.source;
    curve.start = curve.source.front();
    curve.end = curve.source.back();
    set.curves.push_back(std::move(curve));
  }
  return set;
}

/// One synthetic valley: a groove along the meridian at angle `phi` between disk radii r0, r1.
struct Valley {
  double phi = 0.0;
  double r0 = 0.0;
  double r1 = 0.0;
  double depth = 0.0;
  double width = 0.0;
};

struct SyntheticBrain {
  TriMesh mesh;
  std::vector<Valley> valleys;
  /// Valley bottom lines sampled on the surface, one polyline per valley.
  std::vector<std::vector<Vec3>> valley_curves;
};

namespace detail {

/// Radial inward displacement of the hemisphere at disk point q.
inline double groove_depth(const std::vector<Valley>& valleys, const Vec2& q) {
  double d = 0.0;
  for (const auto& v : valleys) {
    const Vec2 dir(std::cos(v.phi), std::sin(v.phi));
    const double along = q.dot(dir);
    if (along <= v.r0 || along >= v.r1) continue;
    const double across = dir.x() * q.y() - dir.y() * q.x();
    const double t = (along - v.r0) / (v.r1 - v.r0);
    d += v.depth * std::sin(std::numbers::pi * t) * std::exp(-(across * across) / (v.width * v.width));
  }
  return d;
}

inline Vec3 brain_point(const std::vector<Valley>& valleys, const Vec2& q) {
  return (1.0 - groove_depth(valleys, q)) * disk_to_hemisphere(q);
}

}  // namespace detail

/// Unit hemisphere with `bumps` smooth radial grooves at seeded angles and extents. The groove
/// bottoms are returned as polylines.
inline SyntheticBrain synthetic_brain(std::uint64_t seed, int bumps, int rings = 40) {
  if (bumps < 1) throw Error("synthetic brain needs at least one valley");
  Rng rng(seed);
  std::vector<Valley> valleys;
  const double offset = rng.uniform(0.0, 2.0 * std::numbers::pi);
  for (int k = 0; k < bumps; ++k) {
    Valley v;
    v.phi = offset + 2.0 * std::numbers::pi * k / bumps + rng.uniform(-0.3, 0.3) / bumps;
    v.r0 = rng.uniform(0.1, 0.2);
    v.r1 = rng.uniform(0.65, 0.8);
    v.depth = rng.uniform(0.06, 0.09);
    v.width = 0.08;
    valleys.push_back(v);
  }
  const PlanarMesh disk = unit_disk_mesh(rings, 0.2, seed);
  std::vector<Vec3> x;
  x.reserve(disk.num_vertices());
  for (const auto& q : disk.uv()) x.push_back(detail::brain_point(valleys, q));
  SyntheticBrain out{TriMesh(std::move(x), disk.faces()), valleys, {}};
  for (const auto& v : valleys) {
    std::vector<Vec3> line;
    const Vec2 dir(std::cos(v.phi), std::sin(v.phi));
    // the groove fades at its ends; keep the stretch where it is at least half deep
    const int samples = 200;
    for (int k = 0; k <= samples; ++k) {
      const double t = 1.0 / 6.0 + (2.0 / 3.0) * k / samples;
      line.push_back(detail::brain_point(valleys, (v.r0 + t * (v.r1 - v.r0)) * dir));
    }
    out.valley_curves.push_back(std::move(line));
  }
  return out;
}

}  // namespace qcreg
