#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include <gtest/gtest.h>

#include "qcreg/diffgeo.hpp"
#include "qcreg/generators.hpp"

using namespace qcreg;

namespace {

double total_area(const std::vector<Vec3>& x, const std::vector<Face>& faces) {
  double a = 0.0;
  for (const auto& f : faces) a += 0.5 * (x[f[1]] - x[f[0]]).cross(x[f[2]] - x[f[0]]).norm();
  return a;
}

TriMesh paraboloid(int n, double k) {
  const PlanarMesh grid = square_grid_mesh(n, -1.0, 1.0);
  std::vector<Vec3> x;
  for (const auto& q : grid.uv()) x.emplace_back(q.x(), q.y(), k * q.squaredNorm());
  return TriMesh(x, grid.faces());
}

}  // namespace

TEST(MeanCurvature, FlatGridIsZero) {
  const PlanarMesh grid = square_grid_mesh(20, -1.0, 1.0);
  const CurvatureField c = mean_curvature(grid.base());
  for (double h : c.H) EXPECT_LT(std::abs(h), 1e-10);
  for (const auto& n : c.normals) EXPECT_NEAR(n.z(), 1.0, 1e-12);
}

TEST(MeanCurvature, SphereAndCylinder) {
  const TriMesh sphere = capped_icosphere(5);
  ASSERT_GE(sphere.num_vertices(), 9000u);
  const CurvatureField hs = mean_curvature(sphere);
  for (std::size_t v = 0; v < sphere.num_vertices(); ++v) {
    EXPECT_NEAR(hs.H[v], 1.0, 0.05);
    EXPECT_NEAR(hs.normals[v].norm(), 1.0, 1e-10);
  }
  const TriMesh sphere3 = capped_icosphere(4, 3.0);
  for (double h : mean_curvature(sphere3).H) EXPECT_NEAR(h, 1.0 / 3.0, 0.05 / 3.0);

  const TriMesh cyl = partial_cylinder(2.0, std::numbers::pi, 4.0, 120, 80);
  ASSERT_GE(cyl.num_vertices(), 9000u);
  const CurvatureField hc = mean_curvature(cyl);
  for (std::size_t v = 0; v < cyl.num_vertices(); ++v) EXPECT_NEAR(hc.H[v], 0.25, 0.25 * 0.05);
}

TEST(MeanCurvature, MatchesAreaGradient) {
  // The cotangent vector sum cot (x_i - x_j) is twice the gradient of total area in x_i.
  // Hexagonal fan with a raised center: all triangles acute, so the mixed area is the Voronoi
  // area, summed here from circumcenters.
  std::vector<Vec3> pts{{0.0, 0.0, 0.3}};
  std::vector<Face> fan;
  for (int k = 0; k < 6; ++k) {
    const double a = k * std::numbers::pi / 3 + 0.1 * (k % 2);
    pts.emplace_back(std::cos(a), std::sin(a), 0.05 * k);
    fan.push_back({0, 1 + k, 1 + (k + 1) % 6});
  }
  const TriMesh m(pts, fan);
  const CurvatureField c = mean_curvature(m);
  std::vector<Vec3> x = m.vertices();
  const int v = 0;
  ASSERT_FALSE(m.is_boundary_vertex(v));
  Vec3 grad;
  const double h = 1e-6;
  for (int d = 0; d < 3; ++d) {
    x[v][d] += h;
    const double plus = total_area(x, m.faces());
    x[v][d] -= 2 * h;
    const double minus = total_area(x, m.faces());
    x[v][d] += h;
    grad[d] = (plus - minus) / (2 * h);
  }
  double voronoi = 0.0;
  for (int f : m.vertex_faces()[v]) {
    const Face& t = m.faces()[f];
    const Vec3 a = x[t[0]], b = x[t[1]], cc = x[t[2]];
    // circumcenter of the triangle
    const Vec3 ab = b - a, ac = cc - a, n = ab.cross(ac);
    const Vec3 center = a + (ac.squaredNorm() * n.cross(ab) + ab.squaredNorm() * ac.cross(n)) / (2.0 * n.squaredNorm());
    int k = 0;
    while (t[k] != v) ++k;
    const Vec3 p = x[v], m1 = 0.5 * (x[v] + x[t[(k + 1) % 3]]), m2 = 0.5 * (x[v] + x[t[(k + 2) % 3]]);
    voronoi += 0.5 * ((m1 - p).cross(center - p).norm() + (center - p).cross(m2 - p).norm());
  }
  const double expected = (2.0 * grad).dot(c.normals[v]) / (4.0 * voronoi);
  EXPECT_NEAR(c.H[v], expected, 1e-6);
  EXPECT_GT(c.H[v], 0.0);  // a cap seen from above bends away from its normal, like a sphere
}

TEST(MeanCurvature, RotationInvariant) {
  const TriMesh m = paraboloid(12, 0.8);
  const Eigen::Matrix3d R = Eigen::AngleAxisd(0.7, Vec3(1, 2, 3).normalized()).toRotationMatrix();
  std::vector<Vec3> y;
  for (const auto& p : m.vertices()) y.push_back(R * p + Vec3(0.3, -1.0, 2.0));
  const TriMesh r(y, m.faces());
  const auto a = mean_curvature(m).H, b = mean_curvature(r).H;
  for (std::size_t v = 0; v < a.size(); ++v) EXPECT_NEAR(a[v], b[v], 1e-10);
}

TEST(MeanCurvature, BoundaryCopiesNearestInterior) {
  const TriMesh m = paraboloid(6, 0.5);
  const CurvatureField c = mean_curvature(m);
  for (std::size_t v = 0; v < m.num_vertices(); ++v) {
    if (!m.is_boundary_vertex(static_cast<int>(v))) continue;
    bool found = false;
    for (std::size_t u = 0; u < m.num_vertices(); ++u)
      if (!m.is_boundary_vertex(static_cast<int>(u)) && c.H[u] == c.H[v]) found = true;
    EXPECT_TRUE(found);
  }
}

TEST(CurvatureImage, ConstantAndSplit) {
  const PlanarMesh disk = unit_disk_mesh(12, 0.2, 4);
  CurvatureField c;
  c.H.assign(disk.num_vertices(), 3.5);
  const CurvatureImage flat = curvature_image(disk, c, 32);
  int masked = 0;
  for (std::size_t k = 0; k < flat.values.size(); ++k) {
    EXPECT_EQ(flat.values[k], 0.0);
    masked += flat.mask[k];
  }
  EXPECT_GT(masked, 32 * 32 / 2);

  for (std::size_t v = 0; v < disk.num_vertices(); ++v) c.H[v] = disk.uv()[v].x() < 0.0 ? -1.0 : 1.0;
  const CurvatureImage split = curvature_image(disk, c, 32);
  for (int j = 0; j < 32; ++j)
    for (int i = 0; i < 32; ++i) {
      if (!split.inside(i, j)) continue;
      const double x = (i + 0.5) / 32 * 2 - 1;
      if (x < -0.2) {
        EXPECT_LT(split.at(i, j), 1e-9);
      }
      if (x > 0.2) {
        EXPECT_GT(split.at(i, j), 255.0 - 1e-9);
      }
    }
  EXPECT_THROW(curvature_image(disk, c, 7), Error);
}

TEST(CurvatureImage, MatchesScanOracle) {
  const PlanarMesh disk = unit_disk_mesh(25, 0.3, 5);
  Rng rng(9);
  CurvatureField c;
  for (std::size_t v = 0; v < disk.num_vertices(); ++v) c.H.push_back(rng.normal());
  const int n = 64;
  const CurvatureImage img = curvature_image(disk, c, n);
  // Oracle: linear scan over faces with barycentric coordinates, then the same rescale.
  std::vector<double> raw(n * n, 0.0);
  std::vector<char> in(n * n, 0);
  double lo = 1e300, hi = -1e300;
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      const Vec2 p((i + 0.5) / n * 2 - 1, (j + 0.5) / n * 2 - 1);
      for (std::size_t f = 0; f < disk.num_faces(); ++f) {
        const auto t = disk.triangle(f);
        const double A = signed_area(t[0], t[1], t[2]);
        const double w0 = signed_area(p, t[1], t[2]) / A, w1 = signed_area(t[0], p, t[2]) / A, w2 = 1 - w0 - w1;
        if (w0 < -1e-12 || w1 < -1e-12 || w2 < -1e-12) continue;
        const Face& fv = disk.faces()[f];
        raw[j * n + i] = w0 * c.H[fv[0]] + w1 * c.H[fv[1]] + w2 * c.H[fv[2]];
        in[j * n + i] = 1;
        lo = std::min(lo, raw[j * n + i]);
        hi = std::max(hi, raw[j * n + i]);
        break;
      }
    }
  for (int k = 0; k < n * n; ++k) {
    ASSERT_EQ(img.mask[k], in[k]) << k;
    if (in[k]) EXPECT_NEAR(img.values[k], 255.0 * (raw[k] - lo) / (hi - lo), 1e-9);
    else EXPECT_EQ(img.values[k], 0.0);
  }

  // Monotone rescale and invariance under a constant shift.
  CurvatureField shifted = c;
  for (auto& h : shifted.H) h += 7.25;
  const CurvatureImage img2 = curvature_image(disk, shifted, n);
  for (int k = 0; k < n * n; ++k) EXPECT_NEAR(img.values[k], img2.values[k], 1e-9);
  for (int a = 0; a < n * n; a += 37)
    for (int b = 0; b < n * n; b += 41)
      if (in[a] && in[b] && raw[a] < raw[b]) {
        EXPECT_LE(img.values[a], img.values[b]);
      }
}

TEST(CurvatureImage, PgmAndCsvExport) {
  const PlanarMesh disk = unit_disk_mesh(6);
  CurvatureField c;
  for (const auto& q : disk.uv()) c.H.push_back(q.x());
  const CurvatureImage img = curvature_image(disk, c, 16);
  const auto dir = std::filesystem::temp_directory_path() / "qcreg_diffgeo_test";
  std::filesystem::create_directories(dir);
  write_pgm(dir / "img.pgm", img);
  write_csv(dir / "img.csv", img);
  std::ifstream pgm(dir / "img.pgm");
  std::string magic;
  int w, h, maxval;
  pgm >> magic >> w >> h >> maxval;
  EXPECT_EQ(magic, "P2");
  EXPECT_EQ(w, 16);
  EXPECT_EQ(h, 16);
  EXPECT_EQ(maxval, 255);
  int count = 0, value;
  while (pgm >> value) {
    EXPECT_GE(value, 0);
    EXPECT_LE(value, 255);
    ++count;
  }
  EXPECT_EQ(count, 256);
  std::ifstream csv(dir / "img.csv");
  std::string line;
  int rows = 0;
  while (std::getline(csv, line)) {
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 15);
    ++rows;
  }
  EXPECT_EQ(rows, 16);
  std::filesystem::remove_all(dir);
}
