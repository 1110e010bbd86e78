#include <filesystem>
#include <fstream>
#include <set>

#include <gtest/gtest.h>

#include "qcreg/generators.hpp"
#include "qcreg/locate.hpp"
#include "qcreg/mesh.hpp"
#include "qcreg/mesh_io.hpp"

using namespace qcreg;

namespace {

std::filesystem::path write_text(const std::string& name, const std::string& text) {
  const auto path = std::filesystem::temp_directory_path() / ("qcreg_mesh_test_" + name);
  std::ofstream(path) << text;
  return path;
}

const char* kSquareOff =
    "OFF\n4 2 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n3 0 1 2\n3 0 2 3\n";

PlanarMesh pentagon_fan(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Vec2> p{Vec2(rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1))};
  for (int k = 0; k < 5; ++k) {
    const double a = 2.0 * std::numbers::pi * (k + rng.uniform(-0.2, 0.2)) / 5.0;
    const double r = rng.uniform(0.8, 1.2);
    p.emplace_back(r * std::cos(a), r * std::sin(a));
  }
  std::vector<Face> faces;
  for (int k = 0; k < 5; ++k) faces.push_back({0, 1 + k, 1 + (k + 1) % 5});
  std::vector<Vec3> x;
  for (const auto& q : p) x.emplace_back(q.x(), q.y(), 0.0);
  return PlanarMesh(std::make_shared<const TriMesh>(x, faces), p);
}

}  // namespace

TEST(LoadMesh, TwoTriangleSquare) {
  const TriMesh m = load_mesh(write_text("square.off", kSquareOff));
  EXPECT_EQ(m.num_vertices(), 4u);
  EXPECT_EQ(m.num_edges(), 5u);
  EXPECT_EQ(m.num_faces(), 2u);
  EXPECT_EQ(m.boundary().size(), 4u);
  EXPECT_EQ(m.euler_characteristic(), 1);
}

TEST(LoadMesh, ClosedTetrahedronRejected) {
  const auto path = write_text("tet.obj",
                               "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\n"
                               "f 1 3 2\nf 1 2 4\nf 2 3 4\nf 3 1 4\n");
  try {
    load_mesh(path);
    FAIL() << "expected topology error";
  } catch (const MeshError& e) {
    EXPECT_STREQ(e.what(), "disk topology violated: 0 boundary loops, Euler characteristic 2");
  }
}

TEST(LoadMesh, DuplicatedFaceIsNonManifold) {
  const auto path = write_text("dup.off", "OFF\n3 2 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n3 0 1 2\n");
  try {
    load_mesh(path);
    FAIL() << "expected non-manifold error";
  } catch (const MeshError& e) {
    EXPECT_NE(std::string(e.what()).find("non-manifold edge"), std::string::npos) << e.what();
  }
}

TEST(LoadMesh, ParseErrorsAndFormats) {
  EXPECT_THROW(load_mesh(write_text("bad.off", "OFF\n4 2 0\n0 0\n")), IoError);
  EXPECT_THROW(load_mesh(write_text("quad.obj", "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")), IoError);
  EXPECT_THROW(load_mesh("/nonexistent/file.off"), IoError);
  EXPECT_THROW(load_mesh(write_text("x.ply", "ply\n")), IoError);
  // Flipped second face: inconsistent orientation.
  EXPECT_THROW(load_mesh(write_text("flip.off", "OFF\n4 2 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n3 0 1 2\n3 0 3 2\n")),
               MeshError);
}

TEST(LoadMesh, ObjOneBasedAndTextureCoordinates) {
  const auto path = write_text("uv.obj",
                               "v 0 0 1\nv 1 0 2\nv 1 1 3\nv 0 1 4\n"
                               "vt 0.5 0.5\nvt 0.25 0\nvt 0 0.25\nvt -1 -1\n"
                               "f 1/1 2/2 3/3\nf 1/1 3/3 4/4\n");
  const PlanarMesh pm = load_planar_mesh(path);
  EXPECT_EQ(pm.base().faces()[0], (Face{0, 1, 2}));
  EXPECT_EQ(pm.uv()[1], Vec2(0.25, 0.0));
  EXPECT_EQ(pm.base().vertices()[3], Vec3(0, 1, 4));
}

TEST(MeshWriter, SeventeenDigitRoundTrip) {
  PlanarMesh disk = unit_disk_mesh(4, 0.3, 7);
  const auto path = std::filesystem::temp_directory_path() / "qcreg_mesh_test_rt.obj";
  write_obj(path, disk);
  const PlanarMesh back = load_planar_mesh(path);
  ASSERT_EQ(back.num_vertices(), disk.num_vertices());
  for (std::size_t v = 0; v < disk.num_vertices(); ++v) {
    EXPECT_EQ(back.uv()[v], disk.uv()[v]);
    EXPECT_EQ(back.base().vertices()[v], disk.base().vertices()[v]);
  }
  EXPECT_EQ(back.faces(), disk.faces());

  const auto off = std::filesystem::temp_directory_path() / "qcreg_mesh_test_rt.off";
  write_off(off, disk.base());
  EXPECT_EQ(load_mesh(off).vertices(), disk.base().vertices());
}

TEST(BoundaryLoop, SquareOrder) {
  const TriMesh m({{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}}, {{0, 1, 2}, {0, 2, 3}});
  EXPECT_EQ(boundary_loop(m), (std::vector<int>{0, 1, 2, 3}));
}

TEST(BoundaryLoop, FanExcludesCenter) {
  const TriMesh m({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {-1, 0, 0}, {0, -1, 0}},
                  {{0, 1, 2}, {0, 2, 3}, {0, 3, 4}, {0, 4, 1}});
  const auto loop = boundary_loop(m);
  EXPECT_EQ(loop, (std::vector<int>{1, 2, 3, 4}));
  EXPECT_FALSE(m.is_boundary_vertex(0));
}

TEST(BoundaryLoop, MatchesEdgeIncidenceCount) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const PlanarMesh disk = unit_disk_mesh(6, 0.35, seed);  // 127 vertices
    const TriMesh& m = disk.base();
    // Oracle: count edges with a single incident face by brute force over faces.
    std::map<std::pair<int, int>, int> count;
    for (const auto& f : m.faces())
      for (int k = 0; k < 3; ++k) {
        int a = f[k], b = f[(k + 1) % 3];
        if (a > b) std::swap(a, b);
        ++count[{a, b}];
      }
    std::size_t single = 0;
    for (const auto& [e, c] : count) single += c == 1;
    const auto loop = boundary_loop(m);
    EXPECT_EQ(loop.size(), single);
    EXPECT_EQ(std::set<int>(loop.begin(), loop.end()).size(), loop.size());  // simple cycle
    EXPECT_EQ(loop.front(), *std::min_element(loop.begin(), loop.end()));
    EXPECT_EQ(static_cast<int>(m.num_vertices()) - static_cast<int>(count.size()) + static_cast<int>(m.num_faces()), 1);
    // Counterclockwise: positive polygon area in the disk.
    double area = 0.0;
    for (std::size_t i = 0; i < loop.size(); ++i) {
      const Vec2& a = disk.uv()[loop[i]];
      const Vec2& b = disk.uv()[loop[(i + 1) % loop.size()]];
      area += a.x() * b.y() - b.x() * a.y();
    }
    EXPECT_GT(area, 0.0);
  }
}

TEST(FaceAreas, KnownValues) {
  const TriMesh tri({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}}, {{0, 1, 2}});
  EXPECT_DOUBLE_EQ(face_areas(tri)[0], 0.5);
  const PlanarMesh sq = square_grid_mesh(1);
  const auto a = face_areas(sq);
  ASSERT_EQ(a.size(), 2u);
  EXPECT_DOUBLE_EQ(a[0], 0.5);
  EXPECT_DOUBLE_EQ(a[1], 0.5);
}

TEST(FaceAreas, ShoelaceOracle) {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Vec2> p;
    for (int k = 0; k < 3; ++k) p.emplace_back(rng.uniform(-3, 3), rng.uniform(-3, 3));
    if (signed_area(p[0], p[1], p[2]) < 0) std::swap(p[1], p[2]);
    const double shoelace =
        0.5 * std::abs(p[0].x() * p[1].y() - p[1].x() * p[0].y() + p[1].x() * p[2].y() - p[2].x() * p[1].y() +
                       p[2].x() * p[0].y() - p[0].x() * p[2].y());
    std::vector<Vec3> x;
    for (const auto& q : p) x.emplace_back(q.x(), q.y(), 0.0);
    const PlanarMesh pm(std::make_shared<const TriMesh>(x, std::vector<Face>{{0, 1, 2}}), p);
    EXPECT_NEAR(face_areas(pm)[0], shoelace, 1e-12);
    EXPECT_NEAR(face_areas(pm.base())[0], shoelace, 1e-12);
  }
}

TEST(FaceDerivatives, IdentityAndLinear) {
  const PlanarMesh disk = unit_disk_mesh(5, 0.3, 4);
  for (const auto& d : face_derivatives(disk, disk.uv())) {
    EXPECT_NEAR(d.a, 1.0, 1e-12);
    EXPECT_NEAR(d.b, 0.0, 1e-12);
    EXPECT_NEAR(d.c, 0.0, 1e-12);
    EXPECT_NEAR(d.d, 1.0, 1e-12);
  }
  std::vector<Vec2> stretched;
  for (const auto& q : disk.uv()) stretched.emplace_back(2.0 * q.x(), q.y());
  for (const auto& d : face_derivatives(disk, stretched)) {
    EXPECT_NEAR(d.a, 2.0, 1e-12);
    EXPECT_NEAR(d.b, 0.0, 1e-12);
    EXPECT_NEAR(d.c, 0.0, 1e-12);
    EXPECT_NEAR(d.d, 1.0, 1e-12);
  }
}

TEST(FaceDerivatives, GlobalAffineIsExact) {
  const PlanarMesh disk = unit_disk_mesh(6, 0.4, 9);
  Eigen::Matrix2d M;
  M << 1.3, -0.4, 0.7, 0.9;
  const Vec2 shift(0.2, -1.1);
  std::vector<Vec2> target;
  for (const auto& q : disk.uv()) target.push_back(M * q + shift);
  for (const auto& d : face_derivatives(disk, target)) {
    EXPECT_NEAR(d.a, M(0, 0), 1e-12);
    EXPECT_NEAR(d.b, M(0, 1), 1e-12);
    EXPECT_NEAR(d.c, M(1, 0), 1e-12);
    EXPECT_NEAR(d.d, M(1, 1), 1e-12);
  }
}

TEST(FaceDerivatives, RandomMatchesDenseSolve) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const PlanarMesh mesh = pentagon_fan(seed);
    Rng rng(seed + 100);
    std::vector<Vec2> target;
    for (std::size_t v = 0; v < mesh.num_vertices(); ++v) target.emplace_back(rng.uniform(-1, 1), rng.uniform(-1, 1));
    const auto D = face_derivatives(mesh, target);
    for (std::size_t f = 0; f < mesh.num_faces(); ++f) {
      // Oracle: 4x4 dense system for (a, b, c, d) from the two edge equations per coordinate.
      const Face& t = mesh.faces()[f];
      Eigen::Matrix4d A = Eigen::Matrix4d::Zero();
      Eigen::Vector4d rhs;
      for (int e = 0; e < 2; ++e) {
        const Vec2 dv = mesh.uv()[t[e + 1]] - mesh.uv()[t[0]];
        const Vec2 dw = target[t[e + 1]] - target[t[0]];
        A.row(2 * e) << dv.x(), dv.y(), 0, 0;
        A.row(2 * e + 1) << 0, 0, dv.x(), dv.y();
        rhs[2 * e] = dw.x();
        rhs[2 * e + 1] = dw.y();
      }
      const Eigen::Vector4d sol = A.fullPivLu().solve(rhs);
      EXPECT_NEAR(D[f].a, sol[0], 1e-10);
      EXPECT_NEAR(D[f].b, sol[1], 1e-10);
      EXPECT_NEAR(D[f].c, sol[2], 1e-10);
      EXPECT_NEAR(D[f].d, sol[3], 1e-10);
    }
  }
}

TEST(FaceDerivatives, DegenerateFaceRejected) {
  std::vector<Vec2> p{{0, 0}, {1, 0}, {2, 0}};
  const PlanarMesh pm(std::make_shared<const TriMesh>(std::vector<Vec3>{{0, 0, 0}, {1, 0, 0}, {2, 0, 1}},
                                                      std::vector<Face>{{0, 1, 2}}),
                      p);
  EXPECT_THROW(face_derivatives(pm, p), MeshError);
}

TEST(Locator, LocatesVerticesAndCentroids) {
  const PlanarMesh disk = unit_disk_mesh(8, 0.3, 5);
  const TriangleLocator loc(disk);
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const int f = static_cast<int>(rng.next() % disk.num_faces());
    const auto tri = disk.triangle(f);
    const Vec2 c = (tri[0] + tri[1] + tri[2]) / 3.0;
    const auto hit = loc.locate(c);
    ASSERT_TRUE(hit);
    EXPECT_EQ(hit->face, f);
    EXPECT_NEAR(hit->weights[0], 1.0 / 3.0, 1e-12);
  }
  EXPECT_FALSE(loc.locate(Vec2(1.5, 0.0)));
  const FacePoint np = loc.nearest(Vec2(1.5, 0.0));
  EXPECT_NEAR(np.distance, 0.5, 1e-12);
}
