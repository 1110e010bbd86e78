#include <cmath>
#include <filesystem>
#include <numbers>

#include <gtest/gtest.h>

#include "qcreg/generators.hpp"
#include "qcreg/spectral.hpp"

using namespace qcreg;

namespace {

GridField random_grid(int n, std::uint64_t seed) {
  Rng rng(seed);
  GridField g(n);
  for (auto& z : g.values) z = Complex(rng.normal(), rng.normal());
  return g;
}

/// Direct O(n^4) transform with the same normalization.
Spectrum naive_dft(const GridField& g) {
  const int n = g.n;
  Spectrum s{n, std::vector<Complex>(g.values.size())};
  for (int v = 0; v < n; ++v)
    for (int u = 0; u < n; ++u) {
      Complex acc = 0.0;
      for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i)
          acc += g(i, j) * std::polar(1.0, -2.0 * std::numbers::pi * (static_cast<double>(u * i + v * j) / n));
      s(u, v) = acc / static_cast<double>(n * n);
    }
  return s;
}

}  // namespace

TEST(CircleSquare, Examples) {
  const double h = std::sqrt(0.5);
  EXPECT_EQ(disk_to_square({0.5, 0.0}), Vec2(0.5, 0.0));
  EXPECT_EQ(disk_to_square({-1.0, 0.0}), Vec2(-1.0, 0.0));
  EXPECT_EQ(disk_to_square({0.0, 0.0}), Vec2(0.0, 0.0));
  for (double sx : {-1.0, 1.0})
    for (double sy : {-1.0, 1.0}) EXPECT_EQ(disk_to_square({sx * h, sy * h}), Vec2(sx, sy));
  const Vec2 back = square_to_disk({1.0, 1.0});
  EXPECT_NEAR(back.x(), h, 1e-15);
  EXPECT_NEAR(back.y(), h, 1e-15);
  EXPECT_EQ(square_to_disk({0.3, 0.0}), Vec2(0.3, 0.0));
  EXPECT_THROW(disk_to_square({1.0, 0.1}), SpectralError);
  EXPECT_THROW(square_to_disk({1.0, 1.1}), SpectralError);
}

TEST(CircleSquare, RoundTripAndBoundary) {
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const double r = std::sqrt(rng.uniform()), t = rng.uniform(0, 2 * std::numbers::pi);
    const Vec2 p(r * std::cos(t), r * std::sin(t));
    const Vec2 q = disk_to_square(p);
    EXPECT_LE(q.cwiseAbs().maxCoeff(), 1.0 + 1e-12);
    EXPECT_LT((square_to_disk(q) - p).norm(), 1e-12);
    const Vec2 s(rng.uniform(-1, 1), rng.uniform(-1, 1));
    EXPECT_LT((disk_to_square(square_to_disk(s)) - s).norm(), 1e-12);
    // circle onto square boundary
    EXPECT_NEAR(disk_to_square(Vec2(std::cos(t), std::sin(t))).cwiseAbs().maxCoeff(), 1.0, 1e-12);
  }
}

TEST(Dft, ExamplesAndOracle) {
  GridField c(16, Complex(0.3, -0.2));
  const Spectrum sc = dft2(c);
  EXPECT_LT(std::abs(sc(0, 0) - Complex(0.3, -0.2)), 1e-15);
  for (std::size_t k = 1; k < sc.coefficients.size(); ++k) EXPECT_LT(std::abs(sc.coefficients[k]), 1e-12);

  GridField wave(16);
  for (int j = 0; j < 16; ++j)
    for (int i = 0; i < 16; ++i) wave(i, j) = std::polar(1.0, 2.0 * std::numbers::pi * (3 * i + 14 * j) / 16.0);
  const Spectrum sw = dft2(wave);
  for (int v = 0; v < 16; ++v)
    for (int u = 0; u < 16; ++u) EXPECT_NEAR(std::abs(sw(u, v)), (u == 3 && v == 14) ? 1.0 : 0.0, 1e-12);

  const GridField g = random_grid(8, 5);
  const Spectrum fast = dft2(g), slow = naive_dft(g);
  for (std::size_t k = 0; k < fast.coefficients.size(); ++k) EXPECT_LT(std::abs(fast.coefficients[k] - slow.coefficients[k]), 1e-13);

  const GridField r = random_grid(64, 6);
  const GridField back = idft2(dft2(r));
  double err = 0.0;
  for (std::size_t k = 0; k < r.values.size(); ++k) err += std::norm(back.values[k] - r.values[k]);
  EXPECT_LT(std::sqrt(err) / r.l2_norm(), 1e-10);
}

TEST(Lowpass, ProjectionAndEnergy) {
  const GridField g = random_grid(32, 7);
  const Spectrum s = dft2(g);
  const Spectrum full = lowpass(s, 16);
  EXPECT_EQ(full.coefficients, s.coefficients);
  for (int k : {1, 3, 8}) {
    const Spectrum once = lowpass(s, k);
    EXPECT_EQ(lowpass(once, k).coefficients, once.coefficients);
    EXPECT_LE(idft2(once).l2_norm(), g.l2_norm() + 1e-10);
    int kept = 0;
    for (const auto& z : once.coefficients) kept += z != Complex(0.0, 0.0);
    EXPECT_EQ(kept, 4 * k * k);
  }
  GridField c(16, Complex(0.1, 0.4));
  const GridField cc = compress(c, 1);
  for (const auto& z : cc.values) EXPECT_LT(std::abs(z - Complex(0.1, 0.4)), 1e-14);
  EXPECT_THROW(lowpass(s, 0), SpectralError);
  EXPECT_THROW(lowpass(s, 17), SpectralError);
  EXPECT_THROW(GridField(12), SpectralError);
  EXPECT_THROW(GridField(4), SpectralError);
}

TEST(Resample, ConstantAndRamp) {
  const PlanarMesh disk = unit_disk_mesh(12, 0.3, 1);
  const GridField g = mu_to_grid(disk, BeltramiField::constant(disk.num_faces(), Complex(0.2, 0.1)), 32);
  for (const auto& z : g.values) EXPECT_EQ(z, Complex(0.2, 0.1));
  for (const auto& z : grid_to_mu(g, disk).mu) EXPECT_EQ(z, Complex(0.2, 0.1));
  for (const auto& z : grid_to_mu(GridField(32), disk).mu) EXPECT_EQ(z, Complex(0.0, 0.0));

  GridField ramp(32);
  for (int j = 0; j < 32; ++j)
    for (int i = 0; i < 32; ++i) {
      const double x = GridField::coordinate(i, 32), y = GridField::coordinate(j, 32);
      ramp(i, j) = Complex(0.2 * x - 0.1 * y + 0.05, 0.3 * y);
    }
  const BeltramiField mu = grid_to_mu(ramp, disk);
  for (std::size_t f = 0; f < disk.num_faces(); ++f) {
    const auto t = disk.triangle(f);
    const Vec2 q = disk_to_square((t[0] + t[1] + t[2]) / 3.0);
    EXPECT_LT(std::abs(mu[f] - Complex(0.2 * q.x() - 0.1 * q.y() + 0.05, 0.3 * q.y())), 1e-12);
  }

  GridField big(16, Complex(3.0, 4.0));
  for (const auto& z : grid_to_mu(big, disk).mu) EXPECT_LT(std::abs(z), 1.0);
}

TEST(Resample, HalfPlaneSplitsAlongImage) {
  const PlanarMesh disk = unit_disk_mesh(14, 0.3, 2);
  BeltramiField mu;
  for (std::size_t f = 0; f < disk.num_faces(); ++f) {
    const auto t = disk.triangle(f);
    mu.mu.push_back(((t[0] + t[1] + t[2]) / 3.0).x() < 0.1 ? Complex(0.3, 0.0) : Complex(0.0, -0.3));
  }
  const int n = 32;
  const GridField g = mu_to_grid(disk, mu, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      const Vec2 p = square_to_disk({GridField::coordinate(i, n), GridField::coordinate(j, n)});
      // linear-scan oracle: containing face, else nearest centroid-free distance
      int face = -1;
      double best = 1e300;
      for (std::size_t f = 0; f < disk.num_faces(); ++f) {
        const auto t = disk.triangle(f);
        const double A = signed_area(t[0], t[1], t[2]);
        const double w0 = signed_area(p, t[1], t[2]) / A, w1 = signed_area(t[0], p, t[2]) / A;
        if (w0 >= -1e-12 && w1 >= -1e-12 && 1 - w0 - w1 >= -1e-12) {
          face = static_cast<int>(f);
          break;
        }
        for (int k = 0; k < 3; ++k) {
          const Vec2 c = closest_on_segment(p, t[k], t[(k + 1) % 3]);
          if ((c - p).norm() < best) {
            best = (c - p).norm();
            face = -2 - static_cast<int>(f);
          }
        }
      }
      if (face <= -2) face = -2 - face;
      ASSERT_GE(face, 0);
      // faces sharing the grid point on an edge may legitimately differ; compare values only
      // when the node is not within 1e-9 of another face's region
      const Complex expected = mu[face];
      if (g(i, j) != expected) {
        const Vec2 c = (disk.triangle(face)[0] + disk.triangle(face)[1] + disk.triangle(face)[2]) / 3.0;
        EXPECT_LT(std::abs(c.x() - 0.1), 2.0 * mean_edge_length(disk)) << i << ',' << j;
      }
      // the split itself: nodes well left/right of the line take the side's value
      if (p.x() < 0.1 - 2.0 * mean_edge_length(disk)) {
        EXPECT_EQ(g(i, j), Complex(0.3, 0.0));
      }
      if (p.x() > 0.1 + 2.0 * mean_edge_length(disk)) {
        EXPECT_EQ(g(i, j), Complex(0.0, -0.3));
      }
    }
}

TEST(Resample, FineGridRoundTrip) {
  const PlanarMesh disk = unit_disk_mesh(26, 0.3, 3);
  BeltramiField mu;
  for (std::size_t f = 0; f < disk.num_faces(); ++f) {
    const auto t = disk.triangle(f);
    const Vec2 c = (t[0] + t[1] + t[2]) / 3.0;
    mu.mu.push_back(0.4 * Complex(std::sin(2 * c.x()), std::cos(3 * c.y())) / std::sqrt(2.0));
  }
  // variation scale: mean |mu_f - mu_g| over adjacent faces
  double variation = 0.0;
  int pairs = 0;
  for (const auto& e : disk.base().edges())
    if (e.faces[1] >= 0) {
      variation += std::abs(mu[e.faces[0]] - mu[e.faces[1]]);
      ++pairs;
    }
  variation /= pairs;
  const BeltramiField back = grid_to_mu(mu_to_grid(disk, mu, 128), disk);
  double err = 0.0;
  for (std::size_t f = 0; f < mu.size(); ++f) err += std::abs(back[f] - mu[f]);
  EXPECT_LE(err / mu.size(), variation);
}

TEST(Serialization, CsvAndBinaryRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "qcreg_spectral_test";
  std::filesystem::create_directories(dir);
  const GridField g = random_grid(16, 11);
  const Spectrum s = dft2(g);
  write_grid_csv(dir / "g.csv", g);
  write_grid_binary(dir / "g.bin", g);
  write_spectrum_csv(dir / "s.csv", s);
  write_spectrum_binary(dir / "s.bin", s);
  EXPECT_EQ(read_grid_csv(dir / "g.csv").values, g.values);
  EXPECT_EQ(read_grid_binary(dir / "g.bin").values, g.values);
  EXPECT_EQ(read_spectrum_csv(dir / "s.csv").coefficients, s.coefficients);
  EXPECT_EQ(read_spectrum_binary(dir / "s.bin").coefficients, s.coefficients);
  EXPECT_EQ(std::filesystem::file_size(dir / "g.bin"), 16u + 2u * 16u * 16u * 8u);
  EXPECT_THROW(read_spectrum_binary(dir / "g.bin"), SpectralError);
  std::filesystem::remove_all(dir);
}
