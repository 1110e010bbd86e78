#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <locale>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "qcreg/beltrami.hpp"
#include "qcreg/locate.hpp"

namespace qcreg {

class SpectralError : public Error {
 public:
  using Error::Error;
};

inline bool valid_grid_size(int n) { return n >= 8 && std::has_single_bit(static_cast<unsigned>(n)); }

/// n x n complex samples on [-1, 1]^2. Node (i, j) sits at (-1 + 2i/(n-1), -1 + 2j/(n-1)) and is
/// stored at j * n + i.
struct GridField {
  int n = 0;
  std::vector<Complex> values;

  GridField() = default;
  explicit GridField(int size, Complex fill = 0.0) : n(size), values(static_cast<std::size_t>(size) * size, fill) {
    if (!valid_grid_size(size)) throw SpectralError("grid size must be a power of two >= 8, got " + std::to_string(size));
  }

  Complex& operator()(int i, int j) { return values[static_cast<std::size_t>(j) * n + i]; }
  const Complex& operator()(int i, int j) const { return values[static_cast<std::size_t>(j) * n + i]; }

  static double coordinate(int i, int n) { return -1.0 + 2.0 * i / (n - 1); }

  /// Bilinear interpolation at a point of the square (clamped to it).
  Complex sample(const Vec2& q) const {
    const double gx = std::clamp((q.x() + 1.0) * 0.5 * (n - 1), 0.0, static_cast<double>(n - 1));
    const double gy = std::clamp((q.y() + 1.0) * 0.5 * (n - 1), 0.0, static_cast<double>(n - 1));
    const int i0 = std::min(static_cast<int>(gx), n - 2);
    const int j0 = std::min(static_cast<int>(gy), n - 2);
    const double tx = gx - i0, ty = gy - j0;
    const Complex lower = (*this)(i0, j0) + tx * ((*this)(i0 + 1, j0) - (*this)(i0, j0));
    const Complex upper = (*this)(i0, j0 + 1) + tx * ((*this)(i0 + 1, j0 + 1) - (*this)(i0, j0 + 1));
    return lower + ty * (upper - lower);
  }

  double l2_norm() const {
    double s = 0.0;
    for (const auto& z : values) s += std::norm(z);
    return std::sqrt(s);
  }
};

/// DFT coefficients; entry (u, v) is stored at v * n + u, frequency index u < n/2 means u,
/// otherwise u - n.
struct Spectrum {
  int n = 0;
  std::vector<Complex> coefficients;

  Complex& operator()(int u, int v) { return coefficients[static_cast<std::size_t>(v) * n + u]; }
  const Complex& operator()(int u, int v) const { return coefficients[static_cast<std::size_t>(v) * n + u]; }

  static int frequency(int u, int n) { return u < n / 2 ? u : u - n; }
};

/// Radial stretch of the closed unit disk onto [-1, 1]^2: p / max(|cos t|, |sin t|).
inline Vec2 disk_to_square(const Vec2& p) {
  const double r = std::hypot(p.x(), p.y());
  if (r > 1.0 + 1e-12) throw SpectralError("point outside the unit disk");
  const double m = std::max(std::abs(p.x()), std::abs(p.y()));
  if (m == 0.0) return Vec2::Zero();
  return Vec2(p.x() / m * r, p.y() / m * r);
}

inline Vec2 square_to_disk(const Vec2& q) {
  const double m = std::max(std::abs(q.x()), std::abs(q.y()));
  if (m > 1.0 + 1e-12) throw SpectralError("point outside the square [-1, 1]^2");
  if (m == 0.0) return Vec2::Zero();
  const double r = std::hypot(q.x(), q.y());
  return Vec2(q.x() / r * m, q.y() / r * m);
}

/// Face-constant resampling: each node copies the mu of the face containing its disk image,
/// or of the nearest face when the image falls outside the mesh.
inline GridField mu_to_grid(const PlanarMesh& disk, const BeltramiField& mu, int n) {
  if (mu.size() != disk.num_faces()) throw SpectralError("Beltrami field size does not match face count");
  GridField g(n);
  const TriangleLocator locator(disk);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      const Vec2 p = square_to_disk(Vec2(GridField::coordinate(i, n), GridField::coordinate(j, n)));
      const auto hit = locator.locate(p);
      g(i, j) = mu[hit ? hit->face : locator.nearest(p).face];
    }
  return g;
}

/// Bilinear sample at each face centroid's square image. Samples that reach the unit circle are
/// pulled inside with clamp_mu; smaller values pass through unchanged.
inline BeltramiField grid_to_mu(const GridField& grid, const PlanarMesh& disk) {
  BeltramiField out;
  out.mu.reserve(disk.num_faces());
  for (std::size_t f = 0; f < disk.num_faces(); ++f) {
    const auto t = disk.triangle(f);
    Vec2 c = (t[0] + t[1] + t[2]) / 3.0;
    if (c.norm() > 1.0) c /= c.norm();
    const Complex z = grid.sample(disk_to_square(c));
    out.mu.push_back(std::abs(z) < kMuGuard ? z : clamp_mu(z));
  }
  return out;
}

namespace detail {

/// In-place iterative radix-2 FFT of a strided sequence; sign = -1 forward, +1 inverse (unscaled).
inline void fft1(Complex* data, int n, std::size_t stride, int sign) {
  for (int i = 1, j = 0; i < n; ++i) {
    int bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(data[i * stride], data[j * stride]);
  }
  for (int len = 2; len <= n; len <<= 1) {
    const double ang = sign * 2.0 * std::numbers::pi / len;
    for (int i = 0; i < n; i += len)
      for (int k = 0; k < len / 2; ++k) {
        const Complex w = std::polar(1.0, ang * k);
        Complex& a = data[(i + k) * stride];
        Complex& b = data[(i + k + len / 2) * stride];
        const Complex t = w * b;
        b = a - t;
        a += t;
      }
  }
}

inline void fft2(std::vector<Complex>& v, int n, int sign) {
  for (int j = 0; j < n; ++j) fft1(v.data() + static_cast<std::size_t>(j) * n, n, 1, sign);
  for (int i = 0; i < n; ++i) fft1(v.data() + i, n, static_cast<std::size_t>(n), sign);
}

}  // namespace detail

/// Forward transform with the 1/N^2 factor: X(u, v) = (1/N^2) sum x(i, j) exp(-2 pi i (u i + v j) / N).
inline Spectrum dft2(const GridField& grid) {
  Spectrum s{grid.n, grid.values};
  detail::fft2(s.coefficients, s.n, -1);
  const double scale = 1.0 / (static_cast<double>(s.n) * s.n);
  for (auto& c : s.coefficients) c *= scale;
  return s;
}

inline GridField idft2(const Spectrum& spec) {
  GridField g(spec.n);
  g.values = spec.coefficients;
  detail::fft2(g.values, g.n, +1);
  return g;
}

/// Keeps frequencies -k..k-1 along both axes.
inline Spectrum lowpass(const Spectrum& spec, int k) {
  if (k < 1 || k > spec.n / 2) throw SpectralError("lowpass half-width must be in [1, n/2], got " + std::to_string(k));
  Spectrum out = spec;
  for (int v = 0; v < spec.n; ++v)
    for (int u = 0; u < spec.n; ++u) {
      const int fu = Spectrum::frequency(u, spec.n), fv = Spectrum::frequency(v, spec.n);
      if (fu < -k || fu >= k || fv < -k || fv >= k) out(u, v) = 0.0;
    }
  return out;
}

inline GridField compress(const GridField& grid, int k) { return idft2(lowpass(dft2(grid), k)); }

// Serialization: CSV rows `i,j,re,im` after a header line, or little-endian binary with an
// 8-byte magic, uint32 n, uint32 channel count (2), then the real channel and the imaginary
// channel as float64 in storage order.

namespace detail {

inline constexpr char kGridMagic[8] = {'Q', 'C', 'G', 'R', 'I', 'D', '0', '1'};
inline constexpr char kSpectrumMagic[8] = {'Q', 'C', 'S', 'P', 'E', 'C', '0', '1'};

inline void write_complex_csv(const std::filesystem::path& path, int n, const std::vector<Complex>& v) {
  std::ofstream out(path);
  if (!out) throw SpectralError("cannot write " + path.string());
  out.imbue(std::locale::classic());
  out << std::setprecision(17) << "i,j,re,im\n";
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      const Complex& z = v[static_cast<std::size_t>(j) * n + i];
      out << i << ',' << j << ',' << z.real() << ',' << z.imag() << '\n';
    }
}

inline std::pair<int, std::vector<Complex>> read_complex_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SpectralError("cannot open " + path.string());
  in.imbue(std::locale::classic());
  std::string line;
  std::vector<std::tuple<int, int, Complex>> rows;
  int max_index = -1;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line.rfind("i,", 0) == 0) continue;
    for (auto& ch : line)
      if (ch == ',') ch = ' ';
    std::istringstream s(line);
    s.imbue(std::locale::classic());
    int i, j;
    double re, im;
    if (!(s >> i >> j >> re >> im) || i < 0 || j < 0)
      throw SpectralError("parse error in " + path.string() + ":" + std::to_string(line_no));
    rows.emplace_back(i, j, Complex(re, im));
    max_index = std::max({max_index, i, j});
  }
  const int n = max_index + 1;
  if (!valid_grid_size(n) || rows.size() != static_cast<std::size_t>(n) * n)
    throw SpectralError("incomplete or invalid grid in " + path.string());
  std::vector<Complex> v(static_cast<std::size_t>(n) * n);
  for (const auto& [i, j, z] : rows) v[static_cast<std::size_t>(j) * n + i] = z;
  return {n, std::move(v)};
}

inline void put_u32(std::ostream& out, std::uint32_t x) {
  unsigned char b[4];
  for (int k = 0; k < 4; ++k) b[k] = static_cast<unsigned char>(x >> (8 * k));
  out.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_f64(std::ostream& out, double x) {
  const auto bits = std::bit_cast<std::uint64_t>(x);
  unsigned char b[8];
  for (int k = 0; k < 8; ++k) b[k] = static_cast<unsigned char>(bits >> (8 * k));
  out.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint64_t get_le(std::istream& in, int bytes) {
  unsigned char b[8] = {};
  if (!in.read(reinterpret_cast<char*>(b), bytes)) throw SpectralError("truncated binary grid");
  std::uint64_t x = 0;
  for (int k = 0; k < bytes; ++k) x |= static_cast<std::uint64_t>(b[k]) << (8 * k);
  return x;
}

inline void write_complex_binary(const std::filesystem::path& path, const char (&magic)[8], int n,
                                 const std::vector<Complex>& v) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw SpectralError("cannot write " + path.string());
  out.write(magic, 8);
  put_u32(out, static_cast<std::uint32_t>(n));
  put_u32(out, 2);
  for (const auto& z : v) put_f64(out, z.real());
  for (const auto& z : v) put_f64(out, z.imag());
}

inline std::pair<int, std::vector<Complex>> read_complex_binary(const std::filesystem::path& path,
                                                                const char (&magic)[8]) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SpectralError("cannot open " + path.string());
  char m[8];
  if (!in.read(m, 8) || std::memcmp(m, magic, 8) != 0) throw SpectralError("bad magic in " + path.string());
  const int n = static_cast<int>(get_le(in, 4));
  const auto channels = get_le(in, 4);
  if (!valid_grid_size(n) || channels != 2) throw SpectralError("bad header in " + path.string());
  std::vector<Complex> v(static_cast<std::size_t>(n) * n);
  for (auto& z : v) z.real(std::bit_cast<double>(get_le(in, 8)));
  for (auto& z : v) z.imag(std::bit_cast<double>(get_le(in, 8)));
  return {n, std::move(v)};
}

}  // namespace detail

inline void write_grid_csv(const std::filesystem::path& p, const GridField& g) { detail::write_complex_csv(p, g.n, g.values); }
inline void write_spectrum_csv(const std::filesystem::path& p, const Spectrum& s) {
  detail::write_complex_csv(p, s.n, s.coefficients);
}
inline void write_grid_binary(const std::filesystem::path& p, const GridField& g) {
  detail::write_complex_binary(p, detail::kGridMagic, g.n, g.values);
}
inline void write_spectrum_binary(const std::filesystem::path& p, const Spectrum& s) {
  detail::write_complex_binary(p, detail::kSpectrumMagic, s.n, s.coefficients);
}

inline GridField read_grid_csv(const std::filesystem::path& p) {
  auto [n, v] = detail::read_complex_csv(p);
  GridField g(n);
  g.values = std::move(v);
  return g;
}
inline Spectrum read_spectrum_csv(const std::filesystem::path& p) {
  auto [n, v] = detail::read_complex_csv(p);
  return Spectrum{n, std::move(v)};
}
inline GridField read_grid_binary(const std::filesystem::path& p) {
  auto [n, v] = detail::read_complex_binary(p, detail::kGridMagic);
  GridField g(n);
  g.values = std::move(v);
  return g;
}
inline Spectrum read_spectrum_binary(const std::filesystem::path& p) {
  auto [n, v] = detail::read_complex_binary(p, detail::kSpectrumMagic);
  return Spectrum{n, std::move(v)};
}

}  // namespace qcreg
