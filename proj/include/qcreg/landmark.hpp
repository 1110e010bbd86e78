#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <locale>
#include <queue>
#include <sstream>
#include <string>
#include <vector>

#include "qcreg/diffgeo.hpp"
#include "qcreg/mesh.hpp"

namespace qcreg {

class LandmarkError : public Error {
 public:
  using Error::Error;
};

/// One landmark curve: source positions on the moving disk and matching target positions.
struct LandmarkCurve {
  int id = 0;
  std::vector<Vec2> source;
  std::vector<Vec2> target;
  Vec2 start = Vec2::Zero();
  Vec2 end = Vec2::Zero();
};

struct LandmarkSet {
  std::vector<LandmarkCurve> curves;

  std::size_t point_count() const {
    std::size_t n = 0;
    for (const auto& c : curves) n += c.source.size();
    return n;
  }

  /// Throws LandmarkError unless every curve has >= 2 points, matching target counts and all
  /// points in the closed unit disk (with `slack`).
  void validate(double slack = 1e-9) const {
    for (const auto& c : curves) {
      const std::string tag = "landmark curve " + std::to_string(c.id);
      if (c.source.size() < 2) throw LandmarkError(tag + " has fewer than two points");
      if (c.target.size() != c.source.size()) throw LandmarkError(tag + ": source and target counts differ");
      for (const auto* seq : {&c.source, &c.target})
        for (const auto& p : *seq)
          if (!p.allFinite() || p.norm() > 1.0 + slack) throw LandmarkError(tag + " has a point outside the unit disk");
    }
  }
};

struct DetectOptions {
  double epsilon = 0.05;  // darkness floor
};

struct DetectedCurve {
  std::vector<Vec2> points;
  std::vector<int> vertices;
  double cost = 0.0;
  double start_snap = 0.0;
  double end_snap = 0.0;
};

namespace detail {

inline int nearest_vertex(const PlanarMesh& disk, const Vec2& p, double& dist) {
  int best = -1;
  dist = std::numeric_limits<double>::infinity();
  for (std::size_t v = 0; v < disk.num_vertices(); ++v) {
    const double d = (disk.uv()[v] - p).norm();
    if (d < dist) {
      dist = d;
      best = static_cast<int>(v);
    }
  }
  return best;
}

/// Per-vertex darkness: H rescaled affinely to [0, 1] over the mesh (0 where H is lowest).
inline std::vector<double> darkness(const std::vector<double>& H) {
  if (H.empty()) return {};
  const auto [lo, hi] = std::minmax_element(H.begin(), H.end());
  std::vector<double> d(H.size(), 0.0);
  if (*hi - *lo > 0.0)
    for (std::size_t v = 0; v < H.size(); ++v) d[v] = (H[v] - *lo) / (*hi - *lo);
  return d;
}

}  // namespace detail

/// Edge weight used by the detector: uv length times (epsilon + mean endpoint darkness).
inline double landmark_edge_weight(const PlanarMesh& disk, const std::vector<double>& dark, int a, int b,
                                   double epsilon) {
  return (disk.uv()[a] - disk.uv()[b]).norm() * (epsilon + 0.5 * (dark[a] + dark[b]));
}

/// Cheapest vertex path between the vertices nearest to `start` and `end`. Low curvature is
/// cheap, so paths follow valleys.
inline DetectedCurve detect_landmark_curve(const PlanarMesh& disk, const CurvatureField& H, const Vec2& start,
                                           const Vec2& end, const DetectOptions& opt = {}) {
  const std::size_t nv = disk.num_vertices();
  if (H.H.size() != nv) throw LandmarkError("curvature field size does not match vertex count");
  if (!(opt.epsilon > 0.0)) throw LandmarkError("darkness floor must be positive");
  for (const Vec2& p : {start, end})
    if (!p.allFinite() || p.norm() > 1.0 + 1e-9) throw LandmarkError("landmark endpoint outside the disk");

  DetectedCurve out;
  const int s = detail::nearest_vertex(disk, start, out.start_snap);
  const int t = detail::nearest_vertex(disk, end, out.end_snap);
  const std::vector<double> dark = detail::darkness(H.H);
  const auto& nbrs = disk.base().vertex_neighbors();

  std::vector<double> dist(nv, std::numeric_limits<double>::infinity());
  std::vector<int> prev(nv, -1);
  std::vector<char> done(nv, 0);
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
  dist[s] = 0.0;
  heap.emplace(0.0, s);
  while (!heap.empty()) {
    const auto [d, u] = heap.top();
    heap.pop();
    if (done[u]) continue;
    done[u] = 1;
    if (u == t) break;
    for (int w : nbrs[u]) {
      if (done[w]) continue;
      const double nd = d + landmark_edge_weight(disk, dark, u, w, opt.epsilon);
      if (nd < dist[w] || (nd == dist[w] && u < prev[w])) {
        dist[w] = nd;
        prev[w] = u;
        heap.emplace(nd, w);
      }
    }
  }
  if (!done[t]) throw LandmarkError("no path between landmark endpoints");

  for (int v = t; v >= 0; v = v == s ? -1 : prev[v]) out.vertices.push_back(v);
  std::reverse(out.vertices.begin(), out.vertices.end());
  for (int v : out.vertices) out.points.push_back(disk.uv()[v]);
  out.cost = dist[t];
  return out;
}

/// `m` points at uniform arc length along the polyline; endpoints are kept exactly.
inline std::vector<Vec2> resample_curve(const std::vector<Vec2>& curve, int m) {
  if (curve.empty()) throw LandmarkError("empty curve");
  std::vector<double> cum{0.0};
  for (std::size_t i = 1; i < curve.size(); ++i) cum.push_back(cum.back() + (curve[i] - curve[i - 1]).norm());
  const double total = cum.back();
  if (curve.size() == 1 || total == 0.0) {
    if (m < 1) throw LandmarkError("sample count must be positive");
    return std::vector<Vec2>(static_cast<std::size_t>(m), curve.front());
  }
  if (m < 2) throw LandmarkError("need at least two samples for a curve");
  std::vector<Vec2> out;
  out.reserve(m);
  out.push_back(curve.front());
  std::size_t seg = 1;
  for (int k = 1; k + 1 < m; ++k) {
    const double s = total * k / (m - 1);
    while (seg + 1 < cum.size() && cum[seg] < s) ++seg;
    const double len = cum[seg] - cum[seg - 1];
    const double t = len > 0.0 ? (s - cum[seg - 1]) / len : 0.0;
    out.push_back(curve[seg - 1] + t * (curve[seg] - curve[seg - 1]));
  }
  out.push_back(curve.back());
  return out;
}

/// Sum of squared distances between corresponding points.
inline double curve_discrepancy(const std::vector<Vec2>& detected, const std::vector<Vec2>& reference) {
  if (detected.size() != reference.size()) throw LandmarkError("curve lengths differ");
  double s = 0.0;
  for (std::size_t i = 0; i < detected.size(); ++i) s += (detected[i] - reference[i]).squaredNorm();
  return s;
}

/// Text format: a `curve <id> m=<count>` header per curve, then `count` lines of `x y`
/// (source only) or `x y tx ty` (source and target). A source-only curve is its own target.
inline void write_landmarks(const std::filesystem::path& path, const LandmarkSet& set) {
  std::ofstream out(path);
  if (!out) throw LandmarkError("cannot write " + path.string());
  out.imbue(std::locale::classic());
  out << std::setprecision(17);
  for (const auto& c : set.curves) {
    out << "curve " << c.id << " m=" << c.source.size() << '\n';
    const bool with_target = c.target.size() == c.source.size() && c.target != c.source;
    for (std::size_t i = 0; i < c.source.size(); ++i) {
      out << c.source[i].x() << ' ' << c.source[i].y();
      if (with_target) out << ' ' << c.target[i].x() << ' ' << c.target[i].y();
      out << '\n';
    }
  }
}

inline LandmarkSet read_landmarks(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LandmarkError("cannot read " + path.string());
  LandmarkSet set;
  std::string line;
  int lineno = 0;
  auto fail = [&](const std::string& what) {
    throw LandmarkError(path.string() + ":" + std::to_string(lineno) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream hs(line);
    hs.imbue(std::locale::classic());
    std::string word, count;
    if (!(hs >> word)) continue;
    if (word != "curve") fail("expected 'curve <id> m=<count>'");
    LandmarkCurve c;
    if (!(hs >> c.id >> count) || count.rfind("m=", 0) != 0) fail("malformed curve header");
    int m = 0;
    try {
      m = std::stoi(count.substr(2));
    } catch (const std::exception&) {
      fail("malformed point count");
    }
    if (m < 1) fail("point count must be positive");
    for (int i = 0; i < m; ++i) {
      if (!std::getline(in, line)) fail("unexpected end of file");
      ++lineno;
      std::istringstream ps(line);
      ps.imbue(std::locale::classic());
      std::vector<double> v;
      double x;
      while (ps >> x) v.push_back(x);
      if (!ps.eof() || (v.size() != 2 && v.size() != 4)) fail("expected 'x y' or 'x y tx ty'");
      c.source.emplace_back(v[0], v[1]);
      c.target.push_back(v.size() == 4 ? Vec2(v[2], v[3]) : Vec2(v[0], v[1]));
    }
    c.start = c.source.front();
    c.end = c.source.back();
    set.curves.push_back(std::move(c));
  }
  return set;
}

}  // namespace qcreg
