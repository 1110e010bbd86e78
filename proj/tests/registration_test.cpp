#include <cmath>
#include <map>

#include <gtest/gtest.h>

#include "qcreg/registration.hpp"
#include "qcreg/synth.hpp"

using namespace qcreg;

namespace {

BeltramiField random_field(std::size_t n, std::uint64_t seed, double scale = 0.3) {
  Rng rng(seed);
  BeltramiField mu;
  for (std::size_t f = 0; f < n; ++f) mu.mu.emplace_back(scale * rng.uniform(-1, 1), scale * rng.uniform(-1, 1));
  return mu;
}

/// Gradient loss from face pairs sharing two vertices, found by a map over sorted vertex pairs.
double dual_edge_oracle(const PlanarMesh& m, const BeltramiField& mu) {
  std::map<std::pair<int, int>, std::vector<int>> by_edge;
  for (std::size_t f = 0; f < m.num_faces(); ++f) {
    const Face& t = m.faces()[f];
    for (int k = 0; k < 3; ++k)
      by_edge[{std::min(t[k], t[(k + 1) % 3]), std::max(t[k], t[(k + 1) % 3])}].push_back(static_cast<int>(f));
  }
  std::vector<double> per_face(m.num_faces(), 0.0);
  for (const auto& [edge, fs] : by_edge) {
    if (fs.size() != 2) continue;
    const auto a = m.triangle(fs[0]), b = m.triangle(fs[1]);
    const double d = ((a[0] + a[1] + a[2]) / 3.0 - (b[0] + b[1] + b[2]) / 3.0).norm();
    const double q = std::norm(mu[fs[0]] - mu[fs[1]]) / (d * d);
    per_face[fs[0]] += q;
    per_face[fs[1]] += q;
  }
  double s = 0.0;
  for (double v : per_face) s += v;
  return s / static_cast<double>(m.num_faces());
}

/// Template disk with landmarks; targets are the images under a seeded amplitude-0.3 distortion.
LandmarkSet synthetic_pair(const PlanarMesh& disk, std::uint64_t seed) {
  SynthConfig cfg;
  cfg.seed = seed;
  cfg.amplitude = 0.3;
  LandmarkSet lm = random_landmarks(seed + 500);
  const Distortion d = distort_disk(disk, random_smooth_mu(cfg), lm);
  for (std::size_t c = 0; c < lm.curves.size(); ++c) lm.curves[c].target = d.landmarks.curves[c].source;
  return lm;
}

void expect_monotone(const RegistrationResult& r) {
  for (std::size_t i = 1; i < r.loss_trace.size(); ++i)
    EXPECT_LE(r.loss_trace[i].total, r.loss_trace[i - 1].total + 1e-12);
  for (const auto& l : r.loss_trace) EXPECT_TRUE(std::isfinite(l.mu) && std::isfinite(l.grad_mu) && std::isfinite(l.landmark));
}

}  // namespace

TEST(Losses, MuExamplesAndOracle) {
  EXPECT_EQ(loss_mu(BeltramiField::constant(10, 0.0)), 0.0);
  EXPECT_NEAR(loss_mu(BeltramiField::constant(10, 0.3)), 0.09, 1e-15);
  const BeltramiField mu = random_field(137, 1);
  double s = 0.0;
  for (const auto& z : mu.mu) s += z.real() * z.real() + z.imag() * z.imag();
  EXPECT_NEAR(loss_mu(mu), s / 137.0, 1e-12);
}

TEST(Losses, GradMuExamplesAndOracle) {
  const PlanarMesh disk = unit_disk_mesh(8, 0.3, 2);
  EXPECT_EQ(loss_grad_mu(disk, BeltramiField::constant(disk.num_faces(), Complex(0.2, -0.1))), 0.0);

  // +c and -c on the two faces of one interior edge
  const auto& edges = disk.base().edges();
  const auto e = *std::find_if(edges.begin(), edges.end(), [](const Edge& x) { return x.faces[1] >= 0; });
  auto spike = [&](double c) {
    BeltramiField mu = BeltramiField::constant(disk.num_faces(), 0.0);
    mu[e.faces[0]] = c;
    mu[e.faces[1]] = -c;
    return loss_grad_mu(disk, mu);
  };
  EXPECT_GT(spike(0.1), 0.0);
  EXPECT_NEAR(spike(0.2), 4.0 * spike(0.1), 1e-12 * spike(0.2));

  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const BeltramiField mu = random_field(disk.num_faces(), seed);
    EXPECT_NEAR(loss_grad_mu(disk, mu), dual_edge_oracle(disk, mu), 1e-12 * dual_edge_oracle(disk, mu));
  }
}

TEST(Losses, SmoothingOperatorIsTheGradient) {
  // d/dmu of sum_f |grad mu_f|^2 is 2 * apply(mu); checked by central differences.
  const PlanarMesh disk = unit_disk_mesh(5, 0.3, 4);
  const MuGradient g(disk);
  BeltramiField mu = random_field(disk.num_faces(), 9);
  std::vector<Complex> out(mu.size());
  g.apply(mu.mu, out);
  const double n = static_cast<double>(mu.size());
  for (std::size_t f : {0u, 7u, 30u}) {
    const double h = 1e-6;
    const Complex z = mu[f];
    mu[f] = z + h;
    const double p = loss_grad_mu(g, mu) * n;
    mu[f] = z - h;
    const double m = loss_grad_mu(g, mu) * n;
    mu[f] = z;
    EXPECT_NEAR((p - m) / (2 * h), 2.0 * out[f].real(), 1e-6);
  }
}

TEST(Losses, LandmarkExamples) {
  const std::vector<Vec2> t{{0.1, 0.2}, {0.3, 0.4}, {-0.2, 0.0}, {0.0, -0.5}};
  EXPECT_EQ(loss_landmark(t, t), 0.0);
  std::vector<Vec2> off = t;
  off[0].x() += 0.01;
  off[1].y() -= 0.01;
  off[2] += Vec2(0.006, 0.008);
  off[3].x() -= 0.01;
  EXPECT_NEAR(loss_landmark(off, t), 1e-4, 1e-15);
  std::vector<Vec2> a{off[2], off[0], off[3], off[1]}, b{t[2], t[0], t[3], t[1]};
  EXPECT_NEAR(loss_landmark(a, b), loss_landmark(off, t), 1e-18);
  off.pop_back();
  EXPECT_THROW(loss_landmark(off, t), LandmarkError);
}

TEST(Metrics, Examples) {
  EXPECT_EQ(mu_statistics(BeltramiField::constant(12, 0.0)).mean_mu, 0.0);
  EXPECT_EQ(mu_statistics(BeltramiField::constant(12, 0.0)).sd_mu, 0.0);
  BeltramiField half = BeltramiField::constant(20, 0.0);
  for (int f = 0; f < 10; ++f) half[f] = Complex(0.3, 0.4);
  const RegistrationMetrics m = mu_statistics(half);
  EXPECT_NEAR(m.mean_mu, 0.25, 1e-15);
  EXPECT_NEAR(m.sd_mu, 0.25, 1e-15);
  ASSERT_EQ(m.histogram.size(), 50u);
  EXPECT_EQ(m.histogram[0], 10);
  EXPECT_EQ(m.histogram[25], 10);
  const RegistrationMetrics r = mu_statistics(random_field(333, 3, 0.7));
  long long total = 0;
  for (auto c : r.histogram) total += c;
  EXPECT_EQ(total, 333);
}

TEST(Register, NoLandmarksGivesIdentity) {
  const PlanarMesh disk = unit_disk_mesh(10, 0.2, 1);
  const RegistrationResult r = register_disk(disk, {});
  for (std::size_t v = 0; v < disk.num_vertices(); ++v) EXPECT_LT((r.map.uv()[v] - disk.uv()[v]).norm(), 1e-8);
  EXPECT_LT(r.mu.max_abs(), 1e-8);
  EXPECT_LT(r.loss_trace.back().total, 1e-12);
}

TEST(Register, LandmarksAtTargets) {
  const PlanarMesh disk = unit_disk_mesh(10, 0.2, 2);
  const RegistrationResult r = register_disk(disk, random_landmarks(4));
  for (std::size_t v = 0; v < disk.num_vertices(); ++v) EXPECT_LT((r.map.uv()[v] - disk.uv()[v]).norm(), 1e-8);
  EXPECT_LT(r.loss_trace.back().total, 1e-12);
}

TEST(Register, SingleLandmarkInterpolationLimit) {
  const PlanarMesh disk = unit_disk_mesh(10, 0.2, 3);
  LandmarkSet lm;
  LandmarkCurve c;
  c.source = {Vec2(0.3, 0.1), Vec2(0.3, 0.1)};
  c.target = {Vec2(0.4, 0.15), Vec2(0.4, 0.15)};
  lm.curves.push_back(c);
  RegistrationParams p;
  p.alpha = 0.0;
  p.beta = 0.0;
  const RegistrationResult r = register_disk(disk, lm, p);
  EXPECT_LT(r.metrics.landmark_rmse, 1e-6);
  EXPECT_TRUE(r.map.is_fold_free());
  expect_monotone(r);
}

TEST(Register, SyntheticPairRecoveryAndDeterminism) {
  const PlanarMesh disk = unit_disk_mesh(16, 0.2, 5);
  const LandmarkSet lm = synthetic_pair(disk, 11);
  RegistrationParams p;
  p.max_outer = 15;
  const RegistrationResult a = register_disk(disk, lm, p);
  EXPECT_TRUE(a.map.is_fold_free());
  EXPECT_LT(a.mu.max_abs(), 1.0);
  EXPECT_LE(a.metrics.landmark_rmse, 1e-2);
  EXPECT_LE(a.metrics.mean_mu, 0.05);
  expect_monotone(a);
  const RegistrationMetrics again = evaluate_metrics(a);
  EXPECT_EQ(again.mean_mu, a.metrics.mean_mu);
  EXPECT_EQ(again.landmark_rmse, a.metrics.landmark_rmse);

  const RegistrationResult b = register_disk(disk, lm, p);
  ASSERT_EQ(a.loss_trace.size(), b.loss_trace.size());
  for (std::size_t i = 0; i < a.loss_trace.size(); ++i) {
    EXPECT_EQ(a.loss_trace[i].total, b.loss_trace[i].total);
    EXPECT_EQ(a.loss_trace[i].landmark, b.loss_trace[i].landmark);
  }

  p.gamma = 2e5;
  const RegistrationResult c = register_disk(disk, lm, p);
  EXPECT_LE(c.metrics.landmark_rmse, a.metrics.landmark_rmse);
  EXPECT_GE(c.metrics.mean_mu, a.metrics.mean_mu);
}

TEST(Register, ReportsInfeasibleLandmarks) {
  const PlanarMesh disk = unit_disk_mesh(8, 0.2, 6);
  LandmarkSet lm;
  LandmarkCurve c;
  c.source = {Vec2(0.2, 0.0), Vec2(-0.2, 0.0)};
  c.target = {Vec2(0.0, 0.1), Vec2(0.0, 0.1)};
  lm.curves.push_back(c);
  RegistrationParams p;
  p.max_outer = 2;
  const RegistrationResult r = register_disk(disk, lm, p);
  ASSERT_FALSE(r.warnings.empty());
  EXPECT_NE(r.warnings.front().find("infeasible"), std::string::npos);
  EXPECT_THROW(register_disk(disk, lm, RegistrationParams{.alpha = -1.0}), Error);
}
