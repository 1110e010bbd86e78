#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "qcreg/beltrami.hpp"
#include "qcreg/landmark.hpp"
#include "qcreg/locate.hpp"

namespace qcreg {

struct RegistrationParams {
  double alpha = 1.0;
  double beta = 1.0;
  double gamma = 1e4;
  /// Weight of the LBS energy against the landmark penalties inside each solve.
  double eta = 1.0;
  double rho_boundary = 1e-8;
  int max_outer = 50;
  double tol = 1e-6;
  int smoothing_steps = 10;
  /// Hold the interior vertex nearest the origin at the origin while sliding.
  bool anchor_center = true;
  /// Newton iterations of the sliding boundary per solve.
  int lbs_outer = 10;

  void validate() const {
    for (double w : {alpha, beta, gamma, rho_boundary})
      if (!(w >= 0.0) || !std::isfinite(w)) throw Error("registration weights must be finite and nonnegative");
    if (!(eta > 0.0) || !std::isfinite(eta)) throw Error("eta must be positive");
    if (max_outer < 0 || smoothing_steps < 0 || lbs_outer < 0) throw Error("iteration counts must be nonnegative");
    if (!(tol >= 0.0)) throw Error("tol must be nonnegative");
  }
};

struct LossTerms {
  double mu = 0.0;
  double grad_mu = 0.0;
  double landmark = 0.0;
  double total = 0.0;

  bool operator==(const LossTerms&) const = default;
};

inline constexpr int kHistogramBins = 50;

struct RegistrationMetrics {
  double mean_mu = 0.0;
  double sd_mu = 0.0;
  double landmark_rmse = 0.0;
  double wall_time = 0.0;
  /// |mu| counts in 50 uniform bins on [0, 1).
  std::vector<long long> histogram;
};

struct RegistrationResult {
  PlanarMesh map;
  BeltramiField mu;
  std::vector<LossTerms> loss_trace;
  RegistrationMetrics metrics;
  /// Landmark source points carried through the final map, and their targets.
  std::vector<Vec2> mapped_landmarks;
  std::vector<Vec2> targets;
  int iterations = 0;
  bool converged = false;
  std::vector<std::string> warnings;
};

/// Finite differences of mu across interior dual edges, divided by the centroid distance.
struct MuGradient {
  struct DualEdge {
    int f0 = -1;
    int f1 = -1;
    double length = 0.0;
  };
  std::vector<DualEdge> edges;

  explicit MuGradient(const PlanarMesh& mesh) {
    std::vector<Vec2> c(mesh.num_faces());
    for (std::size_t f = 0; f < c.size(); ++f) {
      const auto t = mesh.triangle(f);
      c[f] = (t[0] + t[1] + t[2]) / 3.0;
    }
    for (const auto& e : mesh.base().edges())
      if (e.faces[0] >= 0 && e.faces[1] >= 0) {
        const double d = (c[e.faces[0]] - c[e.faces[1]]).norm();
        if (!(d > 0.0)) throw MeshError("coincident face centroids");
        edges.push_back({e.faces[0], e.faces[1], d});
      }
  }

  /// Per-face squared gradient magnitude: sum over the face's interior dual edges.
  std::vector<double> squared_norms(const BeltramiField& mu, std::size_t faces) const {
    std::vector<double> g(faces, 0.0);
    for (const auto& e : edges) {
      const double q = std::norm(mu[e.f1] - mu[e.f0]) / (e.length * e.length);
      g[e.f0] += q;
      g[e.f1] += q;
    }
    return g;
  }

  /// out = L mu with L = 2 * (weighted graph Laplacian, weights 1/length^2), the gradient of
  /// sum_f |grad mu_f|^2 up to the factor 2 shared with the mu term.
  void apply(const std::vector<Complex>& mu, std::vector<Complex>& out) const {
    std::fill(out.begin(), out.end(), Complex(0.0, 0.0));
    for (const auto& e : edges) {
      const Complex d = 2.0 * (mu[e.f0] - mu[e.f1]) / (e.length * e.length);
      out[e.f0] += d;
      out[e.f1] -= d;
    }
  }
};

/// Mean squared modulus over faces.
inline double loss_mu(const BeltramiField& mu) {
  if (mu.size() == 0) return 0.0;
  double s = 0.0;
  for (const auto& z : mu.mu) s += std::norm(z);
  return s / static_cast<double>(mu.size());
}

inline double loss_grad_mu(const MuGradient& grad, const BeltramiField& mu) {
  if (mu.size() == 0) return 0.0;
  double s = 0.0;
  for (double g : grad.squared_norms(mu, mu.size())) s += g;
  return s / static_cast<double>(mu.size());
}

inline double loss_grad_mu(const PlanarMesh& mesh, const BeltramiField& mu) {
  if (mu.size() != mesh.num_faces()) throw SolverError("Beltrami field size does not match face count");
  return loss_grad_mu(MuGradient(mesh), mu);
}

/// Mean squared distance between corresponding points.
inline double loss_landmark(const std::vector<Vec2>& current, const std::vector<Vec2>& targets) {
  if (current.size() != targets.size()) throw LandmarkError("landmark counts differ");
  if (current.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < current.size(); ++i) s += (current[i] - targets[i]).squaredNorm();
  return s / static_cast<double>(current.size());
}

/// Mean, population SD and histogram of |mu|.
inline RegistrationMetrics mu_statistics(const BeltramiField& mu) {
  RegistrationMetrics m;
  m.histogram.assign(kHistogramBins, 0);
  if (mu.size() == 0) return m;
  for (const auto& z : mu.mu) {
    const double a = std::abs(z);
    m.mean_mu += a;
    const int bin = std::clamp(static_cast<int>(a * kHistogramBins), 0, kHistogramBins - 1);
    ++m.histogram[bin];
  }
  m.mean_mu /= static_cast<double>(mu.size());
  double var = 0.0;
  for (const auto& z : mu.mu) var += (std::abs(z) - m.mean_mu) * (std::abs(z) - m.mean_mu);
  m.sd_mu = std::sqrt(var / static_cast<double>(mu.size()));
  return m;
}

inline RegistrationMetrics evaluate_metrics(const RegistrationResult& result) {
  RegistrationMetrics m = mu_statistics(result.mu);
  m.landmark_rmse = std::sqrt(loss_landmark(result.mapped_landmarks, result.targets));
  m.wall_time = result.metrics.wall_time;
  return m;
}

namespace detail {

/// Largest eigenvalue estimate of the smoothing operator by power iteration.
inline double smoothing_lambda_max(const MuGradient& grad, std::size_t faces, int iterations = 5) {
  if (faces == 0 || grad.edges.empty()) return 0.0;
  std::vector<Complex> v(faces), w(faces);
  for (std::size_t f = 0; f < faces; ++f) v[f] = Complex(f % 2 ? -1.0 : 1.0, static_cast<double>(f % 3) - 1.0);
  double lambda = 0.0;
  for (int it = 0; it < iterations; ++it) {
    double nv = 0.0;
    for (const auto& z : v) nv += std::norm(z);
    grad.apply(v, w);
    double nw = 0.0;
    for (const auto& z : w) nw += std::norm(z);
    if (!(nv > 0.0) || !(nw > 0.0)) return lambda;
    lambda = std::sqrt(nw / nv);
    const double s = 1.0 / std::sqrt(nw);
    for (std::size_t f = 0; f < faces; ++f) v[f] = w[f] * s;
  }
  return lambda;
}

}  // namespace detail

/// Landmark-constrained quasi-conformal registration of `disk` onto the unit disk.
///
/// Alternates an LBS solve (sliding circle boundary, landmark penalties) with a damped
/// diffusion step on the Beltrami coefficient of the current map. Updates that raise the total
/// loss alpha L_mu + beta L_grad + gamma L_landmark are halved, and the loop ends when none of
/// five halvings helps, when the relative decrease falls below `tol`, or at `max_outer`.
inline RegistrationResult register_disk(const PlanarMesh& disk, const LandmarkSet& lm,
                                        const RegistrationParams& params = {}) {
  const auto t_start = std::chrono::steady_clock::now();
  params.validate();
  lm.validate();
  if (!disk.is_fold_free()) throw SolverError("registration source mesh has flipped faces");
  const std::size_t nf = disk.num_faces();

  // Landmark constraints through barycentric weights in the source disk.
  const TriangleLocator locator(disk);
  std::vector<PointConstraint> constraints;
  std::vector<Vec2> sources, targets;
  for (const auto& c : lm.curves)
    for (std::size_t i = 0; i < c.source.size(); ++i) {
      const FacePoint fp = locator.nearest(c.source[i]);
      if (fp.distance > 1e-9) throw LandmarkError("landmark source point outside the mesh");
      constraints.push_back({fp.face, fp.weights, c.target[i], 0.0});
      sources.push_back(c.source[i]);
      targets.push_back(c.target[i]);
    }
  const std::size_t M = constraints.size();
  for (auto& pc : constraints) pc.weight = params.gamma / (static_cast<double>(M) * params.eta);

  RegistrationResult out{disk, BeltramiField::constant(nf, 0.0), {}, {}, {}, targets, 0, false, {}};
  for (std::size_t i = 0; i < M; ++i)
    for (std::size_t j = i + 1; j < M; ++j)
      if ((sources[i] - sources[j]).norm() > 1e-12 && (targets[i] - targets[j]).norm() <= 1e-12) {
        out.warnings.push_back("infeasible landmarks: points " + std::to_string(i) + " and " + std::to_string(j) +
                               " share a target");
        i = M;
        break;
      }

  const MuGradient grad(disk);
  const BoundaryCondition bc0 = BoundaryCondition::circle(disk, params.anchor_center);
  LbsOptions lbs_opt;
  lbs_opt.max_outer = params.lbs_outer;
  lbs_opt.rho_boundary = params.rho_boundary;

  struct Iterate {
    PlanarMesh map;
    std::vector<double> angles;
    BeltramiField mu;
    std::vector<Vec2> mapped;
    LossTerms loss;
    std::size_t flipped = 0;
  };
  auto evaluate = [&](const PlanarMesh& map, std::vector<double> angles) {
    Iterate it{map, std::move(angles), BeltramiField::constant(nf, 0.0), {}, {}, map.flipped_faces().size()};
    // folded faces have |mu| > 1; pull every value inside the unit disk
    const auto D = face_derivatives(disk, map.uv());
    for (std::size_t f = 0; f < nf; ++f) {
      const Complex num(D[f].a - D[f].d, D[f].c + D[f].b), den(D[f].a + D[f].d, D[f].c - D[f].b);
      const Complex z = std::abs(den) > 0.0 ? num / den : Complex(kMuGuard, 0.0);
      it.mu[f] = std::abs(z) >= kMuGuard ? clamp_mu(z) : z;
    }
    for (const auto& pc : constraints) {
      const Face& f = disk.faces()[pc.face];
      it.mapped.push_back(pc.weights[0] * map.uv()[f[0]] + pc.weights[1] * map.uv()[f[1]] +
                          pc.weights[2] * map.uv()[f[2]]);
    }
    it.loss.mu = loss_mu(it.mu);
    it.loss.grad_mu = loss_grad_mu(grad, it.mu);
    it.loss.landmark = loss_landmark(it.mapped, targets);
    it.loss.total = params.alpha * it.loss.mu + params.beta * it.loss.grad_mu + params.gamma * it.loss.landmark;
    return it;
  };
  auto solve = [&](const BeltramiField& mu, const Iterate* warm) {
    BoundaryCondition bc = bc0;
    if (warm) bc.angles = warm->angles;
    const StiffnessData stiff = assemble_lbs(disk, mu);
    LbsResult r = lbs_solve(warm ? warm->map : disk, stiff.matrix, bc, constraints, lbs_opt);
    return evaluate(r.map, std::move(r.boundary_angles));
  };

  Iterate cur = solve(BeltramiField::constant(nf, 0.0), nullptr);
  out.loss_trace.push_back(cur.loss);

  const double lambda = detail::smoothing_lambda_max(grad, nf);
  const double denom = params.alpha + params.beta * lambda;
  const double step = denom > 0.0 ? 0.5 / denom : 0.0;

  std::vector<Complex> work(nf);
  for (int outer = 0; outer < params.max_outer; ++outer) {
    out.iterations = outer + 1;
    // smoothing_steps explicit descent steps on alpha |mu|^2 + beta |grad mu|^2
    std::vector<Complex> smooth = cur.mu.mu;
    for (int s = 0; s < params.smoothing_steps && step > 0.0; ++s) {
      grad.apply(smooth, work);
      for (std::size_t f = 0; f < nf; ++f) smooth[f] -= step * (params.alpha * smooth[f] + params.beta * work[f]);
    }
    double t = 1.0;
    std::optional<Iterate> next;
    for (int h = 0; h <= 5; ++h, t *= 0.5) {
      std::vector<Complex> cand(nf);
      for (std::size_t f = 0; f < nf; ++f) cand[f] = cur.mu[f] + t * (smooth[f] - cur.mu[f]);
      Iterate trial = solve(clamp_mu(cand), &cur);
      if (trial.loss.total <= cur.loss.total && trial.flipped <= cur.flipped) {
        next = std::move(trial);
        break;
      }
    }
    if (!next) {
      out.converged = true;  // no descent along the smoothing direction
      break;
    }
    const double decrease = cur.loss.total - next->loss.total;
    const double scale = std::max(cur.loss.total, std::numeric_limits<double>::min());
    cur = std::move(*next);
    out.loss_trace.push_back(cur.loss);
    if (decrease <= params.tol * scale) {
      out.converged = true;
      break;
    }
  }
  if (!out.converged && params.max_outer > 0) out.warnings.push_back("registration stopped at max_outer");
  if (params.max_outer == 0) out.converged = true;
  if (cur.flipped > 0) out.warnings.push_back("registered map has " + std::to_string(cur.flipped) + " flipped faces");

  out.map = cur.map;
  out.mu = cur.mu;
  out.mapped_landmarks = cur.mapped;
  out.metrics.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  out.metrics = evaluate_metrics(out);
  return out;
}

}  // namespace qcreg
