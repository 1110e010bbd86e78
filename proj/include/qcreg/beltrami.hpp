#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include "qcreg/mesh.hpp"

namespace qcreg {

class SolverError : public Error {
 public:
  using Error::Error;
};

using SparseMatrix = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

/// One Beltrami coefficient per face.
struct BeltramiField {
  std::vector<Complex> mu;

  BeltramiField() = default;
  explicit BeltramiField(std::vector<Complex> values) : mu(std::move(values)) {}
  static BeltramiField constant(std::size_t faces, Complex value) {
    return BeltramiField(std::vector<Complex>(faces, value));
  }

  std::size_t size() const { return mu.size(); }
  const Complex& operator[](std::size_t i) const { return mu[i]; }
  Complex& operator[](std::size_t i) { return mu[i]; }

  double max_abs() const {
    double m = 0.0;
    for (const auto& z : mu) m = std::max(m, std::abs(z));
    return m;
  }
};

/// Largest admissible |mu| inside the solver; values above are pulled back to this bound.
inline constexpr double kMuGuard = 1.0 - 1e-9;

/// Beltrami coefficient of an affine map with the given partials:
/// mu = ((a - d) + i(c + b)) / ((a + d) + i(c - b)).
inline Complex beltrami_of(const FaceDerivatives& D) {
  const Complex num(D.a - D.d, D.c + D.b);
  const Complex den(D.a + D.d, D.c - D.b);
  if (std::abs(den) < 1e-14) throw SolverError("degenerate conformal factor: |f_z| below 1e-14");
  return num / den;
}

/// Wirtinger derivative f_z of an affine map.
inline Complex dz_of(const FaceDerivatives& D) { return 0.5 * Complex(D.a + D.d, D.c - D.b); }

/// Beltrami coefficient of the piecewise-linear map source.uv -> target_uv, per face.
inline BeltramiField compute_mu(const PlanarMesh& source, std::span<const Vec2> target_uv) {
  const auto D = face_derivatives(source, target_uv);
  BeltramiField out;
  out.mu.reserve(D.size());
  for (const auto& d : D) out.mu.push_back(beltrami_of(d));
  return out;
}

/// Jacobian |f_z|^2 (1 - |mu|^2) per face.
inline std::vector<double> jacobian(const PlanarMesh& source, std::span<const Vec2> target_uv) {
  const auto D = face_derivatives(source, target_uv);
  std::vector<double> out;
  out.reserve(D.size());
  for (const auto& d : D) {
    const Complex fz = dz_of(d);
    const Complex fzbar = 0.5 * Complex(d.a - d.d, d.c + d.b);
    // |f_z|^2 (1 - |mu|^2) = |f_z|^2 - |f_zbar|^2, which avoids dividing by f_z.
    out.push_back(std::norm(fz) - std::norm(fzbar));
  }
  return out;
}

/// Entries of the symmetric 2x2 matrix A of the generalized Laplace equation div(A grad u) = 0.
struct Alpha {
  double a1 = 1.0;
  double a2 = 0.0;
  double a3 = 1.0;
};

inline Alpha alpha_of(Complex mu) {
  const double rho = mu.real();
  const double tau = mu.imag();
  const double denom = 1.0 - rho * rho - tau * tau;
  return {((rho - 1.0) * (rho - 1.0) + tau * tau) / denom, -2.0 * tau / denom,
          ((rho + 1.0) * (rho + 1.0) + tau * tau) / denom};
}

/// Pulls |mu| back to at most kMuGuard, keeping the argument.
inline Complex guard_mu(Complex mu) {
  const double r = std::abs(mu);
  return r > kMuGuard ? mu * (kMuGuard / r) : mu;
}

/// alpha_1, alpha_2, alpha_3 per face. Throws when |mu| >= 1 - 1e-9 or mu is not finite.
inline std::vector<Alpha> alpha_coefficients(const BeltramiField& field) {
  std::vector<Alpha> out;
  out.reserve(field.size());
  for (std::size_t f = 0; f < field.size(); ++f) {
    const Complex m = field[f];
    if (!std::isfinite(m.real()) || !std::isfinite(m.imag()))
      throw SolverError("non-finite Beltrami coefficient on face " + std::to_string(f));
    if (std::abs(m) >= kMuGuard)
      throw SolverError("|mu| >= 1 - 1e-9 on face " + std::to_string(f));
    out.push_back(alpha_of(m));
  }
  return out;
}

/// Tanh-type clamp: |mu| = tanh(|nu|), arg(mu) = arg(nu). Always returns |mu| < 1.
inline Complex clamp_mu(Complex nu) {
  const double r = std::abs(nu);
  if (r == 0.0) return {0.0, 0.0};
  double m = std::tanh(r);
  if (m >= 1.0) m = std::nextafter(1.0, 0.0);
  return std::polar(m, std::arg(nu));
}

inline BeltramiField clamp_mu(std::span<const Complex> nu) {
  BeltramiField out;
  out.mu.reserve(nu.size());
  for (const auto& z : nu) {
    if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) throw SolverError("non-finite value passed to clamp_mu");
    out.mu.push_back(clamp_mu(z));
  }
  return out;
}

/// Sum of 1/gap over consecutive boundary angles (the last gap wraps around by 2*pi).
/// `angles` must be strictly increasing and span less than 2*pi.
inline double boundary_energy(std::span<const double> angles) {
  const std::size_t n = angles.size();
  if (n < 2) throw SolverError("boundary energy needs at least two angles");
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double gap = i + 1 < n ? angles[i + 1] - angles[i] : angles[0] + 2.0 * std::numbers::pi - angles[n - 1];
    if (!(gap > 0.0)) throw SolverError("non-monotone boundary angles at index " + std::to_string(i));
    sum += 1.0 / gap;
  }
  return sum;
}

/// Hat-function gradients (A_i, B_i) of the three corners of a planar triangle together
/// with its signed area. A_i = (h_j - h_k) / (2 Area), B_i = (g_k - g_j) / (2 Area).
struct HatGradients {
  std::array<double, 3> A{};
  std::array<double, 3> B{};
  double area = 0.0;
};

inline HatGradients hat_gradients(const std::array<Vec2, 3>& tri) {
  HatGradients out;
  out.area = signed_area(tri[0], tri[1], tri[2]);
  for (int i = 0; i < 3; ++i) {
    const Vec2& pj = tri[(i + 1) % 3];
    const Vec2& pk = tri[(i + 2) % 3];
    out.A[i] = (pj.y() - pk.y()) / (2.0 * out.area);
    out.B[i] = (pk.x() - pj.x()) / (2.0 * out.area);
  }
  return out;
}

/// Coefficients of the Linear Beltrami Solver.
///
/// `matrix` is the symmetric vertex-by-vertex operator whose diagonal holds c_i and whose
/// off-diagonals hold c_l. Each face contributes its area times
/// alpha1 A_i A_j + alpha2 (A_i B_j + A_j B_i) + alpha3 B_i B_j.
struct StiffnessData {
  SparseMatrix matrix;
  std::vector<HatGradients> hats;
  std::vector<Alpha> alphas;

  double c(int i) const { return matrix.coeff(i, i); }
  double c(int i, int l) const { return matrix.coeff(i, l); }
};

/// Assembles the LBS operator from per-face planar triangles (the domain charts).
inline StiffnessData assemble_lbs(std::span<const std::array<Vec2, 3>> charts, const std::vector<Face>& faces,
                                  std::size_t num_vertices, std::span<const Complex> mu,
                                  double degenerate_tol = 1e-14) {
  if (mu.size() != faces.size() || charts.size() != faces.size())
    throw SolverError("Beltrami field size does not match face count");
  StiffnessData out;
  out.hats.resize(faces.size());
  out.alphas.resize(faces.size());
  double mean_area = 0.0;
  for (std::size_t f = 0; f < faces.size(); ++f) {
    out.hats[f] = hat_gradients(charts[f]);
    mean_area += std::abs(out.hats[f].area);
  }
  mean_area /= static_cast<double>(faces.size());

  std::vector<Triplet> triplets;
  triplets.reserve(faces.size() * 9);
  for (std::size_t f = 0; f < faces.size(); ++f) {
    const HatGradients& h = out.hats[f];
    if (!(h.area > degenerate_tol * mean_area))
      throw SolverError("non-positive-definite system: degenerate or inverted face " + std::to_string(f));
    if (!std::isfinite(mu[f].real()) || !std::isfinite(mu[f].imag()))
      throw SolverError("non-finite Beltrami coefficient on face " + std::to_string(f));
    const Alpha al = alpha_of(guard_mu(mu[f]));
    out.alphas[f] = al;
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        const double v = h.area * (al.a1 * h.A[i] * h.A[j] + al.a2 * (h.A[i] * h.B[j] + h.A[j] * h.B[i]) +
                                   al.a3 * h.B[i] * h.B[j]);
        triplets.emplace_back(faces[f][i], faces[f][j], v);
      }
    }
  }
  out.matrix.resize(static_cast<Eigen::Index>(num_vertices), static_cast<Eigen::Index>(num_vertices));
  out.matrix.setFromTriplets(triplets.begin(), triplets.end());
  return out;
}

inline std::vector<std::array<Vec2, 3>> planar_charts(const PlanarMesh& mesh) {
  std::vector<std::array<Vec2, 3>> charts(mesh.num_faces());
  for (std::size_t f = 0; f < charts.size(); ++f) charts[f] = mesh.triangle(f);
  return charts;
}

inline StiffnessData assemble_lbs(const PlanarMesh& mesh, const BeltramiField& mu) {
  const auto charts = planar_charts(mesh);
  return assemble_lbs(charts, mesh.faces(), mesh.num_vertices(), mu.mu);
}

/// Boundary handling for lbs_solve.
struct BoundaryCondition {
  enum class Mode { fixed_positions, circle_sliding };

  Mode mode = Mode::fixed_positions;
  /// Fixed positions (>= 2 in fixed mode; exactly one boundary vertex on the unit circle in
  /// sliding mode).
  std::vector<std::pair<int, Vec2>> pinned;
  /// Optional starting angle per boundary-loop vertex (sliding mode).
  std::optional<std::vector<double>> angles;
  /// Optional interior vertex held at a fixed position (sliding mode). Together with the pinned
  /// boundary vertex this removes the disk automorphisms, which the residual otherwise trades
  /// against mesh quality.
  std::optional<std::pair<int, Vec2>> anchor;

  /// Every boundary vertex pinned at its current planar position.
  static BoundaryCondition fixed_boundary(const PlanarMesh& mesh) {
    BoundaryCondition bc;
    for (int v : mesh.base().boundary()) bc.pinned.emplace_back(v, mesh.uv()[v]);
    return bc;
  }

  /// Sliding on the unit circle with the first boundary-loop vertex pinned at its current angle.
  /// With `anchor_center`, the interior vertex closest to the origin is held at the origin.
  static BoundaryCondition circle(const PlanarMesh& mesh, bool anchor_center = true) {
    BoundaryCondition bc;
    bc.mode = Mode::circle_sliding;
    const int v = mesh.base().boundary().front();
    const Vec2 p = mesh.uv()[v];
    const double th = std::atan2(p.y(), p.x());
    bc.pinned.emplace_back(v, Vec2(std::cos(th), std::sin(th)));
    if (anchor_center) {
      int best = -1;
      for (std::size_t u = 0; u < mesh.num_vertices(); ++u) {
        if (mesh.base().is_boundary_vertex(static_cast<int>(u))) continue;
        if (best < 0 || mesh.uv()[u].norm() < mesh.uv()[best].norm()) best = static_cast<int>(u);
      }
      if (best >= 0) bc.anchor = std::make_pair(best, Vec2(0.0, 0.0));
    }
    return bc;
  }
};

/// Soft point constraint: the barycentric point of `face` should land on `target`.
struct PointConstraint {
  int face = -1;
  Eigen::Vector3d weights = Eigen::Vector3d::Zero();
  Vec2 target = Vec2::Zero();
  double weight = 0.0;
};

struct LbsOptions {
  int max_outer = 10;           // sliding-boundary outer iterations
  int max_halvings = 5;         // step halvings per outer iteration
  double rho_boundary = 1e-8;   // weight of the boundary spacing energy
  double step_tol = 1e-12;      // stop when the largest angle update falls below this
  std::size_t cg_threshold = 500000;  // vertex count above which CG replaces Cholesky
  double cg_tol = 1e-10;
};

struct LbsResult {
  PlanarMesh map;
  std::vector<int> flipped_faces;
  /// Final unwrapped boundary angles in boundary-loop order (sliding mode only).
  std::vector<double> boundary_angles;
  int outer_iterations = 0;
  /// Objective value at the returned map (sliding mode), else the quadratic LBS energy.
  double energy = 0.0;
  bool converged = true;
};

namespace detail {

/// SPD solve: sparse Cholesky below the size threshold, conjugate gradient above it.
class SpdSolver {
 public:
  SpdSolver(const SparseMatrix& A, const LbsOptions& opt) : use_cg_(static_cast<std::size_t>(A.rows()) > opt.cg_threshold) {
    if (use_cg_) {
      cg_.setTolerance(opt.cg_tol);
      cg_.setMaxIterations(std::max<Eigen::Index>(1000, 10 * A.rows()));
      cg_.compute(A);
      if (cg_.info() != Eigen::Success) throw SolverError("singular system (CG setup failed)");
    } else {
      llt_.compute(A);
      if (llt_.info() != Eigen::Success) throw SolverError("non-positive-definite system in LBS solve");
    }
  }

  Eigen::VectorXd solve(const Eigen::VectorXd& b) const {
    Eigen::VectorXd x = use_cg_ ? Eigen::VectorXd(cg_.solve(b)) : Eigen::VectorXd(llt_.solve(b));
    if (!x.allFinite()) throw SolverError("singular system: non-finite solution");
    return x;
  }

 private:
  bool use_cg_;
  Eigen::SimplicialLLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>> llt_;
  Eigen::ConjugateGradient<SparseMatrix, Eigen::Lower | Eigen::Upper> cg_;
};

inline double wrap_positive(double a) {
  const double two_pi = 2.0 * std::numbers::pi;
  a = std::fmod(a, two_pi);
  if (a <= 0.0) a += two_pi;
  return a;
}

/// Unwraps angles so they increase along the loop starting from angles[0].
inline std::vector<double> unwrap_increasing(const std::vector<double>& raw) {
  std::vector<double> out(raw.size());
  out[0] = raw[0];
  for (std::size_t i = 1; i < raw.size(); ++i) out[i] = out[i - 1] + wrap_positive(raw[i] - raw[i - 1]);
  if (out.back() - out.front() >= 2.0 * std::numbers::pi)
    throw SolverError("non-monotone boundary angles: loop winds more than once");
  return out;
}

/// Interior solve with the boundary (and any other pinned vertex) held fixed.
/// The system matrix depends only on the mesh, mu and constraints, so one factorization
/// serves every boundary configuration.
class FixedSolve {
 public:
  FixedSolve(const SparseMatrix& K, const std::vector<char>& is_free, const std::vector<Face>& faces,
             std::span<const PointConstraint> landmarks, const LbsOptions& opt)
      : K_(&K), faces_(&faces), landmarks_(landmarks) {
    const Eigen::Index n = K.rows();
    index_.assign(n, -1);
    for (Eigen::Index v = 0; v < n; ++v)
      if (is_free[v]) index_[v] = num_free_++;
    std::vector<Triplet> t;
    t.reserve(K.nonZeros() + landmarks.size() * 9);
    for (Eigen::Index col = 0; col < K.outerSize(); ++col)
      for (SparseMatrix::InnerIterator it(K, col); it; ++it)
        if (index_[it.row()] >= 0 && index_[it.col()] >= 0) t.emplace_back(index_[it.row()], index_[it.col()], it.value());
    for (const auto& lm : landmarks) {
      const Face& f = faces[lm.face];
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b)
          if (index_[f[a]] >= 0 && index_[f[b]] >= 0)
            t.emplace_back(index_[f[a]], index_[f[b]], 2.0 * lm.weight * lm.weights[a] * lm.weights[b]);
    }
    SparseMatrix A(num_free_, num_free_);
    A.setFromTriplets(t.begin(), t.end());
    if (num_free_ > 0) solver_.emplace(A, opt);
  }

  /// Fills the free entries of x and y (full-length vectors holding fixed values elsewhere).
  void solve(Eigen::VectorXd& x, Eigen::VectorXd& y) const {
    if (num_free_ == 0) return;
    Eigen::VectorXd bx = Eigen::VectorXd::Zero(num_free_);
    Eigen::VectorXd by = Eigen::VectorXd::Zero(num_free_);
    const SparseMatrix& K = *K_;
    for (Eigen::Index col = 0; col < K.outerSize(); ++col) {
      if (index_[col] >= 0) continue;
      for (SparseMatrix::InnerIterator it(K, col); it; ++it) {
        const int r = index_[it.row()];
        if (r < 0) continue;
        bx[r] -= it.value() * x[col];
        by[r] -= it.value() * y[col];
      }
    }
    for (const auto& lm : landmarks_) {
      const Face& f = (*faces_)[lm.face];
      double fx = -lm.target.x();
      double fy = -lm.target.y();
      for (int a = 0; a < 3; ++a)
        if (index_[f[a]] < 0) {
          fx += lm.weights[a] * x[f[a]];
          fy += lm.weights[a] * y[f[a]];
        }
      for (int a = 0; a < 3; ++a) {
        const int r = index_[f[a]];
        if (r < 0) continue;
        bx[r] -= 2.0 * lm.weight * lm.weights[a] * fx;
        by[r] -= 2.0 * lm.weight * lm.weights[a] * fy;
      }
    }
    const Eigen::VectorXd sx = solver_->solve(bx);
    const Eigen::VectorXd sy = solver_->solve(by);
    for (std::size_t v = 0; v < index_.size(); ++v)
      if (index_[v] >= 0) {
        x[v] = sx[index_[v]];
        y[v] = sy[index_[v]];
      }
  }

 private:
  const SparseMatrix* K_;
  const std::vector<Face>* faces_;
  std::span<const PointConstraint> landmarks_;
  std::vector<int> index_;
  int num_free_ = 0;
  std::optional<SpdSolver> solver_;
};

inline double landmark_penalty(std::span<const PointConstraint> landmarks, const std::vector<Face>& faces,
                               const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  double sum = 0.0;
  for (const auto& lm : landmarks) {
    const Face& f = faces[lm.face];
    Vec2 p = Vec2::Zero();
    for (int a = 0; a < 3; ++a) p += lm.weights[a] * Vec2(x[f[a]], y[f[a]]);
    sum += lm.weight * (p - lm.target).squaredNorm();
  }
  return sum;
}

/// Signed area enclosed by the boundary polygon.
inline double polygon_area(const std::vector<int>& loop, const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  double s = 0.0;
  for (std::size_t i = 0; i < loop.size(); ++i) {
    const int a = loop[i];
    const int b = loop[(i + 1) % loop.size()];
    s += x[a] * y[b] - x[b] * y[a];
  }
  return 0.5 * s;
}

}  // namespace detail

/// Solves the Linear Beltrami system on `domain` for the face-wise coefficient `mu`.
///
/// Fixed mode: pinned vertices keep their positions, every other vertex satisfies its LBS row
/// (plus soft point constraints). Sliding mode: the boundary stays on the unit circle with one
/// pinned vertex; boundary angles are updated by damped Newton steps on
/// E = 1/2 (x'Kx + y'Ky) - Area(boundary polygon) + constraints + rho * boundary_energy,
/// which equals a weighted least-squares Beltrami residual and is minimized over the interior
/// exactly at every boundary configuration.
///
/// This overload takes an already assembled operator; `start` supplies the topology and the
/// initial positions (its uv need not be the domain the operator was built on).
inline LbsResult lbs_solve(const PlanarMesh& start, const SparseMatrix& K, const BoundaryCondition& bc,
                           std::span<const PointConstraint> landmarks = {}, const LbsOptions& opt = {}) {
  const PlanarMesh& domain = start;
  const TriMesh& mesh = domain.base();
  const std::size_t nv = mesh.num_vertices();
  if (static_cast<std::size_t>(K.rows()) != nv || static_cast<std::size_t>(K.cols()) != nv)
    throw SolverError("operator size does not match vertex count");
  for (const auto& lm : landmarks)
    if (lm.face < 0 || lm.face >= static_cast<int>(mesh.num_faces()) || lm.weight < 0.0)
      throw SolverError("invalid point constraint");
  const auto& faces = mesh.faces();

  Eigen::VectorXd x(nv), y(nv);
  for (std::size_t v = 0; v < nv; ++v) {
    x[v] = domain.uv()[v].x();
    y[v] = domain.uv()[v].y();
  }

  auto finish = [&](LbsResult& res) {
    std::vector<Vec2> uv(nv);
    for (std::size_t v = 0; v < nv; ++v) uv[v] = Vec2(x[v], y[v]);
    res.map = domain.with_uv(std::move(uv));
    res.flipped_faces = res.map.flipped_faces();
  };

  if (bc.mode == BoundaryCondition::Mode::fixed_positions) {
    if (bc.pinned.size() < 2) throw SolverError("fixed boundary condition needs at least two pinned vertices");
    std::vector<char> is_free(nv, 1);
    for (const auto& [v, p] : bc.pinned) {
      if (v < 0 || v >= static_cast<int>(nv)) throw SolverError("pinned vertex out of range");
      is_free[v] = 0;
      x[v] = p.x();
      y[v] = p.y();
    }
    detail::FixedSolve fixed(K, is_free, faces, landmarks, opt);
    fixed.solve(x, y);
    LbsResult res{domain, {}, {}, 0, 0.0, true};
    res.energy = 0.5 * (x.dot(K * x) + y.dot(K * y)) + detail::landmark_penalty(landmarks, faces, x, y);
    finish(res);
    return res;
  }

  // Sliding mode.
  if (bc.pinned.size() != 1) throw SolverError("circle-sliding boundary condition needs exactly one pinned vertex");
  const auto& loop = mesh.boundary();
  const std::size_t nb = loop.size();
  const int pinned_vertex = bc.pinned.front().first;
  if (pinned_vertex < 0 || pinned_vertex >= static_cast<int>(nv) || !mesh.is_boundary_vertex(pinned_vertex))
    throw SolverError("pinned vertex must lie on the boundary in circle-sliding mode");
  const int pinned_slot = mesh.boundary_index(pinned_vertex);

  std::vector<double> raw(nb);
  if (bc.angles) {
    if (bc.angles->size() != nb) throw SolverError("boundary angle count does not match boundary loop");
    raw = *bc.angles;
  } else {
    for (std::size_t k = 0; k < nb; ++k) raw[k] = std::atan2(y[loop[k]], x[loop[k]]);
  }
  const Vec2 pin = bc.pinned.front().second;
  raw[pinned_slot] = std::atan2(pin.y(), pin.x());
  std::vector<double> theta = detail::unwrap_increasing(raw);

  std::vector<char> is_free(nv, 1);
  for (int v : loop) is_free[v] = 0;
  if (bc.anchor) {
    const int a = bc.anchor->first;
    if (a < 0 || a >= static_cast<int>(nv) || mesh.is_boundary_vertex(a))
      throw SolverError("anchor vertex must be an interior vertex");
    is_free[a] = 0;
    x[a] = bc.anchor->second.x();
    y[a] = bc.anchor->second.y();
  }
  const detail::FixedSolve fixed(K, is_free, faces, landmarks, opt);

  auto place_boundary = [&](const std::vector<double>& th) {
    for (std::size_t k = 0; k < nb; ++k) {
      x[loop[k]] = std::cos(th[k]);
      y[loop[k]] = std::sin(th[k]);
    }
  };
  auto objective = [&](const std::vector<double>& th) {
    place_boundary(th);
    fixed.solve(x, y);
    double e = 0.5 * (x.dot(K * x) + y.dot(K * y)) - detail::polygon_area(loop, x, y) +
               detail::landmark_penalty(landmarks, faces, x, y);
    if (opt.rho_boundary > 0.0) e += opt.rho_boundary * boundary_energy(th);
    return e;
  };

  // Unknown layout: interior x, interior y, then tangential offsets of unpinned boundary vertices.
  std::vector<int> interior_index(nv, -1);
  int ni = 0;
  for (std::size_t v = 0; v < nv; ++v)
    if (is_free[v]) interior_index[v] = ni++;
  std::vector<int> slot_index(nb, -1);
  int nd = 0;
  for (std::size_t k = 0; k < nb; ++k)
    if (static_cast<int>(k) != pinned_slot) slot_index[k] = nd++;
  const int n = 2 * ni + nd;

  // G with x'Gy = boundary polygon area.
  SparseMatrix G(static_cast<Eigen::Index>(nv), static_cast<Eigen::Index>(nv));
  {
    std::vector<Triplet> t;
    for (std::size_t k = 0; k < nb; ++k) {
      t.emplace_back(loop[k], loop[(k + 1) % nb], 0.5);
      t.emplace_back(loop[(k + 1) % nb], loop[k], -0.5);
    }
    G.setFromTriplets(t.begin(), t.end());
  }
  double diag_scale = 0.0;
  for (Eigen::Index i = 0; i < K.rows(); ++i) diag_scale += K.coeff(i, i);
  diag_scale /= static_cast<double>(K.rows());

  LbsResult res{domain, {}, {}, 0, 0.0, false};
  double current = objective(theta);
  for (int iter = 0; iter < opt.max_outer; ++iter) {
    res.outer_iterations = iter + 1;
    place_boundary(theta);
    // Sx, Sy map the unknown vector to vertex coordinates (variable part).
    std::vector<Triplet> tx, ty;
    for (std::size_t v = 0; v < nv; ++v)
      if (interior_index[v] >= 0) {
        tx.emplace_back(static_cast<int>(v), interior_index[v], 1.0);
        ty.emplace_back(static_cast<int>(v), ni + interior_index[v], 1.0);
      }
    for (std::size_t k = 0; k < nb; ++k) {
      if (slot_index[k] < 0) continue;
      tx.emplace_back(loop[k], 2 * ni + slot_index[k], -std::sin(theta[k]));
      ty.emplace_back(loop[k], 2 * ni + slot_index[k], std::cos(theta[k]));
    }
    SparseMatrix Sx(static_cast<Eigen::Index>(nv), n), Sy(static_cast<Eigen::Index>(nv), n);
    Sx.setFromTriplets(tx.begin(), tx.end());
    Sy.setFromTriplets(ty.begin(), ty.end());
    Eigen::VectorXd xc = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nv));
    Eigen::VectorXd yc = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nv));
    for (std::size_t v = 0; v < nv; ++v)
      if (!is_free[v]) {
        xc[v] = x[v];
        yc[v] = y[v];
      }

    SparseMatrix KSx = K * Sx;
    SparseMatrix KSy = K * Sy;
    SparseMatrix GSy = G * Sy;
    SparseMatrix H = SparseMatrix(Sx.transpose() * KSx) + SparseMatrix(Sy.transpose() * KSy);
    SparseMatrix cross = Sx.transpose() * GSy;
    H -= cross;
    H -= SparseMatrix(cross.transpose());
    Eigen::VectorXd lin = Sx.transpose() * (K * xc - G * yc) + Sy.transpose() * (K * yc - G.transpose() * xc);

    std::vector<Triplet> extra;
    if (!landmarks.empty()) {
      // 2w (S'beta)(beta'S) for both coordinates.
      for (const auto& lm : landmarks) {
        const Face& f = faces[lm.face];
        double px = -lm.target.x(), py = -lm.target.y();
        for (int a = 0; a < 3; ++a) {
          px += lm.weights[a] * xc[f[a]];
          py += lm.weights[a] * yc[f[a]];
        }
        std::vector<std::pair<int, double>> rx, ry;
        for (int a = 0; a < 3; ++a) {
          const int v = f[a];
          if (interior_index[v] >= 0) {
            rx.emplace_back(interior_index[v], lm.weights[a]);
            ry.emplace_back(ni + interior_index[v], lm.weights[a]);
          } else if (const int k = mesh.boundary_index(v); k >= 0) {
            if (slot_index[k] >= 0) {
              rx.emplace_back(2 * ni + slot_index[k], -std::sin(theta[k]) * lm.weights[a]);
              ry.emplace_back(2 * ni + slot_index[k], std::cos(theta[k]) * lm.weights[a]);
            }
          }
        }
        for (const auto* r : {&rx, &ry}) {
          const double resid = r == &rx ? px : py;
          for (const auto& [i, wi] : *r) {
            lin[i] += 2.0 * lm.weight * wi * resid;
            for (const auto& [j, wj] : *r) extra.emplace_back(i, j, 2.0 * lm.weight * wi * wj);
          }
        }
      }
    }
    // Boundary spacing energy: second-order model in the angle offsets, plus a small damping.
    for (std::size_t k = 0; k < nb; ++k) {
      const std::size_t k1 = (k + 1) % nb;
      const double gap = k + 1 < nb ? theta[k1] - theta[k] : theta[0] + 2.0 * std::numbers::pi - theta[k];
      const double g1 = -opt.rho_boundary / (gap * gap);
      const double h2 = 2.0 * opt.rho_boundary / (gap * gap * gap);
      const int i0 = slot_index[k];
      const int i1 = slot_index[k1];
      // d gap = delta_{k+1} - delta_k
      if (i1 >= 0) lin[2 * ni + i1] += g1;
      if (i0 >= 0) lin[2 * ni + i0] -= g1;
      if (i1 >= 0) extra.emplace_back(2 * ni + i1, 2 * ni + i1, h2);
      if (i0 >= 0) extra.emplace_back(2 * ni + i0, 2 * ni + i0, h2);
      if (i0 >= 0 && i1 >= 0) {
        extra.emplace_back(2 * ni + i0, 2 * ni + i1, -h2);
        extra.emplace_back(2 * ni + i1, 2 * ni + i0, -h2);
      }
    }
    for (int i = 0; i < nd; ++i) extra.emplace_back(2 * ni + i, 2 * ni + i, 1e-10 * diag_scale);
    SparseMatrix E(n, n);
    E.setFromTriplets(extra.begin(), extra.end());
    H += E;
    H.prune(0.0);

    Eigen::VectorXd z;
    try {
      detail::SpdSolver solver(H, opt);
      z = solver.solve(-lin);
    } catch (const SolverError&) {
      break;
    }

    std::vector<double> step(nb, 0.0);
    double max_step = 0.0;
    for (std::size_t k = 0; k < nb; ++k)
      if (slot_index[k] >= 0) {
        step[k] = std::atan(z[2 * ni + slot_index[k]]);
        max_step = std::max(max_step, std::abs(step[k]));
      }
    if (max_step < opt.step_tol) {
      res.converged = true;
      break;
    }
    // Largest fraction of the step that keeps every gap above half its current size.
    double t = 1.0;
    for (std::size_t k = 0; k < nb; ++k) {
      const std::size_t k1 = (k + 1) % nb;
      const double gap = k + 1 < nb ? theta[k1] - theta[k] : theta[0] + 2.0 * std::numbers::pi - theta[k];
      const double dg = step[k1] - step[k];
      if (dg < 0.0) t = std::min(t, 0.5 * gap / -dg);
    }
    bool accepted = false;
    for (int h = 0; h <= opt.max_halvings; ++h, t *= 0.5) {
      std::vector<double> cand(nb);
      for (std::size_t k = 0; k < nb; ++k) cand[k] = theta[k] + t * step[k];
      const double e = objective(cand);
      if (e < current) {
        const double decrease = current - e;
        theta = std::move(cand);
        current = e;
        accepted = true;
        if (decrease <= 1e-14 * std::max(1.0, std::abs(current))) res.converged = true;
        break;
      }
    }
    if (!accepted || res.converged) {
      res.converged = true;
      break;
    }
  }
  res.energy = objective(theta);
  res.boundary_angles = theta;
  finish(res);
  return res;
}

inline LbsResult lbs_solve(const PlanarMesh& domain, const BeltramiField& mu, const BoundaryCondition& bc,
                           std::span<const PointConstraint> landmarks = {}, const LbsOptions& opt = {}) {
  if (mu.size() != domain.num_faces()) throw SolverError("Beltrami field size does not match face count");
  const StiffnessData stiff = assemble_lbs(domain, mu);
  return lbs_solve(domain, stiff.matrix, bc, landmarks, opt);
}

/// Normalized LBS residual (1/(2N^2)) sum_i (|c_i s_i + sum_l c_l s_l| + |c_i t_i + sum_l c_l t_l|)
/// over interior vertices, N the vertex count.
inline double lbs_residual(const PlanarMesh& domain, const BeltramiField& mu, std::span<const Vec2> candidate_uv) {
  if (candidate_uv.size() != domain.num_vertices()) throw SolverError("candidate size does not match vertex count");
  const StiffnessData stiff = assemble_lbs(domain, mu);
  const std::size_t nv = domain.num_vertices();
  Eigen::VectorXd s(nv), t(nv);
  for (std::size_t v = 0; v < nv; ++v) {
    s[v] = candidate_uv[v].x();
    t[v] = candidate_uv[v].y();
  }
  const Eigen::VectorXd rs = stiff.matrix * s;
  const Eigen::VectorXd rt = stiff.matrix * t;
  double sum = 0.0;
  for (std::size_t v = 0; v < nv; ++v)
    if (!domain.base().is_boundary_vertex(static_cast<int>(v))) sum += std::abs(rs[v]) + std::abs(rt[v]);
  const double N = static_cast<double>(nv);
  return sum / (2.0 * N * N);
}

}  // namespace qcreg
