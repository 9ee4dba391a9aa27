#pragma once

// Phase-space integrators: the conservative leapfrog, the conformal
// (friction-scaled) leapfrog, and the repel-then-attract flow built from it.

#include "rahmc/core.hpp"
#include "rahmc/model.hpp"

#include <functional>
#include <optional>
#include <string>

namespace rahmc {

struct PhaseState {
  Vector q;
  Vector p;

  Eigen::Index dim() const noexcept { return q.size(); }
  bool finite() const { return q.allFinite() && p.allFinite(); }

  /// Stacked (q, p) in R^{2d}.
  Vector stacked() const {
    Vector z(2 * q.size());
    z << q, p;
    return z;
  }
  static PhaseState from_stacked(const Vector& z) {
    const Eigen::Index d = z.size() / 2;
    return {z.head(d), z.tail(d)};
  }
};

/// A trajectory produced a non-finite position, momentum, gradient or energy.
class BlowUpError : public std::runtime_error {
 public:
  BlowUpError(const std::string& what, PhaseState state, long step)
      : std::runtime_error(what + " at step " + std::to_string(step)), state_(std::move(state)), step_(step) {}

  const PhaseState& state() const noexcept { return state_; }
  long step() const noexcept { return step_; }

 private:
  PhaseState state_;
  long step_;
};

/// Gaussian kinetic energy K(p) = p' M^-1 p / 2 with mass matrix M.
class KineticSpec {
 public:
  explicit KineticSpec(Eigen::Index d) : mass_(Matrix::Identity(d, d)), inv_(mass_), chol_(mass_), identity_(true) {}

  explicit KineticSpec(const Matrix& mass) : mass_(mass) {
    require(mass.rows() == mass.cols() && mass.rows() >= 1, "mass matrix must be square");
    require((mass - mass.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + mass.cwiseAbs().maxCoeff()),
            "mass matrix must be symmetric");
    Eigen::LLT<Matrix> llt(mass);
    require(llt.info() == Eigen::Success, "mass matrix must be positive definite");
    chol_ = llt.matrixL();
    inv_ = llt.solve(Matrix::Identity(mass.rows(), mass.cols()));
    identity_ = mass.isIdentity(0.0);
  }

  static KineticSpec diagonal(const Vector& diag) { return KineticSpec(Matrix(diag.asDiagonal())); }

  Eigen::Index dim() const noexcept { return mass_.rows(); }
  const Matrix& mass() const noexcept { return mass_; }
  const Matrix& inverse() const noexcept { return inv_; }
  const Matrix& cholesky() const noexcept { return chol_; }

  /// M^-1 p
  Vector velocity(const Vector& p) const { return identity_ ? p : Vector(inv_ * p); }
  double kinetic(const Vector& p) const { return 0.5 * p.dot(velocity(p)); }

 private:
  Matrix mass_;
  Matrix inv_;
  Matrix chol_;
  bool identity_ = false;
};

struct IntegratorParams {
  double eps = 0.1;
  long L = 10;
  double gamma = 0.0;

  double total_time() const { return eps * static_cast<double>(L); }

  void validate() const {
    require(eps > 0.0 && std::isfinite(eps), "step size must be positive and finite");
    require(L >= 2, "trajectory length L must be >= 2");
    require(gamma >= 0.0 && std::isfinite(gamma), "friction gamma must be finite and >= 0");
  }
};

template <LogDensityModel Target>
double potential(const Target& target, const Vector& q) {
  return -target.log_density(q);
}

/// H(q, p) = U(q) + K(p).
template <LogDensityModel Target>
double hamiltonian(const PhaseState& z, const Target& target, const KineticSpec& kin) {
  require_dim(z.q.size(), target.dim(), "hamiltonian(q)");
  require_dim(z.p.size(), kin.dim(), "hamiltonian(p)");
  const double h = potential(target, z.q) + kin.kinetic(z.p);
  if (!std::isfinite(h)) throw BlowUpError("non-finite Hamiltonian", z, 0);
  return h;
}

inline PhaseState momentum_flip(PhaseState z) {
  z.p = -z.p;
  return z;
}

/// Householder reflection of p across the hyperplane orthogonal to grad U(q).
/// No-op where |grad U| < 1e-12.
template <LogDensityModel Target>
PhaseState reflect_momentum(PhaseState z, const Target& target) {
  const Vector g = target.grad_log_density(z.q);
  const double n2 = g.squaredNorm();
  if (!(std::sqrt(n2) >= 1e-12)) return z;
  z.p -= (2.0 * z.p.dot(g) / n2) * g;
  return z;
}

namespace detail {

/// One conformal leapfrog step with the log-density gradient at z.q supplied
/// and the gradient at the new position written back, so trajectories cost
/// one gradient evaluation per step. `scale` is exp(-gamma_signed * eps / 2);
/// scale == 1 gives the plain leapfrog bit-for-bit.
template <LogDensityModel Target>
void conformal_step_cached(PhaseState& z, Vector& grad, const Target& target, const KineticSpec& kin, double eps,
                           double scale, long step) {
  const double half = 0.5 * eps;
  z.p = scale * z.p + half * grad;
  z.q += eps * kin.velocity(z.p);
  grad = target.grad_log_density(z.q);
  z.p = scale * (z.p + half * grad);
  if (!z.finite() || !grad.allFinite()) throw BlowUpError("non-finite state in conformal leapfrog", z, step);
}

template <LogDensityModel Target>
void leapfrog_step_cached(PhaseState& z, Vector& grad, const Target& target, const KineticSpec& kin, double eps,
                          long step) {
  const double half = 0.5 * eps;
  z.p += half * grad;
  z.q += eps * kin.velocity(z.p);
  grad = target.grad_log_density(z.q);
  z.p += half * grad;
  if (!z.finite() || !grad.allFinite()) throw BlowUpError("non-finite state in leapfrog", z, step);
}

template <LogDensityModel Target>
Vector initial_gradient(const PhaseState& z, const Target& target, const KineticSpec& kin) {
  require_dim(z.q.size(), target.dim(), "phase state q");
  require_dim(z.p.size(), target.dim(), "phase state p");
  require_dim(kin.dim(), target.dim(), "kinetic spec");
  Vector g = target.grad_log_density(z.q);
  if (!g.allFinite() || !z.finite()) throw BlowUpError("non-finite initial state", z, 0);
  return g;
}

struct NoObserver {
  void operator()(const PhaseState&) const noexcept {}
};

}  // namespace detail

/// Half kick, drift, half kick.
template <LogDensityModel Target>
PhaseState leapfrog_step(PhaseState z, const Target& target, const KineticSpec& kin, double eps) {
  require(eps > 0.0, "leapfrog_step: eps must be positive");
  Vector g = detail::initial_gradient(z, target, kin);
  detail::leapfrog_step_cached(z, g, target, kin, eps, 1);
  return z;
}

/// Conformal leapfrog with signed friction: positive gamma_signed damps the
/// momentum (attracting), negative amplifies it (repelling).
template <LogDensityModel Target>
PhaseState conformal_leapfrog_step(PhaseState z, const Target& target, const KineticSpec& kin, double eps,
                                   double gamma_signed) {
  require(eps > 0.0, "conformal_leapfrog_step: eps must be positive");
  require(std::isfinite(gamma_signed), "conformal_leapfrog_step: gamma must be finite");
  Vector g = detail::initial_gradient(z, target, kin);
  detail::conformal_step_cached(z, g, target, kin, eps, std::exp(-gamma_signed * eps / 2.0), 1);
  return z;
}

/// `steps` consecutive conformal steps with a fixed signed friction.
template <LogDensityModel Target, class Observer = detail::NoObserver>
PhaseState conformal_flow(PhaseState z, const Target& target, const KineticSpec& kin, double eps, double gamma_signed,
                          long steps, Observer&& observe = {}) {
  require(eps > 0.0, "conformal_flow: eps must be positive");
  require(steps >= 0, "conformal_flow: steps must be >= 0");
  Vector g = detail::initial_gradient(z, target, kin);
  const double scale = std::exp(-gamma_signed * eps / 2.0);
  for (long i = 0; i < steps; ++i) {
    detail::conformal_step_cached(z, g, target, kin, eps, scale, i + 1);
    observe(z);
  }
  return z;
}

/// Repelling stage: floor(L/2) steps with negative friction.
template <LogDensityModel Target>
PhaseState flow_repel(PhaseState z, const Target& target, const KineticSpec& kin, const IntegratorParams& prm) {
  prm.validate();
  return conformal_flow(std::move(z), target, kin, prm.eps, -prm.gamma, prm.L / 2);
}

/// Attracting stage: floor(L/2) steps with positive friction.
template <LogDensityModel Target>
PhaseState flow_attract(PhaseState z, const Target& target, const KineticSpec& kin, const IntegratorParams& prm) {
  prm.validate();
  return conformal_flow(std::move(z), target, kin, prm.eps, prm.gamma, prm.L / 2);
}

/// Full repel-then-attract trajectory, momentum not flipped. An odd L drops
/// its last step. With `reflect_midpoint` the momentum is reflected off the
/// potential gradient between the two stages.
template <LogDensityModel Target, class Observer = detail::NoObserver>
PhaseState rahmc_flow(PhaseState z, const Target& target, const KineticSpec& kin, const IntegratorParams& prm,
                      bool reflect_midpoint = false, Observer&& observe = {}) {
  prm.validate();
  const long half = prm.L / 2;
  z = conformal_flow(std::move(z), target, kin, prm.eps, -prm.gamma, half, observe);
  if (reflect_midpoint) z = reflect_momentum(std::move(z), target);
  return conformal_flow(std::move(z), target, kin, prm.eps, prm.gamma, half, observe);
}

/// L plain leapfrog steps.
template <LogDensityModel Target, class Observer = detail::NoObserver>
PhaseState leapfrog_flow(PhaseState z, const Target& target, const KineticSpec& kin, double eps, long L,
                         Observer&& observe = {}) {
  require(eps > 0.0, "leapfrog_flow: eps must be positive");
  require(L >= 0, "leapfrog_flow: L must be >= 0");
  Vector g = detail::initial_gradient(z, target, kin);
  for (long i = 0; i < L; ++i) {
    detail::leapfrog_step_cached(z, g, target, kin, eps, i + 1);
    observe(z);
  }
  return z;
}

using PhaseMap = std::function<PhaseState(const PhaseState&)>;

/// Central-difference Jacobian of a phase-space map at z (2d x 2d).
inline Matrix numeric_jacobian(const PhaseMap& map, const PhaseState& z, double h = 1e-5) {
  require(h > 0.0, "numeric_jacobian: h must be positive");
  require(z.dim() >= 1 && z.dim() <= 5, "numeric_jacobian: intended for d <= 5");
  const Vector x = z.stacked();
  const Eigen::Index n = x.size();
  Matrix J(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    Vector xp = x, xm = x;
    xp[j] += h;
    xm[j] -= h;
    J.col(j) = (map(PhaseState::from_stacked(xp)).stacked() - map(PhaseState::from_stacked(xm)).stacked()) / (2.0 * h);
  }
  return J;
}

/// Determinant of the numeric Jacobian via LU. Throws when the Jacobian is
/// singular to machine precision.
inline double numeric_jacobian_det(const PhaseMap& map, const PhaseState& z, double h = 1e-5) {
  const Matrix J = numeric_jacobian(map, z, h);
  Eigen::FullPivLU<Matrix> lu(J);
  if (!lu.isInvertible()) throw std::domain_error("numeric_jacobian_det: Jacobian is numerically singular");
  return lu.determinant();
}

}  // namespace rahmc
