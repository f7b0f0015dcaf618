#ifndef CTSTAB_RICCATI_HPP
#define CTSTAB_RICCATI_HPP

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <utility>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "ctstab/errors.hpp"
#include "ctstab/matrix_ops.hpp"

namespace ctstab {

/// Positive semidefinite Riccati solution with its self-certification data.
struct CareSolution {
  Eigen::MatrixXd P;
  double residual_norm = 0.0;  // operator norm of the Riccati operator at P
  int iterations = 0;          // sign-function sweeps used
};

namespace detail {

inline void require_symmetric(const Eigen::MatrixXd& m, const char* name) {
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
    throw input_error(std::string(name) + " is not symmetric");
}

inline Eigen::LLT<Eigen::MatrixXd> spd_factor(const Eigen::MatrixXd& m,
                                              const char* name) {
  require_square(m, name);
  require_finite(m, name);
  require_symmetric(m, name);
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success)
    throw input_error(std::string(name) + " is not positive definite");
  return llt;
}

/// D^T X + X D + W = 0 by Kronecker vectorization; no stability check.
/// Returns nullopt when the Lyapunov operator is singular
/// (some eigenvalue pair of D satisfies lambda_i + lambda_j = 0).
inline std::optional<Eigen::MatrixXd> solve_lyapunov_kron(
    const Eigen::MatrixXd& d, const Eigen::MatrixXd& w) {
  const Eigen::Index n = d.rows();
  Eigen::MatrixXd op = Eigen::MatrixXd::Zero(n * n, n * n);
  // vec(D^T X) = (I kron D^T) vec(X), vec(X D) = (D^T kron I) vec(X)
  for (Eigen::Index b = 0; b < n; ++b) {
    op.block(b * n, b * n, n, n) += d.transpose();
    for (Eigen::Index c = 0; c < n; ++c)
      op.block(b * n, c * n, n, n).diagonal().array() += d(c, b);
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(op);
  if (!lu.isInvertible()) return std::nullopt;
  const Eigen::Map<const Eigen::VectorXd> w_vec(w.data(), n * n);
  const Eigen::VectorXd x_vec = lu.solve(-w_vec);
  Eigen::MatrixXd x = Eigen::Map<const Eigen::MatrixXd>(x_vec.data(), n, n);
  return 0.5 * (x + x.transpose());
}

}  // namespace detail

/// A^T M + M A - M B R^-1 B^T M + Q.
inline Eigen::MatrixXd riccati_operator(const Eigen::MatrixXd& a,
                                        const Eigen::MatrixXd& b,
                                        const Eigen::MatrixXd& q,
                                        const Eigen::MatrixXd& r,
                                        const Eigen::MatrixXd& m) {
  require_square(a, "A");
  require_finite(a, "A");
  require_finite(b, "B");
  const Eigen::Index p = a.rows();
  if (b.rows() != p) throw input_error("B row count must match A");
  if (q.rows() != p || q.cols() != p) throw input_error("Q must be p x p");
  if (r.rows() != b.cols() || r.cols() != b.cols())
    throw input_error("R must be q x q");
  if (m.rows() != p || m.cols() != p) throw input_error("M must be p x p");
  require_finite(m, "M");
  detail::require_symmetric(q, "Q");
  auto r_llt = detail::spd_factor(r, "R");
  return a.transpose() * m + m * a - m * b * r_llt.solve(b.transpose()) * m + q;
}

/// Solves A^T P + P A - P B R^-1 B^T P + Q = 0 for the stabilizing PSD P.
///
/// Matrix sign-function iteration on the Hamiltonian
///   H = [[A, -B R^-1 B^T], [-Q, -A^T]]
/// with determinant scaling (Byers 1987), least-squares extraction of P from
/// the stable invariant subspace, and one Newton (Lyapunov) refinement step.
inline CareSolution solve_care(const Eigen::MatrixXd& a,
                               const Eigen::MatrixXd& b,
                               const Eigen::MatrixXd& q,
                               const Eigen::MatrixXd& r, double tol = 1e-9,
                               int max_iter = 100) {
  require_square(a, "A");
  require_finite(a, "A");
  require_finite(b, "B");
  const Eigen::Index p = a.rows();
  if (b.rows() != p) throw input_error("B row count must match A");
  detail::spd_factor(q, "Q");
  auto r_llt = detail::spd_factor(r, "R");
  if (q.rows() != p) throw input_error("Q must be p x p");
  if (r.rows() != b.cols()) throw input_error("R must be q x q");
  if (!(tol > 0.0) || max_iter < 1) throw input_error("bad tolerance settings");

  const Eigen::MatrixXd gram = b * r_llt.solve(b.transpose());
  Eigen::MatrixXd hamiltonian(2 * p, 2 * p);
  hamiltonian << a, -gram, -q, -a.transpose();

  Eigen::MatrixXd z = hamiltonian;
  const double inv_dim = 1.0 / static_cast<double>(2 * p);
  int iterations = 0;
  bool converged = false;
  while (iterations < max_iter) {
    ++iterations;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(z);
    const double det = lu.determinant();
    if (!std::isfinite(det) || det == 0.0)
      throw care_error(care_error::kind::no_solution,
                       "sign iteration hit a singular iterate");
    const double scale = std::pow(std::abs(det), -inv_dim);
    if (!std::isfinite(scale) || scale == 0.0)
      throw care_error(care_error::kind::no_solution,
                       "sign iteration scaling overflowed");
    Eigen::MatrixXd z_next = 0.5 * (scale * z + lu.inverse() / scale);
    if (!z_next.allFinite())
      throw care_error(care_error::kind::no_solution,
                       "sign iteration diverged");
    const double step = (z_next - z).norm();
    z = std::move(z_next);
    if (step <= 1e-11 * std::max(1.0, z.norm())) {
      converged = true;
      break;
    }
  }
  if (!converged)
    throw care_error(care_error::kind::no_solution,
                     "matrix sign iteration did not converge; "
                     "model appears non-stabilizable");

  // sign(H) acts as -1 on the stable subspace spanned by [I; P]:
  // (Z + I) [I; P] = 0 read as an overdetermined system in P.
  const Eigen::MatrixXd ident = Eigen::MatrixXd::Identity(p, p);
  Eigen::MatrixXd lhs(2 * p, p);
  Eigen::MatrixXd rhs(2 * p, p);
  lhs << z.topRightCorner(p, p), z.bottomRightCorner(p, p) + ident;
  rhs << -(z.topLeftCorner(p, p) + ident), -z.bottomLeftCorner(p, p);
  Eigen::MatrixXd sol =
      lhs.jacobiSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(rhs);
  sol = 0.5 * (sol + sol.transpose());

  const auto residual_at = [&](const Eigen::MatrixXd& x) {
    return (a.transpose() * x + x * a - x * gram * x + q).eval();
  };

  // Newton step: D^T delta + delta D = -phi(P) at the closed loop D = A - G P.
  Eigen::MatrixXd residual = residual_at(sol);
  double residual_norm = operator_norm(residual);
  if (const auto delta =
          detail::solve_lyapunov_kron(a - gram * sol, residual)) {
    Eigen::MatrixXd refined = sol + *delta;
    refined = 0.5 * (refined + refined.transpose());
    const double refined_norm = operator_norm(residual_at(refined));
    if (refined_norm < residual_norm) {
      sol = std::move(refined);
      residual_norm = refined_norm;
    }
  }

  if (!std::isfinite(residual_norm) || residual_norm > tol)
    throw care_error(care_error::kind::numerical_failure,
                     "Riccati residual above tolerance");

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sol);
  if (eig.info() != Eigen::Success)
    throw numerical_error("eigenvalue iteration did not converge");
  const double p_norm = eig.eigenvalues().cwiseAbs().maxCoeff();
  if (eig.eigenvalues().minCoeff() < -1e-6 * p_norm)
    throw care_error(care_error::kind::indefinite_solution,
                     "Riccati solution is indefinite");
  if (spectral_abscissa(a - gram * sol) >= 0.0)
    throw care_error(care_error::kind::no_solution,
                     "closed loop from Riccati solution is not stable");

  return CareSolution{std::move(sol), residual_norm, iterations};
}

/// K = -R^-1 B^T P for the stabilizing Riccati solution P.
inline Eigen::MatrixXd lqr_gain(const Eigen::MatrixXd& a,
                                const Eigen::MatrixXd& b,
                                const Eigen::MatrixXd& q,
                                const Eigen::MatrixXd& r, double tol = 1e-9,
                                int max_iter = 100) {
  const CareSolution care = solve_care(a, b, q, r, tol, max_iter);
  Eigen::LLT<Eigen::MatrixXd> r_llt(r);
  return -r_llt.solve(b.transpose() * care.P);
}

/// Solves D^T M + M D + W = 0 for Hurwitz D; M equals the integral
/// of e^{D^T t} W e^{D t} over [0, inf).
inline Eigen::MatrixXd solve_lyapunov(const Eigen::MatrixXd& d,
                                      const Eigen::MatrixXd& w) {
  require_square(d, "D");
  require_finite(d, "D");
  if (w.rows() != d.rows() || w.cols() != d.cols())
    throw input_error("W must match D");
  require_finite(w, "W");
  detail::require_symmetric(w, "W");
  if (spectral_abscissa(d) >= 0.0) throw input_error("D is not Hurwitz");
  const auto m = detail::solve_lyapunov_kron(d, w);
  if (!m) throw numerical_error("Lyapunov operator is singular");
  return *m;
}

}  // namespace ctstab

#endif  // CTSTAB_RICCATI_HPP
