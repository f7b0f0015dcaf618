#ifndef CTSTAB_MATRIX_OPS_HPP
#define CTSTAB_MATRIX_OPS_HPP

#include <cmath>
#include <string>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "ctstab/errors.hpp"

namespace ctstab {

inline void require_finite(const Eigen::MatrixXd& m, const char* name) {
  if (!m.allFinite())
    throw input_error(std::string(name) + " has non-finite entries");
}

inline void require_square(const Eigen::MatrixXd& m, const char* name) {
  if (m.rows() == 0 || m.rows() != m.cols())
    throw input_error(std::string(name) + " must be square and non-empty");
}

/// All eigenvalues of a real square matrix.
inline Eigen::VectorXcd eigenvalues(const Eigen::MatrixXd& m) {
  require_square(m, "matrix");
  require_finite(m, "matrix");
  Eigen::EigenSolver<Eigen::MatrixXd> solver(m, /*computeEigenvectors=*/false);
  if (solver.info() != Eigen::Success)
    throw numerical_error("eigenvalue iteration did not converge");
  return solver.eigenvalues();
}

/// Largest real part among the eigenvalues; negative iff m is Hurwitz.
inline double spectral_abscissa(const Eigen::MatrixXd& m) {
  return eigenvalues(m).real().maxCoeff();
}

/// Largest singular value.
inline double operator_norm(const Eigen::MatrixXd& m) {
  require_finite(m, "matrix");
  if (m.size() == 0) return 0.0;
  return Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues()(0);
}

/// e^{m t} by scaling-and-squaring with the degree-13 Pade approximant
/// (Higham 2005).
inline Eigen::MatrixXd matrix_exponential(const Eigen::MatrixXd& m,
                                          double t = 1.0) {
  require_square(m, "matrix");
  require_finite(m, "matrix");
  if (!std::isfinite(t)) throw input_error("t must be finite");

  const Eigen::Index n = m.rows();
  Eigen::MatrixXd a = m * t;
  if (!a.allFinite()) throw numerical_error("matrix exponential overflow");

  static constexpr double kPade13[] = {
      64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
      1187353796428800.0,  129060195264000.0,   10559470521600.0,
      670442572800.0,      33522128640.0,       1323241920.0,
      40840800.0,          960960.0,            16380.0,
      182.0,               1.0};
  constexpr double kTheta13 = 5.371920351148152;

  const double l1_norm = a.cwiseAbs().colwise().sum().maxCoeff();
  int squarings = 0;
  if (l1_norm > kTheta13) {
    squarings = static_cast<int>(std::ceil(std::log2(l1_norm / kTheta13)));
    a *= std::ldexp(1.0, -squarings);
  }

  const Eigen::MatrixXd ident = Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd a2 = a * a;
  const Eigen::MatrixXd a4 = a2 * a2;
  const Eigen::MatrixXd a6 = a4 * a2;
  const Eigen::MatrixXd u =
      a * (a6 * (kPade13[13] * a6 + kPade13[11] * a4 + kPade13[9] * a2) +
           kPade13[7] * a6 + kPade13[5] * a4 + kPade13[3] * a2 +
           kPade13[1] * ident);
  const Eigen::MatrixXd v =
      a6 * (kPade13[12] * a6 + kPade13[10] * a4 + kPade13[8] * a2) +
      kPade13[6] * a6 + kPade13[4] * a4 + kPade13[2] * a2 + kPade13[0] * ident;

  Eigen::MatrixXd result = (v - u).partialPivLu().solve(v + u);
  for (int i = 0; i < squarings; ++i) result = result * result;
  if (!result.allFinite()) throw numerical_error("matrix exponential overflow");
  return result;
}

}  // namespace ctstab

#endif  // CTSTAB_MATRIX_OPS_HPP
