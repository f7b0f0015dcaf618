#ifndef CTSTAB_POSTERIOR_HPP
#define CTSTAB_POSTERIOR_HPP

#include <utility>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "ctstab/errors.hpp"
#include "ctstab/json_io.hpp"
#include "ctstab/matrix_ops.hpp"
#include "ctstab/rng.hpp"
#include "ctstab/sde.hpp"

namespace ctstab {

/// Matrix-normal belief over theta = [A, B]^T: each column i of theta is
/// N(mean column i, precision^-1).
struct Posterior {
  Eigen::MatrixXd mean;            // (p+q) x p
  Eigen::MatrixXd precision;       // V, (p+q) x (p+q), V >= I
  Eigen::MatrixXd precision_chol;  // lower L with L L^T = V
  Eigen::Index state_dim = 0;
  Eigen::Index input_dim = 0;
};

struct ParameterSample {
  Eigen::MatrixXd A_hat;  // p x p
  Eigen::MatrixXd B_hat;  // p x q
};

namespace detail {

inline void require_not_overflowed(const Trajectory& traj) {
  if (traj.overflowed)
    throw input_error("overflowed trajectory carries no posterior");
  if (traj.states.size() != traj.inputs.size() + 1)
    throw input_error("trajectory shape is inconsistent");
}

}  // namespace detail

/// V = I + sum_k z_k z_k^T dt with z_k = [x_k; u_k] at left grid points.
inline Eigen::MatrixXd accumulate_precision(const Trajectory& traj) {
  detail::require_not_overflowed(traj);
  const Eigen::Index pq = traj.state_dim + traj.input_dim;
  Eigen::MatrixXd v = Eigen::MatrixXd::Identity(pq, pq);
  Eigen::VectorXd z(pq);
  for (std::size_t k = 0; k < traj.inputs.size(); ++k) {
    z.head(traj.state_dim) = traj.states[k];
    z.tail(traj.input_dim) = traj.inputs[k];
    v.selfadjointView<Eigen::Lower>().rankUpdate(z, traj.dt);
  }
  return v.selfadjointView<Eigen::Lower>();
}

/// sum_k z_k (x_{k+1} - x_k)^T: left-point z against the forward state
/// increment (Ito convention).
inline Eigen::MatrixXd observation_cross_sum(const Trajectory& traj) {
  detail::require_not_overflowed(traj);
  const Eigen::Index pq = traj.state_dim + traj.input_dim;
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(pq, traj.state_dim);
  Eigen::VectorXd z(pq);
  for (std::size_t k = 0; k < traj.inputs.size(); ++k) {
    z.head(traj.state_dim) = traj.states[k];
    z.tail(traj.input_dim) = traj.inputs[k];
    s.noalias() += z * (traj.states[k + 1] - traj.states[k]).transpose();
  }
  return s;
}

/// mean = V^-1 sum_k z_k (x_{k+1} - x_k)^T.
inline Eigen::MatrixXd accumulate_mean(const Trajectory& traj,
                                       const Eigen::MatrixXd& precision) {
  const Eigen::Index pq = traj.state_dim + traj.input_dim;
  if (precision.rows() != pq || precision.cols() != pq)
    throw input_error("precision dimension mismatch");
  Eigen::LLT<Eigen::MatrixXd> llt(precision);
  if (llt.info() != Eigen::Success)
    throw numerical_error("precision matrix is not positive definite");
  return llt.solve(observation_cross_sum(traj));
}

inline Posterior build_posterior(const Trajectory& traj) {
  Posterior post;
  post.state_dim = traj.state_dim;
  post.input_dim = traj.input_dim;
  post.precision = accumulate_precision(traj);
  Eigen::LLT<Eigen::MatrixXd> llt(post.precision);
  if (llt.info() != Eigen::Success)
    throw numerical_error("precision matrix is not positive definite");
  post.mean = llt.solve(observation_cross_sum(traj));
  post.precision_chol = llt.matrixL();
  return post;
}

/// Draws theta column-wise: column i = mean column i + L^-T w, w standard
/// normal, which gives column covariance V^-1 exactly.
inline ParameterSample sample_parameters(const Posterior& post, Philox& rng) {
  const Eigen::Index p = post.state_dim;
  const Eigen::Index q = post.input_dim;
  Eigen::MatrixXd theta(p + q, p);
  for (Eigen::Index i = 0; i < p; ++i) {
    const Eigen::VectorXd w = rng.gaussian_vector(p + q);
    theta.col(i) =
        post.mean.col(i) +
        post.precision_chol.transpose().triangularView<Eigen::Upper>().solve(w);
  }
  return ParameterSample{theta.topRows(p).transpose(),
                         theta.bottomRows(q).transpose()};
}

/// Operator 2-norm of [A_hat, B_hat]^T - [A, B]^T.
inline double estimation_error(const ParameterSample& sample,
                               const DynamicsModel& truth) {
  if (sample.A_hat.rows() != truth.p() || sample.A_hat.cols() != truth.p() ||
      sample.B_hat.rows() != truth.p() || sample.B_hat.cols() != truth.q())
    throw input_error("sample dimension mismatch");
  Eigen::MatrixXd diff(truth.p() + truth.q(), truth.p());
  diff.topRows(truth.p()) = (sample.A_hat - truth.A).transpose();
  diff.bottomRows(truth.q()) = (sample.B_hat - truth.B).transpose();
  return operator_norm(diff);
}

inline nlohmann::json posterior_to_json(const Posterior& post, double tau) {
  return nlohmann::json{{"p", post.state_dim},
                        {"q", post.input_dim},
                        {"tau", tau},
                        {"mean", matrix_to_json(post.mean)},
                        {"precision", matrix_to_json(post.precision)}};
}

}  // namespace ctstab

#endif  // CTSTAB_POSTERIOR_HPP
