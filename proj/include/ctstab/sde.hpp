#ifndef CTSTAB_SDE_HPP
#define CTSTAB_SDE_HPP

#include <algorithm>
#include <charconv>
#include <cmath>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ctstab/errors.hpp"
#include "ctstab/matrix_ops.hpp"
#include "ctstab/rng.hpp"

namespace ctstab {

/// dx_t = (A x_t + B u_t) dt + C dW_t with state dim p, input dim q,
/// noise dim d.
struct DynamicsModel {
  Eigen::MatrixXd A;  // p x p
  Eigen::MatrixXd B;  // p x q
  Eigen::MatrixXd C;  // p x d

  Eigen::Index p() const { return A.rows(); }
  Eigen::Index q() const { return B.cols(); }
  Eigen::Index d() const { return C.cols(); }
};

inline void validate_model(const DynamicsModel& model) {
  require_square(model.A, "A");
  if (model.B.rows() != model.A.rows() || model.B.cols() < 1)
    throw input_error("B must be p x q with q >= 1");
  if (model.C.rows() != model.A.rows() || model.C.cols() < 1)
    throw input_error("C must be p x d with d >= 1");
  require_finite(model.A, "A");
  require_finite(model.B, "B");
  require_finite(model.C, "C");
}

/// Piecewise-constant standard-normal excitation: value k holds on
/// [k epsilon, (k+1) epsilon).
struct DitherSignal {
  double epsilon = 0.0;
  double horizon = 0.0;
  std::vector<Eigen::VectorXd> values;  // one q-vector per piece
};

inline DitherSignal make_dither(double epsilon, double horizon, Eigen::Index q,
                                Philox& rng) {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon))
    throw input_error("epsilon must be positive");
  if (horizon < 0.0 || !std::isfinite(horizon))
    throw input_error("horizon must be non-negative");
  if (q < 1) throw input_error("dither dimension must be positive");
  const long long pieces = std::max<long long>(
      0, static_cast<long long>(std::ceil(horizon / epsilon - 1e-9)));
  DitherSignal signal{epsilon, horizon, {}};
  signal.values.reserve(static_cast<std::size_t>(pieces));
  for (long long k = 0; k < pieces; ++k)
    signal.values.push_back(rng.gaussian_vector(q));
  return signal;
}

/// Period-switched linear feedback plus scaled dither:
/// u_t = K_j x_t + dither_scale * eta_t on period j.
struct PolicySchedule {
  std::vector<Eigen::MatrixXd> feedbacks;  // n matrices, each q x p
  double period_length = 0.0;              // tau / n
  double dither_scale = 0.0;               // sigma_eta
  DitherSignal dither;
};

/// One simulated run on the grid 0, dt, ..., tau. Inputs use the left-point
/// convention, so there is one fewer input than states. If the state norm
/// exceeded the overflow bound the run is truncated at the offending step and
/// `overflowed` is set.
struct Trajectory {
  double dt = 0.0;
  Eigen::Index state_dim = 0;
  Eigen::Index input_dim = 0;
  std::vector<double> times;
  std::vector<Eigen::VectorXd> states;
  std::vector<Eigen::VectorXd> inputs;
  bool overflowed = false;
};

namespace detail {

/// num/den as an exact small integer, or a configuration error.
inline long long exact_ratio(double num, double den, const char* what) {
  const double ratio = num / den;
  const long long rounded = std::llround(ratio);
  if (rounded < 0 || !std::isfinite(ratio) ||
      std::abs(ratio - static_cast<double>(rounded)) >
          1e-6 * std::max(1.0, std::abs(ratio)))
    throw config_error(what);
  return rounded;
}

inline void write_csv_double(std::ostream& os, double x) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  os.write(buf, res.ptr - buf);
}

}  // namespace detail

/// Euler-Maruyama integration of the controlled SDE under a period-switched
/// policy: x_{k+1} = x_k + (A x_k + B u_k) dt + C sqrt(dt) w_k.
inline Trajectory simulate(const DynamicsModel& model,
                           const PolicySchedule& schedule, double dt,
                           double tau, const Eigen::VectorXd& x0, Philox& rng,
                           double overflow_bound = 1e8) {
  validate_model(model);
  if (!(dt > 0.0) || !std::isfinite(dt))
    throw config_error("dt must be positive");
  if (tau < 0.0 || !std::isfinite(tau))
    throw config_error("tau must be non-negative");
  if (!(overflow_bound > 0.0))
    throw config_error("overflow bound must be positive");
  if (schedule.feedbacks.empty())
    throw config_error("schedule needs at least one feedback");
  for (const auto& k : schedule.feedbacks) {
    if (k.rows() != model.q() || k.cols() != model.p())
      throw config_error("feedback matrices must be q x p");
    require_finite(k, "feedback");
  }
  if (x0.size() != model.p()) throw input_error("x0 dimension mismatch");
  require_finite(x0, "x0");
  if (schedule.dither_scale < 0.0)
    throw config_error("dither scale must be non-negative");

  const auto n_periods = static_cast<long long>(schedule.feedbacks.size());
  const long long steps =
      detail::exact_ratio(tau, dt, "tau must be an integer multiple of dt");
  if (steps > 0) {
    if (std::abs(schedule.period_length * static_cast<double>(n_periods) -
                 tau) > 1e-9 * std::max(1.0, tau))
      throw config_error("period length must equal tau / n");
    if (steps < n_periods)
      throw config_error("fewer grid steps than feedback periods");
  }

  const bool dither_active = schedule.dither_scale > 0.0 && steps > 0;
  long long steps_per_piece = 0;
  const auto pieces = static_cast<long long>(schedule.dither.values.size());
  if (dither_active) {
    steps_per_piece = detail::exact_ratio(
        schedule.dither.epsilon, dt,
        "epsilon must be an integer multiple of dt");
    if (steps_per_piece < 1)
      throw config_error("epsilon must be at least dt");
    if (schedule.dither.epsilon >=
        tau / (static_cast<double>(model.q()) * static_cast<double>(n_periods)))
      throw config_error("epsilon must satisfy epsilon < tau / (q n)");
    if ((steps + steps_per_piece - 1) / steps_per_piece > pieces)
      throw config_error("dither signal does not cover [0, tau)");
    for (const auto& v : schedule.dither.values)
      if (v.size() != model.q())
        throw config_error("dither pieces must be q-vectors");
  }

  Trajectory traj;
  traj.dt = dt;
  traj.state_dim = model.p();
  traj.input_dim = model.q();
  traj.times.reserve(static_cast<std::size_t>(steps) + 1);
  traj.states.reserve(static_cast<std::size_t>(steps) + 1);
  traj.inputs.reserve(static_cast<std::size_t>(steps));
  traj.times.push_back(0.0);
  traj.states.push_back(x0);

  Eigen::VectorXd x = x0;
  Eigen::VectorXd u(model.q());
  Eigen::VectorXd x_next(model.p());
  Eigen::VectorXd noise(model.d());
  const double sqrt_dt = std::sqrt(dt);

  for (long long k = 0; k < steps; ++k) {
    // Step k covers [k dt, (k+1) dt); its period is ceil((k+1) n / steps)
    // clamped to [1, n], so the boundary grid point belongs to the next
    // period even when steps/n is not an integer.
    const auto period = static_cast<std::size_t>(
        std::min(((k + 1) * n_periods + steps - 1) / steps, n_periods) - 1);
    u.noalias() = schedule.feedbacks[period] * x;
    if (dither_active) {
      const auto piece = static_cast<std::size_t>(
          std::min(k / steps_per_piece, pieces - 1));
      u.noalias() += schedule.dither_scale * schedule.dither.values[piece];
    }
    for (Eigen::Index i = 0; i < noise.size(); ++i)
      noise[i] = rng.next_gaussian();
    x_next = x;
    x_next.noalias() += model.A * x * dt;
    x_next.noalias() += model.B * u * dt;
    x_next.noalias() += model.C * noise * sqrt_dt;
    const double norm = x_next.norm();
    if (!std::isfinite(norm) || norm > overflow_bound) {
      traj.overflowed = true;
      break;
    }
    traj.inputs.push_back(u);
    traj.states.push_back(x_next);
    traj.times.push_back(static_cast<double>(k + 1) * dt);
    x = x_next;
  }
  return traj;
}

/// Columnar CSV: t, x1..xp, u1..uq. The final state row has empty input
/// fields (left-point convention).
inline void write_trajectory_csv(const Trajectory& traj, std::ostream& os) {
  os << 't';
  for (Eigen::Index i = 0; i < traj.state_dim; ++i) os << ",x" << (i + 1);
  for (Eigen::Index i = 0; i < traj.input_dim; ++i) os << ",u" << (i + 1);
  os << '\n';
  for (std::size_t k = 0; k < traj.states.size(); ++k) {
    detail::write_csv_double(os, traj.times[k]);
    for (Eigen::Index i = 0; i < traj.state_dim; ++i) {
      os << ',';
      detail::write_csv_double(os, traj.states[k][i]);
    }
    for (Eigen::Index i = 0; i < traj.input_dim; ++i) {
      os << ',';
      if (k < traj.inputs.size()) detail::write_csv_double(os, traj.inputs[k][i]);
    }
    os << '\n';
  }
}

}  // namespace ctstab

#endif  // CTSTAB_SDE_HPP
