#ifndef CTSTAB_STABILIZER_HPP
#define CTSTAB_STABILIZER_HPP

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ctstab/errors.hpp"
#include "ctstab/json_io.hpp"
#include "ctstab/matrix_ops.hpp"
#include "ctstab/posterior.hpp"
#include "ctstab/riccati.hpp"
#include "ctstab/rng.hpp"
#include "ctstab/sde.hpp"

namespace ctstab {

struct StabilizationConfig {
  double tau = 8.0;
  int n_periods = 4;
  double sigma_L = 1.0;
  double sigma_eta = 1.0;
  double epsilon = 0.2;
  double dt = 1e-3;
  Eigen::MatrixXd q_weight;  // empty -> identity
  Eigen::MatrixXd r_weight;  // empty -> identity
  std::uint64_t seed = 0;
  double overflow_bound = 1e8;
};

enum class FailureReason { none, care_failed, overflow, unstable_closed_loop };

inline const char* to_string(FailureReason r) {
  switch (r) {
    case FailureReason::none: return "none";
    case FailureReason::care_failed: return "care_failed";
    case FailureReason::overflow: return "overflow";
    case FailureReason::unstable_closed_loop: return "unstable_closed_loop";
  }
  return "unknown";
}

struct TrajectorySummary {
  double max_state_norm = 0.0;
  double final_state_norm = 0.0;
};

struct StabilizationOutcome {
  std::optional<ParameterSample> sample;       // absent when the run overflowed
  std::optional<Eigen::MatrixXd> gain;         // absent when CARE failed
  bool success = false;
  FailureReason failure_reason = FailureReason::none;
  double estimation_error = std::numeric_limits<double>::quiet_NaN();
  std::optional<double> closed_loop_abscissa;          // true loop A* + B* K
  std::optional<double> sampled_closed_loop_abscissa;  // sampled loop A^ + B^ K
  TrajectorySummary trajectory_summary;
};

/// Random feedback with i.i.d. N(0, sigma_L^2) entries.
inline Eigen::MatrixXd sample_feedback(double sigma_L, Eigen::Index p,
                                       Eigen::Index q, Philox& rng) {
  if (sigma_L < 0.0 || !std::isfinite(sigma_L))
    throw input_error("sigma_L must be non-negative");
  if (p < 1 || q < 1) throw input_error("dimensions must be positive");
  return sigma_L * rng.gaussian_matrix(q, p);
}

/// Whether K stabilizes the true system; also returns the closed-loop
/// spectral abscissa.
inline std::pair<bool, double> is_stabilizing(const DynamicsModel& truth,
                                              const Eigen::MatrixXd& k) {
  validate_model(truth);
  if (k.rows() != truth.q() || k.cols() != truth.p())
    throw input_error("gain must be q x p");
  const double abscissa = spectral_abscissa(truth.A + truth.B * k);
  return {abscissa < 0.0, abscissa};
}

namespace detail {

inline Eigen::MatrixXd weight_or_identity(const Eigen::MatrixXd& w,
                                          Eigen::Index n, const char* name) {
  if (w.size() == 0) return Eigen::MatrixXd::Identity(n, n);
  if (w.rows() != n || w.cols() != n)
    throw config_error(std::string(name) + " has the wrong dimension");
  return w;
}

inline void validate_config(const StabilizationConfig& cfg, Eigen::Index q) {
  if (cfg.tau < 0.0 || !std::isfinite(cfg.tau))
    throw config_error("tau must be non-negative");
  if (cfg.n_periods < 1) throw config_error("n_periods must be at least 1");
  if (cfg.sigma_L < 0.0) throw config_error("sigma_L must be non-negative");
  if (cfg.sigma_eta < 0.0) throw config_error("sigma_eta must be non-negative");
  if (!(cfg.epsilon > 0.0)) throw config_error("epsilon must be positive");
  if (!(cfg.dt > 0.0)) throw config_error("dt must be positive");
  if (!(cfg.overflow_bound > 0.0))
    throw config_error("overflow_bound must be positive");
  if (cfg.tau > 0.0 && cfg.sigma_eta > 0.0 &&
      cfg.epsilon >= cfg.tau / (static_cast<double>(q) * cfg.n_periods))
    throw config_error("epsilon must satisfy epsilon < tau / (q n)");
}

inline TrajectorySummary summarize(const Trajectory& traj) {
  TrajectorySummary s;
  for (const auto& x : traj.states)
    s.max_state_norm = std::max(s.max_state_norm, x.norm());
  if (!traj.states.empty()) s.final_state_norm = traj.states.back().norm();
  return s;
}

}  // namespace detail

/// One end-to-end run: sample K_1..K_n, drive the true system with
/// u_t = K_j x_t + sigma_eta eta_t, build the posterior from the trajectory,
/// sample (A^, B^), synthesize the Riccati gain for the sample, and judge
/// success on the true closed loop. CARE failures and state overflow are
/// recorded as failure reasons, never thrown. When `posterior_out` is given
/// it receives the fitted belief (untouched on overflow).
inline StabilizationOutcome run_stabilization(
    const DynamicsModel& truth, const StabilizationConfig& cfg, Philox& rng,
    Posterior* posterior_out = nullptr) {
  validate_model(truth);
  const Eigen::Index p = truth.p();
  const Eigen::Index q = truth.q();
  detail::validate_config(cfg, q);
  const Eigen::MatrixXd q_weight =
      detail::weight_or_identity(cfg.q_weight, p, "q_weight");
  const Eigen::MatrixXd r_weight =
      detail::weight_or_identity(cfg.r_weight, q, "r_weight");

  PolicySchedule schedule;
  schedule.feedbacks.reserve(static_cast<std::size_t>(cfg.n_periods));
  for (int j = 0; j < cfg.n_periods; ++j)
    schedule.feedbacks.push_back(sample_feedback(cfg.sigma_L, p, q, rng));
  schedule.period_length = cfg.tau / cfg.n_periods;
  schedule.dither_scale = cfg.sigma_eta;
  schedule.dither = make_dither(cfg.epsilon, cfg.tau, q, rng);

  const Trajectory traj =
      simulate(truth, schedule, cfg.dt, cfg.tau, Eigen::VectorXd::Zero(p), rng,
               cfg.overflow_bound);

  StabilizationOutcome out;
  out.trajectory_summary = detail::summarize(traj);
  if (traj.overflowed) {
    out.failure_reason = FailureReason::overflow;
    return out;
  }

  try {
    const Posterior post = build_posterior(traj);
    out.sample = sample_parameters(post, rng);
    if (posterior_out) *posterior_out = post;
  } catch (const numerical_error&) {
    // The precision Cholesky can only break when state magnitudes saturated
    // the floating-point budget (||V|| eps on par with the V >= I floor),
    // the same explosion pathology the overflow bound guards against.
    out.failure_reason = FailureReason::overflow;
    return out;
  }
  out.estimation_error = estimation_error(*out.sample, truth);

  Eigen::MatrixXd gain;
  try {
    gain = lqr_gain(out.sample->A_hat, out.sample->B_hat, q_weight, r_weight);
  } catch (const care_error&) {
    out.failure_reason = FailureReason::care_failed;
    return out;
  } catch (const numerical_error&) {
    out.failure_reason = FailureReason::care_failed;
    return out;
  }
  out.gain = gain;

  const auto [stable, abscissa] = is_stabilizing(truth, gain);
  out.closed_loop_abscissa = abscissa;
  out.sampled_closed_loop_abscissa =
      spectral_abscissa(out.sample->A_hat + out.sample->B_hat * gain);
  out.success = stable;
  out.failure_reason =
      stable ? FailureReason::none : FailureReason::unstable_closed_loop;
  return out;
}

/// Sufficient-accuracy diagnostic: whether the sampled matrices sit within
/// the bounds -c mu p^-1/2 and -c mu p^-1/2 / ||K*|| around the truth, where
/// mu is the true optimal closed-loop abscissa. Estimates inside these margins
/// are guaranteed to stabilize for small enough c; the diagnostic reports the
/// raw margins, and c is an input the algorithm itself never uses.
struct AccuracyDiagnostic {
  double true_closed_loop_abscissa = 0.0;  // mu
  bool margin_hypothesis = false;          // mu <= -1
  double true_gain_norm = 0.0;
  double a_error = 0.0;
  double a_bound = 0.0;
  bool a_condition = false;
  double b_error = 0.0;
  double b_bound = 0.0;
  bool b_condition = false;
};

inline AccuracyDiagnostic sufficient_accuracy_check(
    const DynamicsModel& truth, const ParameterSample& sample, double c,
    const Eigen::MatrixXd& q_weight, const Eigen::MatrixXd& r_weight) {
  validate_model(truth);
  if (!(c > 0.0)) throw input_error("c must be positive");
  const Eigen::MatrixXd gain_true =
      lqr_gain(truth.A, truth.B, q_weight, r_weight);
  AccuracyDiagnostic diag;
  diag.true_closed_loop_abscissa =
      spectral_abscissa(truth.A + truth.B * gain_true);
  diag.margin_hypothesis = diag.true_closed_loop_abscissa <= -1.0;
  diag.true_gain_norm = operator_norm(gain_true);
  const double root_p = std::sqrt(static_cast<double>(truth.p()));
  diag.a_error = operator_norm(sample.A_hat - truth.A);
  diag.a_bound = -c * diag.true_closed_loop_abscissa / root_p;
  diag.a_condition = diag.a_error <= diag.a_bound;
  diag.b_error = operator_norm(sample.B_hat - truth.B);
  diag.b_bound = diag.a_bound / diag.true_gain_norm;
  diag.b_condition = diag.b_error <= diag.b_bound;
  return diag;
}

inline nlohmann::json outcome_to_json(const StabilizationOutcome& out) {
  nlohmann::json j;
  j["success"] = out.success;
  j["failure_reason"] = to_string(out.failure_reason);
  if (std::isfinite(out.estimation_error))
    j["estimation_error"] = out.estimation_error;
  else
    j["estimation_error"] = nullptr;
  j["closed_loop_abscissa"] = out.closed_loop_abscissa
                                  ? nlohmann::json(*out.closed_loop_abscissa)
                                  : nlohmann::json(nullptr);
  j["sampled_closed_loop_abscissa"] =
      out.sampled_closed_loop_abscissa
          ? nlohmann::json(*out.sampled_closed_loop_abscissa)
          : nlohmann::json(nullptr);
  j["gain"] = out.gain ? matrix_to_json(*out.gain) : nlohmann::json(nullptr);
  if (out.sample)
    j["sample"] = nlohmann::json{{"A_hat", matrix_to_json(out.sample->A_hat)},
                                 {"B_hat", matrix_to_json(out.sample->B_hat)}};
  else
    j["sample"] = nullptr;
  j["trajectory_summary"] =
      nlohmann::json{{"max_state_norm", out.trajectory_summary.max_state_norm},
                     {"final_state_norm", out.trajectory_summary.final_state_norm}};
  return j;
}

}  // namespace ctstab

#endif  // CTSTAB_STABILIZER_HPP
