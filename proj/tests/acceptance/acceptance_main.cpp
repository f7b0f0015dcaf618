// Acceptance suite: one check per numbered criterion, each printed as a
// [PASS]/[FAIL] line with the measured quantities. Exit code is the number
// of failed criteria. Pass criterion numbers as arguments to run a subset.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "../support/oracles.hpp"
#include "ctstab/experiments.hpp"
#include "ctstab/posterior.hpp"
#include "ctstab/riccati.hpp"
#include "ctstab/sde.hpp"
#include "ctstab/stabilizer.hpp"

namespace {

struct Failure {
  std::string message;
};

void require(bool ok, const std::string& message) {
  if (!ok) throw Failure{message};
}

std::string num(double x) {
  std::ostringstream ss;
  ss.precision(6);
  ss << x;
  return ss.str();
}

Eigen::MatrixXd scalar(double x) {
  Eigen::MatrixXd m(1, 1);
  m << x;
  return m;
}

ctstab::StabilizationConfig benchmark_config(double tau, int n, double sigma_L,
                                             double sigma_eta,
                                             double r_scale = 1.0) {
  ctstab::StabilizationConfig cfg;
  cfg.tau = tau;
  cfg.n_periods = n;
  cfg.sigma_L = sigma_L;
  cfg.sigma_eta = sigma_eta;
  cfg.epsilon = 0.2;
  cfg.dt = 1e-3;
  cfg.q_weight = Eigen::MatrixXd::Identity(3, 3);
  cfg.r_weight = r_scale * Eigen::MatrixXd::Identity(2, 2);
  return cfg;
}

std::vector<ctstab::SweepResult> sweep_points(
    const std::vector<ctstab::StabilizationConfig>& grid, int replicates,
    std::uint64_t seed) {
  ctstab::SweepSpec spec;
  spec.grid = grid;
  spec.replicates = replicates;
  spec.base_seed = seed;
  return ctstab::run_sweep(spec, 1);
}

// --- criteria ---------------------------------------------------------------

std::string criterion1_scalar_care() {
  // warm up lazy allocators before timing
  (void)ctstab::solve_care(scalar(0.0), scalar(1.0), scalar(1.0), scalar(1.0));
  const auto start = std::chrono::steady_clock::now();
  const auto first =
      ctstab::solve_care(scalar(0.0), scalar(1.0), scalar(1.0), scalar(1.0));
  const auto second =
      ctstab::solve_care(scalar(1.0), scalar(1.0), scalar(1.0), scalar(1.0));
  const double ms = std::chrono::duration<double, std::milli>(
                        std::chrono::steady_clock::now() - start)
                        .count() /
                    2.0;
  const double err_first = std::abs(first.P(0, 0) - 1.0);
  const double err_second = std::abs(second.P(0, 0) - (1.0 + std::sqrt(2.0)));
  require(err_first <= 1e-10, "P(0,1,1,1) off by " + num(err_first));
  require(err_second <= 1e-10, "P(1,1,1,1) off by " + num(err_second));
  require(ms < 1.0, "scalar solve took " + num(ms) + " ms");
  return "|P-1|=" + num(err_first) + ", |P-(1+sqrt2)|=" + num(err_second) +
         ", " + num(ms) + " ms/solve";
}

std::string criterion2_benchmark_care() {
  const ctstab::DynamicsModel truth = ctstab::default_truth();
  const Eigen::MatrixXd q = Eigen::MatrixXd::Identity(3, 3);
  const Eigen::MatrixXd r = Eigen::MatrixXd::Identity(2, 2);
  const auto start = std::chrono::steady_clock::now();
  const auto care = ctstab::solve_care(truth.A, truth.B, q, r);
  const Eigen::MatrixXd gain = ctstab::lqr_gain(truth.A, truth.B, q, r);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  const double residual = ctstab::operator_norm(
      ctstab::riccati_operator(truth.A, truth.B, q, r, care.P));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(care.P);
  const double min_eig = eig.eigenvalues().minCoeff();
  const double abscissa = ctstab::spectral_abscissa(truth.A + truth.B * gain);
  require(care.residual_norm <= 1e-8,
          "reported residual " + num(care.residual_norm));
  require(residual <= 1e-8, "recomputed residual " + num(residual));
  require(min_eig >= -1e-8 * ctstab::operator_norm(care.P),
          "P indefinite, min eig " + num(min_eig));
  require(abscissa < 0.0, "closed loop abscissa " + num(abscissa));
  require(seconds < 1.0, "took " + num(seconds) + " s");
  return "residual=" + num(residual) + ", min_eig=" + num(min_eig) +
         ", closed-loop abscissa=" + num(abscissa);
}

std::string criterion3_lyapunov_quadrature() {
  ctstab::Philox rng(1234);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Index n = 3 + static_cast<Eigen::Index>(trial % 3);
    const double margin = 0.5 + 1.5 * rng.next_double();
    const Eigen::MatrixXd d = ctstab_tests::random_stable_matrix(n, margin, rng);
    const Eigen::MatrixXd w = Eigen::MatrixXd::Identity(n, n);
    const Eigen::MatrixXd solved = ctstab::solve_lyapunov(d, w);
    const Eigen::MatrixXd quad = ctstab_tests::lyapunov_quadrature(d, w);
    const double rel = (solved - quad).norm() / quad.norm();
    worst = std::max(worst, rel);
  }
  require(worst <= 1e-6, "worst relative error " + num(worst));
  return "50 systems (3x3..5x5), worst rel err " + num(worst);
}

std::string criterion4_explosive_truth() {
  const ctstab::DynamicsModel truth = ctstab::default_truth();
  const double abscissa = ctstab::spectral_abscissa(truth.A);
  const Eigen::VectorXcd eigs = ctstab::eigenvalues(truth.A);
  int unstable = 0;
  for (Eigen::Index i = 0; i < eigs.size(); ++i)
    unstable += eigs[i].real() > 0.0;
  require(abscissa > 0.0, "abscissa " + num(abscissa));
  require(unstable == 2, "unstable eigenvalue count " + std::to_string(unstable));
  return "abscissa=" + num(abscissa) + ", unstable eigenvalues=2 of 3";
}

std::string criterion5_sde_convergence() {
  const ctstab::DynamicsModel truth = ctstab::default_truth();
  const Eigen::MatrixXd gain =
      ctstab::lqr_gain(truth.A, truth.B, Eigen::MatrixXd::Identity(3, 3),
                       Eigen::MatrixXd::Identity(2, 2));
  ctstab::DynamicsModel noiseless = truth;
  noiseless.C = Eigen::MatrixXd::Zero(3, 3);
  const Eigen::VectorXd x0 = Eigen::VectorXd::Ones(3);
  const double tau = 2.0;
  const Eigen::VectorXd oracle =
      ctstab::matrix_exponential(truth.A + truth.B * gain, tau) * x0;
  const auto error_at = [&](double dt) {
    ctstab::Philox rng(0);
    ctstab::PolicySchedule schedule;
    schedule.feedbacks.push_back(gain);
    schedule.period_length = tau;
    const auto traj = ctstab::simulate(noiseless, schedule, dt, tau, x0, rng);
    return (traj.states.back() - oracle).norm();
  };
  const double coarse = error_at(2e-3);
  const double fine = error_at(1e-3);
  const double ratio = coarse / fine;
  require(ratio >= 1.8 && ratio <= 2.2, "error ratio " + num(ratio));
  return "err(2e-3)=" + num(coarse) + ", err(1e-3)=" + num(fine) +
         ", ratio=" + num(ratio);
}

std::string criterion6_brownian_variance() {
  ctstab::DynamicsModel model;
  model.A = Eigen::MatrixXd::Zero(3, 3);
  model.B = Eigen::MatrixXd::Zero(3, 1);
  model.C = Eigen::MatrixXd::Identity(3, 3);
  const double tau = 1.0;
  const int replicates = 10000;
  Eigen::Vector3d sum = Eigen::Vector3d::Zero();
  Eigen::Vector3d sum_sq = Eigen::Vector3d::Zero();
  ctstab::PolicySchedule schedule;
  schedule.feedbacks.push_back(Eigen::MatrixXd::Zero(1, 3));
  schedule.period_length = tau;
  for (int i = 0; i < replicates; ++i) {
    ctstab::Philox rng = ctstab::replicate_stream(606, 0, i);
    const auto traj = ctstab::simulate(model, schedule, 1e-3, tau,
                                       Eigen::VectorXd::Zero(3), rng);
    const Eigen::Vector3d x = traj.states.back();
    sum += x;
    sum_sq += x.cwiseProduct(x);
  }
  double worst = 0.0;
  for (int i = 0; i < 3; ++i) {
    const double mean = sum[i] / replicates;
    const double var = sum_sq[i] / replicates - mean * mean;
    worst = std::max(worst, std::abs(var - tau) / tau);
  }
  require(worst <= 0.05, "worst variance deviation " + num(worst));
  return "10^4 replicates, worst per-coordinate |Var - tau|/tau = " + num(worst);
}

std::string criterion7_posterior_identities() {
  // tau = 0: the posterior is exactly N(0, I).
  {
    ctstab::Trajectory empty;
    empty.dt = 1e-3;
    empty.state_dim = 3;
    empty.input_dim = 2;
    empty.times = {0.0};
    empty.states = {Eigen::VectorXd::Zero(3)};
    const auto post = ctstab::build_posterior(empty);
    require(post.precision == Eigen::MatrixXd::Identity(5, 5),
            "tau=0 precision is not exactly I");
    require(post.mean == Eigen::MatrixXd::Zero(5, 3),
            "tau=0 mean is not exactly 0");
  }
  const ctstab::DynamicsModel truth = ctstab::default_truth();
  double worst_residual = 0.0;
  double worst_min_eig = 1e300;
  for (int run = 0; run < 20; ++run) {
    ctstab::Philox rng = ctstab::replicate_stream(707, 0, run);
    ctstab::PolicySchedule schedule;
    const double tau = 1.0 + (run % 4);
    const int n = 1 + run % 2;
    for (int j = 0; j < n; ++j)
      schedule.feedbacks.push_back(
          ctstab::sample_feedback(0.5 + 0.25 * (run % 3), 3, 2, rng));
    schedule.period_length = tau / n;
    schedule.dither_scale = 0.5 + 0.5 * (run % 2);
    schedule.dither = ctstab::make_dither(0.2, tau, 2, rng);
    const auto traj = ctstab::simulate(truth, schedule, 1e-3, tau,
                                       Eigen::VectorXd::Zero(3), rng);
    if (traj.overflowed) continue;
    const auto post = ctstab::build_posterior(traj);

    Eigen::MatrixXd score = Eigen::MatrixXd::Zero(5, 3);
    for (std::size_t k = 0; k < traj.inputs.size(); ++k) {
      Eigen::VectorXd z(5);
      z << traj.states[k], traj.inputs[k];
      score += z * (traj.states[k + 1] - traj.states[k]).transpose();
    }
    worst_residual = std::max(
        worst_residual, (post.precision * post.mean - score).norm() /
                            std::max(1.0, score.norm()));
    worst_min_eig =
        std::min(worst_min_eig,
                 Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(post.precision)
                     .eigenvalues()
                     .minCoeff());
  }
  require(worst_residual <= 1e-9,
          "normal-equation residual " + num(worst_residual));
  require(worst_min_eig >= 1.0 - 1e-9, "min eig(V) " + num(worst_min_eig));
  return "V mu = score to " + num(worst_residual) +
         ", min eig(V) = " + num(worst_min_eig);
}

std::string criterion8_sampling_moments() {
  const ctstab::DynamicsModel truth = ctstab::default_truth();
  ctstab::Philox traj_rng = ctstab::replicate_stream(808, 0, 0);
  ctstab::PolicySchedule schedule;
  schedule.feedbacks.push_back(ctstab::sample_feedback(1.0, 3, 2, traj_rng));
  schedule.feedbacks.push_back(ctstab::sample_feedback(1.0, 3, 2, traj_rng));
  schedule.period_length = 1.0;
  schedule.dither_scale = 1.0;
  schedule.dither = ctstab::make_dither(0.2, 2.0, 2, traj_rng);
  const auto traj = ctstab::simulate(truth, schedule, 1e-3, 2.0,
                                     Eigen::VectorXd::Zero(3), traj_rng);
  const auto post = ctstab::build_posterior(traj);
  const Eigen::MatrixXd cov_expected =
      Eigen::LLT<Eigen::MatrixXd>(post.precision)
          .solve(Eigen::MatrixXd::Identity(5, 5));

  ctstab::Philox rng = ctstab::replicate_stream(808, 1, 0);
  const int draws = 100000;
  Eigen::MatrixXd mean_acc = Eigen::MatrixXd::Zero(5, 3);
  Eigen::MatrixXd cov_acc = Eigen::MatrixXd::Zero(5, 5);
  for (int i = 0; i < draws; ++i) {
    const auto sample = ctstab::sample_parameters(post, rng);
    Eigen::MatrixXd theta(5, 3);
    theta.topRows(3) = sample.A_hat.transpose();
    theta.bottomRows(2) = sample.B_hat.transpose();
    mean_acc += theta;
    const Eigen::MatrixXd centered = theta - post.mean;
    cov_acc += centered * centered.transpose();
  }
  mean_acc /= draws;
  cov_acc /= 3.0 * draws;
  const double mean_err = (mean_acc - post.mean).cwiseAbs().maxCoeff();
  const double cov_err = (cov_acc - cov_expected).norm() / cov_expected.norm();
  require(mean_err <= 0.01, "empirical mean off by " + num(mean_err));
  require(cov_err <= 0.05, "column covariance off by " + num(cov_err));
  return "10^5 draws: max |mean err| = " + num(mean_err) +
         ", cov Frobenius rel err = " + num(cov_err);
}

std::string criterion9_fig2_thresholds() {
  const auto start = std::chrono::steady_clock::now();
  const auto results = sweep_points(
      {benchmark_config(8.0, 4, 1.0, 1.0), benchmark_config(10.0, 4, 1.0, 1.0)},
      100, 0);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  require(results[0].success_rate >= 0.7,
          "success at tau=8 is " + num(results[0].success_rate));
  require(results[1].success_rate >= 0.8,
          "success at tau=10 is " + num(results[1].success_rate));
  require(seconds <= 240.0, "two sweep points took " + num(seconds) + " s");
  return "success(tau=8)=" + num(results[0].success_rate) +
         ", success(tau=10)=" + num(results[1].success_rate) + ", " +
         num(seconds) + " s total";
}

std::string criterion10_fig1_trend() {
  std::string detail;
  for (const int n : {1, 4}) {
    const auto results = sweep_points(
        {benchmark_config(2.0, n, 1.0, 1.0), benchmark_config(10.0, n, 1.0, 1.0)},
        100, 0);
    require(results[1].err_median < results[0].err_median,
            "n=" + std::to_string(n) + ": median err " +
                num(results[1].err_median) + " at tau=10 vs " +
                num(results[0].err_median) + " at tau=2");
    detail += "n=" + std::to_string(n) + ": " + num(results[0].err_median) +
              " -> " + num(results[1].err_median) + "  ";
  }
  return detail;
}

std::string criterion11_fig3_trend() {
  const auto results = sweep_points({benchmark_config(8.0, 4, 1.0, 0.25),
                                     benchmark_config(8.0, 4, 1.0, 1.0),
                                     benchmark_config(8.0, 4, 1.0, 2.0)},
                                    100, 0);
  for (std::size_t i = 0; i + 1 < results.size(); ++i)
    require(results[i].success_rate <= results[i + 1].success_rate + 0.1,
            "rate dropped from " + num(results[i].success_rate) + " to " +
                num(results[i + 1].success_rate));
  return "success over sigma_eta {0.25, 1, 2} = " +
         num(results[0].success_rate) + ", " + num(results[1].success_rate) +
         ", " + num(results[2].success_rate);
}

std::string criterion12_fig4_trend() {
  const auto results =
      sweep_points({benchmark_config(10.0, 4, 1.0, 1.0, 0.1),
                    benchmark_config(10.0, 4, 1.0, 1.0, 10.0)},
                   100, 0);
  require(results[0].success_rate >= results[1].success_rate - 0.05,
          "success(r=0.1)=" + num(results[0].success_rate) +
              " vs success(r=10)=" + num(results[1].success_rate));
  return "success(r=0.1)=" + num(results[0].success_rate) +
         ", success(r=10)=" + num(results[1].success_rate);
}

std::string criterion13_determinism() {
  ctstab::SweepSpec spec;
  for (const double sigma_eta : {0.5, 1.0, 1.5, 2.0})
    spec.grid.push_back(benchmark_config(4.0, 2, 1.0, sigma_eta));
  spec.replicates = 10;
  spec.base_seed = 99;
  std::ostringstream serial, threaded;
  ctstab::write_csv(ctstab::run_sweep(spec, 1), serial);
  ctstab::write_csv(ctstab::run_sweep(spec, 4), threaded);
  require(serial.str() == threaded.str(),
          "CSV bytes differ between parallelism 1 and 4");
  return "parallelism 1 vs 4: identical CSV bytes (" +
         std::to_string(serial.str().size()) + " bytes)";
}

std::string criterion14_accuracy_diagnostic() {
  const ctstab::DynamicsModel truth = ctstab::default_truth();
  const Eigen::MatrixXd q = Eigen::MatrixXd::Identity(3, 3);
  const Eigen::MatrixXd r = Eigen::MatrixXd::Identity(2, 2);
  const ctstab::ParameterSample exact{truth.A, truth.B};
  for (const double c : {0.1, 1.0, 10.0}) {
    const auto diag = ctstab::sufficient_accuracy_check(truth, exact, c, q, r);
    require(diag.a_condition && diag.b_condition,
            "conditions fail at the truth for c=" + num(c));
  }
  const auto at_truth = ctstab::sufficient_accuracy_check(truth, exact, 1.0, q, r);
  ctstab::ParameterSample perturbed{truth.A, truth.B};
  perturbed.A_hat(0, 0) += 1.5 * at_truth.a_bound;
  const auto diag = ctstab::sufficient_accuracy_check(truth, perturbed, 1.0, q, r);
  require(!diag.a_condition, "oversized perturbation not flagged");
  return "exact sample passes for c in {0.1, 1, 10}; 1.5x bound perturbation "
         "flagged (a_bound=" +
         num(at_truth.a_bound) + ")";
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  const std::vector<std::pair<std::string, std::function<std::string()>>>
      criteria = {
          {"scalar CARE closed forms", criterion1_scalar_care},
          {"CARE self-certification on the benchmark", criterion2_benchmark_care},
          {"Lyapunov solve vs trapezoid quadrature", criterion3_lyapunov_quadrature},
          {"benchmark open loop is explosive", criterion4_explosive_truth},
          {"Euler-Maruyama noiseless convergence order", criterion5_sde_convergence},
          {"Brownian variance baseline", criterion6_brownian_variance},
          {"posterior identities", criterion7_posterior_identities},
          {"posterior sampling moments", criterion8_sampling_moments},
          {"fig2 success thresholds at tau=8,10", criterion9_fig2_thresholds},
          {"fig1 estimation error trend", criterion10_fig1_trend},
          {"fig3 dither trend", criterion11_fig3_trend},
          {"fig4 R-weight trend", criterion12_fig4_trend},
          {"sweep determinism under parallelism", criterion13_determinism},
          {"sufficient-accuracy diagnostic", criterion14_accuracy_diagnostic},
      };

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int number = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(number)) continue;
    const auto start = std::chrono::steady_clock::now();
    std::string detail;
    bool ok = true;
    try {
      detail = criteria[i].second();
    } catch (const Failure& failure) {
      ok = false;
      detail = failure.message;
    } catch (const std::exception& e) {
      ok = false;
      detail = std::string("unexpected exception: ") + e.what();
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    std::cout << (ok ? "[PASS] " : "[FAIL] ") << "criterion " << number << ": "
              << criteria[i].first << " — " << detail << " (" << num(seconds)
              << " s)\n";
    failures += !ok;
  }
  return failures;
}
