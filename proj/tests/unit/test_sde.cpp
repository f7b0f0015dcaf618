#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "../support/oracles.hpp"
#include "ctstab/experiments.hpp"
#include "ctstab/riccati.hpp"
#include "ctstab/sde.hpp"

using Catch::Matchers::WithinAbs;

namespace {

ctstab::PolicySchedule constant_schedule(const Eigen::MatrixXd& k, double tau,
                                         double sigma_eta,
                                         ctstab::DitherSignal dither = {}) {
  ctstab::PolicySchedule schedule;
  schedule.feedbacks.push_back(k);
  schedule.period_length = tau;
  schedule.dither_scale = sigma_eta;
  schedule.dither = std::move(dither);
  return schedule;
}

}  // namespace

TEST_CASE("dither piece counts") {
  ctstab::Philox rng(1);
  REQUIRE(ctstab::make_dither(1.0, 1.0, 2, rng).values.size() == 1);
  REQUIRE(ctstab::make_dither(0.2, 1.0, 2, rng).values.size() == 5);
  REQUIRE(ctstab::make_dither(0.3, 1.0, 2, rng).values.size() == 4);
  REQUIRE(ctstab::make_dither(0.2, 0.0, 2, rng).values.empty());
}

TEST_CASE("dither pieces are standard normal") {
  ctstab::Philox rng(2);
  const auto dither = ctstab::make_dither(1.0, 100000.0, 1, rng);
  double sum = 0.0, sum_sq = 0.0;
  for (const auto& v : dither.values) {
    sum += v[0];
    sum_sq += v[0] * v[0];
  }
  const double n = static_cast<double>(dither.values.size());
  const double mean = sum / n;
  const double var = sum_sq / n - mean * mean;
  REQUIRE(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("simulation is bit-deterministic under a fixed stream") {
  const ctstab::DynamicsModel truth = ctstab::default_truth();
  ctstab::Philox rng_a(9, 1, 2);
  ctstab::Philox rng_b(9, 1, 2);
  const auto dither_a = ctstab::make_dither(0.2, 2.0, 2, rng_a);
  const auto dither_b = ctstab::make_dither(0.2, 2.0, 2, rng_b);
  const Eigen::MatrixXd k = Eigen::MatrixXd::Zero(2, 3);
  const auto traj_a =
      ctstab::simulate(truth, constant_schedule(k, 2.0, 1.0, dither_a), 1e-3,
                       2.0, Eigen::VectorXd::Zero(3), rng_a);
  const auto traj_b =
      ctstab::simulate(truth, constant_schedule(k, 2.0, 1.0, dither_b), 1e-3,
                       2.0, Eigen::VectorXd::Zero(3), rng_b);
  REQUIRE(traj_a.states.size() == traj_b.states.size());
  for (std::size_t i = 0; i < traj_a.states.size(); ++i)
    REQUIRE(traj_a.states[i] == traj_b.states[i]);
  for (std::size_t i = 0; i < traj_a.inputs.size(); ++i)
    REQUIRE(traj_a.inputs[i] == traj_b.inputs[i]);
}

TEST_CASE("inputs follow the left-point convention") {
  const ctstab::DynamicsModel truth = ctstab::default_truth();
  ctstab::Philox rng(31, 0, 0);
  ctstab::Philox replay(31, 0, 0);
  const auto dither = ctstab::make_dither(0.2, 2.0, 2, rng);
  const auto dither_replay = ctstab::make_dither(0.2, 2.0, 2, replay);
  Eigen::MatrixXd k(2, 3);
  k << 0.1, -0.2, 0.3, 0.0, 0.4, -0.1;
  const auto traj = ctstab::simulate(truth, constant_schedule(k, 2.0, 0.7, dither),
                                     1e-2, 2.0, Eigen::VectorXd::Zero(3), rng);
  REQUIRE(traj.states.size() == traj.inputs.size() + 1);
  Eigen::VectorXd u(2);
  for (std::size_t step = 0; step < traj.inputs.size(); ++step) {
    const auto piece = std::min<std::size_t>(step / 20, dither.values.size() - 1);
    u.noalias() = k * traj.states[step];
    u.noalias() += 0.7 * dither_replay.values[piece];
    REQUIRE(traj.inputs[step] == u);
  }
}

TEST_CASE("noiseless closed loop converges to the matrix exponential flow") {
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
    const auto traj = ctstab::simulate(
        noiseless, constant_schedule(gain, tau, 0.0), dt, tau, x0, rng);
    return (traj.states.back() - oracle).norm();
  };
  const double ratio = error_at(2e-3) / error_at(1e-3);
  REQUIRE(ratio > 1.8);
  REQUIRE(ratio < 2.2);
}

TEST_CASE("pure diffusion matches the Brownian variance law") {
  ctstab::DynamicsModel model;
  model.A = Eigen::MatrixXd::Zero(3, 3);
  model.B = Eigen::MatrixXd::Zero(3, 1);
  model.C = Eigen::MatrixXd::Identity(3, 3);
  const Eigen::MatrixXd k = Eigen::MatrixXd::Zero(1, 3);
  const double tau = 1.0;
  const int replicates = 2000;
  Eigen::Vector3d sum = Eigen::Vector3d::Zero();
  Eigen::Vector3d sum_sq = Eigen::Vector3d::Zero();
  for (int i = 0; i < replicates; ++i) {
    ctstab::Philox rng = ctstab::replicate_stream(5, 0, i);
    const auto traj = ctstab::simulate(model, constant_schedule(k, tau, 0.0),
                                       2e-3, tau, Eigen::VectorXd::Zero(3), rng);
    const Eigen::Vector3d x = traj.states.back();
    sum += x;
    sum_sq += x.cwiseProduct(x);
  }
  for (int i = 0; i < 3; ++i) {
    const double mean = sum[i] / replicates;
    const double var = sum_sq[i] / replicates - mean * mean;
    REQUIRE_THAT(var, WithinAbs(tau, 0.10 * tau));
  }
}

TEST_CASE("the benchmark open loop is explosive") {
  ctstab::DynamicsModel noiseless = ctstab::default_truth();
  noiseless.C = Eigen::MatrixXd::Zero(3, 3);
  const Eigen::MatrixXd k = Eigen::MatrixXd::Zero(2, 3);
  ctstab::Philox rng(0);
  const Eigen::VectorXd x0 = Eigen::VectorXd::Ones(3);
  const auto traj = ctstab::simulate(noiseless, constant_schedule(k, 10.0, 0.0),
                                     1e-3, 10.0, x0, rng);
  REQUIRE(traj.states.back().norm() > 5.0 * x0.norm());
}

TEST_CASE("overflow truncates the trajectory consistently") {
  ctstab::DynamicsModel model = ctstab::default_truth();
  ctstab::Philox rng(3);
  const Eigen::MatrixXd k = Eigen::MatrixXd::Zero(2, 3);
  const auto traj =
      ctstab::simulate(model, constant_schedule(k, 4.0, 0.0), 1e-3, 4.0,
                       Eigen::VectorXd::Ones(3), rng, /*overflow_bound=*/2.5);
  REQUIRE(traj.overflowed);
  REQUIRE(traj.states.size() == traj.inputs.size() + 1);
  REQUIRE(traj.states.size() < 4001);
  for (const auto& x : traj.states) {
    REQUIRE(x.allFinite());
    REQUIRE(x.norm() <= 2.5);
  }
}

TEST_CASE("grid misalignment is rejected") {
  const ctstab::DynamicsModel truth = ctstab::default_truth();
  ctstab::Philox rng(4);
  const Eigen::MatrixXd k = Eigen::MatrixXd::Zero(2, 3);

  SECTION("tau not a multiple of dt") {
    REQUIRE_THROWS_AS(
        ctstab::simulate(truth, constant_schedule(k, 1.0, 0.0), 3e-3, 1.0,
                         Eigen::VectorXd::Zero(3), rng),
        ctstab::config_error);
  }
  SECTION("period length must equal tau / n") {
    ctstab::PolicySchedule schedule = constant_schedule(k, 0.5, 0.0);
    schedule.feedbacks.push_back(k);
    schedule.feedbacks.push_back(k);
    REQUIRE_THROWS_AS(ctstab::simulate(truth, schedule, 1e-3, 1.0,
                                       Eigen::VectorXd::Zero(3), rng),
                      ctstab::config_error);
  }
  SECTION("fewer grid steps than periods") {
    ctstab::PolicySchedule schedule = constant_schedule(k, 0.001, 0.0);
    schedule.feedbacks.push_back(k);
    schedule.feedbacks.push_back(k);
    schedule.period_length = 0.002 / 3.0;
    REQUIRE_THROWS_AS(ctstab::simulate(truth, schedule, 1e-3, 0.002,
                                       Eigen::VectorXd::Zero(3), rng),
                      ctstab::config_error);
  }
  SECTION("epsilon not a multiple of dt") {
    ctstab::Philox dither_rng(5);
    auto dither = ctstab::make_dither(0.0305, 1.0, 2, dither_rng);
    REQUIRE_THROWS_AS(
        ctstab::simulate(truth, constant_schedule(k, 1.0, 1.0, dither), 1e-2,
                         1.0, Eigen::VectorXd::Zero(3), rng),
        ctstab::config_error);
  }
  SECTION("epsilon must respect the tau/(q n) bound when dither is active") {
    ctstab::Philox dither_rng(6);
    auto dither = ctstab::make_dither(0.5, 1.0, 2, dither_rng);
    REQUIRE_THROWS_AS(
        ctstab::simulate(truth, constant_schedule(k, 1.0, 1.0, dither), 1e-3,
                         1.0, Eigen::VectorXd::Zero(3), rng),
        ctstab::config_error);
  }
}

TEST_CASE("trajectory CSV layout") {
  const ctstab::DynamicsModel truth = ctstab::default_truth();
  ctstab::Philox rng(8);
  const Eigen::MatrixXd k = Eigen::MatrixXd::Zero(2, 3);
  const auto traj = ctstab::simulate(truth, constant_schedule(k, 0.01, 0.0),
                                     1e-2, 0.01, Eigen::VectorXd::Zero(3), rng);
  std::ostringstream os;
  ctstab::write_trajectory_csv(traj, os);
  const std::string text = os.str();
  REQUIRE(text.rfind("t,x1,x2,x3,u1,u2\n", 0) == 0);
  REQUIRE(std::count(text.begin(), text.end(), '\n') == 3);  // header + 2 states
}
