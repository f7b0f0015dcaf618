// Minimal end-to-end use of the library: explore the benchmark system for
// tau = 8 with four random feedback periods, then synthesize a gain from one
// posterior sample and check it against the truth.

#include <iostream>

#include "ctstab/experiments.hpp"
#include "ctstab/stabilizer.hpp"

int main() {
  const ctstab::DynamicsModel truth = ctstab::default_truth();

  ctstab::StabilizationConfig cfg;
  cfg.tau = 8.0;
  cfg.n_periods = 4;
  cfg.sigma_L = 1.0;
  cfg.sigma_eta = 1.0;
  cfg.seed = 1;

  ctstab::Philox rng = ctstab::replicate_stream(cfg.seed, 0, 0);
  const auto outcome = ctstab::run_stabilization(truth, cfg, rng);

  std::cout << "stabilized: " << (outcome.success ? "yes" : "no") << '\n';
  if (outcome.closed_loop_abscissa)
    std::cout << "true closed-loop abscissa: " << *outcome.closed_loop_abscissa
              << '\n';
  std::cout << "estimation error: " << outcome.estimation_error << '\n';
  return outcome.success ? 0 : 1;
}
