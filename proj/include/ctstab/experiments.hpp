#ifndef CTSTAB_EXPERIMENTS_HPP
#define CTSTAB_EXPERIMENTS_HPP

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Core>

#include "ctstab/errors.hpp"
#include "ctstab/rng.hpp"
#include "ctstab/sde.hpp"
#include "ctstab/stabilizer.hpp"

namespace ctstab {

/// The 3-state, 2-input benchmark system: explosive open loop with two
/// right-half-plane eigenvalues, unit diffusion.
inline DynamicsModel default_truth() {
  DynamicsModel model;
  model.A.resize(3, 3);
  model.A << -0.46, 0.06, 0.11,
             -0.45, 0.27, 0.27,
              0.20, 0.18, 0.19;
  model.B.resize(3, 2);
  model.B << -0.40,  0.44,
              0.08, -0.48,
             -0.43, -0.49;
  model.C = Eigen::MatrixXd::Identity(3, 3);
  return model;
}

struct SweepSpec {
  std::vector<StabilizationConfig> grid;
  int replicates = 100;
  std::uint64_t base_seed = 0;
  DynamicsModel truth = default_truth();
};

/// Aggregated Monte Carlo statistics for one grid point.
struct SweepResult {
  int sweep_id = 0;
  StabilizationConfig config;
  int replicates = 0;
  int n_success = 0;
  int n_care_failed = 0;
  int n_overflow = 0;
  int n_unstable = 0;
  double success_rate = 0.0;
  double err_mean = 0.0;
  double err_median = 0.0;
  double err_q25 = 0.0;
  double err_q75 = 0.0;
  // true closed loop among successes
  double abscissa_median = 0.0;
  double abscissa_q25 = 0.0;
  double abscissa_q75 = 0.0;
  // sampled closed loop among successes
  double sampled_abscissa_median = 0.0;
  double wall_time = 0.0;                // summed replicate compute seconds
  std::uint64_t base_seed = 0;
};

namespace detail {

/// Linear-interpolation quantile of an unsorted sample; NaN when empty.
inline double quantile(std::vector<double> v, double prob) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const double h = prob * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(h);
  if (lo + 1 >= v.size()) return v.back();
  const double frac = h - static_cast<double>(lo);
  return v[lo] + frac * (v[lo + 1] - v[lo]);
}

inline double mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  double sum = 0.0;
  for (double x : v) sum += x;
  return sum / static_cast<double>(v.size());
}

/// R = r I convention used throughout the experiments.
inline double r_scale_of(const StabilizationConfig& cfg) {
  return cfg.r_weight.size() == 0 ? 1.0 : cfg.r_weight(0, 0);
}

}  // namespace detail

/// Runs `spec.replicates` independent stabilization replicates per grid point.
/// Replicate (g, i) always uses the substream (base_seed, g, i), so results
/// are bit-identical for any parallelism degree or completion order.
inline std::vector<SweepResult> run_sweep(const SweepSpec& spec,
                                          int parallelism = 1) {
  if (spec.grid.empty()) throw config_error("sweep grid is empty");
  if (spec.replicates < 1) throw config_error("replicates must be at least 1");
  if (parallelism < 1) parallelism = 1;

  struct ReplicateRecord {
    StabilizationOutcome outcome;
    double seconds = 0.0;
  };
  const std::size_t total =
      spec.grid.size() * static_cast<std::size_t>(spec.replicates);
  std::vector<ReplicateRecord> records(total);

  std::atomic<std::size_t> cursor{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  const auto worker = [&] {
    for (;;) {
      const std::size_t job = cursor.fetch_add(1);
      if (job >= total) return;
      const auto grid_index = static_cast<std::uint32_t>(job / spec.replicates);
      const auto replicate = static_cast<std::uint32_t>(job % spec.replicates);
      try {
        Philox rng = replicate_stream(spec.base_seed, grid_index, replicate);
        const auto start = std::chrono::steady_clock::now();
        records[job].outcome =
            run_stabilization(spec.truth, spec.grid[grid_index], rng);
        records[job].seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                          start)
                .count();
      } catch (...) {
        const std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        cursor.store(total);
        return;
      }
    }
  };

  if (parallelism == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    threads.reserve(static_cast<std::size_t>(parallelism));
    for (int i = 0; i < parallelism; ++i) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);

  std::vector<SweepResult> results;
  results.reserve(spec.grid.size());
  for (std::size_t g = 0; g < spec.grid.size(); ++g) {
    SweepResult res;
    res.sweep_id = static_cast<int>(g);
    res.config = spec.grid[g];
    res.replicates = spec.replicates;
    res.base_seed = spec.base_seed;
    std::vector<double> errors;
    std::vector<double> abscissas;
    std::vector<double> sampled_abscissas;
    for (int i = 0; i < spec.replicates; ++i) {
      const auto& rec = records[g * spec.replicates + i];
      res.wall_time += rec.seconds;
      const auto& out = rec.outcome;
      switch (out.failure_reason) {
        case FailureReason::none: ++res.n_success; break;
        case FailureReason::care_failed: ++res.n_care_failed; break;
        case FailureReason::overflow: ++res.n_overflow; break;
        case FailureReason::unstable_closed_loop: ++res.n_unstable; break;
      }
      if (out.sample) errors.push_back(out.estimation_error);
      if (out.success) {
        abscissas.push_back(*out.closed_loop_abscissa);
        sampled_abscissas.push_back(*out.sampled_closed_loop_abscissa);
      }
    }
    res.success_rate =
        static_cast<double>(res.n_success) / static_cast<double>(res.replicates);
    res.err_mean = detail::mean_of(errors);
    res.err_median = detail::quantile(errors, 0.5);
    res.err_q25 = detail::quantile(errors, 0.25);
    res.err_q75 = detail::quantile(errors, 0.75);
    res.abscissa_median = detail::quantile(abscissas, 0.5);
    res.abscissa_q25 = detail::quantile(abscissas, 0.25);
    res.abscissa_q75 = detail::quantile(abscissas, 0.75);
    res.sampled_abscissa_median = detail::quantile(sampled_abscissas, 0.5);
    results.push_back(std::move(res));
  }
  return results;
}

namespace detail {

inline StabilizationConfig experiment_config(double tau, int n, double sigma_L,
                                             double sigma_eta, double r_scale,
                                             double dt) {
  StabilizationConfig cfg;
  cfg.tau = tau;
  cfg.n_periods = n;
  cfg.sigma_L = sigma_L;
  cfg.sigma_eta = sigma_eta;
  cfg.epsilon = 0.2;
  cfg.dt = dt;
  cfg.q_weight = Eigen::MatrixXd::Identity(3, 3);
  cfg.r_weight = r_scale * Eigen::MatrixXd::Identity(2, 2);
  return cfg;
}

}  // namespace detail

/// Estimation error versus tau: panels over sigma_L, series over n,
/// sigma_eta = 1.
inline SweepSpec fig1_spec(double dt = 1e-3) {
  SweepSpec spec;
  for (double sigma_L : {0.5, 0.75, 1.0, 1.25})
    for (int n : {1, 2, 3, 4})
      for (int tau = 2; tau <= 10; ++tau)
        spec.grid.push_back(
            detail::experiment_config(tau, n, sigma_L, 1.0, 1.0, dt));
  return spec;
}

/// Success rate versus tau: same grid as fig1_spec.
inline SweepSpec fig2_spec(double dt = 1e-3) { return fig1_spec(dt); }

/// Success rate versus sigma_eta: panels over tau, series over n,
/// sigma_L = 1.
inline SweepSpec fig3_spec(double dt = 1e-3) {
  SweepSpec spec;
  for (double tau : {4.0, 6.0, 8.0, 10.0})
    for (int n : {1, 2, 3, 4})
      for (int i = 1; i <= 8; ++i)
        spec.grid.push_back(
            detail::experiment_config(tau, n, 1.0, 0.25 * i, 1.0, dt));
  return spec;
}

/// Success rate and sampled closed-loop abscissa versus r (R = r I):
/// quarter-decade log grid over [0.1, 10], sigma_L = sigma_eta = 1, tau = 10.
inline SweepSpec fig4_spec(double dt = 1e-3) {
  SweepSpec spec;
  for (int n : {1, 2, 3, 4})
    for (int i = 0; i <= 8; ++i)
      spec.grid.push_back(detail::experiment_config(
          10.0, n, 1.0, 1.0, std::pow(10.0, -1.0 + 0.25 * i), dt));
  return spec;
}

namespace detail {

inline std::string format_number(double x) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

/// RFC-4180 quoting; emitted fields are numeric so this normally no-ops.
inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string quoted = "\"";
  for (char c : s) {
    if (c == '"') quoted += '"';
    quoted += c;
  }
  quoted += '"';
  return quoted;
}

}  // namespace detail

inline constexpr const char* kSweepCsvHeader =
    "sweep_id,tau,sigma_L,sigma_eta,n,r,replicates,success_rate,"
    "n_care_failed,n_overflow,n_unstable,err_mean,err_median,err_q25,"
    "err_q75,abscissa_median,seed";

inline void write_csv(const std::vector<SweepResult>& results,
                      std::ostream& os) {
  os << kSweepCsvHeader << '\n';
  for (const auto& res : results) {
    const auto& cfg = res.config;
    os << res.sweep_id << ','
       << detail::csv_field(detail::format_number(cfg.tau)) << ','
       << detail::csv_field(detail::format_number(cfg.sigma_L)) << ','
       << detail::csv_field(detail::format_number(cfg.sigma_eta)) << ','
       << cfg.n_periods << ','
       << detail::csv_field(detail::format_number(detail::r_scale_of(cfg)))
       << ',' << res.replicates << ','
       << detail::csv_field(detail::format_number(res.success_rate)) << ','
       << res.n_care_failed << ',' << res.n_overflow << ',' << res.n_unstable
       << ',' << detail::csv_field(detail::format_number(res.err_mean)) << ','
       << detail::csv_field(detail::format_number(res.err_median)) << ','
       << detail::csv_field(detail::format_number(res.err_q25)) << ','
       << detail::csv_field(detail::format_number(res.err_q75)) << ','
       << detail::csv_field(detail::format_number(res.abscissa_median)) << ','
       << res.base_seed << '\n';
  }
}

inline void write_csv(const std::vector<SweepResult>& results,
                      const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  write_csv(results, os);
  os.flush();
  if (!os) throw std::runtime_error("write failed: " + path);
}

}  // namespace ctstab

#endif  // CTSTAB_EXPERIMENTS_HPP
