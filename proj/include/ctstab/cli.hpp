#ifndef CTSTAB_CLI_HPP
#define CTSTAB_CLI_HPP

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ctstab/errors.hpp"
#include "ctstab/experiments.hpp"
#include "ctstab/json_io.hpp"
#include "ctstab/riccati.hpp"
#include "ctstab/sde.hpp"
#include "ctstab/stabilizer.hpp"
#include "ctstab/svg_plot.hpp"

namespace ctstab {
namespace detail {

struct CliOptions {
  std::uint64_t seed = 0;
  int replicates = 100;
  double dt = 1e-3;
  std::string out_dir = ".";
  int parallelism = 1;

  double tau = 8.0;
  int n_periods = 4;
  double sigma_L = 1.0;
  double sigma_eta = 1.0;
  double epsilon = 0.2;
  double r_scale = 1.0;
  double overflow_bound = 1e8;

  int fig = 0;
  std::string config_path;
  std::string model_json;
  std::string out_file;
  bool with_posterior = false;
};

inline StabilizationConfig config_from_options(const CliOptions& opt) {
  StabilizationConfig cfg;
  cfg.tau = opt.tau;
  cfg.n_periods = opt.n_periods;
  cfg.sigma_L = opt.sigma_L;
  cfg.sigma_eta = opt.sigma_eta;
  cfg.epsilon = opt.epsilon;
  cfg.dt = opt.dt;
  cfg.seed = opt.seed;
  cfg.overflow_bound = opt.overflow_bound;
  cfg.r_weight = opt.r_scale * Eigen::MatrixXd::Identity(2, 2);
  return cfg;
}

inline std::map<std::string, std::string> parse_kv_file(
    const std::string& path) {
  std::ifstream is(path);
  if (!is) throw config_error("cannot open config file: " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(is, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos)
      line.erase(hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const auto trim = [](std::string s) {
      const auto first = s.find_first_not_of(" \t\r");
      const auto last = s.find_last_not_of(" \t\r");
      if (first == std::string::npos) return std::string{};
      return s.substr(first, last - first + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw config_error("empty key in config file: " + path);
    kv[key] = value;
  }
  return kv;
}

inline double parse_double(const std::string& s, const std::string& key) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw config_error("");
    return v;
  } catch (...) {
    throw config_error("bad numeric value for '" + key + "': " + s);
  }
}

inline std::vector<double> parse_list(const std::string& s,
                                      const std::string& key) {
  std::vector<double> values;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto comma = s.find(',', start);
    const std::string item =
        s.substr(start, comma == std::string::npos ? comma : comma - start);
    if (!item.empty() && item.find_first_not_of(" \t") != std::string::npos)
      values.push_back(parse_double(item, key));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  if (values.empty()) throw config_error("empty list for '" + key + "'");
  return values;
}

/// Sweep description as a key=value file mirroring StabilizationConfig,
/// plus `sweep = tau|sigma_l|sigma_eta|n|r` and `values = v1, v2, ...`.
inline SweepSpec sweep_from_file(const std::string& path,
                                 const CliOptions& opt) {
  const auto kv = parse_kv_file(path);
  const std::set<std::string> known = {
      "sweep", "values",  "tau",        "n",    "sigma_l",        "sigma_eta",
      "epsilon", "dt",    "r",          "seed", "replicates",     "overflow_bound"};
  for (const auto& [key, value] : kv)
    if (!known.count(key))
      throw config_error("unknown config key '" + key + "' in " + path);

  CliOptions base = opt;
  const auto get = [&](const char* key, double fallback) {
    const auto it = kv.find(key);
    return it == kv.end() ? fallback : parse_double(it->second, key);
  };
  base.tau = get("tau", base.tau);
  base.n_periods = static_cast<int>(get("n", base.n_periods));
  base.sigma_L = get("sigma_l", base.sigma_L);
  base.sigma_eta = get("sigma_eta", base.sigma_eta);
  base.epsilon = get("epsilon", base.epsilon);
  base.dt = get("dt", base.dt);
  base.r_scale = get("r", base.r_scale);
  base.overflow_bound = get("overflow_bound", base.overflow_bound);

  SweepSpec spec;
  spec.replicates = static_cast<int>(get("replicates", opt.replicates));
  spec.base_seed = opt.seed;
  if (const auto it = kv.find("seed"); it != kv.end()) {
    try {
      spec.base_seed = std::stoull(it->second);
    } catch (...) {
      throw config_error("bad integer value for 'seed': " + it->second);
    }
  }
  spec.truth = default_truth();

  if (!kv.count("sweep")) {
    spec.grid.push_back(config_from_options(base));
    return spec;
  }
  const std::string swept = kv.at("sweep");
  const auto values_it = kv.find("values");
  if (values_it == kv.end())
    throw config_error("'sweep' requires a 'values' list");
  for (const double v : parse_list(values_it->second, "values")) {
    CliOptions point = base;
    if (swept == "tau") point.tau = v;
    else if (swept == "n") point.n_periods = static_cast<int>(v);
    else if (swept == "sigma_l") point.sigma_L = v;
    else if (swept == "sigma_eta") point.sigma_eta = v;
    else if (swept == "r") point.r_scale = v;
    else throw config_error("unknown sweep variable: " + swept);
    spec.grid.push_back(config_from_options(point));
  }
  return spec;
}

inline DynamicsModel model_from_json_file(const std::string& path,
                                          double r_scale,
                                          Eigen::MatrixXd* q_weight,
                                          Eigen::MatrixXd* r_weight) {
  std::ifstream is(path);
  if (!is) throw config_error("cannot open model file: " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw config_error("bad JSON in " + path + ": " + e.what());
  }
  DynamicsModel model;
  model.A = matrix_from_json(j.at("A"));
  model.B = matrix_from_json(j.at("B"));
  model.C = j.contains("C")
                ? matrix_from_json(j.at("C"))
                : Eigen::MatrixXd::Identity(model.A.rows(), model.A.rows());
  const Eigen::Index p = model.A.rows();
  const Eigen::Index q = model.B.cols();
  *q_weight = j.contains("Q") ? matrix_from_json(j.at("Q"))
                              : Eigen::MatrixXd::Identity(p, p);
  *r_weight = j.contains("R")
                  ? matrix_from_json(j.at("R"))
                  : (r_scale * Eigen::MatrixXd::Identity(q, q)).eval();
  if (q_weight->rows() != p || q_weight->cols() != p)
    throw config_error("Q in " + path + " must be p x p");
  if (r_weight->rows() != q || r_weight->cols() != q)
    throw config_error("R in " + path + " must be q x q");
  return model;
}

inline std::filesystem::path prepare_out_dir(const CliOptions& opt) {
  std::filesystem::path dir(opt.out_dir);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec && !std::filesystem::is_directory(dir))
    throw std::runtime_error("cannot create out-dir: " + dir.string());
  return dir;
}

/// One plot per distinct panel value (sigma_L for figs 1-2, tau for fig 3).
template <typename PanelGetter>
inline void render_panels(const std::vector<SweepResult>& results,
                          PanelGetter panel_of, PlotMetric metric,
                          const std::filesystem::path& dir,
                          const std::string& stem, const std::string& panel_name,
                          std::vector<std::string>& written) {
  std::set<double> panels;
  for (const auto& res : results) panels.insert(panel_of(res));
  for (const double panel : panels) {
    std::vector<SweepResult> subset;
    for (const auto& res : results)
      if (panel_of(res) == panel) subset.push_back(res);
    const auto path =
        dir / (stem + "_" + panel_name + "_" + format_number(panel) + ".svg");
    render_plot(subset, metric, path.string());
    written.push_back(path.string());
  }
}

inline int run_sweep_command(const CliOptions& opt) {
  const auto dir = prepare_out_dir(opt);
  std::vector<std::string> written;
  if (opt.fig != 0) {
    SweepSpec spec;
    switch (opt.fig) {
      case 1: spec = fig1_spec(opt.dt); break;
      case 2: spec = fig2_spec(opt.dt); break;
      case 3: spec = fig3_spec(opt.dt); break;
      case 4: spec = fig4_spec(opt.dt); break;
      default: throw config_error("--fig must be 1, 2, 3, or 4");
    }
    spec.replicates = opt.replicates;
    spec.base_seed = opt.seed;
    const auto results = run_sweep(spec, opt.parallelism);
    const std::string stem = "fig" + std::to_string(opt.fig);
    const auto csv_path = dir / (stem + ".csv");
    write_csv(results, csv_path.string());
    written.push_back(csv_path.string());
    const auto sigma_panel = [](const SweepResult& r) { return r.config.sigma_L; };
    const auto tau_panel = [](const SweepResult& r) { return r.config.tau; };
    switch (opt.fig) {
      case 1:
        render_panels(results, sigma_panel, PlotMetric::err_median, dir, stem,
                      "sigmaL", written);
        break;
      case 2:
        render_panels(results, sigma_panel, PlotMetric::success_rate, dir, stem,
                      "sigmaL", written);
        break;
      case 3:
        render_panels(results, tau_panel, PlotMetric::success_rate, dir, stem,
                      "tau", written);
        break;
      case 4: {
        const auto success_path = dir / (stem + "_success_rate.svg");
        render_plot(results, PlotMetric::success_rate, success_path.string());
        written.push_back(success_path.string());
        const auto abscissa_path = dir / (stem + "_sampled_abscissa.svg");
        render_plot(results, PlotMetric::sampled_abscissa_median,
                    abscissa_path.string());
        written.push_back(abscissa_path.string());
        break;
      }
    }
  } else {
    if (opt.config_path.empty())
      throw config_error("sweep needs --fig or --config");
    const SweepSpec spec = sweep_from_file(opt.config_path, opt);
    const auto results = run_sweep(spec, opt.parallelism);
    const auto csv_path = dir / "sweep.csv";
    write_csv(results, csv_path.string());
    written.push_back(csv_path.string());
    if (spec.grid.size() > 1) {
      const auto svg_path = dir / "sweep_success_rate.svg";
      render_plot(results, PlotMetric::success_rate, svg_path.string());
      written.push_back(svg_path.string());
    }
  }
  for (const auto& path : written) std::cout << path << '\n';
  return 0;
}

inline int run_one_command(const CliOptions& opt) {
  const DynamicsModel truth = default_truth();
  const StabilizationConfig cfg = config_from_options(opt);
  Philox rng = replicate_stream(cfg.seed, 0, 0);
  Posterior posterior;
  const StabilizationOutcome outcome =
      run_stabilization(truth, cfg, rng, opt.with_posterior ? &posterior : nullptr);
  nlohmann::json record = outcome_to_json(outcome);
  if (opt.with_posterior)
    record["posterior"] = outcome.sample
                              ? posterior_to_json(posterior, cfg.tau)
                              : nlohmann::json(nullptr);
  std::cout << record.dump(2) << '\n';
  return 0;
}

inline int simulate_command(const CliOptions& opt) {
  const DynamicsModel truth = default_truth();
  const StabilizationConfig cfg = config_from_options(opt);
  Philox rng = replicate_stream(cfg.seed, 0, 0);
  PolicySchedule schedule;
  for (int j = 0; j < cfg.n_periods; ++j)
    schedule.feedbacks.push_back(
        sample_feedback(cfg.sigma_L, truth.p(), truth.q(), rng));
  schedule.period_length = cfg.tau / cfg.n_periods;
  schedule.dither_scale = cfg.sigma_eta;
  schedule.dither = make_dither(cfg.epsilon, cfg.tau, truth.q(), rng);
  const Trajectory traj =
      simulate(truth, schedule, cfg.dt, cfg.tau,
               Eigen::VectorXd::Zero(truth.p()), rng, cfg.overflow_bound);

  std::filesystem::path path = opt.out_file.empty()
                                   ? prepare_out_dir(opt) / "trajectory.csv"
                                   : std::filesystem::path(opt.out_file);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
  write_trajectory_csv(traj, os);
  os.flush();
  if (!os) throw std::runtime_error("write failed: " + path.string());
  std::cout << path.string() << '\n';
  if (traj.overflowed)
    std::cout << "overflowed at t=" << traj.times.back() << '\n';
  return 0;
}

inline int care_check_command(const CliOptions& opt) {
  DynamicsModel model = default_truth();
  Eigen::MatrixXd q_weight = Eigen::MatrixXd::Identity(model.p(), model.p());
  Eigen::MatrixXd r_weight =
      opt.r_scale * Eigen::MatrixXd::Identity(model.q(), model.q());
  if (!opt.model_json.empty())
    model = model_from_json_file(opt.model_json, opt.r_scale, &q_weight,
                                 &r_weight);
  const CareSolution care = solve_care(model.A, model.B, q_weight, r_weight);
  Eigen::LLT<Eigen::MatrixXd> r_llt(r_weight);
  const Eigen::MatrixXd gain = -r_llt.solve(model.B.transpose() * care.P);
  const double abscissa = spectral_abscissa(model.A + model.B * gain);

  std::cout << "states: " << model.p() << "  inputs: " << model.q() << '\n';
  std::cout << "iterations: " << care.iterations << '\n';
  std::cout << "residual_norm: " << format_number(care.residual_norm) << '\n';
  std::cout << "closed_loop_abscissa: " << format_number(abscissa) << '\n';
  std::cout << "P:\n" << care.P << '\n';
  std::cout << "K:\n" << gain << '\n';
  return 0;
}

}  // namespace detail

/// Entry point behind the `ctstab` binary. Exit codes: 0 success,
/// 1 configuration error, 2 runtime error.
inline int cli_main(int argc, const char* const* argv) {
  detail::CliOptions opt;
  CLI::App app{"Bayesian learning stabilization of unknown continuous-time "
               "stochastic linear systems"};
  app.require_subcommand(1);
  app.add_option("--seed", opt.seed, "base RNG seed")->capture_default_str();
  app.add_option("--replicates", opt.replicates, "Monte Carlo replicates per grid point")
      ->capture_default_str();
  app.add_option("--dt", opt.dt, "integration step")->capture_default_str();
  app.add_option("--out-dir", opt.out_dir, "output directory")
      ->envname("CTSTAB_OUT_DIR")
      ->capture_default_str();
  app.add_option("--parallelism", opt.parallelism, "worker threads")
      ->capture_default_str();

  const auto add_run_options = [&](CLI::App* sub) {
    sub->add_option("--tau", opt.tau, "stabilization horizon")->capture_default_str();
    sub->add_option("--n", opt.n_periods, "number of feedback periods")
        ->capture_default_str();
    sub->add_option("--sigma-l", opt.sigma_L, "random feedback std")
        ->capture_default_str();
    sub->add_option("--sigma-eta", opt.sigma_eta, "dither scale")
        ->capture_default_str();
    sub->add_option("--epsilon", opt.epsilon, "dither piece length")
        ->capture_default_str();
    sub->add_option("--r", opt.r_scale, "R = r I weight scale")
        ->capture_default_str();
    sub->add_option("--overflow-bound", opt.overflow_bound,
                    "state norm overflow bound")
        ->capture_default_str();
  };

  auto* run_one = app.add_subcommand(
      "run-one", "one stabilization run on the benchmark system, JSON to stdout");
  run_one->fallthrough();
  add_run_options(run_one);
  run_one->add_flag("--with-posterior", opt.with_posterior,
                    "include the fitted posterior in the JSON record");

  auto* sweep = app.add_subcommand(
      "sweep", "Monte Carlo parameter sweep; writes CSV and SVG plots");
  sweep->fallthrough();
  sweep->add_option("--fig", opt.fig, "canned figure sweep (1-4)");
  sweep->add_option("--config", opt.config_path, "sweep config file");

  auto* simulate = app.add_subcommand(
      "simulate", "simulate one exploration trajectory, write columnar CSV");
  simulate->fallthrough();
  add_run_options(simulate);
  simulate->add_option("--out", opt.out_file, "output CSV path");

  auto* care_check = app.add_subcommand(
      "care-check", "solve the Riccati equation and report the residual");
  care_check->fallthrough();
  care_check->add_option("--r", opt.r_scale, "R = r I weight scale")
      ->capture_default_str();
  care_check->add_option("--model-json", opt.model_json,
                         "JSON file with A, B and optional C, Q, R");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (app.got_subcommand(run_one)) return detail::run_one_command(opt);
    if (app.got_subcommand(sweep)) return detail::run_sweep_command(opt);
    if (app.got_subcommand(simulate)) return detail::simulate_command(opt);
    if (app.got_subcommand(care_check)) return detail::care_check_command(opt);
  } catch (const config_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const input_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}

}  // namespace ctstab

#endif  // CTSTAB_CLI_HPP
