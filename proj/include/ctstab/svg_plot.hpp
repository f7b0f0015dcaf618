#ifndef CTSTAB_SVG_PLOT_HPP
#define CTSTAB_SVG_PLOT_HPP

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "ctstab/errors.hpp"
#include "ctstab/experiments.hpp"

namespace ctstab {

enum class PlotMetric {
  success_rate,
  err_median,
  abscissa_median,
  sampled_abscissa_median,
};

inline const char* to_string(PlotMetric m) {
  switch (m) {
    case PlotMetric::success_rate: return "success_rate";
    case PlotMetric::err_median: return "err_median";
    case PlotMetric::abscissa_median: return "abscissa_median";
    case PlotMetric::sampled_abscissa_median: return "sampled_abscissa_median";
  }
  return "unknown";
}

namespace detail {

enum class SweptVariable { tau, sigma_L, sigma_eta, r_scale };

inline const char* to_string(SweptVariable v) {
  switch (v) {
    case SweptVariable::tau: return "tau";
    case SweptVariable::sigma_L: return "sigma_L";
    case SweptVariable::sigma_eta: return "sigma_eta";
    case SweptVariable::r_scale: return "r";
  }
  return "unknown";
}

inline double swept_value(const SweepResult& res, SweptVariable v) {
  switch (v) {
    case SweptVariable::tau: return res.config.tau;
    case SweptVariable::sigma_L: return res.config.sigma_L;
    case SweptVariable::sigma_eta: return res.config.sigma_eta;
    case SweptVariable::r_scale: return r_scale_of(res.config);
  }
  return 0.0;
}

inline double metric_value(const SweepResult& res, PlotMetric m) {
  switch (m) {
    case PlotMetric::success_rate: return res.success_rate;
    case PlotMetric::err_median: return res.err_median;
    case PlotMetric::abscissa_median: return res.abscissa_median;
    case PlotMetric::sampled_abscissa_median:
      return res.sampled_abscissa_median;
  }
  return 0.0;
}

inline SweptVariable detect_swept_variable(
    const std::vector<SweepResult>& results) {
  const SweptVariable candidates[] = {
      SweptVariable::tau, SweptVariable::sigma_L, SweptVariable::sigma_eta,
      SweptVariable::r_scale};
  SweptVariable found = SweptVariable::tau;
  int varying = 0;
  for (const auto v : candidates) {
    double lo = swept_value(results.front(), v);
    double hi = lo;
    for (const auto& res : results) {
      lo = std::min(lo, swept_value(res, v));
      hi = std::max(hi, swept_value(res, v));
    }
    if (hi - lo > 1e-12 * std::max(1.0, std::abs(hi))) {
      found = v;
      ++varying;
    }
  }
  if (varying != 1)
    throw input_error("plot input must vary exactly one sweep variable");
  return found;
}

inline std::string series_color(int n) {
  switch (n) {
    case 1: return "blue";
    case 2: return "red";
    case 3: return "green";
    case 4: return "black";
    default: return "gray";
  }
}

inline std::string fixed2(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", x);
  return buf;
}

inline std::string fixed4(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", x);
  return buf;
}

}  // namespace detail

/// Static SVG line chart of one metric against the single swept variable,
/// one series per n (n=1 blue, n=2 red, n=3 green, n=4 black). The r sweep
/// is drawn on a log10 axis. Output bytes are a pure function of the input.
inline void render_plot(const std::vector<SweepResult>& results,
                        PlotMetric metric, std::ostream& os) {
  if (results.empty()) throw input_error("no results to plot");
  const auto swept = detail::detect_swept_variable(results);
  const bool log_x = swept == detail::SweptVariable::r_scale;

  std::map<int, std::vector<std::pair<double, double>>> series;
  double x_lo = 0.0, x_hi = 0.0, y_lo = 0.0, y_hi = 0.0;
  bool first = true;
  for (const auto& res : results) {
    double x = detail::swept_value(res, swept);
    if (log_x) x = std::log10(x);
    const double y = detail::metric_value(res, metric);
    if (!std::isfinite(y)) continue;
    series[res.config.n_periods].emplace_back(x, y);
    if (first) {
      x_lo = x_hi = x;
      y_lo = y_hi = y;
      first = false;
    } else {
      x_lo = std::min(x_lo, x);
      x_hi = std::max(x_hi, x);
      y_lo = std::min(y_lo, y);
      y_hi = std::max(y_hi, y);
    }
  }
  if (first) throw input_error("no finite metric values to plot");
  if (metric == PlotMetric::success_rate) {
    y_lo = 0.0;
    y_hi = 1.0;
  }
  if (x_hi - x_lo < 1e-12) x_hi = x_lo + 1.0;
  if (y_hi - y_lo < 1e-12) y_hi = y_lo + 1.0;
  const double y_pad = 0.05 * (y_hi - y_lo);
  y_lo -= y_pad;
  y_hi += y_pad;

  constexpr double kWidth = 640.0, kHeight = 480.0;
  constexpr double kLeft = 70.0, kRight = 600.0, kTop = 40.0, kBottom = 430.0;
  const auto x_pix = [&](double x) {
    return kLeft + (x - x_lo) / (x_hi - x_lo) * (kRight - kLeft);
  };
  const auto y_pix = [&](double y) {
    return kBottom - (y - y_lo) / (y_hi - y_lo) * (kBottom - kTop);
  };

  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth
     << "\" height=\"" << kHeight << "\" viewBox=\"0 0 " << kWidth << ' '
     << kHeight << "\">\n";
  os << "<rect width=\"" << kWidth << "\" height=\"" << kHeight
     << "\" fill=\"white\"/>\n";
  os << "<line x1=\"" << kLeft << "\" y1=\"" << kBottom << "\" x2=\"" << kRight
     << "\" y2=\"" << kBottom << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft
     << "\" y2=\"" << kBottom << "\" stroke=\"black\"/>\n";

  constexpr int kTicks = 5;
  for (int i = 0; i <= kTicks; ++i) {
    const double fx = x_lo + (x_hi - x_lo) * i / kTicks;
    const double px = x_pix(fx);
    const double label = log_x ? std::pow(10.0, fx) : fx;
    os << "<line x1=\"" << detail::fixed2(px) << "\" y1=\"" << kBottom
       << "\" x2=\"" << detail::fixed2(px) << "\" y2=\"" << kBottom + 6
       << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << detail::fixed2(px) << "\" y=\"" << kBottom + 22
       << "\" font-size=\"12\" text-anchor=\"middle\">" << detail::fixed4(label)
       << "</text>\n";
    const double fy = y_lo + (y_hi - y_lo) * i / kTicks;
    const double py = y_pix(fy);
    os << "<line x1=\"" << kLeft - 6 << "\" y1=\"" << detail::fixed2(py)
       << "\" x2=\"" << kLeft << "\" y2=\"" << detail::fixed2(py)
       << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << kLeft - 10 << "\" y=\"" << detail::fixed2(py + 4)
       << "\" font-size=\"12\" text-anchor=\"end\">" << detail::fixed4(fy)
       << "</text>\n";
  }
  os << "<text x=\"" << (kLeft + kRight) / 2 << "\" y=\"" << kBottom + 45
     << "\" font-size=\"14\" text-anchor=\"middle\">"
     << detail::to_string(swept) << "</text>\n";
  os << "<text x=\"18\" y=\"" << (kTop + kBottom) / 2
     << "\" font-size=\"14\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
     << (kTop + kBottom) / 2 << ")\">" << to_string(metric) << "</text>\n";

  double legend_y = kTop + 10.0;
  for (auto& [n, points] : series) {
    std::sort(points.begin(), points.end());
    const std::string color = detail::series_color(n);
    os << "<polyline fill=\"none\" stroke=\"" << color
       << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (i) os << ' ';
      os << detail::fixed2(x_pix(points[i].first)) << ','
         << detail::fixed2(y_pix(points[i].second));
    }
    os << "\"/>\n";
    os << "<line x1=\"" << kRight - 90 << "\" y1=\"" << detail::fixed2(legend_y)
       << "\" x2=\"" << kRight - 60 << "\" y2=\"" << detail::fixed2(legend_y)
       << "\" stroke=\"" << color << "\" stroke-width=\"1.5\"/>\n";
    os << "<text x=\"" << kRight - 54 << "\" y=\""
       << detail::fixed2(legend_y + 4) << "\" font-size=\"12\">n=" << n
       << "</text>\n";
    legend_y += 18.0;
  }
  os << "</svg>\n";
}

inline void render_plot(const std::vector<SweepResult>& results,
                        PlotMetric metric, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  render_plot(results, metric, os);
  os.flush();
  if (!os) throw std::runtime_error("write failed: " + path);
}

}  // namespace ctstab

#endif  // CTSTAB_SVG_PLOT_HPP
