#include "optlab/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "optlab/errors.hpp"

namespace optlab {

namespace {

constexpr double kWidth = 720.0;
constexpr double kHeight = 480.0;
constexpr double kLeft = 76.0;
constexpr double kRight = 18.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 56.0;

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                          "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};
constexpr int kPaletteSize = 8;

std::string px(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    if (c == '&')
      out += "&amp;";
    else if (c == '<')
      out += "&lt;";
    else if (c == '>')
      out += "&gt;";
    else
      out += c;
  }
  return out;
}

// Largest of 1, 2, 5 times a power of ten not exceeding a ~6-tick spacing.
double nice_step(double range) {
  const double raw = range / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  const double frac = raw / mag;
  if (frac >= 5.0) return 5.0 * mag;
  if (frac >= 2.0) return 2.0 * mag;
  return mag;
}

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  void include(double v) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  bool valid() const { return lo <= hi; }
  void pad() {
    if (lo == hi) {
      const double d = lo == 0.0 ? 1.0 : std::abs(lo) * 0.1;
      lo -= d;
      hi += d;
    } else {
      const double d = (hi - lo) * 0.04;
      lo -= d;
      hi += d;
    }
  }
};

}  // namespace

void SvgPlot::add_line(std::vector<double> x, std::vector<double> y,
                       std::string label) {
  if (x.size() != y.size())
    throw ConfigError("plot series '" + label + "': x and y sizes differ");
  series_.push_back({std::move(x), std::move(y), std::move(label), false});
}

void SvgPlot::add_scatter(std::vector<double> x, std::vector<double> y,
                          std::string label) {
  if (x.size() != y.size())
    throw ConfigError("plot series '" + label + "': x and y sizes differ");
  series_.push_back({std::move(x), std::move(y), std::move(label), true});
}

void SvgPlot::add_hline(double y) { hlines_.push_back(y); }

SvgPlot::SvgPlot(std::string title, std::string x_label, std::string y_label)
    : title_(std::move(title)),
      x_label_(std::move(x_label)),
      y_label_(std::move(y_label)) {}

std::string SvgPlot::render() const {
  Range xr, yr;
  auto usable = [&](double x, double y) {
    return std::isfinite(x) && std::isfinite(y) && (!log_y_ || y > 0.0);
  };
  for (const auto& s : series_) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!usable(s.x[i], s.y[i])) continue;
      xr.include(s.x[i]);
      yr.include(log_y_ ? std::log10(s.y[i]) : s.y[i]);
    }
  }
  if (!xr.valid() || !yr.valid())
    throw ConfigError("plot '" + title_ + "' has no drawable data");
  for (double h : hlines_)
    if (std::isfinite(h) && (!log_y_ || h > 0.0))
      yr.include(log_y_ ? std::log10(h) : h);
  xr.pad();
  yr.pad();

  const double pw = kWidth - kLeft - kRight;
  const double ph = kHeight - kTop - kBottom;
  auto sx = [&](double x) { return kLeft + (x - xr.lo) / (xr.hi - xr.lo) * pw; };
  auto sy = [&](double y) {
    const double v = log_y_ ? std::log10(y) : y;
    return kTop + ph - (v - yr.lo) / (yr.hi - yr.lo) * ph;
  };

  std::string out;
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + px(kWidth) +
         "\" height=\"" + px(kHeight) + "\" viewBox=\"0 0 " + px(kWidth) +
         " " + px(kHeight) + "\">\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out += "<text x=\"" + px(kWidth / 2) + "\" y=\"22\" text-anchor=\"middle\" "
         "font-family=\"monospace\" font-size=\"15\">" +
         escape(title_) + "</text>\n";

  // Grid and ticks.
  auto tick_line = [&](double x1, double y1, double x2, double y2,
                       const char* color) {
    out += "<line x1=\"" + px(x1) + "\" y1=\"" + px(y1) + "\" x2=\"" + px(x2) +
           "\" y2=\"" + px(y2) + "\" stroke=\"" + color +
           "\" stroke-width=\"1\"/>\n";
  };
  auto text_at = [&](double x, double y, const std::string& s,
                     const char* anchor, int size) {
    out += "<text x=\"" + px(x) + "\" y=\"" + px(y) + "\" text-anchor=\"" +
           std::string(anchor) + "\" font-family=\"monospace\" font-size=\"" +
           std::to_string(size) + "\">" + escape(s) + "</text>\n";
  };

  {
    const double step = nice_step(xr.hi - xr.lo);
    for (double t = std::ceil(xr.lo / step) * step; t <= xr.hi + step * 1e-9;
         t += step) {
      const double x = sx(t);
      tick_line(x, kTop, x, kTop + ph, "#e0e0e0");
      text_at(x, kTop + ph + 18, tick_label(t == 0.0 ? 0.0 : t), "middle", 11);
    }
  }
  if (log_y_) {
    const int dlo = static_cast<int>(std::floor(yr.lo));
    const int dhi = static_cast<int>(std::ceil(yr.hi));
    const int stride = std::max(1, (dhi - dlo) / 8);
    for (int d = dlo; d <= dhi; d += stride) {
      const double y = kTop + ph - (d - yr.lo) / (yr.hi - yr.lo) * ph;
      if (y < kTop - 1e-9 || y > kTop + ph + 1e-9) continue;
      tick_line(kLeft, y, kLeft + pw, y, "#e0e0e0");
      char lbl[16];
      std::snprintf(lbl, sizeof lbl, "1e%d", d);
      text_at(kLeft - 6, y + 4, lbl, "end", 11);
    }
  } else {
    const double step = nice_step(yr.hi - yr.lo);
    for (double t = std::ceil(yr.lo / step) * step; t <= yr.hi + step * 1e-9;
         t += step) {
      const double y = kTop + ph - (t - yr.lo) / (yr.hi - yr.lo) * ph;
      tick_line(kLeft, y, kLeft + pw, y, "#e0e0e0");
      text_at(kLeft - 6, y + 4, tick_label(t == 0.0 ? 0.0 : t), "end", 11);
    }
  }

  for (double h : hlines_) {
    if (!std::isfinite(h) || (log_y_ && h <= 0.0)) continue;
    const double y = sy(h);
    out += "<line x1=\"" + px(kLeft) + "\" y1=\"" + px(y) + "\" x2=\"" +
           px(kLeft + pw) + "\" y2=\"" + px(y) +
           "\" stroke=\"#999999\" stroke-width=\"1\" "
           "stroke-dasharray=\"5,4\"/>\n";
  }

  // Series, clipped to the plot rectangle.
  out += "<clipPath id=\"plot\"><rect x=\"" + px(kLeft) + "\" y=\"" +
         px(kTop) + "\" width=\"" + px(pw) + "\" height=\"" + px(ph) +
         "\"/></clipPath>\n<g clip-path=\"url(#plot)\">\n";
  for (std::size_t si = 0; si < series_.size(); ++si) {
    const auto& s = series_[si];
    const char* color = kPalette[si % kPaletteSize];
    if (s.scatter) {
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        if (!usable(s.x[i], s.y[i])) continue;
        out += "<circle cx=\"" + px(sx(s.x[i])) + "\" cy=\"" +
               px(sy(s.y[i])) + "\" r=\"2.5\" fill=\"" + color + "\"/>\n";
      }
      continue;
    }
    std::string points;
    auto flush = [&]() {
      if (points.empty()) return;
      out += "<polyline fill=\"none\" stroke=\"" + std::string(color) +
             "\" stroke-width=\"1.5\" points=\"" + points + "\"/>\n";
      points.clear();
    };
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!usable(s.x[i], s.y[i])) {
        flush();
        continue;
      }
      if (!points.empty()) points += ' ';
      points += px(sx(s.x[i])) + "," + px(sy(s.y[i]));
    }
    flush();
  }
  out += "</g>\n";

  // Frame over the grid, then axis labels and legend.
  out += "<rect x=\"" + px(kLeft) + "\" y=\"" + px(kTop) + "\" width=\"" +
         px(pw) + "\" height=\"" + px(ph) +
         "\" fill=\"none\" stroke=\"black\" stroke-width=\"1\"/>\n";
  text_at(kLeft + pw / 2, kHeight - 14, x_label_, "middle", 13);
  out += "<text x=\"20\" y=\"" + px(kTop + ph / 2) +
         "\" text-anchor=\"middle\" font-family=\"monospace\" "
         "font-size=\"13\" transform=\"rotate(-90 20 " + px(kTop + ph / 2) +
         ")\">" + escape(y_label_) + "</text>\n";

  double ly = kTop + 14;
  for (std::size_t si = 0; si < series_.size(); ++si) {
    const auto& s = series_[si];
    if (s.label.empty()) continue;
    const double lx = kLeft + pw - 170;
    tick_line(lx, ly - 4, lx + 22, ly - 4, kPalette[si % kPaletteSize]);
    text_at(lx + 28, ly, s.label, "start", 11);
    ly += 16;
  }

  out += "</svg>\n";
  return out;
}

}  // namespace optlab
