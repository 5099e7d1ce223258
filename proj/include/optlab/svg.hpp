#pragma once

#include <string>
#include <vector>

namespace optlab {

// Fixed-layout SVG chart writer for the CSV artifacts: axes with nice-number
// ticks, line or scatter series in a fixed palette, a top-right legend.
// Output bytes depend only on the data, so rendered plots are reproducible
// alongside the CSVs they are drawn from.
class SvgPlot {
 public:
  SvgPlot(std::string title, std::string x_label, std::string y_label);

  // Log-scale y drops non-positive points; ticks move to powers of ten.
  void set_log_y(bool on) { log_y_ = on; }

  // Non-finite samples split a line into segments and are skipped entirely
  // for scatter series.  Colors cycle through the palette by series order.
  void add_line(std::vector<double> x, std::vector<double> y,
                std::string label);
  void add_scatter(std::vector<double> x, std::vector<double> y,
                   std::string label);

  // Horizontal reference rule, drawn dashed and unlabeled.
  void add_hline(double y);

  int series_count() const { return static_cast<int>(series_.size()); }

  // Throws ConfigError when no series contributed a drawable point.
  std::string render() const;

 private:
  struct Series {
    std::vector<double> x, y;
    std::string label;
    bool scatter = false;
  };

  std::string title_, x_label_, y_label_;
  bool log_y_ = false;
  std::vector<Series> series_;
  std::vector<double> hlines_;
};

}  // namespace optlab
