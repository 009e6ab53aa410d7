#pragma once

// Minimal static SVG charts for the report stage. Every chart is emitted
// alongside a CSV holding the same data, so nothing here needs to be parsed back.

#include <string>
#include <vector>

namespace procqrf::svg {

struct Series {
  std::string name;
  std::string color;  // any SVG color
  std::vector<double> x;
  std::vector<double> y;
  // Optional vertical whiskers, same length as x when present.
  std::vector<double> low;
  std::vector<double> high;
};

struct Axes {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool diagonal = false;  // draw y = x
};

std::string scatter(const Axes& axes, const std::vector<Series>& series);

// Horizontal bars, drawn top to bottom in the given order.
std::string bars(const Axes& axes, const std::vector<std::string>& labels, const std::vector<double>& values);

std::string escape_text(std::string_view text);

}  // namespace procqrf::svg
