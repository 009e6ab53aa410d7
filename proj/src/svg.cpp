#include "procqrf/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <string_view>

namespace procqrf::svg {

namespace {

constexpr double kWidth = 720;
constexpr double kHeight = 480;
constexpr double kLeft = 70;
constexpr double kRight = 20;
constexpr double kTop = 40;
constexpr double kBottom = 50;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();

  void add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void finish() {
    if (!std::isfinite(lo)) {
      lo = 0;
      hi = 1;
    }
    if (hi - lo < 1e-12) {
      lo -= 0.5;
      hi += 0.5;
    }
    const double pad = 0.03 * (hi - lo);
    lo -= pad;
    hi += pad;
  }
};

void header(std::ostringstream& out, const Axes& axes) {
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << num(kWidth / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
      << escape_text(axes.title) << "</text>\n";
  out << "<text x=\"" << num(kLeft + (kWidth - kLeft - kRight) / 2) << "\" y=\"" << num(kHeight - 10)
      << "\" text-anchor=\"middle\">" << escape_text(axes.x_label) << "</text>\n";
  out << "<text transform=\"translate(16 " << num(kTop + (kHeight - kTop - kBottom) / 2)
      << ") rotate(-90)\" text-anchor=\"middle\">" << escape_text(axes.y_label) << "</text>\n";
}

}  // namespace

std::string escape_text(std::string_view text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string scatter(const Axes& axes, const std::vector<Series>& series) {
  Range rx, ry;
  for (const auto& s : series) {
    for (double v : s.x) rx.add(v);
    for (double v : s.y) ry.add(v);
    for (double v : s.low) ry.add(v);
    for (double v : s.high) ry.add(v);
  }
  if (axes.diagonal) {
    const double lo = std::min(rx.lo, ry.lo), hi = std::max(rx.hi, ry.hi);
    rx.lo = ry.lo = lo;
    rx.hi = ry.hi = hi;
  }
  rx.finish();
  ry.finish();
  const double pw = kWidth - kLeft - kRight;
  const double ph = kHeight - kTop - kBottom;
  auto px = [&](double v) { return kLeft + (v - rx.lo) / (rx.hi - rx.lo) * pw; };
  auto py = [&](double v) { return kTop + ph - (v - ry.lo) / (ry.hi - ry.lo) * ph; };

  std::ostringstream out;
  header(out, axes);
  out << "<rect x=\"" << num(kLeft) << "\" y=\"" << num(kTop) << "\" width=\"" << num(pw) << "\" height=\""
      << num(ph) << "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double vx = rx.lo + (rx.hi - rx.lo) * i / 4.0;
    const double vy = ry.lo + (ry.hi - ry.lo) * i / 4.0;
    out << "<text x=\"" << num(px(vx)) << "\" y=\"" << num(kTop + ph + 16) << "\" text-anchor=\"middle\">"
        << tick_label(vx) << "</text>\n";
    out << "<text x=\"" << num(kLeft - 6) << "\" y=\"" << num(py(vy) + 4) << "\" text-anchor=\"end\">"
        << tick_label(vy) << "</text>\n";
  }
  out << "<g clip-path=\"none\">\n";
  if (axes.diagonal) {
    out << "<line x1=\"" << num(px(rx.lo)) << "\" y1=\"" << num(py(rx.lo)) << "\" x2=\"" << num(px(rx.hi))
        << "\" y2=\"" << num(py(rx.hi)) << "\" stroke=\"#999\" stroke-dasharray=\"4 3\"/>\n";
  }
  for (const auto& s : series) {
    const bool whiskers = s.low.size() == s.x.size() && s.high.size() == s.x.size();
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      if (whiskers) {
        out << "<line x1=\"" << num(px(s.x[i])) << "\" y1=\"" << num(py(s.low[i])) << "\" x2=\""
            << num(px(s.x[i])) << "\" y2=\"" << num(py(s.high[i])) << "\" stroke=\"" << s.color
            << "\" stroke-opacity=\"0.35\"/>\n";
      }
      out << "<circle cx=\"" << num(px(s.x[i])) << "\" cy=\"" << num(py(s.y[i])) << "\" r=\"2.5\" fill=\""
          << s.color << "\" fill-opacity=\"0.7\"/>\n";
    }
  }
  out << "</g>\n";
  double ly = kTop + 14;
  for (const auto& s : series) {
    out << "<circle cx=\"" << num(kLeft + 12) << "\" cy=\"" << num(ly - 4) << "\" r=\"4\" fill=\"" << s.color
        << "\"/><text x=\"" << num(kLeft + 22) << "\" y=\"" << num(ly) << "\">" << escape_text(s.name)
        << "</text>\n";
    ly += 16;
  }
  out << "</svg>\n";
  return out.str();
}

std::string bars(const Axes& axes, const std::vector<std::string>& labels, const std::vector<double>& values) {
  const std::size_t n = std::min(labels.size(), values.size());
  double vmax = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (std::isfinite(values[i])) vmax = std::max(vmax, values[i]);
  }
  if (vmax <= 0) vmax = 1;
  const double left = 230;
  const double pw = kWidth - left - kRight - 60;
  const double ph = kHeight - kTop - kBottom;
  const double step = n == 0 ? ph : ph / static_cast<double>(n);

  std::ostringstream out;
  header(out, axes);
  for (std::size_t i = 0; i < n; ++i) {
    const double y = kTop + step * static_cast<double>(i);
    const double w = std::isfinite(values[i]) ? std::max(0.0, values[i]) / vmax * pw : 0;
    out << "<text x=\"" << num(left - 6) << "\" y=\"" << num(y + step * 0.6) << "\" text-anchor=\"end\">"
        << escape_text(labels[i]) << "</text>\n";
    out << "<rect x=\"" << num(left) << "\" y=\"" << num(y + step * 0.15) << "\" width=\"" << num(w)
        << "\" height=\"" << num(step * 0.7) << "\" fill=\"#1f77b4\"/>\n";
    out << "<text x=\"" << num(left + w + 4) << "\" y=\"" << num(y + step * 0.6) << "\">" << tick_label(values[i])
        << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace procqrf::svg
