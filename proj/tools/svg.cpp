#include "svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace gridcal::cli {

namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 400.0;
constexpr double kLeft = 60.0;
constexpr double kRight = 20.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 50.0;

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Frame {
  double x0, x1, y0, y1;

  double px(double x) const { return kLeft + (x - x0) / (x1 - x0) * (kWidth - kLeft - kRight); }
  double py(double y) const { return kHeight - kBottom - (y - y0) / (y1 - y0) * (kHeight - kTop - kBottom); }
};

void widen(double& lo, double& hi) {
  if (!std::isfinite(lo) || !std::isfinite(hi)) {
    lo = 0.0;
    hi = 1.0;
  }
  if (hi <= lo) {
    lo -= 0.5;
    hi += 0.5;
  }
}

std::ostringstream open_svg(const std::string& title) {
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
    << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << num(kWidth / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << escape(title)
    << "</text>\n";
  return s;
}

void axes(std::ostringstream& s, const Frame& f, const std::string& xlabel, const std::string& ylabel) {
  const double bx = f.px(f.x0), by = f.py(f.y0);
  s << "<line x1=\"" << num(bx) << "\" y1=\"" << num(by) << "\" x2=\"" << num(f.px(f.x1)) << "\" y2=\"" << num(by)
    << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << num(bx) << "\" y1=\"" << num(by) << "\" x2=\"" << num(bx) << "\" y2=\"" << num(f.py(f.y1))
    << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = f.x0 + (f.x1 - f.x0) * i / 4.0;
    const double yv = f.y0 + (f.y1 - f.y0) * i / 4.0;
    s << "<text x=\"" << num(f.px(xv)) << "\" y=\"" << num(by + 16) << "\" text-anchor=\"middle\">" << label(xv)
      << "</text>\n";
    s << "<text x=\"" << num(bx - 6) << "\" y=\"" << num(f.py(yv) + 4) << "\" text-anchor=\"end\">" << label(yv)
      << "</text>\n";
  }
  s << "<text x=\"" << num(f.px(0.5 * (f.x0 + f.x1))) << "\" y=\"" << num(kHeight - 12)
    << "\" text-anchor=\"middle\">" << escape(xlabel) << "</text>\n";
  if (!ylabel.empty()) {
    s << "<text x=\"14\" y=\"" << num(f.py(0.5 * (f.y0 + f.y1))) << "\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
      << num(f.py(0.5 * (f.y0 + f.y1))) << ")\">" << escape(ylabel) << "</text>\n";
  }
}

void polylines(std::ostringstream& s, const Frame& f, const std::vector<Series>& series) {
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& ser = series[k];
    const char* colour = kPalette[k % std::size(kPalette)];
    s << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < ser.x.size(); ++i) {
      if (!std::isfinite(ser.y[i])) continue;
      s << num(f.px(ser.x[i])) << ',' << num(f.py(ser.y[i])) << ' ';
    }
    s << "\"/>\n";
    const double ly = kTop + 14.0 * static_cast<double>(k);
    s << "<text x=\"" << num(kWidth - kRight - 4) << "\" y=\"" << num(ly) << "\" text-anchor=\"end\" fill=\"" << colour
      << "\">" << escape(ser.name) << "</text>\n";
  }
}

void extend(const std::vector<double>& v, double& lo, double& hi) {
  for (double x : v) {
    if (!std::isfinite(x)) continue;
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
}

} // namespace

std::string svg_histogram(const std::string& title, const std::string& xlabel, const Bars& bars,
                          const std::vector<Series>& overlays) {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0;
  double y1 = 0.0, unused = 0.0;
  extend(bars.edges, x0, x1);
  extend(bars.height, unused, y1);
  for (const auto& o : overlays) {
    extend(o.x, x0, x1);
    extend(o.y, unused, y1);
  }
  double y0 = 0.0;
  widen(x0, x1);
  widen(y0, y1);
  const Frame f{x0, x1, y0, y1 * 1.05};
  auto s = open_svg(title);
  for (std::size_t i = 0; i + 1 < bars.edges.size() && i < bars.height.size(); ++i) {
    const double left = f.px(bars.edges[i]), right = f.px(bars.edges[i + 1]);
    const double top = f.py(bars.height[i]);
    s << "<rect x=\"" << num(left) << "\" y=\"" << num(top) << "\" width=\"" << num(right - left) << "\" height=\""
      << num(f.py(0.0) - top) << "\" fill=\"#9ecae1\" stroke=\"#3182bd\"/>\n";
  }
  axes(s, f, xlabel, "density");
  polylines(s, f, overlays);
  s << "</svg>\n";
  return s.str();
}

std::string svg_lines(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                      const std::vector<Series>& series) {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0;
  double y0 = 0.0, y1 = 0.0;
  for (const auto& ser : series) {
    extend(ser.x, x0, x1);
    extend(ser.y, y0, y1);
  }
  widen(x0, x1);
  widen(y0, y1);
  const Frame f{x0, x1, y0, y1 * 1.05};
  auto s = open_svg(title);
  axes(s, f, xlabel, ylabel);
  polylines(s, f, series);
  s << "</svg>\n";
  return s.str();
}

std::string svg_heatmap(const std::string& title, const std::vector<double>& values, std::size_t height,
                        std::size_t width, double lo, double hi) {
  widen(lo, hi);
  auto s = open_svg(title);
  const double area = std::min(kWidth - kLeft - kRight, kHeight - kTop - kBottom);
  const double cell = area / static_cast<double>(std::max<std::size_t>({height, width, 1}));
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      const double t = std::clamp((values[r * width + c] - lo) / (hi - lo), 0.0, 1.0);
      const int grey = static_cast<int>(std::lround(255.0 * (1.0 - t)));
      s << "<rect x=\"" << num(kLeft + cell * static_cast<double>(c)) << "\" y=\""
        << num(kTop + cell * static_cast<double>(r)) << "\" width=\"" << num(cell) << "\" height=\"" << num(cell)
        << "\" fill=\"rgb(" << grey << ',' << grey << ',' << grey << ")\"/>\n";
    }
  }
  s << "<text x=\"" << num(kLeft) << "\" y=\"" << num(kHeight - 12) << "\">white = " << label(lo)
    << ", black = " << label(hi) << "</text>\n";
  s << "</svg>\n";
  return s.str();
}

std::string svg_bar_chart(const std::string& title, const std::vector<std::string>& labels,
                          const std::vector<double>& values) {
  double y0 = 0.0, y1 = 0.0;
  extend(values, y0, y1);
  widen(y0, y1);
  const double n = static_cast<double>(std::max<std::size_t>(values.size(), 1));
  const Frame f{0.0, n, y0, y1 * 1.05};
  auto s = open_svg(title);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double left = f.px(static_cast<double>(i) + 0.15), right = f.px(static_cast<double>(i) + 0.85);
    const double v = std::isfinite(values[i]) ? values[i] : 0.0;
    const double top = f.py(std::max(v, 0.0)), bottom = f.py(std::min(v, 0.0));
    s << "<rect x=\"" << num(left) << "\" y=\"" << num(top) << "\" width=\"" << num(right - left) << "\" height=\""
      << num(bottom - top) << "\" fill=\"" << kPalette[i % std::size(kPalette)] << "\"/>\n";
    s << "<text x=\"" << num(0.5 * (left + right)) << "\" y=\"" << num(kHeight - kBottom + 16)
      << "\" text-anchor=\"middle\">" << escape(labels[i]) << "</text>\n";
    s << "<text x=\"" << num(0.5 * (left + right)) << "\" y=\"" << num(top - 4) << "\" text-anchor=\"middle\">"
      << label(values[i]) << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

} // namespace gridcal::cli
