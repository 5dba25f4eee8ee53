#pragma once

// Minimal deterministic SVG charts. Numbers are printed with fixed precision
// so identical data gives identical bytes.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace ctxeng::plot {

inline std::string num(double v, int prec = 2) {
  if (!std::isfinite(v)) return "0";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  std::string s(buf);
  if (s == "-0.00" || s == "-0") s = s.substr(1);
  return s;
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
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

struct Bar {
  std::string label;
  double value = 0.0;
  std::optional<double> error;  // half-width of the error bar
  std::string note;             // printed right of the bar
};

inline double nice_max(double v) {
  if (!(v > 0)) return 1.0;
  const double p = std::pow(10.0, std::floor(std::log10(v)));
  for (double m : {1.0, 2.0, 2.5, 5.0, 10.0})
    if (m * p >= v) return m * p;
  return 10 * p;
}

inline void axis_ticks(std::ostringstream& o, double x0, double width, double y0, double y1, double vmax) {
  for (int k = 0; k <= 5; ++k) {
    const double v = vmax * k / 5.0;
    const double x = x0 + width * k / 5.0;
    o << "<line x1=\"" << num(x) << "\" y1=\"" << num(y0) << "\" x2=\"" << num(x) << "\" y2=\"" << num(y1)
      << "\" stroke=\"#dddddd\"/>\n";
    o << "<text x=\"" << num(x) << "\" y=\"" << num(y1 + 14) << "\" font-size=\"10\" text-anchor=\"middle\">"
      << num(v, vmax < 0.1 ? 4 : 3) << "</text>\n";
  }
}

/// Horizontal bars, first bar on top. Values are clamped at 0 on the left.
inline std::string horizontal_bars(const std::string& title, const std::string& xlabel, const std::vector<Bar>& bars,
                                   double label_width = 220) {
  const double row = 22, top = 40, plot_w = 420, right = 150;
  const double height = top + row * static_cast<double>(bars.size()) + 50;
  const double width = label_width + plot_w + right;
  double vmax = 0.0;
  for (const auto& b : bars) vmax = std::max(vmax, b.value + b.error.value_or(0.0));
  vmax = nice_max(vmax);
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width, 0) << "\" height=\"" << num(height, 0)
    << "\" font-family=\"sans-serif\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << num(width / 2) << "\" y=\"22\" font-size=\"14\" text-anchor=\"middle\">" << escape(title)
    << "</text>\n";
  const double y_end = top + row * static_cast<double>(bars.size());
  axis_ticks(o, label_width, plot_w, top, y_end, vmax);
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const auto& b = bars[i];
    const double y = top + row * static_cast<double>(i);
    const double w = std::max(0.0, b.value) / vmax * plot_w;
    o << "<text x=\"" << num(label_width - 6) << "\" y=\"" << num(y + row * 0.68)
      << "\" font-size=\"11\" text-anchor=\"end\">" << escape(b.label) << "</text>\n";
    o << "<rect x=\"" << num(label_width) << "\" y=\"" << num(y + 3) << "\" width=\"" << num(w) << "\" height=\""
      << num(row - 6) << "\" fill=\"#4878a8\"/>\n";
    if (b.error) {
      const double lo = std::max(0.0, b.value - *b.error) / vmax * plot_w + label_width;
      const double hi = (b.value + *b.error) / vmax * plot_w + label_width;
      o << "<line x1=\"" << num(lo) << "\" y1=\"" << num(y + row / 2) << "\" x2=\"" << num(hi) << "\" y2=\""
        << num(y + row / 2) << "\" stroke=\"black\"/>\n";
    }
    if (!b.note.empty())
      o << "<text x=\"" << num(label_width + plot_w + 6) << "\" y=\"" << num(y + row * 0.68)
        << "\" font-size=\"10\">" << escape(b.note) << "</text>\n";
  }
  o << "<text x=\"" << num(label_width + plot_w / 2) << "\" y=\"" << num(y_end + 36)
    << "\" font-size=\"11\" text-anchor=\"middle\">" << escape(xlabel) << "</text>\n";
  o << "</svg>\n";
  return o.str();
}

struct Series {
  std::string name;
  std::vector<double> x, y, err;  // err optional, same length as y when set
};

/// Line chart with a log2-spaced or linear x axis.
inline std::string line_chart(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                              const std::vector<Series>& series, bool log_x = false) {
  const double left = 70, top = 40, pw = 460, ph = 280, width = left + pw + 170, height = top + ph + 60;
  const char* colors[] = {"#4878a8", "#d0743c", "#6a9f58", "#9467bd", "#8c564b"};
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  auto tx = [&](double x) { return log_x ? std::log2(std::max(x, 1e-12)) : x; };
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      const double e = s.err.empty() ? 0.0 : s.err[i];
      xmin = std::min(xmin, tx(s.x[i]));
      xmax = std::max(xmax, tx(s.x[i]));
      ymin = std::min(ymin, s.y[i] - e);
      ymax = std::max(ymax, s.y[i] + e);
    }
  if (xmin > xmax) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  if (xmax == xmin) xmax = xmin + 1;
  const double pad = (ymax - ymin) * 0.1 + 1e-6;
  ymin -= pad;
  ymax += pad;
  auto px = [&](double x) { return left + (tx(x) - xmin) / (xmax - xmin) * pw; };
  auto py = [&](double y) { return top + ph - (y - ymin) / (ymax - ymin) * ph; };
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width, 0) << "\" height=\"" << num(height, 0)
    << "\" font-family=\"sans-serif\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << num(width / 2) << "\" y=\"22\" font-size=\"14\" text-anchor=\"middle\">" << escape(title)
    << "</text>\n";
  o << "<rect x=\"" << num(left) << "\" y=\"" << num(top) << "\" width=\"" << num(pw) << "\" height=\"" << num(ph)
    << "\" fill=\"none\" stroke=\"#999999\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double v = ymin + (ymax - ymin) * k / 4.0;
    o << "<text x=\"" << num(left - 6) << "\" y=\"" << num(py(v) + 4) << "\" font-size=\"10\" text-anchor=\"end\">"
      << num(v, 3) << "</text>\n";
  }
  std::vector<double> xs;
  for (const auto& s : series) xs.insert(xs.end(), s.x.begin(), s.x.end());
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  for (double x : xs)
    o << "<text x=\"" << num(px(x)) << "\" y=\"" << num(top + ph + 14) << "\" font-size=\"10\" text-anchor=\"middle\">"
      << num(x, x == std::floor(x) ? 0 : 2) << "</text>\n";
  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    const char* c = colors[si % 5];
    o << "<polyline fill=\"none\" stroke=\"" << c << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) o << (i ? " " : "") << num(px(s.x[i])) << "," << num(py(s.y[i]));
    o << "\"/>\n";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      o << "<circle cx=\"" << num(px(s.x[i])) << "\" cy=\"" << num(py(s.y[i])) << "\" r=\"3\" fill=\"" << c << "\"/>\n";
      if (!s.err.empty())
        o << "<line x1=\"" << num(px(s.x[i])) << "\" y1=\"" << num(py(s.y[i] - s.err[i])) << "\" x2=\""
          << num(px(s.x[i])) << "\" y2=\"" << num(py(s.y[i] + s.err[i])) << "\" stroke=\"" << c << "\"/>\n";
    }
    o << "<text x=\"" << num(left + pw + 12) << "\" y=\"" << num(top + 16 + 18 * static_cast<double>(si))
      << "\" font-size=\"11\" fill=\"" << c << "\">" << escape(s.name) << "</text>\n";
  }
  o << "<text x=\"" << num(left + pw / 2) << "\" y=\"" << num(top + ph + 40)
    << "\" font-size=\"11\" text-anchor=\"middle\">" << escape(xlabel) << "</text>\n";
  o << "<text x=\"16\" y=\"" << num(top + ph / 2) << "\" font-size=\"11\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
    << num(top + ph / 2) << ")\">" << escape(ylabel) << "</text>\n";
  o << "</svg>\n";
  return o.str();
}

}  // namespace ctxeng::plot
