#include "neuroalign/figures.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "neuroalign/error.hpp"

namespace neuroalign {

namespace {

constexpr double kWidth = 720, kHeight = 400;
constexpr double kLeft = 70, kRight = 170, kTop = 40, kBottom = 60;
constexpr const char* kPalette[] = {"#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f",
                                    "#edc948", "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac"};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick(double v) {
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

struct Range {
  double lo, hi;
};

Range nice_range(double lo, double hi) {
  if (!std::isfinite(lo) || !std::isfinite(hi)) return {0.0, 1.0};
  if (hi - lo < 1e-12) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double pad = 0.05 * (hi - lo);
  return {lo - pad, hi + pad};
}

void header(std::ostringstream& os, const std::string& title) {
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
     << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << fmt(kWidth / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << escape(title)
     << "</text>\n";
}

void y_axis(std::ostringstream& os, Range r, const std::string& label) {
  const double plot_h = kHeight - kTop - kBottom;
  os << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\"" << kHeight - kBottom
     << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = r.lo + (r.hi - r.lo) * i / 4.0;
    const double y = kTop + plot_h * (1.0 - i / 4.0);
    os << "<line x1=\"" << kLeft - 4 << "\" y1=\"" << fmt(y) << "\" x2=\"" << kLeft << "\" y2=\"" << fmt(y)
       << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << kLeft - 6 << "\" y=\"" << fmt(y + 4) << "\" text-anchor=\"end\">" << tick(v) << "</text>\n";
  }
  os << "<text x=\"16\" y=\"" << fmt(kTop + plot_h / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
     << fmt(kTop + plot_h / 2) << ")\">" << escape(label) << "</text>\n";
}

void legend(std::ostringstream& os, const std::vector<std::string>& names) {
  for (std::size_t i = 0; i < names.size(); ++i) {
    const double y = kTop + 16.0 * static_cast<double>(i);
    os << "<rect x=\"" << kWidth - kRight + 12 << "\" y=\"" << fmt(y) << "\" width=\"10\" height=\"10\" fill=\""
       << kPalette[i % 10] << "\"/>\n";
    os << "<text x=\"" << kWidth - kRight + 26 << "\" y=\"" << fmt(y + 9) << "\">" << escape(names[i]) << "</text>\n";
  }
}

}  // namespace

std::string render_svg(const BarChart& c) {
  double lo = 0.0, hi = 0.0;
  for (const auto& s : c.series)
    for (double v : s.values)
      if (std::isfinite(v)) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
  const Range r = nice_range(lo, hi);
  const double plot_w = kWidth - kLeft - kRight, plot_h = kHeight - kTop - kBottom;
  auto ymap = [&](double v) { return kTop + plot_h * (1.0 - (v - r.lo) / (r.hi - r.lo)); };
  std::ostringstream os;
  header(os, c.title);
  y_axis(os, r, c.y_label);
  os << "<line x1=\"" << kLeft << "\" y1=\"" << fmt(ymap(0.0)) << "\" x2=\"" << kWidth - kRight << "\" y2=\""
     << fmt(ymap(0.0)) << "\" stroke=\"black\"/>\n";
  const std::size_t g = std::max<std::size_t>(1, c.groups.size());
  const double group_w = plot_w / static_cast<double>(g);
  const double bar_w = 0.8 * group_w / static_cast<double>(std::max<std::size_t>(1, c.series.size()));
  for (std::size_t gi = 0; gi < c.groups.size(); ++gi) {
    const double gx = kLeft + group_w * static_cast<double>(gi);
    for (std::size_t si = 0; si < c.series.size(); ++si) {
      if (gi >= c.series[si].values.size() || !std::isfinite(c.series[si].values[gi])) continue;
      const double v = c.series[si].values[gi];
      const double x = gx + 0.1 * group_w + bar_w * static_cast<double>(si);
      const double y0 = ymap(std::max(v, 0.0)), y1 = ymap(std::min(v, 0.0));
      os << "<rect x=\"" << fmt(x) << "\" y=\"" << fmt(y0) << "\" width=\"" << fmt(bar_w) << "\" height=\""
         << fmt(y1 - y0) << "\" fill=\"" << kPalette[si % 10] << "\"/>\n";
    }
    const double label_x = gx + group_w / 2;
    const double label_y = kHeight - kBottom + 14;
    if (c.groups.size() > 12) {
      os << "<text x=\"" << fmt(label_x) << "\" y=\"" << fmt(label_y) << "\" text-anchor=\"end\" font-size=\"8\" "
         << "transform=\"rotate(-60 " << fmt(label_x) << " " << fmt(label_y) << ")\">" << escape(c.groups[gi])
         << "</text>\n";
    } else {
      os << "<text x=\"" << fmt(label_x) << "\" y=\"" << fmt(label_y) << "\" text-anchor=\"middle\">"
         << escape(c.groups[gi]) << "</text>\n";
    }
  }
  std::vector<std::string> names;
  for (const auto& s : c.series) names.push_back(s.name);
  legend(os, names);
  os << "</svg>\n";
  return os.str();
}

std::string render_svg(const LineChart& c) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& s : c.series)
    for (std::size_t i = 0; i < s.y.size(); ++i) {
      const double e = i < s.sem.size() ? s.sem[i] : 0.0;
      if (std::isfinite(s.y[i])) {
        lo = std::min(lo, s.y[i] - e);
        hi = std::max(hi, s.y[i] + e);
      }
    }
  const Range r = nice_range(lo, hi);
  double xlo = c.x.empty() ? 0.0 : c.x.front(), xhi = c.x.empty() ? 1.0 : c.x.back();
  if (xhi - xlo < 1e-12) xhi = xlo + 1.0;
  const double plot_w = kWidth - kLeft - kRight, plot_h = kHeight - kTop - kBottom;
  auto xmap = [&](double v) { return kLeft + plot_w * (v - xlo) / (xhi - xlo); };
  auto ymap = [&](double v) { return kTop + plot_h * (1.0 - (v - r.lo) / (r.hi - r.lo)); };
  std::ostringstream os;
  header(os, c.title);
  y_axis(os, r, c.y_label);
  os << "<line x1=\"" << kLeft << "\" y1=\"" << kHeight - kBottom << "\" x2=\"" << kWidth - kRight << "\" y2=\""
     << kHeight - kBottom << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = xlo + (xhi - xlo) * i / 4.0;
    os << "<text x=\"" << fmt(xmap(v)) << "\" y=\"" << kHeight - kBottom + 14 << "\" text-anchor=\"middle\">"
       << tick(v) << "</text>\n";
  }
  os << "<text x=\"" << fmt(kLeft + plot_w / 2) << "\" y=\"" << kHeight - 16 << "\" text-anchor=\"middle\">"
     << escape(c.x_label) << "</text>\n";
  for (std::size_t si = 0; si < c.series.size(); ++si) {
    const auto& s = c.series[si];
    const char* color = kPalette[si % 10];
    const std::size_t n = std::min(s.y.size(), c.x.size());
    if (s.sem.size() == s.y.size() && n > 0) {
      os << "<polygon fill=\"" << color << "\" fill-opacity=\"0.2\" stroke=\"none\" points=\"";
      for (std::size_t i = 0; i < n; ++i) os << fmt(xmap(c.x[i])) << "," << fmt(ymap(s.y[i] + s.sem[i])) << " ";
      for (std::size_t i = n; i-- > 0;) os << fmt(xmap(c.x[i])) << "," << fmt(ymap(s.y[i] - s.sem[i])) << " ";
      os << "\"/>\n";
    }
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < n; ++i) os << fmt(xmap(c.x[i])) << "," << fmt(ymap(s.y[i])) << " ";
    os << "\"/>\n";
    for (std::size_t i = 0; i < std::min(n, s.markers.size()); ++i) {
      if (!s.markers[i]) continue;
      os << "<circle cx=\"" << fmt(xmap(c.x[i])) << "\" cy=\"" << fmt(kHeight - kBottom - 6 - 5.0 * si)
         << "\" r=\"2\" fill=\"" << color << "\"/>\n";
    }
  }
  std::vector<std::string> names;
  for (const auto& s : c.series) names.push_back(s.name);
  legend(os, names);
  os << "</svg>\n";
  return os.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw RuntimeFailure("cannot write " + path.string());
  out << text;
}

}  // namespace neuroalign
