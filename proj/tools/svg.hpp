#pragma once

// Minimal SVG chart writer for the plot subcommand: line series, stdev
// bands, background spans (event coloring), and scatter points.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace svgplot {

struct Series {
  std::vector<double> x, y;
  std::string color = "#4c72b0";
  double width = 1.5;
  std::string label;
};

struct Band {  // filled region between lo and hi
  std::vector<double> x, lo, hi;
  std::string color = "#4c72b0";
  double opacity = 0.25;
};

struct Span {  // vertical background stripe
  double x0 = 0, x1 = 0;
  std::string color = "#cccccc";
  double opacity = 0.18;
};

struct Point {
  double x = 0, y = 0;
  std::string color = "#4c72b0";
  double r = 2.5;
};

struct Legend {
  std::string label;
  std::string color;
};

class Plot {
 public:
  std::string title, xlabel, ylabel;
  std::vector<Series> series;
  std::vector<Band> bands;
  std::vector<Span> spans;
  std::vector<Point> points;
  std::vector<Legend> legend;

  void save(const std::string& path, int w = 860, int h = 480) const {
    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
    double ymin = xmin, ymax = -xmin;
    auto eat = [&](double x, double y) {
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    };
    for (const auto& s : series)
      for (size_t i = 0; i < s.x.size(); ++i) eat(s.x[i], s.y[i]);
    for (const auto& b : bands)
      for (size_t i = 0; i < b.x.size(); ++i) {
        eat(b.x[i], b.lo[i]);
        eat(b.x[i], b.hi[i]);
      }
    for (const auto& p : points) eat(p.x, p.y);
    if (!std::isfinite(xmin) || !std::isfinite(ymin))
      throw std::runtime_error("plot '" + title + "': no data to draw");
    if (xmax == xmin) xmax = xmin + 1;
    if (ymax == ymin) ymax = ymin + 1;
    const double ypad = 0.05 * (ymax - ymin);
    ymin -= ypad;
    ymax += ypad;

    const double ml = 62, mr = 16, mt = title.empty() ? 16 : 34, mb = 44;
    const double pw = w - ml - mr, ph = h - mt - mb;
    auto X = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * pw; };
    auto Y = [&](double y) { return mt + ph - (y - ymin) / (ymax - ymin) * ph; };

    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w
      << "\" height=\"" << h << "\" viewBox=\"0 0 " << w << " " << h
      << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

    for (const auto& sp : spans) {
      const double a = std::clamp(X(std::max(sp.x0, xmin)), ml, ml + pw);
      const double b = std::clamp(X(std::min(sp.x1, xmax)), ml, ml + pw);
      if (b <= a) continue;
      f << "<rect x=\"" << a << "\" y=\"" << mt << "\" width=\"" << b - a
        << "\" height=\"" << ph << "\" fill=\"" << sp.color << "\" opacity=\""
        << sp.opacity << "\"/>\n";
    }

    // axes + ticks
    f << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << pw
      << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"#333\" stroke-width=\"1\"/>\n";
    char buf[32];
    for (int i = 0; i <= 5; ++i) {
      const double fx = xmin + (xmax - xmin) * i / 5.0;
      const double fy = ymin + (ymax - ymin) * i / 5.0;
      const double px = X(fx), py = Y(fy);
      f << "<line x1=\"" << px << "\" y1=\"" << mt + ph << "\" x2=\"" << px
        << "\" y2=\"" << mt + ph + 4 << "\" stroke=\"#333\"/>\n";
      std::snprintf(buf, sizeof(buf), "%.4g", fx);
      f << "<text x=\"" << px << "\" y=\"" << mt + ph + 17
        << "\" font-size=\"11\" text-anchor=\"middle\" fill=\"#333\">" << buf
        << "</text>\n";
      f << "<line x1=\"" << ml - 4 << "\" y1=\"" << py << "\" x2=\"" << ml
        << "\" y2=\"" << py << "\" stroke=\"#333\"/>\n";
      std::snprintf(buf, sizeof(buf), "%.4g", fy);
      f << "<text x=\"" << ml - 7 << "\" y=\"" << py + 4
        << "\" font-size=\"11\" text-anchor=\"end\" fill=\"#333\">" << buf
        << "</text>\n";
      if (i > 0 && i < 5)
        f << "<line x1=\"" << ml << "\" y1=\"" << py << "\" x2=\"" << ml + pw
          << "\" y2=\"" << py
          << "\" stroke=\"#eee\" stroke-width=\"1\"/>\n";
    }

    for (const auto& b : bands) {
      if (b.x.empty()) continue;
      f << "<polygon points=\"";
      for (size_t i = 0; i < b.x.size(); ++i)
        f << X(b.x[i]) << ',' << Y(b.hi[i]) << ' ';
      for (size_t i = b.x.size(); i-- > 0;)
        f << X(b.x[i]) << ',' << Y(b.lo[i]) << ' ';
      f << "\" fill=\"" << b.color << "\" opacity=\"" << b.opacity
        << "\" stroke=\"none\"/>\n";
    }

    for (const auto& s : series) {
      if (s.x.empty()) continue;
      f << "<polyline fill=\"none\" stroke=\"" << s.color
        << "\" stroke-width=\"" << s.width << "\" points=\"";
      for (size_t i = 0; i < s.x.size(); ++i)
        f << X(s.x[i]) << ',' << Y(s.y[i]) << ' ';
      f << "\"/>\n";
    }

    for (const auto& p : points)
      f << "<circle cx=\"" << X(p.x) << "\" cy=\"" << Y(p.y) << "\" r=\""
        << p.r << "\" fill=\"" << p.color << "\" opacity=\"0.85\"/>\n";

    if (!title.empty())
      f << "<text x=\"" << w / 2.0
        << "\" y=\"20\" font-size=\"15\" text-anchor=\"middle\" "
           "fill=\"#111\">"
        << title << "</text>\n";
    if (!xlabel.empty())
      f << "<text x=\"" << ml + pw / 2 << "\" y=\"" << h - 8
        << "\" font-size=\"12\" text-anchor=\"middle\" fill=\"#333\">"
        << xlabel << "</text>\n";
    if (!ylabel.empty())
      f << "<text x=\"14\" y=\"" << mt + ph / 2
        << "\" font-size=\"12\" text-anchor=\"middle\" fill=\"#333\" "
           "transform=\"rotate(-90 14 "
        << mt + ph / 2 << ")\">" << ylabel << "</text>\n";

    double lx = ml + 10, ly = mt + 16;
    for (const auto& item : legend) {
      f << "<line x1=\"" << lx << "\" y1=\"" << ly - 4 << "\" x2=\"" << lx + 22
        << "\" y2=\"" << ly - 4 << "\" stroke=\"" << item.color
        << "\" stroke-width=\"3\"/>\n";
      f << "<text x=\"" << lx + 27 << "\" y=\"" << ly
        << "\" font-size=\"12\" fill=\"#333\">" << item.label << "</text>\n";
      ly += 16;
    }
    f << "</svg>\n";
  }
};

}  // namespace svgplot
