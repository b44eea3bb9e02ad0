#pragma once

// Minimal SVG output: panels with linear axes, polylines, bars and labels.

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

namespace bohm::svg {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

/// Pixel box [left, top, width, height] showing data range [xmin, xmax] x [ymin, ymax].
struct Panel {
  double left, top, width, height;
  double xmin, xmax, ymin, ymax;

  double px(double x) const { return left + (x - xmin) / (xmax - xmin) * width; }
  double py(double y) const { return top + height - (y - ymin) / (ymax - ymin) * height; }
};

class Document {
 public:
  Document(double width, double height) : w_(width), h_(height) {}

  void frame(const Panel& p, const std::string& title, const std::string& xlabel, const std::string& ylabel) {
    body_ << "<rect x=\"" << num(p.left) << "\" y=\"" << num(p.top) << "\" width=\"" << num(p.width) << "\" height=\""
          << num(p.height) << "\" fill=\"none\" stroke=\"#444\"/>\n";
    text(p.left + p.width / 2, p.top - 8, title, 14, "middle");
    text(p.left + p.width / 2, p.top + p.height + 30, xlabel, 12, "middle");
    body_ << "<text x=\"" << num(p.left - 36) << "\" y=\"" << num(p.top + p.height / 2) << "\" font-size=\"12\" "
          << "text-anchor=\"middle\" transform=\"rotate(-90 " << num(p.left - 36) << ' ' << num(p.top + p.height / 2)
          << ")\">" << escape(ylabel) << "</text>\n";
    for (double f : {0.0, 0.5, 1.0}) {
      const double x = p.xmin + f * (p.xmax - p.xmin), y = p.ymin + f * (p.ymax - p.ymin);
      text(p.px(x), p.top + p.height + 14, num(x), 10, "middle");
      text(p.left - 4, p.py(y) + 3, num(y), 10, "end");
    }
  }

  void polyline(const Panel& p, const std::vector<double>& xs, const std::vector<double>& ys, const std::string& color,
                double stroke = 1.0, double opacity = 1.0) {
    if (xs.size() < 2) return;
    body_ << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"" << num(stroke)
          << "\" stroke-opacity=\"" << num(opacity) << "\" points=\"";
    for (size_t i = 0; i < xs.size(); ++i) body_ << num(p.px(xs[i])) << ',' << num(p.py(ys[i])) << ' ';
    body_ << "\"/>\n";
  }

  void bar(const Panel& p, double x0, double x1, double height, const std::string& color, double opacity = 0.6) {
    const double top = p.py(std::min(height, p.ymax)), base = p.py(std::max(p.ymin, 0.0));
    body_ << "<rect x=\"" << num(p.px(x0)) << "\" y=\"" << num(top) << "\" width=\"" << num(p.px(x1) - p.px(x0))
          << "\" height=\"" << num(std::max(0.0, base - top)) << "\" fill=\"" << color << "\" fill-opacity=\""
          << num(opacity) << "\"/>\n";
  }

  void dot(const Panel& p, double x, double y, const std::string& color, double r = 1.5) {
    body_ << "<circle cx=\"" << num(p.px(x)) << "\" cy=\"" << num(p.py(y)) << "\" r=\"" << num(r) << "\" fill=\"" << color
          << "\"/>\n";
  }

  void text(double x, double y, const std::string& s, int size = 12, const std::string& anchor = "start") {
    body_ << "<text x=\"" << num(x) << "\" y=\"" << num(y) << "\" font-size=\"" << size << "\" text-anchor=\"" << anchor
          << "\">" << escape(s) << "</text>\n";
  }

  std::string str() const {
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(w_) << "\" height=\"" << num(h_)
       << "\" font-family=\"sans-serif\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
       << body_.str() << "</svg>\n";
    return os.str();
  }

 private:
  double w_, h_;
  std::ostringstream body_;
};

}  // namespace bohm::svg
