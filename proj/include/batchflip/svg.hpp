#pragma once

#include <string>
#include <vector>

namespace batchflip::svg {

// Minimal deterministic SVG writer: fixed 800x500 viewBox, all coordinates
// formatted with two decimals so identical inputs give identical bytes.

constexpr double kWidth = 800.0;
constexpr double kHeight = 500.0;

std::string fmt(double v);        // "%.2f"
std::string escape(const std::string& text);

class Document {
  public:
    Document();
    void line(double x1, double y1, double x2, double y2,
              const std::string& stroke, double width = 1.0,
              bool dashed = false);
    void rect(double x, double y, double w, double h, const std::string& fill,
              const std::string& stroke = "");
    void circle(double cx, double cy, double r, const std::string& fill);
    void text(double x, double y, const std::string& content, double size = 12,
              const std::string& anchor = "start",
              const std::string& fill = "#222222");
    std::string finish() const;

  private:
    std::string body_;
};

struct Series {
    std::string label;
    std::vector<double> values;
    std::string color;
};

// Grouped bar chart with labeled categories; y range [0, y_max].
std::string bar_chart(const std::string& title,
                      const std::vector<std::string>& categories,
                      const std::vector<Series>& series, double y_max,
                      const std::string& y_label);

struct ErrorBar {
    std::string label;
    double value = 0.0;
    double lo = 0.0;
    double hi = 0.0;
};

// Horizontal ranking with error bars, pre-sorted by the caller.
std::string ranking_chart(const std::string& title,
                          const std::vector<ErrorBar>& bars,
                          const std::string& x_label);

struct Point {
    double x = 0.0;
    double y = 0.0;
    std::string label;
};

// Scatter with a least-squares line (slope/intercept supplied by caller so
// the chart stays a pure view of the analysis output).
std::string scatter_chart(const std::string& title,
                          const std::vector<Point>& points, double slope,
                          double intercept, const std::string& x_label,
                          const std::string& y_label);

// Bar chart with a zoomed y-axis [y_min, y_max] (agreement-style view).
std::string zoomed_bar_chart(const std::string& title,
                             const std::vector<std::string>& categories,
                             const std::vector<double>& values, double y_min,
                             double y_max, const std::string& y_label);

}  // namespace batchflip::svg
