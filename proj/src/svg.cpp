#include "batchflip/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace batchflip::svg {

namespace {

// Chart frame shared by all chart kinds.
constexpr double kMarginLeft = 80.0;
constexpr double kMarginRight = 30.0;
constexpr double kMarginTop = 50.0;
constexpr double kMarginBottom = 70.0;
constexpr double kPlotW = kWidth - kMarginLeft - kMarginRight;
constexpr double kPlotH = kHeight - kMarginTop - kMarginBottom;

std::string fmt_tick(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

}  // namespace

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

std::string escape(const std::string& text) {
    std::string out;
    out.reserve(text.size());
    for (char c : text) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out.push_back(c);
        }
    }
    return out;
}

Document::Document() {
    body_ +=
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 800 500\" "
        "width=\"800\" height=\"500\">\n";
    body_ += "<rect x=\"0\" y=\"0\" width=\"800\" height=\"500\" "
             "fill=\"#ffffff\"/>\n";
}

void Document::line(double x1, double y1, double x2, double y2,
                    const std::string& stroke, double width, bool dashed) {
    body_ += "<line x1=\"" + fmt(x1) + "\" y1=\"" + fmt(y1) + "\" x2=\"" +
             fmt(x2) + "\" y2=\"" + fmt(y2) + "\" stroke=\"" + stroke +
             "\" stroke-width=\"" + fmt(width) + "\"";
    if (dashed) body_ += " stroke-dasharray=\"6 4\"";
    body_ += "/>\n";
}

void Document::rect(double x, double y, double w, double h,
                    const std::string& fill, const std::string& stroke) {
    body_ += "<rect x=\"" + fmt(x) + "\" y=\"" + fmt(y) + "\" width=\"" +
             fmt(w) + "\" height=\"" + fmt(h) + "\" fill=\"" + fill + "\"";
    if (!stroke.empty()) body_ += " stroke=\"" + stroke + "\"";
    body_ += "/>\n";
}

void Document::circle(double cx, double cy, double r, const std::string& fill) {
    body_ += "<circle cx=\"" + fmt(cx) + "\" cy=\"" + fmt(cy) + "\" r=\"" +
             fmt(r) + "\" fill=\"" + fill + "\"/>\n";
}

void Document::text(double x, double y, const std::string& content,
                    double size, const std::string& anchor,
                    const std::string& fill) {
    body_ += "<text x=\"" + fmt(x) + "\" y=\"" + fmt(y) +
             "\" font-family=\"sans-serif\" font-size=\"" + fmt(size) +
             "\" text-anchor=\"" + anchor + "\" fill=\"" + fill + "\">" +
             escape(content) + "</text>\n";
}

std::string Document::finish() const { return body_ + "</svg>\n"; }

namespace {

void draw_frame(Document& doc, const std::string& title) {
    doc.text(kWidth / 2.0, 28.0, title, 16, "middle");
    doc.line(kMarginLeft, kMarginTop, kMarginLeft, kMarginTop + kPlotH,
             "#444444");
    doc.line(kMarginLeft, kMarginTop + kPlotH, kMarginLeft + kPlotW,
             kMarginTop + kPlotH, "#444444");
}

void y_ticks(Document& doc, double y_min, double y_max,
             const std::string& y_label) {
    const int ticks = 5;
    for (int i = 0; i <= ticks; ++i) {
        const double v = y_min + (y_max - y_min) * i / ticks;
        const double y = kMarginTop + kPlotH - kPlotH * i / ticks;
        doc.line(kMarginLeft - 4, y, kMarginLeft, y, "#444444");
        doc.text(kMarginLeft - 8, y + 4, fmt_tick(v), 11, "end");
        if (i > 0)
            doc.line(kMarginLeft, y, kMarginLeft + kPlotW, y, "#dddddd", 0.5);
    }
    doc.text(16.0, kMarginTop - 12.0, y_label, 12, "start");
}

}  // namespace

std::string bar_chart(const std::string& title,
                      const std::vector<std::string>& categories,
                      const std::vector<Series>& series, double y_max,
                      const std::string& y_label) {
    Document doc;
    draw_frame(doc, title);
    if (y_max <= 0.0) y_max = 1.0;
    y_ticks(doc, 0.0, y_max, y_label);

    const std::size_t ncat = categories.size();
    const std::size_t nser = std::max<std::size_t>(1, series.size());
    const double group_w = kPlotW / std::max<std::size_t>(1, ncat);
    const double bar_w = group_w * 0.7 / static_cast<double>(nser);

    for (std::size_t c = 0; c < ncat; ++c) {
        const double gx = kMarginLeft + group_w * static_cast<double>(c) +
                          group_w * 0.15;
        for (std::size_t s = 0; s < series.size(); ++s) {
            if (c >= series[s].values.size()) continue;
            const double v = std::clamp(series[s].values[c], 0.0, y_max);
            const double h = kPlotH * v / y_max;
            doc.rect(gx + bar_w * static_cast<double>(s),
                     kMarginTop + kPlotH - h, bar_w, h, series[s].color);
        }
        doc.text(kMarginLeft + group_w * (static_cast<double>(c) + 0.5),
                 kMarginTop + kPlotH + 18.0, categories[c], 11, "middle");
    }
    // Legend.
    double lx = kMarginLeft + 8.0;
    for (const auto& s : series) {
        doc.rect(lx, kMarginTop + 6.0, 10, 10, s.color);
        doc.text(lx + 14.0, kMarginTop + 15.0, s.label, 11);
        lx += 24.0 + 7.0 * static_cast<double>(s.label.size());
    }
    return doc.finish();
}

std::string ranking_chart(const std::string& title,
                          const std::vector<ErrorBar>& bars,
                          const std::string& x_label) {
    Document doc;
    doc.text(kWidth / 2.0, 28.0, title, 16, "middle");
    double x_max = 0.0;
    for (const auto& b : bars) x_max = std::max(x_max, b.hi);
    if (x_max <= 0.0) x_max = 1.0;
    x_max *= 1.05;

    const double left = 170.0;
    const double plot_w = kWidth - left - kMarginRight;
    const double row_h =
        std::min(34.0, kPlotH / std::max<std::size_t>(1, bars.size()));
    doc.line(left, kMarginTop, left, kMarginTop + kPlotH, "#444444");
    doc.line(left, kMarginTop + kPlotH, left + plot_w, kMarginTop + kPlotH,
             "#444444");
    for (int i = 0; i <= 5; ++i) {
        const double v = x_max * i / 5;
        const double x = left + plot_w * i / 5;
        doc.line(x, kMarginTop + kPlotH, x, kMarginTop + kPlotH + 4, "#444444");
        doc.text(x, kMarginTop + kPlotH + 18.0, fmt_tick(v), 11, "middle");
    }
    doc.text(left + plot_w / 2.0, kHeight - 16.0, x_label, 12, "middle");

    for (std::size_t i = 0; i < bars.size(); ++i) {
        const auto& b = bars[i];
        const double cy = kMarginTop + row_h * (static_cast<double>(i) + 0.5);
        const double w = plot_w * std::clamp(b.value / x_max, 0.0, 1.0);
        doc.rect(left, cy - row_h * 0.3, w, row_h * 0.6, "#4878a8");
        const double x_lo = left + plot_w * std::clamp(b.lo / x_max, 0.0, 1.0);
        const double x_hi = left + plot_w * std::clamp(b.hi / x_max, 0.0, 1.0);
        doc.line(x_lo, cy, x_hi, cy, "#222222", 1.5);
        doc.line(x_lo, cy - 4, x_lo, cy + 4, "#222222", 1.5);
        doc.line(x_hi, cy - 4, x_hi, cy + 4, "#222222", 1.5);
        doc.text(left - 6.0, cy + 4.0, b.label, 11, "end");
    }
    return doc.finish();
}

std::string scatter_chart(const std::string& title,
                          const std::vector<Point>& points, double slope,
                          double intercept, const std::string& x_label,
                          const std::string& y_label) {
    Document doc;
    draw_frame(doc, title);
    double x_max = 0.0, y_max = 0.0;
    for (const auto& p : points) {
        x_max = std::max(x_max, p.x);
        y_max = std::max(y_max, p.y);
    }
    if (x_max <= 0.0) x_max = 1.0;
    if (y_max <= 0.0) y_max = 1.0;
    x_max *= 1.1;
    y_max *= 1.1;
    y_ticks(doc, 0.0, y_max, y_label);
    for (int i = 0; i <= 5; ++i) {
        const double v = x_max * i / 5;
        const double x = kMarginLeft + kPlotW * i / 5;
        doc.line(x, kMarginTop + kPlotH, x, kMarginTop + kPlotH + 4, "#444444");
        doc.text(x, kMarginTop + kPlotH + 18.0, fmt_tick(v), 11, "middle");
    }
    doc.text(kMarginLeft + kPlotW / 2.0, kHeight - 16.0, x_label, 12, "middle");

    auto sx = [&](double v) { return kMarginLeft + kPlotW * v / x_max; };
    auto sy = [&](double v) { return kMarginTop + kPlotH * (1.0 - v / y_max); };

    // Least-squares line clipped to the plot range.
    const double y0 = intercept;
    const double y1 = slope * x_max + intercept;
    doc.line(sx(0.0), sy(std::clamp(y0, 0.0, y_max)), sx(x_max),
             sy(std::clamp(y1, 0.0, y_max)), "#b04030", 1.5, true);

    for (const auto& p : points) {
        doc.circle(sx(p.x), sy(p.y), 4.0, "#4878a8");
        if (!p.label.empty())
            doc.text(sx(p.x) + 6.0, sy(p.y) - 6.0, p.label, 9);
    }
    return doc.finish();
}

std::string zoomed_bar_chart(const std::string& title,
                             const std::vector<std::string>& categories,
                             const std::vector<double>& values, double y_min,
                             double y_max, const std::string& y_label) {
    Document doc;
    draw_frame(doc, title);
    for (double v : values) y_min = std::min(y_min, v);
    if (y_max <= y_min) y_max = y_min + 1.0;
    y_ticks(doc, y_min, y_max, y_label);

    const std::size_t ncat = categories.size();
    const double group_w = kPlotW / std::max<std::size_t>(1, ncat);
    for (std::size_t c = 0; c < ncat && c < values.size(); ++c) {
        const double v = std::clamp(values[c], y_min, y_max);
        const double h = kPlotH * (v - y_min) / (y_max - y_min);
        doc.rect(kMarginLeft + group_w * static_cast<double>(c) +
                     group_w * 0.2,
                 kMarginTop + kPlotH - h, group_w * 0.6, h, "#55886a");
        doc.text(kMarginLeft + group_w * (static_cast<double>(c) + 0.5),
                 kMarginTop + kPlotH + 18.0, categories[c], 11, "middle");
    }
    doc.text(kMarginLeft + kPlotW / 2.0, kHeight - 16.0,
             "axis zoomed to [" + fmt_tick(y_min) + ", " + fmt_tick(y_max) +
                 "]",
             10, "middle", "#666666");
    return doc.finish();
}

}  // namespace batchflip::svg
