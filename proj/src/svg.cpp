#include "trialz/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace trialz::svg {

namespace {

constexpr double kWidth = 640, kHeight = 420;
constexpr double kLeft = 64, kRight = 150, kTop = 40, kBottom = 56;

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string tick_label(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", std::fabs(v) < 1e-12 ? 0.0 : v);
    return buf;
}

struct Frame {
    double x0, x1, y0, y1;
    double px(double x) const { return kLeft + (x - x0) / (x1 - x0) * (kWidth - kLeft - kRight); }
    double py(double y) const { return kHeight - kBottom - (y - y0) / (y1 - y0) * (kHeight - kTop - kBottom); }
};

double nice_step(double span) {
    const double raw = span / 5.0;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    for (double m : {1.0, 2.0, 5.0, 10.0})
        if (m * mag >= raw) return m * mag;
    return 10.0 * mag;
}

std::string header(const std::string& title) {
    std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" +
                    num(kHeight) + "\" viewBox=\"0 0 " + num(kWidth) + " " + num(kHeight) + "\">\n";
    s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s += "<text x=\"" + num(kWidth / 2) + "\" y=\"22\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"15\">" + escape(title) + "</text>\n";
    return s;
}

std::string axes(const Frame& f, const std::string& x_label, const std::string& y_label, bool x_ticks = true) {
    std::string s;
    s += "<line x1=\"" + num(f.px(f.x0)) + "\" y1=\"" + num(f.py(f.y0)) + "\" x2=\"" + num(f.px(f.x1)) +
         "\" y2=\"" + num(f.py(f.y0)) + "\" stroke=\"black\"/>\n";
    s += "<line x1=\"" + num(f.px(f.x0)) + "\" y1=\"" + num(f.py(f.y0)) + "\" x2=\"" + num(f.px(f.x0)) +
         "\" y2=\"" + num(f.py(f.y1)) + "\" stroke=\"black\"/>\n";
    if (x_ticks) {
        const double st = nice_step(f.x1 - f.x0);
        for (double t = std::ceil(f.x0 / st) * st; t <= f.x1 + 1e-9; t += st)
            s += "<text x=\"" + num(f.px(t)) + "\" y=\"" + num(f.py(f.y0) + 16) +
                 "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" + tick_label(t) +
                 "</text>\n";
    }
    const double sy = nice_step(f.y1 - f.y0);
    for (double t = std::ceil(f.y0 / sy) * sy; t <= f.y1 + 1e-9; t += sy)
        s += "<text x=\"" + num(f.px(f.x0) - 6) + "\" y=\"" + num(f.py(t) + 4) +
             "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" + tick_label(t) + "</text>\n";
    s += "<text x=\"" + num((f.px(f.x0) + f.px(f.x1)) / 2) + "\" y=\"" + num(kHeight - 14) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" + escape(x_label) + "</text>\n";
    s += "<text transform=\"translate(16," + num((f.py(f.y0) + f.py(f.y1)) / 2) +
         ") rotate(-90)\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" + escape(y_label) +
         "</text>\n";
    return s;
}

std::string legend(const std::vector<std::pair<std::string, std::string>>& entries) {
    std::string s;
    double y = kTop + 10;
    for (const auto& [label, color] : entries) {
        s += "<rect x=\"" + num(kWidth - kRight + 12) + "\" y=\"" + num(y - 9) +
             "\" width=\"12\" height=\"10\" fill=\"" + color + "\"/>\n";
        s += "<text x=\"" + num(kWidth - kRight + 30) + "\" y=\"" + num(y) +
             "\" font-family=\"sans-serif\" font-size=\"11\">" + escape(label) + "</text>\n";
        y += 18;
    }
    return s;
}

}  // namespace

std::string escape(const std::string& text) {
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

std::string line_plot(const std::string& title, const std::string& x_label, const std::string& y_label,
                      const std::vector<Series>& series, std::optional<double> vertical_line) {
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y1 = 0.0;
    for (const auto& s : series) {
        for (double x : s.x) x0 = std::min(x0, x), x1 = std::max(x1, x);
        for (double y : s.y)
            if (std::isfinite(y)) y1 = std::max(y1, y);
    }
    if (!std::isfinite(x0)) x0 = 0, x1 = 1;
    if (x1 <= x0) x1 = x0 + 1;
    if (y1 <= 0) y1 = 1;
    const Frame f{x0, x1, 0.0, y1 * 1.05};
    std::string s = header(title) + axes(f, x_label, y_label);
    if (vertical_line && *vertical_line >= x0 && *vertical_line <= x1)
        s += "<line x1=\"" + num(f.px(*vertical_line)) + "\" y1=\"" + num(f.py(f.y0)) + "\" x2=\"" +
             num(f.px(*vertical_line)) + "\" y2=\"" + num(f.py(f.y1)) +
             "\" stroke=\"gray\" stroke-dasharray=\"4,3\"/>\n";
    std::vector<std::pair<std::string, std::string>> entries;
    for (const auto& se : series) {
        std::string pts;
        for (std::size_t i = 0; i < se.x.size() && i < se.y.size(); ++i) {
            if (!std::isfinite(se.y[i])) continue;
            pts += num(f.px(se.x[i])) + "," + num(f.py(se.y[i])) + " ";
        }
        s += "<polyline fill=\"none\" stroke=\"" + se.color + "\" stroke-width=\"1.6\"" +
             (se.dashed ? " stroke-dasharray=\"5,3\"" : "") + " points=\"" + pts + "\"/>\n";
        if (!se.label.empty()) entries.emplace_back(se.label, se.color);
    }
    return s + legend(entries) + "</svg>\n";
}

std::string stacked_bars(const std::string& title, const std::vector<std::string>& segment_labels,
                         const std::vector<Bar>& bars, const std::string& y_label) {
    double top = 0.0;
    for (const auto& b : bars) {
        double sum = 0.0;
        for (double v : b.segments) sum += std::max(0.0, v);
        top = std::max(top, sum);
    }
    if (top <= 0) top = 1;
    const Frame f{0.0, static_cast<double>(std::max<std::size_t>(bars.size(), 1)), 0.0, top * 1.05};
    std::string s = header(title) + axes(f, "", y_label, false);
    const double slot = (f.px(1) - f.px(0));
    for (std::size_t i = 0; i < bars.size(); ++i) {
        double base = 0.0;
        for (std::size_t k = 0; k < bars[i].segments.size(); ++k) {
            const double v = std::max(0.0, bars[i].segments[k]);
            const double ytop = f.py(base + v), ybot = f.py(base);
            s += "<rect x=\"" + num(f.px(static_cast<double>(i)) + slot * 0.2) + "\" y=\"" + num(ytop) +
                 "\" width=\"" + num(slot * 0.6) + "\" height=\"" + num(ybot - ytop) + "\" fill=\"" +
                 kPalette[k % 6] + "\"/>\n";
            base += v;
        }
        s += "<text x=\"" + num(f.px(i + 0.5)) + "\" y=\"" + num(f.py(0) + 16) +
             "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" + escape(bars[i].label) +
             "</text>\n";
    }
    std::vector<std::pair<std::string, std::string>> entries;
    for (std::size_t k = 0; k < segment_labels.size(); ++k) entries.emplace_back(segment_labels[k], kPalette[k % 6]);
    return s + legend(entries) + "</svg>\n";
}

std::string histogram(const std::string& title, const std::string& x_label, const std::vector<double>& values,
                      int bins, double lo, double hi) {
    if (bins < 1 || !(hi > lo)) bins = 1, hi = lo + 1;
    std::vector<double> counts(static_cast<std::size_t>(bins), 0.0);
    const double w = (hi - lo) / bins;
    for (double v : values) {
        if (!std::isfinite(v)) continue;
        auto k = static_cast<long>(std::floor((v - lo) / w));
        k = std::clamp<long>(k, 0, bins - 1);
        counts[static_cast<std::size_t>(k)] += 1.0;
    }
    double top = *std::max_element(counts.begin(), counts.end());
    if (top <= 0) top = 1;
    const Frame f{lo, hi, 0.0, top * 1.1};
    std::string s = header(title) + axes(f, x_label, "count");
    for (int k = 0; k < bins; ++k) {
        const double c = counts[static_cast<std::size_t>(k)];
        s += "<rect x=\"" + num(f.px(lo + k * w)) + "\" y=\"" + num(f.py(c)) + "\" width=\"" +
             num(f.px(lo + (k + 1) * w) - f.px(lo + k * w)) + "\" height=\"" + num(f.py(0) - f.py(c)) +
             "\" fill=\"#1f77b4\" stroke=\"white\"/>\n";
    }
    return s + "</svg>\n";
}

}  // namespace trialz::svg
