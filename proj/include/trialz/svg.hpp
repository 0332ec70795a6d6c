#pragma once

#include <optional>
#include <string>
#include <vector>

namespace trialz::svg {

struct Series {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
    std::string color = "#1f77b4";
    bool dashed = false;
};

std::string line_plot(const std::string& title, const std::string& x_label, const std::string& y_label,
                      const std::vector<Series>& series, std::optional<double> vertical_line = std::nullopt);

struct Bar {
    std::string label;
    std::vector<double> segments;  // stacked bottom to top
};

std::string stacked_bars(const std::string& title, const std::vector<std::string>& segment_labels,
                         const std::vector<Bar>& bars, const std::string& y_label = "");

/// Histogram of `values` with `bins` equal-width bins over [lo, hi].
std::string histogram(const std::string& title, const std::string& x_label, const std::vector<double>& values,
                      int bins, double lo, double hi);

std::string escape(const std::string& text);

}  // namespace trialz::svg
