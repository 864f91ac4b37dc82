#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace ctda {

// Minimal SVG line plots. Plots are derived views: every series written here
// also exists in a CSV next to it.
struct PlotSeries {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

struct LinePlot {
    std::string title;
    std::string x_label;
    std::string y_label;
    bool log_x = false;
    std::vector<PlotSeries> series;

    std::string render() const;
    void save(const std::filesystem::path& path) const;
};

}  // namespace ctda
