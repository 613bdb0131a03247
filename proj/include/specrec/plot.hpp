#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "specrec/hsio.hpp"

namespace specrec {

struct SeriesStyle {
    std::string color; // empty = palette colour by index
    bool dashed = false;
};

struct PlotSeries {
    std::string label;
    Spectrum spectrum;
    SeriesStyle style;
};

struct PlotSpec {
    std::vector<PlotSeries> series;
    std::string title;
    std::filesystem::path output_path;

    // ArgumentError without series or when wavelength grids differ.
    void validate() const;
};

// Self-contained SVG: wavelength (nm) against normalised intensity, one
// polyline and one legend entry per series.
std::string render_svg(const PlotSpec& spec);
void render_plot(const PlotSpec& spec); // writes output_path; IoError on failure

} // namespace specrec
