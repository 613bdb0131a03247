#include "specrec/plot.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <sstream>

#include "specrec/error.hpp"
#include "text_util.hpp"

namespace specrec {

namespace {

constexpr double kWidth = 720, kHeight = 440;
constexpr double kLeft = 70, kRight = 180, kTop = 40, kBottom = 50;
constexpr std::array<const char*, 6> kPalette{"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

std::string escape(const std::string& s) {
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

std::string num(double v) { return detail::format_sig(v, 6); }

// 1, 2 or 5 times a power of ten giving about `target` intervals.
double nice_step(double span, int target) {
    const double raw = span / target;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    for (double m : {1.0, 2.0, 5.0, 10.0}) {
        if (raw <= m * mag) return m * mag;
    }
    return 10.0 * mag;
}

} // namespace

void PlotSpec::validate() const {
    if (series.empty()) throw ArgumentError("plot needs at least one series");
    const auto& grid = series.front().spectrum.wavelengths;
    for (const auto& s : series) {
        if (s.spectrum.values.empty()) throw ArgumentError("series '" + s.label + "' is empty");
        if (s.spectrum.values.size() != s.spectrum.wavelengths.size()) {
            throw ArgumentError("series '" + s.label + "' has mismatched value and wavelength counts");
        }
        if (s.spectrum.wavelengths != grid) {
            throw ArgumentError("series '" + s.label + "' does not share the wavelength grid of '" +
                                series.front().label + "'");
        }
    }
}

std::string render_svg(const PlotSpec& spec) {
    spec.validate();
    const auto& grid = spec.series.front().spectrum.wavelengths;
    double x0 = grid.front(), x1 = grid.back();
    if (x1 <= x0) x1 = x0 + 1.0;
    double y0 = 0.0, y1 = 1.0;
    for (const auto& s : spec.series) {
        for (double v : s.spectrum.values) {
            if (std::isfinite(v)) {
                y0 = std::min(y0, v);
                y1 = std::max(y1, v);
            }
        }
    }
    const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
    auto sx = [&](double x) { return kLeft + (x - x0) / (x1 - x0) * pw; };
    auto sy = [&](double y) { return kTop + (y1 - y) / (y1 - y0) * ph; };

    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    if (!spec.title.empty()) {
        o << "<text x=\"" << num(kLeft + pw / 2) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">"
          << escape(spec.title) << "</text>\n";
    }
    o << "<g class=\"axes\" stroke=\"black\" fill=\"none\">\n";
    o << "<line x1=\"" << kLeft << "\" y1=\"" << num(kTop + ph) << "\" x2=\"" << num(kLeft + pw) << "\" y2=\""
      << num(kTop + ph) << "\"/>\n";
    o << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\"" << num(kTop + ph)
      << "\"/>\n</g>\n";

    o << "<g class=\"ticks\" font-size=\"11\">\n";
    const double xs = nice_step(x1 - x0, 6);
    for (double x = std::ceil(x0 / xs) * xs; x <= x1 + 1e-9; x += xs) {
        o << "<line x1=\"" << num(sx(x)) << "\" y1=\"" << num(kTop + ph) << "\" x2=\"" << num(sx(x)) << "\" y2=\""
          << num(kTop + ph + 5) << "\" stroke=\"black\"/>";
        o << "<text x=\"" << num(sx(x)) << "\" y=\"" << num(kTop + ph + 18) << "\" text-anchor=\"middle\">" << num(x)
          << "</text>\n";
    }
    const double ys = nice_step(y1 - y0, 5);
    for (double y = std::ceil(y0 / ys) * ys; y <= y1 + 1e-9; y += ys) {
        o << "<line x1=\"" << num(kLeft - 5) << "\" y1=\"" << num(sy(y)) << "\" x2=\"" << kLeft << "\" y2=\""
          << num(sy(y)) << "\" stroke=\"black\"/>";
        o << "<text x=\"" << num(kLeft - 8) << "\" y=\"" << num(sy(y) + 4) << "\" text-anchor=\"end\">" << num(y)
          << "</text>\n";
    }
    o << "</g>\n";
    o << "<text x=\"" << num(kLeft + pw / 2) << "\" y=\"" << num(kHeight - 10)
      << "\" text-anchor=\"middle\">Wavelength (nm)</text>\n";
    o << "<text transform=\"translate(18 " << num(kTop + ph / 2)
      << ") rotate(-90)\" text-anchor=\"middle\">Normalized intensity</text>\n";

    for (std::size_t i = 0; i < spec.series.size(); ++i) {
        const auto& s = spec.series[i];
        const std::string color = s.style.color.empty() ? kPalette[i % kPalette.size()] : s.style.color;
        o << "<polyline class=\"series\" fill=\"none\" stroke=\"" << escape(color) << "\" stroke-width=\"1.5\"";
        if (s.style.dashed) o << " stroke-dasharray=\"6 4\"";
        o << " points=\"";
        for (std::size_t k = 0; k < grid.size(); ++k) {
            if (!std::isfinite(s.spectrum.values[k])) continue;
            o << (k ? " " : "") << num(sx(grid[k])) << "," << num(sy(s.spectrum.values[k]));
        }
        o << "\"/>\n";
    }

    o << "<g class=\"legend\">\n";
    for (std::size_t i = 0; i < spec.series.size(); ++i) {
        const auto& s = spec.series[i];
        const std::string color = s.style.color.empty() ? kPalette[i % kPalette.size()] : s.style.color;
        const double ly = kTop + 10 + 20.0 * double(i), lx = kWidth - kRight + 15;
        o << "<line x1=\"" << num(lx) << "\" y1=\"" << num(ly) << "\" x2=\"" << num(lx + 25) << "\" y2=\"" << num(ly)
          << "\" stroke=\"" << escape(color) << "\" stroke-width=\"2\"" << (s.style.dashed ? " stroke-dasharray=\"6 4\"" : "")
          << "/>";
        o << "<text class=\"legend-entry\" x=\"" << num(lx + 32) << "\" y=\"" << num(ly + 4) << "\">" << escape(s.label)
          << "</text>\n";
    }
    o << "</g>\n</svg>\n";
    return o.str();
}

void render_plot(const PlotSpec& spec) {
    const auto svg = render_svg(spec);
    std::ofstream f(spec.output_path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write plot '" + spec.output_path.string() + "'");
    f << svg;
    if (!f) throw IoError("failed writing plot '" + spec.output_path.string() + "'");
}

} // namespace specrec
