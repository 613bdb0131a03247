#include <doctest.h>

#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include "specrec/error.hpp"
#include "specrec/plot.hpp"
#include "util.hpp"

using namespace specrec;

namespace {

Spectrum ramp(double a, double b, std::size_t n = 204) {
    Spectrum s;
    s.wavelengths = uniform_wavelengths(n);
    for (std::size_t i = 0; i < n; ++i) s.values.push_back(a + b * double(i) / double(n - 1));
    return s;
}

std::vector<std::string> polylines(const std::string& svg) {
    std::vector<std::string> out;
    const std::regex re("<polyline class=\"series\"[^>]*points=\"([^\"]*)\"");
    for (auto it = std::sregex_iterator(svg.begin(), svg.end(), re); it != std::sregex_iterator(); ++it)
        out.push_back((*it)[1]);
    return out;
}

std::size_t count(const std::string& s, const std::string& what) {
    std::size_t n = 0;
    for (auto p = s.find(what); p != std::string::npos; p = s.find(what, p + 1)) ++n;
    return n;
}

} // namespace

TEST_CASE("a constant spectrum draws a horizontal line") {
    PlotSpec p;
    p.series.push_back({"flat", ramp(0.5, 0.0), {}});
    const auto lines = polylines(render_svg(p));
    REQUIRE(lines.size() == 1);
    std::istringstream in(lines[0]);
    std::set<std::string> ys;
    std::string pt;
    std::size_t points = 0;
    while (in >> pt) {
        ys.insert(pt.substr(pt.find(',') + 1));
        ++points;
    }
    CHECK(points == 204);
    CHECK(ys.size() == 1);
}

TEST_CASE("actual and predicted series with a legend") {
    PlotSpec p;
    p.title = "scene <7> & co";
    p.series.push_back({"actual", ramp(0.0, 1.0), {}});
    p.series.push_back({"predicted", ramp(0.1, 0.8), {"", true}});
    const auto svg = render_svg(p);
    CHECK(polylines(svg).size() == 2);
    CHECK(count(svg, "class=\"legend-entry\"") == 2);
    CHECK(count(svg, "stroke-dasharray") >= 1);
    CHECK(svg.find("Wavelength (nm)") != std::string::npos);
    CHECK(svg.find("Normalized intensity") != std::string::npos);
    CHECK(svg.find("scene &lt;7&gt; &amp; co") != std::string::npos);
    CHECK(svg.rfind("<svg", 0) == 0);
}

TEST_CASE("plot argument and output errors") {
    PlotSpec p;
    CHECK_THROWS_AS(render_svg(p), ArgumentError);
    p.series.push_back({"a", ramp(0, 1), {}});
    p.series.push_back({"b", ramp(0, 1, 51), {}});
    CHECK_THROWS_AS(render_svg(p), ArgumentError);
    p.series.pop_back();
    auto broken = ramp(0, 1);
    broken.values.pop_back();
    p.series.push_back({"c", broken, {}});
    CHECK_THROWS_AS(render_svg(p), ArgumentError);
    p.series.pop_back();

    p.output_path = "/nonexistent-dir/plot.svg";
    CHECK_THROWS_AS(render_plot(p), IoError);

    testutil::TempDir dir("plot");
    p.output_path = dir / "p.svg";
    render_plot(p);
    std::ifstream f(p.output_path);
    std::stringstream ss;
    ss << f.rdbuf();
    CHECK(ss.str() == render_svg(p));
}
