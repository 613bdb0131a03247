#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "specrec/hsio.hpp"

namespace specrec {

// |l - d| at or below this marks a band as degenerate.
inline constexpr double kDegenerateEpsilon = 1e-9;
inline constexpr double kDefaultClampMax = 2.0;

struct ReflectanceResult {
    SpectralCube cube;                         // kind == reflectance
    std::size_t clipped_count = 0;             // pixel-band values clamped into [0, clamp_max]
    std::vector<std::size_t> degenerate_bands; // filled with 0 in `cube`
};

/// Converts radiance to reflectance with s = (p - d) / (l - d), band by band.
///
/// `white` is the signal a flat white reference would record under the scene
/// illumination (illumination plus dark offset); `dark` is the sensor baseline.
/// Results are clamped to [0, clamp_max]. Throws ArgumentError on band-count
/// mismatch and NormalizationError when every band is degenerate.
ReflectanceResult normalize_cube(const SpectralCube& radiance, const Spectrum& white, const Spectrum& dark,
                                 double clamp_max = kDefaultClampMax);

enum class RoughnessForm {
    squared,  // mean of squared second differences
    unsquared // mean of raw second differences, kept for comparison
};

std::string_view to_string(RoughnessForm form);
RoughnessForm parse_roughness_form(std::string_view text);

// (1/K) * sum_j (y[j+2] - 2 y[j+1] + y[j])^2 with K = N - 2. Requires N >= 3.
double roughness(std::span<const double> y, RoughnessForm form = RoughnessForm::squared);
inline double roughness(const Spectrum& s, RoughnessForm form = RoughnessForm::squared) {
    return roughness(s.values, form);
}

// d roughness / d y, same length as y.
std::vector<double> roughness_gradient(std::span<const double> y, RoughnessForm form = RoughnessForm::squared);

struct SplineFit {
    Spectrum smoothed;
    double lambda = 0.0;
    double residual_ss = 0.0;
    double roughness = 0.0;
};

/// Discrete cubic smoothing spline (Whittaker smoother): minimises
/// sum (y - f)^2 + lambda * sum (second difference of f)^2 by solving the
/// pentadiagonal system (I + lambda D'D) f = y.
SplineFit smooth_spectrum(const Spectrum& y, double lambda);
std::vector<double> smooth_values(std::span<const double> y, double lambda);

} // namespace specrec
