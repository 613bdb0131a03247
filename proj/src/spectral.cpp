#include "specrec/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "specrec/error.hpp"
#include "text_util.hpp"

namespace specrec {

ReflectanceResult normalize_cube(const SpectralCube& radiance, const Spectrum& white, const Spectrum& dark,
                                 double clamp_max) {
    if (white.size() != radiance.bands() || dark.size() != radiance.bands()) {
        throw ArgumentError("band count mismatch: cube has " + std::to_string(radiance.bands()) +
                            ", illuminant " + std::to_string(white.size()) + ", dark " +
                            std::to_string(dark.size()));
    }
    if (!(clamp_max > 0.0)) throw ArgumentError("clamp_max must be positive");

    ReflectanceResult result{SpectralCube(radiance.bands(), radiance.height(), radiance.width(),
                                          radiance.wavelengths(), CubeKind::reflectance),
                             0, {}};
    result.cube.set_mask(radiance.mask());

    const std::size_t npix = radiance.pixels();
    auto out = result.cube.data();
    auto in = radiance.data();
    for (std::size_t b = 0; b < radiance.bands(); ++b) {
        const double denom = white.values[b] - dark.values[b];
        if (!(std::abs(denom) > kDegenerateEpsilon)) {
            result.degenerate_bands.push_back(b);
            continue; // already zero
        }
        const double d = dark.values[b];
        for (std::size_t i = b * npix; i < (b + 1) * npix; ++i) {
            double s = (static_cast<double>(in[i]) - d) / denom;
            if (s < 0.0 || s > clamp_max || std::isnan(s)) {
                ++result.clipped_count;
                s = std::isnan(s) ? 0.0 : std::clamp(s, 0.0, clamp_max);
            }
            out[i] = static_cast<float>(s);
        }
    }
    if (result.degenerate_bands.size() == radiance.bands()) {
        throw NormalizationError("every band is degenerate (|l - d| <= " + detail::format_double(kDegenerateEpsilon) +
                                 ")");
    }
    return result;
}

std::string_view to_string(RoughnessForm form) {
    return form == RoughnessForm::squared ? "squared" : "unsquared";
}

RoughnessForm parse_roughness_form(std::string_view text) {
    const auto key = detail::lower(detail::trim(text));
    if (key == "squared") return RoughnessForm::squared;
    if (key == "unsquared" || key == "literal") return RoughnessForm::unsquared;
    throw ArgumentError("unknown roughness form '" + std::string(text) + "' (expected squared|unsquared)");
}

double roughness(std::span<const double> y, RoughnessForm form) {
    if (y.size() < 3) throw ArgumentError("roughness needs at least 3 values, got " + std::to_string(y.size()));
    const std::size_t k = y.size() - 2;
    double acc = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
        const double second = (y[j + 2] - y[j + 1]) - (y[j + 1] - y[j]);
        acc += form == RoughnessForm::squared ? second * second : second;
    }
    return acc / static_cast<double>(k);
}

std::vector<double> roughness_gradient(std::span<const double> y, RoughnessForm form) {
    if (y.size() < 3) throw ArgumentError("roughness needs at least 3 values, got " + std::to_string(y.size()));
    const std::size_t k = y.size() - 2;
    const double inv_k = 1.0 / static_cast<double>(k);
    std::vector<double> g(y.size(), 0.0);
    for (std::size_t j = 0; j < k; ++j) {
        double w = inv_k;
        if (form == RoughnessForm::squared) {
            const double second = (y[j + 2] - y[j + 1]) - (y[j + 1] - y[j]);
            w = 2.0 * second * inv_k;
        }
        g[j] += w;
        g[j + 1] -= 2.0 * w;
        g[j + 2] += w;
    }
    return g;
}

std::vector<double> smooth_values(std::span<const double> y, double lambda) {
    const std::size_t n = y.size();
    if (n < 3) throw ArgumentError("smoothing needs at least 3 values, got " + std::to_string(n));
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ArgumentError("lambda must be finite and >= 0");
    for (double v : y) {
        if (!std::isfinite(v)) throw ArgumentError("smoothing input contains non-finite values");
    }
    if (lambda == 0.0) return {y.begin(), y.end()};

    // Lower band of A = I + lambda D'D: a0 diagonal, a1[i] = A(i, i-1), a2[i] = A(i, i-2).
    std::vector<double> a0(n, 1.0), a1(n, 0.0), a2(n, 0.0);
    constexpr double row[3] = {1.0, -2.0, 1.0};
    for (std::size_t j = 0; j + 2 < n; ++j) {
        for (int p = 0; p < 3; ++p) {
            a0[j + p] += lambda * row[p] * row[p];
            for (int q = 0; q < p; ++q) {
                const double v = lambda * row[p] * row[q];
                if (p - q == 1) a1[j + p] += v;
                else a2[j + p] += v;
            }
        }
    }

    // Banded Cholesky, A = L L'.
    std::vector<double> l0(n), l1(n, 0.0), l2(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        if (i >= 2) l2[i] = a2[i] / l0[i - 2];
        if (i >= 1) {
            double s = a1[i];
            if (i >= 2) s -= l2[i] * l1[i - 1];
            l1[i] = s / l0[i - 1];
        }
        const double d = a0[i] - l1[i] * l1[i] - l2[i] * l2[i];
        if (!(d > 0.0)) throw NumericalError("smoothing system is not positive definite");
        l0[i] = std::sqrt(d);
    }

    std::vector<double> z(n);
    for (std::size_t i = 0; i < n; ++i) {
        double s = y[i];
        if (i >= 1) s -= l1[i] * z[i - 1];
        if (i >= 2) s -= l2[i] * z[i - 2];
        z[i] = s / l0[i];
    }
    std::vector<double> f(n);
    for (std::size_t ii = n; ii-- > 0;) {
        double s = z[ii];
        if (ii + 1 < n) s -= l1[ii + 1] * f[ii + 1];
        if (ii + 2 < n) s -= l2[ii + 2] * f[ii + 2];
        f[ii] = s / l0[ii];
    }
    return f;
}

SplineFit smooth_spectrum(const Spectrum& y, double lambda) {
    if (y.values.size() != y.wavelengths.size()) throw ArgumentError("spectrum length mismatch");
    SplineFit fit;
    fit.lambda = lambda;
    fit.smoothed = Spectrum{smooth_values(y.values, lambda), y.wavelengths, y.label};
    double rss = 0.0;
    for (std::size_t i = 0; i < y.values.size(); ++i) {
        const double r = y.values[i] - fit.smoothed.values[i];
        rss += r * r;
    }
    fit.residual_ss = rss;
    fit.roughness = roughness(fit.smoothed.values);
    return fit;
}

} // namespace specrec
