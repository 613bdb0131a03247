#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "specrec/error.hpp"
#include "specrec/spectral.hpp"
#include "util.hpp"

using namespace specrec;

namespace {

Spectrum flat(std::size_t n, double v) { return {std::vector<double>(n, v), uniform_wavelengths(n), {}}; }

// Second differences written out directly.
double roughness_oracle(const std::vector<double>& y) {
    double s = 0.0;
    for (std::size_t j = 0; j + 2 < y.size(); ++j) {
        const double d = y[j + 2] - 2 * y[j + 1] + y[j];
        s += d * d;
    }
    return s / double(y.size() - 2);
}

Eigen::VectorXd dense_smooth(const std::vector<double>& y, double lambda) {
    const auto n = Eigen::Index(y.size());
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(n - 2, n);
    for (Eigen::Index i = 0; i < n - 2; ++i) {
        D(i, i) = 1;
        D(i, i + 1) = -2;
        D(i, i + 2) = 1;
    }
    const Eigen::MatrixXd A = Eigen::MatrixXd::Identity(n, n) + lambda * D.transpose() * D;
    return A.fullPivLu().solve(Eigen::Map<const Eigen::VectorXd>(y.data(), n));
}

} // namespace

TEST_CASE("reflectance arithmetic") {
    SpectralCube p(1, 1, 1, std::vector<float>{0.6f}, uniform_wavelengths(1));
    auto r = normalize_cube(p, flat(1, 1.1), flat(1, 0.1));
    CHECK(r.cube.at(0, 0, 0) == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(r.cube.kind() == CubeKind::reflectance);

    SpectralCube white(1, 1, 1, std::vector<float>{0.75f}, uniform_wavelengths(1));
    CHECK(normalize_cube(white, flat(1, 0.75), flat(1, 0.0)).cube.at(0, 0, 0) == 1.0f);
}

TEST_CASE("reflectance clamps and reports degenerate bands") {
    SpectralCube p(3, 1, 2, std::vector<float>{0.5f, 9.0f, 0.2f, 0.3f, -1.0f, 0.4f}, uniform_wavelengths(3));
    Spectrum white{{1.0, 0.1, 1.0}, uniform_wavelengths(3), {}};
    Spectrum dark{{0.0, 0.1, 0.0}, uniform_wavelengths(3), {}};
    const auto r = normalize_cube(p, white, dark, 2.0);
    CHECK(r.degenerate_bands == std::vector<std::size_t>{1});
    CHECK(r.cube.at(1, 0, 0) == 0.0f);
    CHECK(r.cube.at(1, 0, 1) == 0.0f);
    CHECK(r.cube.at(0, 0, 1) == 2.0f);
    CHECK(r.cube.at(2, 0, 0) == 0.0f);
    CHECK(r.clipped_count == 2);
    CHECK_THROWS_AS(normalize_cube(p, dark, dark), NormalizationError);
    CHECK_THROWS_AS(normalize_cube(p, flat(2, 1.0), flat(2, 0.0)), ArgumentError);
}

TEST_CASE("roughness of the alternating sequence") {
    const std::vector<double> y{0, 1, 0, 1};
    CHECK(roughness_oracle(y) == 4.0);
    CHECK(roughness(y) == 4.0);
    CHECK(roughness(y, RoughnessForm::unsquared) == 0.0);
    CHECK_THROWS_AS(roughness(std::vector<double>{1, 2}), ArgumentError);
}

TEST_CASE("roughness ignores affine trends") {
    std::mt19937_64 rng(7);
    for (int t = 0; t < 200; ++t) {
        const auto n = std::uniform_int_distribution<std::size_t>(3, 120)(rng);
        const auto y = testutil::random_vector(n, rng);
        const auto ab = testutil::random_vector(2, rng, -3, 3);
        std::vector<double> affine(n), shifted(n);
        for (std::size_t i = 0; i < n; ++i) {
            affine[i] = ab[0] + ab[1] * double(i);
            shifted[i] = y[i] + affine[i];
        }
        CHECK(roughness(affine) <= 1e-12);
        CHECK(std::abs(roughness(shifted) - roughness(y)) <= 1e-12);
        CHECK(std::abs(roughness(y) - roughness_oracle(y)) <= 1e-14);
    }
}

TEST_CASE("roughness gradient matches finite differences") {
    std::mt19937_64 rng(8);
    for (auto form : {RoughnessForm::squared, RoughnessForm::unsquared}) {
        for (int t = 0; t < 20; ++t) {
            auto y = testutil::random_vector(3 + t, rng);
            const auto g = roughness_gradient(y, form);
            for (std::size_t i = 0; i < y.size(); ++i) {
                const double h = 1e-6, old = y[i];
                y[i] = old + h;
                const double up = roughness(y, form);
                y[i] = old - h;
                const double down = roughness(y, form);
                y[i] = old;
                CHECK(g[i] == doctest::Approx((up - down) / (2 * h)).epsilon(1e-6).scale(1.0));
            }
        }
    }
}

TEST_CASE("smoothing spline") {
    std::mt19937_64 rng(9);
    const auto y = testutil::random_vector(51, rng);
    CHECK(smooth_values(y, 0.0) == y);

    const auto f = smooth_values(y, 1.0);
    const auto oracle = dense_smooth(y, 1.0);
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(std::abs(f[i] - oracle[Eigen::Index(i)]) <= 1e-8);

    CHECK_THROWS_AS(smooth_values(y, -1.0), ArgumentError);
    CHECK_THROWS_AS(smooth_values(y, std::nan("")), ArgumentError);
}

TEST_CASE("smoothing tends to the least-squares line") {
    std::mt19937_64 rng(10);
    const auto y = testutil::random_vector(40, rng);
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = 40;
    for (std::size_t i = 0; i < 40; ++i) {
        sx += double(i);
        sy += y[i];
        sxx += double(i * i);
        sxy += double(i) * y[i];
    }
    const double b = (n * sxy - sx * sy) / (n * sxx - sx * sx), a = (sy - b * sx) / n;
    const auto f = smooth_values(y, 1e9);
    for (std::size_t i = 0; i < 40; ++i) CHECK(f[i] == doctest::Approx(a + b * double(i)).epsilon(1e-4).scale(1.0));
}

TEST_CASE("smoothing trades residual for roughness monotonically") {
    std::mt19937_64 rng(12);
    for (int t = 0; t < 20; ++t) {
        Spectrum s{testutil::random_vector(60, rng), uniform_wavelengths(60), {}};
        double last_rough = INFINITY, last_res = -INFINITY;
        for (double lam : {0.0, 0.1, 1.0, 10.0, 100.0, 1e4}) {
            const auto fit = smooth_spectrum(s, lam);
            CHECK(fit.roughness <= last_rough);
            CHECK(fit.residual_ss >= last_res);
            if (lam > 0) CHECK(fit.roughness <= roughness(s));
            last_rough = fit.roughness;
            last_res = fit.residual_ss;
        }
    }
}
