#include <doctest.h>

#include <cstring>
#include <fstream>

#include "specrec/error.hpp"
#include "specrec/hsio.hpp"
#include "specrec/synthgen.hpp"
#include "util.hpp"

using namespace specrec;
using testutil::TempDir;

namespace {

void write_file(const std::filesystem::path& p, const std::string& bytes) {
    std::ofstream(p, std::ios::binary) << bytes;
}

std::string floats_le(std::initializer_list<float> values) {
    std::string out;
    for (float f : values) {
        unsigned char b[4];
        std::memcpy(b, &f, 4);
        out.append(reinterpret_cast<char*>(b), 4);
    }
    return out;
}

} // namespace

TEST_CASE("single pixel bsq payload reads back as its spectrum") {
    TempDir dir("hsio");
    write_file(dir / "p.hdr", "ENVI\nsamples = 1\nlines = 1\nbands = 3\ninterleave = bsq\ndata type = 4\n");
    write_file(dir / "p.img", floats_le({1.0f, 2.0f, 3.0f}));
    const auto cube = read_cube(dir / "p.hdr", dir / "p.img");
    CHECK(cube.bands() == 3);
    CHECK(cube.pixel_spectrum(0, 0) == std::vector<double>{1.0, 2.0, 3.0});
    CHECK(cube.wavelengths() == uniform_wavelengths(3));
    CHECK(cube.wavelengths().front() == 400.0);
    CHECK(cube.wavelengths().back() == 1000.0);
}

TEST_CASE("header of the camera's full frame") {
    const auto h = parse_header("ENVI\nsamples = 512\nlines = 512\nbands = 204\ndata type = 12\ninterleave = bil\n");
    CHECK(h.samples == 512);
    CHECK(h.lines == 512);
    CHECK(h.bands == 204);
    CHECK(h.data_type == DataType::u16);
    CHECK(h.interleave == Interleave::bil);
    CHECK(h.payload_bytes() == 512u * 512u * 204u * 2u);
}

TEST_CASE("header errors carry line numbers") {
    auto message = [](const std::string& text) {
        try {
            parse_header(text);
        } catch (const Error& e) {
            return std::string(e.what());
        }
        return std::string();
    };
    CHECK(message("RAW\n").find("line 1") != std::string::npos);
    CHECK(message("ENVI\nsamples = 1\nlines = x\n").find("line 3") != std::string::npos);
    CHECK(message("ENVI\nsamples = 1\nlines = 1\nbands = 1\ndata type = 5\n").find("line 5") != std::string::npos);
    CHECK_THROWS_AS(parse_header("ENVI\nsamples = 1\nlines = 1\n"), ParseError);
    CHECK_THROWS_AS(parse_header("ENVI\nsamples = 1\nlines = 1\nbands = 1\ninterleave = xyz\n"), UnsupportedFormatError);
    CHECK_THROWS_AS(parse_header("ENVI\nsamples = 1\nlines = 1\nbands = 2\nwavelength = {500, 600, 700}\n"),
                    ParseError);
}

TEST_CASE("header text round-trips") {
    CubeHeader h;
    h.samples = 7;
    h.lines = 5;
    h.bands = 3;
    h.interleave = Interleave::bip;
    h.data_type = DataType::u16;
    h.wavelengths = {410.5, 600.25, 990.0};
    const auto back = parse_header(format_header(h));
    CHECK(back.samples == 7);
    CHECK(back.lines == 5);
    CHECK(back.interleave == Interleave::bip);
    CHECK(back.data_type == DataType::u16);
    CHECK(back.wavelengths == h.wavelengths);
}

TEST_CASE("write then read is value-identical for every interleave and type") {
    TempDir dir("hsio");
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 10; ++trial) {
        std::uniform_int_distribution<std::size_t> ext(1, 6);
        for (auto dt : {DataType::f32, DataType::u16}) {
            auto cube = testutil::random_cube(ext(rng), ext(rng), ext(rng), rng, dt == DataType::u16);
            for (auto il : {Interleave::bsq, Interleave::bil, Interleave::bip}) {
                write_cube(cube, dir / "c.hdr", dir / "c.img", il, dt);
                const auto back = read_cube(dir / "c.hdr", dir / "c.img");
                CHECK(back == cube);
            }
        }
    }
}

TEST_CASE("bil and bip files of one cube agree") {
    TempDir dir("hsio");
    std::mt19937_64 rng(2);
    const auto cube = testutil::random_cube(2, 2, 2, rng);
    write_cube(cube, dir / "a.hdr", dir / "a.img", Interleave::bil);
    write_cube(cube, dir / "b.hdr", dir / "b.img", Interleave::bip);
    CHECK(read_cube(dir / "a.hdr", dir / "a.img") == read_cube(dir / "b.hdr", dir / "b.img"));
}

TEST_CASE("payload length must match the header") {
    TempDir dir("hsio");
    write_file(dir / "p.hdr", "ENVI\nsamples = 2\nlines = 1\nbands = 1\ndata type = 4\n");
    write_file(dir / "p.img", floats_le({1.0f}));
    CHECK_THROWS_AS(read_cube(dir / "p.hdr", dir / "p.img"), PayloadError);
    CHECK_THROWS_AS(read_cube(dir / "none.hdr", dir / "none.img"), IoError);
}

TEST_CASE("u16 writes refuse values they cannot store") {
    TempDir dir("hsio");
    SpectralCube c(1, 1, 2, std::vector<float>{1.5f, 2.0f}, uniform_wavelengths(1));
    CHECK_THROWS_AS(write_cube(c, dir / "c.hdr", dir / "c.img", Interleave::bsq, DataType::u16), ArgumentError);
    SpectralCube big(1, 1, 1, std::vector<float>{70000.0f}, uniform_wavelengths(1));
    CHECK_THROWS_AS(write_cube(big, dir / "c.hdr", dir / "c.img", Interleave::bsq, DataType::u16), ArgumentError);
}

TEST_CASE("cube invariants") {
    CHECK_THROWS_AS(SpectralCube(0, 2, 2, uniform_wavelengths(1)), ArgumentError);
    CHECK_THROWS_AS(SpectralCube(2, 2, 2, std::vector<double>{500.0, 400.0}), ArgumentError);
    SpectralCube c(2, 2, 2, uniform_wavelengths(2));
    CHECK_THROWS_AS(c.set_mask(std::vector<std::uint8_t>(3, 0)), ArgumentError);
    c.at(0, 0, 0) = -1.0f;
    c.set_kind(CubeKind::reflectance);
    CHECK_THROWS_AS(c.validate(), ArgumentError);
}

TEST_CASE("band downsampling keeps every factor-th band from zero") {
    std::mt19937_64 rng(3);
    const auto cube = testutil::random_cube(204, 3, 2, rng);
    const auto d = downsample_bands(cube, 4);
    REQUIRE(d.bands() == 51);
    for (std::size_t b = 0; b < 51; ++b) {
        CHECK(d.wavelengths()[b] == cube.wavelengths()[4 * b]);
        for (std::size_t r = 0; r < 3; ++r)
            for (std::size_t c = 0; c < 2; ++c) CHECK(d.at(b, r, c) == cube.at(4 * b, r, c));
    }
    CHECK(downsample_bands(cube, 1) == cube);
    const std::vector<double> eight{0, 1, 2, 3, 4, 5, 6, 7};
    CHECK(downsample_bands(eight, 4) == std::vector<double>{0, 4});
    for (std::size_t n = 1; n < 20; ++n)
        for (std::size_t f = 1; f < 6; ++f)
            CHECK(downsample_bands(std::vector<double>(n, 1.0), f).size() == (n + f - 1) / f);
    CHECK_THROWS_AS(downsample_bands(cube, 0), ArgumentError);
}

TEST_CASE("masking") {
    std::mt19937_64 rng(4);
    const auto cube = testutil::random_cube(3, 4, 5, rng);
    CHECK(apply_mask(cube, {1, 1, 0, 0}) == cube);
    const auto all = apply_mask(cube, {0, 0, 4, 5});
    for (std::size_t r = 0; r < 4; ++r)
        for (std::size_t c = 0; c < 5; ++c) CHECK(all.masked(r, c));
    SceneSample s;
    s.radiance = all;
    CHECK_THROWS_AS(random_crop(s, {2, 2}, 1), CropError);
    CHECK_THROWS_AS(apply_mask(cube, {3, 3, 2, 2}), ArgumentError);
}

TEST_CASE("spectrum csv round-trips exactly") {
    TempDir dir("hsio");
    std::mt19937_64 rng(5);
    Spectrum s{testutil::random_vector(17, rng), uniform_wavelengths(17), "x"};
    write_spectrum_csv(s, dir / "s.csv");
    const auto back = read_spectrum_csv(dir / "s.csv");
    CHECK(back.values == s.values);
    CHECK(back.wavelengths == s.wavelengths);
    write_file(dir / "bad.csv", "wavelength_nm,value\n400,abc\n");
    CHECK_THROWS_AS(read_spectrum_csv(dir / "bad.csv"), ParseError);
}
