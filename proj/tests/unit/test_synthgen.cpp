#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "specrec/error.hpp"
#include "specrec/spectral.hpp"
#include "specrec/synthgen.hpp"
#include "util.hpp"

using namespace specrec;

namespace {

std::size_t argmax(const std::vector<double>& v) {
    return std::size_t(std::max_element(v.begin(), v.end()) - v.begin());
}

std::size_t nearest(const std::vector<double>& grid, double x) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < grid.size(); ++i)
        if (std::abs(grid[i] - x) < std::abs(grid[best] - x)) best = i;
    return best;
}

SceneSample tiny_scene(std::uint64_t seed, std::size_t h = 8, std::size_t w = 8, std::size_t bands = 12) {
    const auto wl = uniform_wavelengths(bands);
    const auto il = gen_illuminant(sample_illuminant(IlluminantFamily::blackbody, seed), wl);
    return gen_scene(il, 3, {h, w}, 0.0, seed);
}

} // namespace

TEST_CASE("every sampled illuminant is non-negative with unit maximum") {
    const auto wl = uniform_wavelengths(204);
    for (auto family : all_families()) {
        for (std::uint64_t seed = 0; seed < 40; ++seed) {
            const auto s = gen_illuminant(sample_illuminant(family, seed), wl);
            CHECK(*std::max_element(s.values.begin(), s.values.end()) == 1.0);
            CHECK(*std::min_element(s.values.begin(), s.values.end()) >= 0.0);
            CHECK(s.wavelengths == wl);
        }
    }
}

TEST_CASE("blackbody peaks where Wien's law puts it") {
    const auto wl = uniform_wavelengths(204);
    const auto warm = gen_illuminant({Blackbody{3200.0}}, wl).values;
    CHECK(argmax(warm) == nearest(wl, 2.897771955e6 / 3200.0));
    for (double t : {3200.0, 4000.0, 5000.0, 6500.0}) {
        const auto s = gen_illuminant({Blackbody{t}}, wl).values;
        const double peak = 2.897771955e6 / t;
        // The grid points either side of the continuous peak.
        const auto hi = std::size_t(std::upper_bound(wl.begin(), wl.end(), peak) - wl.begin());
        const auto lo = hi - 1;
        CHECK((argmax(s) == lo || argmax(s) == hi));
        for (std::size_t i = 1; i <= lo; ++i) CHECK(s[i] > s[i - 1]);
        for (std::size_t i = hi + 1; i < s.size(); ++i) CHECK(s[i] < s[i - 1]);
    }
    CHECK_THROWS_AS(gen_illuminant({Blackbody{500.0}}, wl), ArgumentError);
}

TEST_CASE("a single fluorescent line peaks on its grid point") {
    const auto wl = uniform_wavelengths(204);
    const auto s = gen_illuminant({Fluorescent{0.05, {{546.0, 5.0, 1.0}}}}, wl).values;
    CHECK(argmax(s) == nearest(wl, 546.0));
}

TEST_CASE("mixture endpoints reproduce their component") {
    const auto wl = uniform_wavelengths(204);
    const IlluminantSpec a{Led{}}, b{Blackbody{2800.0}};
    const auto only_a = gen_illuminant({Mixture{{a, b}, {1.0, 0.0}}}, wl);
    CHECK(only_a.values == gen_illuminant(a, wl).values);
    CHECK_THROWS_AS(gen_illuminant({Mixture{{a, b}, {0.7, 0.7}}}, wl), ArgumentError);
    CHECK_THROWS_AS(gen_illuminant({Mixture{{a, b}, {1.5, -0.5}}}, wl), ArgumentError);
}

TEST_CASE("unknown family names list the valid ones") {
    try {
        parse_family("sodium");
        FAIL("expected an error");
    } catch (const ArgumentError& e) {
        const std::string msg = e.what();
        for (auto f : all_families()) CHECK(msg.find(std::string(to_string(f))) != std::string::npos);
    }
}

TEST_CASE("materials and reflectance stay inside [0, 1]") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const auto m = gen_material(204, seed);
        CHECK(*std::min_element(m.begin(), m.end()) >= 0.0);
        CHECK(*std::max_element(m.begin(), m.end()) <= 1.0);
        CHECK(roughness(m) < 1e-3);
    }
    const auto r = gen_reflectance(8, {16, 16}, uniform_wavelengths(30), 4);
    for (float v : r.data()) CHECK((v >= 0.0f && v <= 1.0f));
}

TEST_CASE("flat reflectance renders as r l + d") {
    const auto wl = uniform_wavelengths(20);
    const auto il = gen_illuminant({Daylight{}}, wl);
    SpectralCube refl(20, 3, 4, std::vector<float>(240, 0.5f), wl, CubeKind::reflectance);
    const auto s = render_scene(il, refl, 0.0, 9);
    for (std::size_t b = 0; b < 20; ++b)
        for (std::size_t r = 0; r < 3; ++r)
            for (std::size_t c = 0; c < 4; ++c)
                CHECK(s.radiance.at(b, r, c) == doctest::Approx(0.5 * il.values[b] + s.dark.values[b]).epsilon(1e-7));
    for (double d : s.dark.values) CHECK(d > 0.0);
}

TEST_CASE("noise-free scenes normalize back to their reflectance") {
    const auto wl = uniform_wavelengths(60);
    for (auto family : all_families()) {
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            const auto il = gen_illuminant(sample_illuminant(family, seed), wl);
            const auto refl = gen_reflectance(4, {6, 7}, wl, seed);
            const auto s = render_scene(il, refl, 0.0, seed);
            const auto out = normalize_cube(s.radiance, s.white_reference(), s.dark);
            double worst = 0.0;
            for (std::size_t i = 0; i < refl.data().size(); ++i)
                worst = std::max(worst, double(std::abs(out.cube.data()[i] - refl.data()[i])));
            CHECK(worst <= 1e-6);
        }
    }
}

TEST_CASE("generation is deterministic in its seed") {
    const auto a = tiny_scene(3), b = tiny_scene(3), c = tiny_scene(4);
    CHECK(a.radiance == b.radiance);
    CHECK(a.illuminant.values == b.illuminant.values);
    CHECK(a.dark.values == b.dark.values);
    CHECK_FALSE(a.radiance == c.radiance);
    CHECK_THROWS_AS(gen_scene(a.illuminant, 2, {0, 4}, 0.0, 1), ArgumentError);
    CHECK_THROWS_AS(gen_scene(a.illuminant, 2, {4, 4}, -1.0, 1), ArgumentError);
}

TEST_CASE("splits are 70/10/20, disjoint and deterministic") {
    std::vector<SceneTag> tags(100);
    for (std::size_t i = 0; i < tags.size(); ++i) tags[i] = i % 2 ? SceneTag::indoor : SceneTag::outdoor;
    const auto s = split_indices(tags, 5);
    CHECK(s.train.size() == 70);
    CHECK(s.val.size() == 10);
    CHECK(s.test.size() == 20);
    std::set<std::size_t> all;
    for (const auto* part : {&s.train, &s.val, &s.test}) {
        all.insert(part->begin(), part->end());
        std::size_t indoor = 0;
        for (auto i : *part) indoor += tags[i] == SceneTag::indoor;
        const double frac = double(indoor) / double(part->size());
        CHECK(frac >= 0.4);
        CHECK(frac <= 0.6);
    }
    CHECK(all.size() == 100);
    const auto again = split_indices(tags, 5);
    CHECK(again.train == s.train);
    CHECK(again.test == s.test);

    for (std::size_t n = 10; n < 60; ++n) {
        std::vector<SceneTag> t(n, SceneTag::indoor);
        const auto p = split_indices(t, n);
        CHECK(std::abs(double(p.train.size()) - 0.7 * double(n)) <= 1.0);
        CHECK(std::abs(double(p.val.size()) - 0.1 * double(n)) <= 1.0);
        CHECK(p.train.size() + p.val.size() + p.test.size() == n);
    }
    CHECK_THROWS_AS(split_indices(std::vector<SceneTag>(9), 1), ArgumentError);
}

TEST_CASE("crops") {
    const auto s = tiny_scene(1, 8, 8);
    const auto same = random_crop(s, {8, 8}, 2);
    CHECK(same.radiance == s.radiance);

    const auto c = random_crop(s, {5, 3}, 3);
    CHECK(c.radiance.height() == 5);
    CHECK(c.radiance.width() == 3);
    CHECK(c.radiance.bands() == s.radiance.bands());
    CHECK(c.illuminant.values == s.illuminant.values);
    CHECK_THROWS_AS(random_crop(s, {9, 2}, 3), CropError);
}

TEST_CASE("half-size crop of a large frame") {
    SceneSample big;
    big.radiance = SpectralCube(2, 512, 512, uniform_wavelengths(2));
    big.illuminant = {{1.0, 1.0}, uniform_wavelengths(2), {}};
    const auto c = random_crop(big, {256, 256}, 7);
    CHECK(c.radiance.height() == 256);
    CHECK(c.radiance.width() == 256);
    CHECK(c.radiance.bands() == 2);
}

TEST_CASE("masked panel pixels never reach a crop") {
    auto s = tiny_scene(2, 16, 16, 4);
    const Rect panel{5, 6, 4, 3};
    for (std::size_t b = 0; b < 4; ++b)
        for (std::size_t r = panel.row; r < panel.row + panel.height; ++r)
            for (std::size_t c = panel.col; c < panel.col + panel.width; ++c) s.radiance.at(b, r, c) = 99.0f;
    s.radiance = apply_mask(s.radiance, panel);
    for (std::uint64_t seed = 0; seed < 300; ++seed) {
        const auto crop = random_crop(s, {5, 5}, seed);
        for (float v : crop.radiance.data()) REQUIRE(v != 99.0f);
    }
}

TEST_CASE("quarter turns form a rotation group") {
    const auto s = tiny_scene(5, 6, 6, 3).radiance;
    CHECK(rotate(rotate(s, 2), 2) == s);
    CHECK(rotate(rotate(rotate(rotate(s, 1), 1), 1), 1) == s);
    CHECK(rotate(rotate(s, 1), 3) == s);
    CHECK(rotate(s, 0) == s);

    // Counter-clockwise: the top-left pixel moves to the bottom-left.
    const auto r = rotate(s, 1);
    for (std::size_t b = 0; b < 3; ++b) CHECK(r.at(b, 5, 0) == s.at(b, 0, 0));
    CHECK_THROWS_AS(rotate(s, 4), ArgumentError);
}

TEST_CASE("training set size is crops times four orientations") {
    std::vector<SceneSample> train{tiny_scene(1), tiny_scene(2)};
    const auto set = build_training_set(train, 3, {4, 4}, 9);
    CHECK(set.size() == 24);
    for (const auto& s : set) {
        CHECK(s.radiance.height() == 4);
        CHECK(s.radiance.width() == 4);
    }
    CHECK(set[0].illuminant.values == train[0].illuminant.values);
    const auto again = build_training_set(train, 3, {4, 4}, 9);
    for (std::size_t i = 0; i < set.size(); ++i) CHECK(set[i].radiance == again[i].radiance);
}

TEST_CASE("dataset files round-trip through the manifest") {
    testutil::TempDir dir("synth");
    SynthOptions o;
    o.count = 10;
    o.bands = 16;
    o.size = {5, 6};
    o.seed = 4;
    const auto data = generate_dataset(o);
    REQUIRE(data.size() == 10);
    std::vector<ManifestEntry> entries;
    for (std::size_t i = 0; i < data.size(); ++i)
        entries.push_back(save_sample(data[i].sample, dir.path(), "s" + std::to_string(i),
                                      std::string(to_string(data[i].family))));
    write_manifest(dir / "manifest.tsv", entries);
    const auto back = read_manifest(dir / "manifest.tsv");
    REQUIRE(back.size() == 10);
    for (std::size_t i = 0; i < 10; ++i) {
        CHECK(back[i].seed == data[i].sample.seed);
        CHECK(back[i].tag == data[i].sample.tag);
        const auto s = load_sample(back[i]);
        CHECK(s.radiance == data[i].sample.radiance);
        CHECK(s.illuminant.values == data[i].sample.illuminant.values);
    }
    CHECK_THROWS_AS(read_manifest(dir / "absent.tsv"), IoError);

    o.families = {IlluminantFamily::daylight};
    for (const auto& d : generate_dataset(o)) {
        CHECK(d.family == IlluminantFamily::daylight);
        CHECK(d.sample.tag == SceneTag::outdoor);
    }
}
