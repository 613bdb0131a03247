#include "specrec/synthgen.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "specrec/error.hpp"
#include "specrec/random.hpp"
#include "specrec/spectral.hpp"
#include "text_util.hpp"

namespace specrec {

namespace {

// Second radiation constant h*c/k in nm*K.
constexpr double kPlanckC2 = 1.438776877e7;
constexpr double kMaterialSmoothing = 100.0;

constexpr std::array<IlluminantFamily, 5> kFamilies = {IlluminantFamily::blackbody, IlluminantFamily::daylight,
                                                       IlluminantFamily::led, IlluminantFamily::fluorescent,
                                                       IlluminantFamily::mixture};

double gaussian(double x, double center, double sd) {
    const double z = (x - center) / sd;
    return std::exp(-0.5 * z * z);
}

double planck_relative(double wavelength_nm, double temperature_k) {
    return std::pow(wavelength_nm / 1000.0, -5.0) / std::expm1(kPlanckC2 / (wavelength_nm * temperature_k));
}

void require(bool ok, const std::string& what) {
    if (!ok) throw ArgumentError(what);
}

// Unnormalised evaluation of one family.
std::vector<double> evaluate(const IlluminantSpec& spec, std::span<const double> wl);

std::vector<double> evaluate_one(const Blackbody& p, std::span<const double> wl) {
    require(p.temperature_k >= 1000.0 && p.temperature_k <= 10000.0,
            "blackbody temperature must lie in [1000, 10000] K");
    std::vector<double> out(wl.size());
    for (std::size_t i = 0; i < wl.size(); ++i) out[i] = planck_relative(wl[i], p.temperature_k);
    return out;
}

std::vector<double> evaluate_one(const Daylight& p, std::span<const double> wl) {
    require(p.cct_k >= 1000.0 && p.cct_k <= 25000.0, "daylight CCT must lie in [1000, 25000] K");
    require(p.absorption >= 0.0 && p.absorption <= 1.0, "daylight absorption must lie in [0, 1]");
    struct Band { double center, sd, depth; };
    constexpr std::array<Band, 4> bands = {{{687.0, 3.0, 0.3}, {760.0, 4.0, 0.7}, {820.0, 12.0, 0.25}, {940.0, 20.0, 0.6}}};
    std::vector<double> out(wl.size());
    for (std::size_t i = 0; i < wl.size(); ++i) {
        double v = planck_relative(wl[i], p.cct_k);
        for (const auto& b : bands) v *= 1.0 - p.absorption * b.depth * gaussian(wl[i], b.center, b.sd);
        out[i] = v;
    }
    return out;
}

std::vector<double> evaluate_one(const Led& p, std::span<const double> wl) {
    require(p.pump_width_nm > 0.0 && p.phosphor_width_nm > 0.0, "LED widths must be positive");
    require(p.pump_ratio >= 0.0 && p.floor >= 0.0, "LED pump ratio and floor must be non-negative");
    std::vector<double> out(wl.size());
    for (std::size_t i = 0; i < wl.size(); ++i) {
        out[i] = p.pump_ratio * gaussian(wl[i], p.pump_center_nm, p.pump_width_nm) +
                 gaussian(wl[i], p.phosphor_center_nm, p.phosphor_width_nm) + p.floor;
    }
    return out;
}

std::vector<double> evaluate_one(const Fluorescent& p, std::span<const double> wl) {
    require(p.continuum >= 0.0, "fluorescent continuum must be non-negative");
    for (const auto& line : p.lines) {
        require(line.width_nm > 0.0 && line.height >= 0.0, "emission lines need width > 0 and height >= 0");
    }
    // Warm continuum shaped like a 4000 K radiator, unit max over 400-1000 nm.
    const double cont_norm = planck_relative(1000.0, 4000.0);
    std::vector<double> out(wl.size());
    for (std::size_t i = 0; i < wl.size(); ++i) {
        double v = p.continuum * planck_relative(wl[i], 4000.0) / cont_norm;
        for (const auto& line : p.lines) v += line.height * gaussian(wl[i], line.center_nm, line.width_nm);
        out[i] = v;
    }
    return out;
}

std::vector<double> evaluate_one(const Mixture& p, std::span<const double> wl) {
    require(!p.components.empty(), "mixture needs at least one component");
    require(p.components.size() == p.weights.size(), "mixture needs one weight per component");
    double total = 0.0;
    for (double w : p.weights) {
        require(w >= 0.0, "mixture weights must be non-negative");
        total += w;
    }
    require(std::abs(total - 1.0) <= 1e-9, "mixture weights must sum to 1");
    std::vector<double> out(wl.size(), 0.0);
    for (std::size_t c = 0; c < p.components.size(); ++c) {
        const auto comp = gen_illuminant(p.components[c], wl);
        for (std::size_t i = 0; i < wl.size(); ++i) out[i] += p.weights[c] * comp.values[i];
    }
    return out;
}

std::vector<double> evaluate(const IlluminantSpec& spec, std::span<const double> wl) {
    return std::visit([&](const auto& p) { return evaluate_one(p, wl); }, spec.params);
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

SpectralCube crop_cube(const SpectralCube& cube, std::size_t row, std::size_t col, Extent2 size) {
    std::vector<float> data(cube.bands() * size.height * size.width);
    auto src = cube.data();
    std::size_t dst = 0;
    for (std::size_t b = 0; b < cube.bands(); ++b) {
        for (std::size_t r = 0; r < size.height; ++r) {
            const auto start = (b * cube.height() + row + r) * cube.width() + col;
            std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(start), size.width,
                        data.begin() + static_cast<std::ptrdiff_t>(dst));
            dst += size.width;
        }
    }
    return SpectralCube(cube.bands(), size.height, size.width, std::move(data), cube.wavelengths(), cube.kind());
}

std::string relative_to(const std::filesystem::path& p, const std::filesystem::path& base) {
    auto rel = p.lexically_normal().lexically_relative(base.lexically_normal());
    return (rel.empty() ? p : rel).generic_string();
}

} // namespace

std::string_view to_string(IlluminantFamily family) {
    switch (family) {
    case IlluminantFamily::blackbody: return "blackbody";
    case IlluminantFamily::daylight: return "daylight";
    case IlluminantFamily::led: return "led";
    case IlluminantFamily::fluorescent: return "fluorescent";
    case IlluminantFamily::mixture: return "mixture";
    }
    return "?";
}

std::string_view to_string(SceneTag tag) { return tag == SceneTag::indoor ? "indoor" : "outdoor"; }

std::span<const IlluminantFamily> all_families() { return kFamilies; }

IlluminantFamily parse_family(std::string_view text) {
    const auto key = detail::lower(detail::trim(text));
    for (auto f : kFamilies) {
        if (key == to_string(f)) return f;
    }
    std::string valid;
    for (auto f : kFamilies) valid += (valid.empty() ? "" : ", ") + std::string(to_string(f));
    throw ArgumentError("unknown illuminant family '" + std::string(text) + "' (valid: " + valid + ")");
}

SceneTag parse_tag(std::string_view text) {
    const auto key = detail::lower(detail::trim(text));
    if (key == "indoor") return SceneTag::indoor;
    if (key == "outdoor") return SceneTag::outdoor;
    throw ArgumentError("unknown scene tag '" + std::string(text) + "'");
}

SceneTag default_tag(IlluminantFamily family) {
    return family == IlluminantFamily::daylight ? SceneTag::outdoor : SceneTag::indoor;
}

std::vector<EmissionLine> standard_fluorescent_lines() {
    return {{405.0, 3.0, 0.25}, {436.0, 3.0, 0.55}, {487.0, 4.0, 0.3}, {546.0, 3.0, 1.0},
            {578.0, 4.0, 0.2},  {611.0, 4.0, 0.85}, {710.0, 5.0, 0.08}, {763.0, 3.0, 0.06},
            {811.0, 3.0, 0.05}, {912.0, 3.0, 0.04}};
}

Spectrum gen_illuminant(const IlluminantSpec& spec, std::span<const double> wavelengths) {
    require(!wavelengths.empty(), "wavelength grid is empty");
    for (double w : wavelengths) {
        require(w >= 300.0 && w <= 1100.0, "wavelengths must lie within [300, 1100] nm");
    }
    auto values = evaluate(spec, wavelengths);
    const double peak = *std::max_element(values.begin(), values.end());
    if (!(peak > 0.0) || !std::isfinite(peak)) throw ArgumentError("illuminant has no positive power on the grid");
    for (auto& v : values) v = std::max(0.0, v / peak);
    return Spectrum{std::move(values), {wavelengths.begin(), wavelengths.end()},
                    std::string(to_string(spec.family()))};
}

IlluminantSpec sample_illuminant(IlluminantFamily family, std::uint64_t seed) {
    std::mt19937_64 rng(derive_seed(seed, {0x111}));
    IlluminantSpec spec;
    spec.seed = seed;
    switch (family) {
    case IlluminantFamily::blackbody:
        // Halogen and incandescent sources.
        spec.params = Blackbody{uniform(rng, 2500.0, 4500.0)};
        break;
    case IlluminantFamily::daylight:
        // Sun through shade/overcast.
        spec.params = Daylight{uniform(rng, 4500.0, 9500.0), uniform(rng, 0.3, 1.0)};
        break;
    case IlluminantFamily::led: {
        Led led;
        led.pump_center_nm = uniform(rng, 440.0, 460.0);
        led.pump_width_nm = uniform(rng, 8.0, 13.0);
        led.pump_ratio = uniform(rng, 0.3, 1.0);
        led.phosphor_center_nm = uniform(rng, 540.0, 610.0);
        led.phosphor_width_nm = uniform(rng, 45.0, 70.0);
        spec.params = led;
        break;
    }
    case IlluminantFamily::fluorescent: {
        Fluorescent fl;
        fl.continuum = uniform(rng, 0.03, 0.1);
        fl.lines = standard_fluorescent_lines();
        for (auto& line : fl.lines) line.height *= uniform(rng, 0.7, 1.3);
        spec.params = fl;
        break;
    }
    case IlluminantFamily::mixture: {
        // Halogen lamp plus fluorescent or LED room lighting.
        Mixture mix;
        mix.components.push_back(IlluminantSpec{Blackbody{uniform(rng, 2700.0, 3300.0)}, seed});
        const bool fluorescent = uniform(rng, 0.0, 1.0) < 0.5;
        mix.components.push_back(sample_illuminant(fluorescent ? IlluminantFamily::fluorescent : IlluminantFamily::led,
                                                   derive_seed(seed, {0x222})));
        const double w = uniform(rng, 0.3, 0.7);
        mix.weights = {w, 1.0 - w};
        spec.params = std::move(mix);
        break;
    }
    }
    return spec;
}

Spectrum SceneSample::white_reference() const {
    Spectrum w = illuminant;
    for (std::size_t i = 0; i < w.values.size(); ++i) w.values[i] += dark.values[i];
    w.label = "white_reference";
    return w;
}

std::vector<double> gen_material(std::size_t bands, std::uint64_t seed) {
    require(bands >= 3, "materials need at least 3 bands");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> step(0.0, 1.0);
    std::vector<double> walk(bands);
    double acc = 0.0;
    for (auto& v : walk) {
        acc += step(rng);
        v = acc;
    }
    auto smooth = smooth_values(walk, kMaterialSmoothing);
    const auto [mn_it, mx_it] = std::minmax_element(smooth.begin(), smooth.end());
    const double mn = *mn_it, range = *mx_it - mn;
    const double lo = uniform(rng, 0.05, 0.5);
    const double hi = std::min(1.0, lo + uniform(rng, 0.1, 0.5));
    for (auto& v : smooth) v = range > 0.0 ? lo + (hi - lo) * (v - mn) / range : lo;
    return smooth;
}

SpectralCube gen_reflectance(std::size_t n_materials, Extent2 size, std::span<const double> wavelengths,
                             std::uint64_t seed) {
    require(n_materials >= 1, "n_materials must be >= 1");
    require(size.height > 0 && size.width > 0, "scene must have positive area");
    const std::size_t bands = wavelengths.size();
    std::vector<std::vector<double>> materials;
    for (std::size_t m = 0; m < n_materials; ++m) materials.push_back(gen_material(bands, derive_seed(seed, {1, m})));

    std::mt19937_64 rng(derive_seed(seed, {2}));
    std::vector<std::array<double, 2>> sites(n_materials);
    for (auto& s : sites) s = {uniform(rng, 0.0, double(size.height)), uniform(rng, 0.0, double(size.width))};

    SpectralCube cube(bands, size.height, size.width, {wavelengths.begin(), wavelengths.end()}, CubeKind::reflectance);
    for (std::size_t r = 0; r < size.height; ++r) {
        for (std::size_t c = 0; c < size.width; ++c) {
            std::size_t best = 0;
            double best_d = INFINITY;
            for (std::size_t m = 0; m < n_materials; ++m) {
                const double dr = double(r) + 0.5 - sites[m][0], dc = double(c) + 0.5 - sites[m][1];
                const double d = dr * dr + dc * dc;
                if (d < best_d) {
                    best_d = d;
                    best = m;
                }
            }
            for (std::size_t b = 0; b < bands; ++b) cube.at(b, r, c) = static_cast<float>(materials[best][b]);
        }
    }
    return cube;
}

SceneSample render_scene(const Spectrum& illuminant, const SpectralCube& reflectance, double noise_sd,
                         std::uint64_t seed, SceneTag tag) {
    require(noise_sd >= 0.0, "noise_sd must be >= 0");
    require(illuminant.size() == reflectance.bands(), "illuminant and reflectance band counts differ");
    std::mt19937_64 rng(derive_seed(seed, {3}));

    Spectrum dark{std::vector<double>(illuminant.size()), illuminant.wavelengths, "dark"};
    for (auto& d : dark.values) d = uniform(rng, 0.008, 0.012);

    SpectralCube radiance(reflectance.bands(), reflectance.height(), reflectance.width(), reflectance.wavelengths(),
                          CubeKind::radiance);
    std::normal_distribution<double> noise(0.0, 1.0);
    auto out = radiance.data();
    auto r = reflectance.data();
    const std::size_t npix = reflectance.pixels();
    for (std::size_t b = 0; b < reflectance.bands(); ++b) {
        const double l = illuminant.values[b], d = dark.values[b];
        for (std::size_t i = b * npix; i < (b + 1) * npix; ++i) {
            double p = static_cast<double>(r[i]) * l + d;
            if (noise_sd > 0.0) p += noise_sd * noise(rng);
            out[i] = static_cast<float>(p);
        }
    }
    radiance.set_mask(reflectance.mask());

    Spectrum illum = illuminant;
    return SceneSample{std::move(radiance), std::move(illum), std::move(dark), tag, seed};
}

SceneSample gen_scene(const Spectrum& illuminant, std::size_t n_materials, Extent2 size, double noise_sd,
                      std::uint64_t seed, SceneTag tag) {
    require(size.height > 0 && size.width > 0, "scene must have positive area");
    require(noise_sd >= 0.0, "noise_sd must be >= 0");
    illuminant.validate();
    auto reflectance = gen_reflectance(n_materials, size, illuminant.wavelengths, seed);
    return render_scene(illuminant, reflectance, noise_sd, seed, tag);
}

SplitIndices split_indices(std::span<const SceneTag> tags, std::uint64_t seed) {
    const std::size_t n = tags.size();
    if (n < 10) throw ArgumentError("need at least 10 samples to split, got " + std::to_string(n));

    const auto n_train = static_cast<std::size_t>(std::llround(kTrainFraction * double(n)));
    const auto n_val = static_cast<std::size_t>(std::llround(kValFraction * double(n)));
    const std::size_t n_test = n - n_train - n_val;

    std::mt19937_64 rng(derive_seed(seed, {0x5b117}));
    std::array<std::vector<std::size_t>, 2> groups;
    for (std::size_t i = 0; i < n; ++i) groups[static_cast<std::size_t>(tags[i])].push_back(i);
    for (auto& g : groups) std::shuffle(g.begin(), g.end(), rng);

    // Indoor gets its proportional share of each split; outdoor takes the rest,
    // so split sizes are exact and both tags are spread evenly.
    const double m0 = double(groups[0].size());
    auto share = [&](std::size_t total) {
        return static_cast<std::size_t>(std::llround(m0 * double(total) / double(n)));
    };
    std::size_t a_train = std::min(share(n_train), n_train);
    std::size_t a_val = std::min(share(n_val), n_val);
    a_train = std::min(a_train, groups[0].size());
    a_val = std::min(a_val, groups[0].size() - a_train);
    std::size_t a_test = groups[0].size() - a_train - a_val;
    while (a_test > n_test) {
        // Push surplus indoor samples back into train/val.
        --a_test;
        if (a_train < n_train) ++a_train;
        else ++a_val;
    }

    SplitIndices out;
    const std::array<std::size_t, 3> counts0 = {a_train, a_val, a_test};
    const std::array<std::size_t, 3> totals = {n_train, n_val, n_test};
    std::array<std::vector<std::size_t>*, 3> dst = {&out.train, &out.val, &out.test};
    std::size_t p0 = 0, p1 = 0;
    for (std::size_t s = 0; s < 3; ++s) {
        for (std::size_t k = 0; k < counts0[s]; ++k) dst[s]->push_back(groups[0][p0++]);
        for (std::size_t k = counts0[s]; k < totals[s]; ++k) dst[s]->push_back(groups[1][p1++]);
        std::shuffle(dst[s]->begin(), dst[s]->end(), rng);
    }
    return out;
}

DatasetSplit split_dataset(std::vector<SceneSample> samples, std::uint64_t seed) {
    std::vector<SceneTag> tags;
    tags.reserve(samples.size());
    for (const auto& s : samples) tags.push_back(s.tag);
    const auto idx = split_indices(tags, seed);
    DatasetSplit split;
    for (auto i : idx.train) split.train.push_back(std::move(samples[i]));
    for (auto i : idx.val) split.val.push_back(std::move(samples[i]));
    for (auto i : idx.test) split.test.push_back(std::move(samples[i]));
    return split;
}

SceneSample random_crop(const SceneSample& sample, Extent2 crop, std::uint64_t seed) {
    const auto& cube = sample.radiance;
    if (crop.height == 0 || crop.width == 0) throw CropError("crop must have positive area");
    if (crop.height > cube.height() || crop.width > cube.width()) {
        throw CropError("crop " + std::to_string(crop.height) + "x" + std::to_string(crop.width) +
                        " exceeds image " + std::to_string(cube.height()) + "x" + std::to_string(cube.width()));
    }
    const std::size_t H = cube.height(), W = cube.width();
    // Summed-area table of masked pixels.
    std::vector<std::size_t> sat((H + 1) * (W + 1), 0);
    for (std::size_t r = 0; r < H; ++r) {
        for (std::size_t c = 0; c < W; ++c) {
            sat[(r + 1) * (W + 1) + c + 1] = (cube.masked(r, c) ? 1 : 0) + sat[r * (W + 1) + c + 1] +
                                             sat[(r + 1) * (W + 1) + c] - sat[r * (W + 1) + c];
        }
    }
    auto masked_in = [&](std::size_t r, std::size_t c) {
        const std::size_t r1 = r + crop.height, c1 = c + crop.width;
        return sat[r1 * (W + 1) + c1] + sat[r * (W + 1) + c] - sat[r * (W + 1) + c1] - sat[r1 * (W + 1) + c];
    };
    std::vector<std::pair<std::size_t, std::size_t>> valid;
    for (std::size_t r = 0; r + crop.height <= H; ++r) {
        for (std::size_t c = 0; c + crop.width <= W; ++c) {
            if (masked_in(r, c) == 0) valid.emplace_back(r, c);
        }
    }
    if (valid.empty()) throw CropError("no unmasked placement for a " + std::to_string(crop.height) + "x" +
                                       std::to_string(crop.width) + " crop");
    std::mt19937_64 rng(seed);
    const auto pick = valid[std::uniform_int_distribution<std::size_t>(0, valid.size() - 1)(rng)];

    SceneSample out{crop_cube(cube, pick.first, pick.second, crop), sample.illuminant, sample.dark, sample.tag,
                    sample.seed};
    return out;
}

SpectralCube rotate(const SpectralCube& cube, int quarter_turns) {
    if (quarter_turns < 0 || quarter_turns > 3) throw ArgumentError("quarter_turns must lie in [0, 3]");
    const std::size_t H = cube.height(), W = cube.width();
    if (quarter_turns % 2 == 1 && H != W) {
        throw ArgumentError("odd quarter turns need a square image, got " + std::to_string(H) + "x" + std::to_string(W));
    }
    if (quarter_turns == 0) return cube;
    const std::size_t oh = quarter_turns % 2 ? W : H, ow = quarter_turns % 2 ? H : W;
    // Source pixel for destination (r, c), counter-clockwise.
    auto source = [&](std::size_t r, std::size_t c) -> std::pair<std::size_t, std::size_t> {
        switch (quarter_turns) {
        case 1: return {c, W - 1 - r};
        case 2: return {H - 1 - r, W - 1 - c};
        default: return {H - 1 - c, r};
        }
    };
    SpectralCube out(cube.bands(), oh, ow, cube.wavelengths(), cube.kind());
    for (std::size_t b = 0; b < cube.bands(); ++b) {
        for (std::size_t r = 0; r < oh; ++r) {
            for (std::size_t c = 0; c < ow; ++c) {
                const auto [sr, sc] = source(r, c);
                out.at(b, r, c) = cube.at(b, sr, sc);
            }
        }
    }
    if (cube.has_mask()) {
        std::vector<std::uint8_t> mask(oh * ow);
        for (std::size_t r = 0; r < oh; ++r) {
            for (std::size_t c = 0; c < ow; ++c) {
                const auto [sr, sc] = source(r, c);
                mask[r * ow + c] = cube.mask()[sr * W + sc];
            }
        }
        out.set_mask(std::move(mask));
    }
    return out;
}

SceneSample rotate(const SceneSample& sample, int quarter_turns) {
    return SceneSample{rotate(sample.radiance, quarter_turns), sample.illuminant, sample.dark, sample.tag,
                       sample.seed};
}

std::vector<SceneSample> build_training_set(std::span<const SceneSample> train, std::size_t crops_per_image,
                                            Extent2 crop, std::uint64_t seed) {
    if (crops_per_image < 1) throw ArgumentError("crops_per_image must be >= 1");
    std::vector<SceneSample> out;
    out.reserve(train.size() * crops_per_image * 4);
    for (std::size_t i = 0; i < train.size(); ++i) {
        for (std::size_t k = 0; k < crops_per_image; ++k) {
            auto base = random_crop(train[i], crop, derive_seed(seed, {i, k}));
            for (int q = 1; q <= 3; ++q) out.push_back(rotate(base, q));
            out.insert(out.end() - 3, std::move(base));
        }
    }
    return out;
}

std::vector<SynthSample> generate_dataset(const SynthOptions& options) {
    auto families = options.families.empty() ? std::vector<IlluminantFamily>(kFamilies.begin(), kFamilies.end())
                                             : options.families;
    std::vector<IlluminantFamily> indoor, outdoor;
    for (auto f : families) (default_tag(f) == SceneTag::outdoor ? outdoor : indoor).push_back(f);
    const auto wl = uniform_wavelengths(options.bands);

    std::vector<SynthSample> out;
    out.reserve(options.count);
    for (std::size_t i = 0; i < options.count; ++i) {
        const auto sample_seed = derive_seed(options.seed, {0xda7a, i});
        std::mt19937_64 rng(sample_seed);
        bool pick_outdoor = indoor.empty() || (!outdoor.empty() && uniform(rng, 0.0, 1.0) < 0.5);
        const auto& pool = pick_outdoor ? outdoor : indoor;
        const auto family = pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)];
        const auto illum = gen_illuminant(sample_illuminant(family, sample_seed), wl);
        out.push_back({gen_scene(illum, options.n_materials, options.size, options.noise_sd, sample_seed,
                                 default_tag(family)),
                       family});
    }
    return out;
}

void write_manifest(const std::filesystem::path& path, std::span<const ManifestEntry> entries) {
    const auto base = path.parent_path();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << "# header\tpayload\tilluminant\tdark\ttag\tseed\tfamily\n";
    for (const auto& e : entries) {
        out << relative_to(e.header, base) << '\t' << relative_to(e.payload, base) << '\t'
            << relative_to(e.illuminant, base) << '\t' << relative_to(e.dark, base) << '\t' << to_string(e.tag)
            << '\t' << e.seed << '\t' << e.family << '\n';
    }
    if (!out) throw IoError("write failed: " + path.string());
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open manifest " + path.string());
    const auto base = path.parent_path();
    std::vector<ManifestEntry> entries;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto t = detail::trim(line);
        if (t.empty() || t.front() == '#') continue;
        auto cols = detail::split(t, '\t');
        if (cols.size() != 7) {
            throw ParseError(path.string() + ": line " + std::to_string(lineno) + ": expected 7 tab-separated fields");
        }
        auto seed = detail::parse_int<std::uint64_t>(cols[5]);
        if (!seed) throw ParseError(path.string() + ": line " + std::to_string(lineno) + ": bad seed");
        ManifestEntry e;
        e.header = base / std::string(cols[0]);
        e.payload = base / std::string(cols[1]);
        e.illuminant = base / std::string(cols[2]);
        e.dark = base / std::string(cols[3]);
        try {
            e.tag = parse_tag(cols[4]);
        } catch (const ArgumentError& err) {
            throw ParseError(path.string() + ": line " + std::to_string(lineno) + ": " + err.what());
        }
        e.seed = *seed;
        e.family = std::string(cols[6]);
        entries.push_back(std::move(e));
    }
    return entries;
}

ManifestEntry save_sample(const SceneSample& sample, const std::filesystem::path& dir, const std::string& stem,
                          std::string family) {
    ManifestEntry e;
    e.header = dir / (stem + ".hdr");
    e.payload = dir / (stem + ".img");
    e.illuminant = dir / (stem + "_illum.csv");
    e.dark = dir / (stem + "_dark.csv");
    e.tag = sample.tag;
    e.seed = sample.seed;
    e.family = std::move(family);
    write_cube(sample.radiance, e.header, e.payload);
    write_spectrum_csv(sample.illuminant, e.illuminant);
    write_spectrum_csv(sample.dark, e.dark);
    return e;
}

SceneSample load_sample(const ManifestEntry& entry) {
    SceneSample s;
    s.radiance = read_cube(entry.header, entry.payload);
    s.illuminant = read_spectrum_csv(entry.illuminant);
    s.dark = read_spectrum_csv(entry.dark);
    s.tag = entry.tag;
    s.seed = entry.seed;
    if (s.illuminant.size() != s.radiance.bands() || s.dark.size() != s.radiance.bands()) {
        throw LoadError(entry.header.string() + ": band count differs from its illuminant/dark spectra");
    }
    return s;
}

} // namespace specrec
