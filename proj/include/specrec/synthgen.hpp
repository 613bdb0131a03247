#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "specrec/hsio.hpp"

namespace specrec {

enum class IlluminantFamily { blackbody, daylight, led, fluorescent, mixture };
enum class SceneTag { indoor, outdoor };

std::string_view to_string(IlluminantFamily family);
std::string_view to_string(SceneTag tag);
IlluminantFamily parse_family(std::string_view text); // ArgumentError lists valid names
SceneTag parse_tag(std::string_view text);
std::span<const IlluminantFamily> all_families();

// Outdoor for daylight, indoor for artificial sources.
SceneTag default_tag(IlluminantFamily family);

struct IlluminantSpec;

struct Blackbody {
    double temperature_k = 3200.0; // Planck radiator, [1000, 10000] K
};

// Blackbody continuum at a correlated colour temperature, attenuated by
// the main atmospheric absorption bands (O2 at 687/760 nm, H2O at 820/940 nm).
struct Daylight {
    double cct_k = 6500.0;
    double absorption = 0.6; // [0, 1], depth of the absorption bands
};

// Phosphor-converted white LED: narrow blue pump plus a broad phosphor hump.
struct Led {
    double pump_center_nm = 450.0;
    double pump_width_nm = 10.0;
    double pump_ratio = 0.6;
    double phosphor_center_nm = 570.0;
    double phosphor_width_nm = 55.0;
    double floor = 0.002;
};

struct EmissionLine {
    double center_nm = 546.0;
    double width_nm = 5.0; // Gaussian standard deviation
    double height = 1.0;
};

// Narrow emission lines over a low warm continuum.
struct Fluorescent {
    double continuum = 0.05;
    std::vector<EmissionLine> lines;
};

// Convex combination of unit-max component spectra.
struct Mixture {
    std::vector<IlluminantSpec> components;
    std::vector<double> weights;
};

using IlluminantParams = std::variant<Blackbody, Daylight, Led, Fluorescent, Mixture>;

struct IlluminantSpec {
    IlluminantParams params;
    std::uint64_t seed = 0; // seed the parameters were drawn from, if sampled

    IlluminantFamily family() const { return static_cast<IlluminantFamily>(params.index()); }
};

// Standard mercury / rare-earth phosphor / argon lines of a tri-band tube.
std::vector<EmissionLine> standard_fluorescent_lines();

/// Evaluates the illuminant on `wavelengths` (all within [300, 1100] nm) and
/// normalises it to unit maximum.
Spectrum gen_illuminant(const IlluminantSpec& spec, std::span<const double> wavelengths);

// Draws plausible family parameters from `seed`.
IlluminantSpec sample_illuminant(IlluminantFamily family, std::uint64_t seed);

struct SceneSample {
    SpectralCube radiance;
    Spectrum illuminant; // ground truth, unit maximum
    Spectrum dark;
    SceneTag tag = SceneTag::indoor;
    std::uint64_t seed = 0;

    // What a flat 100% reference panel records: illuminant + dark.
    Spectrum white_reference() const;
};

// Per-pixel reflectance from `n_materials` smooth random spectra laid out as
// Voronoi regions. Values lie in [0, 1].
SpectralCube gen_reflectance(std::size_t n_materials, Extent2 size, std::span<const double> wavelengths,
                             std::uint64_t seed);

// Smooth random material spectrum: random walk, spline smoothed, rescaled into [0, 1].
std::vector<double> gen_material(std::size_t bands, std::uint64_t seed);

// Radiance p = r * l + d + N(0, noise_sd) for a given reflectance cube.
SceneSample render_scene(const Spectrum& illuminant, const SpectralCube& reflectance, double noise_sd,
                         std::uint64_t seed, SceneTag tag = SceneTag::indoor);

SceneSample gen_scene(const Spectrum& illuminant, std::size_t n_materials, Extent2 size, double noise_sd,
                      std::uint64_t seed, SceneTag tag = SceneTag::indoor);

struct SplitIndices {
    std::vector<std::size_t> train, val, test;
};

template <typename Sample>
struct BasicDatasetSplit {
    std::vector<Sample> train, val, test;
};
using DatasetSplit = BasicDatasetSplit<SceneSample>;

inline constexpr double kTrainFraction = 0.7;
inline constexpr double kValFraction = 0.1;

/// Deterministic 70/10/20 partition that keeps the indoor/outdoor ratio of
/// every split close to the overall ratio. Needs at least 10 items.
SplitIndices split_indices(std::span<const SceneTag> tags, std::uint64_t seed);
DatasetSplit split_dataset(std::vector<SceneSample> samples, std::uint64_t seed);

// Uniformly random placement that avoids masked pixels. Throws CropError when none exists.
SceneSample random_crop(const SceneSample& sample, Extent2 crop, std::uint64_t seed);

// Counter-clockwise rotation by 90 degrees per quarter turn, quarter_turns in [0, 3].
SpectralCube rotate(const SpectralCube& cube, int quarter_turns);
SceneSample rotate(const SceneSample& sample, int quarter_turns);

/// For each sample: `crops_per_image` random crops, each emitted unrotated and
/// at 90, 180 and 270 degrees.
std::vector<SceneSample> build_training_set(std::span<const SceneSample> train, std::size_t crops_per_image,
                                            Extent2 crop, std::uint64_t seed);

inline constexpr std::size_t kDefaultCropsPerImage = 10;

struct SynthOptions {
    std::size_t count = 200;
    std::size_t bands = 204;
    Extent2 size{32, 32};
    std::size_t n_materials = 8;
    double noise_sd = 0.0;
    std::vector<IlluminantFamily> families; // empty = all
    std::uint64_t seed = 0;
};

struct SynthSample {
    SceneSample sample;
    IlluminantFamily family = IlluminantFamily::blackbody;
};

// Scenes with sampled illuminants on a uniform 400-1000 nm grid. Outdoor
// (daylight) and indoor families are drawn with equal probability when both
// are allowed.
std::vector<SynthSample> generate_dataset(const SynthOptions& options);

// On-disk dataset: ENVI cube pairs, illuminant/dark CSVs and a tab-separated manifest.
struct ManifestEntry {
    std::filesystem::path header;
    std::filesystem::path payload;
    std::filesystem::path illuminant;
    std::filesystem::path dark;
    SceneTag tag = SceneTag::indoor;
    std::uint64_t seed = 0;
    std::string family;
};

void write_manifest(const std::filesystem::path& path, std::span<const ManifestEntry> entries);
// Paths come back resolved against the manifest's directory.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);

ManifestEntry save_sample(const SceneSample& sample, const std::filesystem::path& dir, const std::string& stem,
                          std::string family);
SceneSample load_sample(const ManifestEntry& entry);

} // namespace specrec
