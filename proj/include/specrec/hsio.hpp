#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace specrec {

enum class CubeKind { radiance, reflectance };
enum class Interleave { bsq, bil, bip };
enum class DataType { f32, u16 };

std::string_view to_string(Interleave il);
std::string_view to_string(DataType dt);
std::string_view to_string(CubeKind kind);
Interleave parse_interleave(std::string_view text);

// Sensor wavelength range used when a header carries no wavelength list.
inline constexpr double kDefaultMinWavelength = 400.0;
inline constexpr double kDefaultMaxWavelength = 1000.0;

// Uniform grid over [lo, hi] inclusive.
std::vector<double> uniform_wavelengths(std::size_t bands, double lo = kDefaultMinWavelength,
                                        double hi = kDefaultMaxWavelength);

struct Rect {
    std::size_t row = 0;
    std::size_t col = 0;
    std::size_t height = 0;
    std::size_t width = 0;
};

struct Extent2 {
    std::size_t height = 0;
    std::size_t width = 0;
};

/// Per-band vector over a wavelength grid: an illuminant, a dark reference or a
/// single pixel spectrum.
struct Spectrum {
    std::vector<double> values;
    std::vector<double> wavelengths;
    std::string label;

    std::size_t size() const { return values.size(); }
    void validate() const;
};

/// Hyperspectral cube stored band-major: data[(band * height + row) * width + col].
///
/// The mask, when present, marks excluded pixels (true = excluded) and has one
/// entry per spatial location.
class SpectralCube {
public:
    SpectralCube() = default;
    SpectralCube(std::size_t bands, std::size_t height, std::size_t width,
                 std::vector<double> wavelengths, CubeKind kind = CubeKind::radiance);
    SpectralCube(std::size_t bands, std::size_t height, std::size_t width, std::vector<float> data,
                 std::vector<double> wavelengths, CubeKind kind = CubeKind::radiance);

    std::size_t bands() const { return bands_; }
    std::size_t height() const { return height_; }
    std::size_t width() const { return width_; }
    std::size_t pixels() const { return height_ * width_; }
    CubeKind kind() const { return kind_; }
    void set_kind(CubeKind kind) { kind_ = kind; }

    float& at(std::size_t band, std::size_t row, std::size_t col) {
        return data_[(band * height_ + row) * width_ + col];
    }
    float at(std::size_t band, std::size_t row, std::size_t col) const {
        return data_[(band * height_ + row) * width_ + col];
    }

    std::span<float> data() { return data_; }
    std::span<const float> data() const { return data_; }
    std::span<const float> band(std::size_t b) const {
        return std::span<const float>(data_).subspan(b * pixels(), pixels());
    }
    std::vector<double> pixel_spectrum(std::size_t row, std::size_t col) const;

    const std::vector<double>& wavelengths() const { return wavelengths_; }

    bool has_mask() const { return !mask_.empty(); }
    bool masked(std::size_t row, std::size_t col) const {
        return has_mask() && mask_[row * width_ + col] != 0;
    }
    const std::vector<std::uint8_t>& mask() const { return mask_; }
    void set_mask(std::vector<std::uint8_t> mask);
    void clear_mask() { mask_.clear(); }

    // Throws ArgumentError when any cube invariant is violated.
    void validate() const;

    friend bool operator==(const SpectralCube&, const SpectralCube&) = default;

private:
    std::size_t bands_ = 0;
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::vector<float> data_;
    std::vector<double> wavelengths_;
    CubeKind kind_ = CubeKind::radiance;
    std::vector<std::uint8_t> mask_;
};

/// Subset of the ENVI text header needed to locate a raw payload.
struct CubeHeader {
    std::size_t samples = 0; // columns
    std::size_t lines = 0;   // rows
    std::size_t bands = 0;
    Interleave interleave = Interleave::bsq;
    DataType data_type = DataType::f32;
    std::vector<double> wavelengths;

    std::size_t element_size() const { return data_type == DataType::f32 ? 4 : 2; }
    std::size_t payload_bytes() const { return samples * lines * bands * element_size(); }
};

// Errors carry the 1-based line number of the offending field.
CubeHeader parse_header(std::string_view text);
std::string format_header(const CubeHeader& header);

SpectralCube read_cube(const std::filesystem::path& header_path,
                       const std::filesystem::path& payload_path);
void write_cube(const SpectralCube& cube, const std::filesystem::path& header_path,
                const std::filesystem::path& payload_path,
                Interleave interleave = Interleave::bsq, DataType data_type = DataType::f32);

// ENVI pairs conventionally share a stem: foo.hdr + foo.img.
std::filesystem::path payload_path_for(const std::filesystem::path& header_path);

/// Nearest-neighbour band decimation: output band b is input band b * factor.
SpectralCube downsample_bands(const SpectralCube& cube, std::size_t factor);
std::vector<double> downsample_bands(std::span<const double> values, std::size_t factor);
Spectrum downsample_bands(const Spectrum& spectrum, std::size_t factor);

SpectralCube apply_mask(const SpectralCube& cube, const Rect& rect);

// Two-column CSV with a `wavelength_nm,value` header line.
Spectrum read_spectrum_csv(const std::filesystem::path& path);
void write_spectrum_csv(const Spectrum& spectrum, const std::filesystem::path& path);
std::string format_spectrum_csv(const Spectrum& spectrum);

} // namespace specrec
