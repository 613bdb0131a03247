#include "specrec/hsio.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "byte_order.hpp"
#include "specrec/error.hpp"
#include "text_util.hpp"

namespace specrec {

namespace {

using detail::byteswap;
using detail::kLittleEndianHost;

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void check_wavelengths(std::span<const double> wl, std::size_t bands, const char* what) {
    if (wl.size() != bands) {
        throw ArgumentError(std::string(what) + ": wavelength count " + std::to_string(wl.size()) +
                            " does not match band count " + std::to_string(bands));
    }
    for (std::size_t i = 0; i < wl.size(); ++i) {
        if (!std::isfinite(wl[i])) throw ArgumentError(std::string(what) + ": non-finite wavelength");
        if (i > 0 && !(wl[i] > wl[i - 1])) {
            throw ArgumentError(std::string(what) + ": wavelengths must be strictly increasing");
        }
    }
}

// Offset of element (band, row, col) within a payload of the given interleave.
struct Layout {
    std::size_t bands, lines, samples;
    Interleave il;
    std::size_t offset(std::size_t b, std::size_t r, std::size_t c) const {
        switch (il) {
        case Interleave::bsq: return (b * lines + r) * samples + c;
        case Interleave::bil: return (r * bands + b) * samples + c;
        case Interleave::bip: return (r * samples + c) * bands + b;
        }
        return 0;
    }
};

} // namespace

std::string_view to_string(Interleave il) {
    switch (il) {
    case Interleave::bsq: return "bsq";
    case Interleave::bil: return "bil";
    case Interleave::bip: return "bip";
    }
    return "?";
}

std::string_view to_string(DataType dt) { return dt == DataType::f32 ? "f32" : "u16"; }

std::string_view to_string(CubeKind kind) {
    return kind == CubeKind::radiance ? "radiance" : "reflectance";
}

Interleave parse_interleave(std::string_view text) {
    const auto key = detail::lower(detail::trim(text));
    if (key == "bsq") return Interleave::bsq;
    if (key == "bil") return Interleave::bil;
    if (key == "bip") return Interleave::bip;
    throw UnsupportedFormatError("unknown interleave '" + std::string(text) + "'");
}

std::vector<double> uniform_wavelengths(std::size_t bands, double lo, double hi) {
    std::vector<double> wl(bands);
    if (bands == 1) {
        wl[0] = lo;
        return wl;
    }
    const double step = (hi - lo) / static_cast<double>(bands - 1);
    for (std::size_t i = 0; i < bands; ++i) wl[i] = lo + step * static_cast<double>(i);
    wl.back() = hi;
    return wl;
}

void Spectrum::validate() const {
    if (values.empty()) throw ArgumentError("spectrum '" + label + "' is empty");
    if (values.size() != wavelengths.size()) {
        throw ArgumentError("spectrum '" + label + "': " + std::to_string(values.size()) +
                            " values but " + std::to_string(wavelengths.size()) + " wavelengths");
    }
    for (double v : values) {
        if (!std::isfinite(v)) throw ArgumentError("spectrum '" + label + "' has non-finite values");
    }
    check_wavelengths(wavelengths, wavelengths.size(), "spectrum");
}

SpectralCube::SpectralCube(std::size_t bands, std::size_t height, std::size_t width,
                           std::vector<double> wavelengths, CubeKind kind)
    : SpectralCube(bands, height, width, std::vector<float>(bands * height * width, 0.0f),
                   std::move(wavelengths), kind) {}

SpectralCube::SpectralCube(std::size_t bands, std::size_t height, std::size_t width,
                           std::vector<float> data, std::vector<double> wavelengths, CubeKind kind)
    : bands_(bands),
      height_(height),
      width_(width),
      data_(std::move(data)),
      wavelengths_(std::move(wavelengths)),
      kind_(kind) {
    if (bands == 0 || height == 0 || width == 0) {
        throw ArgumentError("cube dimensions must be positive, got " + std::to_string(bands) + "x" +
                            std::to_string(height) + "x" + std::to_string(width));
    }
    if (data_.size() != bands * height * width) {
        throw ArgumentError("cube data has " + std::to_string(data_.size()) + " elements, expected " +
                            std::to_string(bands * height * width));
    }
    check_wavelengths(wavelengths_, bands_, "cube");
}

std::vector<double> SpectralCube::pixel_spectrum(std::size_t row, std::size_t col) const {
    std::vector<double> out(bands_);
    for (std::size_t b = 0; b < bands_; ++b) out[b] = at(b, row, col);
    return out;
}

void SpectralCube::set_mask(std::vector<std::uint8_t> mask) {
    if (!mask.empty() && mask.size() != pixels()) {
        throw ArgumentError("mask has " + std::to_string(mask.size()) + " entries, expected " +
                            std::to_string(pixels()));
    }
    mask_ = std::move(mask);
}

void SpectralCube::validate() const {
    if (bands_ == 0 || height_ == 0 || width_ == 0) throw ArgumentError("cube has an empty dimension");
    if (data_.size() != bands_ * height_ * width_) throw ArgumentError("cube data size mismatch");
    check_wavelengths(wavelengths_, bands_, "cube");
    for (float v : data_) {
        if (!std::isfinite(v)) throw ArgumentError("cube contains non-finite values");
        if (kind_ == CubeKind::reflectance && v < 0.0f) {
            throw ArgumentError("reflectance cube contains negative values");
        }
    }
    if (!mask_.empty() && mask_.size() != pixels()) throw ArgumentError("mask size mismatch");
}

CubeHeader parse_header(std::string_view text) {
    CubeHeader h;
    bool seen_samples = false, seen_lines = false, seen_bands = false;
    const auto lines = detail::split(text, '\n');
    if (lines.empty() || detail::trim(lines[0]) != "ENVI") {
        throw ParseError("line 1: header must start with 'ENVI'");
    }

    auto positive = [](std::string_view v, std::size_t lineno, const std::string& key) {
        auto n = detail::parse_int(v);
        if (!n || *n <= 0) {
            throw ParseError("line " + std::to_string(lineno) + ": '" + key +
                             "' must be a positive integer, got '" + std::string(detail::trim(v)) + "'");
        }
        return static_cast<std::size_t>(*n);
    };

    for (std::size_t i = 1; i < lines.size(); ++i) {
        const std::size_t lineno = i + 1;
        auto line = detail::trim(lines[i]);
        if (line.empty() || line.front() == ';') continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw ParseError("line " + std::to_string(lineno) + ": expected 'key = value'");
        }
        const auto key = detail::lower(detail::trim(line.substr(0, eq)));
        std::string value(detail::trim(line.substr(eq + 1)));

        // Brace values may continue over several lines.
        if (!value.empty() && value.front() == '{') {
            while (value.find('}') == std::string::npos) {
                if (++i >= lines.size()) {
                    throw ParseError("line " + std::to_string(lineno) + ": unterminated '{' in '" + key + "'");
                }
                value += ' ';
                value += detail::trim(lines[i]);
            }
            const auto close = value.find('}');
            value = value.substr(1, close - 1);
        }

        if (key == "samples") {
            h.samples = positive(value, lineno, key);
            seen_samples = true;
        } else if (key == "lines") {
            h.lines = positive(value, lineno, key);
            seen_lines = true;
        } else if (key == "bands") {
            h.bands = positive(value, lineno, key);
            seen_bands = true;
        } else if (key == "data type") {
            auto code = detail::parse_int(value);
            if (!code) throw ParseError("line " + std::to_string(lineno) + ": 'data type' is not an integer");
            if (*code == 4) {
                h.data_type = DataType::f32;
            } else if (*code == 12) {
                h.data_type = DataType::u16;
            } else {
                throw UnsupportedFormatError("line " + std::to_string(lineno) + ": data type " +
                                             std::to_string(*code) + " not supported (4=f32, 12=u16)");
            }
        } else if (key == "interleave") {
            try {
                h.interleave = parse_interleave(value);
            } catch (const UnsupportedFormatError&) {
                throw UnsupportedFormatError("line " + std::to_string(lineno) + ": unknown interleave '" +
                                             value + "'");
            }
        } else if (key == "byte order") {
            auto order = detail::parse_int(value);
            if (!order) throw ParseError("line " + std::to_string(lineno) + ": 'byte order' is not an integer");
            if (*order != 0) {
                throw UnsupportedFormatError("line " + std::to_string(lineno) + ": only little-endian payloads");
            }
        } else if (key == "header offset") {
            auto off = detail::parse_int(value);
            if (!off || *off != 0) {
                throw UnsupportedFormatError("line " + std::to_string(lineno) + ": header offset must be 0");
            }
        } else if (key == "wavelength") {
            h.wavelengths.clear();
            for (auto item : detail::split(value, ',')) {
                if (detail::trim(item).empty()) continue;
                auto v = detail::parse_double(item);
                if (!v) {
                    throw ParseError("line " + std::to_string(lineno) + ": bad wavelength '" +
                                     std::string(detail::trim(item)) + "'");
                }
                h.wavelengths.push_back(*v);
            }
        }
        // Other ENVI keys (description, sensor type, map info, ...) are ignored.
    }

    if (!seen_samples) throw ParseError("header is missing 'samples'");
    if (!seen_lines) throw ParseError("header is missing 'lines'");
    if (!seen_bands) throw ParseError("header is missing 'bands'");
    if (!h.wavelengths.empty() && h.wavelengths.size() != h.bands) {
        throw ParseError("header lists " + std::to_string(h.wavelengths.size()) + " wavelengths for " +
                         std::to_string(h.bands) + " bands");
    }
    return h;
}

std::string format_header(const CubeHeader& h) {
    std::string out = "ENVI\n";
    out += "samples = " + std::to_string(h.samples) + "\n";
    out += "lines = " + std::to_string(h.lines) + "\n";
    out += "bands = " + std::to_string(h.bands) + "\n";
    out += "header offset = 0\n";
    out += "file type = ENVI Standard\n";
    out += std::string("data type = ") + (h.data_type == DataType::f32 ? "4" : "12") + "\n";
    out += "interleave = " + std::string(to_string(h.interleave)) + "\n";
    out += "byte order = 0\n";
    if (!h.wavelengths.empty()) {
        out += "wavelength units = Nanometers\n";
        out += "wavelength = {";
        for (std::size_t i = 0; i < h.wavelengths.size(); ++i) {
            if (i > 0) out += (i % 8 == 0) ? ",\n " : ", ";
            out += detail::format_double(h.wavelengths[i]);
        }
        out += "}\n";
    }
    return out;
}

SpectralCube read_cube(const std::filesystem::path& header_path,
                       const std::filesystem::path& payload_path) {
    CubeHeader h;
    try {
        h = parse_header(read_file(header_path));
    } catch (const ParseError& e) {
        throw ParseError(header_path.string() + ": " + e.what());
    } catch (const UnsupportedFormatError& e) {
        throw UnsupportedFormatError(header_path.string() + ": " + e.what());
    }

    const std::string payload = read_file(payload_path);
    if (payload.size() != h.payload_bytes()) {
        throw PayloadError(payload_path.string() + ": payload is " + std::to_string(payload.size()) +
                           " bytes, header implies " + std::to_string(h.payload_bytes()));
    }

    const Layout layout{h.bands, h.lines, h.samples, h.interleave};
    std::vector<float> data(h.bands * h.lines * h.samples);
    const auto* raw = reinterpret_cast<const unsigned char*>(payload.data());
    std::size_t dst = 0;
    for (std::size_t b = 0; b < h.bands; ++b) {
        for (std::size_t r = 0; r < h.lines; ++r) {
            for (std::size_t c = 0; c < h.samples; ++c, ++dst) {
                const std::size_t src = layout.offset(b, r, c) * h.element_size();
                if (h.data_type == DataType::f32) {
                    std::uint32_t bits;
                    std::memcpy(&bits, raw + src, 4);
                    if constexpr (!kLittleEndianHost) bits = byteswap(bits);
                    data[dst] = std::bit_cast<float>(bits);
                } else {
                    std::uint16_t v;
                    std::memcpy(&v, raw + src, 2);
                    if constexpr (!kLittleEndianHost) v = byteswap(v);
                    data[dst] = static_cast<float>(v);
                }
            }
        }
    }

    auto wl = h.wavelengths.empty() ? uniform_wavelengths(h.bands) : h.wavelengths;
    return SpectralCube(h.bands, h.lines, h.samples, std::move(data), std::move(wl));
}

void write_cube(const SpectralCube& cube, const std::filesystem::path& header_path,
                const std::filesystem::path& payload_path, Interleave interleave, DataType data_type) {
    cube.validate();
    CubeHeader h;
    h.samples = cube.width();
    h.lines = cube.height();
    h.bands = cube.bands();
    h.interleave = interleave;
    h.data_type = data_type;
    h.wavelengths = cube.wavelengths();

    const Layout layout{h.bands, h.lines, h.samples, interleave};
    std::string payload(h.payload_bytes(), '\0');
    auto* raw = reinterpret_cast<unsigned char*>(payload.data());
    for (std::size_t b = 0; b < h.bands; ++b) {
        for (std::size_t r = 0; r < h.lines; ++r) {
            for (std::size_t c = 0; c < h.samples; ++c) {
                const std::size_t dst = layout.offset(b, r, c) * h.element_size();
                const float v = cube.at(b, r, c);
                if (data_type == DataType::f32) {
                    auto bits = std::bit_cast<std::uint32_t>(v);
                    if constexpr (!kLittleEndianHost) bits = byteswap(bits);
                    std::memcpy(raw + dst, &bits, 4);
                } else {
                    if (!(v >= 0.0f && v <= 65535.0f && std::nearbyint(v) == v)) {
                        throw ArgumentError("value " + std::to_string(v) +
                                            " is not representable as u16 without loss");
                    }
                    auto u = static_cast<std::uint16_t>(v);
                    if constexpr (!kLittleEndianHost) u = byteswap(u);
                    std::memcpy(raw + dst, &u, 2);
                }
            }
        }
    }

    {
        std::ofstream out(header_path, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + header_path.string());
        out << format_header(h);
        if (!out) throw IoError("write failed: " + header_path.string());
    }
    std::ofstream out(payload_path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + payload_path.string());
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!out) throw IoError("write failed: " + payload_path.string());
}

std::filesystem::path payload_path_for(const std::filesystem::path& header_path) {
    auto p = header_path;
    p.replace_extension(".img");
    return p;
}

std::vector<double> downsample_bands(std::span<const double> values, std::size_t factor) {
    if (factor < 1) throw ArgumentError("downsample factor must be >= 1");
    std::vector<double> out;
    out.reserve((values.size() + factor - 1) / factor);
    for (std::size_t b = 0; b < values.size(); b += factor) out.push_back(values[b]);
    return out;
}

Spectrum downsample_bands(const Spectrum& spectrum, std::size_t factor) {
    return Spectrum{downsample_bands(spectrum.values, factor),
                    downsample_bands(spectrum.wavelengths, factor), spectrum.label};
}

SpectralCube downsample_bands(const SpectralCube& cube, std::size_t factor) {
    if (factor < 1) throw ArgumentError("downsample factor must be >= 1");
    const std::size_t out_bands = (cube.bands() + factor - 1) / factor;
    std::vector<float> data;
    data.reserve(out_bands * cube.pixels());
    for (std::size_t b = 0; b < cube.bands(); b += factor) {
        auto band = cube.band(b);
        data.insert(data.end(), band.begin(), band.end());
    }
    SpectralCube out(out_bands, cube.height(), cube.width(), std::move(data),
                     downsample_bands(cube.wavelengths(), factor), cube.kind());
    out.set_mask(cube.mask());
    return out;
}

SpectralCube apply_mask(const SpectralCube& cube, const Rect& rect) {
    if (rect.row + rect.height > cube.height() || rect.col + rect.width > cube.width()) {
        throw ArgumentError("mask rect [" + std::to_string(rect.row) + "," + std::to_string(rect.col) + " " +
                            std::to_string(rect.height) + "x" + std::to_string(rect.width) +
                            "] exceeds cube " + std::to_string(cube.height()) + "x" +
                            std::to_string(cube.width()));
    }
    SpectralCube out = cube;
    if (rect.height == 0 || rect.width == 0) return out;
    std::vector<std::uint8_t> mask = cube.has_mask() ? cube.mask() : std::vector<std::uint8_t>(cube.pixels(), 0);
    for (std::size_t r = rect.row; r < rect.row + rect.height; ++r) {
        std::fill_n(mask.begin() + static_cast<std::ptrdiff_t>(r * cube.width() + rect.col), rect.width, 1);
    }
    out.set_mask(std::move(mask));
    return out;
}

Spectrum read_spectrum_csv(const std::filesystem::path& path) {
    const auto text = read_file(path);
    Spectrum s;
    s.label = path.stem().string();
    const auto lines = detail::split(text, '\n');
    bool header_seen = false;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        auto line = detail::trim(lines[i]);
        if (line.empty()) continue;
        if (!header_seen) {
            header_seen = true;
            if (!detail::parse_double(detail::split(line, ',')[0])) continue;
        }
        auto cols = detail::split(line, ',');
        if (cols.size() != 2) {
            throw ParseError(path.string() + ": line " + std::to_string(i + 1) + ": expected two columns");
        }
        auto wl = detail::parse_double(cols[0]);
        auto v = detail::parse_double(cols[1]);
        if (!wl || !v) {
            throw ParseError(path.string() + ": line " + std::to_string(i + 1) + ": bad number");
        }
        s.wavelengths.push_back(*wl);
        s.values.push_back(*v);
    }
    try {
        s.validate();
    } catch (const ArgumentError& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    return s;
}

std::string format_spectrum_csv(const Spectrum& s) {
    std::string out = "wavelength_nm,value\n";
    for (std::size_t i = 0; i < s.values.size(); ++i) {
        out += detail::format_double(s.wavelengths[i]);
        out += ',';
        out += detail::format_double(s.values[i]);
        out += '\n';
    }
    return out;
}

void write_spectrum_csv(const Spectrum& spectrum, const std::filesystem::path& path) {
    spectrum.validate();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << format_spectrum_csv(spectrum);
    if (!out) throw IoError("write failed: " + path.string());
}

} // namespace specrec
