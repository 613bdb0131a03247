#include "specrec/resnet3d.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "specrec/error.hpp"
#include "specrec/random.hpp"
#include "text_util.hpp"

namespace specrec {

using ad::Index3;
using ad::Mode;
using ad::Tensor;

namespace {

Index3 half(Index3 k) { return {k.d / 2, k.h / 2, k.w / 2}; }

constexpr Index3 kPoolKernel{3, 3, 3};
constexpr Index3 kPoolStride{2, 2, 2};
constexpr Index3 kPoolPad{1, 1, 1};
constexpr Index3 kUnit{1, 1, 1};
constexpr Index3 kDown{2, 2, 2};
constexpr Index3 kZero{0, 0, 0};

// Every conv feeds a batchnorm, so the conv scale only sets SGD's effective step.
constexpr double kConvInitGain = 0.3;
constexpr double kHeadInitGain = 0.1;

std::string format_index(Index3 v) { return ad::to_string(v); }

Index3 parse_index(std::string_view key, std::string_view text) {
    const auto parts = detail::split(detail::trim(text), 'x');
    if (parts.size() == 3) {
        auto d = detail::parse_int(parts[0]), h = detail::parse_int(parts[1]), w = detail::parse_int(parts[2]);
        if (d && h && w && *d > 0 && *h > 0 && *w > 0) {
            return {static_cast<std::size_t>(*d), static_cast<std::size_t>(*h), static_cast<std::size_t>(*w)};
        }
    }
    throw ConfigError("model config: " + std::string(key) + " expects DxHxW, got '" + std::string(text) + "'");
}

std::size_t parse_count(std::string_view key, std::string_view text) {
    auto v = detail::parse_int(text);
    if (!v || *v < 0) {
        throw ConfigError("model config: " + std::string(key) + " expects a non-negative integer, got '" +
                          std::string(text) + "'");
    }
    return static_cast<std::size_t>(*v);
}

struct Extent {
    std::size_t d, h, w;
};

Extent propagate(const std::string& name, Extent in, Index3 k, Index3 s, Index3 p) {
    const std::size_t ins[3] = {in.d, in.h, in.w};
    const std::size_t ks[3] = {k.d, k.h, k.w}, ss[3] = {s.d, s.h, s.w}, ps[3] = {p.d, p.h, p.w};
    std::size_t out[3];
    static const char* axis[3] = {"depth", "height", "width"};
    for (int a = 0; a < 3; ++a) {
        if (ss[a] > 1 && ins[a] < ss[a]) {
            throw ShapeError(name + ": " + axis[a] + " extent " + std::to_string(ins[a]) + " is smaller than stride " +
                             std::to_string(ss[a]) + " (input " + std::to_string(in.d) + "x" + std::to_string(in.h) +
                             "x" + std::to_string(in.w) + ")");
        }
        out[a] = ad::output_extent(ins[a], ks[a], ss[a], ps[a]);
        if (out[a] == 0) {
            throw ShapeError(name + ": " + axis[a] + " extent vanishes (input " + std::to_string(in.d) + "x" +
                             std::to_string(in.h) + "x" + std::to_string(in.w) + ")");
        }
    }
    return {out[0], out[1], out[2]};
}

std::string stage_name(std::size_t stage) { return "conv" + std::to_string(stage + 2); }

} // namespace

ModelConfig ModelConfig::paper() { return ModelConfig{}; }

ModelConfig ModelConfig::desk() {
    ModelConfig c;
    c.scale = 0.25;
    c.input_size = 32;
    return c;
}

std::size_t ModelConfig::scaled(std::size_t channels) const {
    const auto v = static_cast<std::size_t>(std::llround(double(channels) * scale));
    return v == 0 ? 1 : v;
}

std::vector<std::size_t> ModelConfig::stage_widths() const {
    std::vector<std::size_t> w;
    for (auto c : block_channels) w.push_back(scaled(c));
    return w;
}

void ModelConfig::validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError("model config: " + msg); };
    if (input_bands == 0) fail("input_bands must be positive");
    if (output_bands == 0) fail("output_bands must be positive");
    if (stem_channels == 0) fail("stem_channels must be positive");
    if (block_channels.empty()) fail("block_channels must not be empty");
    for (auto c : block_channels) {
        if (c == 0) fail("block_channels entries must be positive");
    }
    if (blocks_per_stage == 0) fail("blocks_per_stage must be positive");
    if (!(scale > 0.0) || !std::isfinite(scale)) fail("scale must be a positive real");
    if (input_size == 0) fail("input_size must be positive");
    if (band_factor == 0) fail("band_factor must be positive");
    for (auto k : {block_kernel, stem_kernel}) {
        if (k.d == 0 || k.h == 0 || k.w == 0) fail("kernel extents must be positive");
    }
}

std::string ModelConfig::to_text() const {
    std::ostringstream o;
    o << "input_bands = " << input_bands << "\n";
    o << "output_bands = " << output_bands << "\n";
    o << "stem_channels = " << stem_channels << "\n";
    o << "block_channels = ";
    for (std::size_t i = 0; i < block_channels.size(); ++i) o << (i ? "," : "") << block_channels[i];
    o << "\n";
    o << "blocks_per_stage = " << blocks_per_stage << "\n";
    o << "block_kernel = " << format_index(block_kernel) << "\n";
    o << "stem_kernel = " << format_index(stem_kernel) << "\n";
    o << "scale = " << detail::format_double(scale) << "\n";
    o << "input_size = " << input_size << "\n";
    o << "band_factor = " << band_factor << "\n";
    return o.str();
}

ModelConfig ModelConfig::from_text(std::string_view text) {
    ModelConfig c;
    std::size_t line_no = 0;
    for (auto raw : detail::split(text, '\n')) {
        ++line_no;
        auto line = detail::trim(raw);
        if (line.empty() || line.front() == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw ConfigError("model config line " + std::to_string(line_no) + ": expected key = value");
        }
        const auto key = std::string(detail::trim(line.substr(0, eq)));
        const auto value = detail::trim(line.substr(eq + 1));
        if (key == "input_bands") c.input_bands = parse_count(key, value);
        else if (key == "output_bands") c.output_bands = parse_count(key, value);
        else if (key == "stem_channels") c.stem_channels = parse_count(key, value);
        else if (key == "block_channels") {
            c.block_channels.clear();
            for (auto part : detail::split(value, ',')) c.block_channels.push_back(parse_count(key, part));
        } else if (key == "blocks_per_stage") c.blocks_per_stage = parse_count(key, value);
        else if (key == "block_kernel") c.block_kernel = parse_index(key, value);
        else if (key == "stem_kernel") c.stem_kernel = parse_index(key, value);
        else if (key == "scale") {
            auto v = detail::parse_double(value);
            if (!v) throw ConfigError("model config: scale expects a real, got '" + std::string(value) + "'");
            c.scale = *v;
        } else if (key == "input_size") c.input_size = parse_count(key, value);
        else if (key == "band_factor") c.band_factor = parse_count(key, value);
        else throw ConfigError("model config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
    c.validate();
    return c;
}

std::string LayerShape::extent() const {
    return std::to_string(channels) + "x" + std::to_string(depth) + "x" + std::to_string(height) + "x" +
           std::to_string(width);
}

ShapeReport infer_shapes(const ModelConfig& config, Index3 input) {
    config.validate();
    if (input.d != config.input_bands) {
        throw ShapeError("conv1: input depth " + std::to_string(input.d) + " does not match input_bands " +
                         std::to_string(config.input_bands));
    }
    if (input.h == 0 || input.w == 0) throw ShapeError("conv1: empty spatial input");
    ShapeReport r;
    Extent e{input.d, input.h, input.w};
    e = propagate("conv1", e, config.stem_kernel, kDown, half(config.stem_kernel));
    r.stages.push_back({"conv1", config.stem_width(), e.d, e.h, e.w});
    e = propagate("maxpool", e, kPoolKernel, kPoolStride, kPoolPad);
    r.stages.push_back({"maxpool", config.stem_width(), e.d, e.h, e.w});
    const auto widths = config.stage_widths();
    for (std::size_t s = 0; s < widths.size(); ++s) {
        for (std::size_t b = 0; b < config.blocks_per_stage; ++b) {
            const auto name = stage_name(s) + "_" + std::to_string(b + 1);
            const Index3 stride = (s > 0 && b == 0) ? kDown : kUnit;
            e = propagate(name, e, config.block_kernel, stride, half(config.block_kernel));
            e = propagate(name, e, config.block_kernel, kUnit, half(config.block_kernel));
        }
        r.stages.push_back({stage_name(s) + "_x", widths[s], e.d, e.h, e.w});
    }
    r.pooled = {"avgpool", widths.back(), 1, 1, 1};
    r.head = config.output_bands;
    return r;
}

template <typename T>
Tensor<T> BasicBlock3d<T>::forward(const Tensor<T>& x, Mode mode) {
    auto out = ad::relu(ad::batchnorm(ad::conv3d(x, conv1), bn1, mode));
    out = ad::batchnorm(ad::conv3d(out, conv2), bn2, mode);
    Tensor<T> identity = x;
    if (shortcut) identity = ad::batchnorm(ad::conv3d(x, *shortcut), *shortcut_bn, mode);
    return ad::relu(ad::add(out, identity));
}

template <typename T>
Tensor<T> Model<T>::forward(const Tensor<T>& batch) {
    const auto& s = batch.shape();
    if (s.size() != 5 || s[1] != 1) {
        throw ShapeError("model input must be [N][1][bands][H][W], got " + ad::to_string(s));
    }
    infer_shapes(config, {s[2], s[3], s[4]});
    auto x = ad::relu(ad::batchnorm(ad::conv3d(batch, stem), stem_bn, mode));
    x = ad::maxpool3d(x, kPoolKernel, kPoolStride, kPoolPad);
    for (auto& b : blocks) x = b.forward(x, mode);
    return ad::linear(ad::avgpool3d_global(x), fc);
}

template <typename T>
std::vector<NamedParameter<T>> Model<T>::parameters() const {
    std::vector<NamedParameter<T>> p;
    auto bn = [&](const std::string& n, const ad::BatchNorm3d<T>& b) {
        p.push_back({n + ".gamma", b.gamma});
        p.push_back({n + ".beta", b.beta});
    };
    p.push_back({"conv1.weight", stem.weight});
    bn("bn1", stem_bn);
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        const auto& b = blocks[i];
        const auto& n = block_names[i];
        p.push_back({n + ".conv1.weight", b.conv1.weight});
        bn(n + ".bn1", b.bn1);
        p.push_back({n + ".conv2.weight", b.conv2.weight});
        bn(n + ".bn2", b.bn2);
        if (b.shortcut) {
            p.push_back({n + ".shortcut.weight", b.shortcut->weight});
            bn(n + ".shortcut_bn", *b.shortcut_bn);
        }
    }
    p.push_back({"fc.weight", fc.weight});
    p.push_back({"fc.bias", fc.bias});
    return p;
}

template <typename T>
std::vector<NamedBuffer> Model<T>::buffers() {
    std::vector<NamedBuffer> out;
    auto bn = [&](const std::string& n, ad::BatchNorm3d<T>& b) {
        out.push_back({n + ".running_mean", &b.running_mean});
        out.push_back({n + ".running_var", &b.running_var});
    };
    bn("bn1", stem_bn);
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        auto& b = blocks[i];
        const auto& n = block_names[i];
        bn(n + ".bn1", b.bn1);
        bn(n + ".bn2", b.bn2);
        if (b.shortcut_bn) bn(n + ".shortcut_bn", *b.shortcut_bn);
    }
    return out;
}

template <typename T>
std::size_t Model<T>::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : parameters()) n += p.tensor.numel();
    return n;
}

template <typename T>
void Model<T>::save(TensorArchive& archive) const {
    archive.metadata["model.config"] = config.to_text();
    for (const auto& p : parameters()) archive.add(p.name, p.tensor);
    for (const auto& b : const_cast<Model*>(this)->buffers()) {
        archive.add(b.name, StoredType::f64, {b.values->size()}, *b.values);
    }
}

template <typename T>
void Model<T>::load(const TensorArchive& archive) {
    for (auto& p : parameters()) archive.load_into(p.name, p.tensor);
    for (auto& b : buffers()) {
        const auto& s = archive.at(b.name);
        if (s.values.size() != b.values->size()) {
            throw LoadError("checkpoint buffer '" + b.name + "' has " + std::to_string(s.values.size()) +
                            " values, model expects " + std::to_string(b.values->size()));
        }
        *b.values = s.values;
    }
}

template <typename T>
Model<T> build_model(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    Model<T> m;
    m.config = config;
    std::mt19937_64 rng(derive_seed(seed, {0x30de1}));
    const auto stem_w = config.stem_width();
    m.stem = ad::make_conv3d<T>(1, stem_w, config.stem_kernel, kDown, half(config.stem_kernel), rng, false, kConvInitGain);
    m.stem_bn = ad::BatchNorm3d<T>(stem_w);
    std::size_t in = stem_w;
    const auto widths = config.stage_widths();
    const Index3 pad = half(config.block_kernel);
    for (std::size_t s = 0; s < widths.size(); ++s) {
        for (std::size_t b = 0; b < config.blocks_per_stage; ++b) {
            const Index3 stride = (s > 0 && b == 0) ? kDown : kUnit;
            const std::size_t out = widths[s];
            BasicBlock3d<T> blk;
            blk.conv1 = ad::make_conv3d<T>(in, out, config.block_kernel, stride, pad, rng, false, kConvInitGain);
            blk.bn1 = ad::BatchNorm3d<T>(out);
            blk.conv2 = ad::make_conv3d<T>(out, out, config.block_kernel, kUnit, pad, rng, false, kConvInitGain);
            blk.bn2 = ad::BatchNorm3d<T>(out);
            if (stride != kUnit || in != out) {
                blk.shortcut = ad::make_conv3d<T>(in, out, kUnit, stride, kZero, rng, false, kConvInitGain);
                blk.shortcut_bn = ad::BatchNorm3d<T>(out);
            }
            m.blocks.push_back(std::move(blk));
            m.block_names.push_back(stage_name(s) + "_" + std::to_string(b + 1));
            in = out;
        }
    }
    m.fc = ad::make_linear<T>(in, config.output_bands, rng, kHeadInitGain);
    return m;
}

template <typename T>
Model<T> load_model(const TensorArchive& archive) {
    auto config = ModelConfig::from_text(archive.meta("model.config"));
    auto m = build_model<T>(config, 0);
    m.load(archive);
    return m;
}

template struct BasicBlock3d<float>;
template struct BasicBlock3d<double>;
template class Model<float>;
template class Model<double>;
template Model<float> build_model<float>(const ModelConfig&, std::uint64_t);
template Model<double> build_model<double>(const ModelConfig&, std::uint64_t);
template Model<float> load_model<float>(const TensorArchive&);
template Model<double> load_model<double>(const TensorArchive&);

} // namespace specrec
