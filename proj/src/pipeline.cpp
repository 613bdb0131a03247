#include "specrec/pipeline.hpp"

#include <algorithm>
#include <numeric>

#include "specrec/error.hpp"

namespace specrec {

SpectralCube decimate_for(const SpectralCube& cube, const ModelConfig& config) {
    auto d = downsample_bands(cube, config.band_factor);
    if (d.bands() != config.input_bands) {
        throw ShapeError("cube has " + std::to_string(cube.bands()) + " bands; decimating by " +
                         std::to_string(config.band_factor) + " gives " + std::to_string(d.bands()) +
                         ", model expects " + std::to_string(config.input_bands));
    }
    return d;
}

std::vector<float> prepare_window(const SpectralCube& d, const ModelConfig& config, std::size_t row,
                                  std::size_t col) {
    const std::size_t s = config.input_size;
    if (row + s > d.height() || col + s > d.width()) {
        throw ShapeError("cube " + std::to_string(d.height()) + "x" + std::to_string(d.width()) +
                         " is smaller than the model input window " + std::to_string(s) + "x" + std::to_string(s) +
                         " at (" + std::to_string(row) + "," + std::to_string(col) + ")");
    }
    std::vector<float> out(d.bands() * s * s);
    float peak = 0.0f;
    for (std::size_t b = 0; b < d.bands(); ++b)
        for (std::size_t r = 0; r < s; ++r)
            for (std::size_t c = 0; c < s; ++c) {
                const float v = d.masked(row + r, col + c) ? 0.0f : d.at(b, row + r, col + c);
                out[(b * s + r) * s + c] = v;
                peak = std::max(peak, v);
            }
    if (peak > 0.0f) {
        for (auto& v : out) v /= peak;
    }
    return out;
}

std::vector<float> prepare_input(const SpectralCube& cube, const ModelConfig& config) {
    const auto d = decimate_for(cube, config);
    const std::size_t s = config.input_size;
    if (d.height() < s || d.width() < s) {
        throw ShapeError("cube " + std::to_string(d.height()) + "x" + std::to_string(d.width()) +
                         " is smaller than the model input " + std::to_string(s) + "x" + std::to_string(s));
    }
    return prepare_window(d, config, (d.height() - s) / 2, (d.width() - s) / 2);
}

std::vector<double> prepare_target(const Spectrum& illuminant, const ModelConfig& config) {
    if (illuminant.values.size() != config.output_bands) {
        throw ShapeError("illuminant has " + std::to_string(illuminant.values.size()) + " bands, model predicts " +
                         std::to_string(config.output_bands));
    }
    const double peak = *std::max_element(illuminant.values.begin(), illuminant.values.end());
    if (!(peak > 0.0)) throw NumericalError("illuminant '" + illuminant.label + "' has no positive value");
    std::vector<double> t(illuminant.values);
    for (auto& v : t) v /= peak;
    return t;
}

Example make_example(const SceneSample& sample, const ModelConfig& config) {
    return {prepare_input(sample.radiance, config), prepare_target(sample.illuminant, config)};
}

std::vector<Example> make_examples(std::span<const SceneSample> samples, const ModelConfig& config) {
    std::vector<Example> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(make_example(s, config));
    return out;
}

ad::Tensor<float> stack_inputs(std::span<const Example> examples, std::span<const std::size_t> indices,
                               const ModelConfig& config) {
    const std::size_t s = config.input_size, per = config.input_bands * s * s;
    std::vector<float> data;
    data.reserve(indices.size() * per);
    for (auto i : indices) {
        const auto& in = examples[i].input;
        if (in.size() != per) {
            throw ShapeError("example " + std::to_string(i) + " has " + std::to_string(in.size()) +
                             " input values, expected " + std::to_string(per));
        }
        data.insert(data.end(), in.begin(), in.end());
    }
    return ad::Tensor<float>({indices.size(), 1, config.input_bands, s, s}, std::move(data));
}

std::vector<std::vector<double>> predict(Model<float>& model, std::span<const Example> examples,
                                         std::size_t batch_size) {
    if (batch_size == 0) throw ArgumentError("batch size must be positive");
    ad::NoGradGuard no_grad;
    const auto saved = model.mode;
    model.mode = ad::Mode::eval;
    std::vector<std::vector<double>> out;
    out.reserve(examples.size());
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < examples.size(); i += batch_size) {
        idx.resize(std::min(batch_size, examples.size() - i));
        std::iota(idx.begin(), idx.end(), i);
        const auto y = model.forward(stack_inputs(examples, idx, model.config));
        const std::size_t B = model.config.output_bands;
        const auto v = y.values();
        for (std::size_t n = 0; n < idx.size(); ++n) out.emplace_back(v.begin() + n * B, v.begin() + (n + 1) * B);
    }
    model.mode = saved;
    return out;
}

} // namespace specrec
