#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "specrec/hsio.hpp"
#include "specrec/resnet3d.hpp"
#include "specrec/synthgen.hpp"

namespace specrec {

// A network-ready sample: [input_bands][size][size] input, unit-max target.
struct Example {
    std::vector<float> input;
    std::vector<double> target;
};

/// Band-decimates by config.band_factor, takes the centred
/// input_size x input_size window (offset by `origin` when given), zeroes
/// masked pixels and scales by the window maximum. ShapeError on a band
/// count that does not decimate to input_bands or a cube smaller than the window.
std::vector<float> prepare_input(const SpectralCube& cube, const ModelConfig& config);
std::vector<float> prepare_window(const SpectralCube& decimated, const ModelConfig& config, std::size_t row,
                                  std::size_t col);
SpectralCube decimate_for(const SpectralCube& cube, const ModelConfig& config);

// Scales to unit maximum; ShapeError when the length differs from output_bands.
std::vector<double> prepare_target(const Spectrum& illuminant, const ModelConfig& config);

Example make_example(const SceneSample& sample, const ModelConfig& config);
std::vector<Example> make_examples(std::span<const SceneSample> samples, const ModelConfig& config);

// Stacks examples[indices] into a [N][1][bands][size][size] tensor.
ad::Tensor<float> stack_inputs(std::span<const Example> examples, std::span<const std::size_t> indices,
                               const ModelConfig& config);

// Eval-mode forward in batches; raw network outputs (no clamping).
std::vector<std::vector<double>> predict(Model<float>& model, std::span<const Example> examples,
                                         std::size_t batch_size = 4);

} // namespace specrec
