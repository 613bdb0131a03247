#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "specrec/checkpoint.hpp"
#include "specrec/ops.hpp"

namespace specrec {

struct ModelConfig {
    std::size_t input_bands = 51;
    std::size_t output_bands = 204;
    std::size_t stem_channels = 64;
    std::vector<std::size_t> block_channels{64, 128, 256, 512};
    std::size_t blocks_per_stage = 2;
    ad::Index3 block_kernel{7, 3, 3};
    ad::Index3 stem_kernel{11, 7, 7};
    double scale = 1.0;           // channel multiplier
    std::size_t input_size = 256; // square spatial extent fed to the network
    std::size_t band_factor = 4;  // raw bands per input band

    static ModelConfig paper();
    static ModelConfig desk(); // scale 0.25, 32x32 input

    std::size_t scaled(std::size_t channels) const; // max(1, round(channels * scale))
    std::size_t stem_width() const { return scaled(stem_channels); }
    std::vector<std::size_t> stage_widths() const;

    void validate() const; // ConfigError

    // `key = value` lines; from_text(to_text()) reproduces the same text.
    std::string to_text() const;
    static ModelConfig from_text(std::string_view text);

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct LayerShape {
    std::string name;
    std::size_t channels = 0, depth = 0, height = 0, width = 0;

    std::string extent() const; // "64x26x128x128"
};

struct ShapeReport {
    std::vector<LayerShape> stages; // conv1, maxpool, then one row per residual stage
    LayerShape pooled;
    std::size_t head = 0;
};

/// Symbolic propagation of a {bands, height, width} input. ShapeError names
/// the first layer whose output would vanish or whose input is shorter than
/// its stride, and rejects a depth different from config.input_bands.
ShapeReport infer_shapes(const ModelConfig& config, ad::Index3 input);

template <typename T>
struct BasicBlock3d {
    ad::Conv3dParams<T> conv1, conv2;
    ad::BatchNorm3d<T> bn1, bn2;
    std::optional<ad::Conv3dParams<T>> shortcut;
    std::optional<ad::BatchNorm3d<T>> shortcut_bn;

    ad::Tensor<T> forward(const ad::Tensor<T>& x, ad::Mode mode);
};

template <typename T>
struct NamedParameter {
    std::string name;
    ad::Tensor<T> tensor;
};

struct NamedBuffer {
    std::string name;
    std::vector<double>* values;
};

template <typename T>
class Model {
public:
    ModelConfig config;
    ad::Conv3dParams<T> stem;
    ad::BatchNorm3d<T> stem_bn;
    std::vector<BasicBlock3d<T>> blocks;
    std::vector<std::string> block_names; // conv2_1, conv2_2, conv3_1, ...
    ad::LinearParams<T> fc;
    ad::Mode mode = ad::Mode::train;

    // [N][1][input_bands][H][W] -> [N][output_bands]
    ad::Tensor<T> forward(const ad::Tensor<T>& batch);

    std::vector<NamedParameter<T>> parameters() const;
    std::vector<NamedBuffer> buffers();
    std::size_t parameter_count() const;

    void save(TensorArchive& archive) const; // weights, running stats, "model.config"
    void load(const TensorArchive& archive); // LoadError on missing/mismatched tensors
};

// ResNet3D-18 topology; Kaiming init drawn from `seed`.
template <typename T>
Model<T> build_model(const ModelConfig& config, std::uint64_t seed);

// Rebuilds from the archived config and restores all tensors.
template <typename T>
Model<T> load_model(const TensorArchive& archive);

} // namespace specrec
