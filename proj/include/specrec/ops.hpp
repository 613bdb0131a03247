#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "specrec/tensor.hpp"

namespace specrec::ad {

struct Index3 {
    std::size_t d = 1, h = 1, w = 1;
    friend bool operator==(const Index3&, const Index3&) = default;
};

std::string to_string(const Index3& v);

// floor((in + 2 pad - kernel) / stride) + 1; 0 when the padded input is shorter than the kernel.
constexpr std::size_t output_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad) {
    return in + 2 * pad < kernel ? 0 : (in + 2 * pad - kernel) / stride + 1;
}

enum class Mode { train, eval };

template <typename T>
struct Conv3dParams {
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    Index3 kernel, stride, padding;
    Tensor<T> weight;              // [out][in][kd][kh][kw]
    std::optional<Tensor<T>> bias; // [out]

    void validate() const;
};

// Kaiming-normal weights (std = gain * sqrt(2 / fan_in)) drawn from `rng`, no bias by default.
template <typename T>
Conv3dParams<T> make_conv3d(std::size_t in_channels, std::size_t out_channels, Index3 kernel, Index3 stride,
                            Index3 padding, std::mt19937_64& rng, bool with_bias = false, double gain = 1.0);

/// 3D cross-correlation of [N][C][D][H][W] input; no kernel flip.
template <typename T>
Tensor<T> conv3d(const Tensor<T>& input, const Conv3dParams<T>& params);

// Saved state for the analytic conv gradient.
template <typename T>
struct Conv3dContext {
    Tensor<T> input;
    Tensor<T> weight;
    bool has_bias = false;
    Index3 stride, padding;
    Shape output_shape;
};

template <typename T>
struct Conv3dGrads {
    std::vector<T> input, weight, bias;
};

// UsageError when the context was never filled by a forward pass.
template <typename T>
Conv3dGrads<T> conv3d_backward(const Conv3dContext<T>& ctx, std::span<const T> grad_output);

template <typename T>
struct BatchNorm3d {
    std::size_t channels = 0;
    Tensor<T> gamma; // [C]
    Tensor<T> beta;  // [C]
    std::vector<double> running_mean;
    std::vector<double> running_var;
    double momentum = 0.1; // running = (1 - momentum) * running + momentum * batch
    double eps = 1e-5;

    explicit BatchNorm3d(std::size_t channels = 0);
};

/// Per-channel normalisation over every axis except 1. Train mode uses batch
/// statistics (biased variance) and updates the running estimates with the
/// unbiased variance; eval mode uses the running estimates.
template <typename T>
Tensor<T> batchnorm(const Tensor<T>& input, BatchNorm3d<T>& bn, Mode mode);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);

// Out-of-bounds window positions are skipped (equivalent to -inf padding).
template <typename T>
Tensor<T> maxpool3d(const Tensor<T>& input, Index3 kernel, Index3 stride, Index3 padding);

// [N][C][D][H][W] -> [N][C][1][1][1]
template <typename T>
Tensor<T> avgpool3d_global(const Tensor<T>& input);

template <typename T>
struct LinearParams {
    std::size_t in_features = 0;
    std::size_t out_features = 0;
    Tensor<T> weight; // [out][in]
    Tensor<T> bias;   // [out]
};

// Normal(0, gain^2 / fan_in) weights, zero bias.
template <typename T>
LinearParams<T> make_linear(std::size_t in_features, std::size_t out_features, std::mt19937_64& rng,
                            double gain = 1.0);

// [N][...] flattened to [N][in_features] -> [N][out_features]
template <typename T>
Tensor<T> linear(const Tensor<T>& input, const LinearParams<T>& params);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor);

template <typename T>
Tensor<T> sum(const Tensor<T>& a);

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape);

} // namespace specrec::ad
