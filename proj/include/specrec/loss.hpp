#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "specrec/pipeline.hpp"
#include "specrec/spectral.hpp"

namespace specrec {

enum class LossKind { mse, mae, csse };

std::string_view to_string(LossKind kind);
LossKind parse_loss_kind(std::string_view text);

struct LossConfig {
    LossKind kind = LossKind::csse;
    double alpha = 0.8; // csse only
    RoughnessForm form = RoughnessForm::squared;

    void validate() const; // ArgumentError unless alpha in [0, 1]
};

struct LossValue {
    double value = 0.0;
    std::vector<double> grad; // d value / d yhat
};

// (1/N) sum (y - yhat)^2
LossValue mse(std::span<const double> y, std::span<const double> yhat);
// (1/N) sum |y - yhat|; subgradient 0 at ties
LossValue mae(std::span<const double> y, std::span<const double> yhat);
// alpha * mse(y, yhat) + (1 - alpha) * roughness(yhat). Needs N >= 3.
LossValue csse(std::span<const double> y, std::span<const double> yhat, double alpha,
               RoughnessForm form = RoughnessForm::squared);
LossValue compute_loss(const LossConfig& config, std::span<const double> y, std::span<const double> yhat);

/// Mean per-sample loss of a [N][B] prediction against row-major [N][B]
/// targets, as a differentiable scalar.
template <typename T>
ad::Tensor<T> batch_loss(const ad::Tensor<T>& predictions, std::span<const double> targets, const LossConfig& config);

struct EvalRow {
    double alpha = 1.0;
    double mae = 0.0, mse = 0.0, roughness = 0.0, csse = 0.0;
    std::size_t n = 0;
};

struct EvalReport {
    std::vector<EvalRow> rows;

    std::string to_csv() const; // alpha,mae,mse,roughness,csse,n with 7 significant digits
};

// Sample means of each metric; csse uses `alpha`, roughness uses `form`.
EvalRow evaluate_predictions(std::span<const std::vector<double>> predictions,
                             std::span<const std::vector<double>> targets, double alpha,
                             RoughnessForm form = RoughnessForm::squared);

// One model, one row per alpha. ArgumentError on an empty test set.
EvalReport evaluate_model(Model<float>& model, std::span<const Example> test, std::span<const double> alphas,
                          RoughnessForm form = RoughnessForm::squared);

struct CheckpointRef {
    double alpha = 1.0;
    std::filesystem::path path;
};

// One row per alpha-trained checkpoint; LoadError when a checkpoint is missing.
EvalReport evaluate_checkpoints(std::span<const CheckpointRef> checkpoints, std::span<const SceneSample> test,
                                RoughnessForm form = RoughnessForm::squared);

} // namespace specrec
