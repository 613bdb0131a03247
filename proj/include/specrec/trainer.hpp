#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "specrec/loss.hpp"

namespace specrec {

struct TrainConfig {
    double lr = 0.005;
    double momentum = 0.9;
    std::size_t batch_size = 4;
    std::size_t epochs = 30;
    std::size_t max_iterations = 0; // cap on SGD steps, 0 = none
    LossKind loss = LossKind::csse;
    double alpha = 0.8;
    RoughnessForm form = RoughnessForm::squared;
    std::uint64_t seed = 0;
    std::size_t crops_per_image = 0; // 0 = one centred window per cube
    bool rotations = false;          // add the 90/180/270 degree copies
    std::size_t checkpoint_every = 0;
    std::filesystem::path checkpoint_dir; // empty = no checkpoints
    std::filesystem::path log_path;       // empty = no CSV

    static TrainConfig paper(); // 50 epochs, 10 crops with rotations
    static TrainConfig desk();

    void validate() const; // ConfigError
    LossConfig loss_config() const { return {loss, alpha, form}; }
    std::string to_text() const;
    static TrainConfig from_text(std::string_view text);
};

struct TrainLogRow {
    std::size_t epoch = 0; // 0 = before the first update
    double train_loss = 0.0;
    double val_csse = 0.0, val_mse = 0.0, val_roughness = 0.0;

    friend bool operator==(const TrainLogRow&, const TrainLogRow&) = default;
};

struct TrainLog {
    std::vector<TrainLogRow> rows;

    // epoch,train_loss,val_csse,val_mse,val_roughness; values round-trip exactly
    std::string to_csv() const;
    static TrainLog from_csv(std::string_view text);
    void write(const std::filesystem::path& path) const;

    friend bool operator==(const TrainLog&, const TrainLog&) = default;
};

/// Classic momentum: v <- momentum * v + g; w <- w - lr * v.
/// ArgumentError when the lists or element shapes disagree.
template <typename T>
void sgd_step(std::span<ad::Tensor<T>> params, std::span<const std::vector<T>> grads,
              std::span<std::vector<T>> velocity, double lr, double momentum);

class Trainer {
public:
    Trainer(Model<float>& model, TrainConfig config);

    /// Runs the remaining epochs. Train and val must be non-empty; a
    /// non-finite batch loss throws NumericalError naming epoch and batch.
    TrainLog run(std::span<const Example> train, std::span<const Example> val,
                 const std::function<void(const TrainLogRow&)>& on_epoch = {});

    // Model, velocities, epoch counter, log and best score.
    TensorArchive snapshot() const;
    void save_checkpoint(const std::filesystem::path& path) const;
    void resume(const TensorArchive& archive);

    std::size_t epoch() const { return epoch_; }
    const TrainLog& log() const { return log_; }
    const TrainConfig& config() const { return config_; }
    double best_val_csse() const { return best_; }

private:
    TrainLogRow evaluate(std::size_t epoch, double train_loss, std::span<const Example> val);
    double eval_loss(std::span<const Example> examples);
    void maybe_checkpoint(const TrainLogRow& row);

    Model<float>& model_;
    TrainConfig config_;
    std::vector<ad::Tensor<float>> params_;
    std::vector<std::string> names_;
    std::vector<std::vector<float>> velocity_;
    std::size_t epoch_ = 0;
    std::size_t steps_ = 0;
    bool started_ = false;
    double best_ = 0.0;
    TrainLog log_;
};

// Network-ready training examples: crops/rotations per config, else one centred window per cube.
std::vector<Example> training_examples(std::span<const SceneSample> train, const ModelConfig& model,
                                       const TrainConfig& config);

TrainLog train(Model<float>& model, const DatasetSplit& data, const TrainConfig& config);

struct InferOptions {
    bool tile = false; // average non-overlapping windows instead of the centre crop
};

/// Predicted illuminant on the output grid (the cube's wavelengths when it
/// has output_bands bands, else uniform 400-1000 nm), negatives clamped to 0.
Spectrum infer_illuminant(Model<float>& model, const SpectralCube& cube, const InferOptions& options = {});

} // namespace specrec
