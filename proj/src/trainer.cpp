#include "specrec/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "specrec/error.hpp"
#include "specrec/random.hpp"
#include "text_util.hpp"

namespace specrec {

namespace {

template <typename T>
void momentum_update(std::span<T> w, std::span<const T> g, std::span<T> v, double lr, double momentum) {
    const T mu = static_cast<T>(momentum), eta = static_cast<T>(lr);
    for (std::size_t i = 0; i < w.size(); ++i) {
        v[i] = mu * v[i] + (g.empty() ? T(0) : g[i]);
        w[i] -= eta * v[i];
    }
}

std::size_t to_count(std::string_view key, std::string_view v) {
    auto n = detail::parse_int(v);
    if (!n || *n < 0) throw ConfigError("train config: " + std::string(key) + " expects a non-negative integer");
    return static_cast<std::size_t>(*n);
}

double to_real(std::string_view key, std::string_view v) {
    auto d = detail::parse_double(v);
    if (!d) throw ConfigError("train config: " + std::string(key) + " expects a real number");
    return *d;
}

bool to_bool(std::string_view key, std::string_view v) {
    const auto t = detail::lower(v);
    if (t == "true" || t == "1") return true;
    if (t == "false" || t == "0") return false;
    throw ConfigError("train config: " + std::string(key) + " expects true or false");
}

} // namespace

TrainConfig TrainConfig::paper() {
    TrainConfig c;
    c.epochs = 50;
    c.crops_per_image = kDefaultCropsPerImage;
    c.rotations = true;
    return c;
}

TrainConfig TrainConfig::desk() { return TrainConfig{}; }

void TrainConfig::validate() const {
    if (!(lr > 0.0) && lr != 0.0) throw ConfigError("lr must be >= 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
    if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
    if (!std::isfinite(lr)) throw ConfigError("lr must be finite");
}

std::string TrainConfig::to_text() const {
    std::ostringstream o;
    o << "lr = " << detail::format_double(lr) << "\n";
    o << "momentum = " << detail::format_double(momentum) << "\n";
    o << "batch_size = " << batch_size << "\n";
    o << "epochs = " << epochs << "\n";
    o << "max_iterations = " << max_iterations << "\n";
    o << "loss = " << to_string(loss) << "\n";
    o << "alpha = " << detail::format_double(alpha) << "\n";
    o << "roughness_form = " << to_string(form) << "\n";
    o << "seed = " << seed << "\n";
    o << "crops_per_image = " << crops_per_image << "\n";
    o << "rotations = " << (rotations ? "true" : "false") << "\n";
    o << "checkpoint_every = " << checkpoint_every << "\n";
    return o.str();
}

TrainConfig TrainConfig::from_text(std::string_view text) {
    TrainConfig c;
    for (auto raw : detail::split(text, '\n')) {
        auto line = detail::trim(raw);
        if (line.empty() || line.front() == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw ConfigError("train config: expected key = value, got '" + std::string(line) + "'");
        const auto key = std::string(detail::trim(line.substr(0, eq)));
        const auto v = detail::trim(line.substr(eq + 1));
        if (key == "lr") c.lr = to_real(key, v);
        else if (key == "momentum") c.momentum = to_real(key, v);
        else if (key == "batch_size") c.batch_size = to_count(key, v);
        else if (key == "epochs") c.epochs = to_count(key, v);
        else if (key == "max_iterations") c.max_iterations = to_count(key, v);
        else if (key == "loss") c.loss = parse_loss_kind(v);
        else if (key == "alpha") c.alpha = to_real(key, v);
        else if (key == "roughness_form") c.form = parse_roughness_form(v);
        else if (key == "seed") {
            std::uint64_t s = 0;
            auto res = std::from_chars(v.data(), v.data() + v.size(), s);
            if (res.ec != std::errc{} || res.ptr != v.data() + v.size()) throw ConfigError("train config: bad seed");
            c.seed = s;
        } else if (key == "crops_per_image") c.crops_per_image = to_count(key, v);
        else if (key == "rotations") c.rotations = to_bool(key, v);
        else if (key == "checkpoint_every") c.checkpoint_every = to_count(key, v);
        else throw ConfigError("train config: unknown key '" + key + "'");
    }
    c.validate();
    return c;
}

namespace {
constexpr std::string_view kLogHeader = "epoch,train_loss,val_csse,val_mse,val_roughness";
}

std::string TrainLog::to_csv() const {
    std::ostringstream o;
    o << kLogHeader << '\n';
    for (const auto& r : rows) {
        o << r.epoch << ',' << detail::format_double(r.train_loss) << ',' << detail::format_double(r.val_csse) << ','
          << detail::format_double(r.val_mse) << ',' << detail::format_double(r.val_roughness) << '\n';
    }
    return o.str();
}

TrainLog TrainLog::from_csv(std::string_view text) {
    TrainLog log;
    std::size_t line_no = 0;
    for (auto raw : detail::split(text, '\n')) {
        ++line_no;
        auto line = detail::trim(raw);
        if (line_no == 1) {
            if (line != kLogHeader) throw ParseError("train log: unexpected header '" + std::string(line) + "'");
            continue;
        }
        if (line.empty()) continue;
        const auto f = detail::split(line, ',');
        if (f.size() != 5) throw ParseError("train log line " + std::to_string(line_no) + ": expected 5 fields");
        auto e = detail::parse_int(f[0]);
        auto a = detail::parse_double(f[1]), b = detail::parse_double(f[2]), c = detail::parse_double(f[3]),
             d = detail::parse_double(f[4]);
        if (!e || !a || !b || !c || !d) throw ParseError("train log line " + std::to_string(line_no) + ": bad number");
        if (*e < 0 || (!log.rows.empty() && std::size_t(*e) <= log.rows.back().epoch)) {
            throw ParseError("train log line " + std::to_string(line_no) + ": epochs must increase");
        }
        log.rows.push_back({static_cast<std::size_t>(*e), *a, *b, *c, *d});
    }
    return log;
}

void TrainLog::write(const std::filesystem::path& path) const {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write train log '" + path.string() + "'");
    f << to_csv();
}

template <typename T>
void sgd_step(std::span<ad::Tensor<T>> params, std::span<const std::vector<T>> grads,
              std::span<std::vector<T>> velocity, double lr, double momentum) {
    if (params.size() != grads.size() || params.size() != velocity.size()) {
        throw ArgumentError("sgd_step: " + std::to_string(params.size()) + " params, " +
                            std::to_string(grads.size()) + " grads, " + std::to_string(velocity.size()) +
                            " velocities");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (grads[i].size() != params[i].numel() || velocity[i].size() != params[i].numel()) {
            throw ArgumentError("sgd_step: entry " + std::to_string(i) + " has " + std::to_string(params[i].numel()) +
                                " weights, " + std::to_string(grads[i].size()) + " grads, " +
                                std::to_string(velocity[i].size()) + " velocities");
        }
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        momentum_update<T>(params[i].mutable_values(), grads[i], velocity[i], lr, momentum);
    }
}

template void sgd_step<float>(std::span<ad::Tensor<float>>, std::span<const std::vector<float>>,
                              std::span<std::vector<float>>, double, double);
template void sgd_step<double>(std::span<ad::Tensor<double>>, std::span<const std::vector<double>>,
                               std::span<std::vector<double>>, double, double);

Trainer::Trainer(Model<float>& model, TrainConfig config)
    : model_(model), config_(std::move(config)), best_(std::numeric_limits<double>::infinity()) {
    config_.validate();
    for (auto& p : model_.parameters()) {
        names_.push_back(p.name);
        velocity_.emplace_back(p.tensor.numel(), 0.0f);
        params_.push_back(p.tensor);
    }
}

double Trainer::eval_loss(std::span<const Example> examples) {
    const auto preds = predict(model_, examples, config_.batch_size);
    const auto lc = config_.loss_config();
    double total = 0.0;
    for (std::size_t i = 0; i < examples.size(); ++i) total += compute_loss(lc, examples[i].target, preds[i]).value;
    return total / double(examples.size());
}

TrainLogRow Trainer::evaluate(std::size_t epoch, double train_loss, std::span<const Example> val) {
    const auto preds = predict(model_, val, config_.batch_size);
    std::vector<std::vector<double>> targets;
    targets.reserve(val.size());
    for (const auto& e : val) targets.push_back(e.target);
    const auto r = evaluate_predictions(preds, targets, config_.alpha, config_.form);
    TrainLogRow row{epoch, train_loss, r.csse, r.mse, r.roughness};
    for (double v : {row.train_loss, row.val_csse, row.val_mse, row.val_roughness}) {
        if (!std::isfinite(v)) {
            throw NumericalError("non-finite metric at epoch " + std::to_string(epoch) +
                                 ": train_loss=" + detail::format_double(row.train_loss) +
                                 " val_csse=" + detail::format_double(row.val_csse));
        }
    }
    return row;
}

void Trainer::maybe_checkpoint(const TrainLogRow& row) {
    const bool improved = row.val_csse < best_;
    if (improved) best_ = row.val_csse;
    if (config_.checkpoint_dir.empty()) return;
    std::filesystem::create_directories(config_.checkpoint_dir);
    const auto archive = snapshot();
    if (improved) save_archive(archive, config_.checkpoint_dir / "best.ckpt");
    if (config_.checkpoint_every > 0 && row.epoch > 0 && row.epoch % config_.checkpoint_every == 0) {
        save_archive(archive, config_.checkpoint_dir / ("epoch_" + std::to_string(row.epoch) + ".ckpt"));
    }
    save_archive(archive, config_.checkpoint_dir / "last.ckpt");
}

TrainLog Trainer::run(std::span<const Example> train, std::span<const Example> val,
                      const std::function<void(const TrainLogRow&)>& on_epoch) {
    if (train.empty()) throw ArgumentError("training set is empty");
    if (val.empty()) throw ArgumentError("validation set is empty");
    auto record = [&](const TrainLogRow& row) {
        log_.rows.push_back(row);
        if (!config_.log_path.empty()) log_.write(config_.log_path);
        maybe_checkpoint(row);
        if (on_epoch) on_epoch(row);
    };
    if (!started_) {
        record(evaluate(0, eval_loss(train), val));
        started_ = true;
    }
    const auto lc = config_.loss_config();
    const std::size_t B = model_.config.output_bands;
    std::vector<std::size_t> order(train.size());
    std::vector<double> targets;
    bool capped = config_.max_iterations > 0 && steps_ >= config_.max_iterations;
    for (std::size_t e = epoch_ + 1; e <= config_.epochs && !capped; ++e) {
        std::iota(order.begin(), order.end(), 0);
        std::mt19937_64 rng(derive_seed(config_.seed, {0x5aff1e, e}));
        std::shuffle(order.begin(), order.end(), rng);
        model_.mode = ad::Mode::train;
        double total = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += config_.batch_size) {
            const std::span<const std::size_t> idx(order.data() + start,
                                                   std::min(config_.batch_size, order.size() - start));
            targets.clear();
            for (auto i : idx) targets.insert(targets.end(), train[i].target.begin(), train[i].target.end());
            for (auto& p : params_) p.zero_grad();
            const auto y = model_.forward(stack_inputs(train, idx, model_.config));
            const auto loss = batch_loss(y, targets, lc);
            const double value = loss.item();
            if (!std::isfinite(value)) {
                double m = 0.0, r = 0.0;
                const auto v = y.values();
                for (std::size_t n = 0; n < idx.size(); ++n) {
                    std::vector<double> p(v.begin() + n * B, v.begin() + (n + 1) * B);
                    m += specrec::mse(std::span<const double>(targets).subspan(n * B, B), p).value;
                    r += roughness(p, config_.form);
                }
                throw NumericalError("non-finite loss at epoch " + std::to_string(e) + ", batch " +
                                     std::to_string(batches) + ": loss=" + detail::format_double(value) +
                                     " (mse=" + detail::format_double(m / double(idx.size())) +
                                     ", roughness=" + detail::format_double(r / double(idx.size())) + ")");
            }
            ad::backward(loss);
            for (std::size_t i = 0; i < params_.size(); ++i) {
                momentum_update<float>(params_[i].mutable_values(), params_[i].grad(), velocity_[i], config_.lr,
                                       config_.momentum);
            }
            total += value;
            ++batches;
            ++steps_;
            if (config_.max_iterations > 0 && steps_ >= config_.max_iterations) {
                capped = true;
                break;
            }
        }
        epoch_ = e;
        record(evaluate(e, total / double(batches), val));
    }
    for (auto& p : params_) p.zero_grad();
    return log_;
}

TensorArchive Trainer::snapshot() const {
    TensorArchive a;
    model_.save(a);
    a.metadata["trainer.config"] = config_.to_text();
    a.metadata["trainer.epoch"] = std::to_string(epoch_);
    a.metadata["trainer.steps"] = std::to_string(steps_);
    a.metadata["trainer.best_val_csse"] = detail::format_double(best_);
    a.metadata["train.log"] = log_.to_csv();
    a.metadata["alpha"] = detail::format_double(config_.alpha);
    for (std::size_t i = 0; i < params_.size(); ++i) {
        a.add("velocity." + names_[i], StoredType::f32, params_[i].shape(),
              std::vector<double>(velocity_[i].begin(), velocity_[i].end()));
    }
    return a;
}

void Trainer::save_checkpoint(const std::filesystem::path& path) const { save_archive(snapshot(), path); }

void Trainer::resume(const TensorArchive& archive) {
    model_.load(archive);
    for (std::size_t i = 0; i < params_.size(); ++i) {
        const auto& s = archive.at("velocity." + names_[i]);
        if (s.values.size() != velocity_[i].size()) {
            throw LoadError("velocity for '" + names_[i] + "' has the wrong size");
        }
        std::transform(s.values.begin(), s.values.end(), velocity_[i].begin(),
                       [](double v) { return static_cast<float>(v); });
    }
    auto count = [&](const char* key) {
        auto v = detail::parse_int(archive.meta(key));
        if (!v || *v < 0) throw LoadError(std::string("checkpoint metadata '") + key + "' is not a count");
        return static_cast<std::size_t>(*v);
    };
    epoch_ = count("trainer.epoch");
    steps_ = count("trainer.steps");
    auto best = detail::parse_double(archive.meta("trainer.best_val_csse"));
    if (!best) throw LoadError("checkpoint metadata 'trainer.best_val_csse' is not a number");
    best_ = *best;
    log_ = TrainLog::from_csv(archive.meta("train.log"));
    started_ = !log_.rows.empty();
}

std::vector<Example> training_examples(std::span<const SceneSample> train, const ModelConfig& model,
                                       const TrainConfig& config) {
    const Extent2 window{model.input_size, model.input_size};
    std::vector<SceneSample> samples;
    if (config.crops_per_image > 0 && config.rotations) {
        samples = build_training_set(train, config.crops_per_image, window, derive_seed(config.seed, {0xc0b}));
    } else if (config.crops_per_image > 0) {
        for (std::size_t i = 0; i < train.size(); ++i)
            for (std::size_t k = 0; k < config.crops_per_image; ++k)
                samples.push_back(random_crop(train[i], window, derive_seed(config.seed, {0xc0b, i, k})));
    } else {
        for (const auto& s : train) {
            samples.push_back(s);
            if (config.rotations) {
                for (int q = 1; q < 4; ++q) samples.push_back(rotate(s, q));
            }
        }
    }
    return make_examples(samples, model);
}

TrainLog train(Model<float>& model, const DatasetSplit& data, const TrainConfig& config) {
    const auto tr = training_examples(data.train, model.config, config);
    const auto va = make_examples(data.val, model.config);
    Trainer t(model, config);
    return t.run(tr, va);
}

Spectrum infer_illuminant(Model<float>& model, const SpectralCube& cube, const InferOptions& options) {
    const auto& cfg = model.config;
    const auto d = decimate_for(cube, cfg);
    const std::size_t S = cfg.input_size;
    if (d.height() < S || d.width() < S) {
        throw ShapeError("cube " + std::to_string(d.height()) + "x" + std::to_string(d.width()) +
                         " is smaller than the model input " + std::to_string(S) + "x" + std::to_string(S));
    }
    std::vector<Example> windows;
    if (options.tile) {
        for (std::size_t r = 0; r + S <= d.height(); r += S)
            for (std::size_t c = 0; c + S <= d.width(); c += S) windows.push_back({prepare_window(d, cfg, r, c), {}});
    } else {
        windows.push_back({prepare_window(d, cfg, (d.height() - S) / 2, (d.width() - S) / 2), {}});
    }
    const auto preds = predict(model, windows);
    Spectrum out;
    out.values.assign(cfg.output_bands, 0.0);
    for (const auto& p : preds)
        for (std::size_t b = 0; b < p.size(); ++b) out.values[b] += p[b];
    for (auto& v : out.values) v = std::max(0.0, v / double(preds.size()));
    out.wavelengths = cube.bands() == cfg.output_bands ? cube.wavelengths() : uniform_wavelengths(cfg.output_bands);
    out.label = "predicted";
    return out;
}

} // namespace specrec
