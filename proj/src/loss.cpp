#include "specrec/loss.hpp"

#include <cmath>
#include <sstream>

#include "specrec/error.hpp"
#include "text_util.hpp"

namespace specrec {

namespace {

void check_lengths(std::span<const double> y, std::span<const double> yhat, const char* what) {
    if (y.size() != yhat.size()) {
        throw ArgumentError(std::string(what) + ": length mismatch (" + std::to_string(y.size()) + " targets vs " +
                            std::to_string(yhat.size()) + " predictions)");
    }
    if (y.empty()) throw ArgumentError(std::string(what) + ": empty input");
}

void check_alpha(double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw ArgumentError("alpha must lie in [0, 1], got " + detail::format_double(alpha));
    }
}

} // namespace

std::string_view to_string(LossKind kind) {
    switch (kind) {
    case LossKind::mse: return "mse";
    case LossKind::mae: return "mae";
    case LossKind::csse: return "csse";
    }
    return "?";
}

LossKind parse_loss_kind(std::string_view text) {
    const auto t = detail::lower(detail::trim(text));
    if (t == "mse") return LossKind::mse;
    if (t == "mae") return LossKind::mae;
    if (t == "csse") return LossKind::csse;
    throw ArgumentError("unknown loss '" + std::string(text) + "' (expected mse, mae or csse)");
}

void LossConfig::validate() const { check_alpha(alpha); }

LossValue mse(std::span<const double> y, std::span<const double> yhat) {
    check_lengths(y, yhat, "mse");
    const double n = double(y.size());
    LossValue r;
    r.grad.resize(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double d = yhat[i] - y[i];
        r.value += d * d;
        r.grad[i] = 2.0 * d / n;
    }
    r.value /= n;
    return r;
}

LossValue mae(std::span<const double> y, std::span<const double> yhat) {
    check_lengths(y, yhat, "mae");
    const double n = double(y.size());
    LossValue r;
    r.grad.resize(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double d = yhat[i] - y[i];
        r.value += std::abs(d);
        r.grad[i] = (d > 0.0 ? 1.0 : d < 0.0 ? -1.0 : 0.0) / n;
    }
    r.value /= n;
    return r;
}

LossValue csse(std::span<const double> y, std::span<const double> yhat, double alpha, RoughnessForm form) {
    check_alpha(alpha);
    check_lengths(y, yhat, "csse");
    if (yhat.size() < 3) throw ArgumentError("csse needs at least 3 bands, got " + std::to_string(yhat.size()));
    if (alpha == 1.0) return mse(y, yhat);
    const double rough = roughness(yhat, form);
    auto rg = roughness_gradient(yhat, form);
    if (alpha == 0.0) return {rough, std::move(rg)};
    auto m = mse(y, yhat);
    LossValue r;
    r.value = alpha * m.value + (1.0 - alpha) * rough;
    r.grad.resize(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) r.grad[i] = alpha * m.grad[i] + (1.0 - alpha) * rg[i];
    return r;
}

LossValue compute_loss(const LossConfig& config, std::span<const double> y, std::span<const double> yhat) {
    switch (config.kind) {
    case LossKind::mse: return mse(y, yhat);
    case LossKind::mae: return mae(y, yhat);
    case LossKind::csse: return csse(y, yhat, config.alpha, config.form);
    }
    throw ArgumentError("unknown loss kind");
}

template <typename T>
ad::Tensor<T> batch_loss(const ad::Tensor<T>& predictions, std::span<const double> targets, const LossConfig& config) {
    config.validate();
    const auto& s = predictions.shape();
    if (s.size() != 2 || targets.size() != predictions.numel()) {
        throw ShapeError("batch_loss: predictions " + ad::to_string(s) + " vs " + std::to_string(targets.size()) +
                         " target values");
    }
    const std::size_t N = s[0], B = s[1];
    const auto p = predictions.values();
    std::vector<double> yhat(B);
    std::vector<T> grad(p.size());
    double total = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t b = 0; b < B; ++b) yhat[b] = p[n * B + b];
        const auto l = compute_loss(config, targets.subspan(n * B, B), yhat);
        total += l.value;
        for (std::size_t b = 0; b < B; ++b) grad[n * B + b] = static_cast<T>(l.grad[b] / double(N));
    }
    return ad::make_result<T>(
        {1}, {static_cast<T>(total / double(N))}, {predictions},
        [grad = std::move(grad)](ad::Node<T>& self) {
            auto dx = self.parents[0]->grad_buffer();
            const T g = self.grad[0];
            for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g * grad[i];
        },
        "batch_loss");
}

template ad::Tensor<float> batch_loss<float>(const ad::Tensor<float>&, std::span<const double>, const LossConfig&);
template ad::Tensor<double> batch_loss<double>(const ad::Tensor<double>&, std::span<const double>, const LossConfig&);

std::string EvalReport::to_csv() const {
    std::ostringstream o;
    o << "alpha,mae,mse,roughness,csse,n\n";
    for (const auto& r : rows) {
        o << detail::format_sig(r.alpha, 7) << ',' << detail::format_sig(r.mae, 7) << ','
          << detail::format_sig(r.mse, 7) << ',' << detail::format_sig(r.roughness, 7) << ','
          << detail::format_sig(r.csse, 7) << ',' << r.n << '\n';
    }
    return o.str();
}

EvalRow evaluate_predictions(std::span<const std::vector<double>> predictions,
                             std::span<const std::vector<double>> targets, double alpha, RoughnessForm form) {
    check_alpha(alpha);
    if (predictions.empty()) throw ArgumentError("evaluation needs a non-empty test set");
    if (predictions.size() != targets.size()) {
        throw ArgumentError("evaluation: " + std::to_string(predictions.size()) + " predictions for " +
                            std::to_string(targets.size()) + " targets");
    }
    EvalRow row;
    row.alpha = alpha;
    row.n = predictions.size();
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        row.mae += mae(targets[i], predictions[i]).value;
        row.mse += mse(targets[i], predictions[i]).value;
        row.roughness += roughness(predictions[i], form);
        row.csse += csse(targets[i], predictions[i], alpha, form).value;
    }
    const double n = double(row.n);
    row.mae /= n;
    row.mse /= n;
    row.roughness /= n;
    row.csse /= n;
    return row;
}

EvalReport evaluate_model(Model<float>& model, std::span<const Example> test, std::span<const double> alphas,
                          RoughnessForm form) {
    if (test.empty()) throw ArgumentError("evaluation needs a non-empty test set");
    const auto preds = predict(model, test);
    std::vector<std::vector<double>> targets;
    targets.reserve(test.size());
    for (const auto& e : test) targets.push_back(e.target);
    EvalReport report;
    for (double a : alphas) report.rows.push_back(evaluate_predictions(preds, targets, a, form));
    return report;
}

EvalReport evaluate_checkpoints(std::span<const CheckpointRef> checkpoints, std::span<const SceneSample> test,
                                RoughnessForm form) {
    if (test.empty()) throw ArgumentError("evaluation needs a non-empty test set");
    EvalReport report;
    for (const auto& ref : checkpoints) {
        if (!std::filesystem::exists(ref.path)) throw LoadError("missing checkpoint '" + ref.path.string() + "'");
        auto model = load_model<float>(load_archive(ref.path));
        const auto examples = make_examples(test, model.config);
        const double a[] = {ref.alpha};
        report.rows.push_back(evaluate_model(model, examples, a, form).rows.front());
    }
    return report;
}

} // namespace specrec
