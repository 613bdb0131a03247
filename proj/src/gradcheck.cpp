#include "specrec/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "specrec/loss.hpp"
#include "specrec/ops.hpp"
#include "specrec/random.hpp"
#include "specrec/resnet3d.hpp"
#include "text_util.hpp"

namespace specrec {

using ad::Index3;
using ad::Mode;
using ad::Shape;
using Tensor = ad::Tensor<double>;

double gradient_error(const std::function<Tensor()>& f, std::vector<Tensor> wrt, std::mt19937_64& rng, double h) {
    std::normal_distribution<double> normal;
    for (auto& t : wrt) t.zero_grad();
    const auto out = f();
    std::vector<double> w(out.numel());
    for (auto& v : w) v = normal(rng);
    ad::backward(ad::sum(ad::mul(out, Tensor(out.shape(), w))));

    auto objective = [&] {
        const auto y = f();
        double s = 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * y.values()[i];
        return s;
    };

    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    ad::NoGradGuard guard;
    for (auto& t : wrt) {
        const std::vector<double> analytic =
            t.has_grad() ? std::vector<double>(t.grad().begin(), t.grad().end()) : std::vector<double>(t.numel(), 0.0);
        auto values = t.mutable_values();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double old = values[i];
            values[i] = old + h;
            const double up = objective();
            values[i] = old - h;
            const double down = objective();
            values[i] = old;
            const double numeric = (up - down) / (2 * h);
            diff2 += (analytic[i] - numeric) * (analytic[i] - numeric);
            a2 += analytic[i] * analytic[i];
            n2 += numeric * numeric;
        }
    }
    const double scale = std::sqrt(std::max(a2, n2));
    return scale < 1e-300 ? 0.0 : std::sqrt(diff2) / scale;
}

namespace {

struct Gen {
    std::mt19937_64 rng;

    std::size_t pick(std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); }
    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

    Tensor normal(Shape shape, bool grad = true) {
        std::normal_distribution<double> n;
        std::vector<double> v(ad::numel(shape));
        for (auto& x : v) x = n(rng);
        return Tensor(std::move(shape), std::move(v), grad);
    }

    // Magnitudes bounded away from zero so a step never crosses a kink.
    Tensor away_from_zero(Shape shape) {
        auto t = normal(std::move(shape));
        for (auto& x : t.mutable_values()) x = (x < 0 ? -1 : 1) * (0.05 + std::abs(x));
        return t;
    }

    // Distinct values 0.01 apart in random order.
    Tensor distinct(Shape shape) {
        std::vector<double> v(ad::numel(shape));
        std::iota(v.begin(), v.end(), 0.0);
        std::shuffle(v.begin(), v.end(), rng);
        for (auto& x : v) x = 0.01 * x - 0.005 * double(v.size());
        return Tensor(std::move(shape), std::move(v), true);
    }

    Shape volume(std::size_t max_channels, std::size_t max_extent) {
        return {pick(1, 2), pick(1, max_channels), pick(1, max_extent), pick(1, max_extent), pick(1, max_extent)};
    }
};

using Case = std::function<double(Gen&, double)>;

double conv_case(Gen& g, double h) {
    ad::Conv3dParams<double> p;
    Shape in;
    while (true) {
        in = g.volume(3, 5);
        p = ad::make_conv3d<double>(in[1], g.pick(1, 3), {g.pick(1, 3), g.pick(1, 3), g.pick(1, 3)},
                                    {g.pick(1, 2), g.pick(1, 2), g.pick(1, 2)}, {g.pick(0, 2), g.pick(0, 2), g.pick(0, 2)},
                                    g.rng, true);
        const bool ok = ad::output_extent(in[2], p.kernel.d, p.stride.d, p.padding.d) > 0 &&
                        ad::output_extent(in[3], p.kernel.h, p.stride.h, p.padding.h) > 0 &&
                        ad::output_extent(in[4], p.kernel.w, p.stride.w, p.padding.w) > 0;
        if (ok) break;
    }
    for (auto& b : p.bias->mutable_values()) b = g.uniform(-1, 1);
    auto x = g.normal(in);
    return gradient_error([&] { return ad::conv3d(x, p); }, {x, p.weight, *p.bias}, g.rng, h);
}

double batchnorm_case(Gen& g, double h, Mode mode) {
    auto shape = g.volume(3, 3);
    if (mode == Mode::train) shape[0] = 2;
    auto x = g.normal(shape);
    ad::BatchNorm3d<double> bn(shape[1]);
    for (auto& v : bn.gamma.mutable_values()) v = g.uniform(0.5, 1.5);
    for (auto& v : bn.beta.mutable_values()) v = g.uniform(-0.5, 0.5);
    for (std::size_t c = 0; c < shape[1]; ++c) {
        bn.running_mean[c] = g.uniform(-0.5, 0.5);
        bn.running_var[c] = g.uniform(0.5, 2.0);
    }
    return gradient_error([&] { return ad::batchnorm(x, bn, mode); }, {x, bn.gamma, bn.beta}, g.rng, h);
}

double block_case(Gen& g, double h) {
    const std::size_t cin = g.pick(1, 2), cout = g.pick(2, 3), stride = g.pick(1, 2);
    const Index3 k{3, 3, 3}, pad{1, 1, 1}, one{1, 1, 1}, s{stride, stride, stride};
    BasicBlock3d<double> blk;
    blk.conv1 = ad::make_conv3d<double>(cin, cout, k, s, pad, g.rng);
    blk.conv2 = ad::make_conv3d<double>(cout, cout, k, one, pad, g.rng);
    blk.bn1 = ad::BatchNorm3d<double>(cout);
    blk.bn2 = ad::BatchNorm3d<double>(cout);
    blk.shortcut = ad::make_conv3d<double>(cin, cout, one, s, {0, 0, 0}, g.rng);
    blk.shortcut_bn = ad::BatchNorm3d<double>(cout);
    // A 1x1 shortcut over one channel feeding batchnorm is flat in |w| away from
    // zero but sharply curved near it, where a fixed step overshoots.
    for (auto* conv : {&blk.conv1, &blk.conv2, &*blk.shortcut})
        for (auto& v : conv->weight.mutable_values()) v = (v < 0 ? -1 : 1) * (0.1 + std::abs(v));
    for (auto* bn : {&blk.bn1, &blk.bn2, &*blk.shortcut_bn}) {
        for (auto& v : bn->gamma.mutable_values()) v = g.uniform(0.5, 1.5);
        for (auto& v : bn->beta.mutable_values()) v = g.uniform(-0.5, 0.5);
    }
    // Redraw the input until no ReLU input sits within reach of a step.
    auto nearest_kink = [&](const Tensor& x) {
        ad::NoGradGuard guard;
        const auto a = ad::batchnorm(ad::conv3d(x, blk.conv1), blk.bn1, Mode::train);
        const auto b = ad::add(ad::batchnorm(ad::conv3d(ad::relu(a), blk.conv2), blk.bn2, Mode::train),
                               ad::batchnorm(ad::conv3d(x, *blk.shortcut), *blk.shortcut_bn, Mode::train));
        double m = INFINITY;
        for (const auto* t : {&a, &b})
            for (double v : t->values()) m = std::min(m, std::abs(v));
        return m;
    };
    auto x = g.normal({2, cin, 4, 4, 4});
    while (nearest_kink(x) < 5e-3) x = g.normal({2, cin, 4, 4, 4});
    std::vector<Tensor> wrt{x, blk.conv1.weight, blk.conv2.weight, blk.shortcut->weight};
    for (auto* bn : {&blk.bn1, &blk.bn2, &*blk.shortcut_bn}) {
        wrt.push_back(bn->gamma);
        wrt.push_back(bn->beta);
    }
    return gradient_error([&] { return blk.forward(x, Mode::train); }, wrt, g.rng, h);
}

double loss_case(Gen& g, double h, LossKind kind, RoughnessForm form) {
    const std::size_t n = g.pick(1, 3), bands = g.pick(3, 12);
    auto pred = g.normal({n, bands});
    std::vector<double> target(n * bands);
    for (std::size_t i = 0; i < target.size(); ++i) {
        // keep |y - yhat| >= 0.05 for the absolute loss
        const double gap = (g.uniform(0, 1) < 0.5 ? -1 : 1) * g.uniform(0.05, 1.0);
        target[i] = pred.values()[i] + gap;
    }
    const LossConfig cfg{kind, g.uniform(0, 1), form};
    return gradient_error([&] { return batch_loss(pred, target, cfg); }, {pred}, g.rng, h);
}

std::vector<std::pair<std::string, Case>> cases() {
    std::vector<std::pair<std::string, Case>> c;
    c.emplace_back("conv3d", conv_case);
    c.emplace_back("batchnorm.train", [](Gen& g, double h) { return batchnorm_case(g, h, Mode::train); });
    c.emplace_back("batchnorm.eval", [](Gen& g, double h) { return batchnorm_case(g, h, Mode::eval); });
    c.emplace_back("relu", [](Gen& g, double h) {
        auto x = g.away_from_zero(g.volume(3, 4));
        return gradient_error([&] { return ad::relu(x); }, {x}, g.rng, h);
    });
    c.emplace_back("maxpool3d", [](Gen& g, double h) {
        auto x = g.distinct({g.pick(1, 2), g.pick(1, 2), g.pick(3, 6), g.pick(3, 6), g.pick(3, 6)});
        const Index3 k{g.pick(1, 3), g.pick(1, 3), g.pick(1, 3)}, s{g.pick(1, 2), g.pick(1, 2), g.pick(1, 2)};
        const Index3 p{g.pick(0, k.d / 2), g.pick(0, k.h / 2), g.pick(0, k.w / 2)};
        return gradient_error([&] { return ad::maxpool3d(x, k, s, p); }, {x}, g.rng, h);
    });
    c.emplace_back("avgpool3d_global", [](Gen& g, double h) {
        auto x = g.normal(g.volume(3, 4));
        return gradient_error([&] { return ad::avgpool3d_global(x); }, {x}, g.rng, h);
    });
    c.emplace_back("linear", [](Gen& g, double h) {
        const std::size_t in = g.pick(1, 8);
        auto p = ad::make_linear<double>(in, g.pick(1, 6), g.rng);
        for (auto& b : p.bias.mutable_values()) b = g.uniform(-1, 1);
        auto x = g.normal({g.pick(1, 3), in});
        return gradient_error([&] { return ad::linear(x, p); }, {x, p.weight, p.bias}, g.rng, h);
    });
    c.emplace_back("add", [](Gen& g, double h) {
        const auto shape = g.volume(3, 3);
        auto a = g.normal(shape), b = g.normal(shape);
        return gradient_error([&] { return ad::add(a, b); }, {a, b}, g.rng, h);
    });
    c.emplace_back("mul", [](Gen& g, double h) {
        const auto shape = g.volume(3, 3);
        auto a = g.normal(shape), b = g.normal(shape);
        return gradient_error([&] { return ad::mul(a, b); }, {a, b}, g.rng, h);
    });
    c.emplace_back("scale", [](Gen& g, double h) {
        auto a = g.normal(g.volume(3, 3));
        const double f = g.uniform(-2, 2);
        return gradient_error([&] { return ad::scale(a, f); }, {a}, g.rng, h);
    });
    c.emplace_back("sum", [](Gen& g, double h) {
        auto a = g.normal(g.volume(3, 3));
        return gradient_error([&] { return ad::sum(a); }, {a}, g.rng, h);
    });
    c.emplace_back("reshape", [](Gen& g, double h) {
        auto a = g.normal(g.volume(3, 3));
        return gradient_error([&] { return ad::reshape(a, {a.dim(0), a.numel() / a.dim(0)}); }, {a}, g.rng, h);
    });
    c.emplace_back("loss.mse", [](Gen& g, double h) { return loss_case(g, h, LossKind::mse, RoughnessForm::squared); });
    c.emplace_back("loss.mae", [](Gen& g, double h) { return loss_case(g, h, LossKind::mae, RoughnessForm::squared); });
    c.emplace_back("loss.csse", [](Gen& g, double h) { return loss_case(g, h, LossKind::csse, RoughnessForm::squared); });
    c.emplace_back("loss.csse_unsquared",
                   [](Gen& g, double h) { return loss_case(g, h, LossKind::csse, RoughnessForm::unsquared); });
    c.emplace_back("basic_block", block_case);
    return c;
}

} // namespace

std::vector<GradCheckResult> run_gradcheck(const GradCheckOptions& options) {
    std::vector<GradCheckResult> results;
    std::uint64_t index = 0;
    for (auto& [name, run] : cases()) {
        Gen g{std::mt19937_64(derive_seed(options.seed, {0x6c4ec, index++}))};
        GradCheckResult r{name, options.trials, 0.0, true};
        for (std::size_t t = 0; t < options.trials; ++t) {
            const double e = run(g, options.step);
            r.max_error = std::isfinite(e) ? std::max(r.max_error, e) : INFINITY;
        }
        r.passed = r.max_error <= options.tolerance;
        results.push_back(std::move(r));
    }
    return results;
}

std::string gradcheck_csv(const std::vector<GradCheckResult>& results) {
    std::ostringstream out;
    out << "op,trials,max_rel_error,passed\n";
    for (const auto& r : results) {
        out << r.op << ',' << r.trials << ',' << detail::format_sig(r.max_error, 3) << ','
            << (r.passed ? "true" : "false") << '\n';
    }
    return out.str();
}

} // namespace specrec
