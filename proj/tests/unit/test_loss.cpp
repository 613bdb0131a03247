#include <doctest.h>

#include <cmath>

#include "specrec/error.hpp"
#include "specrec/loss.hpp"
#include "util.hpp"

using namespace specrec;

namespace {

double fd_rel_error(const std::function<double(std::span<const double>)>& f, std::vector<double> x,
                    std::span<const double> analytic) {
    double num = 0, den = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double x0 = x[i], h = 1e-6;
        x[i] = x0 + h;
        const double up = f(x);
        x[i] = x0 - h;
        const double dn = f(x);
        x[i] = x0;
        const double g = (up - dn) / (2 * h);
        num += (g - analytic[i]) * (g - analytic[i]);
        den = std::max({den, g * g, analytic[i] * analytic[i]});
    }
    return std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
}

double second_diff_sq(const std::vector<double>& y) {
    double s = 0;
    for (std::size_t j = 0; j + 2 < y.size(); ++j) {
        const double d = y[j + 2] - 2 * y[j + 1] + y[j];
        s += d * d;
    }
    return s / double(y.size() - 2);
}

std::vector<Example> few_examples(std::size_t count) {
    SynthOptions o;
    o.count = count;
    o.seed = 9;
    std::vector<SceneSample> s;
    for (auto& x : generate_dataset(o)) s.push_back(std::move(x.sample));
    return make_examples(s, ModelConfig::desk());
}

} // namespace

TEST_CASE("hand-computed loss values") {
    const std::vector<double> z2{0, 0}, o2{1, 1};
    const auto m = mse(z2, o2);
    CHECK(m.value == 1.0);
    CHECK(m.grad == std::vector<double>{1.0, 1.0});
    CHECK(mse(o2, o2).value == 0.0);
    CHECK(mae(std::vector<double>{0}, std::vector<double>{-2}).value == 2.0);
    CHECK(mae(std::vector<double>{0, 1}, std::vector<double>{0, 3}).grad == std::vector<double>{0.0, 0.5});
    CHECK(csse(std::vector<double>{0, 0, 0, 0}, std::vector<double>{0, 1, 0, 1}, 0.5).value == 2.25);
}

TEST_CASE("loss argument errors") {
    const std::vector<double> a{1, 2}, b{1, 2, 3};
    CHECK_THROWS_AS(mse(a, b), ArgumentError);
    CHECK_THROWS_AS(mae(a, b), ArgumentError);
    CHECK_THROWS_AS(csse(a, a, 0.5), ArgumentError);
    CHECK_THROWS_AS(csse(b, b, 1.5), ArgumentError);
    CHECK_THROWS_AS(csse(b, b, -0.1), ArgumentError);
    CHECK_THROWS_AS(parse_loss_kind("huber"), ArgumentError);
    CHECK(parse_loss_kind("csse") == LossKind::csse);
}

TEST_CASE("csse limits") {
    std::mt19937_64 rng(1);
    for (int t = 0; t < 200; ++t) {
        const auto y = testutil::random_vector(3 + t % 40, rng), yh = testutil::random_vector(y.size(), rng);
        CHECK(std::abs(csse(y, yh, 1.0).value - mse(y, yh).value) <= 1e-15);
        CHECK(std::abs(csse(y, yh, 0.0).value - roughness(yh)) <= 1e-15);
        CHECK(std::abs(roughness(yh) - second_diff_sq(yh)) <= 1e-14);
        const auto y2 = testutil::random_vector(y.size(), rng);
        CHECK(csse(y, yh, 0.0).value == csse(y2, yh, 0.0).value);
        CHECK(csse(y, yh, 0.3).value >= 0.0);
    }
    std::vector<double> affine(20), y(20, 3.0);
    for (std::size_t i = 0; i < 20; ++i) affine[i] = 0.1 * double(i) - 2.0;
    CHECK(csse(y, affine, 0.0).value <= 1e-12);
}

TEST_CASE("loss gradients agree with finite differences") {
    std::mt19937_64 rng(2);
    for (int t = 0; t < 30; ++t) {
        const auto y = testutil::random_vector(12, rng);
        auto yh = testutil::random_vector(12, rng);
        for (std::size_t i = 0; i < yh.size(); ++i)
            if (std::abs(yh[i] - y[i]) < 1e-2) yh[i] += 0.05;
        const double alpha = std::uniform_real_distribution<double>(0, 1)(rng);
        CHECK(fd_rel_error([&](auto v) { return mse(y, v).value; }, yh, mse(y, yh).grad) <= 1e-6);
        CHECK(fd_rel_error([&](auto v) { return mae(y, v).value; }, yh, mae(y, yh).grad) <= 1e-6);
        CHECK(fd_rel_error([&](auto v) { return csse(y, v, alpha).value; }, yh, csse(y, yh, alpha).grad) <= 1e-6);
    }
}

TEST_CASE("csse is convex in the prediction") {
    std::mt19937_64 rng(3);
    for (int t = 0; t < 500; ++t) {
        const auto y = testutil::random_vector(8, rng), a = testutil::random_vector(8, rng, -3, 3),
                   b = testutil::random_vector(8, rng, -3, 3);
        const double alpha = std::uniform_real_distribution<double>(0, 1)(rng);
        std::vector<double> mid(8);
        for (std::size_t i = 0; i < 8; ++i) mid[i] = 0.5 * (a[i] + b[i]);
        CHECK(csse(y, mid, alpha).value <= 0.5 * (csse(y, a, alpha).value + csse(y, b, alpha).value) + 1e-12);
    }
}

TEST_CASE("batch loss is the mean of per-sample losses") {
    std::mt19937_64 rng(4);
    const auto p = testutil::random_vector(3 * 10, rng), y = testutil::random_vector(3 * 10, rng);
    ad::Tensor<double> pred({3, 10}, p, true);
    const LossConfig cfg{LossKind::csse, 0.7, RoughnessForm::squared};
    const auto l = batch_loss(pred, y, cfg);
    double want = 0;
    std::vector<double> g(30);
    for (std::size_t n = 0; n < 3; ++n) {
        const std::span<const double> yn(y.data() + n * 10, 10), pn(p.data() + n * 10, 10);
        const auto v = csse(yn, pn, 0.7);
        want += v.value / 3;
        for (std::size_t i = 0; i < 10; ++i) g[n * 10 + i] = v.grad[i] / 3;
    }
    CHECK(l.item() == doctest::Approx(want).epsilon(1e-14));
    ad::backward(l);
    for (std::size_t i = 0; i < 30; ++i) CHECK(pred.grad()[i] == doctest::Approx(g[i]).epsilon(1e-12));
    CHECK_THROWS_AS(batch_loss(pred, std::span<const double>(y).first(20), cfg), ShapeError);
}

TEST_CASE("evaluation report") {
    EvalReport r;
    r.rows.push_back({0.8, 0.1, 0.0123456789, 1e-5, 0.25, 3});
    CHECK(r.to_csv() == "alpha,mae,mse,roughness,csse,n\n0.8,0.1,0.01234568,1e-05,0.25,3\n");

    const std::vector<std::vector<double>> p{{0, 1, 0, 1}, {1, 1, 1, 1}}, y{{0, 0, 0, 0}, {1, 1, 1, 1}};
    const auto row = evaluate_predictions(p, y, 0.5);
    CHECK(row.n == 2);
    CHECK(row.mse == doctest::Approx(0.25));
    CHECK(row.mae == doctest::Approx(0.25));
    CHECK(row.roughness == doctest::Approx(2.0));
    CHECK(row.csse == doctest::Approx(1.125));
}

TEST_CASE("a zero predictor scores the mean target energy") {
    const auto ex = few_examples(3);
    auto m = build_model<float>(ModelConfig::desk(), 1);
    for (auto& w : m.fc.weight.mutable_values()) w = 0.0f;
    for (auto& b : m.fc.bias.mutable_values()) b = 0.0f;
    const std::vector<double> alphas{1.0, 0.6};
    const auto r = evaluate_model(m, ex, alphas);
    REQUIRE(r.rows.size() == 2);
    double want = 0;
    for (const auto& e : ex) {
        double s = 0;
        for (double v : e.target) s += v * v;
        want += s / double(e.target.size()) / double(ex.size());
    }
    CHECK(r.rows[0].mse == doctest::Approx(want).epsilon(1e-12));
    CHECK(r.rows[0].roughness == 0.0);
    CHECK(r.rows[1].csse == doctest::Approx(0.6 * want).epsilon(1e-12));
    CHECK_THROWS_AS(evaluate_model(m, std::span<const Example>{}, alphas), ArgumentError);
}

TEST_CASE("a single-sample report equals that sample's metrics") {
    const auto ex = few_examples(1);
    auto m = build_model<float>(ModelConfig::desk(), 5);
    const auto pred = predict(m, ex);
    const std::vector<double> alphas{0.8};
    const auto r = evaluate_model(m, ex, alphas);
    const auto& y = ex[0].target;
    CHECK(r.rows[0].n == 1);
    CHECK(r.rows[0].mse == doctest::Approx(mse(y, pred[0]).value).epsilon(1e-12));
    CHECK(r.rows[0].mae == doctest::Approx(mae(y, pred[0]).value).epsilon(1e-12));
    CHECK(r.rows[0].roughness == doctest::Approx(roughness(pred[0])).epsilon(1e-12));
    CHECK(r.rows[0].csse == doctest::Approx(csse(y, pred[0], 0.8).value).epsilon(1e-12));
}
