#include <doctest.h>

#include <cmath>

#include "specrec/checkpoint.hpp"
#include "specrec/error.hpp"
#include "specrec/resnet3d.hpp"

using namespace specrec;

namespace {

// Counted by hand from the layer list: bias-free convs, affine BN, biased head.
std::size_t count_by_hand(const ModelConfig& c) {
    auto conv = [](std::size_t in, std::size_t out, ad::Index3 k) { return out * in * k.d * k.h * k.w; };
    std::size_t n = conv(1, c.stem_width(), c.stem_kernel) + 2 * c.stem_width();
    std::size_t in = c.stem_width();
    std::size_t first = true;
    for (std::size_t out : c.stage_widths()) {
        for (std::size_t b = 0; b < c.blocks_per_stage; ++b) {
            const bool strided = b == 0 && !first;
            n += conv(in, out, c.block_kernel) + 2 * out + conv(out, out, c.block_kernel) + 2 * out;
            if (strided || in != out) n += conv(in, out, {1, 1, 1}) + 2 * out;
            in = out;
        }
        first = false;
    }
    return n + in * c.output_bands + c.output_bands;
}

ad::Tensor<float> random_batch(std::size_t n, const ModelConfig& c, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    std::vector<float> v(n * c.input_bands * c.input_size * c.input_size);
    for (auto& x : v) x = u(rng);
    return ad::Tensor<float>({n, 1, c.input_bands, c.input_size, c.input_size}, std::move(v));
}

} // namespace

TEST_CASE("full-size network shapes follow the layer table") {
    const auto r = infer_shapes(ModelConfig::paper(), {51, 256, 256});
    const std::vector<std::string> want{"64x26x128x128", "64x13x64x64", "64x13x64x64",
                                        "128x7x32x32",   "256x4x16x16", "512x2x8x8"};
    REQUIRE(r.stages.size() == want.size());
    for (std::size_t i = 0; i < want.size(); ++i) CHECK(r.stages[i].extent() == want[i]);
    CHECK(r.stages[0].name == "conv1");
    CHECK(r.stages[1].name == "maxpool");
    CHECK(r.stages[5].name == "conv5_x");
    CHECK(r.pooled.extent() == "512x1x1x1");
    CHECK(r.head == 204);
}

TEST_CASE("desk network shapes") {
    const auto c = ModelConfig::desk();
    CHECK(c.stage_widths() == std::vector<std::size_t>{16, 32, 64, 128});
    CHECK(c.input_size == 32);
    const auto r = infer_shapes(c, {51, 32, 32});
    CHECK(r.stages.back().extent() == "128x2x1x1");
    CHECK(r.stages.back().channels == 128);
    CHECK(r.pooled.channels == 128);
}

TEST_CASE("shape inference rejects unusable inputs") {
    CHECK_THROWS_AS(infer_shapes(ModelConfig::paper(), {50, 256, 256}), ShapeError);
    CHECK_THROWS_AS(infer_shapes(ModelConfig::paper(), {51, 4, 4}), ShapeError);
    CHECK_THROWS_AS(infer_shapes(ModelConfig::paper(), {51, 0, 256}), ShapeError);
}

TEST_CASE("parameter counts") {
    const auto desk = build_model<float>(ModelConfig::desk(), 1);
    CHECK(desk.parameter_count() == count_by_hand(ModelConfig::desk()));
    CHECK(desk.parameter_count() == 4854236);
    const auto paper = build_model<float>(ModelConfig::paper(), 1);
    CHECK(paper.parameter_count() == count_by_hand(ModelConfig::paper()));
    CHECK(paper.parameter_count() == 77219084);
}

TEST_CASE("config validation and text round trip") {
    auto c = ModelConfig::desk();
    CHECK(ModelConfig::from_text(c.to_text()) == c);
    CHECK(ModelConfig::from_text(c.to_text()).to_text() == c.to_text());
    CHECK(ModelConfig::from_text(ModelConfig::paper().to_text()) == ModelConfig::paper());
    c.scale = 0.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = ModelConfig::desk();
    c.block_channels.clear();
    CHECK_THROWS_AS(c.validate(), ConfigError);
    CHECK_THROWS_AS(ModelConfig::from_text("scale = banana\n"), ConfigError);
}

TEST_CASE("desk forward pass") {
    const auto c = ModelConfig::desk();
    auto a = build_model<float>(c, 7);
    auto b = build_model<float>(c, 7);
    a.mode = b.mode = ad::Mode::eval;
    const auto x = random_batch(4, c, 3);
    const auto ya = a.forward(x);
    const auto yb = b.forward(x);
    CHECK(ya.shape() == ad::Shape{4, 204});
    CHECK(std::vector<float>(ya.values().begin(), ya.values().end()) ==
          std::vector<float>(yb.values().begin(), yb.values().end()));
    for (float v : ya.values()) CHECK(std::isfinite(v));

    for (auto& w : a.fc.weight.mutable_values()) w = 0.0f;
    for (std::size_t i = 0; i < 204; ++i) a.fc.bias.mutable_values()[i] = 0.5f + float(i) / 1000.0f;
    const auto yz = a.forward(x);
    for (std::size_t n = 0; n < 4; ++n)
        for (std::size_t i = 0; i < 204; ++i) CHECK(yz.values()[n * 204 + i] == 0.5f + float(i) / 1000.0f);

    CHECK_THROWS_AS(a.forward(ad::Tensor<float>::zeros({1, 2, 51, 32, 32})), ShapeError);
}

TEST_CASE("a block with a silenced residual branch passes its input through relu") {
    auto m = build_model<double>(ModelConfig::desk(), 2);
    auto& blk = m.blocks[1];
    REQUIRE_FALSE(blk.shortcut);
    for (auto& w : blk.conv2.weight.mutable_values()) w = 0.0;
    std::mt19937_64 rng(4);
    std::normal_distribution<double> n;
    std::vector<double> v(2 * 16 * 3 * 4 * 4);
    for (auto& e : v) e = n(rng);
    const ad::Tensor<double> x({2, 16, 3, 4, 4}, v);
    const auto y = blk.forward(x, ad::Mode::eval);
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(y.values()[i] == std::max(0.0, v[i]));
}

TEST_CASE("model archive round trip") {
    auto m = build_model<float>(ModelConfig::desk(), 11);
    m.stem_bn.running_mean[0] = 0.25;
    TensorArchive ar;
    m.save(ar);
    const auto bytes = encode_archive(ar);
    auto restored = load_model<float>(decode_archive(bytes));
    CHECK(restored.config == m.config);
    CHECK(restored.stem_bn.running_mean[0] == 0.25);
    const auto pa = m.parameters();
    const auto pb = restored.parameters();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) {
        CHECK(pa[i].name == pb[i].name);
        CHECK(std::equal(pa[i].tensor.values().begin(), pa[i].tensor.values().end(), pb[i].tensor.values().begin()));
    }

    auto other = build_model<float>(ModelConfig::paper(), 1);
    CHECK_THROWS_AS(other.load(ar), LoadError);
}

TEST_CASE("corrupt archives are rejected") {
    TensorArchive ar;
    ar.metadata["k"] = "v";
    ar.add("t", StoredType::f64, {2, 2}, {1, 2, 3, 4.5});
    auto bytes = encode_archive(ar);
    const auto back = decode_archive(bytes);
    CHECK(back.meta("k") == "v");
    CHECK(back.at("t").values == std::vector<double>{1, 2, 3, 4.5});
    CHECK_THROWS_AS(back.at("missing"), LoadError);

    auto truncated = bytes;
    truncated.resize(bytes.size() - 3);
    CHECK_THROWS_AS(decode_archive(truncated), LoadError);
    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    CHECK_THROWS_AS(decode_archive(bad_magic), LoadError);
    auto trailing = bytes;
    trailing.push_back(0);
    CHECK_THROWS_AS(decode_archive(trailing), LoadError);
    CHECK_THROWS_AS(load_archive("/nonexistent/x.ckpt"), LoadError);
}
