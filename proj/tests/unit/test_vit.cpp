#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "../support/oracles.hpp"
#include "../support/random_vit.hpp"

#include "dinoprobe/error.hpp"
#include "dinoprobe/image.hpp"
#include "dinoprobe/kernels.hpp"
#include "dinoprobe/rng.hpp"
#include "dinoprobe/vit.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

using namespace dinoprobe;

namespace {

const std::filesystem::path fixtures = DINOPROBE_FIXTURES;

MatrixF random_matrix(Rng& rng, std::size_t r, std::size_t c, double scale = 1.0)
{
    MatrixF m(r, c);
    for (float& v : m.values())
        v = static_cast<float>(scale * rng.normal());
    return m;
}

oracle::Mat to_oracle(const MatrixF& m)
{
    oracle::Mat out(m.rows(), std::vector<double>(m.cols()));
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t c = 0; c < m.cols(); ++c)
            out[r][c] = m(r, c);
    return out;
}

double cosine(std::span<const float> a, std::span<const float> b)
{
    double ab = 0, aa = 0, bb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ab += double(a[i]) * b[i];
        aa += double(a[i]) * a[i];
        bb += double(b[i]) * b[i];
    }
    return ab / std::sqrt(aa * bb);
}

ImageTensor random_planar(Rng& rng, std::size_t side)
{
    std::vector<float> v(3 * side * side);
    for (float& x : v)
        x = static_cast<float>(rng.normal());
    return ImageTensor::from_f32(side, side, 3, std::move(v), PixelLayout::planar);
}

} // namespace

TEST_CASE("softmax")
{
    const auto half = softmax(std::vector<float>{0.0f, 0.0f});
    CHECK(half[0] == doctest::Approx(0.5));
    CHECK(half[1] == doctest::Approx(0.5));

    const auto third = softmax(std::vector<float>{1000.0f, 1000.0f, 1000.0f});
    for (float v : third) {
        CHECK(std::isfinite(v));
        CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-6));
    }

    const auto ln2 = softmax(std::vector<float>{std::log(2.0f), 0.0f});
    CHECK(ln2[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-6));
    CHECK(ln2[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-6));

    Rng rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<float> v(1 + rng.below(20));
        for (float& x : v)
            x = static_cast<float>(10 * rng.normal());
        const auto p = softmax(v);
        const double total = std::accumulate(p.begin(), p.end(), 0.0);
        REQUIRE(total == doctest::Approx(1.0).epsilon(1e-6));
        const float shift = static_cast<float>(rng.uniform(-50, 50));
        std::vector<float> shifted = v;
        for (float& x : shifted)
            x += shift;
        const auto q = softmax(shifted);
        for (std::size_t i = 0; i < p.size(); ++i) {
            REQUIRE(p[i] > 0.0f);
            REQUIRE(q[i] == doctest::Approx(p[i]).epsilon(1e-4));
        }
    }
}

TEST_CASE("layer_norm")
{
    std::vector<float> out(3);
    const std::vector<float> ones(3, 1.0f), zeros(3, 0.0f), beta{0.5f, -1.0f, 2.0f};
    layer_norm(std::vector<float>{4.0f, 4.0f, 4.0f}, ones, beta, 1e-6f, out);
    for (std::size_t i = 0; i < 3; ++i)
        CHECK(out[i] == doctest::Approx(beta[i]));

    std::vector<float> two(2);
    layer_norm(std::vector<float>{1.0f, -1.0f}, std::vector<float>{1, 1}, std::vector<float>{0, 0}, 0.0f, two);
    CHECK(two[0] == doctest::Approx(1.0));
    CHECK(two[1] == doctest::Approx(-1.0));

    layer_norm(std::vector<float>{0.0f, 1.0f, 2.0f}, ones, zeros, 0.0f, out);
    CHECK(out[0] == doctest::Approx(-1.2247449).epsilon(1e-6));
    CHECK(out[1] == doctest::Approx(0.0));
    CHECK(out[2] == doctest::Approx(1.2247449).epsilon(1e-6));
}

TEST_CASE("gelu")
{
    CHECK(gelu(0.0f) == 0.0f);
    CHECK(oracle::gelu(1.0) == doctest::Approx(0.841345).epsilon(1e-6));
    CHECK(gelu(1.0f) == doctest::Approx(oracle::gelu(1.0)).epsilon(1e-6));
    CHECK(std::abs(gelu(-10.0f)) < 1e-6f);
    for (double x = -6.0; x <= 6.0; x += 0.37)
        CHECK(gelu(static_cast<float>(x)) == doctest::Approx(oracle::gelu(x)).epsilon(1e-5));
}

TEST_CASE("matmul")
{
    Rng rng(17);
    for (auto [n, k, m] : {std::tuple{1ul, 1ul, 1ul}, {4ul, 7ul, 16ul}, {9ul, 33ul, 35ul}, {13ul, 5ul, 70ul}}) {
        const auto a = random_matrix(rng, n, k);
        const auto b = random_matrix(rng, k, m);
        std::vector<float> bias(m);
        for (float& v : bias)
            v = static_cast<float>(rng.normal());
        const auto c = matmul(a, b, bias);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < m; ++j) {
                double ref = bias[j];
                for (std::size_t t = 0; t < k; ++t)
                    ref += double(a(i, t)) * b(t, j);
                REQUIRE(c(i, j) == doctest::Approx(ref).epsilon(1e-5).scale(1.0));
            }
    }
    CHECK_THROWS_AS(matmul(MatrixF(2, 3), MatrixF(4, 2)), ConfigError);
}

TEST_CASE("scaled_dot_product_attention")
{
    SUBCASE("single token returns V")
    {
        const MatrixF q(1, 3, {0.3f, -1.0f, 2.0f});
        const MatrixF k(1, 3, {1.0f, 5.0f, -2.0f});
        const MatrixF v(1, 3, {7.0f, 8.0f, 9.0f});
        CHECK(scaled_dot_product_attention(q, k, v) == v);
    }
    SUBCASE("equal keys average V")
    {
        Rng rng(2);
        const auto q = random_matrix(rng, 5, 4);
        MatrixF k(5, 4);
        for (std::size_t r = 0; r < 5; ++r)
            for (std::size_t c = 0; c < 4; ++c)
                k(r, c) = static_cast<float>(c) - 1.5f;
        const auto v = random_matrix(rng, 5, 3);
        const auto out = scaled_dot_product_attention(q, k, v);
        for (std::size_t c = 0; c < 3; ++c) {
            double mean = 0.0;
            for (std::size_t r = 0; r < 5; ++r)
                mean += v(r, c) / 5.0;
            for (std::size_t r = 0; r < 5; ++r)
                CHECK(out(r, c) == doctest::Approx(mean).epsilon(1e-5));
        }
    }
    SUBCASE("two-token worked example")
    {
        const MatrixF q(2, 1, {1.0f, 0.0f});
        const MatrixF k(2, 1, {1.0f, 0.0f});
        const MatrixF v(2, 1, {10.0f, 20.0f});
        MatrixF weights;
        const auto out = scaled_dot_product_attention(q, k, v, &weights);
        CHECK(weights(0, 0) == doctest::Approx(0.7310586).epsilon(1e-6));
        CHECK(weights(0, 1) == doctest::Approx(0.2689414).epsilon(1e-6));
        CHECK(out(0, 0) == doctest::Approx(12.689414).epsilon(1e-6));
        CHECK(out(1, 0) == doctest::Approx(15.0).epsilon(1e-6));
    }
    SUBCASE("random instances against the oracle")
    {
        Rng rng(99);
        for (int trial = 0; trial < 100; ++trial) {
            const std::size_t n = 1 + rng.below(8), dk = 1 + rng.below(8);
            const auto q = random_matrix(rng, n, dk), k = random_matrix(rng, n, dk), v = random_matrix(rng, n, dk);
            MatrixF w;
            const auto out = scaled_dot_product_attention(q, k, v, &w);
            const auto ref = oracle::attention(to_oracle(q), to_oracle(k), to_oracle(v));
            for (std::size_t r = 0; r < n; ++r) {
                double row = 0.0;
                for (std::size_t c = 0; c < n; ++c)
                    row += w(r, c);
                REQUIRE(row == doctest::Approx(1.0).epsilon(1e-6));
                for (std::size_t c = 0; c < dk; ++c) {
                    REQUIRE(out(r, c) == doctest::Approx(ref[r][c]).epsilon(1e-5).scale(1.0));
                    float lo = v(0, c), hi = v(0, c);
                    for (std::size_t j = 0; j < n; ++j) {
                        lo = std::min(lo, v(j, c));
                        hi = std::max(hi, v(j, c));
                    }
                    REQUIRE(out(r, c) >= lo - 1e-5f);
                    REQUIRE(out(r, c) <= hi + 1e-5f);
                }
            }
        }
    }
}

TEST_CASE("multi_head_self_attention")
{
    Rng rng(1234);
    auto random_linear = [&](std::size_t out, std::size_t in, oracle::Mat& w, std::vector<double>& b) {
        std::vector<float> wf(out * in), bf(out);
        w.assign(out, std::vector<double>(in));
        b.assign(out, 0.0);
        for (std::size_t o = 0; o < out; ++o) {
            for (std::size_t i = 0; i < in; ++i)
                w[o][i] = wf[o * in + i] = static_cast<float>(rng.normal() / std::sqrt(double(in)));
            b[o] = bf[o] = static_cast<float>(0.1 * rng.normal());
        }
        return Linear::from_out_in(wf, bf, out, in);
    };

    SUBCASE("one head equals attention followed by the projection")
    {
        const std::size_t d = 6;
        oracle::Mat w1, w2;
        std::vector<double> b1, b2;
        AttentionWeights aw{random_linear(3 * d, d, w1, b1), random_linear(d, d, w2, b2)};
        const auto x = random_matrix(rng, 4, d);
        const auto qkv = aw.qkv(x);
        MatrixF q(4, d), k(4, d), v(4, d);
        for (std::size_t t = 0; t < 4; ++t)
            for (std::size_t j = 0; j < d; ++j) {
                q(t, j) = qkv(t, j);
                k(t, j) = qkv(t, d + j);
                v(t, j) = qkv(t, 2 * d + j);
            }
        const auto composed = aw.proj(scaled_dot_product_attention(q, k, v));
        CHECK(multi_head_self_attention(x, aw, 1) == composed);
    }
    SUBCASE("zero QKV weights give the projection bias")
    {
        const std::size_t d = 4;
        AttentionWeights aw;
        aw.qkv = Linear::from_out_in(std::vector<float>(3 * d * d, 0.0f), std::vector<float>(3 * d, 0.0f), 3 * d, d);
        std::vector<float> proj_w(d * d);
        for (float& v : proj_w)
            v = static_cast<float>(rng.normal());
        const std::vector<float> proj_b{1.0f, -2.0f, 0.5f, 3.0f};
        aw.proj = Linear::from_out_in(proj_w, proj_b, d, d);
        const auto out = multi_head_self_attention(random_matrix(rng, 5, d), aw, 2);
        for (std::size_t t = 0; t < 5; ++t)
            for (std::size_t j = 0; j < d; ++j)
                CHECK(out(t, j) == proj_b[j]);
    }
    SUBCASE("random 3-token 2-head instances against the head-by-head oracle")
    {
        for (int trial = 0; trial < 20; ++trial) {
            const std::size_t d = 4;
            oracle::Mat w1, w2;
            std::vector<double> b1, b2;
            AttentionWeights aw{random_linear(3 * d, d, w1, b1), random_linear(d, d, w2, b2)};
            const auto x = random_matrix(rng, 3, d);
            const auto out = multi_head_self_attention(x, aw, 2);
            const auto ref = oracle::multi_head(to_oracle(x), w1, b1, w2, b2, 2);
            for (std::size_t t = 0; t < 3; ++t)
                for (std::size_t j = 0; j < d; ++j)
                    REQUIRE(out(t, j) == doctest::Approx(ref[t][j]).epsilon(1e-5).scale(1.0));
        }
    }
}

TEST_CASE("patch_embed")
{
    Rng rng(8);
    SUBCASE("token counts")
    {
        const auto img = random_planar(rng, 224);
        CHECK(unfold_patches(img, 16).rows() == 196);
        CHECK(unfold_patches(img, 8).rows() == 784);
        CHECK_THROWS_AS(unfold_patches(img, 15), ConfigError);
    }
    SUBCASE("identity projection returns the flattened patch")
    {
        const std::size_t p = 4, in = 3 * p * p;
        std::vector<float> eye(in * in, 0.0f);
        for (std::size_t i = 0; i < in; ++i)
            eye[i * in + i] = 1.0f;
        const auto proj = Linear::from_out_in(eye, std::vector<float>(in, 0.0f), in, in);
        const auto img = random_planar(rng, p);
        const auto tokens = patch_embed(img, proj, p);
        REQUIRE(tokens.rows() == 1);
        std::size_t idx = 0;
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t y = 0; y < p; ++y)
                for (std::size_t x = 0; x < p; ++x)
                    CHECK(tokens(0, idx++) == img.at(y, x, c));
    }
    SUBCASE("matches a direct strided convolution")
    {
        const std::size_t p = 4, side = 12, d = 5, in = 3 * p * p;
        std::vector<float> w(d * in), b(d);
        for (float& v : w)
            v = static_cast<float>(rng.normal());
        for (float& v : b)
            v = static_cast<float>(rng.normal());
        const auto img = random_planar(rng, side);
        const auto tokens = patch_embed(img, Linear::from_out_in(w, b, d, in), p);
        const std::size_t g = side / p;
        for (std::size_t py = 0; py < g; ++py)
            for (std::size_t px = 0; px < g; ++px)
                for (std::size_t o = 0; o < d; ++o) {
                    double acc = b[o];
                    for (std::size_t c = 0; c < 3; ++c)
                        for (std::size_t y = 0; y < p; ++y)
                            for (std::size_t x = 0; x < p; ++x)
                                acc += double(w[((o * 3 + c) * p + y) * p + x]) *
                                       img.at(py * p + y, px * p + x, c);
                    REQUIRE(tokens(py * g + px, o) == doctest::Approx(acc).epsilon(1e-5).scale(1.0));
                }
    }
}

TEST_CASE("ViTConfig")
{
    CHECK(ViTConfig::variant("vit-s16").token_count() == 197);
    CHECK(ViTConfig::variant("vit-b8").token_count() == 785);
    CHECK(ViTConfig::variant("vit-b8").embed_dim == 768);
    CHECK(ViTConfig::variant("vit-s8").num_heads == 6);
    CHECK_THROWS_AS(ViTConfig::variant("vit-l14"), ConfigError);
    ViTConfig bad;
    bad.num_heads = 5;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = {};
    bad.patch_size = 15;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("load_weights")
{
    const auto dir = std::filesystem::temp_directory_path() / "dinoprobe_test_vit";
    std::filesystem::create_directories(dir);

    SUBCASE("ViT-S/16 expects 150 tensors")
    {
        const auto cfg = ViTConfig::variant("vit-s16");
        const auto names = expected_tensors(cfg);
        // 12 blocks x 6 parameterized layers x (weight, bias) + patch proj (2) + cls + pos + final norm (2)
        CHECK(names.size() == 12 * 6 * 2 + 2 + 1 + 1 + 2);
        bool found = false;
        for (const auto& [name, shape] : names)
            if (name == "pos_embed") {
                found = true;
                CHECK(shape == std::vector<std::int64_t>{1, 197, 384});
            }
        CHECK(found);
    }
    SUBCASE("missing final-norm bias names the tensor")
    {
        ViTConfig cfg = ViTConfig::variant("vit-s16");
        cfg.depth = 1;
        auto file = testing_support::random_vit_container(cfg, 1);
        TensorFile pruned;
        for (const auto& [name, e] : file.tensors())
            if (name != "norm.bias")
                pruned.put(name, e.shape, std::span<const float>(file.f32(name)));
        pruned.write(dir / "pruned.dpt");
        try {
            WeightStore::load(dir / "pruned.dpt", cfg);
            FAIL("expected a load error");
        } catch (const IoError& e) {
            CHECK(std::string(e.what()).find("norm.bias") != std::string::npos);
        }
    }
    SUBCASE("shape mismatch and non-finite values")
    {
        ViTConfig cfg;
        cfg.depth = 1;
        cfg.embed_dim = 32;
        cfg.num_heads = 2;
        auto file = testing_support::random_vit_container(cfg, 2);
        file.put("blocks.0.attn.proj.bias", {31}, std::span<const float>(std::vector<float>(31)));
        try {
            WeightStore::from_container(file, cfg, "mem");
            FAIL("expected a shape error");
        } catch (const IoError& e) {
            CHECK(std::string(e.what()).find("blocks.0.attn.proj.bias") != std::string::npos);
        }
        auto nan_file = testing_support::random_vit_container(cfg, 2);
        auto cls = nan_file.f32("cls_token");
        cls[3] = std::nanf("");
        nan_file.put("cls_token", {1, 1, 32}, std::span<const float>(cls));
        CHECK_THROWS_WITH_AS(WeightStore::from_container(nan_file, cfg, "mem"), doctest::Contains("cls_token"),
                             IoError);
    }
    SUBCASE("ViT-B/8 geometry is inferred; 785 tokens, 768-d output")
    {
        ViTConfig cfg = ViTConfig::variant("vit-b8");
        cfg.depth = 1;
        auto file = testing_support::random_vit_container(cfg, 3);
        file.metadata().clear();
        file.write(dir / "b8.dpt");
        const auto store = WeightStore::load(dir / "b8.dpt");
        CHECK(store.config().embed_dim == 768);
        CHECK(store.config().num_heads == 12);
        CHECK(store.config().patch_size == 8);
        CHECK(store.config().depth == 1);
        const VisionTransformer vit(store);
        Rng rng(4);
        const auto img = random_planar(rng, 224);
        CHECK(vit.embed(img).rows() == 785);
        CHECK(vit.forward_cls(img).size() == 768);
    }
    SUBCASE("missing file")
    {
        CHECK_THROWS_AS(WeightStore::load(dir / "nope.dpt"), IoError);
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("forward_cls")
{
    ViTConfig cfg;
    cfg.embed_dim = 48;
    cfg.num_heads = 3;
    cfg.depth = 2;
    cfg.patch_size = 16;
    const auto store = WeightStore::from_container(testing_support::random_vit_container(cfg, 21), cfg, "mem");
    const VisionTransformer vit(store);
    Rng rng(22);

    SUBCASE("deterministic and embed_dim long")
    {
        const auto img = random_planar(rng, 224);
        const auto a = vit.forward_cls(img);
        const auto b = vit.forward_cls(img);
        CHECK(a.size() == 48);
        CHECK(a == b);
    }
    SUBCASE("permuting patch tokens permutes the outputs and keeps CLS")
    {
        const auto img = random_planar(rng, 224);
        const auto patches = vit.patch_tokens(img);
        const std::size_t n = patches.rows();
        const auto cls = store.at("cls_token").values;
        for (int trial = 0; trial < 5; ++trial) {
            std::vector<std::size_t> perm(n);
            std::iota(perm.begin(), perm.end(), 0);
            rng.shuffle(std::span(perm));
            MatrixF plain(n + 1, 48), permuted(n + 1, 48);
            std::copy(cls.begin(), cls.end(), plain.row(0).begin());
            std::copy(cls.begin(), cls.end(), permuted.row(0).begin());
            for (std::size_t t = 0; t < n; ++t) {
                std::copy_n(patches.row(t).begin(), 48, plain.row(t + 1).begin());
                std::copy_n(patches.row(perm[t]).begin(), 48, permuted.row(t + 1).begin());
            }
            const auto a = vit.encode(plain);
            const auto b = vit.encode(permuted);
            for (std::size_t j = 0; j < 48; ++j)
                REQUIRE(b(0, j) == doctest::Approx(a(0, j)).epsilon(1e-4).scale(1.0));
            for (std::size_t t = 0; t < n; ++t)
                for (std::size_t j = 0; j < 48; ++j)
                    REQUIRE(b(t + 1, j) == doctest::Approx(a(perm[t] + 1, j)).epsilon(1e-4).scale(1.0));
        }
    }
    SUBCASE("non-finite activation names the block")
    {
        auto file = testing_support::random_vit_container(cfg, 21);
        auto fc2 = file.f32("blocks.1.mlp.fc2.weight");
        for (float& v : fc2)
            v = 3e38f;
        file.put("blocks.1.mlp.fc2.weight", {48, 192}, std::span<const float>(fc2));
        const VisionTransformer broken(WeightStore::from_container(file, cfg, "mem"));
        CHECK_THROWS_WITH_AS(broken.forward_cls(random_planar(rng, 224)), doctest::Contains("block 1"),
                             NumericError);
    }
    SUBCASE("wrong input size")
    {
        CHECK_THROWS_AS(vit.forward_cls(random_planar(rng, 112)), ConfigError);
    }
}

TEST_CASE("parity with the PyTorch reference on the tiny fixture model")
{
    const auto dir = fixtures / "vit_tiny";
    const auto store = WeightStore::load(dir / "weights.dpt");
    CHECK(store.config().embed_dim == 64);
    CHECK(store.config().num_heads == 4);
    CHECK(store.config().depth == 2);
    CHECK(store.skipped() == std::vector<std::string>{"head.weight"});
    const VisionTransformer vit(store);

    std::ifstream in(dir / "reference_cls.csv");
    std::string line;
    std::getline(in, line);
    std::vector<std::vector<float>> outputs;
    int rows = 0;
    while (std::getline(in, line)) {
        std::stringstream ss(line);
        std::string name, cell;
        std::getline(ss, name, ',');
        std::vector<float> ref;
        while (std::getline(ss, cell, ','))
            ref.push_back(std::stof(cell));
        const auto cls = vit.forward_cls(preprocess(load_image(dir / "images" / name), PreprocessSpec{}));
        REQUIRE(cls.size() == ref.size());
        double max_abs = 0.0;
        for (std::size_t i = 0; i < ref.size(); ++i)
            max_abs = std::max(max_abs, std::abs(double(cls[i]) - ref[i]));
        INFO(name);
        CHECK(cosine(cls, ref) >= 0.99999);
        CHECK(max_abs <= 1e-3);
        outputs.push_back(cls);
        ++rows;
    }
    CHECK(rows == 5);
    // images must actually move the embedding for parity to mean anything
    CHECK(cosine(outputs[0], outputs[1]) < 0.99);
}
