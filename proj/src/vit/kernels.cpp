#include "dinoprobe/kernels.hpp"

#include "dinoprobe/error.hpp"

#include <algorithm>
#include <cmath>

namespace dinoprobe {

void softmax_inplace(std::span<float> v)
{
    if (v.empty())
        return;
    const float peak = *std::max_element(v.begin(), v.end());
    Accum total = 0;
    for (float& x : v) {
        x = std::exp(x - peak);
        total += x;
    }
    const auto inv = static_cast<float>(Accum{1} / total);
    for (float& x : v)
        x *= inv;
}

std::vector<float> softmax(std::span<const float> v)
{
    std::vector<float> out(v.begin(), v.end());
    softmax_inplace(out);
    return out;
}

void layer_norm(std::span<const float> x, std::span<const float> gamma, std::span<const float> beta, float eps,
                std::span<float> out)
{
    const std::size_t n = x.size();
    Accum sum = 0;
    for (float v : x)
        sum += v;
    const Accum mean = sum / static_cast<Accum>(n);
    Accum sq = 0;
    for (float v : x) {
        const Accum d = v - mean;
        sq += d * d;
    }
    const Accum var = sq / static_cast<Accum>(n);
    const auto inv = static_cast<float>(Accum{1} / std::sqrt(var + static_cast<Accum>(eps)));
    const auto m = static_cast<float>(mean);
    for (std::size_t i = 0; i < n; ++i)
        out[i] = (x[i] - m) * inv * gamma[i] + beta[i];
}

MatrixF layer_norm_rows(const MatrixF& x, std::span<const float> gamma, std::span<const float> beta, float eps)
{
    MatrixF out(x.rows(), x.cols());
    for (std::size_t r = 0; r < x.rows(); ++r)
        layer_norm(x.row(r), gamma, beta, eps, out.row(r));
    return out;
}

float gelu(float x)
{
    return 0.5f * x * (1.0f + std::erf(x * 0.70710678118654752f));
}

namespace {

constexpr std::size_t kRowTile = 4;
constexpr std::size_t kColTile = 16;

// Full 4 x 16 tile with compile-time bounds so the accumulators stay in
// registers.
void tile_full(const MatrixF& a, const MatrixF& b, const float* bias, MatrixF& out, std::size_t r0, std::size_t c0)
{
    const std::size_t depth = a.cols();
    Accum acc[kRowTile][kColTile];
    for (std::size_t r = 0; r < kRowTile; ++r)
        for (std::size_t j = 0; j < kColTile; ++j)
            acc[r][j] = bias ? bias[c0 + j] : Accum{0};
    const float* a0 = a.row(r0).data();
    const float* a1 = a.row(r0 + 1).data();
    const float* a2 = a.row(r0 + 2).data();
    const float* a3 = a.row(r0 + 3).data();
    for (std::size_t k = 0; k < depth; ++k) {
        const float* brow = b.row(k).data() + c0;
        const Accum x0 = a0[k], x1 = a1[k], x2 = a2[k], x3 = a3[k];
        for (std::size_t j = 0; j < kColTile; ++j) {
            const Accum w = brow[j];
            acc[0][j] += x0 * w;
            acc[1][j] += x1 * w;
            acc[2][j] += x2 * w;
            acc[3][j] += x3 * w;
        }
    }
    for (std::size_t r = 0; r < kRowTile; ++r) {
        float* dst = out.row(r0 + r).data() + c0;
        for (std::size_t j = 0; j < kColTile; ++j)
            dst[j] = static_cast<float>(acc[r][j]);
    }
}

void tile_partial(const MatrixF& a, const MatrixF& b, const float* bias, MatrixF& out, std::size_t r0,
                  std::size_t rows, std::size_t c0, std::size_t cols)
{
    const std::size_t depth = a.cols();
    Accum acc[kRowTile][kColTile];
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < cols; ++j)
            acc[r][j] = bias ? bias[c0 + j] : Accum{0};
    for (std::size_t k = 0; k < depth; ++k) {
        const float* brow = b.row(k).data() + c0;
        for (std::size_t r = 0; r < rows; ++r) {
            const Accum x = a(r0 + r, k);
            for (std::size_t j = 0; j < cols; ++j)
                acc[r][j] += x * static_cast<Accum>(brow[j]);
        }
    }
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < cols; ++j)
            out(r0 + r, c0 + j) = static_cast<float>(acc[r][j]);
}

} // namespace

void matmul(const MatrixF& a, const MatrixF& b, std::span<const float> bias, MatrixF& out)
{
    if (a.cols() != b.rows())
        throw ConfigError("matmul: inner dimensions differ");
    if (!bias.empty() && bias.size() != b.cols())
        throw ConfigError("matmul: bias length differs from output width");
    if (out.rows() != a.rows() || out.cols() != b.cols())
        out = MatrixF(a.rows(), b.cols());
    const float* bptr = bias.empty() ? nullptr : bias.data();
    const std::size_t n = a.rows();
    const std::size_t m = b.cols();
    for (std::size_t c0 = 0; c0 < m; c0 += kColTile) {
        const std::size_t cols = std::min(kColTile, m - c0);
        for (std::size_t r0 = 0; r0 < n; r0 += kRowTile) {
            const std::size_t rows = std::min(kRowTile, n - r0);
            if (rows == kRowTile && cols == kColTile)
                tile_full(a, b, bptr, out, r0, c0);
            else
                tile_partial(a, b, bptr, out, r0, rows, c0, cols);
        }
    }
}

MatrixF matmul(const MatrixF& a, const MatrixF& b, std::span<const float> bias)
{
    MatrixF out(a.rows(), b.cols());
    matmul(a, b, bias, out);
    return out;
}

MatrixF scaled_dot_product_attention(const MatrixF& q, const MatrixF& k, const MatrixF& v, MatrixF* weights)
{
    if (q.cols() != k.cols() || k.rows() != v.rows())
        throw ConfigError("attention: inconsistent Q/K/V shapes");
    MatrixF scores = matmul(q, k.transposed());
    const float scale = 1.0f / std::sqrt(static_cast<float>(q.cols()));
    for (std::size_t r = 0; r < scores.rows(); ++r) {
        auto row = scores.row(r);
        for (float& s : row)
            s *= scale;
        softmax_inplace(row);
    }
    MatrixF out = matmul(scores, v);
    if (weights)
        *weights = std::move(scores);
    return out;
}

Linear Linear::from_out_in(std::span<const float> weight, std::span<const float> bias, std::size_t out,
                           std::size_t in)
{
    if (weight.size() != out * in || (!bias.empty() && bias.size() != out))
        throw ConfigError("linear layer: weight/bias sizes do not match " + std::to_string(out) + "x" +
                          std::to_string(in));
    Linear l;
    l.weight = MatrixF(in, out);
    for (std::size_t o = 0; o < out; ++o)
        for (std::size_t i = 0; i < in; ++i)
            l.weight(i, o) = weight[o * in + i];
    l.bias.assign(bias.begin(), bias.end());
    return l;
}

MatrixF multi_head_self_attention(const MatrixF& x, const AttentionWeights& w, std::size_t num_heads)
{
    const std::size_t n = x.rows();
    const std::size_t d = x.cols();
    if (num_heads == 0 || d % num_heads != 0)
        throw ConfigError("attention: embedding width not divisible by head count");
    if (w.qkv.weight.rows() != d || w.qkv.weight.cols() != 3 * d)
        throw ConfigError("attention: fused QKV projection has the wrong shape");
    const std::size_t dk = d / num_heads;
    const MatrixF qkv = w.qkv(x);

    MatrixF heads(n, d);
    MatrixF q(n, dk), k(n, dk), v(n, dk);
    for (std::size_t h = 0; h < num_heads; ++h) {
        for (std::size_t t = 0; t < n; ++t) {
            const auto src = qkv.row(t);
            std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(h * dk), dk, q.row(t).begin());
            std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(d + h * dk), dk, k.row(t).begin());
            std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(2 * d + h * dk), dk, v.row(t).begin());
        }
        const MatrixF o = scaled_dot_product_attention(q, k, v);
        for (std::size_t t = 0; t < n; ++t)
            std::copy_n(o.row(t).begin(), dk, heads.row(t).begin() + static_cast<std::ptrdiff_t>(h * dk));
    }
    return w.proj(heads);
}

} // namespace dinoprobe
