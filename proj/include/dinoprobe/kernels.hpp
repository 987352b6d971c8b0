#pragma once

#include "dinoprobe/matrix.hpp"

#include <span>
#include <vector>

namespace dinoprobe {

#ifdef DINOPROBE_DOUBLE_ACCUMULATION
using Accum = double;
#else
using Accum = float;
#endif

/// In-place softmax with max subtraction.
void softmax_inplace(std::span<float> v);
std::vector<float> softmax(std::span<const float> v);

/// out = (x - mean(x)) / sqrt(var(x) + eps) * gamma + beta, population variance.
/// `out` may alias `x`.
void layer_norm(std::span<const float> x, std::span<const float> gamma, std::span<const float> beta, float eps,
                std::span<float> out);
/// Row-wise layer_norm of a token matrix.
MatrixF layer_norm_rows(const MatrixF& x, std::span<const float> gamma, std::span<const float> beta, float eps);

/// Exact GELU, x * Phi(x) = 0.5 x (1 + erf(x / sqrt 2)).
float gelu(float x);

/// out = a * b (+ bias broadcast over rows). a: n x k, b: k x m.
/// Each output element is accumulated in ascending k order starting from the
/// bias, independent of tiling, so results are reproducible bit for bit.
void matmul(const MatrixF& a, const MatrixF& b, std::span<const float> bias, MatrixF& out);
MatrixF matmul(const MatrixF& a, const MatrixF& b, std::span<const float> bias = {});

/// softmax(q k^T / sqrt(d_k)) v. q, k, v: n x d_k. When `weights` is non-null
/// it receives the n x n attention matrix.
MatrixF scaled_dot_product_attention(const MatrixF& q, const MatrixF& k, const MatrixF& v,
                                     MatrixF* weights = nullptr);

/// Linear layer packed for matmul: in x out weight (the transpose of the
/// out x in layout checkpoints store) plus bias.
struct Linear {
    MatrixF weight;
    std::vector<float> bias;

    /// From an out x in row-major checkpoint tensor.
    static Linear from_out_in(std::span<const float> weight, std::span<const float> bias, std::size_t out,
                              std::size_t in);

    MatrixF operator()(const MatrixF& x) const { return matmul(x, weight, bias); }
};

struct AttentionWeights {
    Linear qkv;  ///< d -> 3d, output order [Q; K; V], heads contiguous inside each
    Linear proj; ///< d -> d
};

/// Split the fused projection into per-head Q/K/V, attend, concatenate heads
/// in order, apply the output projection.
MatrixF multi_head_self_attention(const MatrixF& x, const AttentionWeights& w, std::size_t num_heads);

} // namespace dinoprobe
