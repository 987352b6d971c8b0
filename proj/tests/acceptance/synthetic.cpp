// Criteria that need no external assets: kernel oracles and classifier sanity.

#include "criteria.hpp"

#include "../support/oracles.hpp"
#include "../support/random_vit.hpp"

#include "dinoprobe/classifier_internals.hpp"
#include "dinoprobe/classifiers.hpp"
#include "dinoprobe/kernels.hpp"
#include "dinoprobe/rng.hpp"
#include "dinoprobe/vit.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

namespace acceptance {

using namespace dinoprobe;

namespace {

constexpr int kInstances = 1000;
constexpr double kOracleTol = 1e-5;
constexpr double kEquivarianceTol = 1e-4;

double elapsed_since(std::chrono::steady_clock::time_point t)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

/// |a - b| relative to max(1, |b|).
double deviation(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

MatrixF random_matrix(Rng& rng, std::size_t r, std::size_t c, double scale = 1.0)
{
    MatrixF m(r, c);
    for (auto& v : m.values())
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

MatrixF permute_rows(const MatrixF& m, const std::vector<std::size_t>& perm)
{
    MatrixF out(m.rows(), m.cols());
    for (std::size_t i = 0; i < perm.size(); ++i)
        std::copy(m.row(perm[i]).begin(), m.row(perm[i]).end(), out.row(i).begin());
    return out;
}

std::vector<std::size_t> random_permutation(Rng& rng, std::size_t n)
{
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), 0);
    for (std::size_t i = n; i > 1; --i)
        std::swap(p[i - 1], p[rng.below(i)]);
    return p;
}

/// Largest deviation between out[perm] and f(x[perm]) over rows.
double equivariance_gap(const MatrixF& out, const MatrixF& permuted_out, const std::vector<std::size_t>& perm)
{
    double worst = 0.0;
    for (std::size_t i = 0; i < perm.size(); ++i)
        for (std::size_t c = 0; c < out.cols(); ++c)
            worst = std::max(worst, deviation(permuted_out(i, c), out(perm[i], c)));
    return worst;
}

struct Dataset {
    MatrixF x;
    std::vector<int> y;
};

Dataset gaussian_pair(Rng& rng, std::size_t per_class, std::size_t d, double offset)
{
    Dataset out{MatrixF(2 * per_class, d), {}};
    for (std::size_t i = 0; i < 2 * per_class; ++i) {
        const int label = static_cast<int>(i % 2);
        for (std::size_t j = 0; j < d; ++j)
            out.x(i, j) = static_cast<float>((label ? offset : -offset) + rng.normal());
        out.y.push_back(label);
    }
    return out;
}

template <typename Params>
std::vector<double*> slots(Params& p);

template <>
std::vector<double*> slots(detail::LinearParams& p)
{
    std::vector<double*> out;
    for (auto& v : p.weight.values())
        out.push_back(&v);
    for (auto& v : p.bias)
        out.push_back(&v);
    return out;
}

template <>
std::vector<double*> slots(detail::MlpWeights& p)
{
    std::vector<double*> out;
    for (auto* m : {&p.w1, &p.w2})
        for (auto& v : m->values())
            out.push_back(&v);
    for (auto* b : {&p.b1, &p.b2})
        for (auto& v : *b)
            out.push_back(&v);
    return out;
}

/// Max relative error |a - n| / max(|a| + |n|, 1e-7) between the analytic
/// gradient and central differences.
template <typename Params, typename Objective>
double gradient_error(Params p, Objective objective)
{
    Params analytic;
    objective(p, &analytic);
    const auto a = slots(analytic);
    const auto theta = slots(p);
    double worst = 0.0;
    constexpr double h = 1e-5;
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const double saved = *theta[i];
        *theta[i] = saved + h;
        const double up = objective(p, nullptr);
        *theta[i] = saved - h;
        const double down = objective(p, nullptr);
        *theta[i] = saved;
        const double numeric = (up - down) / (2 * h);
        worst = std::max(worst, std::abs(*a[i] - numeric) / std::max(std::abs(*a[i]) + std::abs(numeric), 1e-7));
    }
    return worst;
}

MatrixD random_double(Rng& rng, std::size_t r, std::size_t c)
{
    MatrixD m(r, c);
    for (auto& v : m.values())
        v = rng.normal();
    return m;
}

std::vector<double> random_vec(Rng& rng, std::size_t n)
{
    std::vector<double> v(n);
    for (auto& x : v)
        x = rng.normal();
    return v;
}

} // namespace

Outcome kernel_oracles()
{
    const auto start = std::chrono::steady_clock::now();
    Rng rng(20240101);
    double softmax_err = 0.0, norm_err = 0.0, gelu_err = 0.0, attn_err = 0.0, row_err = 0.0;

    for (int t = 0; t < kInstances; ++t) {
        std::vector<float> v(1 + rng.below(64));
        for (auto& x : v)
            x = static_cast<float>(rng.uniform(-10, 10));
        const auto got = softmax(v);
        const auto ref = oracle::softmax(std::vector<double>(v.begin(), v.end()));
        for (std::size_t i = 0; i < v.size(); ++i)
            softmax_err = std::max(softmax_err, deviation(got[i], ref[i]));
    }
    for (int t = 0; t < kInstances; ++t) {
        const std::size_t d = 2 + rng.below(63);
        std::vector<float> x(d), gamma(d), beta(d), out(d);
        for (std::size_t i = 0; i < d; ++i) {
            x[i] = static_cast<float>(3 * rng.normal());
            gamma[i] = static_cast<float>(rng.uniform(0.5, 1.5));
            beta[i] = static_cast<float>(rng.normal());
        }
        layer_norm(x, gamma, beta, 1e-6f, out);
        const auto ref = oracle::layer_norm({x.begin(), x.end()}, {gamma.begin(), gamma.end()},
                                            {beta.begin(), beta.end()}, 1e-6);
        for (std::size_t i = 0; i < d; ++i)
            norm_err = std::max(norm_err, deviation(out[i], ref[i]));
    }
    for (int t = 0; t < kInstances; ++t) {
        const auto x = static_cast<float>(rng.uniform(-8, 8));
        gelu_err = std::max(gelu_err, deviation(gelu(x), oracle::gelu(x)));
    }
    for (int t = 0; t < kInstances; ++t) {
        const std::size_t n = 1 + rng.below(12), dk = 1 + rng.below(16);
        const auto q = random_matrix(rng, n, dk), k = random_matrix(rng, n, dk), v = random_matrix(rng, n, dk);
        MatrixF w;
        const auto out = scaled_dot_product_attention(q, k, v, &w);
        const auto ref = oracle::attention(to_oracle(q), to_oracle(k), to_oracle(v));
        for (std::size_t r = 0; r < n; ++r) {
            double total = 0.0;
            for (std::size_t c = 0; c < n; ++c) {
                total += w(r, c);
                if (w(r, c) < 0.0f)
                    row_err = std::max(row_err, 1.0);
            }
            row_err = std::max(row_err, std::abs(total - 1.0));
            for (std::size_t c = 0; c < dk; ++c)
                attn_err = std::max(attn_err, deviation(out(r, c), ref[r][c]));
        }
    }

    // Without positional embeddings, attention and whole encoder stacks
    // commute with any reordering of the tokens.
    double mhsa_gap = 0.0, encoder_gap = 0.0;
    {
        const std::size_t d = 48, heads = 4, n = 17;
        AttentionWeights aw;
        aw.qkv = Linear{random_matrix(rng, d, 3 * d, 0.15), std::vector<float>(3 * d, 0.01f)};
        aw.proj = Linear{random_matrix(rng, d, d, 0.15), std::vector<float>(d, -0.02f)};
        for (int t = 0; t < 20; ++t) {
            const auto x = random_matrix(rng, n, d);
            const auto perm = random_permutation(rng, n);
            mhsa_gap = std::max(mhsa_gap, equivariance_gap(multi_head_self_attention(x, aw, heads),
                                                           multi_head_self_attention(permute_rows(x, perm), aw, heads),
                                                           perm));
        }
        ViTConfig cfg;
        cfg.embed_dim = 64;
        cfg.num_heads = 4;
        cfg.depth = 3;
        cfg.image_side = 64;
        const VisionTransformer vit(WeightStore::from_container(testing_support::random_vit_container(cfg, 11), cfg, "random"));
        for (int t = 0; t < 5; ++t) {
            const auto tokens = random_matrix(rng, cfg.token_count(), cfg.embed_dim);
            const auto perm = random_permutation(rng, tokens.rows());
            encoder_gap = std::max(encoder_gap,
                                   equivariance_gap(vit.encode(tokens), vit.encode(permute_rows(tokens, perm)), perm));
        }
    }

    const double secs = elapsed_since(start);
    const double worst = std::max({softmax_err, norm_err, gelu_err, attn_err});
    const bool ok = worst <= kOracleTol && row_err <= 1e-6 && std::max(mhsa_gap, encoder_gap) <= kEquivarianceTol &&
                    secs < 60.0;
    return pass_if(ok, "max dev softmax " + num(softmax_err, 2) + ", layer_norm " + num(norm_err, 2) + ", gelu " +
                           num(gelu_err, 2) + ", attention " + num(attn_err, 2) + " (tol 1e-05, " +
                           std::to_string(kInstances) + " instances each); row-sum dev " + num(row_err, 2) +
                           "; permutation gap attention " + num(mhsa_gap, 2) + ", encoder " + num(encoder_gap, 2) +
                           " (tol 1e-04); " + num(secs, 3) + " s (limit 60)");
}

Outcome classifier_sanity()
{
    const auto start = std::chrono::steady_clock::now();

    double logistic_grad = 0.0, mlp_grad = 0.0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        Rng rng(seed);
        const std::size_t n = 8, d = 5, k = 3, h = 6;
        const auto x = random_double(rng, n, d);
        std::vector<int> y(n);
        for (auto& v : y)
            v = static_cast<int>(rng.below(k));
        detail::LinearParams lp{random_double(rng, k, d), random_vec(rng, k)};
        logistic_grad = std::max(logistic_grad, gradient_error(lp, [&](const detail::LinearParams& p, detail::LinearParams* g) {
                                     return detail::logistic_objective(p, x, y, 0.01, g);
                                 }));
        detail::MlpWeights mp{random_double(rng, h, d), random_vec(rng, h), random_double(rng, k, h),
                              random_vec(rng, k)};
        mlp_grad = std::max(mlp_grad, gradient_error(mp, [&](const detail::MlpWeights& p, detail::MlpWeights* g) {
                                return detail::mlp_objective(p, x, y, 0.01, g);
                            }));
    }

    // Two unit-variance clouds at -5 and +5 in every coordinate.
    Rng data_rng(77);
    const auto train_set = gaussian_pair(data_rng, 100, 2, 5.0);
    const auto test_set = gaussian_pair(data_rng, 100, 2, 5.0);
    std::string separable;
    bool separable_ok = true;
    for (auto kind : {ClassifierKind::logistic, ClassifierKind::linear_svm, ClassifierKind::mlp}) {
        ClassifierSpec spec;
        spec.kind = kind;
        spec.seed = 3;
        const double acc = accuracy(train(spec, train_set.x, train_set.y), test_set.x, test_set.y);
        separable_ok &= acc == 1.0;
        separable += std::string(separable.empty() ? "" : ", ") + std::string(to_string(kind)) + " " + num(acc, 4);
    }

    Rng mem_rng(5);
    const auto mem_x = random_matrix(mem_rng, 120, 8);
    std::vector<int> mem_y(120);
    for (auto& v : mem_y)
        v = static_cast<int>(mem_rng.below(4));
    ClassifierSpec knn;
    knn.kind = ClassifierKind::knn;
    knn.knn.k = 1;
    const double memorized = accuracy(train(knn, mem_x, mem_y, 4), mem_x, mem_y);

    ClassifierSpec gbt;
    gbt.kind = ClassifierKind::gbt;
    gbt.gbt.rounds = 60;
    Rng noisy_rng(9);
    const auto noisy = gaussian_pair(noisy_rng, 150, 6, 0.4);
    const auto history = train(gbt, noisy.x, noisy.y).loss_history();
    std::size_t rises = 0;
    for (std::size_t i = 1; i < history.size(); ++i)
        rises += history[i] > history[i - 1];

    const double secs = elapsed_since(start);
    const bool ok = logistic_grad < 1e-4 && mlp_grad < 1e-4 && separable_ok && memorized == 1.0 && rises == 0 &&
                    history.size() == 61 && secs < 120.0;
    return pass_if(ok, "gradient rel err logistic " + num(logistic_grad, 2) + ", mlp " + num(mlp_grad, 2) +
                           " (tol 1e-04); separable test accuracy " + separable + "; knn k=1 train accuracy " +
                           num(memorized, 4) + "; gbt loss " + num(history.front(), 4) + " -> " +
                           num(history.back(), 4) + " with " + std::to_string(rises) + " increases over " +
                           std::to_string(history.size() - 1) + " rounds; " + num(secs, 3) + " s (limit 120)");
}

} // namespace acceptance
