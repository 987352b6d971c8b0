#include "dinoprobe/classifier_internals.hpp"
#include "dinoprobe/rng.hpp"
#include "model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace dinoprobe::detail {

namespace {

double dot(const double* a, const double* b, std::size_t n)
{
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
        s0 += a[j] * b[j];
        s1 += a[j + 1] * b[j + 1];
        s2 += a[j + 2] * b[j + 2];
        s3 += a[j + 3] * b[j + 3];
    }
    for (; j < n; ++j)
        s0 += a[j] * b[j];
    return (s0 + s1) + (s2 + s3);
}

/// Hidden activations and class log-probabilities of one input row.
void forward(const MlpWeights& p, const double* x, std::vector<double>& hidden, std::vector<double>& logp)
{
    const std::size_t h = p.w1.rows();
    const std::size_t d = p.w1.cols();
    hidden.resize(h);
    for (std::size_t u = 0; u < h; ++u)
        hidden[u] = std::max(0.0, p.b1[u] + dot(p.w1.row(u).data(), x, d));
    const std::size_t k = p.w2.rows();
    logp.resize(k);
    for (std::size_t c = 0; c < k; ++c)
        logp[c] = p.b2[c] + dot(p.w2.row(c).data(), hidden.data(), h);
    const double m = *std::max_element(logp.begin(), logp.end());
    double total = 0.0;
    for (double z : logp)
        total += std::exp(z - m);
    const double lse = m + std::log(total);
    for (auto& z : logp)
        z -= lse;
}

void zero_like(const MlpWeights& p, MlpWeights& g)
{
    g.w1 = MatrixD(p.w1.rows(), p.w1.cols());
    g.b1.assign(p.b1.size(), 0.0);
    g.w2 = MatrixD(p.w2.rows(), p.w2.cols());
    g.b2.assign(p.b2.size(), 0.0);
}

/// Mean cross-entropy over `rows` plus the L2 term; accumulates the gradient
/// into `grad` when given.
double objective_rows(const MlpWeights& p, const MatrixD& x, std::span<const int> y,
                      std::span<const std::size_t> rows, double l2, MlpWeights* grad)
{
    const std::size_t h = p.w1.rows();
    const std::size_t d = p.w1.cols();
    const std::size_t k = p.w2.rows();
    if (grad)
        zero_like(p, *grad);
    std::vector<double> hidden, logp, dh(h);
    const double scale = 1.0 / static_cast<double>(rows.size());
    double loss = 0.0;
    for (std::size_t i : rows) {
        const double* xi = x.row(i).data();
        forward(p, xi, hidden, logp);
        const auto label = static_cast<std::size_t>(y[i]);
        loss -= logp[label];
        if (!grad)
            continue;
        std::fill(dh.begin(), dh.end(), 0.0);
        for (std::size_t c = 0; c < k; ++c) {
            const double dz = (std::exp(logp[c]) - (c == label ? 1.0 : 0.0)) * scale;
            grad->b2[c] += dz;
            auto gw2 = grad->w2.row(c);
            const auto w2 = p.w2.row(c);
            for (std::size_t u = 0; u < h; ++u) {
                gw2[u] += dz * hidden[u];
                dh[u] += dz * w2[u];
            }
        }
        for (std::size_t u = 0; u < h; ++u) {
            if (hidden[u] <= 0.0)
                continue;
            grad->b1[u] += dh[u];
            double* gw1 = grad->w1.row(u).data();
            const double a = dh[u];
            for (std::size_t j = 0; j < d; ++j)
                gw1[j] += a * xi[j];
        }
    }
    loss *= scale;
    if (l2 > 0) {
        double sq = 0.0;
        for (double w : p.w1.values())
            sq += w * w;
        for (double w : p.w2.values())
            sq += w * w;
        loss += 0.5 * l2 * sq;
        if (grad) {
            for (std::size_t i = 0; i < p.w1.storage().size(); ++i)
                grad->w1.storage()[i] += l2 * p.w1.storage()[i];
            for (std::size_t i = 0; i < p.w2.storage().size(); ++i)
                grad->w2.storage()[i] += l2 * p.w2.storage()[i];
        }
    }
    return loss;
}

/// v = momentum * v - lr * g; p += v, over matching flat buffers.
void momentum_step(std::span<double> p, std::span<double> v, std::span<const double> g, double lr, double momentum)
{
    for (std::size_t i = 0; i < p.size(); ++i) {
        v[i] = momentum * v[i] - lr * g[i];
        p[i] += v[i];
    }
}

class MlpModel final : public Model {
public:
    explicit MlpModel(MlpWeights p) : p_(std::move(p)) {}

    std::vector<double> scores(std::span<const float> x) const override { return proba(x); }

    bool has_proba() const override { return true; }

    std::vector<double> proba(std::span<const float> x) const override
    {
        const std::vector<double> xd(x.begin(), x.end());
        std::vector<double> hidden, logp;
        forward(p_, xd.data(), hidden, logp);
        for (auto& v : logp)
            v = std::exp(v);
        return logp;
    }

    void save(TensorFile& out) const override
    {
        auto rows = [](const MatrixD& m) { return static_cast<std::int64_t>(m.rows()); };
        auto cols = [](const MatrixD& m) { return static_cast<std::int64_t>(m.cols()); };
        out.put("mlp.w1", {rows(p_.w1), cols(p_.w1)}, p_.w1.values());
        out.put("mlp.b1", {rows(p_.w1)}, std::span<const double>(p_.b1));
        out.put("mlp.w2", {rows(p_.w2), cols(p_.w2)}, p_.w2.values());
        out.put("mlp.b2", {rows(p_.w2)}, std::span<const double>(p_.b2));
    }

private:
    MlpWeights p_;
};

} // namespace

double mlp_objective(const MlpWeights& p, const MatrixD& x, std::span<const int> y, double l2, MlpWeights* grad)
{
    std::vector<std::size_t> rows(x.rows());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    return objective_rows(p, x, y, rows, l2, grad);
}

Fitted fit_mlp(const MlpParams& params, std::uint64_t seed, const TrainingSet& data)
{
    const MatrixD x = to_double(data.x);
    const std::size_t n = x.rows();
    const std::size_t d = x.cols();
    const std::size_t h = params.hidden;
    const std::size_t k = data.classes;

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    Rng split_rng(hash64(seed, 0));
    split_rng.shuffle(std::span<std::size_t>(perm));
    std::size_t holdout = 0;
    if (params.holdout_fraction > 0 && n >= 10)
        holdout = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(params.holdout_fraction * static_cast<double>(n))));
    std::vector<std::size_t> valid(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(holdout));
    std::vector<std::size_t> fit_rows(perm.begin() + static_cast<std::ptrdiff_t>(holdout), perm.end());
    std::sort(valid.begin(), valid.end());
    std::sort(fit_rows.begin(), fit_rows.end());

    // He-uniform for the ReLU layer, Glorot-uniform for the output layer.
    Rng init(hash64(seed, 1));
    MlpWeights p{MatrixD(h, d), std::vector<double>(h, 0.0), MatrixD(k, h), std::vector<double>(k, 0.0)};
    const double a1 = std::sqrt(6.0 / static_cast<double>(d));
    for (auto& w : p.w1.values())
        w = init.uniform(-a1, a1);
    const double a2 = std::sqrt(6.0 / static_cast<double>(h + k));
    for (auto& w : p.w2.values())
        w = init.uniform(-a2, a2);

    MlpWeights velocity;
    zero_like(p, velocity);
    MlpWeights grad;
    MlpWeights best = p;
    double best_loss = std::numeric_limits<double>::infinity();
    std::size_t stale = 0;
    std::vector<double> history;
    Rng order_rng(hash64(seed, 2));
    for (std::size_t epoch = 0; epoch < params.max_epochs; ++epoch) {
        order_rng.shuffle(std::span<std::size_t>(fit_rows));
        for (std::size_t start = 0; start < fit_rows.size(); start += params.batch_size) {
            const std::size_t len = std::min(params.batch_size, fit_rows.size() - start);
            const auto batch = std::span<const std::size_t>(fit_rows).subspan(start, len);
            objective_rows(p, x, data.y, batch, params.l2, &grad);
            momentum_step(p.w1.values(), velocity.w1.values(), grad.w1.values(), params.learning_rate, params.momentum);
            momentum_step(p.b1, velocity.b1, grad.b1, params.learning_rate, params.momentum);
            momentum_step(p.w2.values(), velocity.w2.values(), grad.w2.values(), params.learning_rate, params.momentum);
            momentum_step(p.b2, velocity.b2, grad.b2, params.learning_rate, params.momentum);
        }
        // Monitor the held-out cross-entropy; without a holdout, the
        // training objective (no early stop).
        const double loss = holdout > 0 ? objective_rows(p, x, data.y, valid, 0.0, nullptr)
                                        : objective_rows(p, x, data.y, fit_rows, params.l2, nullptr);
        if (!std::isfinite(loss))
            throw NumericError("MLP training diverged at epoch " + std::to_string(epoch + 1));
        history.push_back(loss);
        if (holdout == 0)
            continue;
        const bool improved = loss < best_loss - params.min_delta;
        if (loss < best_loss) {
            best_loss = loss;
            best = p;
        }
        if (improved)
            stale = 0;
        else if (++stale >= params.patience)
            break;
    }
    if (holdout > 0)
        p = std::move(best);
    return {std::make_shared<MlpModel>(std::move(p)), std::move(history)};
}

std::shared_ptr<const Model> load_mlp(const TensorFile& in)
{
    const auto& e1 = in.at("mlp.w1");
    const auto& e2 = in.at("mlp.w2");
    if (e1.shape.size() != 2 || e2.shape.size() != 2 || e2.shape[1] != e1.shape[0])
        throw IoError("corrupt MLP weights");
    MlpWeights p{MatrixD(static_cast<std::size_t>(e1.shape[0]), static_cast<std::size_t>(e1.shape[1]), in.f64("mlp.w1")),
                 in.f64("mlp.b1"),
                 MatrixD(static_cast<std::size_t>(e2.shape[0]), static_cast<std::size_t>(e2.shape[1]), in.f64("mlp.w2")),
                 in.f64("mlp.b2")};
    if (p.b1.size() != p.w1.rows() || p.b2.size() != p.w2.rows())
        throw IoError("corrupt MLP biases");
    return std::make_shared<MlpModel>(std::move(p));
}

} // namespace dinoprobe::detail
