#include "dinoprobe/classifier_internals.hpp"
#include "dinoprobe/rng.hpp"
#include "model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dinoprobe::detail {

namespace {

/// Scores W x + b; softmax of them when probabilistic.
class LinearModel final : public Model {
public:
    LinearModel(LinearParams p, bool probabilistic) : p_(std::move(p)), probabilistic_(probabilistic) {}

    std::vector<double> scores(std::span<const float> x) const override
    {
        std::vector<double> z(p_.bias);
        for (std::size_t k = 0; k < z.size(); ++k) {
            const auto w = p_.weight.row(k);
            double s = 0.0;
            for (std::size_t j = 0; j < w.size(); ++j)
                s += w[j] * static_cast<double>(x[j]);
            z[k] += s;
        }
        return z;
    }

    bool has_proba() const override { return probabilistic_; }

    std::vector<double> proba(std::span<const float> x) const override
    {
        auto z = scores(x);
        const double m = *std::max_element(z.begin(), z.end());
        double total = 0.0;
        for (auto& v : z)
            total += (v = std::exp(v - m));
        for (auto& v : z)
            v /= total;
        return z;
    }

    void save(TensorFile& out) const override
    {
        const auto k = static_cast<std::int64_t>(p_.weight.rows());
        out.put("weight", {k, static_cast<std::int64_t>(p_.weight.cols())}, p_.weight.values());
        out.put("bias", {k}, std::span<const double>(p_.bias));
    }

private:
    LinearParams p_;
    bool probabilistic_;
};

double max_abs(const LinearParams& g)
{
    double m = 0.0;
    for (double v : g.weight.values())
        m = std::max(m, std::abs(v));
    for (double v : g.bias)
        m = std::max(m, std::abs(v));
    return m;
}

double squared_norm(const LinearParams& g)
{
    double s = 0.0;
    for (double v : g.weight.values())
        s += v * v;
    for (double v : g.bias)
        s += v * v;
    return s;
}

/// out = p - t * g
void step_into(const LinearParams& p, const LinearParams& g, double t, LinearParams& out)
{
    auto& w = out.weight.storage();
    const auto& pw = p.weight.storage();
    const auto& gw = g.weight.storage();
    for (std::size_t i = 0; i < w.size(); ++i)
        w[i] = pw[i] - t * gw[i];
    for (std::size_t i = 0; i < out.bias.size(); ++i)
        out.bias[i] = p.bias[i] - t * g.bias[i];
}

} // namespace

double logistic_objective(const LinearParams& p, const MatrixD& x, std::span<const int> y, double l2,
                          LinearParams* grad)
{
    const std::size_t n = x.rows();
    const std::size_t d = x.cols();
    const std::size_t classes = p.bias.size();
    if (grad) {
        grad->weight = MatrixD(classes, d);
        grad->bias.assign(classes, 0.0);
    }
    std::vector<double> z(classes);
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto xi = x.row(i);
        for (std::size_t k = 0; k < classes; ++k) {
            const auto w = p.weight.row(k);
            double s = p.bias[k];
            for (std::size_t j = 0; j < d; ++j)
                s += w[j] * xi[j];
            z[k] = s;
        }
        const double m = *std::max_element(z.begin(), z.end());
        double total = 0.0;
        for (std::size_t k = 0; k < classes; ++k)
            total += std::exp(z[k] - m);
        const double lse = m + std::log(total);
        const auto label = static_cast<std::size_t>(y[i]);
        loss += lse - z[label];
        if (!grad)
            continue;
        for (std::size_t k = 0; k < classes; ++k) {
            const double r = (std::exp(z[k] - lse) - (k == label ? 1.0 : 0.0)) / static_cast<double>(n);
            auto gw = grad->weight.row(k);
            for (std::size_t j = 0; j < d; ++j)
                gw[j] += r * xi[j];
            grad->bias[k] += r;
        }
    }
    loss /= static_cast<double>(n);
    double penalty = 0.0;
    for (double w : p.weight.values())
        penalty += w * w;
    loss += 0.5 * l2 * penalty;
    if (grad) {
        auto& gw = grad->weight.storage();
        const auto& pw = p.weight.storage();
        for (std::size_t i = 0; i < gw.size(); ++i)
            gw[i] += l2 * pw[i];
    }
    return loss;
}

Fitted fit_logistic(const LogisticParams& params, const TrainingSet& data)
{
    const MatrixD x = to_double(data.x);
    const std::size_t classes = data.classes;
    LinearParams p{MatrixD(classes, x.cols()), std::vector<double>(classes, 0.0)};
    LinearParams g;
    LinearParams trial = p;
    double f = logistic_objective(p, x, data.y, params.l2, &g);
    std::vector<double> history{f};
    constexpr double armijo = 1e-4;
    double step = 1.0;
    for (std::size_t it = 0; it < params.max_iter; ++it) {
        if (max_abs(g) < params.grad_tol)
            break;
        const double g2 = squared_norm(g);
        // Let the step grow back after earlier shrinking.
        double t = std::min(step * 2.0, 1e6);
        bool accepted = false;
        double f_trial = 0.0;
        for (int tries = 0; tries < 80; ++tries) {
            step_into(p, g, t, trial);
            f_trial = logistic_objective(trial, x, data.y, params.l2, nullptr);
            if (std::isfinite(f_trial) && f_trial <= f - armijo * t * g2) {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted)
            break; // no representable descent step left
        step = t;
        std::swap(p, trial);
        f = logistic_objective(p, x, data.y, params.l2, &g);
        history.push_back(f);
    }
    if (!std::isfinite(f))
        throw NumericError("logistic regression diverged");
    return {std::make_shared<LinearModel>(std::move(p), true), std::move(history)};
}

Fitted fit_svm(const SvmParams& params, std::uint64_t seed, const TrainingSet& data)
{
    const MatrixD x = to_double(data.x);
    const std::size_t n = x.rows();
    const std::size_t d = x.cols();
    const std::size_t classes = data.classes;
    // Two classes train a single separator (class 1 positive); its negation
    // scores class 0.
    const std::size_t tasks = classes == 2 ? 1 : classes;
    LinearParams out{MatrixD(classes, d), std::vector<double>(classes, 0.0)};
    std::vector<std::size_t> order(n);
    for (std::size_t task = 0; task < tasks; ++task) {
        const int positive = classes == 2 ? 1 : static_cast<int>(task);
        std::vector<double> w(d, 0.0);
        double b = 0.0;
        double t = 0.0;
        Rng rng(hash64(seed, task));
        std::iota(order.begin(), order.end(), std::size_t{0});
        for (std::size_t epoch = 0; epoch < params.epochs; ++epoch) {
            rng.shuffle(std::span<std::size_t>(order));
            for (std::size_t i : order) {
                t += 1.0;
                const double eta = params.eta0 / (1.0 + params.l2 * params.eta0 * t);
                const auto xi = x.row(i);
                const double yi = data.y[i] == positive ? 1.0 : -1.0;
                double s = b;
                for (std::size_t j = 0; j < d; ++j)
                    s += w[j] * xi[j];
                const double shrink = 1.0 - eta * params.l2;
                for (auto& v : w)
                    v *= shrink;
                if (yi * s < 1.0) {
                    for (std::size_t j = 0; j < d; ++j)
                        w[j] += eta * yi * xi[j];
                    b += eta * yi;
                }
            }
        }
        for (double v : w)
            if (!std::isfinite(v))
                throw NumericError("linear SVM diverged");
        if (classes == 2) {
            for (std::size_t j = 0; j < d; ++j) {
                out.weight(1, j) = w[j];
                out.weight(0, j) = -w[j];
            }
            out.bias[1] = b;
            out.bias[0] = -b;
        } else {
            std::copy(w.begin(), w.end(), out.weight.row(task).begin());
            out.bias[task] = b;
        }
    }
    return {std::make_shared<LinearModel>(std::move(out), false), {}};
}

std::shared_ptr<const Model> load_linear(const TensorFile& in, bool probabilistic)
{
    const auto& entry = in.at("weight");
    if (entry.shape.size() != 2)
        throw IoError("corrupt linear classifier weights");
    LinearParams p{MatrixD(static_cast<std::size_t>(entry.shape[0]), static_cast<std::size_t>(entry.shape[1]),
                           in.f64("weight")),
                   in.f64("bias")};
    if (p.bias.size() != p.weight.rows())
        throw IoError("corrupt linear classifier bias");
    return std::make_shared<LinearModel>(std::move(p), probabilistic);
}

} // namespace dinoprobe::detail
