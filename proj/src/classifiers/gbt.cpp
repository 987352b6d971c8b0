#include "model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dinoprobe::detail {

namespace {

double sigmoid(double z)
{
    if (z >= 0)
        return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

/// log(1 + exp(-s * z)) without overflow, s = +1 for positives.
double logistic_loss(double z, bool positive)
{
    const double m = positive ? -z : z;
    return m > 0 ? m + std::log1p(std::exp(-m)) : std::log1p(std::exp(m));
}

/// Per-feature sample orders, ascending by value then index.
std::vector<std::vector<std::uint32_t>> presort(const MatrixD& x)
{
    std::vector<std::vector<std::uint32_t>> order(x.cols());
    for (std::size_t f = 0; f < x.cols(); ++f) {
        auto& o = order[f];
        o.resize(x.rows());
        std::iota(o.begin(), o.end(), 0u);
        std::stable_sort(o.begin(), o.end(), [&](std::uint32_t a, std::uint32_t b) { return x(a, f) < x(b, f); });
    }
    return order;
}

struct BoostOptions {
    std::size_t max_depth;
    double l2;
    double min_child_weight;
    double shrinkage;
};

/// Level-wise exact greedy regression tree on (g, h). Splits need a strictly
/// positive gain and min_child_weight hessian on both sides. Leaves store
/// shrinkage * -G / (H + l2).
FlatTree grow_boosted_tree(const MatrixD& x, const std::vector<std::vector<std::uint32_t>>& order,
                           std::span<const double> g, std::span<const double> h, const BoostOptions& opt)
{
    const std::size_t n = x.rows();
    FlatTree tree;
    tree.width = 1;
    std::vector<std::int32_t> node_of(n, 0);
    std::vector<double> node_g{std::accumulate(g.begin(), g.end(), 0.0)};
    std::vector<double> node_h{std::accumulate(h.begin(), h.end(), 0.0)};
    auto leaf_value = [&](double gs, double hs) { return -opt.shrinkage * gs / (hs + opt.l2); };
    tree.add_leaf(std::vector<double>{leaf_value(node_g[0], node_h[0])});

    std::vector<std::size_t> level{0};
    for (std::size_t depth = 0; depth < opt.max_depth && !level.empty(); ++depth) {
        const std::size_t nodes = tree.size();
        std::vector<std::int32_t> slot(nodes, -1); // node -> index in `level`
        for (std::size_t i = 0; i < level.size(); ++i)
            slot[level[i]] = static_cast<std::int32_t>(i);

        const std::size_t m = level.size();
        std::vector<double> best_gain(m, 0.0);
        std::vector<std::int64_t> best_feature(m, -1);
        std::vector<double> best_threshold(m, 0.0);
        std::vector<double> gl(m), hl(m), last(m);
        std::vector<char> seen(m);
        for (std::size_t f = 0; f < x.cols(); ++f) {
            std::fill(gl.begin(), gl.end(), 0.0);
            std::fill(hl.begin(), hl.end(), 0.0);
            std::fill(seen.begin(), seen.end(), 0);
            for (std::uint32_t i : order[f]) {
                const auto s = slot[static_cast<std::size_t>(node_of[i])];
                if (s < 0)
                    continue;
                const auto k = static_cast<std::size_t>(s);
                const double v = x(i, f);
                if (seen[k] && v > last[k]) {
                    const auto node = level[k];
                    const double gr = node_g[node] - gl[k];
                    const double hr = node_h[node] - hl[k];
                    if (hl[k] >= opt.min_child_weight && hr >= opt.min_child_weight) {
                        const double gain = 0.5 * (gl[k] * gl[k] / (hl[k] + opt.l2) + gr * gr / (hr + opt.l2) -
                                                   node_g[node] * node_g[node] / (node_h[node] + opt.l2));
                        if (gain > best_gain[k]) {
                            best_gain[k] = gain;
                            best_feature[k] = static_cast<std::int64_t>(f);
                            best_threshold[k] = 0.5 * (last[k] + v);
                        }
                    }
                }
                gl[k] += g[i];
                hl[k] += h[i];
                last[k] = v;
                seen[k] = 1;
            }
        }

        std::vector<std::size_t> next;
        std::vector<std::int32_t> left_child(m, -1);
        for (std::size_t k = 0; k < m; ++k) {
            if (best_feature[k] < 0)
                continue;
            const auto node = level[k];
            tree.feature[node] = static_cast<std::int32_t>(best_feature[k]);
            tree.threshold[node] = best_threshold[k];
            const auto l = tree.add_leaf(std::vector<double>{0.0});
            const auto r = tree.add_leaf(std::vector<double>{0.0});
            tree.left[node] = static_cast<std::int32_t>(l);
            tree.right[node] = static_cast<std::int32_t>(r);
            node_g.resize(tree.size(), 0.0);
            node_h.resize(tree.size(), 0.0);
            left_child[k] = static_cast<std::int32_t>(l);
            next.push_back(l);
            next.push_back(r);
        }
        for (std::size_t i = 0; i < n; ++i) {
            const auto s = slot[static_cast<std::size_t>(node_of[i])];
            if (s < 0 || left_child[static_cast<std::size_t>(s)] < 0)
                continue;
            const auto node = static_cast<std::size_t>(node_of[i]);
            const bool go_left = x(i, static_cast<std::size_t>(tree.feature[node])) <= tree.threshold[node];
            node_of[i] = go_left ? tree.left[node] : tree.right[node];
            node_g[static_cast<std::size_t>(node_of[i])] += g[i];
            node_h[static_cast<std::size_t>(node_of[i])] += h[i];
        }
        for (auto node : next)
            tree.value[node] = leaf_value(node_g[node], node_h[node]);
        level = std::move(next);
    }
    return tree;
}

class GbtModel final : public Model {
public:
    GbtModel(std::vector<double> base, std::vector<FlatTree> trees, std::size_t classes)
        : base_(std::move(base)), trees_(std::move(trees)), classes_(classes)
    {
    }

    std::vector<double> scores(std::span<const float> x) const override { return proba(x); }

    bool has_proba() const override { return true; }

    std::vector<double> proba(std::span<const float> x) const override
    {
        const std::size_t tasks = base_.size();
        const std::size_t per_task = trees_.size() / tasks;
        std::vector<double> p(tasks);
        for (std::size_t t = 0; t < tasks; ++t) {
            double z = base_[t];
            for (std::size_t r = 0; r < per_task; ++r)
                z += trees_[t * per_task + r].leaf_value(x)[0];
            p[t] = sigmoid(z);
        }
        if (classes_ == 2)
            return {1.0 - p[0], p[0]};
        const double total = std::accumulate(p.begin(), p.end(), 0.0);
        for (auto& v : p)
            v /= total;
        return p;
    }

    void save(TensorFile& out) const override
    {
        out.put("gbt.base", {static_cast<std::int64_t>(base_.size())}, std::span<const double>(base_));
        save_trees(out, trees_, 1);
    }

private:
    std::vector<double> base_;
    std::vector<FlatTree> trees_; // task-major, equal count per task
    std::size_t classes_;
};

} // namespace

Fitted fit_gbt(const GbtParams& p, const TrainingSet& data)
{
    const MatrixD x = to_double(data.x);
    const std::size_t n = x.rows();
    const std::size_t tasks = data.classes == 2 ? 1 : data.classes;
    const auto order = presort(x);
    const BoostOptions opt{p.max_depth, p.l2, p.min_child_weight, p.shrinkage};

    std::vector<double> base(tasks);
    std::vector<std::vector<double>> margin(tasks, std::vector<double>(n));
    std::vector<std::vector<char>> target(tasks, std::vector<char>(n));
    for (std::size_t t = 0; t < tasks; ++t) {
        const int positive = data.classes == 2 ? 1 : static_cast<int>(t);
        double pos = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            target[t][i] = data.y[i] == positive;
            pos += target[t][i];
        }
        const double rate = std::clamp(pos / static_cast<double>(n), 1e-6, 1.0 - 1e-6);
        base[t] = std::log(rate / (1.0 - rate));
        std::fill(margin[t].begin(), margin[t].end(), base[t]);
    }
    auto total_loss = [&] {
        double loss = 0.0;
        for (std::size_t t = 0; t < tasks; ++t)
            for (std::size_t i = 0; i < n; ++i)
                loss += logistic_loss(margin[t][i], target[t][i]);
        return loss / static_cast<double>(n);
    };

    std::vector<std::vector<FlatTree>> per_task(tasks);
    std::vector<double> history{total_loss()};
    std::vector<double> g(n), h(n);
    for (std::size_t round = 0; round < p.rounds; ++round) {
        for (std::size_t t = 0; t < tasks; ++t) {
            for (std::size_t i = 0; i < n; ++i) {
                const double prob = sigmoid(margin[t][i]);
                g[i] = prob - (target[t][i] ? 1.0 : 0.0);
                h[i] = prob * (1.0 - prob);
            }
            auto tree = grow_boosted_tree(x, order, g, h, opt);
            for (std::size_t i = 0; i < n; ++i)
                margin[t][i] += tree.leaf_value(data.x.row(i))[0];
            per_task[t].push_back(std::move(tree));
        }
        history.push_back(total_loss());
        if (!std::isfinite(history.back()))
            throw NumericError("gradient boosting diverged at round " + std::to_string(round + 1));
    }
    std::vector<FlatTree> trees;
    for (auto& list : per_task)
        for (auto& t : list)
            trees.push_back(std::move(t));
    return {std::make_shared<GbtModel>(std::move(base), std::move(trees), data.classes), std::move(history)};
}

std::shared_ptr<const Model> load_gbt(const TensorFile& in, std::size_t classes)
{
    auto base = in.f64("gbt.base");
    auto trees = load_trees(in, 1);
    const std::size_t tasks = classes == 2 ? 1 : classes;
    if (base.size() != tasks || trees.empty() || trees.size() % tasks != 0)
        throw IoError("corrupt gradient boosting model");
    return std::make_shared<GbtModel>(std::move(base), std::move(trees), classes);
}

} // namespace dinoprobe::detail
