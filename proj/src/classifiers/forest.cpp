#include "dinoprobe/classifier_internals.hpp"
#include "dinoprobe/rng.hpp"
#include "model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dinoprobe::detail {

namespace {

struct CartOptions {
    std::size_t max_features;
    std::size_t min_samples_split;
    std::size_t max_depth; // 0 = unlimited
};

struct Split {
    std::size_t feature = 0;
    double threshold = 0.0;
    double score = -1.0; // sum over children of (sum_c n_c^2) / n_child; larger is purer
};

/// Grows one Gini CART tree over `samples` (repeats allowed, as produced by
/// bootstrapping). Candidate features are drawn per node and visited in
/// ascending index order; the first best split wins.
FlatTree grow_cart(const MatrixD& x, std::span<const int> y, std::size_t classes, std::vector<std::size_t> samples,
                   const CartOptions& opt, Rng& rng)
{
    const std::size_t d = x.cols();
    FlatTree tree;
    tree.width = classes;

    struct Pending {
        std::size_t node, begin, end, depth;
    };
    std::vector<Pending> stack;
    std::vector<double> dist(classes);
    auto distribution = [&](std::size_t begin, std::size_t end) {
        std::fill(dist.begin(), dist.end(), 0.0);
        for (std::size_t i = begin; i < end; ++i)
            dist[static_cast<std::size_t>(y[samples[i]])] += 1.0;
        return dist;
    };

    std::vector<std::size_t> feature_pool(d);
    std::iota(feature_pool.begin(), feature_pool.end(), std::size_t{0});
    std::vector<std::size_t> candidates;
    std::vector<std::pair<double, int>> column;
    std::vector<double> left_counts(classes);

    tree.add_leaf(distribution(0, samples.size()));
    stack.push_back({0, 0, samples.size(), 0});
    while (!stack.empty()) {
        const Pending job = stack.back();
        stack.pop_back();
        const std::size_t m = job.end - job.begin;
        const auto counts = distribution(job.begin, job.end);
        const auto nonzero = std::count_if(counts.begin(), counts.end(), [](double c) { return c > 0; });
        if (nonzero <= 1 || m < opt.min_samples_split || (opt.max_depth != 0 && job.depth >= opt.max_depth))
            continue;

        if (opt.max_features >= d) {
            candidates = feature_pool;
        } else {
            for (std::size_t i = 0; i < opt.max_features; ++i) {
                const auto j = i + static_cast<std::size_t>(rng.below(d - i));
                std::swap(feature_pool[i], feature_pool[j]);
            }
            candidates.assign(feature_pool.begin(), feature_pool.begin() + static_cast<std::ptrdiff_t>(opt.max_features));
            std::sort(candidates.begin(), candidates.end());
        }

        Split best;
        bool found = false;
        for (std::size_t f : candidates) {
            column.clear();
            for (std::size_t i = job.begin; i < job.end; ++i)
                column.emplace_back(x(samples[i], f), y[samples[i]]);
            std::sort(column.begin(), column.end());
            if (column.front().first == column.back().first)
                continue;
            std::fill(left_counts.begin(), left_counts.end(), 0.0);
            double left_sq = 0.0;
            double right_sq = 0.0;
            for (double c : counts)
                right_sq += c * c;
            for (std::size_t i = 0; i + 1 < m; ++i) {
                const auto c = static_cast<std::size_t>(column[i].second);
                const double lc = left_counts[c];
                const double rc = counts[c] - lc;
                left_sq += 2.0 * lc + 1.0;
                right_sq -= 2.0 * rc - 1.0;
                left_counts[c] = lc + 1.0;
                if (column[i].first == column[i + 1].first)
                    continue;
                const double nl = static_cast<double>(i + 1);
                const double score = left_sq / nl + right_sq / (static_cast<double>(m) - nl);
                if (!found || score > best.score) {
                    found = true;
                    best = {f, 0.5 * (column[i].first + column[i + 1].first), score};
                }
            }
        }
        if (!found)
            continue;

        const auto mid = std::partition(samples.begin() + static_cast<std::ptrdiff_t>(job.begin),
                                        samples.begin() + static_cast<std::ptrdiff_t>(job.end),
                                        [&](std::size_t s) { return x(s, best.feature) <= best.threshold; });
        const auto split_at = static_cast<std::size_t>(mid - samples.begin());
        const std::size_t left = tree.add_leaf(distribution(job.begin, split_at));
        const std::size_t right = tree.add_leaf(distribution(split_at, job.end));
        tree.feature[job.node] = static_cast<std::int32_t>(best.feature);
        tree.threshold[job.node] = best.threshold;
        tree.left[job.node] = static_cast<std::int32_t>(left);
        tree.right[job.node] = static_cast<std::int32_t>(right);
        // Right first so the left subtree is expanded (and numbered) first.
        stack.push_back({right, split_at, job.end, job.depth + 1});
        stack.push_back({left, job.begin, split_at, job.depth + 1});
    }

    // Leaves keep class frequencies.
    for (std::size_t node = 0; node < tree.size(); ++node) {
        auto v = std::span<double>(tree.value).subspan(node * classes, classes);
        const double total = std::accumulate(v.begin(), v.end(), 0.0);
        for (auto& c : v)
            c /= total;
    }
    return tree;
}

class ForestModel final : public Model {
public:
    ForestModel(std::vector<FlatTree> trees, std::size_t classes) : trees_(std::move(trees)), classes_(classes) {}

    std::vector<double> scores(std::span<const float> x) const override
    {
        std::vector<double> p(classes_, 0.0);
        for (const auto& t : trees_) {
            const auto leaf = t.leaf_value(x);
            for (std::size_t c = 0; c < classes_; ++c)
                p[c] += leaf[c];
        }
        for (auto& v : p)
            v /= static_cast<double>(trees_.size());
        return p;
    }

    bool has_proba() const override { return true; }

    void save(TensorFile& out) const override { save_trees(out, trees_, classes_); }

private:
    std::vector<FlatTree> trees_;
    std::size_t classes_;
};

std::size_t resolve_max_features(std::size_t requested, std::size_t d)
{
    if (requested == 0)
        return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(d)))));
    return std::min(requested, d);
}

} // namespace

Fitted fit_forest(const ForestParams& p, std::uint64_t seed, const TrainingSet& data)
{
    const MatrixD x = to_double(data.x);
    const std::size_t n = x.rows();
    const CartOptions opt{resolve_max_features(p.max_features, x.cols()), p.min_samples_split, p.max_depth};
    std::vector<FlatTree> trees;
    trees.reserve(p.trees);
    for (std::size_t t = 0; t < p.trees; ++t) {
        Rng rng(hash64(seed, t));
        std::vector<std::size_t> samples(n);
        if (p.bootstrap) {
            for (auto& s : samples)
                s = static_cast<std::size_t>(rng.below(n));
        } else {
            std::iota(samples.begin(), samples.end(), std::size_t{0});
        }
        trees.push_back(grow_cart(x, data.y, data.classes, std::move(samples), opt, rng));
    }
    return {std::make_shared<ForestModel>(std::move(trees), data.classes), {}};
}

std::vector<int> cart_predict(const MatrixF& train_x, std::span<const int> train_y, std::size_t classes,
                              std::size_t min_samples_split, const MatrixF& probe)
{
    const MatrixD x = to_double(train_x);
    std::vector<std::size_t> samples(x.rows());
    std::iota(samples.begin(), samples.end(), std::size_t{0});
    Rng unused(0);
    const auto tree =
        grow_cart(x, train_y, classes, std::move(samples), CartOptions{x.cols(), min_samples_split, 0}, unused);
    std::vector<int> out;
    for (std::size_t i = 0; i < probe.rows(); ++i)
        out.push_back(static_cast<int>(argmax_lowest(tree.leaf_value(probe.row(i)))));
    return out;
}

std::shared_ptr<const Model> load_forest(const TensorFile& in, std::size_t classes)
{
    auto trees = load_trees(in, classes);
    if (trees.empty())
        throw IoError("random forest file holds no trees");
    return std::make_shared<ForestModel>(std::move(trees), classes);
}

} // namespace dinoprobe::detail
