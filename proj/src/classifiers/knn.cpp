#include "model.hpp"

#include <algorithm>
#include <numeric>

namespace dinoprobe::detail {

namespace {

class KnnModel final : public Model {
public:
    KnnModel(MatrixF x, std::vector<std::int32_t> y, std::size_t classes, std::size_t k)
        : x_(std::move(x)), y_(std::move(y)), classes_(classes), k_(std::min(k, x_.rows()))
    {
    }

    std::vector<double> scores(std::span<const float> q) const override
    {
        const std::size_t n = x_.rows();
        std::vector<std::pair<double, std::size_t>> dist(n);
        for (std::size_t i = 0; i < n; ++i) {
            const auto r = x_.row(i);
            double s = 0.0;
            for (std::size_t j = 0; j < r.size(); ++j) {
                const double d = static_cast<double>(q[j]) - static_cast<double>(r[j]);
                s += d * d;
            }
            dist[i] = {s, i};
        }
        // Pair ordering breaks distance ties by training-set position.
        std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k_), dist.end());
        std::vector<double> votes(classes_, 0.0);
        for (std::size_t i = 0; i < k_; ++i)
            votes[static_cast<std::size_t>(y_[dist[i].second])] += 1.0;
        return votes;
    }

    void save(TensorFile& out) const override
    {
        out.metadata()["knn.k"] = std::to_string(k_);
        out.put("x", {static_cast<std::int64_t>(x_.rows()), static_cast<std::int64_t>(x_.cols())}, x_.values());
        out.put("y", {static_cast<std::int64_t>(y_.size())}, std::span<const std::int32_t>(y_));
    }

private:
    MatrixF x_;
    std::vector<std::int32_t> y_;
    std::size_t classes_;
    std::size_t k_;
};

} // namespace

Fitted fit_knn(const KnnParams& p, const TrainingSet& data)
{
    std::vector<std::int32_t> y(data.y.begin(), data.y.end());
    return {std::make_shared<KnnModel>(data.x, std::move(y), data.classes, p.k), {}};
}

std::shared_ptr<const Model> load_knn(const TensorFile& in, std::size_t classes)
{
    const auto& entry = in.at("x");
    if (entry.shape.size() != 2)
        throw IoError("corrupt knn training matrix");
    const auto rows = static_cast<std::size_t>(entry.shape[0]);
    const auto cols = static_cast<std::size_t>(entry.shape[1]);
    auto y = in.i32("y");
    if (y.size() != rows)
        throw IoError("corrupt knn labels");
    for (auto label : y)
        if (label < 0 || static_cast<std::size_t>(label) >= classes)
            throw IoError("corrupt knn labels");
    std::size_t k = 0;
    try {
        k = static_cast<std::size_t>(std::stoull(in.meta("knn.k")));
    } catch (const std::logic_error&) {
        throw IoError("corrupt knn metadata");
    }
    return std::make_shared<KnnModel>(MatrixF(rows, cols, in.f32("x")), std::move(y), classes, k);
}

} // namespace dinoprobe::detail
