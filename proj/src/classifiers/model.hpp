#pragma once

#include "dinoprobe/classifiers.hpp"
#include "dinoprobe/error.hpp"
#include "dinoprobe/matrix.hpp"
#include "dinoprobe/tensor_file.hpp"

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

namespace dinoprobe::detail {

class Model {
public:
    virtual ~Model() = default;
    /// Per-class scores whose argmax is the prediction.
    virtual std::vector<double> scores(std::span<const float> x) const = 0;
    virtual bool has_proba() const { return false; }
    virtual std::vector<double> proba(std::span<const float> x) const { return scores(x); }
    virtual void save(TensorFile& out) const = 0;
};

/// Training input shared by every fit routine.
struct TrainingSet {
    const MatrixF& x;
    std::span<const int> y;
    std::size_t classes;
};

struct Fitted {
    std::shared_ptr<const Model> model;
    std::vector<double> loss_history;
};

std::size_t argmax_lowest(std::span<const double> v);

/// Binary decision tree stored as flat arrays. feature < 0 marks a leaf;
/// `value` holds `width` doubles per node (class distribution or a scalar).
struct FlatTree {
    std::vector<std::int32_t> feature;
    std::vector<double> threshold;
    std::vector<std::int32_t> left;
    std::vector<std::int32_t> right;
    std::vector<double> value;
    std::size_t width = 1;

    std::size_t size() const { return feature.size(); }
    std::size_t add_leaf(std::span<const double> v);
    std::size_t leaf_for(std::span<const float> x) const;
    std::span<const double> leaf_value(std::span<const float> x) const
    {
        return std::span<const double>(value).subspan(leaf_for(x) * width, width);
    }
};

/// Concatenates trees into "<prefix>offsets", "<prefix>feature", ... tensors.
void save_trees(TensorFile& out, std::span<const FlatTree> trees, std::size_t width);
std::vector<FlatTree> load_trees(const TensorFile& in, std::size_t width);

Fitted fit_knn(const KnnParams& p, const TrainingSet& data);
Fitted fit_logistic(const LogisticParams& p, const TrainingSet& data);
Fitted fit_svm(const SvmParams& p, std::uint64_t seed, const TrainingSet& data);
Fitted fit_forest(const ForestParams& p, std::uint64_t seed, const TrainingSet& data);
Fitted fit_gbt(const GbtParams& p, const TrainingSet& data);
Fitted fit_mlp(const MlpParams& p, std::uint64_t seed, const TrainingSet& data);

std::shared_ptr<const Model> load_knn(const TensorFile& in, std::size_t classes);
std::shared_ptr<const Model> load_linear(const TensorFile& in, bool probabilistic);
std::shared_ptr<const Model> load_forest(const TensorFile& in, std::size_t classes);
std::shared_ptr<const Model> load_gbt(const TensorFile& in, std::size_t classes);
std::shared_ptr<const Model> load_mlp(const TensorFile& in);

MatrixD to_double(const MatrixF& x);

} // namespace dinoprobe::detail
