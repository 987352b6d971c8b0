#pragma once

#include "dinoprobe/matrix.hpp"
#include "dinoprobe/tensor_file.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dinoprobe {

enum class ClassifierKind { knn, logistic, linear_svm, random_forest, gbt, mlp };

std::string_view to_string(ClassifierKind kind);
/// "knn", "logistic", "linear-svm", "random-forest", "gbt", "mlp".
ClassifierKind parse_classifier_kind(std::string_view text);
const std::vector<ClassifierKind>& all_classifier_kinds();

struct KnnParams {
    std::size_t k = 5;
};

/// Multinomial softmax regression, L2 on weights (not biases), full-batch
/// gradient descent with Armijo backtracking.
struct LogisticParams {
    double l2 = 1e-4;
    std::size_t max_iter = 2000;
    double grad_tol = 1e-5; ///< stop when the gradient's max-norm drops below
};

/// One-vs-rest hinge loss + L2, epoch-shuffled subgradient descent with
/// step eta0 / (1 + l2 * eta0 * t).
struct SvmParams {
    double l2 = 1e-4;
    double eta0 = 0.01;
    std::size_t epochs = 100;
};

/// Bagged CART trees with Gini impurity.
struct ForestParams {
    std::size_t trees = 100;
    std::size_t min_samples_split = 2;
    std::size_t max_features = 0; ///< 0 = round(sqrt(d))
    std::size_t max_depth = 0;    ///< 0 = unlimited
    bool bootstrap = true;
};

/// Second-order gradient boosting on the logistic loss (one-vs-rest when
/// there are more than two classes). Leaf value -G / (H + l2).
struct GbtParams {
    std::size_t rounds = 200;
    std::size_t max_depth = 3;
    double shrinkage = 0.1;
    double l2 = 1.0;
    double min_child_weight = 1.0;
};

/// One hidden ReLU layer, softmax cross-entropy, mini-batch SGD with
/// momentum, early stopping on a held-out slice of the training data.
struct MlpParams {
    std::size_t hidden = 256;
    double learning_rate = 0.01;
    double momentum = 0.9;
    std::size_t batch_size = 32;
    std::size_t max_epochs = 200;
    std::size_t patience = 30;
    double min_delta = 1e-4; ///< holdout loss must drop by more than this to reset patience
    double holdout_fraction = 0.1;
    double l2 = 1e-4;
};

struct ClassifierSpec {
    ClassifierKind kind = ClassifierKind::logistic;
    std::uint64_t seed = 0;
    KnnParams knn;
    LogisticParams logistic;
    SvmParams svm;
    ForestParams forest;
    GbtParams gbt;
    MlpParams mlp;

    /// Throws ConfigError on out-of-range hyperparameters for `kind`.
    void validate() const;
    /// Hyperparameters of the active kind as "group.name" -> value text.
    std::map<std::string, std::string> describe() const;
};

namespace detail {
class Model;
}

/// A fitted model. Immutable; copies share state and concurrent predict
/// calls are safe.
class TrainedClassifier {
public:
    TrainedClassifier(ClassifierKind kind, std::size_t class_count, std::size_t input_dim,
                      std::shared_ptr<const detail::Model> model, std::vector<double> loss_history = {});

    ClassifierKind kind() const { return kind_; }
    std::size_t class_count() const { return class_count_; }
    std::size_t input_dim() const { return input_dim_; }

    /// Label index; ties resolve to the lowest index.
    int predict(std::span<const float> x) const;
    std::vector<int> predict(const MatrixF& x) const;
    /// Class probabilities (logistic, mlp, gbt, random-forest). Other kinds
    /// throw ConfigError.
    std::vector<double> predict_proba(std::span<const float> x) const;
    bool supports_proba() const;

    /// Training objective per iteration/round where the kind records it
    /// (logistic: per iteration, gbt: per round incl. the initial score,
    /// mlp: holdout loss per epoch).
    const std::vector<double>& loss_history() const { return loss_history_; }

    /// Versioned container: tensors per kind, tree models as flat node arrays.
    TensorFile serialize() const;
    static TrainedClassifier deserialize(const TensorFile& file);

private:
    void check_dim(std::span<const float> x) const;

    ClassifierKind kind_;
    std::size_t class_count_;
    std::size_t input_dim_;
    std::shared_ptr<const detail::Model> model_;
    std::vector<double> loss_history_;
};

/// Fits spec.kind on rows of x with labels y in [0, class_count).
/// class_count == 0 means max(y) + 1. Deterministic given (spec, x, y).
/// Throws DataError for fewer than two distinct labels, n < class_count,
/// labels out of range or non-finite features.
TrainedClassifier train(const ClassifierSpec& spec, const MatrixF& x, std::span<const int> y,
                        std::size_t class_count = 0);

/// Fraction of rows whose prediction equals the label. Requires a
/// non-empty test set.
double accuracy(const TrainedClassifier& model, const MatrixF& x, std::span<const int> y);

} // namespace dinoprobe
