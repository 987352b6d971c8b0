#include "model.hpp"

#include "dinoprobe/text.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace dinoprobe {

namespace {

constexpr std::pair<ClassifierKind, std::string_view> kind_names[] = {
    {ClassifierKind::knn, "knn"},
    {ClassifierKind::logistic, "logistic"},
    {ClassifierKind::linear_svm, "linear-svm"},
    {ClassifierKind::random_forest, "random-forest"},
    {ClassifierKind::gbt, "gbt"},
    {ClassifierKind::mlp, "mlp"},
};

constexpr const char* format_version = "1";

void require(bool ok, const std::string& what)
{
    if (!ok)
        throw ConfigError("invalid classifier hyperparameter: " + what);
}

std::string num(double v) { return text::shortest(v); }
std::string num(std::size_t v) { return std::to_string(v); }

} // namespace

std::string_view to_string(ClassifierKind kind)
{
    for (const auto& [k, name] : kind_names)
        if (k == kind)
            return name;
    return "unknown";
}

ClassifierKind parse_classifier_kind(std::string_view text)
{
    for (const auto& [k, name] : kind_names)
        if (name == text)
            return k;
    throw ConfigError("unknown classifier kind '" + std::string(text) +
                      "' (expected knn, logistic, linear-svm, random-forest, gbt or mlp)");
}

const std::vector<ClassifierKind>& all_classifier_kinds()
{
    static const std::vector<ClassifierKind> kinds = [] {
        std::vector<ClassifierKind> out;
        for (const auto& entry : kind_names)
            out.push_back(entry.first);
        return out;
    }();
    return kinds;
}

void ClassifierSpec::validate() const
{
    switch (kind) {
    case ClassifierKind::knn:
        require(knn.k >= 1, "knn.k must be >= 1");
        break;
    case ClassifierKind::logistic:
        require(logistic.l2 >= 0 && std::isfinite(logistic.l2), "logistic.l2 must be >= 0");
        require(logistic.grad_tol > 0, "logistic.grad_tol must be > 0");
        break;
    case ClassifierKind::linear_svm:
        require(svm.l2 > 0 && std::isfinite(svm.l2), "svm.l2 must be > 0");
        require(svm.eta0 > 0 && std::isfinite(svm.eta0), "svm.eta0 must be > 0");
        require(svm.epochs >= 1, "svm.epochs must be >= 1");
        break;
    case ClassifierKind::random_forest:
        require(forest.trees >= 1, "forest.trees must be >= 1");
        require(forest.min_samples_split >= 2, "forest.min_samples_split must be >= 2");
        break;
    case ClassifierKind::gbt:
        require(gbt.rounds >= 1, "gbt.rounds must be >= 1");
        require(gbt.max_depth >= 1, "gbt.max_depth must be >= 1");
        require(gbt.shrinkage > 0 && gbt.shrinkage <= 1, "gbt.shrinkage must be in (0, 1]");
        require(gbt.l2 >= 0 && std::isfinite(gbt.l2), "gbt.l2 must be >= 0");
        require(gbt.min_child_weight >= 0, "gbt.min_child_weight must be >= 0");
        break;
    case ClassifierKind::mlp:
        require(mlp.hidden >= 1, "mlp.hidden must be >= 1");
        require(mlp.learning_rate > 0 && std::isfinite(mlp.learning_rate), "mlp.learning_rate must be > 0");
        require(mlp.momentum >= 0 && mlp.momentum < 1, "mlp.momentum must be in [0, 1)");
        require(mlp.batch_size >= 1, "mlp.batch_size must be >= 1");
        require(mlp.max_epochs >= 1, "mlp.max_epochs must be >= 1");
        require(mlp.holdout_fraction >= 0 && mlp.holdout_fraction < 1, "mlp.holdout_fraction must be in [0, 1)");
        require(mlp.l2 >= 0 && std::isfinite(mlp.l2), "mlp.l2 must be >= 0");
        require(mlp.min_delta >= 0, "mlp.min_delta must be >= 0");
        break;
    }
}

std::map<std::string, std::string> ClassifierSpec::describe() const
{
    std::map<std::string, std::string> out;
    out["seed"] = std::to_string(seed);
    switch (kind) {
    case ClassifierKind::knn:
        out["knn.k"] = num(knn.k);
        break;
    case ClassifierKind::logistic:
        out["logistic.l2"] = num(logistic.l2);
        out["logistic.max_iter"] = num(logistic.max_iter);
        out["logistic.grad_tol"] = num(logistic.grad_tol);
        break;
    case ClassifierKind::linear_svm:
        out["svm.l2"] = num(svm.l2);
        out["svm.eta0"] = num(svm.eta0);
        out["svm.epochs"] = num(svm.epochs);
        break;
    case ClassifierKind::random_forest:
        out["forest.trees"] = num(forest.trees);
        out["forest.min_samples_split"] = num(forest.min_samples_split);
        out["forest.max_features"] = num(forest.max_features);
        out["forest.max_depth"] = num(forest.max_depth);
        out["forest.bootstrap"] = forest.bootstrap ? "true" : "false";
        break;
    case ClassifierKind::gbt:
        out["gbt.rounds"] = num(gbt.rounds);
        out["gbt.max_depth"] = num(gbt.max_depth);
        out["gbt.shrinkage"] = num(gbt.shrinkage);
        out["gbt.l2"] = num(gbt.l2);
        out["gbt.min_child_weight"] = num(gbt.min_child_weight);
        break;
    case ClassifierKind::mlp:
        out["mlp.hidden"] = num(mlp.hidden);
        out["mlp.learning_rate"] = num(mlp.learning_rate);
        out["mlp.momentum"] = num(mlp.momentum);
        out["mlp.batch_size"] = num(mlp.batch_size);
        out["mlp.max_epochs"] = num(mlp.max_epochs);
        out["mlp.patience"] = num(mlp.patience);
        out["mlp.min_delta"] = num(mlp.min_delta);
        out["mlp.holdout_fraction"] = num(mlp.holdout_fraction);
        out["mlp.l2"] = num(mlp.l2);
        break;
    }
    return out;
}

TrainedClassifier::TrainedClassifier(ClassifierKind kind, std::size_t class_count, std::size_t input_dim,
                                     std::shared_ptr<const detail::Model> model, std::vector<double> loss_history)
    : kind_(kind), class_count_(class_count), input_dim_(input_dim), model_(std::move(model)),
      loss_history_(std::move(loss_history))
{
}

void TrainedClassifier::check_dim(std::span<const float> x) const
{
    if (x.size() != input_dim_)
        throw ConfigError("classifier expects " + std::to_string(input_dim_) + "-dim input, got " +
                          std::to_string(x.size()));
}

int TrainedClassifier::predict(std::span<const float> x) const
{
    check_dim(x);
    const auto s = model_->scores(x);
    return static_cast<int>(detail::argmax_lowest(s));
}

std::vector<int> TrainedClassifier::predict(const MatrixF& x) const
{
    std::vector<int> out(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i)
        out[i] = predict(x.row(i));
    return out;
}

bool TrainedClassifier::supports_proba() const { return model_->has_proba(); }

std::vector<double> TrainedClassifier::predict_proba(std::span<const float> x) const
{
    if (!model_->has_proba())
        throw ConfigError("predict_proba is not available for " + std::string(to_string(kind_)));
    check_dim(x);
    return model_->proba(x);
}

TensorFile TrainedClassifier::serialize() const
{
    TensorFile out;
    out.metadata()["format"] = "dinoprobe-classifier";
    out.metadata()["version"] = format_version;
    out.metadata()["kind"] = std::string(to_string(kind_));
    out.metadata()["class_count"] = std::to_string(class_count_);
    out.metadata()["input_dim"] = std::to_string(input_dim_);
    if (!loss_history_.empty())
        out.put("loss_history", {static_cast<std::int64_t>(loss_history_.size())},
                std::span<const double>(loss_history_));
    model_->save(out);
    return out;
}

TrainedClassifier TrainedClassifier::deserialize(const TensorFile& file)
{
    if (file.metadata().count("format") == 0 || file.meta("format") != "dinoprobe-classifier")
        throw IoError("not a serialized classifier");
    if (file.meta("version") != format_version)
        throw IoError("unsupported classifier format version " + file.meta("version"));
    const auto kind = parse_classifier_kind(file.meta("kind"));
    std::size_t classes = 0;
    std::size_t dim = 0;
    try {
        classes = static_cast<std::size_t>(text::parse_int(file.meta("class_count")));
        dim = static_cast<std::size_t>(text::parse_int(file.meta("input_dim")));
    } catch (const std::invalid_argument&) {
        throw IoError("corrupt classifier metadata");
    }
    if (file.contains("tree.feature"))
        for (auto f : file.i32("tree.feature"))
            if (f >= 0 && static_cast<std::size_t>(f) >= dim)
                throw IoError("corrupt tree feature index in classifier file");
    std::shared_ptr<const detail::Model> model;
    switch (kind) {
    case ClassifierKind::knn:
        model = detail::load_knn(file, classes);
        break;
    case ClassifierKind::logistic:
        model = detail::load_linear(file, true);
        break;
    case ClassifierKind::linear_svm:
        model = detail::load_linear(file, false);
        break;
    case ClassifierKind::random_forest:
        model = detail::load_forest(file, classes);
        break;
    case ClassifierKind::gbt:
        model = detail::load_gbt(file, classes);
        break;
    case ClassifierKind::mlp:
        model = detail::load_mlp(file);
        break;
    }
    if (model->scores(std::vector<float>(dim, 0.0f)).size() != classes)
        throw IoError("classifier file disagrees with its class_count");
    std::vector<double> history;
    if (file.contains("loss_history"))
        history = file.f64("loss_history");
    return TrainedClassifier(kind, classes, dim, std::move(model), std::move(history));
}

TrainedClassifier train(const ClassifierSpec& spec, const MatrixF& x, std::span<const int> y,
                        std::size_t class_count)
{
    spec.validate();
    if (x.rows() != y.size())
        throw ConfigError("train: " + std::to_string(x.rows()) + " rows but " + std::to_string(y.size()) +
                          " labels");
    if (x.rows() == 0 || x.cols() == 0)
        throw DataError("train: empty training set");
    int max_label = -1;
    std::set<int> distinct;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (y[i] < 0)
            throw DataError("train: negative label at row " + std::to_string(i));
        max_label = std::max(max_label, y[i]);
        distinct.insert(y[i]);
    }
    if (class_count == 0)
        class_count = static_cast<std::size_t>(max_label) + 1;
    if (static_cast<std::size_t>(max_label) >= class_count)
        throw DataError("train: label " + std::to_string(max_label) + " out of range for " +
                        std::to_string(class_count) + " classes");
    if (distinct.size() < 2)
        throw DataError("train: training labels contain a single class");
    if (x.rows() < class_count)
        throw DataError("train: " + std::to_string(x.rows()) + " samples for " + std::to_string(class_count) +
                        " classes");
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (float v : x.row(i))
            if (!std::isfinite(v))
                throw DataError("train: non-finite feature in row " + std::to_string(i));

    const detail::TrainingSet data{x, y, class_count};
    detail::Fitted fitted;
    switch (spec.kind) {
    case ClassifierKind::knn:
        fitted = detail::fit_knn(spec.knn, data);
        break;
    case ClassifierKind::logistic:
        fitted = detail::fit_logistic(spec.logistic, data);
        break;
    case ClassifierKind::linear_svm:
        fitted = detail::fit_svm(spec.svm, spec.seed, data);
        break;
    case ClassifierKind::random_forest:
        fitted = detail::fit_forest(spec.forest, spec.seed, data);
        break;
    case ClassifierKind::gbt:
        fitted = detail::fit_gbt(spec.gbt, data);
        break;
    case ClassifierKind::mlp:
        fitted = detail::fit_mlp(spec.mlp, spec.seed, data);
        break;
    }
    return TrainedClassifier(spec.kind, class_count, x.cols(), std::move(fitted.model),
                             std::move(fitted.loss_history));
}

double accuracy(const TrainedClassifier& model, const MatrixF& x, std::span<const int> y)
{
    if (x.rows() == 0)
        throw DataError("accuracy: empty test set");
    if (x.rows() != y.size())
        throw ConfigError("accuracy: " + std::to_string(x.rows()) + " rows but " + std::to_string(y.size()) +
                          " labels");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < x.rows(); ++i)
        correct += model.predict(x.row(i)) == y[i];
    return static_cast<double>(correct) / static_cast<double>(x.rows());
}

namespace detail {

std::size_t argmax_lowest(std::span<const double> v)
{
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best])
            best = i;
    return best;
}

MatrixD to_double(const MatrixF& x)
{
    MatrixD out(x.rows(), x.cols());
    std::copy(x.values().begin(), x.values().end(), out.values().begin());
    return out;
}

std::size_t FlatTree::add_leaf(std::span<const double> v)
{
    feature.push_back(-1);
    threshold.push_back(0.0);
    left.push_back(-1);
    right.push_back(-1);
    value.insert(value.end(), v.begin(), v.end());
    return feature.size() - 1;
}

std::size_t FlatTree::leaf_for(std::span<const float> x) const
{
    std::size_t node = 0;
    while (feature[node] >= 0) {
        const double v = x[static_cast<std::size_t>(feature[node])];
        node = static_cast<std::size_t>(v <= threshold[node] ? left[node] : right[node]);
    }
    return node;
}

void save_trees(TensorFile& out, std::span<const FlatTree> trees, std::size_t width)
{
    std::vector<std::int64_t> offsets{0};
    std::vector<std::int32_t> feature, left, right;
    std::vector<double> threshold, value;
    for (const auto& t : trees) {
        feature.insert(feature.end(), t.feature.begin(), t.feature.end());
        left.insert(left.end(), t.left.begin(), t.left.end());
        right.insert(right.end(), t.right.begin(), t.right.end());
        threshold.insert(threshold.end(), t.threshold.begin(), t.threshold.end());
        value.insert(value.end(), t.value.begin(), t.value.end());
        offsets.push_back(offsets.back() + static_cast<std::int64_t>(t.size()));
    }
    const auto nodes = static_cast<std::int64_t>(feature.size());
    out.put("tree.offsets", {static_cast<std::int64_t>(offsets.size())}, std::span<const std::int64_t>(offsets));
    out.put("tree.feature", {nodes}, std::span<const std::int32_t>(feature));
    out.put("tree.left", {nodes}, std::span<const std::int32_t>(left));
    out.put("tree.right", {nodes}, std::span<const std::int32_t>(right));
    out.put("tree.threshold", {nodes}, std::span<const double>(threshold));
    out.put("tree.value", {nodes, static_cast<std::int64_t>(width)}, std::span<const double>(value));
}

std::vector<FlatTree> load_trees(const TensorFile& in, std::size_t width)
{
    const auto offsets = in.i64("tree.offsets");
    const auto feature = in.i32("tree.feature");
    const auto left = in.i32("tree.left");
    const auto right = in.i32("tree.right");
    const auto threshold = in.f64("tree.threshold");
    const auto value = in.f64("tree.value");
    const std::size_t nodes = feature.size();
    if (offsets.empty() || offsets.front() != 0 || static_cast<std::size_t>(offsets.back()) != nodes ||
        left.size() != nodes || right.size() != nodes || threshold.size() != nodes ||
        value.size() != nodes * width)
        throw IoError("corrupt tree arrays in classifier file");
    std::vector<FlatTree> trees;
    for (std::size_t t = 0; t + 1 < offsets.size(); ++t) {
        const auto lo = static_cast<std::size_t>(offsets[t]);
        const auto hi = static_cast<std::size_t>(offsets[t + 1]);
        if (hi <= lo || hi > nodes)
            throw IoError("corrupt tree offsets in classifier file");
        FlatTree tree;
        tree.width = width;
        tree.feature.assign(feature.begin() + lo, feature.begin() + hi);
        tree.left.assign(left.begin() + lo, left.begin() + hi);
        tree.right.assign(right.begin() + lo, right.begin() + hi);
        tree.threshold.assign(threshold.begin() + lo, threshold.begin() + hi);
        tree.value.assign(value.begin() + lo * width, value.begin() + hi * width);
        const auto n = static_cast<std::int32_t>(hi - lo);
        for (std::size_t i = 0; i < tree.size(); ++i)
            if (tree.feature[i] >= 0 &&
                (tree.left[i] <= static_cast<std::int32_t>(i) || tree.left[i] >= n ||
                 tree.right[i] <= static_cast<std::int32_t>(i) || tree.right[i] >= n))
                throw IoError("corrupt tree links in classifier file");
        trees.push_back(std::move(tree));
    }
    return trees;
}

} // namespace detail
} // namespace dinoprobe
