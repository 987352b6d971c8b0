#include "dinoprobe/config.hpp"

#include "dinoprobe/error.hpp"
#include "dinoprobe/text.hpp"

namespace dinoprobe {

namespace {

std::string num(double v) { return text::shortest(v); }
std::string num(std::size_t v) { return std::to_string(v); }
std::string flag(bool v) { return v ? "true" : "false"; }

std::string triple(const std::array<float, 3>& v)
{
    return text::shortest(v[0]) + "," + text::shortest(v[1]) + "," + text::shortest(v[2]);
}

} // namespace

std::vector<KeySpec> settings_schema()
{
    // Defaults come from the default-constructed structs so they cannot drift.
    const ClassifierSpec c;
    const ExperimentConfig e;
    const PreprocessSpec p;
    const ExtractOptions x;
    std::string all_kinds;
    for (auto kind : all_classifier_kinds())
        all_kinds += (all_kinds.empty() ? "" : ",") + std::string(to_string(kind));
    using V = ValueType;
    return {
        {"dataset.root", V::text, "", "image folder with one sub-folder per class"},
        {"dataset.manifest", V::text, "", "manifest CSV (sample_id,path,label); replaces dataset.root"},
        {"dataset.class_order", V::list, "", "class names in label order (default: sorted)"},
        {"model.weights", V::text, "", "converted ViT weight container"},
        {"model.tag", V::text, "vit-s16", "name of the embedding source, part of the cache key"},
        {"embeddings.cache_dir", V::text, "cache", "embedding cache directory"},
        {"embeddings.import", V::text, "", "embedding CSV produced elsewhere; replaces extraction"},
        {"embeddings.max_failure_fraction", V::number, num(x.max_failure_fraction),
         "abort extraction above this share of unreadable images"},
        {"preprocess.side", V::integer, num(p.target_side), "model input side in pixels"},
        {"preprocess.mode", V::text, std::string(to_string(p.mode)), "resize-bilinear or fit-width-pad-height"},
        {"preprocess.mean", V::list, triple(p.mean), "per-channel normalization mean"},
        {"preprocess.std", V::list, triple(p.std), "per-channel normalization std"},
        {"split.train", V::number, num(e.split.train), "training fraction"},
        {"split.val", V::number, num(e.split.val), "validation fraction"},
        {"split.test", V::number, num(e.split.test), "test fraction"},
        {"experiment.classifiers", V::list, all_kinds, "classifiers to evaluate"},
        {"experiment.repetitions", V::integer, num(e.repetitions), "repetitions per classifier"},
        {"experiment.seed", V::integer, std::to_string(e.master_seed), "master seed"},
        {"experiment.standardize", V::boolean, flag(e.standardize), "z-score features with training statistics"},
        {"experiment.sizes", V::list, "", "learning-curve training-set sizes, ascending"},
        {"classifier.kind", V::text, std::string(to_string(c.kind)), "classifier used by train"},
        {"classifier.seed", V::integer, std::to_string(c.seed), "seed used by train"},
        {"classifier.model", V::text, "", "trained classifier file read by evaluate"},
        {"knn.k", V::integer, num(c.knn.k), "neighbours"},
        {"logistic.l2", V::number, num(c.logistic.l2), "L2 penalty"},
        {"logistic.max_iter", V::integer, num(c.logistic.max_iter), "gradient descent iterations"},
        {"logistic.grad_tol", V::number, num(c.logistic.grad_tol), "stop when the gradient max-norm is below"},
        {"svm.l2", V::number, num(c.svm.l2), "L2 penalty"},
        {"svm.eta0", V::number, num(c.svm.eta0), "initial step size"},
        {"svm.epochs", V::integer, num(c.svm.epochs), "passes over the training data"},
        {"forest.trees", V::integer, num(c.forest.trees), "number of trees"},
        {"forest.min_samples_split", V::integer, num(c.forest.min_samples_split), "smallest node that is split"},
        {"forest.max_features", V::integer, num(c.forest.max_features), "features per split (0: sqrt of dim)"},
        {"forest.max_depth", V::integer, num(c.forest.max_depth), "depth limit (0: none)"},
        {"forest.bootstrap", V::boolean, flag(c.forest.bootstrap), "bootstrap sample per tree"},
        {"gbt.rounds", V::integer, num(c.gbt.rounds), "boosting rounds"},
        {"gbt.max_depth", V::integer, num(c.gbt.max_depth), "tree depth"},
        {"gbt.shrinkage", V::number, num(c.gbt.shrinkage), "learning rate"},
        {"gbt.l2", V::number, num(c.gbt.l2), "leaf L2 penalty"},
        {"gbt.min_child_weight", V::number, num(c.gbt.min_child_weight), "minimum hessian per child"},
        {"mlp.hidden", V::integer, num(c.mlp.hidden), "hidden units"},
        {"mlp.learning_rate", V::number, num(c.mlp.learning_rate), "SGD step"},
        {"mlp.momentum", V::number, num(c.mlp.momentum), "momentum"},
        {"mlp.batch_size", V::integer, num(c.mlp.batch_size), "mini-batch size"},
        {"mlp.max_epochs", V::integer, num(c.mlp.max_epochs), "epoch limit"},
        {"mlp.patience", V::integer, num(c.mlp.patience), "epochs without holdout improvement before stopping"},
        {"mlp.min_delta", V::number, num(c.mlp.min_delta), "holdout loss drop that counts as improvement"},
        {"mlp.holdout_fraction", V::number, num(c.mlp.holdout_fraction), "share of training data held out"},
        {"mlp.l2", V::number, num(c.mlp.l2), "L2 penalty"},
        {"pca.components", V::integer, "2", "principal components to keep"},
        {"pca.bins", V::integer, "30", "histogram bins for the 1-D density view"},
        {"output.tag", V::text, "run", "suffix of the run directory name"},
        {"output.runs_dir", V::text, "runs", "parent of run directories"},
    };
}

ClassifierSpec classifier_spec(const Settings& s, ClassifierKind kind)
{
    ClassifierSpec c;
    c.kind = kind;
    c.seed = static_cast<std::uint64_t>(s.integer("classifier.seed"));
    c.knn.k = s.count("knn.k");
    c.logistic.l2 = s.number("logistic.l2");
    c.logistic.max_iter = s.count("logistic.max_iter");
    c.logistic.grad_tol = s.number("logistic.grad_tol");
    c.svm.l2 = s.number("svm.l2");
    c.svm.eta0 = s.number("svm.eta0");
    c.svm.epochs = s.count("svm.epochs");
    c.forest.trees = s.count("forest.trees");
    c.forest.min_samples_split = s.count("forest.min_samples_split");
    c.forest.max_features = s.count("forest.max_features");
    c.forest.max_depth = s.count("forest.max_depth");
    c.forest.bootstrap = s.boolean("forest.bootstrap");
    c.gbt.rounds = s.count("gbt.rounds");
    c.gbt.max_depth = s.count("gbt.max_depth");
    c.gbt.shrinkage = s.number("gbt.shrinkage");
    c.gbt.l2 = s.number("gbt.l2");
    c.gbt.min_child_weight = s.number("gbt.min_child_weight");
    c.mlp.hidden = s.count("mlp.hidden");
    c.mlp.learning_rate = s.number("mlp.learning_rate");
    c.mlp.momentum = s.number("mlp.momentum");
    c.mlp.batch_size = s.count("mlp.batch_size");
    c.mlp.max_epochs = s.count("mlp.max_epochs");
    c.mlp.patience = s.count("mlp.patience");
    c.mlp.min_delta = s.number("mlp.min_delta");
    c.mlp.holdout_fraction = s.number("mlp.holdout_fraction");
    c.mlp.l2 = s.number("mlp.l2");
    c.validate();
    return c;
}

ExperimentConfig experiment_config(const Settings& s)
{
    ExperimentConfig cfg;
    for (const auto& name : s.list("experiment.classifiers"))
        cfg.classifiers.push_back(classifier_spec(s, parse_classifier_kind(name)));
    cfg.split = {s.number("split.train"), s.number("split.val"), s.number("split.test")};
    cfg.repetitions = s.count("experiment.repetitions");
    const auto seed = s.integer("experiment.seed");
    if (seed < 0)
        throw ConfigError("experiment.seed must not be negative");
    cfg.master_seed = static_cast<std::uint64_t>(seed);
    cfg.standardize = s.boolean("experiment.standardize");
    for (const auto& item : s.list("experiment.sizes")) {
        long long n = 0;
        try {
            n = text::parse_int(item);
        } catch (const std::invalid_argument&) {
            throw ConfigError("experiment.sizes: '" + item + "' is not an integer");
        }
        if (n <= 0)
            throw ConfigError("experiment.sizes: sizes must be positive");
        cfg.sizes.push_back(static_cast<std::size_t>(n));
    }
    for (const auto& [k, v] : s.effective())
        cfg.metadata["setting." + k] = v;
    cfg.validate();
    return cfg;
}

PreprocessSpec preprocess_spec(const Settings& s)
{
    PreprocessSpec p;
    p.target_side = s.count("preprocess.side");
    p.mode = parse_resize_mode(s.raw("preprocess.mode"));
    for (const auto* key : {"preprocess.mean", "preprocess.std"}) {
        const auto items = s.list(key);
        if (items.size() != 3)
            throw ConfigError(std::string(key) + " needs three values");
        auto& target = std::string_view(key) == "preprocess.mean" ? p.mean : p.std;
        for (std::size_t i = 0; i < 3; ++i) {
            try {
                target[i] = text::parse_float(items[i]);
            } catch (const std::invalid_argument&) {
                throw ConfigError(std::string(key) + ": '" + items[i] + "' is not a number");
            }
        }
    }
    p.validate();
    return p;
}

} // namespace dinoprobe
