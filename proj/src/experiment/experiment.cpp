#include "dinoprobe/error.hpp"
#include "dinoprobe/experiment.hpp"
#include "dinoprobe/log.hpp"
#include "dinoprobe/parallel.hpp"
#include "dinoprobe/rng.hpp"
#include "dinoprobe/text.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace dinoprobe {

namespace {

constexpr double max_excluded_fraction = 0.20;

/// Error text safe for a CSV cell and a single markdown line.
std::string clean(std::string s)
{
    for (char& c : s)
        if (c == ',' || c == '"')
            c = ';';
        else if (c == '\n' || c == '\r')
            c = ' ';
    return s;
}

std::string join(const std::vector<std::string>& items, const char* sep = ",")
{
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i)
        out += (i ? sep : "") + items[i];
    return out;
}

MatrixF gather(const MatrixF& x, std::span<const std::size_t> rows)
{
    MatrixF out(rows.size(), x.cols());
    for (std::size_t i = 0; i < rows.size(); ++i)
        std::copy(x.row(rows[i]).begin(), x.row(rows[i]).end(), out.row(i).begin());
    return out;
}

std::vector<int> gather(std::span<const int> y, std::span<const std::size_t> rows)
{
    std::vector<int> out;
    out.reserve(rows.size());
    for (auto r : rows)
        out.push_back(y[r]);
    return out;
}

MatrixF standardized(const MatrixF& x, std::span<const std::size_t> rows)
{
    const std::size_t d = x.cols();
    std::vector<double> mu(d, 0.0), sd(d, 0.0);
    for (auto r : rows)
        for (std::size_t j = 0; j < d; ++j)
            mu[j] += x(r, j);
    for (auto& m : mu)
        m /= static_cast<double>(rows.size());
    for (auto r : rows)
        for (std::size_t j = 0; j < d; ++j)
            sd[j] += (x(r, j) - mu[j]) * (x(r, j) - mu[j]);
    for (auto& s : sd) {
        s = std::sqrt(s / static_cast<double>(rows.size()));
        if (s == 0.0)
            s = 1.0;
    }
    MatrixF out(x.rows(), d);
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < d; ++j)
            out(i, j) = static_cast<float>((x(i, j) - mu[j]) / sd[j]);
    return out;
}

ExperimentReport run_cells(const EmbeddingSet& emb, const ExperimentConfig& cfg, bool curve)
{
    cfg.validate();
    emb.validate();
    if (curve && cfg.sizes.empty())
        throw ConfigError("learning curve needs at least one training-set size");
    const auto split = stratified_split(emb.labels, emb.class_names, cfg.split, cfg.master_seed);
    const std::vector<std::size_t> sizes = curve ? cfg.sizes : std::vector<std::size_t>{split.train.size()};
    for (auto n : sizes)
        if (n > split.train.size())
            throw ConfigError("training-set size " + std::to_string(n) + " exceeds the training split (" +
                              std::to_string(split.train.size()) + " samples)");

    const MatrixF features = cfg.standardize ? standardized(emb.vectors, split.train) : emb.vectors;
    const MatrixF x_test = gather(features, split.test);
    const auto y_test = gather(emb.labels, split.test);
    const MatrixF x_val = gather(features, split.val);
    const auto y_val = gather(emb.labels, split.val);
    const std::size_t classes = emb.class_names.size();

    const std::size_t per_classifier = sizes.size() * cfg.repetitions;
    std::vector<RunRecord> runs(cfg.classifiers.size() * per_classifier);
    parallel_for(runs.size(), cfg.jobs, [&](std::size_t cell) {
        const std::size_t c = cell / per_classifier;
        const std::size_t s = (cell % per_classifier) / cfg.repetitions;
        const std::size_t r = cell % cfg.repetitions;
        RunRecord& rec = runs[cell];
        auto spec = cfg.classifiers[c];
        rec.classifier = std::string(to_string(spec.kind));
        rec.train_size = sizes[s];
        rec.repetition = r;
        rec.seed = repetition_seed(cfg.master_seed, r);
        spec.seed = rec.seed;
        try {
            const auto rows = curve ? balanced_subsample(split.train, emb.labels, sizes[s], hash64(rec.seed, sizes[s]))
                                    : split.train;
            const auto model = train(spec, gather(features, rows), gather(emb.labels, rows), classes);
            rec.test_accuracy = accuracy(model, x_test, y_test);
            if (!split.val.empty())
                rec.val_accuracy = accuracy(model, x_val, y_val);
        } catch (const ConfigError&) {
            throw;
        } catch (const Error& e) {
            rec.error = clean(e.what());
            rec.val_accuracy.reset();
            rec.test_accuracy.reset();
        }
    });

    for (std::size_t begin = 0; begin < runs.size(); begin += cfg.repetitions) {
        std::size_t excluded = 0;
        for (std::size_t i = begin; i < begin + cfg.repetitions; ++i)
            if (!runs[i].test_accuracy) {
                ++excluded;
                log::warning("excluded " + runs[i].classifier + " repetition " + std::to_string(runs[i].repetition) +
                             ": " + runs[i].error);
            }
        if (static_cast<double>(excluded) > max_excluded_fraction * static_cast<double>(cfg.repetitions))
            throw NumericError(runs[begin].classifier + " failed in " + std::to_string(excluded) + " of " +
                               std::to_string(cfg.repetitions) + " repetitions (train size " +
                               std::to_string(runs[begin].train_size) + "); first error: " + runs[begin].error);
    }

    ExperimentReport report;
    report.metadata = cfg.metadata;
    auto& m = report.metadata;
    m["version"] = DINOPROBE_VERSION;
    m["mode"] = curve ? "learning-curve" : "repeated";
    m["embeddings.model_tag"] = emb.model_tag;
    m["embeddings.dim"] = std::to_string(emb.dim);
    m["embeddings.samples"] = std::to_string(emb.size());
    m["embeddings.classes"] = join(emb.class_names);
    m["split.train"] = text::shortest(cfg.split.train);
    m["split.val"] = text::shortest(cfg.split.val);
    m["split.test"] = text::shortest(cfg.split.test);
    m["split.counts"] = std::to_string(split.train.size()) + "/" + std::to_string(split.val.size()) + "/" +
                        std::to_string(split.test.size());
    m["experiment.repetitions"] = std::to_string(cfg.repetitions);
    m["experiment.seed"] = std::to_string(cfg.master_seed);
    m["experiment.standardize"] = cfg.standardize ? "true" : "false";
    std::vector<std::string> size_text, names;
    for (auto n : sizes)
        size_text.push_back(std::to_string(n));
    m["experiment.sizes"] = join(size_text);
    for (const auto& spec : cfg.classifiers) {
        names.emplace_back(to_string(spec.kind));
        for (const auto& [k, v] : spec.describe())
            if (k != "seed")
                m[k] = v;
    }
    m["experiment.classifiers"] = join(names);
    std::vector<std::string> seeds;
    for (std::size_t r = 0; r < cfg.repetitions; ++r)
        seeds.push_back(std::to_string(repetition_seed(cfg.master_seed, r)));
    m["experiment.repetition_seeds"] = join(seeds);
    for (auto& [k, v] : m)
        for (char& ch : v)
            if (ch == '\n' || ch == '\r')
                ch = ' ';
    report.runs = std::move(runs);
    return report;
}

} // namespace

void ExperimentConfig::validate() const
{
    split.validate();
    if (classifiers.empty())
        throw ConfigError("at least one classifier is required");
    std::set<ClassifierKind> seen;
    for (const auto& spec : classifiers) {
        if (!seen.insert(spec.kind).second)
            throw ConfigError("classifier " + std::string(to_string(spec.kind)) + " listed twice");
        spec.validate();
    }
    if (repetitions < 1)
        throw ConfigError("experiment.repetitions must be >= 1");
    if (jobs < 1)
        throw ConfigError("jobs must be >= 1");
    for (std::size_t i = 0; i < sizes.size(); ++i) {
        if (sizes[i] < 1)
            throw ConfigError("training-set sizes must be positive");
        if (i > 0 && sizes[i] <= sizes[i - 1])
            throw ConfigError("training-set sizes must be strictly ascending");
    }
}

MatrixF standardize_columns(const MatrixF& x, std::span<const std::size_t> rows)
{
    if (rows.empty())
        throw ConfigError("standardization needs at least one row");
    return standardized(x, rows);
}

std::uint64_t repetition_seed(std::uint64_t master, std::size_t r) { return hash64(master, r); }

std::vector<CellSummary> ExperimentReport::summary() const
{
    std::vector<CellSummary> out;
    for (std::size_t i = 0; i < runs.size();) {
        std::size_t j = i;
        std::vector<double> acc;
        CellSummary cell{runs[i].classifier, runs[i].train_size, 0, 0, 0.0, std::nullopt};
        while (j < runs.size() && runs[j].classifier == cell.classifier && runs[j].train_size == cell.train_size) {
            if (runs[j].test_accuracy)
                acc.push_back(*runs[j].test_accuracy);
            else
                ++cell.excluded;
            ++j;
        }
        cell.completed = acc.size();
        if (!acc.empty())
            cell.mean = mean(acc);
        if (acc.size() >= 2)
            cell.std = sample_std(acc);
        out.push_back(cell);
        i = j;
    }
    return out;
}

ExperimentReport run_repeated(const EmbeddingSet& embeddings, const ExperimentConfig& cfg)
{
    return run_cells(embeddings, cfg, false);
}

ExperimentReport learning_curve(const EmbeddingSet& embeddings, const ExperimentConfig& cfg)
{
    return run_cells(embeddings, cfg, true);
}

} // namespace dinoprobe
