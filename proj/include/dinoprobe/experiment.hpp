#pragma once

#include "dinoprobe/classifiers.hpp"
#include "dinoprobe/embeddings.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dinoprobe {

struct SplitFractions {
    double train = 0.64;
    double val = 0.16;
    double test = 0.20;

    /// Each in [0, 1], train > 0, test > 0, sum 1 within 1e-9.
    void validate() const;
};

struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
    std::vector<std::size_t> test;
};

/// Per class, counts are the largest-remainder apportionment of the class
/// size over (train, val, test); equal remainders favour the earlier part.
/// Members are drawn by a seeded shuffle within each class. Index lists are
/// ascending. Throws DataError naming the class if it has fewer than 3
/// samples.
SplitIndices stratified_split(std::span<const int> labels, std::span<const std::string> class_names,
                              const SplitFractions& fractions, std::uint64_t seed);

/// Weighted sampling without replacement (Efraimidis-Spirakis keys), weight
/// of a sample = 1 / frequency of its class within the pool. Result is
/// ascending. Throws ConfigError when n exceeds the pool.
std::vector<std::size_t> balanced_subsample(std::span<const std::size_t> pool, std::span<const int> labels,
                                            std::size_t n, std::uint64_t seed);

/// z-scores every column with the mean / population std of `rows`; constant
/// columns are only centred.
MatrixF standardize_columns(const MatrixF& x, std::span<const std::size_t> rows);

double mean(std::span<const double> v);
/// n - 1 denominator; needs at least two values.
double sample_std(std::span<const double> v);
/// Rank correlation with average ranks for ties. Needs n >= 2 and variance
/// in both inputs.
double spearman(std::span<const double> a, std::span<const double> b);

struct ExperimentConfig {
    /// One entry per classifier kind; spec.seed is replaced per repetition.
    std::vector<ClassifierSpec> classifiers;
    SplitFractions split;
    std::size_t repetitions = 5;
    std::uint64_t master_seed = 0;
    /// Learning-curve training-set sizes, strictly ascending.
    std::vector<std::size_t> sizes;
    /// z-score features with training-split statistics.
    bool standardize = false;
    std::size_t jobs = 1;
    /// Extra key/value pairs copied into the report metadata.
    std::map<std::string, std::string> metadata;

    void validate() const;
};

/// Seed of repetition r: hash64(master, r).
std::uint64_t repetition_seed(std::uint64_t master, std::size_t r);

struct RunRecord {
    std::string classifier;
    std::size_t train_size = 0;
    std::size_t repetition = 0;
    std::uint64_t seed = 0;
    std::optional<double> val_accuracy;
    std::optional<double> test_accuracy; ///< absent when the run was excluded
    std::string error;

    bool operator==(const RunRecord&) const = default;
};

struct CellSummary {
    std::string classifier;
    std::size_t train_size = 0;
    std::size_t completed = 0;
    std::size_t excluded = 0;
    double mean = 0.0;
    std::optional<double> std; ///< absent with fewer than two completed runs
};

struct ExperimentReport {
    std::map<std::string, std::string> metadata;
    std::vector<RunRecord> runs; ///< canonical order: classifier, size, repetition

    /// One cell per (classifier, size) in run order.
    std::vector<CellSummary> summary() const;
    bool operator==(const ExperimentReport&) const = default;
};

/// Fixed split from the master seed; every classifier trained once per
/// repetition with seed repetition_seed(master, r) on the whole training
/// part, scored on validation and test. Training failures exclude the run;
/// more than 20% excluded for any classifier throws NumericError.
ExperimentReport run_repeated(const EmbeddingSet& embeddings, const ExperimentConfig& cfg);

/// As run_repeated, but per size and repetition the training part is
/// replaced by balanced_subsample(train, size, hash64(repetition seed, size)).
/// Validation and test stay whole. Sizes above the training pool throw
/// ConfigError.
ExperimentReport learning_curve(const EmbeddingSet& embeddings, const ExperimentConfig& cfg);

/// "0.941 ± 0.030" (3 decimals); just the mean when std is absent.
std::string format_cell(double mean, std::optional<double> std);

/// Table with one row per classifier and one column per training size,
/// followed by the metadata as a key/value list.
std::string report_markdown(const ExperimentReport& report);
/// "# key=value" metadata lines, then one row per run.
std::string report_csv(const ExperimentReport& report);
ExperimentReport parse_report_csv(const std::string& text);
/// Writes <stem>.md and <stem>.csv; returns their paths.
std::vector<std::filesystem::path> emit_report(const ExperimentReport& report, const std::filesystem::path& stem);

} // namespace dinoprobe
