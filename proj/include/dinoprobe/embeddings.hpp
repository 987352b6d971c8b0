#pragma once

#include "dinoprobe/manifest.hpp"
#include "dinoprobe/matrix.hpp"
#include "dinoprobe/vit.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace dinoprobe {

/// Per-sample feature vectors in manifest order.
struct EmbeddingSet {
    std::string model_tag;
    std::size_t dim = 0;
    std::vector<std::string> class_names;
    std::vector<std::string> sample_ids;
    std::vector<int> labels; ///< index into class_names
    MatrixF vectors;         ///< size() x dim

    std::size_t size() const { return sample_ids.size(); }
    void validate() const;
    /// Rows picked by index, keeping tags and classes.
    EmbeddingSet subset(const std::vector<std::size_t>& rows) const;
};

struct ExtractOptions {
    std::size_t jobs = 1;
    double max_failure_fraction = 0.10;
};

struct ExtractResult {
    EmbeddingSet embeddings;
    std::size_t forward_passes = 0; ///< images actually pushed through the model
    std::size_t cache_hits = 0;
    std::vector<std::string> failures; ///< "sample_id: reason"
};

/// Cache file for a (model_tag, preprocessing) pair inside `cache_dir`.
std::filesystem::path embedding_cache_path(const std::filesystem::path& cache_dir, const std::string& model_tag,
                                           const PreprocessSpec& preprocess);

/// Embeds every manifest sample. A sample whose file content hash matches the
/// cache entry is not recomputed. Unreadable samples are collected in
/// failures; more than max_failure_fraction of them aborts with DataError.
/// The cache is written only when it changed and its bytes depend only on its
/// contents.
ExtractResult extract_embeddings(const DatasetManifest& manifest, const VisionTransformer& model,
                                 const std::string& model_tag, const std::filesystem::path& cache_dir,
                                 const ExtractOptions& options = {});

/// Embedding CSV: header "sample_id,label,e0,...,e{D-1}", UTF-8, '.' decimal,
/// LF line endings, labels as class names. Values use the shortest text that
/// round-trips the float exactly.
void write_embeddings_csv(const EmbeddingSet& set, const std::filesystem::path& csv);

/// Reads an embedding CSV and validates it against the manifest (known ids,
/// matching labels, rectangular, finite). Rows come back in manifest order.
/// Errors name the offending row number.
EmbeddingSet import_embeddings(const std::filesystem::path& csv, const DatasetManifest& manifest,
                               const std::string& model_tag = {});

/// Binary form: one F32 tensor per sample id plus model_tag/class metadata.
void save_embeddings(const EmbeddingSet& set, const std::filesystem::path& path);
EmbeddingSet load_embeddings(const std::filesystem::path& path, const DatasetManifest& manifest);

} // namespace dinoprobe
