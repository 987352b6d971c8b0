#pragma once

#include "dinoprobe/image.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace dinoprobe {

struct ManifestEntry {
    std::string sample_id;
    std::filesystem::path path;
    std::string label;

    bool operator==(const ManifestEntry&) const = default;
};

/// Labeled sample registry. Entries are ordered by class (in class_names
/// order), then by file name.
struct DatasetManifest {
    std::vector<ManifestEntry> entries;
    std::vector<std::string> class_names;
    PreprocessSpec preprocess;

    /// Unique ids, known labels, at least two classes. Throws DataError.
    void validate() const;
    std::size_t label_index(const std::string& label) const;
    std::vector<int> label_indices() const;
    std::optional<std::size_t> find(const std::string& sample_id) const;
};

/// One subdirectory per class under `root`; files with a .png/.jpg/.jpeg
/// extension (any case) are samples with id "<class>/<file name>". Classes
/// are sorted lexicographically unless `class_order` lists them explicitly.
/// Empty class directories are skipped with a warning.
DatasetManifest build_manifest(const std::filesystem::path& root, const PreprocessSpec& preprocess = {},
                               const std::vector<std::string>& class_order = {});

/// Manifest CSV: header "sample_id,path,label", one row per sample, relative
/// paths resolved against the CSV's directory.
DatasetManifest read_manifest_csv(const std::filesystem::path& csv, const PreprocessSpec& preprocess = {},
                                  const std::vector<std::string>& class_order = {});
void write_manifest_csv(const DatasetManifest& manifest, const std::filesystem::path& csv);

} // namespace dinoprobe
