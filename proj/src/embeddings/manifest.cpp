#include "dinoprobe/manifest.hpp"

#include "dinoprobe/error.hpp"
#include "dinoprobe/log.hpp"
#include "dinoprobe/tensor_file.hpp"
#include "dinoprobe/text.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <set>
#include <sstream>

namespace dinoprobe {

namespace fs = std::filesystem;

namespace {

bool is_image_file(const fs::path& p)
{
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

std::vector<std::string> order_classes(std::vector<std::string> found, const std::vector<std::string>& class_order)
{
    std::sort(found.begin(), found.end());
    if (class_order.empty())
        return found;
    const std::set<std::string> have(found.begin(), found.end());
    const std::set<std::string> want(class_order.begin(), class_order.end());
    if (want.size() != class_order.size())
        throw ConfigError("class order lists a class twice");
    if (have != want) {
        std::string msg = "class order does not match the dataset classes (dataset has:";
        for (const auto& c : found)
            msg += " " + c;
        throw ConfigError(msg + ")");
    }
    return class_order;
}

void sort_entries(DatasetManifest& m)
{
    std::map<std::string, std::size_t> rank;
    for (std::size_t i = 0; i < m.class_names.size(); ++i)
        rank[m.class_names[i]] = i;
    std::sort(m.entries.begin(), m.entries.end(), [&](const ManifestEntry& a, const ManifestEntry& b) {
        const auto ra = rank.at(a.label), rb = rank.at(b.label);
        return ra != rb ? ra < rb : a.sample_id < b.sample_id;
    });
}

} // namespace

void DatasetManifest::validate() const
{
    if (class_names.size() < 2)
        throw DataError("a dataset needs at least two classes, found " + std::to_string(class_names.size()));
    const std::set<std::string> classes(class_names.begin(), class_names.end());
    if (classes.size() != class_names.size())
        throw DataError("duplicate class name in manifest");
    std::set<std::string> ids;
    for (const auto& e : entries) {
        if (!ids.insert(e.sample_id).second)
            throw DataError("duplicate sample id '" + e.sample_id + "'");
        if (!classes.contains(e.label))
            throw DataError("sample '" + e.sample_id + "' has unknown label '" + e.label + "'");
    }
    preprocess.validate();
}

std::size_t DatasetManifest::label_index(const std::string& label) const
{
    const auto it = std::find(class_names.begin(), class_names.end(), label);
    if (it == class_names.end())
        throw DataError("unknown label '" + label + "'");
    return static_cast<std::size_t>(it - class_names.begin());
}

std::vector<int> DatasetManifest::label_indices() const
{
    std::vector<int> out;
    out.reserve(entries.size());
    for (const auto& e : entries)
        out.push_back(static_cast<int>(label_index(e.label)));
    return out;
}

std::optional<std::size_t> DatasetManifest::find(const std::string& sample_id) const
{
    for (std::size_t i = 0; i < entries.size(); ++i)
        if (entries[i].sample_id == sample_id)
            return i;
    return std::nullopt;
}

DatasetManifest build_manifest(const fs::path& root, const PreprocessSpec& preprocess,
                               const std::vector<std::string>& class_order)
{
    if (!fs::is_directory(root))
        throw IoError("dataset root is not a directory: " + root.string());
    DatasetManifest m;
    m.preprocess = preprocess;
    std::vector<std::string> found;
    for (const auto& dir : fs::directory_iterator(root)) {
        if (!dir.is_directory())
            continue;
        const std::string cls = dir.path().filename().string();
        std::vector<ManifestEntry> files;
        for (const auto& f : fs::directory_iterator(dir.path()))
            if (f.is_regular_file() && is_image_file(f.path()))
                files.push_back({cls + "/" + f.path().filename().string(), f.path(), cls});
        if (files.empty()) {
            log::warning("class directory '" + cls + "' contains no images; skipped");
            continue;
        }
        found.push_back(cls);
        m.entries.insert(m.entries.end(), files.begin(), files.end());
    }
    if (m.entries.empty())
        throw DataError("no usable images under " + root.string());
    m.class_names = order_classes(found, class_order);
    sort_entries(m);
    m.validate();
    return m;
}

DatasetManifest read_manifest_csv(const fs::path& csv, const PreprocessSpec& preprocess,
                                  const std::vector<std::string>& class_order)
{
    const auto rows = text::lines(text::read_text(csv.string()));
    if (rows.empty() || text::trim(rows[0]) != "sample_id,path,label")
        throw DataError(csv.string() + ": expected header 'sample_id,path,label'");
    DatasetManifest m;
    m.preprocess = preprocess;
    std::set<std::string> labels;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        if (text::trim(rows[r]).empty())
            continue;
        const auto cells = text::split(rows[r]);
        if (cells.size() != 3)
            throw DataError(csv.string() + ": row " + std::to_string(r + 1) + " has " + std::to_string(cells.size()) +
                            " fields, expected 3");
        fs::path path = cells[1];
        if (path.is_relative())
            path = csv.parent_path() / path;
        m.entries.push_back({cells[0], path, cells[2]});
        labels.insert(cells[2]);
    }
    m.class_names = order_classes({labels.begin(), labels.end()}, class_order);
    sort_entries(m);
    m.validate();
    return m;
}

void write_manifest_csv(const DatasetManifest& manifest, const fs::path& csv)
{
    std::ostringstream os;
    os << "sample_id,path,label\n";
    for (const auto& e : manifest.entries) {
        text::require_csv_safe(e.sample_id);
        text::require_csv_safe(e.path.string());
        text::require_csv_safe(e.label);
        os << e.sample_id << ',' << e.path.string() << ',' << e.label << '\n';
    }
    write_file_text(csv, os.str());
}

} // namespace dinoprobe
